//! Closed-form rate model: singles, true and accidental coincidences, error
//! rates and the asymptotic secure key rate for one operating point.
//!
//! Model summary (all rates per second):
//!
//! * detected pair rate `R = brightness * pump`, pair creation rate
//!   `N = R / (h_sat * h_fib)`;
//! * singles `S = N * h * eta + dark`, with `eta` the arm's channel
//!   transmission, then a non-paralyzable dead-time correction per detector
//!   (each of the four detectors sees a quarter of the party's rate);
//! * true coincidences `R * eta_sat * eta_fib * window_efficiency`, scaled by
//!   the dead-time survival of both arms;
//! * accidentals `S_sat * S_fib * t_cc` from the measured singles;
//! * accidentals carry 50 % error in either basis.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, Error, Result};
use crate::params::{LinkParams, DETECTORS_PER_PARTY};
use crate::state::binary_entropy_unchecked;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub singles_sat: f64,
    pub singles_fib: f64,
    pub cc_true: f64,
    pub cc_accidental: f64,
    pub cc_total: f64,
    pub qber: f64,
    pub qx: f64,
    pub skr: f64,
}

impl RateEstimate {
    /// 1 - h(qber) - h(qx), before clamping at zero.
    pub fn key_fraction(&self) -> f64 {
        key_fraction(self.qber, self.qx)
    }
}

/// 2x2 coincidence table indexed [bit_sat][bit_fib]; bit 0 is H (or D).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTable(pub [[u64; 2]; 2]);

impl CountTable {
    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn correlated(&self) -> u64 {
        self.0[0][0] + self.0[1][1]
    }

    pub fn add(&mut self, bit_sat: usize, bit_fib: usize) {
        self.0[bit_sat][bit_fib] += 1;
    }
}

/// Fraction of anti-correlated outcomes, 1 - (HH + VV) / total. The
/// anti-correlated count is formed in integers first so that the result is
/// the correctly rounded ratio.
pub fn qber_from_counts(counts: &CountTable) -> Result<f64> {
    let total = counts.total();
    if total == 0 {
        return Err(Error::InsufficientStatistics(
            "empty coincidence table".into(),
        ));
    }
    Ok((total - counts.correlated()) as f64 / total as f64)
}

pub fn key_fraction(qber: f64, qx: f64) -> f64 {
    1.0 - binary_entropy_unchecked(qber.clamp(0.0, 0.5))
        - binary_entropy_unchecked(qx.clamp(0.0, 0.5))
}

/// Asymptotic BBM92 key rate, CC/2 * (1 - h(QBER) - h(Qx)), clamped at zero.
///
/// `cc_rate` is the total coincidence rate before sifting; the factor 1/2 is
/// the passive basis-sifting loss. Error rates are clamped to [0, 0.5] first.
pub fn skr_from_counts(cc_rate: f64, qber: f64, qx: f64) -> Result<f64> {
    check_non_negative("cc_rate", cc_rate)?;
    for (field, value) in [("qber", qber), ("qx", qx)] {
        if !value.is_finite() || !(0.0..=1.0).contains(&value) {
            return Err(Error::invalid(field, format!("must lie in [0, 1], got {value}")));
        }
    }
    Ok((cc_rate / 2.0 * key_fraction(qber, qx)).max(0.0))
}

/// Fraction of a Gaussian coincidence peak (standard deviation `sigma_total`)
/// that falls inside a window of full width `tcc`.
pub fn window_efficiency(tcc: f64, sigma_total: f64) -> f64 {
    if tcc <= 0.0 {
        return 0.0;
    }
    if sigma_total <= 0.0 {
        return 1.0;
    }
    libm::erf(tcc / (2.0 * std::f64::consts::SQRT_2 * sigma_total))
}

/// Total temporal broadening accumulated in the fiber, in seconds.
pub fn dispersion_sigma(fiber_length_km: f64, dispersion_ps_per_km: f64) -> f64 {
    fiber_length_km * dispersion_ps_per_km / 1e12
}

/// Standard deviation of a uniform spread as wide as the dispersion broadening.
pub fn dispersion_gaussian_sigma(fiber_length_km: f64, dispersion_ps_per_km: f64) -> f64 {
    dispersion_sigma(fiber_length_km, dispersion_ps_per_km) / 12f64.sqrt()
}

/// Width of the coincidence peak: detector, dispersion and tagger jitter in quadrature.
pub fn total_jitter_sigma(link: &LinkParams, dispersion_on: bool) -> f64 {
    let disp = if dispersion_on {
        dispersion_gaussian_sigma(link.channel.fiber_length_km, link.channel.dispersion_ps_per_km)
    } else {
        0.0
    };
    (link.det_sat.jitter_sigma_s.powi(2)
        + link.det_fib.jitter_sigma_s.powi(2)
        + disp.powi(2)
        + link.tagger_jitter_s.powi(2))
    .sqrt()
}

/// Non-paralyzable survival fraction for a party whose four detectors share
/// `rate` evenly.
fn dead_time_survival(rate: f64, dead_time: f64) -> f64 {
    1.0 / (1.0 + rate / DETECTORS_PER_PARTY as f64 * dead_time)
}

pub fn estimate(link: &LinkParams) -> Result<RateEstimate> {
    link.validate()?;
    Ok(estimate_unchecked(link, true))
}

fn estimate_unchecked(link: &LinkParams, dispersion_on: bool) -> RateEstimate {
    let src = &link.source;
    let ch = &link.channel;
    let eta_sat = ch.freespace_transmission();
    let eta_fib = ch.fiber_transmission();

    let detected = src.detected_pair_rate();
    let raw_sat = detected / src.heralding_fib * eta_sat + link.det_sat.dark_rate_hz;
    let raw_fib = detected / src.heralding_sat * eta_fib + link.det_fib.dark_rate_hz;
    let surv_sat = dead_time_survival(raw_sat, link.det_sat.dead_time_s);
    let surv_fib = dead_time_survival(raw_fib, link.det_fib.dead_time_s);
    let singles_sat = raw_sat * surv_sat;
    let singles_fib = raw_fib * surv_fib;

    let tcc = ch.coincidence_window_s;
    let sigma = total_jitter_sigma(link, dispersion_on);
    let cc_true =
        detected * eta_sat * eta_fib * window_efficiency(tcc, sigma) * surv_sat * surv_fib;
    let cc_accidental = singles_sat * singles_fib * tcc;
    let cc_total = cc_true + cc_accidental;

    let (qber, qx) = if cc_total > 0.0 {
        (
            (src.intrinsic_qber * cc_true + 0.5 * cc_accidental) / cc_total,
            (src.intrinsic_qx * cc_true + 0.5 * cc_accidental) / cc_total,
        )
    } else {
        (0.5, 0.5)
    };
    let qber = qber.clamp(0.0, 0.5);
    let qx = qx.clamp(0.0, 0.5);
    let skr = (cc_total / 2.0 * key_fraction(qber, qx)).max(0.0);

    RateEstimate {
        singles_sat,
        singles_fib,
        cc_true,
        cc_accidental,
        cc_total,
        qber,
        qx,
        skr,
    }
}

/// One row of a loss/pump sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub loss_db: f64,
    pub pump_mw: f64,
    pub estimate: RateEstimate,
}

fn check_grid(field: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::invalid(field, "grid is empty"));
    }
    for (i, &v) in grid.iter().enumerate() {
        check_non_negative(field, v)?;
        if i > 0 && v < grid[i - 1] {
            return Err(Error::invalid(field, "grid must be ascending"));
        }
    }
    Ok(())
}

/// Rate estimates over every (loss, pump) pair, loss-major order.
pub fn loss_shoulder_sweep(
    link: &LinkParams,
    loss_grid_db: &[f64],
    pump_grid_mw: &[f64],
) -> Result<Vec<SweepPoint>> {
    check_grid("loss_grid_db", loss_grid_db)?;
    check_grid("pump_grid_mw", pump_grid_mw)?;
    link.validate()?;
    let points: Vec<(f64, f64)> = loss_grid_db
        .iter()
        .flat_map(|&l| pump_grid_mw.iter().map(move |&p| (l, p)))
        .collect();
    points
        .par_iter()
        .map(|&(loss_db, pump_mw)| {
            let point = link
                .clone()
                .with_freespace_loss_db(loss_db)
                .with_pump_mw(pump_mw);
            Ok(SweepPoint {
                loss_db,
                pump_mw,
                estimate: estimate(&point)?,
            })
        })
        .collect()
}

/// Smallest loss on the grid at which the key rate is zero, if any.
pub fn shoulder_cutoff_db(points: &[SweepPoint]) -> Option<f64> {
    points
        .iter()
        .filter(|p| p.estimate.skr <= 0.0)
        .map(|p| p.loss_db)
        .reduce(f64::min)
}

/// SKR over (free-space loss, fiber length); `rows[i][j]` is loss i, length j.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkrGrid {
    pub loss_db: Vec<f64>,
    pub fiber_km: Vec<f64>,
    pub dispersion_on: bool,
    pub skr: Vec<Vec<f64>>,
}

pub fn skr_grid(
    link: &LinkParams,
    loss_grid_db: &[f64],
    fiber_grid_km: &[f64],
    dispersion_on: bool,
) -> Result<SkrGrid> {
    check_grid("loss_grid_db", loss_grid_db)?;
    check_grid("fiber_grid_km", fiber_grid_km)?;
    link.validate()?;
    let skr = loss_grid_db
        .par_iter()
        .map(|&loss| {
            fiber_grid_km
                .iter()
                .map(|&km| {
                    let point = link.clone().with_freespace_loss_db(loss).with_fiber_km(km);
                    estimate_unchecked(&point, dispersion_on).skr
                })
                .collect()
        })
        .collect();
    Ok(SkrGrid {
        loss_db: loss_grid_db.to_vec(),
        fiber_km: fiber_grid_km.to_vec(),
        dispersion_on,
        skr,
    })
}

/// Rate estimate with the dispersion term switched off.
pub fn estimate_without_dispersion(link: &LinkParams) -> Result<RateEstimate> {
    link.validate()?;
    Ok(estimate_unchecked(link, false))
}
