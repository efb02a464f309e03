//! Loss budget: the largest up-link loss that still yields a positive key rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{LinkParams, SourceParams};
use crate::rates::estimate;

pub const BUDGET_RESOLUTION_DB: f64 = 0.05;
const MAX_SEARCH_DB: f64 = 500.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    pub fidelity: f64,
    pub heralding_scale: f64,
    /// `None` when there is no key even at zero added loss.
    pub max_loss_db: Option<f64>,
    /// Change relative to the unmodified link.
    pub gain_db: Option<f64>,
}

/// Overlap with Phi+ of a state whose only imperfections are independent bit
/// and phase flips with the given probabilities.
pub fn bell_fidelity(qber: f64, qx: f64) -> f64 {
    (1.0 - qber) * (1.0 - qx)
}

/// Scales both intrinsic error rates by a common factor so that the state
/// reaches `fidelity`.
fn errors_for_fidelity(src: &SourceParams, fidelity: f64) -> Result<(f64, f64)> {
    let (ez, ex) = (src.intrinsic_qber, src.intrinsic_qx);
    if !(0.0..=1.0).contains(&fidelity) {
        return Err(Error::invalid("fidelity", format!("must lie in [0, 1], got {fidelity}")));
    }
    if (fidelity - bell_fidelity(ez, ex)).abs() < 1e-12 {
        return Ok((ez, ex));
    }
    // (1 - k ez)(1 - k ex) = F  =>  ez ex k^2 - (ez + ex) k + (1 - F) = 0
    let (a, b, c) = (ez * ex, ez + ex, 1.0 - fidelity);
    let k = if a == 0.0 {
        if b == 0.0 {
            return Err(Error::invalid(
                "fidelity",
                "a noiseless state cannot be scaled to a lower fidelity",
            ));
        }
        c / b
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            return Err(Error::invalid("fidelity", format!("{fidelity} is unreachable")));
        }
        (b - disc.sqrt()) / (2.0 * a)
    };
    let (qz, qx) = (k * ez, k * ex);
    if qz > 0.5 || qx > 0.5 {
        return Err(Error::invalid(
            "fidelity",
            format!("{fidelity} needs error rates above 0.5"),
        ));
    }
    Ok((qz, qx))
}

fn has_key(link: &LinkParams, loss_db: f64) -> Result<bool> {
    Ok(estimate(&link.clone().with_freespace_loss_db(loss_db))?.skr > 0.0)
}

/// Bisects the free-space loss axis for the largest loss with a positive key
/// rate. A sign change is bracketed first by doubling from 10 dB.
pub fn max_tolerable_loss(link: &LinkParams, resolution_db: f64) -> Result<Option<f64>> {
    if !(resolution_db > 0.0) {
        return Err(Error::invalid("resolution_db", "must be > 0"));
    }
    link.validate()?;
    if !has_key(link, 0.0)? {
        return Ok(None);
    }
    let mut lo = 0.0;
    let mut hi = 10.0;
    while has_key(link, hi)? {
        lo = hi;
        hi *= 2.0;
        if hi > MAX_SEARCH_DB {
            return Err(Error::invalid(
                "det_sat.dark_rate_hz",
                format!("key rate stays positive beyond {MAX_SEARCH_DB} dB"),
            ));
        }
    }
    while hi - lo > resolution_db {
        let mid = 0.5 * (lo + hi);
        if has_key(link, mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(lo))
}

/// Loss budget for each (state fidelity, heralding scale) combination.
///
/// Fidelity is the Phi+ overlap of the emitted state; both intrinsic error
/// rates are scaled by one common factor to reach it. The heralding scale
/// multiplies both arms' heralding efficiencies (capped at 1) at a fixed
/// detected-pair rate.
pub fn loss_budget_sweep(
    link: &LinkParams,
    fidelity_grid: &[f64],
    heralding_scale_grid: &[f64],
) -> Result<Vec<BudgetPoint>> {
    if fidelity_grid.is_empty() {
        return Err(Error::invalid("fidelity_grid", "grid is empty"));
    }
    if heralding_scale_grid.is_empty() {
        return Err(Error::invalid("heralding_scale_grid", "grid is empty"));
    }
    let baseline = max_tolerable_loss(link, BUDGET_RESOLUTION_DB)?;
    let cases: Vec<(f64, f64)> = fidelity_grid
        .iter()
        .flat_map(|&f| heralding_scale_grid.iter().map(move |&s| (f, s)))
        .collect();
    cases
        .par_iter()
        .map(|&(fidelity, scale)| {
            if !(scale.is_finite() && scale > 0.0) {
                return Err(Error::invalid("heralding_scale", "must be > 0"));
            }
            let mut l = link.clone();
            let (qz, qx) = errors_for_fidelity(&l.source, fidelity)?;
            l.source.intrinsic_qber = qz;
            l.source.intrinsic_qx = qx;
            l.source.heralding_sat = (l.source.heralding_sat * scale).min(1.0);
            l.source.heralding_fib = (l.source.heralding_fib * scale).min(1.0);
            let max_loss_db = max_tolerable_loss(&l, BUDGET_RESOLUTION_DB)?;
            Ok(BudgetPoint {
                fidelity,
                heralding_scale: scale,
                max_loss_db,
                gain_db: max_loss_db.zip(baseline).map(|(m, b)| m - b),
            })
        })
        .collect()
}
