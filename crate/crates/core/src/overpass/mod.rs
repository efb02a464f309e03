//! Key accumulation over a satellite pass.
//!
//! A pass is a time series of up-link loss. A scalar correction (dB) is
//! subtracted from every sample before evaluating the rate model, which
//! removes loss contributions that the measured source parameters already
//! include (3 dB detector inefficiency, 5.9 dB receiver optics).

mod budget;
mod optimize;
mod profile;

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::LinkParams;
use crate::rates::estimate;

pub use budget::{bell_fidelity, loss_budget_sweep, max_tolerable_loss, BudgetPoint, BUDGET_RESOLUTION_DB};
pub use optimize::{optimize_pass, optimize_point, Bounds, OptimizedPoint};
pub use profile::{elevation_to_loss_db, LeoPass};

/// Detector-efficiency part of the correction.
pub const CORRECTION_DETECTOR_DB: f64 = 3.0;
/// Detector plus receiver-optics correction.
pub const CORRECTION_FULL_DB: f64 = 8.9;
/// Presets: uncorrected, detector-corrected, fully corrected.
pub const CORRECTION_PRESETS_DB: [f64; 3] = [0.0, CORRECTION_DETECTOR_DB, CORRECTION_FULL_DB];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileSample {
    pub t_s: f64,
    pub loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverpassProfile {
    samples: Vec<ProfileSample>,
    correction_db: f64,
}

impl OverpassProfile {
    pub fn new(samples: Vec<ProfileSample>, correction_db: f64) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::invalid("samples", "profile is empty"));
        }
        if !correction_db.is_finite() {
            return Err(Error::invalid("correction_db", "must be finite"));
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.t_s.is_finite() || !s.loss_db.is_finite() {
                return Err(Error::invalid("samples", format!("sample {i} is not finite")));
            }
            if i > 0 && s.t_s <= samples[i - 1].t_s {
                return Err(Error::invalid(
                    "samples",
                    format!("time not strictly increasing at sample {i}"),
                ));
            }
        }
        Ok(Self {
            samples,
            correction_db,
        })
    }

    /// `duration_s` seconds of constant loss, sampled every `step_s`.
    pub fn constant(loss_db: f64, duration_s: f64, step_s: f64) -> Result<Self> {
        if !(duration_s > 0.0 && step_s > 0.0) {
            return Err(Error::invalid("duration_s", "duration and step must be positive"));
        }
        let n = (duration_s / step_s).round() as usize;
        let samples = (0..=n)
            .map(|i| ProfileSample {
                t_s: i as f64 * duration_s / n as f64,
                loss_db,
            })
            .collect();
        Self::new(samples, 0.0)
    }

    pub fn samples(&self) -> &[ProfileSample] {
        &self.samples
    }

    pub fn correction_db(&self) -> f64 {
        self.correction_db
    }

    pub fn with_correction(mut self, correction_db: f64) -> Self {
        self.correction_db = correction_db;
        self
    }

    /// Loss after correction, floored at 0 dB.
    pub fn corrected_loss_db(&self, index: usize) -> f64 {
        (self.samples[index].loss_db - self.correction_db).max(0.0)
    }

    pub fn corrected(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        (0..self.samples.len()).map(|i| (self.samples[i].t_s, self.corrected_loss_db(i)))
    }
}

/// Parses a `t_s,loss_db` CSV (header line optional, `#` starts a comment).
pub fn load_profile<R: Read>(reader: R, correction_db: f64) -> Result<OverpassProfile> {
    let mut samples: Vec<ProfileSample> = Vec::new();
    let mut seen_data = false;
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if !std::mem::replace(&mut seen_data, true) && trimmed.replace(' ', "") == "t_s,loss_db" {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno,
            message,
        };
        let mut fields = trimmed.split(',');
        let (Some(t), Some(l), None) = (fields.next(), fields.next(), fields.next()) else {
            return Err(parse_err("expected two fields `t_s,loss_db`".into()));
        };
        let t_s: f64 = t.trim().parse().map_err(|e| parse_err(format!("t_s: {e}")))?;
        let loss_db: f64 = l.trim().parse().map_err(|e| parse_err(format!("loss_db: {e}")))?;
        if !t_s.is_finite() || !loss_db.is_finite() {
            return Err(parse_err("non-finite value".into()));
        }
        if samples.last().is_some_and(|p| p.t_s >= t_s) {
            return Err(parse_err("time is not strictly increasing".into()));
        }
        samples.push(ProfileSample { t_s, loss_db });
    }
    if samples.is_empty() {
        return Err(Error::Parse {
            line: 0,
            message: "profile contains no samples".into(),
        });
    }
    OverpassProfile::new(samples, correction_db)
}

pub fn load_profile_path(path: &Path, correction_db: f64) -> Result<OverpassProfile> {
    let file = std::fs::File::open(path)?;
    load_profile(file, correction_db)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSettings {
    pub t_s: f64,
    pub pump_mw: f64,
    pub window_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverpassResult {
    /// (t_s, skr bits/s)
    pub skr_series: Vec<(f64, f64)>,
    pub peak_skr: f64,
    pub total_key_bits: f64,
    pub settings_series: Option<Vec<StepSettings>>,
}

impl OverpassResult {
    fn from_series(skr_series: Vec<(f64, f64)>, settings_series: Option<Vec<StepSettings>>) -> Self {
        let peak_skr = skr_series.iter().map(|&(_, s)| s).fold(0.0, f64::max);
        let total_key_bits = trapezoid(&skr_series);
        Self {
            skr_series,
            peak_skr,
            total_key_bits,
            settings_series,
        }
    }
}

pub fn trapezoid(series: &[(f64, f64)]) -> f64 {
    series
        .windows(2)
        .map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1))
        .sum()
}

/// Evaluates the rate model at each corrected loss sample and integrates.
pub fn integrate_pass(profile: &OverpassProfile, link: &LinkParams) -> Result<OverpassResult> {
    link.validate()?;
    let series = profile
        .corrected()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(t, loss)| Ok((t, estimate(&link.clone().with_freespace_loss_db(loss))?.skr)))
        .collect::<Result<Vec<_>>>()?;
    Ok(OverpassResult::from_series(series, None))
}
