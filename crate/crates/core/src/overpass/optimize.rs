//! Per-step choice of pump power and coincidence window.
//!
//! Search: a 16x16 log-spaced grid over the bounds, then three rounds of 9x9
//! grids spanning the neighbouring cells of the incumbent. The link's own
//! settings are evaluated as an extra candidate when they lie inside the
//! bounds, so the result never falls below the fixed-settings key rate.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{OverpassProfile, OverpassResult, StepSettings};
use crate::error::{Error, Result};
use crate::params::LinkParams;
use crate::rates::estimate;

const COARSE_POINTS: usize = 16;
const REFINE_POINTS: usize = 9;
const REFINE_ROUNDS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn fixed(value: f64) -> Self {
        Self { lo: value, hi: value }
    }

    fn validate(&self, field: &str) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo > 0.0 && self.hi >= self.lo) {
            return Err(Error::invalid(
                field,
                format!("need 0 < lo <= hi, got [{}, {}]", self.lo, self.hi),
            ));
        }
        Ok(())
    }

    fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    /// `n` log-spaced points with exact endpoints.
    fn log_grid(&self, n: usize) -> Vec<f64> {
        if self.lo == self.hi || n < 2 {
            return vec![self.lo];
        }
        let (a, b) = (self.lo.ln(), self.hi.ln());
        (0..n)
            .map(|i| match i {
                0 => self.lo,
                _ if i == n - 1 => self.hi,
                _ => (a + (b - a) * i as f64 / (n - 1) as f64).exp(),
            })
            .collect()
    }

    fn around(&self, grid: &[f64], index: usize) -> Bounds {
        Bounds {
            lo: grid[index.saturating_sub(1)],
            hi: grid[(index + 1).min(grid.len() - 1)],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPoint {
    pub pump_mw: f64,
    pub window_s: f64,
    pub skr: f64,
}

fn evaluate(link: &LinkParams, pump_mw: f64, window_s: f64) -> f64 {
    let point = link.clone().with_pump_mw(pump_mw).with_window_s(window_s);
    // Bounds are validated up front; every grid point is a valid link.
    estimate(&point).map(|e| e.skr).unwrap_or(0.0)
}

fn best_on_grid(link: &LinkParams, pumps: &[f64], windows: &[f64]) -> (usize, usize, f64) {
    let mut best = (0, 0, f64::NEG_INFINITY);
    for (i, &p) in pumps.iter().enumerate() {
        for (j, &w) in windows.iter().enumerate() {
            let skr = evaluate(link, p, w);
            if skr > best.2 {
                best = (i, j, skr);
            }
        }
    }
    best
}

/// Maximizes the key rate of `link` over pump power and window.
pub fn optimize_point(link: &LinkParams, pump: Bounds, window: Bounds) -> Result<OptimizedPoint> {
    pump.validate("pump_bounds")?;
    window.validate("window_bounds")?;
    link.validate()?;

    let mut pumps = pump.log_grid(COARSE_POINTS);
    let mut windows = window.log_grid(COARSE_POINTS);
    let (mut i, mut j, mut skr) = best_on_grid(link, &pumps, &windows);
    let mut best = OptimizedPoint {
        pump_mw: pumps[i],
        window_s: windows[j],
        skr,
    };
    for _ in 0..REFINE_ROUNDS {
        let pb = pump.around(&pumps, i);
        let wb = window.around(&windows, j);
        pumps = pb.log_grid(REFINE_POINTS);
        windows = wb.log_grid(REFINE_POINTS);
        (i, j, skr) = best_on_grid(link, &pumps, &windows);
        if skr > best.skr {
            best = OptimizedPoint {
                pump_mw: pumps[i],
                window_s: windows[j],
                skr,
            };
        }
    }

    let (p0, w0) = (link.source.pump_power_mw, link.channel.coincidence_window_s);
    if pump.contains(p0) && window.contains(w0) {
        let skr = evaluate(link, p0, w0);
        if skr >= best.skr {
            best = OptimizedPoint {
                pump_mw: p0,
                window_s: w0,
                skr,
            };
        }
    }
    Ok(best)
}

/// Optimizes every profile sample independently and integrates the result.
pub fn optimize_pass(
    profile: &OverpassProfile,
    link: &LinkParams,
    pump_bounds: Bounds,
    window_bounds: Bounds,
) -> Result<OverpassResult> {
    pump_bounds.validate("pump_bounds")?;
    window_bounds.validate("window_bounds")?;
    link.validate()?;
    let points = profile
        .corrected()
        .collect::<Vec<_>>()
        .par_iter()
        .map(|&(t, loss)| {
            let at = link.clone().with_freespace_loss_db(loss);
            optimize_point(&at, pump_bounds, window_bounds).map(|p| (t, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let series = points.iter().map(|&(t, p)| (t, p.skr)).collect();
    let settings = points
        .iter()
        .map(|&(t_s, p)| StepSettings {
            t_s,
            pump_mw: p.pump_mw,
            window_s: p.window_s,
        })
        .collect();
    Ok(OverpassResult::from_series(series, Some(settings)))
}
