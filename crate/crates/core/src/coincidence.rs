//! Coincidence identification between two tag streams and BBM92 statistics.
//!
//! Matching policy: streams are walked in time order; each satellite event is
//! paired with the earliest unused fiber event `b` satisfying
//! `|t_a - t_b| <= window / 2` (closed interval). Every event takes part in at
//! most one coincidence. Because all candidate intervals have the same width,
//! unused fiber events always sit behind a single cursor, so the walk is one
//! pass with constant memory, and the greedy result is a maximum matching.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rates::{qber_from_counts, skr_from_counts, CountTable};
use crate::state::Basis;
use crate::timetag::{TagEvent, TagStream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoincidenceStats {
    pub window_s: f64,
    pub pairs_total: u64,
    pub basis_matched: u64,
    pub counts_z: CountTable,
    pub counts_x: CountTable,
    pub singles_sat: u64,
    pub singles_fib: u64,
    pub duration_s: f64,
}

impl CoincidenceStats {
    /// Symmetric heralding efficiency CC / sqrt(s1 s2).
    pub fn heralding(&self) -> Option<f64> {
        let denom = (self.singles_sat as f64 * self.singles_fib as f64).sqrt();
        (denom > 0.0).then(|| self.pairs_total as f64 / denom)
    }
}

/// Rate summary derived from coincidence counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasuredRates {
    pub singles_sat: f64,
    pub singles_fib: f64,
    pub cc_total: f64,
    pub qber: f64,
    pub qx: f64,
    pub skr: f64,
    pub heralding: f64,
}

/// Full coincidence window in integer picoseconds.
pub fn window_to_ps(window_s: f64) -> Result<u64> {
    if !window_s.is_finite() || window_s < 0.0 {
        return Err(Error::invalid("window_s", format!("must be >= 0, got {window_s}")));
    }
    Ok((window_s * 1e12).round() as u64)
}

#[inline]
fn within(a: u64, b: u64, window_ps: u64) -> bool {
    2 * a.abs_diff(b) <= window_ps
}

struct Tally {
    pairs_total: u64,
    counts_z: CountTable,
    counts_x: CountTable,
}

impl Tally {
    fn record(&mut self, a: TagEvent, b: TagEvent) {
        self.pairs_total += 1;
        match (a.basis(), b.basis()) {
            (Basis::Z, Basis::Z) => self.counts_z.add(a.bit(), b.bit()),
            (Basis::X, Basis::X) => self.counts_x.add(a.bit(), b.bit()),
            _ => {}
        }
    }
}

fn ordered<I>(iter: I, stream: &'static str) -> impl Iterator<Item = Result<TagEvent>>
where
    I: IntoIterator<Item = Result<TagEvent>>,
{
    let mut prev: Option<u64> = None;
    let mut index = 0u64;
    iter.into_iter().map(move |item| {
        let e = item?;
        if prev.is_some_and(|p| p > e.timestamp_ps) {
            return Err(Error::Unsorted { stream, index });
        }
        prev = Some(e.timestamp_ps);
        index += 1;
        Ok(e)
    })
}

/// Streaming matcher over fallible event sources (e.g. tag file readers).
/// Unsorted input is an error; nothing is re-sorted.
pub fn count_coincidences<A, B>(
    sat: A,
    fib: B,
    window_s: f64,
    duration_s: f64,
) -> Result<CoincidenceStats>
where
    A: IntoIterator<Item = Result<TagEvent>>,
    B: IntoIterator<Item = Result<TagEvent>>,
{
    let window_ps = window_to_ps(window_s)?;
    let mut fib = ordered(fib, "fiber");
    let mut tally = Tally {
        pairs_total: 0,
        counts_z: CountTable::default(),
        counts_x: CountTable::default(),
    };
    let mut singles_sat = 0u64;
    let mut singles_fib = 0u64;
    let mut head: Option<TagEvent> = None;
    let mut fib_done = false;

    for a in ordered(sat, "satellite") {
        let a = a?;
        singles_sat += 1;
        loop {
            if head.is_none() && !fib_done {
                match fib.next().transpose()? {
                    Some(b) => {
                        singles_fib += 1;
                        head = Some(b);
                    }
                    None => fib_done = true,
                }
            }
            match head {
                // Too early for this and every later satellite event.
                Some(b) if b.timestamp_ps < a.timestamp_ps && !within(a.timestamp_ps, b.timestamp_ps, window_ps) => {
                    head = None;
                }
                _ => break,
            }
        }
        if let Some(b) = head {
            if within(a.timestamp_ps, b.timestamp_ps, window_ps) {
                tally.record(a, b);
                head = None;
            }
        }
    }
    for b in fib {
        b?;
        singles_fib += 1;
    }

    Ok(CoincidenceStats {
        window_s,
        pairs_total: tally.pairs_total,
        basis_matched: tally.counts_z.total() + tally.counts_x.total(),
        counts_z: tally.counts_z,
        counts_x: tally.counts_x,
        singles_sat,
        singles_fib,
        duration_s,
    })
}

/// Matches two in-memory streams; `a` is the satellite party.
pub fn find_coincidences(a: &TagStream, b: &TagStream, window_s: f64) -> Result<CoincidenceStats> {
    let duration_s = a.duration_s.max(b.duration_s);
    count_coincidences(
        a.events.iter().copied().map(Ok),
        b.events.iter().copied().map(Ok),
        window_s,
        duration_s,
    )
}

/// One set of statistics per window, all from the same tags.
pub fn rescan_windows(
    a: &TagStream,
    b: &TagStream,
    windows_s: &[f64],
) -> Result<Vec<CoincidenceStats>> {
    if windows_s.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::invalid("windows", "must be ascending"));
    }
    windows_s
        .par_iter()
        .map(|&w| find_coincidences(a, b, w))
        .collect()
}

/// QBER and Qx from the basis tables, CC rate from all coincidences, and the
/// key rate from those three.
pub fn stats_to_rates(stats: &CoincidenceStats) -> Result<MeasuredRates> {
    if !(stats.duration_s > 0.0) {
        return Err(Error::InsufficientStatistics(
            "duration must be positive".into(),
        ));
    }
    let qber = qber_from_counts(&stats.counts_z).map_err(|_| {
        Error::InsufficientStatistics("no Z-basis coincidences".into())
    })?;
    let qx = qber_from_counts(&stats.counts_x).map_err(|_| {
        Error::InsufficientStatistics("no X-basis coincidences".into())
    })?;
    let cc_total = stats.pairs_total as f64 / stats.duration_s;
    Ok(MeasuredRates {
        singles_sat: stats.singles_sat as f64 / stats.duration_s,
        singles_fib: stats.singles_fib as f64 / stats.duration_s,
        cc_total,
        qber,
        qx,
        skr: skr_from_counts(cc_total, qber, qx)?,
        heralding: stats.heralding().unwrap_or(0.0),
    })
}

/// JSON record emitted per coincidence window. Error rates and key rate are
/// `null` when a basis table is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsRecord {
    pub window_ps: f64,
    pub cc: u64,
    pub qber: Option<f64>,
    pub qx: Option<f64>,
    pub skr_bps: Option<f64>,
    pub heralding: Option<f64>,
    pub duration_s: f64,
}

impl From<&CoincidenceStats> for StatsRecord {
    fn from(stats: &CoincidenceStats) -> Self {
        let rates = stats_to_rates(stats).ok();
        StatsRecord {
            window_ps: stats.window_s * 1e12,
            cc: stats.pairs_total,
            qber: rates.map(|r| r.qber),
            qx: rates.map(|r| r.qx),
            skr_bps: rates.map(|r| r.skr),
            heralding: stats.heralding(),
            duration_s: stats.duration_s,
        }
    }
}
