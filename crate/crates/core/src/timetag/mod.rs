//! Monte Carlo synthesis of detection time tags for both parties.
//!
//! Pairs are created as a homogeneous Poisson process. Each photon survives
//! its arm (heralding efficiency times channel transmission) independently,
//! picks the Z or X analyzer with probability 1/2, and its outcome is drawn
//! from the pair's joint projection probabilities. Detection time is the
//! creation time plus Gaussian detector jitter; the fiber photon also gets a
//! uniform dispersion offset and the relative tagger jitter. Dark counts are
//! independent Poisson processes, a quarter of the party's dark rate per
//! channel. Each channel then applies a non-paralyzable dead time.
//!
//! Channels: 0 = H, 1 = V (Z analyzer), 2 = D, 3 = A (X analyzer).

pub mod format;

use std::cell::RefCell;
use std::collections::VecDeque;
use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};

use crate::error::{Error, Result};
use crate::params::{LinkParams, DETECTORS_PER_PARTY};
use crate::rates::dispersion_sigma;
use crate::state::{Basis, TwoQubitState};

/// Length of one generation slice.
pub const SLICE_PS: u64 = 10_000_000_000;

/// Gaussian jitter samples are truncated at this many standard deviations so
/// that the slice guard band is a hard bound.
const JITTER_CLIP_SIGMAS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Party {
    Satellite = 0,
    Fiber = 1,
}

impl Party {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(Party::Satellite),
            1 => Some(Party::Fiber),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TagEvent {
    pub timestamp_ps: u64,
    pub channel: u8,
}

impl TagEvent {
    pub fn new(timestamp_ps: u64, channel: u8) -> Self {
        Self {
            timestamp_ps,
            channel,
        }
    }

    pub fn basis(self) -> Basis {
        if self.channel < 2 {
            Basis::Z
        } else {
            Basis::X
        }
    }

    pub fn bit(self) -> usize {
        (self.channel & 1) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TagStream {
    pub party: Party,
    pub duration_s: f64,
    pub seed: u64,
    pub events: Vec<TagEvent>,
}

impl TagStream {
    /// Checks ordering and channel range.
    pub fn validate(&self) -> Result<()> {
        let stream = match self.party {
            Party::Satellite => "satellite",
            Party::Fiber => "fiber",
        };
        for (i, e) in self.events.iter().enumerate() {
            if e.channel > 3 {
                return Err(Error::invalid(
                    "channel",
                    format!("event {i} has channel {}", e.channel),
                ));
            }
            if i > 0 && self.events[i - 1].timestamp_ps > e.timestamp_ps {
                return Err(Error::Unsorted {
                    stream,
                    index: i as u64,
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Events of both parties emitted for one slice; each vector is sorted and
/// continues where the previous slice left off.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SliceEvents {
    pub sat: Vec<TagEvent>,
    pub fib: Vec<TagEvent>,
}

/// Per-party detection and timing model.
#[derive(Debug, Clone)]
struct ArmModel {
    dark_per_channel_hz: f64,
    jitter_ps: f64,
    dead_time_ps: u64,
}

/// Sampling tables derived from the state: joint outcome distributions for
/// each analyzer pair and single-photon marginals.
#[derive(Debug, Clone)]
struct OutcomeModel {
    joint: [[[f64; 4]; 2]; 2],
    marginal_sat: [[f64; 2]; 2],
    marginal_fib: [[f64; 2]; 2],
}

impl OutcomeModel {
    fn new(state: &TwoQubitState) -> Self {
        let bases = [Basis::Z, Basis::X];
        let mut joint = [[[0.0; 4]; 2]; 2];
        let mut marginal_sat = [[0.0; 2]; 2];
        let mut marginal_fib = [[0.0; 2]; 2];
        for (i, &bs) in bases.iter().enumerate() {
            for (j, &bf) in bases.iter().enumerate() {
                let t = state.outcome_table(bs, bf);
                let total: f64 = t.iter().flatten().sum();
                joint[i][j] = [
                    t[0][0] / total,
                    t[0][1] / total,
                    t[1][0] / total,
                    t[1][1] / total,
                ];
                if j == 0 {
                    marginal_sat[i] = [(t[0][0] + t[0][1]) / total, (t[1][0] + t[1][1]) / total];
                }
                if i == 0 {
                    marginal_fib[j] = [(t[0][0] + t[1][0]) / total, (t[0][1] + t[1][1]) / total];
                }
            }
        }
        Self {
            joint,
            marginal_sat,
            marginal_fib,
        }
    }
}

fn pick(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

fn channel(basis_index: usize, bit: usize) -> u8 {
    (2 * basis_index + bit) as u8
}

/// Slice-by-slice tag generator. Memory is bounded by the slice length.
pub struct Synthesizer {
    seed: u64,
    duration_ps: u64,
    slice_ps: u64,
    next_slice: u64,
    n_slices: u64,
    /// Pairs with at least one photon detected, per ps.
    detected_pair_rate_per_ps: f64,
    p_both: f64,
    p_sat_only: f64,
    sat: ArmModel,
    fib: ArmModel,
    tagger_jitter_ps: f64,
    dispersion_width_ps: f64,
    outcomes: OutcomeModel,
    guard_ps: f64,
    pending_sat: Vec<(f64, u8)>,
    pending_fib: Vec<(f64, u8)>,
    last_sat: [Option<u64>; DETECTORS_PER_PARTY],
    last_fib: [Option<u64>; DETECTORS_PER_PARTY],
}

impl Synthesizer {
    pub fn new(link: &LinkParams, state: &TwoQubitState, duration_s: f64, seed: u64) -> Result<Self> {
        link.validate()?;
        if !duration_s.is_finite() || duration_s <= 0.0 {
            return Err(Error::invalid("duration_s", format!("must be > 0, got {duration_s}")));
        }
        let duration_ps = (duration_s * 1e12).round();
        if duration_ps >= u64::MAX as f64 / 2.0 {
            return Err(Error::invalid("duration_s", "too long"));
        }
        let duration_ps = duration_ps as u64;

        let src = &link.source;
        let p_sat = src.heralding_sat * link.channel.freespace_transmission();
        let p_fib = src.heralding_fib * link.channel.fiber_transmission();
        let p_any = 1.0 - (1.0 - p_sat) * (1.0 - p_fib);
        let creation_rate = src.pair_creation_rate();
        let (p_both, p_sat_only) = if p_any > 0.0 {
            (p_sat * p_fib / p_any, p_sat * (1.0 - p_fib) / p_any)
        } else {
            (0.0, 0.0)
        };

        let arm = |d: &crate::params::DetectorParams| ArmModel {
            dark_per_channel_hz: d.dark_rate_hz / DETECTORS_PER_PARTY as f64,
            jitter_ps: d.jitter_sigma_s * 1e12,
            dead_time_ps: (d.dead_time_s * 1e12).round() as u64,
        };
        let sat = arm(&link.det_sat);
        let fib = arm(&link.det_fib);
        let tagger_jitter_ps = link.tagger_jitter_s * 1e12;
        let dispersion_width_ps =
            dispersion_sigma(link.channel.fiber_length_km, link.channel.dispersion_ps_per_km) * 1e12;
        let guard_ps = JITTER_CLIP_SIGMAS * sat.jitter_ps.max(fib.jitter_ps + tagger_jitter_ps)
            + dispersion_width_ps / 2.0
            + 2.0;

        Ok(Self {
            seed,
            duration_ps,
            slice_ps: SLICE_PS,
            next_slice: 0,
            n_slices: duration_ps.div_ceil(SLICE_PS),
            detected_pair_rate_per_ps: creation_rate * p_any * 1e-12,
            p_both,
            p_sat_only,
            sat,
            fib,
            tagger_jitter_ps,
            dispersion_width_ps,
            outcomes: OutcomeModel::new(state),
            guard_ps,
            pending_sat: Vec::new(),
            pending_fib: Vec::new(),
            last_sat: [None; DETECTORS_PER_PARTY],
            last_fib: [None; DETECTORS_PER_PARTY],
        })
    }

    pub fn duration_ps(&self) -> u64 {
        self.duration_ps
    }

    fn slice_rng(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(index);
        rng
    }

    fn jitter(rng: &mut ChaCha8Rng, sigma_ps: f64) -> f64 {
        if sigma_ps <= 0.0 {
            return 0.0;
        }
        let z: f64 = Normal::new(0.0, 1.0).expect("unit normal").sample(rng);
        z.clamp(-JITTER_CLIP_SIGMAS, JITTER_CLIP_SIGMAS) * sigma_ps
    }

    fn generate_slice(&mut self, index: u64) {
        let mut rng = self.slice_rng(index);
        let start = (index * self.slice_ps) as f64;
        let end = ((index + 1) * self.slice_ps).min(self.duration_ps) as f64;

        if self.detected_pair_rate_per_ps > 0.0 {
            let gaps = Exp::new(self.detected_pair_rate_per_ps).expect("positive rate");
            let mut t = start;
            loop {
                t += gaps.sample(&mut rng);
                if t >= end {
                    break;
                }
                let u: f64 = rng.random();
                let (sat, fib) = if u < self.p_both {
                    (true, true)
                } else if u < self.p_both + self.p_sat_only {
                    (true, false)
                } else {
                    (false, true)
                };
                let bs = rng.random_range(0..2usize);
                let bf = rng.random_range(0..2usize);
                let (bit_s, bit_f) = if sat && fib {
                    let k = pick(&mut rng, &self.outcomes.joint[bs][bf]);
                    (k / 2, k % 2)
                } else if sat {
                    (pick(&mut rng, &self.outcomes.marginal_sat[bs]), 0)
                } else {
                    (0, pick(&mut rng, &self.outcomes.marginal_fib[bf]))
                };
                if sat {
                    let ts = t + Self::jitter(&mut rng, self.sat.jitter_ps);
                    self.pending_sat.push((ts, channel(bs, bit_s)));
                }
                if fib {
                    let disp = if self.dispersion_width_ps > 0.0 {
                        (rng.random::<f64>() - 0.5) * self.dispersion_width_ps
                    } else {
                        0.0
                    };
                    let tf = t
                        + Self::jitter(&mut rng, self.fib.jitter_ps)
                        + disp
                        + Self::jitter(&mut rng, self.tagger_jitter_ps);
                    self.pending_fib.push((tf, channel(bf, bit_f)));
                }
            }
        }

        for ch in 0..DETECTORS_PER_PARTY as u8 {
            for (arm, pending) in [
                (&self.sat, &mut self.pending_sat),
                (&self.fib, &mut self.pending_fib),
            ] {
                if arm.dark_per_channel_hz <= 0.0 {
                    continue;
                }
                let gaps = Exp::new(arm.dark_per_channel_hz * 1e-12).expect("positive rate");
                let mut t = start;
                loop {
                    t += gaps.sample(&mut rng);
                    if t >= end {
                        break;
                    }
                    pending.push((t, ch));
                }
            }
        }
    }

    /// Quantizes, sorts and dead-time filters every pending event earlier
    /// than `horizon` (all of them when `horizon` is `None`).
    fn drain(
        pending: &mut Vec<(f64, u8)>,
        last: &mut [Option<u64>; DETECTORS_PER_PARTY],
        dead_time_ps: u64,
        duration_ps: u64,
        horizon: Option<f64>,
    ) -> Vec<TagEvent> {
        let mut ready: Vec<TagEvent> = Vec::new();
        pending.retain(|&(t, ch)| {
            if horizon.is_some_and(|h| t >= h) {
                return true;
            }
            let q = t.round_ties_even();
            if q >= 0.0 && q < duration_ps as f64 {
                ready.push(TagEvent::new(q as u64, ch));
            }
            false
        });
        ready.sort_unstable();
        ready.retain(|e| {
            let slot = &mut last[e.channel as usize];
            match *slot {
                Some(prev) if e.timestamp_ps - prev < dead_time_ps => false,
                _ => {
                    *slot = Some(e.timestamp_ps);
                    true
                }
            }
        });
        ready
    }

    pub fn next_slice(&mut self) -> Option<SliceEvents> {
        if self.next_slice >= self.n_slices {
            return None;
        }
        let index = self.next_slice;
        self.next_slice += 1;
        self.generate_slice(index);
        let horizon = if self.next_slice >= self.n_slices {
            None
        } else {
            Some((self.next_slice * self.slice_ps) as f64 - self.guard_ps)
        };
        Some(SliceEvents {
            sat: Self::drain(
                &mut self.pending_sat,
                &mut self.last_sat,
                self.sat.dead_time_ps,
                self.duration_ps,
                horizon,
            ),
            fib: Self::drain(
                &mut self.pending_fib,
                &mut self.last_fib,
                self.fib.dead_time_ps,
                self.duration_ps,
                horizon,
            ),
        })
    }

    /// Splits the generator into one lazy event iterator per party. Both
    /// iterators share the generator; events of the party not currently
    /// being read are buffered until consumed.
    pub fn into_party_iters(self) -> (PartyIter, PartyIter) {
        let shared = Rc::new(RefCell::new(SharedSlices {
            synth: self,
            sat: VecDeque::new(),
            fib: VecDeque::new(),
        }));
        (
            PartyIter {
                shared: Rc::clone(&shared),
                party: Party::Satellite,
            },
            PartyIter {
                shared,
                party: Party::Fiber,
            },
        )
    }
}

impl Iterator for Synthesizer {
    type Item = SliceEvents;

    fn next(&mut self) -> Option<SliceEvents> {
        self.next_slice()
    }
}

struct SharedSlices {
    synth: Synthesizer,
    sat: VecDeque<TagEvent>,
    fib: VecDeque<TagEvent>,
}

pub struct PartyIter {
    shared: Rc<RefCell<SharedSlices>>,
    party: Party,
}

impl Iterator for PartyIter {
    type Item = TagEvent;

    fn next(&mut self) -> Option<TagEvent> {
        let mut s = self.shared.borrow_mut();
        loop {
            let queue = match self.party {
                Party::Satellite => &mut s.sat,
                Party::Fiber => &mut s.fib,
            };
            if let Some(e) = queue.pop_front() {
                return Some(e);
            }
            let slice = s.synth.next_slice()?;
            s.sat.extend(slice.sat);
            s.fib.extend(slice.fib);
        }
    }
}

/// Generates both parties' complete streams in memory.
pub fn synthesize(
    link: &LinkParams,
    state: &TwoQubitState,
    duration_s: f64,
    seed: u64,
) -> Result<(TagStream, TagStream)> {
    let synth = Synthesizer::new(link, state, duration_s, seed)?;
    let mut sat = Vec::new();
    let mut fib = Vec::new();
    for slice in synth {
        sat.extend(slice.sat);
        fib.extend(slice.fib);
    }
    Ok((
        TagStream {
            party: Party::Satellite,
            duration_s,
            seed,
            events: sat,
        },
        TagStream {
            party: Party::Fiber,
            duration_s,
            seed,
            events: fib,
        },
    ))
}
