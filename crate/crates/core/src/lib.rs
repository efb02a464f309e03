//! Emulation and analysis toolkit for entanglement-based (BBM92) quantum key
//! distribution with one photon sent up to a satellite and its partner sent
//! through terrestrial fiber.
//!
//! * [`state`]: two-photon polarization state and measurement probabilities.
//! * [`rates`]: closed-form singles/coincidence/error/key-rate model and sweeps.
//! * [`timetag`]: Monte Carlo time-tag synthesis and the QTAG/CSV tag formats.
//! * [`coincidence`]: streaming coincidence matcher and BBM92 statistics.
//! * [`overpass`]: loss profiles, key integration over a pass and per-step optimization.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coincidence;
pub mod error;
pub mod overpass;
pub mod params;
pub mod rates;
pub mod state;
pub mod timetag;

pub use error::{Error, Result};
pub use params::{ChannelParams, DetectorParams, LinkParams, SourceParams};
pub use rates::{estimate, RateEstimate};
pub use state::{binary_entropy, Basis, Polarization, TwoQubitState};
