use serde::{Deserialize, Serialize};

use super::{OverpassProfile, ProfileSample};
use crate::error::{Error, Result};

const EARTH_RADIUS_KM: f64 = 6371.0;
const EARTH_MU_KM3_S2: f64 = 398_600.441_8;

/// Measured up-link loss anchors: (elevation deg, total loss dB).
pub const LOW_ELEVATION_ANCHOR: (f64, f64) = (14.5, 52.0);
pub const HIGH_ELEVATION_ANCHOR: (f64, f64) = (76.0, 41.0);

/// Total up-link loss at a given elevation, linear in dB between the two
/// anchors and held constant outside them.
pub fn elevation_to_loss_db(elevation_deg: f64) -> f64 {
    let (e0, l0) = LOW_ELEVATION_ANCHOR;
    let (e1, l1) = HIGH_ELEVATION_ANCHOR;
    let x = ((elevation_deg - e0) / (e1 - e0)).clamp(0.0, 1.0);
    l0 + x * (l1 - l0)
}

/// Circular-orbit pass over a ground station on a non-rotating Earth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeoPass {
    pub altitude_km: f64,
    pub min_elevation_deg: f64,
    pub max_elevation_deg: f64,
    pub step_s: f64,
}

impl Default for LeoPass {
    /// A 400 km orbit spends about 300 s above 14.5 deg on a 76 deg pass.
    fn default() -> Self {
        Self {
            altitude_km: 400.0,
            min_elevation_deg: LOW_ELEVATION_ANCHOR.0,
            max_elevation_deg: HIGH_ELEVATION_ANCHOR.0,
            step_s: 1.0,
        }
    }
}

/// Earth central angle between station and sub-satellite point at which the
/// satellite is seen at `elevation`.
fn central_angle(elevation: f64, orbit_ratio: f64) -> f64 {
    (orbit_ratio * elevation.cos()).acos() - elevation
}

impl LeoPass {
    fn validate(&self) -> Result<()> {
        if !(self.altitude_km > 0.0) {
            return Err(Error::invalid("altitude_km", "must be > 0"));
        }
        if !(self.step_s > 0.0) {
            return Err(Error::invalid("step_s", "must be > 0"));
        }
        if !(0.0..90.0).contains(&self.min_elevation_deg)
            || !(self.min_elevation_deg < self.max_elevation_deg && self.max_elevation_deg <= 90.0)
        {
            return Err(Error::invalid(
                "max_elevation_deg",
                "need 0 <= min < max <= 90 degrees",
            ));
        }
        Ok(())
    }

    fn orbit_ratio(&self) -> f64 {
        EARTH_RADIUS_KM / (EARTH_RADIUS_KM + self.altitude_km)
    }

    fn angular_rate(&self) -> f64 {
        (EARTH_MU_KM3_S2 / (EARTH_RADIUS_KM + self.altitude_km).powi(3)).sqrt()
    }

    /// Along-track angle from culmination to the horizon mask.
    fn half_arc(&self) -> f64 {
        let k = self.orbit_ratio();
        let cross = central_angle(self.max_elevation_deg.to_radians(), k);
        let edge = central_angle(self.min_elevation_deg.to_radians(), k);
        (edge.cos() / cross.cos()).clamp(-1.0, 1.0).acos()
    }

    /// Time above the minimum elevation.
    pub fn duration_s(&self) -> f64 {
        2.0 * self.half_arc() / self.angular_rate()
    }

    /// Elevation (deg) at time `t_s` after the pass starts.
    pub fn elevation_deg(&self, t_s: f64) -> f64 {
        let k = self.orbit_ratio();
        let cross = central_angle(self.max_elevation_deg.to_radians(), k);
        let along = self.angular_rate() * t_s - self.half_arc();
        let gamma = (cross.cos() * along.cos()).clamp(-1.0, 1.0).acos();
        (gamma.cos() - k).atan2(gamma.sin()).to_degrees()
    }

    /// Loss profile sampled every `step_s` from rise to set (last sample at set).
    pub fn profile(&self, correction_db: f64) -> Result<OverpassProfile> {
        self.validate()?;
        let duration = self.duration_s();
        let n = (duration / self.step_s).ceil() as usize;
        let mut samples = (0..=n)
            .map(|i| {
                let t_s = (i as f64 * self.step_s).min(duration);
                ProfileSample {
                    t_s,
                    loss_db: elevation_to_loss_db(self.elevation_deg(t_s)),
                }
            })
            .collect::<Vec<_>>();
        samples.dedup_by(|b, a| b.t_s <= a.t_s);
        OverpassProfile::new(samples, correction_db)
    }
}
