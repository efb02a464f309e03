//! System parameters for the source, the two detector arrays and the channels.
//!
//! Default values describe the laboratory system: a 223 kHz/mW pair source with
//! 19.3 % symmetric heralding, four Si-APDs on the up-link arm and four SNSPDs
//! on the 10 km fiber arm.

use serde::{Deserialize, Serialize};

use crate::error::{check_non_negative, check_unit_interval, Error, Result};

/// Time-tagger channel jitter, shared by both arms.
pub const DEFAULT_TAGGER_JITTER_S: f64 = 6e-12;

/// Detectors per party: H and V behind the Z-basis PBS, D and A behind the X-basis one.
pub const DETECTORS_PER_PARTY: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    /// Detected coincidence rate per mW of pump at zero added loss (pairs/s/mW).
    pub brightness_hz_per_mw: f64,
    pub pump_power_mw: f64,
    /// Probability that the up-link photon of a pair is detected, channel loss excluded.
    pub heralding_sat: f64,
    /// Probability that the fiber photon of a pair is detected, fiber loss excluded.
    pub heralding_fib: f64,
    /// Z-basis error probability of the emitted state.
    pub intrinsic_qber: f64,
    /// X-basis error probability of the emitted state.
    pub intrinsic_qx: f64,
}

impl Default for SourceParams {
    fn default() -> Self {
        Self {
            brightness_hz_per_mw: 223e3,
            pump_power_mw: 1.0,
            heralding_sat: 0.193,
            heralding_fib: 0.193,
            intrinsic_qber: 0.017,
            intrinsic_qx: 0.039,
        }
    }
}

impl SourceParams {
    /// Zero-loss detected coincidence rate (pairs/s).
    pub fn detected_pair_rate(&self) -> f64 {
        self.brightness_hz_per_mw * self.pump_power_mw
    }

    /// Rate at which pairs are created, before any detection inefficiency.
    pub fn pair_creation_rate(&self) -> f64 {
        self.detected_pair_rate() / (self.heralding_sat * self.heralding_fib)
    }

    /// Symmetric heralding efficiency CC/sqrt(s1 s2) of the bare source.
    pub fn symmetric_heralding(&self) -> f64 {
        (self.heralding_sat * self.heralding_fib).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        check_non_negative("source.brightness_hz_per_mw", self.brightness_hz_per_mw)?;
        check_non_negative("source.pump_power_mw", self.pump_power_mw)?;
        for (field, value) in [
            ("source.heralding_sat", self.heralding_sat),
            ("source.heralding_fib", self.heralding_fib),
        ] {
            check_unit_interval(field, value)?;
            // The pair creation rate is brightness / (heralding product).
            if value == 0.0 {
                return Err(Error::invalid(field, "must be > 0"));
            }
        }
        for (field, value) in [
            ("source.intrinsic_qber", self.intrinsic_qber),
            ("source.intrinsic_qx", self.intrinsic_qx),
        ] {
            check_non_negative(field, value)?;
            if value > 0.5 {
                return Err(Error::invalid(field, format!("must be <= 0.5, got {value}")));
            }
        }
        Ok(())
    }
}

/// One party's detector array. Rates are totals over its four detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    /// Nominal detection efficiency. Informational: the measured heralding
    /// efficiencies already include it.
    pub efficiency: f64,
    /// Dark counts per second summed over the party's four detectors.
    pub dark_rate_hz: f64,
    /// Gaussian timing jitter (standard deviation, s).
    pub jitter_sigma_s: f64,
    /// Non-paralyzable dead time of each detector (s).
    pub dead_time_s: f64,
}

impl DetectorParams {
    /// Si-APD array on the up-link arm, 250 cps per detector.
    pub fn si_apd() -> Self {
        Self {
            efficiency: 0.6,
            dark_rate_hz: 250.0 * DETECTORS_PER_PARTY as f64,
            jitter_sigma_s: 350e-12,
            dead_time_s: 30e-9,
        }
    }

    /// SNSPD array on the fiber arm, 100 cps per detector.
    pub fn snspd() -> Self {
        Self {
            efficiency: 0.8,
            dark_rate_hz: 100.0 * DETECTORS_PER_PARTY as f64,
            jitter_sigma_s: 50e-12,
            dead_time_s: 25e-9,
        }
    }

    pub fn validate(&self, prefix: &str) -> Result<()> {
        check_unit_interval(&format!("{prefix}.efficiency"), self.efficiency)?;
        check_non_negative(&format!("{prefix}.dark_rate_hz"), self.dark_rate_hz)?;
        check_non_negative(&format!("{prefix}.jitter_sigma_s"), self.jitter_sigma_s)?;
        check_non_negative(&format!("{prefix}.dead_time_s"), self.dead_time_s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    /// Loss added to the up-link (785 nm) arm, dB.
    pub freespace_loss_db: f64,
    pub fiber_length_km: f64,
    pub fiber_atten_db_per_km: f64,
    /// Temporal broadening per km of fiber, ps/km.
    pub dispersion_ps_per_km: f64,
    /// Full width of the coincidence window, s.
    pub coincidence_window_s: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            freespace_loss_db: 0.0,
            fiber_length_km: 10.0,
            fiber_atten_db_per_km: 0.2,
            dispersion_ps_per_km: 40.0,
            coincidence_window_s: 1e-9,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        check_non_negative("channel.freespace_loss_db", self.freespace_loss_db)?;
        check_non_negative("channel.fiber_length_km", self.fiber_length_km)?;
        check_non_negative("channel.fiber_atten_db_per_km", self.fiber_atten_db_per_km)?;
        check_non_negative("channel.dispersion_ps_per_km", self.dispersion_ps_per_km)?;
        check_non_negative("channel.coincidence_window_s", self.coincidence_window_s)
    }

    /// Transmission of the up-link arm.
    pub fn freespace_transmission(&self) -> f64 {
        db_to_transmission(self.freespace_loss_db)
    }

    /// Transmission of the fiber arm.
    pub fn fiber_transmission(&self) -> f64 {
        db_to_transmission(self.fiber_atten_db_per_km * self.fiber_length_km)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub source: SourceParams,
    pub det_sat: DetectorParams,
    pub det_fib: DetectorParams,
    pub channel: ChannelParams,
    /// Jitter of the relative timing between the two tagger inputs (s).
    #[serde(default = "default_tagger_jitter")]
    pub tagger_jitter_s: f64,
}

fn default_tagger_jitter() -> f64 {
    DEFAULT_TAGGER_JITTER_S
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            source: SourceParams::default(),
            det_sat: DetectorParams::si_apd(),
            det_fib: DetectorParams::snspd(),
            channel: ChannelParams::default(),
            tagger_jitter_s: DEFAULT_TAGGER_JITTER_S,
        }
    }
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.det_sat.validate("det_sat")?;
        self.det_fib.validate("det_fib")?;
        self.channel.validate()?;
        check_non_negative("tagger_jitter_s", self.tagger_jitter_s)
    }

    pub fn with_freespace_loss_db(mut self, loss_db: f64) -> Self {
        self.channel.freespace_loss_db = loss_db;
        self
    }

    pub fn with_pump_mw(mut self, pump_mw: f64) -> Self {
        self.source.pump_power_mw = pump_mw;
        self
    }

    pub fn with_window_s(mut self, window_s: f64) -> Self {
        self.channel.coincidence_window_s = window_s;
        self
    }

    pub fn with_fiber_km(mut self, km: f64) -> Self {
        self.channel.fiber_length_km = km;
        self
    }
}

pub fn db_to_transmission(loss_db: f64) -> f64 {
    10f64.powf(-loss_db / 10.0)
}
