//! Physical, trajectory and training parameters.
//!
//! Defaults reproduce the reference scenario: 15-element transmit and receive
//! ULAs two meters apart, 30 dBm transmit power, 1 cm wavelength, -80 dBm
//! noise, three clutter scatterers, -90 dBm residual self-interference, a
//! 6 m x 4 m rectangular target and 200 slots of one second.

use alloc::format;
use core::f64::consts::PI;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub tx_power_dbm: f64,
    pub wavelength_m: f64,
    pub noise_power_dbm: f64,
    pub n_clutter: usize,
    pub si_power_dbm: f64,
    /// Reference path gain p0 at 1 m (linear power gain).
    pub ref_path_gain: f64,
    /// Distance between the centers of the transmit and receive ULAs.
    pub array_separation_m: f64,
    pub slot_interval_s: f64,
    pub n_slots: usize,
    pub element_spacing_m: f64,
    /// Inclusive bounds of the per-slot target scatterer count K.
    pub scatterers_min: usize,
    pub scatterers_max: usize,
    pub clutter_range_min_m: f64,
    pub clutter_range_max_m: f64,
    pub clutter_enabled: bool,
    pub si_enabled: bool,
    pub noise_enabled: bool,
}

/// Echo SNR targeted by [`calibrate_ref_path_gain`].
pub const CALIBRATION_SNR_DB: f64 = 10.0;
/// Range at which the calibration SNR is met.
pub const CALIBRATION_RANGE_M: f64 = 50.0;

impl Default for SystemConfig {
    fn default() -> Self {
        let mut cfg = SystemConfig {
            n_tx: 15,
            n_rx: 15,
            tx_power_dbm: 30.0,
            wavelength_m: 0.01,
            noise_power_dbm: -80.0,
            n_clutter: 3,
            si_power_dbm: -90.0,
            ref_path_gain: 0.0,
            array_separation_m: 2.0,
            slot_interval_s: 1.0,
            n_slots: 200,
            element_spacing_m: 0.005,
            scatterers_min: 5,
            scatterers_max: 20,
            clutter_range_min_m: 10.0,
            clutter_range_max_m: 100.0,
            clutter_enabled: true,
            si_enabled: true,
            noise_enabled: true,
        };
        cfg.ref_path_gain = calibrate_ref_path_gain(&cfg);
        cfg
    }
}

impl SystemConfig {
    pub fn tx_power_w(&self) -> f64 {
        dbm_to_watts(self.tx_power_dbm)
    }

    /// Noise variance per receive element; zero when noise is disabled.
    pub fn noise_power_w(&self) -> f64 {
        if self.noise_enabled {
            dbm_to_watts(self.noise_power_dbm)
        } else {
            0.0
        }
    }

    pub fn si_power_w(&self) -> f64 {
        dbm_to_watts(self.si_power_dbm)
    }

    /// The degenerate scenario: no clutter, no self-interference, no noise.
    pub fn echo_only(mut self) -> Self {
        self.clutter_enabled = false;
        self.si_enabled = false;
        self.noise_enabled = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("system.{msg}")));
        if self.n_tx < 1 || self.n_rx < 1 {
            return bad("n_tx and n_rx must be >= 1");
        }
        if self.n_slots < 1 {
            return bad("n_slots must be >= 1");
        }
        for (name, v) in [
            ("wavelength_m", self.wavelength_m),
            ("element_spacing_m", self.element_spacing_m),
            ("array_separation_m", self.array_separation_m),
            ("slot_interval_s", self.slot_interval_s),
            ("ref_path_gain", self.ref_path_gain),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("system.{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("tx_power_dbm", self.tx_power_dbm),
            ("noise_power_dbm", self.noise_power_dbm),
            ("si_power_dbm", self.si_power_dbm),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("system.{name} must be finite")));
            }
        }
        if self.scatterers_min < 1 || self.scatterers_max < self.scatterers_min {
            return bad("scatterers_min must be >= 1 and <= scatterers_max");
        }
        if !(self.clutter_range_min_m > 0.0 && self.clutter_range_max_m >= self.clutter_range_min_m) {
            return bad("clutter range bounds must satisfy 0 < min <= max");
        }
        // The transmit and receive apertures must not overlap.
        let half_tx = 0.5 * (self.n_tx - 1) as f64 * self.element_spacing_m;
        let half_rx = 0.5 * (self.n_rx - 1) as f64 * self.element_spacing_m;
        if half_tx + half_rx >= self.array_separation_m {
            return bad("arrays overlap: separation too small for the apertures");
        }
        Ok(())
    }
}

/// Solves for p0 such that a unit-RCS, unit-length scatterer at
/// [`CALIBRATION_RANGE_M`] illuminated by a matched full-power beam yields
/// [`CALIBRATION_SNR_DB`] per receive element.
///
/// Per element the echo power is `p0 / d^4 * P_t / N_r`, hence
/// `p0 = snr * N_r * sigma^2 * d^4 / P_t`.
pub fn calibrate_ref_path_gain(cfg: &SystemConfig) -> f64 {
    let snr = 10f64.powf(CALIBRATION_SNR_DB / 10.0);
    let sigma2 = dbm_to_watts(cfg.noise_power_dbm);
    snr * cfg.n_rx as f64 * sigma2 * CALIBRATION_RANGE_M.powi(4) / cfg.tx_power_w()
}

/// Parameters of the random U-shaped trajectories.
///
/// A trajectory is a straight leg, a 180 degree constant-turn-rate arc and a
/// second straight leg, traversed at constant speed so that the whole U spans
/// the episode. Orientation follows the velocity heading.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrajectoryParams {
    pub leg_length_min_m: f64,
    pub leg_length_max_m: f64,
    pub turn_radius_min_m: f64,
    pub turn_radius_max_m: f64,
    /// Annulus (around the BS) for the start position.
    pub start_range_min_m: f64,
    pub start_range_max_m: f64,
    /// Every state of an accepted trajectory lies in this annulus.
    pub range_min_m: f64,
    pub range_max_m: f64,
    /// Every state must satisfy |azimuth| <= this bound.
    pub max_azimuth_rad: f64,
    pub length_min_m: f64,
    pub length_max_m: f64,
    pub width_min_m: f64,
    pub width_max_m: f64,
    pub max_attempts: usize,
}

impl Default for TrajectoryParams {
    fn default() -> Self {
        TrajectoryParams {
            leg_length_min_m: 40.0,
            leg_length_max_m: 80.0,
            turn_radius_min_m: 10.0,
            turn_radius_max_m: 25.0,
            start_range_min_m: 20.0,
            start_range_max_m: 80.0,
            range_min_m: 15.0,
            range_max_m: 100.0,
            max_azimuth_rad: PI / 3.0,
            length_min_m: 4.0,
            length_max_m: 8.0,
            width_min_m: 2.0,
            width_max_m: 5.0,
            max_attempts: 10_000,
        }
    }
}

impl TrajectoryParams {
    /// Fixes the target contour to `length` x `width`.
    pub fn with_fixed_size(mut self, length: f64, width: f64) -> Self {
        self.length_min_m = length;
        self.length_max_m = length;
        self.width_min_m = width;
        self.width_max_m = width;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let pairs = [
            ("leg_length", self.leg_length_min_m, self.leg_length_max_m),
            ("turn_radius", self.turn_radius_min_m, self.turn_radius_max_m),
            ("start_range", self.start_range_min_m, self.start_range_max_m),
            ("range", self.range_min_m, self.range_max_m),
            ("length", self.length_min_m, self.length_max_m),
            ("width", self.width_min_m, self.width_max_m),
        ];
        for (name, lo, hi) in pairs {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::Config(format!(
                    "trajectory.{name}: need 0 < min <= max, got [{lo}, {hi}]"
                )));
            }
        }
        if !(self.max_azimuth_rad > 0.0 && self.max_azimuth_rad < PI / 2.0) {
            return Err(Error::Config("trajectory.max_azimuth_rad must lie in (0, pi/2)".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("trajectory.max_attempts must be >= 1".into()));
        }
        Ok(())
    }
}
