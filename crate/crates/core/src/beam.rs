//! Steering vectors, beam prediction and antenna activation.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};
use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tracknet::PhiVector;

/// Half-power beamwidth constant of a ULA, `theta_BW ~ 1.78 / (N cos theta)`.
pub const BEAMWIDTH_CONST: f64 = 1.78;
/// Half of [`BEAMWIDTH_CONST`].
pub const HALF_BEAMWIDTH_CONST: f64 = 0.89;

/// `1/sqrt(n) * [1, e^{-j pi sin(theta)}, ..., e^{-j pi (n-1) sin(theta)}]`.
pub fn steering(azimuth_rad: f64, n_elems: usize) -> Result<Vec<Complex64>> {
    if !(azimuth_rad.abs() < FRAC_PI_2) {
        return Err(Error::FieldOfView(azimuth_rad));
    }
    if n_elems == 0 {
        return Err(Error::Shape {
            context: "steering vector length",
            expected: 1,
            got: 0,
        });
    }
    let norm = 1.0 / (n_elems as f64).sqrt();
    let step = -PI * azimuth_rad.sin();
    Ok((0..n_elems)
        .map(|m| Complex64::from_polar(norm, step * m as f64))
        .collect())
}

/// Azimuth and range of the constant-velocity prediction of the target center.
pub fn predicted_center(phi_prev: &PhiVector, interval_s: f64) -> Result<(f64, f64)> {
    let x = phi_prev.x() + interval_s * phi_prev.vx();
    let y = phi_prev.y() + interval_s * phi_prev.vy();
    if !(y > 0.0) || !x.is_finite() {
        return Err(Error::Geometry(alloc::format!(
            "predicted center ({x:.3}, {y:.3}) is not in the forward half-plane"
        )));
    }
    Ok(((x / y).atan(), x.hypot(y)))
}

/// Activated transmit elements before clipping to the array size:
/// `floor(0.89 / (atan(diag / (2 range)) cos(azimuth)))`.
pub fn activated_count_unclipped(azimuth_rad: f64, range_m: f64, length_m: f64, width_m: f64) -> u64 {
    let diag = length_m.hypot(width_m);
    let half_angle = (diag / (2.0 * range_m)).atan();
    let n = (HALF_BEAMWIDTH_CONST / (half_angle * azimuth_rad.cos())).floor();
    if n.is_finite() && n > 0.0 {
        n as u64
    } else if n.is_finite() {
        0
    } else {
        u64::MAX
    }
}

/// Number of active transmit elements, clipped to `[1, n_tx_max]`.
pub fn activated_count(azimuth_rad: f64, range_m: f64, length_m: f64, width_m: f64, n_tx_max: usize) -> usize {
    let n = activated_count_unclipped(azimuth_rad, range_m, length_m, width_m);
    (n.min(n_tx_max as u64) as usize).max(1)
}

/// Half-power beamwidth for `n` active elements steered to `azimuth`.
pub fn beamwidth(n_active: usize, azimuth_rad: f64) -> f64 {
    BEAMWIDTH_CONST / (n_active as f64 * azimuth_rad.cos())
}

/// Cross-range width illuminated at `range`: `2 d tan(0.89 / (N cos theta))`.
pub fn coverage_width(n_active: usize, azimuth_rad: f64, range_m: f64) -> f64 {
    2.0 * range_m * (HALF_BEAMWIDTH_CONST / (n_active as f64 * azimuth_rad.cos())).tan()
}

/// `[a(azimuth, active)^T, 0, ..., 0]^T` of length `n_tx`.
pub fn build_beamformer(azimuth_rad: f64, active_count: usize, n_tx: usize) -> Result<Vec<Complex64>> {
    if active_count < 1 || active_count > n_tx {
        return Err(Error::Shape {
            context: "active element count",
            expected: n_tx,
            got: active_count,
        });
    }
    let mut w = steering(azimuth_rad, active_count)?;
    w.resize(n_tx, Complex64::new(0.0, 0.0));
    Ok(w)
}

/// A uniformly drawn QPSK symbol, `(+-1 +- j) / sqrt(2)`.
pub fn draw_symbol<R: Rng>(rng: &mut R) -> Complex64 {
    let bits: u8 = rng.random_range(0..4);
    let re = if bits & 1 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    let im = if bits & 2 == 0 { FRAC_1_SQRT_2 } else { -FRAC_1_SQRT_2 };
    Complex64::new(re, im)
}

/// `sqrt(P_t) * w * s`.
pub fn transmit(w: &[Complex64], symbol: Complex64, tx_power_w: f64) -> Vec<Complex64> {
    let amp = tx_power_w.sqrt();
    w.iter().map(|wi| wi * symbol * amp).collect()
}

/// Beam decision for one slot.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamPlan {
    pub predicted_azimuth_rad: f64,
    pub predicted_range_m: f64,
    pub active_count: usize,
    pub beamwidth_rad: f64,
    pub coverage_width_m: f64,
    /// True when the activation formula gave zero and was raised to one.
    pub clamped: bool,
}

impl BeamPlan {
    /// Plans the beam of slot n from the filter state of slot n-1.
    pub fn from_state(phi_prev: &PhiVector, interval_s: f64, n_tx: usize) -> Result<Self> {
        let (az, range) = predicted_center(phi_prev, interval_s)?;
        if !(az.abs() < FRAC_PI_2) {
            return Err(Error::FieldOfView(az));
        }
        let raw = activated_count_unclipped(az, range, phi_prev.length(), phi_prev.width());
        let n = activated_count(az, range, phi_prev.length(), phi_prev.width(), n_tx);
        Ok(BeamPlan {
            predicted_azimuth_rad: az,
            predicted_range_m: range,
            active_count: n,
            beamwidth_rad: beamwidth(n, az),
            coverage_width_m: coverage_width(n, az, range),
            clamped: raw == 0,
        })
    }

    pub fn beamformer(&self, n_tx: usize) -> Result<Vec<Complex64>> {
        build_beamformer(self.predicted_azimuth_rad, self.active_count, n_tx)
    }
}

/// Zero vector helper used by callers that disable a signal component.
pub fn zeros(n: usize) -> Vec<Complex64> {
    vec![Complex64::new(0.0, 0.0); n]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    fn steering_broadside() {
        let a = steering(0.0, 4).unwrap();
        assert!(a.iter().all(|v| close(*v, Complex64::new(0.5, 0.0))));
    }

    #[test]
    fn steering_thirty_degrees() {
        let a = steering(PI / 6.0, 2).unwrap();
        assert!(close(a[0], Complex64::new(FRAC_1_SQRT_2, 0.0)));
        assert!(close(a[1], Complex64::new(0.0, -FRAC_1_SQRT_2)));
    }

    #[test]
    fn steering_rejects_endfire() {
        assert!(steering(FRAC_PI_2, 3).is_err());
        assert!(steering(-2.0, 3).is_err());
    }

    #[test]
    fn predicted_center_examples() {
        let phi = PhiVector::new([10.0, 10.0, 0.0, 0.0, 0.0, 0.0, 4.0, 4.0]);
        let (az, r) = predicted_center(&phi, 1.0).unwrap();
        assert!((az - PI / 4.0).abs() < 1e-15);
        assert!((r - 200f64.sqrt()).abs() < 1e-12);

        let phi = PhiVector::new([0.0, 50.0, 0.0, 5.0, 0.0, 0.0, 4.0, 4.0]);
        let (az, _) = predicted_center(&phi, 1.0).unwrap();
        assert!((az - 0.1f64.atan()).abs() < 1e-15);
        assert!((az - 0.0997).abs() < 1e-4);

        let phi = PhiVector::new([0.0, 30.0, 0.0, 0.0, 3.0, 0.0, 4.0, 4.0]);
        assert_eq!(predicted_center(&phi, 1.0).unwrap().0, 0.0);

        let behind = PhiVector::new([0.0, 1.0, 0.0, 0.0, -3.0, 0.0, 4.0, 4.0]);
        assert!(predicted_center(&behind, 1.0).is_err());
    }

    #[test]
    fn activation_worked_values() {
        assert_eq!(activated_count(0.0, 50.0, 6.0, 4.0, 15), 12);
        assert_eq!(activated_count_unclipped(0.0, 500.0, 6.0, 4.0), 123);
        assert_eq!(activated_count(0.0, 500.0, 6.0, 4.0, 15), 15);
        assert_eq!(activated_count(0.0, 10.0, 6.0, 4.0, 15), 2);
        // Too close for even one element: clamped.
        assert_eq!(activated_count_unclipped(0.0, 1.0, 6.0, 4.0), 0);
        assert_eq!(activated_count(0.0, 1.0, 6.0, 4.0, 15), 1);
    }

    #[test]
    fn beamformer_padding() {
        let w = build_beamformer(0.3, 15, 15).unwrap();
        assert_eq!(w, steering(0.3, 15).unwrap());
        let w = build_beamformer(0.3, 1, 6).unwrap();
        assert!(close(w[0], Complex64::new(1.0, 0.0)));
        assert!(w[1..].iter().all(|v| v.norm() == 0.0));
        let w = build_beamformer(-0.7, 5, 9).unwrap();
        let trailing = w.iter().rev().take_while(|v| v.norm() == 0.0).count();
        assert_eq!(trailing, 4);
        let energy: f64 = w.iter().map(|v| v.norm_sqr()).sum();
        assert!((energy - 1.0).abs() < 1e-12);
        assert!(build_beamformer(0.0, 0, 4).is_err());
        assert!(build_beamformer(0.0, 5, 4).is_err());
    }

    #[test]
    fn symbols_and_transmit_power() {
        let mut rng = crate::seed::rng_from(3);
        let mut acc = 0.0;
        for _ in 0..1000 {
            let s = draw_symbol(&mut rng);
            assert!((s.norm() - 1.0).abs() < 1e-15);
            acc += s.norm_sqr();
        }
        assert!((acc / 1000.0 - 1.0).abs() < 1e-12);
        let w = steering(0.2, 7).unwrap();
        let x = transmit(&w, draw_symbol(&mut rng), 1.0);
        let p: f64 = x.iter().map(|v| v.norm_sqr()).sum();
        assert!((p - 1.0).abs() < 1e-12);
    }
}
