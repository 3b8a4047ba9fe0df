use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Result};
use crate::nn::sigmoid;

/// Scene-center prior `[x, y, phi, L, W]`; a zero network output maps here.
pub const THETA_CENTER: [f64; 5] = [0.0, 50.0, 0.0, 5.0, 5.0];
pub const THETA_SCALE: [f64; 5] = [100.0, 100.0, PI, 10.0, 10.0];
pub const PHI_CENTER: [f64; 8] = [0.0, 50.0, 0.0, 0.0, 0.0, 0.0, 5.0, 5.0];
pub const PHI_SCALE: [f64; 8] = [100.0, 100.0, PI, 10.0, 10.0, PI, 10.0, 10.0];
/// Side of the square used as the initial contour guess.
pub const INITIAL_SIDE_M: f64 = 4.0;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + libm::log1p(libm::exp(-x.abs()))
}

fn softplus_inv(y: f64) -> f64 {
    y + libm::log(-libm::expm1(-y))
}

/// Offset so that `scale * softplus(0 + offset)` equals the prior center.
fn size_offset(k: usize) -> f64 {
    softplus_inv(THETA_CENTER[k] / THETA_SCALE[k])
}

/// Scalar mean and standard deviation of one feature group.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Default for Stat {
    fn default() -> Self {
        Stat { mean: 0.0, std: 1.0 }
    }
}

impl Stat {
    /// Population statistics; a zero spread falls back to 1.
    pub fn from_values<I: IntoIterator<Item = f64>>(values: I) -> Self {
        let (mut n, mut sum, mut sq) = (0usize, 0.0, 0.0);
        let vals: Vec<f64> = values.into_iter().collect();
        for v in &vals {
            n += 1;
            sum += v;
        }
        if n == 0 {
            return Stat::default();
        }
        let mean = sum / n as f64;
        for v in &vals {
            sq += (v - mean) * (v - mean);
        }
        let std = libm::sqrt(sq / n as f64);
        Stat {
            mean,
            std: if std > 0.0 && std.is_finite() { std } else { 1.0 },
        }
    }

    /// Statistics over the real and imaginary parts of complex samples.
    pub fn from_complex<'a, I: IntoIterator<Item = &'a Complex64>>(values: I) -> Self {
        Self::from_values(values.into_iter().flat_map(|c| [c.re, c.im]))
    }
}

/// Feature standardization for the complex signals plus the fixed state
/// scaling. Complex vectors become `[re_0 .. re_n-1, im_0 .. im_n-1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub tx: Stat,
    pub rx: Stat,
    pub echo: Stat,
}

fn complex_features(stat: &Stat, v: &[Complex64], out: &mut [f64]) {
    let n = v.len();
    for (i, c) in v.iter().enumerate() {
        out[i] = (c.re - stat.mean) / stat.std;
        out[n + i] = (c.im - stat.mean) / stat.std;
    }
}

impl Normalizer {
    pub fn tx_features(&self, tx: &[Complex64], out: &mut [f64]) {
        complex_features(&self.tx, tx, out)
    }

    pub fn rx_features(&self, rx: &[Complex64], out: &mut [f64]) {
        complex_features(&self.rx, rx, out)
    }

    pub fn echo_features(&self, echo: &[Complex64], out: &mut [f64]) {
        complex_features(&self.echo, echo, out)
    }

    pub fn echo_from_features(&self, f: &[f64]) -> Result<Vec<Complex64>> {
        if f.len() % 2 != 0 {
            check_len("echo feature length (even)", f.len() + 1, f.len())?;
        }
        let n = f.len() / 2;
        let s = &self.echo;
        Ok((0..n)
            .map(|i| Complex64::new(s.mean + s.std * f[i], s.mean + s.std * f[n + i]))
            .collect())
    }
}

pub fn phi_norm(phi: &[f64], out: &mut [f64]) {
    for k in 0..8 {
        out[k] = (phi[k] - PHI_CENTER[k]) / PHI_SCALE[k];
    }
}

pub fn phi_denorm(z: &[f64], out: &mut [f64]) {
    for k in 0..8 {
        out[k] = PHI_CENTER[k] + PHI_SCALE[k] * z[k];
    }
}

/// Maps the Encoder head output to `Theta`. Position and angle are affine;
/// `L` and `W` go through a softplus so they stay positive.
pub fn theta_from_output(o: &[f64], out: &mut [f64]) {
    for k in 0..3 {
        out[k] = THETA_CENTER[k] + THETA_SCALE[k] * o[k];
    }
    for k in 3..5 {
        out[k] = THETA_SCALE[k] * softplus(o[k] + size_offset(k));
    }
}

/// Diagonal Jacobian of [`theta_from_output`].
pub fn theta_output_jacobian(o: &[f64], out: &mut [f64]) {
    out[..3].copy_from_slice(&THETA_SCALE[..3]);
    for k in 3..5 {
        out[k] = THETA_SCALE[k] * sigmoid(o[k] + size_offset(k));
    }
}

/// Inverse of [`theta_from_output`]; requires positive `L`, `W`.
pub fn theta_to_output(theta: &[f64], out: &mut [f64]) {
    for k in 0..3 {
        out[k] = (theta[k] - THETA_CENTER[k]) / THETA_SCALE[k];
    }
    for k in 3..5 {
        out[k] = softplus_inv(theta[k] / THETA_SCALE[k]) - size_offset(k);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_output_is_scene_prior() {
        let mut th = [0.0; 5];
        theta_from_output(&[0.0; 5], &mut th);
        for k in 0..5 {
            assert!((th[k] - THETA_CENTER[k]).abs() < 1e-12, "{th:?}");
        }
    }

    #[test]
    fn round_trips() {
        let phi = [3.2, 71.0, -2.9, 4.1, -0.3, 0.07, 6.5, 2.2];
        let (mut z, mut back) = ([0.0; 8], [0.0; 8]);
        phi_norm(&phi, &mut z);
        phi_denorm(&z, &mut back);
        for k in 0..8 {
            assert!((back[k] - phi[k]).abs() <= 1e-12 * phi[k].abs().max(1.0));
        }
        let theta = [-12.0, 33.0, 1.3, 7.5, 0.8];
        let (mut o, mut th) = ([0.0; 5], [0.0; 5]);
        theta_to_output(&theta, &mut o);
        theta_from_output(&o, &mut th);
        for k in 0..5 {
            assert!((th[k] - theta[k]).abs() <= 1e-12 * theta[k].abs().max(1.0));
        }
        let norm = Normalizer {
            echo: Stat { mean: 1e-6, std: 3e-5 },
            ..Default::default()
        };
        let e = [Complex64::new(2e-5, -1e-5), Complex64::new(0.0, 7e-6)];
        let mut f = [0.0; 4];
        norm.echo_features(&e, &mut f);
        let back = norm.echo_from_features(&f).unwrap();
        for (a, b) in back.iter().zip(&e) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1e-5));
        }
    }

    #[test]
    fn positive_sizes_for_any_output() {
        let mut th = [0.0; 5];
        for o in [-50.0, -5.0, 0.0, 5.0, 50.0] {
            theta_from_output(&[0.0, 0.0, 0.0, o, o], &mut th);
            assert!(th[3] > 0.0 && th[4] > 0.0);
        }
    }

    #[test]
    fn jacobian_matches_difference() {
        let o = [0.1, -0.2, 0.3, 0.7, -1.4];
        let mut jac = [0.0; 5];
        theta_output_jacobian(&o, &mut jac);
        for k in 0..5 {
            let (mut a, mut b) = ([0.0; 5], [0.0; 5]);
            let mut op = o;
            op[k] += 1e-6;
            theta_from_output(&op, &mut a);
            op[k] -= 2e-6;
            theta_from_output(&op, &mut b);
            let num = (a[k] - b[k]) / 2e-6;
            assert!((num - jac[k]).abs() < 1e-6 * jac[k].abs().max(1.0));
        }
    }

    #[test]
    fn stats() {
        let s = Stat::from_values([1.0, 3.0]);
        assert_eq!((s.mean, s.std), (2.0, 1.0));
        assert_eq!(Stat::from_values([4.0, 4.0]).std, 1.0);
    }
}
