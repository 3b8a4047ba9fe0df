use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI};
use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{azimuth_of, Clutter, Scatterer};
use crate::beam::steering;
use crate::config::SystemConfig;
use crate::error::{check_len, Error, Result};

/// Adds `gain * b(theta) a(theta)^H tx` to `acc`.
fn add_point_echo(acc: &mut [Complex64], gain: Complex64, azimuth: f64, tx: &[Complex64]) -> Result<()> {
    let a = steering(azimuth, tx.len())?;
    let b = steering(azimuth, acc.len())?;
    let proj: Complex64 = a.iter().zip(tx).map(|(ai, xi)| ai.conj() * xi).sum();
    let coef = gain * proj;
    for (y, bi) in acc.iter_mut().zip(&b) {
        *y += coef * bi;
    }
    Ok(())
}

fn path_gain(p0: f64, range: f64) -> Result<f64> {
    if !(range > 0.0) {
        return Err(Error::Geometry("zero-range scatterer (singular path loss)".into()));
    }
    Ok(p0.sqrt() / (range * range))
}

/// Target echo: sum over scatterers of `g_k sqrt(l_k) zeta_k b(theta_k) a(theta_k)^H tx`
/// with `g_k = sqrt(p0) / d_k^2`.
pub fn et_echo(scatterers: &[Scatterer], tx: &[Complex64], cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    check_len("et_echo transmit vector", cfg.n_tx, tx.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.n_rx];
    for s in scatterers {
        let g = path_gain(cfg.ref_path_gain, s.range_m)?;
        let amp = g * s.eq_length_m.sqrt() * s.rcs;
        add_point_echo(&mut out, Complex64::new(amp, 0.0), s.azimuth_rad, tx)?;
    }
    Ok(out)
}

/// Clutter echo: sum over clutters of `g_k rcs_k b(theta_k) a(theta_k)^H tx`.
pub fn clutter_echo(clutters: &[Clutter], tx: &[Complex64], cfg: &SystemConfig) -> Result<Vec<Complex64>> {
    check_len("clutter_echo transmit vector", cfg.n_tx, tx.len())?;
    let mut out = vec![Complex64::new(0.0, 0.0); cfg.n_rx];
    for c in clutters {
        let range = c.x_m.hypot(c.y_m);
        let g = path_gain(cfg.ref_path_gain, range)?;
        add_point_echo(&mut out, c.rcs() * g, azimuth_of(c.x_m, c.y_m), tx)?;
    }
    Ok(out)
}

/// Draws `cfg.n_clutter` static clutter scatterers, uniform in area over the
/// forward half of the clutter annulus, each with a CN(0, 1) RCS.
pub fn draw_clutter<R: Rng>(cfg: &SystemConfig, rng: &mut R) -> Vec<Clutter> {
    let (r1, r2) = (cfg.clutter_range_min_m, cfg.clutter_range_max_m);
    (0..cfg.n_clutter)
        .map(|_| {
            let r = if r2 > r1 {
                rng.random_range(r1 * r1..r2 * r2).sqrt()
            } else {
                r1
            };
            // Open interval keeps the azimuth strictly inside the field of view.
            let mut az: f64 = rng.random_range(-FRAC_PI_2..FRAC_PI_2);
            if az == -FRAC_PI_2 {
                az = 0.0;
            }
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Clutter {
                x_m: r * az.sin(),
                y_m: r * az.cos(),
                rcs_re: re * core::f64::consts::FRAC_1_SQRT_2,
                rcs_im: im * core::f64::consts::FRAC_1_SQRT_2,
            }
        })
        .collect()
}

/// Residual self-interference channel, `n_rx x n_tx`, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct SiChannel {
    pub n_rx: usize,
    pub n_tx: usize,
    pub entries: Vec<Complex64>,
}

impl SiChannel {
    pub fn entry(&self, rx: usize, tx: usize) -> Complex64 {
        self.entries[rx * self.n_tx + tx]
    }
}

/// Element x-coordinates of both ULAs: collinear on the x-axis, centers
/// `array_separation_m` apart (transmit array on the left).
pub fn element_positions(cfg: &SystemConfig) -> (Vec<f64>, Vec<f64>) {
    let place = |n: usize, center: f64| -> Vec<f64> {
        (0..n)
            .map(|m| center + (m as f64 - 0.5 * (n - 1) as f64) * cfg.element_spacing_m)
            .collect()
    };
    (
        place(cfg.n_tx, -0.5 * cfg.array_separation_m),
        place(cfg.n_rx, 0.5 * cfg.array_separation_m),
    )
}

/// Near-field leakage channel: entry (i, j) is `p_SI / r * exp(-j 2 pi r / lambda)`
/// where `r` is the distance between transmit element j and receive element i.
pub fn si_channel(cfg: &SystemConfig) -> Result<SiChannel> {
    let (tx_pos, rx_pos) = element_positions(cfg);
    let p_si = cfg.si_power_w();
    let mut entries = Vec::with_capacity(cfg.n_rx * cfg.n_tx);
    for &xr in &rx_pos {
        for &xt in &tx_pos {
            let r = (xr - xt).abs();
            if !(r > 0.0) {
                return Err(Error::Geometry("transmit and receive elements overlap".into()));
            }
            entries.push(Complex64::from_polar(p_si / r, -2.0 * PI * r / cfg.wavelength_m));
        }
    }
    Ok(SiChannel {
        n_rx: cfg.n_rx,
        n_tx: cfg.n_tx,
        entries,
    })
}

pub fn si_signal(channel: &SiChannel, tx: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len("si_signal transmit vector", channel.n_tx, tx.len())?;
    Ok(channel
        .entries
        .chunks_exact(channel.n_tx)
        .map(|row| row.iter().zip(tx).map(|(h, x)| h * x).sum())
        .collect())
}

/// `y = et + clutter + si + z` with `z ~ CN(0, sigma^2 I)`.
///
/// Noise is skipped entirely (no draws) when the noise power is zero.
pub fn synthesize_received<R: Rng>(
    et: &[Complex64],
    clutter: &[Complex64],
    si: &[Complex64],
    cfg: &SystemConfig,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    check_len("synthesize_received echo", cfg.n_rx, et.len())?;
    check_len("synthesize_received clutter", cfg.n_rx, clutter.len())?;
    check_len("synthesize_received si", cfg.n_rx, si.len())?;
    let sigma2 = cfg.noise_power_w();
    let scale = (0.5 * sigma2).sqrt();
    let mut y: Vec<Complex64> = et.iter().zip(clutter).zip(si).map(|((e, c), s)| e + c + s).collect();
    if sigma2 > 0.0 {
        for v in y.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *v += Complex64::new(scale * re, scale * im);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn empty_sums_are_zero() {
        let cfg = SystemConfig::default();
        let tx = vec![Complex64::new(1.0, 0.0); cfg.n_tx];
        assert!(et_echo(&[], &tx, &cfg).unwrap().iter().all(|v| v.norm() == 0.0));
        assert!(clutter_echo(&[], &tx, &cfg).unwrap().iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn si_magnitude_at_two_meters() {
        let cfg = SystemConfig {
            n_tx: 1,
            n_rx: 1,
            ..SystemConfig::default()
        };
        let h = si_channel(&cfg).unwrap();
        assert!((h.entry(0, 0).norm() - 5e-13).abs() < 1e-25);
    }

    #[test]
    fn si_full_wavelength_phase() {
        let cfg = SystemConfig {
            n_tx: 1,
            n_rx: 1,
            array_separation_m: 0.01,
            ..SystemConfig::default()
        };
        let h = si_channel(&cfg).unwrap();
        let e = h.entry(0, 0) / h.entry(0, 0).norm();
        assert!((e - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn si_envelope_decreases_with_distance() {
        let cfg = SystemConfig::default();
        let h = si_channel(&cfg).unwrap();
        let (tx, rx) = element_positions(&cfg);
        let mut pairs: Vec<(f64, f64)> = Vec::new();
        for i in 0..cfg.n_rx {
            for j in 0..cfg.n_tx {
                pairs.push(((rx[i] - tx[j]).abs(), h.entry(i, j).norm()));
            }
        }
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for w in pairs.windows(2) {
            if w[1].0 > w[0].0 + 1e-9 {
                assert!(w[1].1 < w[0].1);
            }
        }
    }

    #[test]
    fn zero_range_clutter_rejected() {
        let cfg = SystemConfig::default();
        let tx = vec![Complex64::new(1.0, 0.0); cfg.n_tx];
        let c = Clutter {
            x_m: 0.0,
            y_m: 0.0,
            rcs_re: 1.0,
            rcs_im: 0.0,
        };
        assert!(clutter_echo(&[c], &tx, &cfg).is_err());
    }

    #[test]
    fn received_without_impairments_is_echo() {
        let cfg = SystemConfig::default().echo_only();
        let et: Vec<Complex64> = (0..cfg.n_rx).map(|i| Complex64::new(i as f64, -0.5)).collect();
        let zero = vec![Complex64::new(0.0, 0.0); cfg.n_rx];
        let mut rng = seed::rng_from(1);
        let y = synthesize_received(&et, &zero, &zero, &cfg, &mut rng).unwrap();
        assert_eq!(y, et);
    }
}
