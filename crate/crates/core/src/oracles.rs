//! Independent reference computations for the simulator, beam control,
//! filter and metric code: brute-force visibility, Monte-Carlo IoU, a
//! scanned antenna count, and sample statistics of the random draws.

use alloc::vec::Vec;
use core::f64::consts::PI;
use num_complex::Complex64;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;

use crate::beam::{activated_count, activated_count_unclipped, coverage_width, HALF_BEAMWIDTH_CONST};
use crate::config::{SystemConfig, TrajectoryParams};
use crate::error::Result;
use crate::metrics::{iou, rect_polygon};
use crate::seed::{self, rng_from, Stream};
use crate::sim::{partition_scatterers, rect_corners, synthesize_received, visible_edges, Point, Scene, TargetState};
use crate::tracknet::{
    kalmannet_step, reference_kf_step, KalmanAux, Mat5, Mat8, ModelConfig, Normalizer, PhiVector, StateSpaceModel,
    ThetaVector, TrackNetModel,
};
use crate::train::{simulate_episode, PriorNoise};

fn random_pd<const N: usize, R: Rng>(rng: &mut R, scale: f64) -> nalgebra::SMatrix<f64, N, N> {
    let a = nalgebra::SMatrix::<f64, N, N>::from_fn(|_, _| rng.random_range(-1.0..1.0));
    (a * a.transpose() * (0.5 / N as f64) + nalgebra::SMatrix::<f64, N, N>::identity() * 0.1) * scale
}

fn gauss<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(rand_distr::StandardNormal)
}

fn correlated<const N: usize, R: Rng>(rng: &mut R, cov: &nalgebra::SMatrix<f64, N, N>) -> nalgebra::SVector<f64, N> {
    let l = cov.cholesky().expect("covariance is positive definite").l();
    l * nalgebra::SVector::<f64, N>::from_fn(|_, _| gauss(rng))
}

/// Runs the classical filter and the learned-gain pipeline with the gain
/// forced to the classical one on a linear-Gaussian sequence of `slots`
/// steps. Returns the largest state difference.
pub fn kf_forced_gain_deviation(seed: u64, slots: usize) -> Result<f64> {
    let mut rng = rng_from(seed);
    let ssm = StateSpaceModel::new(rng.random_range(0.2..2.0));
    let q: Mat8 = random_pd(&mut rng, 0.05);
    let r: Mat5 = random_pd(&mut rng, 0.5);
    let p0: Mat8 = random_pd(&mut rng, 1.0);
    let truth0 = PhiVector::new([0.0, 50.0, 0.3, 1.0, -0.5, 0.01, 5.0, 2.0]);
    let mut x = nalgebra::SVector::<f64, 8>::from(truth0.0) + correlated(&mut rng, &p0);
    let model = TrackNetModel::init(ModelConfig::default(), Normalizer::default(), ssm.interval_s, &mut rng)?;

    let mut kf_phi = truth0;
    let mut kf_cov = p0;
    let mut net_phi = truth0;
    let mut aux = KalmanAux::new(model.config.gain_hidden, &truth0);
    let mut worst: f64 = 0.0;
    for _ in 0..slots {
        x = ssm.f * x + correlated(&mut rng, &q);
        let z = ThetaVector((ssm.h * x + correlated(&mut rng, &r)).into());
        let step = reference_kf_step(&kf_phi, &z, &ssm, &q, &r, &kf_cov)?;
        let (phi, _, next) = kalmannet_step(&model.gain, &ssm, &z, &net_phi, &aux, Some(&step.gain))?;
        kf_phi = step.phi;
        kf_cov = step.cov;
        net_phi = phi;
        aux = next;
        for (a, b) in kf_phi.0.iter().zip(&net_phi.0) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

/// A random target pose in the forward sector.
pub fn random_pose<R: Rng>(rng: &mut R) -> TargetState {
    TargetState {
        x_m: rng.random_range(-80.0..80.0),
        y_m: rng.random_range(10.0..100.0),
        phi_rad: rng.random_range(-PI..PI),
        vx_mps: 0.0,
        vy_mps: 0.0,
        phi_rate_rps: 0.0,
        length_m: rng.random_range(1.0..10.0),
        width_m: rng.random_range(1.0..6.0),
    }
}

/// Length of the part of the segment from the origin to `p` that runs
/// through the (slightly shrunk) interior of the target, by Liang-Barsky
/// clipping in the target frame.
fn interior_crossing(s: &TargetState, p: Point) -> f64 {
    let (sn, cs) = s.phi_rad.sin_cos();
    let local = |q: Point| {
        let d = q - s.center();
        (cs * d.x + sn * d.y, -sn * d.x + cs * d.y)
    };
    let (u0, v0) = local(Point::new(0.0, 0.0));
    let (u1, v1) = local(p);
    let (du, dv) = (u1 - u0, v1 - v0);
    let shrink = 1.0 - 1e-9;
    let (hl, hw) = (0.5 * s.length_m * shrink, 0.5 * s.width_m * shrink);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (pk, qk) in [(-du, u0 + hl), (du, hl - u0), (-dv, v0 + hw), (dv, hw - v0)] {
        if pk == 0.0 {
            if qk < 0.0 {
                return 0.0;
            }
        } else {
            let t = qk / pk;
            if pk < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    if t1 > t0 {
        (t1 - t0) * du.hypot(dv)
    } else {
        0.0
    }
}

/// Poses whose visible-edge set differs from the brute-force line-of-sight
/// test at every edge midpoint.
pub fn visibility_disagreements(seed: u64, poses: usize) -> Result<usize> {
    let mut rng = rng_from(seed);
    let mut bad = 0;
    for _ in 0..poses {
        let s = random_pose(&mut rng);
        let c = rect_corners(s.x_m, s.y_m, s.phi_rad, s.length_m, s.width_m);
        let brute: Vec<Point> = (0..4)
            .map(|i| (c[i] + c[(i + 1) % 4]) * 0.5)
            .filter(|m| interior_crossing(&s, *m) < 1e-9)
            .collect();
        let got: Vec<Point> = visible_edges(&s)?.iter().map(|e| e.midpoint()).collect();
        let same = got.len() == brute.len() && got.iter().all(|g| brute.iter().any(|b| (g - b).norm() < 1e-9));
        if !same {
            bad += 1;
        }
    }
    Ok(bad)
}

/// Largest difference between the summed section lengths and the visible
/// contour length, over random poses and section counts.
pub fn partition_arclength_error(seed: u64, trials: usize) -> Result<f64> {
    let mut rng = rng_from(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let s = random_pose(&mut rng);
        let edges = visible_edges(&s)?;
        let k = rng.random_range(1..=40);
        let total: f64 = edges.iter().map(|e| e.length()).sum();
        let sum: f64 = partition_scatterers(&edges, k)?.iter().map(|p| p.eq_length_m).sum();
        worst = worst.max((sum - total).abs());
    }
    Ok(worst)
}

fn inside(poly: &[Point; 4], p: Point) -> bool {
    (0..4).all(|i| {
        let a = poly[i];
        let b = poly[(i + 1) % 4];
        (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x) >= 0.0
    })
}

/// IoU by uniform sampling of `points` points over the joint bounding box.
pub fn iou_monte_carlo<R: Rng>(a: &ThetaVector, b: &ThetaVector, points: usize, rng: &mut R) -> Result<f64> {
    let pa = rect_polygon(a)?;
    let pb = rect_polygon(b)?;
    let all = pa.iter().chain(pb.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in all {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let (mut both, mut either) = (0usize, 0usize);
    for _ in 0..points {
        let p = Point::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
        let (ia, ib) = (inside(&pa, p), inside(&pb, p));
        both += (ia && ib) as usize;
        either += (ia || ib) as usize;
    }
    Ok(if either == 0 { 0.0 } else { both as f64 / either as f64 })
}

/// Random overlapping rectangle pairs; returns the largest gap between
/// [`iou`] and its Monte-Carlo estimate.
pub fn iou_monte_carlo_error(seed: u64, pairs: usize, points: usize) -> Result<f64> {
    let mut rng = rng_from(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let a = ThetaVector::new([
            rng.random_range(-5.0..5.0),
            rng.random_range(40.0..60.0),
            rng.random_range(-PI..PI),
            rng.random_range(1.0..8.0),
            rng.random_range(1.0..5.0),
        ]);
        let b = ThetaVector::new([
            a.x() + rng.random_range(-3.0..3.0),
            a.y() + rng.random_range(-3.0..3.0),
            rng.random_range(-PI..PI),
            rng.random_range(1.0..8.0),
            rng.random_range(1.0..5.0),
        ]);
        let exact = iou(&a, &b)?;
        let mc = iou_monte_carlo(&a, &b, points, &mut rng)?;
        worst = worst.max((exact - mc).abs());
    }
    Ok(worst)
}

/// The antenna count found by scanning `n = 1..=n_max` for the largest
/// array whose half beamwidth still spans the target diagonal.
pub fn scanned_activation(azimuth: f64, range: f64, diag: f64, n_max: usize) -> usize {
    let half_angle = (diag / (2.0 * range)).atan();
    (1..=n_max)
        .rev()
        .find(|&n| HALF_BEAMWIDTH_CONST / (n as f64 * azimuth.cos()) >= half_angle)
        .unwrap_or(1)
}

/// Result of the `(range, diagonal)` grid check of the antenna activation.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationGrid {
    pub points: usize,
    pub mismatches: usize,
    pub coverage_violations: usize,
}

/// Compares [`activated_count`] with [`scanned_activation`] on a
/// `n x n` grid of ranges in `[10, 500]` m and diagonals in `[1, 15]` m, for
/// each azimuth, and checks that the unclipped count covers the diagonal.
pub fn activation_grid(n: usize, azimuths: &[f64], n_tx: usize) -> ActivationGrid {
    let mut g = ActivationGrid {
        points: 0,
        mismatches: 0,
        coverage_violations: 0,
    };
    let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (n - 1).max(1) as f64;
    for &az in azimuths {
        for i in 0..n {
            for j in 0..n {
                let range = step(10.0, 500.0, i);
                let diag = step(1.0, 15.0, j);
                // Split the diagonal into a 3:2 rectangle.
                let (l, w) = (diag * 3.0 / 13f64.sqrt(), diag * 2.0 / 13f64.sqrt());
                g.points += 1;
                if activated_count(az, range, l, w, n_tx) != scanned_activation(az, range, l.hypot(w), n_tx) {
                    g.mismatches += 1;
                }
                let raw = activated_count_unclipped(az, range, l, w);
                if raw >= 1 && raw < u64::MAX && coverage_width(raw as usize, az, range) < l.hypot(w) {
                    g.coverage_violations += 1;
                }
            }
        }
    }
    g
}

/// Whether every received slot of `episodes` echo-only episodes equals the
/// target echo bit for bit.
pub fn echo_only_is_exact(seed: u64, episodes: u64, n_slots: usize) -> Result<bool> {
    let cfg = SystemConfig {
        n_slots,
        ..SystemConfig::default().echo_only()
    };
    for id in 0..episodes {
        let ep = simulate_episode(&cfg, &TrajectoryParams::default(), &PriorNoise::default(), seed, id)?;
        for s in &ep.snapshots {
            let same = s.received.len() == s.et_echo.len()
                && s.received
                    .iter()
                    .zip(&s.et_echo)
                    .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits());
            if !same {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Measured noise power over at least `samples` complex samples, divided by
/// the configured noise power.
pub fn noise_power_ratio(seed: u64, samples: usize) -> Result<f64> {
    let cfg = SystemConfig::default();
    let zero = crate::beam::zeros(cfg.n_rx);
    let mut rng = seed::rng(seed, Stream::Noise, 0);
    let (mut acc, mut n) = (0.0, 0usize);
    while n < samples {
        let y: Vec<Complex64> = synthesize_received(&zero, &zero, &zero, &cfg, &mut rng)?;
        acc += y.iter().map(|v| v.norm_sqr()).sum::<f64>();
        n += y.len();
    }
    Ok(acc / n as f64 / cfg.noise_power_w())
}

/// Mean and variance of the clutter RCS over `episodes` episode scenes.
pub fn clutter_rcs_moments(seed: u64, episodes: u64) -> Result<(Complex64, f64)> {
    let cfg = SystemConfig::default();
    let mut vals = Vec::new();
    for ep in 0..episodes {
        let scene = Scene::new(&cfg, &mut seed::rng(seed, Stream::Clutter, ep))?;
        vals.extend(scene.clutters.iter().map(|c| c.rcs()));
    }
    let n = vals.len() as f64;
    let mean: Complex64 = vals.iter().sum::<Complex64>() / n;
    let var = vals.iter().map(|v| (v - mean).norm_sqr()).sum::<f64>() / (n - 1.0);
    Ok((mean, var))
}
