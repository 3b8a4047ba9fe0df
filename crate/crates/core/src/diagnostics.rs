//! Finite-difference gradient checks of the building blocks and of the
//! unrolled tracking network.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;

use crate::error::Result;
use crate::nn::{
    flatten, grad_check, load_flat, Activation, Dense, GradCheckOptions, GradCheckReport, Gru, KinkSignature, Mat,
};
use crate::seed::rng_from;
use crate::tracknet::{forward_sequence, ModelConfig, Normalizer, SeqBatch, SeqMode, TrackNetModel};

fn rand_mat<R: Rng>(rng: &mut R, r: usize, c: usize, scale: f64, offset: &[f64]) -> Mat {
    let mut m = Mat::zeros(r, c);
    for (k, v) in m.data.iter_mut().enumerate() {
        *v = offset.get(k % c).copied().unwrap_or(0.0) + scale * rng.random_range(-1.0..1.0);
    }
    m
}

/// Targets within 0.5 of the outputs keep the loss of order one, so the
/// central differences are not swamped by roundoff.
fn near<R: Rng>(rng: &mut R, out: &Mat) -> Mat {
    let mut t = out.clone();
    for v in &mut t.data {
        *v += rng.random_range(-0.5..0.5);
    }
    t
}

fn sq_loss(out: &Mat, target: &Mat) -> (f64, Mat) {
    let mut d = out.clone();
    let mut loss = 0.0;
    for (g, t) in d.data.iter_mut().zip(&target.data) {
        *g -= t;
        loss += 0.5 * *g * *g;
    }
    (loss, d)
}

/// One dense layer, batch of 3, squared loss.
pub fn dense_grad_check(seed: u64, activation: Activation, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = rng_from(seed);
    let layer = Dense::init(7, 5, activation, &mut rng);
    let x = rand_mat(&mut rng, 3, 7, 1.0, &[]);
    let t0 = layer.forward(&x)?;
    let target = near(&mut rng, &t0.output);
    let mut grad = Dense::zeros(7, 5, activation);
    let (_, d) = sq_loss(&t0.output, &target);
    layer.backward(&t0, &d, &mut grad);
    let mut probe = layer.clone();
    Ok(grad_check(
        &flatten(&layer),
        &flatten(&grad),
        |p| {
            load_flat(&mut probe, p).expect("parameter count");
            let t = probe.forward(&x).expect("shapes");
            let mut sig = KinkSignature::new();
            probe.kinks(&t, &mut sig);
            (sq_loss(&t.output, &target).0, sig.value())
        },
        opts,
    ))
}

fn gru_unroll(cell: &Gru, xs: &[Mat], h0: &Mat) -> Result<Vec<crate::nn::GruTrace>> {
    let mut h = h0.clone();
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        let t = cell.forward(x, &h)?;
        h = t.h_new.clone();
        out.push(t);
    }
    Ok(out)
}

/// A GRU cell unrolled over `steps` steps, loss on every hidden state.
pub fn gru_grad_check(seed: u64, steps: usize, opts: &GradCheckOptions) -> Result<GradCheckReport> {
    let mut rng = rng_from(seed);
    let cell = Gru::init(4, 6, &mut rng);
    let xs: Vec<Mat> = (0..steps).map(|_| rand_mat(&mut rng, 2, 4, 1.0, &[])).collect();
    let h0 = rand_mat(&mut rng, 2, 6, 0.5, &[]);
    let traces = gru_unroll(&cell, &xs, &h0)?;
    let targets: Vec<Mat> = traces.iter().map(|t| near(&mut rng, &t.h_new)).collect();
    let mut grad = Gru::zeros(4, 6);
    let mut dh = Mat::zeros(2, 6);
    for (t, target) in traces.iter().zip(&targets).rev() {
        let (_, mut d) = sq_loss(&t.h_new, target);
        d.add_assign(&dh);
        dh = cell.backward(t, &d, &mut grad).1;
    }
    let mut probe = cell.clone();
    Ok(grad_check(
        &flatten(&cell),
        &flatten(&grad),
        |p| {
            load_flat(&mut probe, p).expect("parameter count");
            let tr = gru_unroll(&probe, &xs, &h0).expect("shapes");
            let loss = tr.iter().zip(&targets).map(|(t, g)| sq_loss(&t.h_new, g).0).sum();
            (loss, 0)
        },
        opts,
    ))
}

/// Reduced widths for exhaustive checks of the whole network.
pub fn small_model_config() -> ModelConfig {
    ModelConfig {
        encoder_hidden: vec![12],
        encoder_features: 6,
        dnn4_hidden: vec![8],
        dnn4_out: 5,
        gain_input: 4,
        gain_hidden: 5,
        ..ModelConfig::for_arrays(3, 2)
    }
}

/// Random standardized-looking inputs for a `b x ns` batch.
pub fn random_batch(cfg: &ModelConfig, seed: u64, b: usize, ns: usize, cached: bool) -> SeqBatch {
    let mut rng = rng_from(seed);
    let th = [0.0, 50.0, 0.0, 5.0, 5.0];
    let ph = [0.0, 50.0, 0.0, 0.5, 0.5, 0.02, 4.0, 4.0];
    let (td, ed) = (cfg.tx_dim(), cfg.echo_dim());
    let mut bt = SeqBatch {
        tx: (0..ns).map(|_| rand_mat(&mut rng, b, td, 1.0, &[])).collect(),
        rx: (0..ns).map(|_| rand_mat(&mut rng, b, ed, 1.0, &[])).collect(),
        echo_cached: None,
        echo_target: (0..ns).map(|_| rand_mat(&mut rng, b, ed, 1.0, &[])).collect(),
        theta: (0..ns).map(|_| rand_mat(&mut rng, b, 5, 0.5, &th)).collect(),
        teacher: (0..ns).map(|_| rand_mat(&mut rng, b, 8, 1.0, &ph)).collect(),
        phi0: rand_mat(&mut rng, b, 8, 1.0, &ph),
    };
    if cached {
        bt.echo_cached = Some((0..ns).map(|_| rand_mat(&mut rng, b, ed, 1.0, &[])).collect());
    }
    bt
}

/// Checks the gradient of the sequence loss in `mode` with respect to every
/// parameter (or every `opts.stride`-th). With `cached` the Denoiser is
/// bypassed by stored echo estimates.
pub fn tracknet_grad_check(
    cfg: &ModelConfig,
    seed: u64,
    mode: SeqMode,
    cached: bool,
    slots: usize,
    opts: &GradCheckOptions,
) -> Result<GradCheckReport> {
    let model = TrackNetModel::init(cfg.clone(), Normalizer::default(), 1.0, &mut rng_from(seed))?;
    let mut bt = random_batch(cfg, seed ^ 0x5eed, 2, slots, cached);
    let out = forward_sequence(&model, &bt, mode, 0.2)?.output;
    let mut rng = rng_from(seed ^ 0xf17);
    match mode {
        SeqMode::Denoise => {
            bt.echo_target = out.echo.iter().map(|e| near(&mut rng, e)).collect();
        }
        SeqMode::Teacher => bt.theta = out.theta_inst.iter().map(|e| near(&mut rng, e)).collect(),
        SeqMode::Closed => bt.theta = out.theta.iter().map(|e| near(&mut rng, e)).collect(),
    }
    let fwd = forward_sequence(&model, &bt, mode, 0.2)?;
    let grads = fwd.backward(&model, &bt, true);
    let mut probe = model.clone();
    Ok(grad_check(
        &flatten(&model),
        &flatten(&grads),
        |p| {
            load_flat(&mut probe, p).expect("parameter count");
            let o = forward_sequence(&probe, &bt, mode, 0.2).expect("forward").output;
            (o.loss, o.kinks)
        },
        opts,
    ))
}
