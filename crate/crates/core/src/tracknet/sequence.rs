//! Batched multi-slot forward and backpropagation through time.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::model::{kalman_backward, kalman_forward, DenoiseTrace, EncodeTrace, KalmanTrace};
use super::normalize::{phi_norm, theta_from_output, theta_output_jacobian, PHI_SCALE};
use super::ssm::h_t_add;
use super::TrackNetModel;
use crate::error::{check_len, Error, Result};
use crate::nn::{zeros_like, KinkSignature, Mat};

/// Which part of the network runs and which loss is applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeqMode {
    /// Denoiser only; loss on the standardized echo estimate.
    Denoise,
    /// Encoder fed the stored previous-state input; loss on `Theta^e`.
    Teacher,
    /// Encoder and Kalman stage in closed loop; loss on `H Phi_n`.
    Closed,
}

/// One batch of samples, slot-major: `tx[n]` holds slot `n` of every sample.
#[derive(Clone, Debug, Default)]
pub struct SeqBatch {
    /// Standardized transmit features, `B x 2N_t` per slot.
    pub tx: Vec<Mat>,
    /// Standardized received features, `B x 2N_r`; unused with `echo_cached`.
    pub rx: Vec<Mat>,
    /// Denoiser outputs computed beforehand while the Denoiser is frozen.
    pub echo_cached: Option<Vec<Mat>>,
    /// Standardized clean echo, needed by [`SeqMode::Denoise`].
    pub echo_target: Vec<Mat>,
    /// Ground-truth `Theta`, `B x 5`.
    pub theta: Vec<Mat>,
    /// Previous-state input per slot for [`SeqMode::Teacher`], `B x 8`.
    pub teacher: Vec<Mat>,
    /// Initial state `Phi_0`, `B x 8`.
    pub phi0: Mat,
}

impl SeqBatch {
    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tx.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.phi0.rows
    }
}

struct SlotTrace {
    denoise: Option<DenoiseTrace>,
    echo: Mat,
    encode: Option<EncodeTrace>,
    theta_inst: Mat,
    kalman: Option<KalmanTrace>,
}

/// Per-slot outputs and the batch loss.
#[derive(Clone, Debug)]
pub struct SeqOutput {
    /// `(1 / (B N_s)) sum_b sum_n (1 - e^{-alpha n}) |target - output|^2`.
    pub loss: f64,
    pub echo: Vec<Mat>,
    pub theta_inst: Vec<Mat>,
    pub theta: Vec<Mat>,
    pub phi: Vec<Mat>,
    pub kinks: u64,
}

/// Forward pass with everything needed for [`SeqForward::backward`].
pub struct SeqForward {
    pub output: SeqOutput,
    mode: SeqMode,
    alpha: f64,
    traces: Vec<SlotTrace>,
}

/// Gradient accumulator with the model's own layout.
pub type SeqGrads = TrackNetModel;

fn slot_weight(n: usize, alpha: f64) -> f64 {
    1.0 - libm::exp(-alpha * (n + 1) as f64)
}

fn sq_diff(a: &Mat, b: &Mat) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `scale * (out - target)`.
fn scaled_diff(out: &Mat, target: &Mat, scale: f64) -> Mat {
    let data = out
        .data
        .iter()
        .zip(&target.data)
        .map(|(o, t)| scale * (o - t))
        .collect();
    Mat::from_vec(out.rows, out.cols, data)
}

fn all_finite(m: &Mat) -> bool {
    m.data.iter().all(|v| v.is_finite())
}

fn check_slots(ctx: &'static str, want: usize, got: &[Mat]) -> Result<()> {
    check_len(ctx, want, got.len())
}

pub fn forward_sequence(model: &TrackNetModel, batch: &SeqBatch, mode: SeqMode, alpha: f64) -> Result<SeqForward> {
    let ns = batch.len();
    let b = batch.batch_size();
    if ns == 0 || b == 0 {
        return Err(Error::Config(alloc::string::String::from("empty batch")));
    }
    let denoise = batch.echo_cached.is_none();
    if denoise {
        check_slots("received feature slots", ns, &batch.rx)?;
    } else if mode == SeqMode::Denoise {
        return Err(Error::Config(alloc::string::String::from(
            "denoiser loss needs the denoiser to run",
        )));
    }
    match mode {
        SeqMode::Denoise => check_slots("echo target slots", ns, &batch.echo_target)?,
        SeqMode::Teacher => {
            check_slots("theta slots", ns, &batch.theta)?;
            check_slots("teacher state slots", ns, &batch.teacher)?
        }
        SeqMode::Closed => check_slots("theta slots", ns, &batch.theta)?,
    }
    let c = 1.0 / (b * ns) as f64;
    let mut h1 = Mat::zeros(b, model.denoiser.hidden_dim());
    let mut h2 = Mat::zeros(b, model.encoder.hidden_dim());
    let mut h3 = Mat::zeros(b, model.gain.hidden_dim());
    let mut phi_prev = batch.phi0.clone();
    let mut aux = batch.phi0.clone();
    let mut sig = KinkSignature::new();
    let mut loss = 0.0;
    let mut traces = Vec::with_capacity(ns);
    let mut out = SeqOutput {
        loss: 0.0,
        echo: Vec::with_capacity(ns),
        theta_inst: Vec::new(),
        theta: Vec::new(),
        phi: Vec::new(),
        kinks: 0,
    };
    for n in 0..ns {
        let w = slot_weight(n, alpha) * c;
        let (dtrace, echo) = if denoise {
            let t = model
                .denoiser
                .forward(&batch.tx[n], &batch.rx[n], &h1)
                .map_err(|e| e.at_slot(n))?;
            model.denoiser.kinks(&t, &mut sig);
            h1 = t.hidden().clone();
            let e = t.output().clone();
            (Some(t), e)
        } else {
            (None, batch.echo_cached.as_ref().unwrap()[n].clone())
        };
        if !all_finite(&echo) {
            return Err(Error::NonFinite(alloc::string::String::from("echo estimate")).at_slot(n));
        }
        out.echo.push(echo.clone());
        if mode == SeqMode::Denoise {
            loss += w * sq_diff(&echo, &batch.echo_target[n]);
            traces.push(SlotTrace {
                denoise: dtrace,
                echo,
                encode: None,
                theta_inst: Mat::zeros(0, 0),
                kalman: None,
            });
            continue;
        }
        let phi_in = if mode == SeqMode::Teacher {
            &batch.teacher[n]
        } else {
            &phi_prev
        };
        let mut z = Mat::zeros(b, 8);
        for s in 0..b {
            phi_norm(phi_in.row(s), z.row_mut(s));
        }
        let et = model
            .encoder
            .forward(&batch.tx[n], &echo, &z, &h2)
            .map_err(|e| e.at_slot(n))?;
        model.encoder.kinks(&et, &mut sig);
        h2 = et.hidden().clone();
        let mut theta_inst = Mat::zeros(b, 5);
        for s in 0..b {
            theta_from_output(et.output().row(s), theta_inst.row_mut(s));
        }
        if !all_finite(&theta_inst) {
            return Err(Error::NonFinite(alloc::string::String::from("encoder estimate")).at_slot(n));
        }
        out.theta_inst.push(theta_inst.clone());
        let kalman = if mode == SeqMode::Closed {
            let kt = kalman_forward(&model.gain, model.interval_s, &phi_prev, &aux, &theta_inst, &h3)
                .map_err(|e| e.at_slot(n))?;
            if !all_finite(&kt.phi) || !all_finite(&kt.k) {
                return Err(Error::NonFinite(alloc::string::String::from("kalman gain or state")).at_slot(n));
            }
            loss += w * sq_diff(&kt.theta, &batch.theta[n]);
            h3 = kt.hidden().clone();
            aux = kt.pred.clone();
            phi_prev = kt.phi.clone();
            out.theta.push(kt.theta.clone());
            out.phi.push(kt.phi.clone());
            Some(kt)
        } else {
            loss += w * sq_diff(&theta_inst, &batch.theta[n]);
            None
        };
        traces.push(SlotTrace {
            denoise: dtrace,
            echo,
            encode: Some(et),
            theta_inst,
            kalman,
        });
    }
    out.loss = loss;
    out.kinks = sig.value();
    Ok(SeqForward {
        output: out,
        mode,
        alpha,
        traces,
    })
}

impl SeqForward {
    /// Backpropagation through time over the whole sequence. The Denoiser is
    /// only differentiated when it ran and `denoiser_grads` is set.
    pub fn backward(&self, model: &TrackNetModel, batch: &SeqBatch, denoiser_grads: bool) -> SeqGrads {
        let mut grads = zeros_like(model);
        let ns = self.traces.len();
        let b = batch.batch_size();
        let c = 1.0 / (b * ns) as f64;
        let mut dh1 = Mat::zeros(b, model.denoiser.hidden_dim());
        let mut dh2 = Mat::zeros(b, model.encoder.hidden_dim());
        let mut dh3 = Mat::zeros(b, model.gain.hidden_dim());
        let mut dphi_carry = Mat::zeros(b, 8);
        let mut dpred_next = Mat::zeros(b, 8);
        for n in (0..ns).rev() {
            let tr = &self.traces[n];
            let w2 = 2.0 * slot_weight(n, self.alpha) * c;
            let d_echo = match self.mode {
                SeqMode::Denoise => scaled_diff(&tr.echo, &batch.echo_target[n], w2),
                SeqMode::Teacher | SeqMode::Closed => {
                    let (d_inst, mut dphi_prev) = match &tr.kalman {
                        Some(kt) => {
                            let dtheta = scaled_diff(&kt.theta, &batch.theta[n], w2);
                            let mut dphi = dphi_carry.clone();
                            for s in 0..b {
                                h_t_add(dtheta.row(s), dphi.row_mut(s));
                            }
                            let kg = kalman_backward(
                                &model.gain,
                                model.interval_s,
                                kt,
                                &dphi,
                                &dpred_next,
                                &dh3,
                                &mut grads.gain,
                            );
                            dh3 = kg.hidden;
                            dpred_next = kg.aux;
                            (kg.theta_inst, kg.phi_prev)
                        }
                        None => (scaled_diff(&tr.theta_inst, &batch.theta[n], w2), Mat::zeros(b, 8)),
                    };
                    let et = tr.encode.as_ref().expect("encoder trace");
                    let mut d_out = Mat::zeros(b, 5);
                    let mut jac = [0.0; 5];
                    for s in 0..b {
                        theta_output_jacobian(et.output().row(s), &mut jac);
                        for k in 0..5 {
                            d_out.row_mut(s)[k] = d_inst.row(s)[k] * jac[k];
                        }
                    }
                    let (d_echo, dz, dh2_prev) = model.encoder.backward(et, &d_out, &dh2, &mut grads.encoder);
                    dh2 = dh2_prev;
                    if self.mode == SeqMode::Closed {
                        for s in 0..b {
                            for k in 0..8 {
                                dphi_prev.row_mut(s)[k] += dz.row(s)[k] / PHI_SCALE[k];
                            }
                        }
                        dphi_carry = dphi_prev;
                    }
                    d_echo
                }
            };
            if let (Some(dt), true) = (&tr.denoise, denoiser_grads) {
                dh1 = model.denoiser.backward(dt, &d_echo, &dh1, &mut grads.denoiser);
            }
        }
        grads
    }
}

/// Forward only, for evaluation.
pub fn evaluate_sequence(model: &TrackNetModel, batch: &SeqBatch, mode: SeqMode, alpha: f64) -> Result<SeqOutput> {
    Ok(forward_sequence(model, batch, mode, alpha)?.output)
}
