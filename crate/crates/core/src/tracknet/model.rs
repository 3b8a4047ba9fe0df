use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::normalize::{phi_norm, theta_from_output, Normalizer, PHI_SCALE, THETA_SCALE};
use super::ssm::{f_apply, f_t_add, h_apply, Gain, StateSpaceModel};
use super::{PhiVector, ThetaVector};
use crate::error::{check_len, Error, Result};
use crate::nn::{
    join, Activation, BlockInfo, Dense, DenseTrace, Gru, GruTrace, KinkSignature, Mat, Mlp, MlpTrace, Params,
};

/// Number of gain-network input features: normalized innovation (5) plus
/// normalized state-update difference (8).
pub const GAIN_FEATURES: usize = 13;

/// Gain the Kalman stage starts from: 0.5 on every measured component and
/// 0.1 /s from position and heading to their rates.
pub fn initial_gain() -> Gain {
    let mut k = Gain::zeros();
    for (row, col) in [(0, 0), (1, 1), (2, 2), (6, 3), (7, 4)] {
        k[(row, col)] = 0.5;
    }
    for (row, col) in [(3, 0), (4, 1), (5, 2)] {
        k[(row, col)] = 0.1;
    }
    k
}

/// Layer widths. Denoiser widths follow from the array sizes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    /// Hidden widths of DNN3; its output width is `encoder_features`.
    pub encoder_hidden: Vec<usize>,
    /// DNN3 output width and GRU2 hidden size.
    pub encoder_features: usize,
    pub dnn4_hidden: Vec<usize>,
    pub dnn4_out: usize,
    pub gain_input: usize,
    pub gain_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::for_arrays(15, 15)
    }
}

impl ModelConfig {
    pub fn for_arrays(n_tx: usize, n_rx: usize) -> Self {
        ModelConfig {
            n_tx,
            n_rx,
            encoder_hidden: vec![128, 64],
            encoder_features: 32,
            dnn4_hidden: vec![64, 32],
            dnn4_out: 16,
            gain_input: 32,
            gain_hidden: 64,
        }
    }

    pub fn input_dim(&self) -> usize {
        2 * self.n_tx + 2 * self.n_rx
    }

    pub fn tx_dim(&self) -> usize {
        2 * self.n_tx
    }

    pub fn echo_dim(&self) -> usize {
        2 * self.n_rx
    }

    pub fn dnn1_widths(&self) -> Vec<usize> {
        let d = self.input_dim();
        vec![d, 4 * d, 2 * d, d]
    }

    pub fn dnn2_widths(&self) -> Vec<usize> {
        let n = self.n_rx;
        vec![self.input_dim(), 8 * n, 4 * n, 2 * n]
    }

    pub fn dnn3_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend_from_slice(&self.encoder_hidden);
        w.push(self.encoder_features);
        w
    }

    pub fn dnn4_widths(&self) -> Vec<usize> {
        let mut w = vec![self.encoder_features + 8];
        w.extend_from_slice(&self.dnn4_hidden);
        w.push(self.dnn4_out);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            self.n_tx,
            self.n_rx,
            self.encoder_features,
            self.dnn4_out,
            self.gain_input,
            self.gain_hidden,
        ];
        if dims.contains(&0) || self.encoder_hidden.contains(&0) || self.dnn4_hidden.contains(&0) {
            return Err(Error::Config(String::from("model widths must all be at least 1")));
        }
        Ok(())
    }
}

/// DNN1 -> GRU1 -> DNN2.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    pub dnn1: Mlp,
    pub gru1: Gru,
    pub dnn2: Mlp,
}

#[derive(Clone, Debug)]
pub struct DenoiseTrace {
    dnn1: MlpTrace,
    gru: GruTrace,
    dnn2: MlpTrace,
}

impl DenoiseTrace {
    /// Standardized echo estimate.
    pub fn output(&self) -> &Mat {
        self.dnn2.output()
    }

    pub fn hidden(&self) -> &Mat {
        &self.gru.h_new
    }
}

impl Denoiser {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let d = cfg.input_dim();
        Denoiser {
            dnn1: Mlp::init(&cfg.dnn1_widths(), rng),
            gru1: Gru::init(d, d, rng),
            dnn2: Mlp::init(&cfg.dnn2_widths(), rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru1.hidden_dim
    }

    /// `tx` and `rx` are standardized features, one sample per row.
    pub fn forward(&self, tx: &Mat, rx: &Mat, h: &Mat) -> Result<DenoiseTrace> {
        let dnn1 = self.dnn1.forward(&tx.hcat(rx))?;
        let gru = self.gru1.forward(dnn1.output(), h)?;
        let dnn2 = self.dnn2.forward(&gru.h_new)?;
        Ok(DenoiseTrace { dnn1, gru, dnn2 })
    }

    /// Returns the gradient with respect to the incoming hidden state.
    pub fn backward(&self, t: &DenoiseTrace, d_out: &Mat, dh_next: &Mat, grad: &mut Denoiser) -> Mat {
        let mut dh = self.dnn2.backward(&t.dnn2, d_out, &mut grad.dnn2);
        dh.add_assign(dh_next);
        let (dx, dh_prev) = self.gru1.backward(&t.gru, &dh, &mut grad.gru1);
        self.dnn1.backward(&t.dnn1, &dx, &mut grad.dnn1);
        dh_prev
    }

    pub fn kinks(&self, t: &DenoiseTrace, sig: &mut KinkSignature) {
        self.dnn1.kinks(&t.dnn1, sig);
        self.dnn2.kinks(&t.dnn2, sig);
    }
}

impl Params for Denoiser {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut b = self.dnn1.blocks();
        b.extend(self.gru1.blocks());
        b.extend(self.dnn2.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.dnn1.blocks_mut();
        b.extend(self.gru1.blocks_mut());
        b.extend(self.dnn2.blocks_mut());
        b
    }

    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>) {
        self.dnn1.block_info(&join(prefix, "dnn1"), out);
        self.gru1.block_info(&join(prefix, "gru1"), out);
        self.dnn2.block_info(&join(prefix, "dnn2"), out);
    }
}

/// DNN3 -> GRU2 -> DNN4 (with the previous filter state appended) -> head.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    pub dnn3: Mlp,
    pub gru2: Gru,
    pub dnn4: Mlp,
    pub head: Dense,
}

#[derive(Clone, Debug)]
pub struct EncodeTrace {
    dnn3: MlpTrace,
    gru: GruTrace,
    dnn4: MlpTrace,
    head: DenseTrace,
    echo_dim: usize,
}

impl EncodeTrace {
    /// Head output before the `Theta` mapping.
    pub fn output(&self) -> &Mat {
        &self.head.output
    }

    pub fn hidden(&self) -> &Mat {
        &self.gru.h_new
    }
}

impl Encoder {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        Encoder {
            dnn3: Mlp::init(&cfg.dnn3_widths(), rng),
            gru2: Gru::init(cfg.encoder_features, cfg.encoder_features, rng),
            dnn4: Mlp::init(&cfg.dnn4_widths(), rng),
            head: Dense::init(cfg.dnn4_out, 5, Activation::Linear, rng),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru2.hidden_dim
    }

    /// `tx`: standardized transmit features; `echo`: standardized echo
    /// estimate; `phi_prev`: normalized previous filter state.
    pub fn forward(&self, tx: &Mat, echo: &Mat, phi_prev: &Mat, h: &Mat) -> Result<EncodeTrace> {
        check_len("encoder state input width", 8, phi_prev.cols)?;
        let dnn3 = self.dnn3.forward(&tx.hcat(echo))?;
        let gru = self.gru2.forward(dnn3.output(), h)?;
        let dnn4 = self.dnn4.forward(&gru.h_new.hcat(phi_prev))?;
        let head = self.head.forward(dnn4.output())?;
        Ok(EncodeTrace {
            dnn3,
            gru,
            dnn4,
            head,
            echo_dim: echo.cols,
        })
    }

    /// Returns `(d echo, d phi_prev, d h_prev)`.
    pub fn backward(&self, t: &EncodeTrace, d_out: &Mat, dh_next: &Mat, grad: &mut Encoder) -> (Mat, Mat, Mat) {
        let d4 = self.head.backward(&t.head, d_out, &mut grad.head);
        let d_in4 = self.dnn4.backward(&t.dnn4, &d4, &mut grad.dnn4);
        let hd = self.gru2.hidden_dim;
        let mut dh = d_in4.cols_slice(0, hd);
        let dphi = d_in4.cols_slice(hd, 8);
        dh.add_assign(dh_next);
        let (dx, dh_prev) = self.gru2.backward(&t.gru, &dh, &mut grad.gru2);
        let d_in3 = self.dnn3.backward(&t.dnn3, &dx, &mut grad.dnn3);
        let d_echo = d_in3.cols_slice(d_in3.cols - t.echo_dim, t.echo_dim);
        (d_echo, dphi, dh_prev)
    }

    pub fn kinks(&self, t: &EncodeTrace, sig: &mut KinkSignature) {
        self.dnn3.kinks(&t.dnn3, sig);
        self.dnn4.kinks(&t.dnn4, sig);
    }
}

impl Params for Encoder {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut b = self.dnn3.blocks();
        b.extend(self.gru2.blocks());
        b.extend(self.dnn4.blocks());
        b.extend(self.head.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.dnn3.blocks_mut();
        b.extend(self.gru2.blocks_mut());
        b.extend(self.dnn4.blocks_mut());
        b.extend(self.head.blocks_mut());
        b
    }

    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>) {
        self.dnn3.block_info(&join(prefix, "dnn3"), out);
        self.gru2.block_info(&join(prefix, "gru2"), out);
        self.dnn4.block_info(&join(prefix, "dnn4"), out);
        self.head.block_info(&join(prefix, "head"), out);
    }
}

/// Linear input head -> GRU3 -> linear output head emitting the 8x5 gain in
/// normalized coordinates, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainNet {
    pub input: Dense,
    pub gru3: Gru,
    pub output: Dense,
}

#[derive(Clone, Debug)]
pub struct GainTrace {
    input: DenseTrace,
    gru: GruTrace,
    output: DenseTrace,
}

impl GainTrace {
    pub fn hidden(&self) -> &Mat {
        &self.gru.h_new
    }
}

/// Scale taking a normalized gain entry to physical units.
fn gain_scale(row: usize, col: usize) -> f64 {
    PHI_SCALE[row] / THETA_SCALE[col]
}

impl GainNet {
    fn init<R: Rng>(cfg: &ModelConfig, rng: &mut R) -> Self {
        let mut output = Dense::init(cfg.gain_hidden, 40, Activation::Linear, rng);
        output.scale_weights(0.1);
        let k0 = initial_gain();
        for i in 0..8 {
            for j in 0..5 {
                output.bias[i * 5 + j] = k0[(i, j)] / gain_scale(i, j);
            }
        }
        GainNet {
            input: Dense::init(GAIN_FEATURES, cfg.gain_input, Activation::Linear, rng),
            gru3: Gru::init(cfg.gain_input, cfg.gain_hidden, rng),
            output,
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru3.hidden_dim
    }

    pub fn forward(&self, feats: &Mat, h: &Mat) -> Result<GainTrace> {
        let input = self.input.forward(feats)?;
        let gru = self.gru3.forward(&input.output, h)?;
        let output = self.output.forward(&gru.h_new)?;
        Ok(GainTrace { input, gru, output })
    }

    /// Returns `(d features, d h_prev)`.
    pub fn backward(&self, t: &GainTrace, d_out: &Mat, dh_next: &Mat, grad: &mut GainNet) -> (Mat, Mat) {
        let mut dh = self.output.backward(&t.output, d_out, &mut grad.output);
        dh.add_assign(dh_next);
        let (dx, dh_prev) = self.gru3.backward(&t.gru, &dh, &mut grad.gru3);
        let dfeat = self.input.backward(&t.input, &dx, &mut grad.input);
        (dfeat, dh_prev)
    }
}

impl Params for GainNet {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut b = self.input.blocks();
        b.extend(self.gru3.blocks());
        b.extend(self.output.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.input.blocks_mut();
        b.extend(self.gru3.blocks_mut());
        b.extend(self.output.blocks_mut());
        b
    }

    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>) {
        self.input.block_info(&join(prefix, "input"), out);
        self.gru3.block_info(&join(prefix, "gru3"), out);
        self.output.block_info(&join(prefix, "output"), out);
    }
}

/// One batched Kalman step driven by the gain network.
#[derive(Clone, Debug)]
pub struct KalmanTrace {
    pub pred: Mat,
    pub delta: Mat,
    gain: GainTrace,
    /// Physical gain, row-major 8x5 per sample.
    pub k: Mat,
    pub phi: Mat,
    pub theta: Mat,
}

impl KalmanTrace {
    pub fn hidden(&self) -> &Mat {
        self.gain.hidden()
    }
}

/// Carried between Kalman steps: GRU3 state and the previous prediction
/// `Phi_{n-1|n-2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KalmanAux {
    pub hidden: Vec<f64>,
    pub prev_prediction: PhiVector,
}

impl KalmanAux {
    /// Bootstrap state: zero hidden, previous prediction equal to `phi0`, so
    /// the first update-difference feature is zero.
    pub fn new(gain_hidden: usize, phi0: &PhiVector) -> Self {
        KalmanAux {
            hidden: vec![0.0; gain_hidden],
            prev_prediction: *phi0,
        }
    }
}

pub(crate) fn kalman_forward(
    net: &GainNet,
    interval_s: f64,
    phi_prev: &Mat,
    aux: &Mat,
    theta_inst: &Mat,
    h: &Mat,
) -> Result<KalmanTrace> {
    let b = phi_prev.rows;
    check_len("kalman state width", 8, phi_prev.cols)?;
    check_len("kalman measurement width", 5, theta_inst.cols)?;
    let mut pred = Mat::zeros(b, 8);
    let mut delta = Mat::zeros(b, 5);
    let mut feats = Mat::zeros(b, GAIN_FEATURES);
    let mut hp = [0.0; 5];
    for s in 0..b {
        f_apply(interval_s, phi_prev.row(s), pred.row_mut(s));
        h_apply(pred.row(s), &mut hp);
        let th = theta_inst.row(s);
        let (pp, ax) = (phi_prev.row(s), aux.row(s));
        let d = delta.row_mut(s);
        for j in 0..5 {
            d[j] = th[j] - hp[j];
        }
        let f = feats.row_mut(s);
        for j in 0..5 {
            f[j] = d[j] / THETA_SCALE[j];
        }
        for i in 0..8 {
            f[5 + i] = (pp[i] - ax[i]) / PHI_SCALE[i];
        }
    }
    let gain = net.forward(&feats, h)?;
    let mut k = Mat::zeros(b, 40);
    let mut phi = pred.clone();
    let mut theta = Mat::zeros(b, 5);
    for s in 0..b {
        let kt = gain.output.output.row(s);
        let ks = k.row_mut(s);
        for i in 0..8 {
            for j in 0..5 {
                ks[i * 5 + j] = kt[i * 5 + j] * gain_scale(i, j);
            }
        }
        let d = delta.row(s);
        let p = phi.row_mut(s);
        for i in 0..8 {
            for j in 0..5 {
                p[i] += ks[i * 5 + j] * d[j];
            }
        }
        h_apply(phi.row(s), theta.row_mut(s));
    }
    Ok(KalmanTrace {
        pred,
        delta,
        gain,
        k,
        phi,
        theta,
    })
}

/// Gradients leaving one Kalman step.
pub(crate) struct KalmanGrads {
    pub theta_inst: Mat,
    pub phi_prev: Mat,
    pub aux: Mat,
    pub hidden: Mat,
}

/// `d_phi`: gradient on the step's output state. `d_pred_next`: gradient on
/// this step's prediction arriving through the next step's `aux` input.
pub(crate) fn kalman_backward(
    net: &GainNet,
    interval_s: f64,
    t: &KalmanTrace,
    d_phi: &Mat,
    d_pred_next: &Mat,
    dh_next: &Mat,
    grad: &mut GainNet,
) -> KalmanGrads {
    let b = d_phi.rows;
    let mut dkt = Mat::zeros(b, 40);
    let mut d_delta = Mat::zeros(b, 5);
    for s in 0..b {
        let (dp, d, ks) = (d_phi.row(s), t.delta.row(s), t.k.row(s));
        let dk = dkt.row_mut(s);
        for i in 0..8 {
            for j in 0..5 {
                dk[i * 5 + j] = dp[i] * d[j] * gain_scale(i, j);
            }
        }
        let dd = d_delta.row_mut(s);
        for j in 0..5 {
            dd[j] = (0..8).map(|i| ks[i * 5 + j] * dp[i]).sum();
        }
    }
    let (dfeat, dh_prev) = net.backward(&t.gain, &dkt, dh_next, grad);
    let mut d_phi_prev = Mat::zeros(b, 8);
    let mut d_aux = Mat::zeros(b, 8);
    let mut dpred = [0.0; 8];
    for s in 0..b {
        let f = dfeat.row(s);
        let dd = d_delta.row_mut(s);
        for j in 0..5 {
            dd[j] += f[j] / THETA_SCALE[j];
        }
        for i in 0..8 {
            let g = f[5 + i] / PHI_SCALE[i];
            d_phi_prev.row_mut(s)[i] = g;
            d_aux.row_mut(s)[i] = -g;
        }
        for i in 0..8 {
            dpred[i] = d_phi.row(s)[i] + d_pred_next.row(s)[i];
        }
        for (v, &j) in dd.iter().zip(&super::ssm::H_INDEX) {
            dpred[j] -= v;
        }
        f_t_add(interval_s, &dpred, d_phi_prev.row_mut(s));
    }
    KalmanGrads {
        theta_inst: d_delta,
        phi_prev: d_phi_prev,
        aux: d_aux,
        hidden: dh_prev,
    }
}

/// Single-sample Kalman step. With `forced_gain` the network is bypassed and
/// its hidden state is carried unchanged.
pub fn kalmannet_step(
    net: &GainNet,
    ssm: &StateSpaceModel,
    theta_inst: &ThetaVector,
    phi_prev: &PhiVector,
    aux: &KalmanAux,
    forced_gain: Option<&Gain>,
) -> Result<(PhiVector, ThetaVector, KalmanAux)> {
    let (phi, next) = match forced_gain {
        Some(k) => {
            let phi = ssm.update_with_gain(phi_prev, theta_inst, k);
            let next = KalmanAux {
                hidden: aux.hidden.clone(),
                prev_prediction: ssm.predict(phi_prev),
            };
            (phi, next)
        }
        None => {
            let t = kalman_forward(
                net,
                ssm.interval_s,
                &Mat::from_vec(1, 8, phi_prev.0.to_vec()),
                &Mat::from_vec(1, 8, aux.prev_prediction.0.to_vec()),
                &Mat::from_vec(1, 5, theta_inst.0.to_vec()),
                &Mat::from_vec(1, aux.hidden.len(), aux.hidden.clone()),
            )?;
            let mut phi = [0.0; 8];
            phi.copy_from_slice(t.phi.row(0));
            let mut pred = [0.0; 8];
            pred.copy_from_slice(t.pred.row(0));
            let next = KalmanAux {
                hidden: t.hidden().data.clone(),
                prev_prediction: PhiVector(pred),
            };
            (PhiVector(phi), next)
        }
    };
    if !phi.is_finite() || next.hidden.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(String::from("kalman state or gain")));
    }
    let theta = phi.project();
    Ok((phi, theta, next))
}

/// The complete tracking network plus the constants it was trained with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackNetModel {
    pub config: ModelConfig,
    pub norm: Normalizer,
    pub interval_s: f64,
    /// Highest curriculum stage completed, 0 when untrained.
    pub completed_stage: u8,
    pub denoiser: Denoiser,
    pub encoder: Encoder,
    pub gain: GainNet,
}

/// Recurrent state of the single-sample tracking step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepState {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub phi: PhiVector,
    pub aux: KalmanAux,
}

/// Outputs of one full network step.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    pub echo: Vec<Complex64>,
    pub theta_inst: ThetaVector,
    pub theta: ThetaVector,
    pub phi: PhiVector,
}

impl TrackNetModel {
    pub fn init<R: Rng>(config: ModelConfig, norm: Normalizer, interval_s: f64, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let denoiser = Denoiser::init(&config, rng);
        let encoder = Encoder::init(&config, rng);
        let gain = GainNet::init(&config, rng);
        Ok(TrackNetModel {
            config,
            norm,
            interval_s,
            completed_stage: 0,
            denoiser,
            encoder,
            gain,
        })
    }

    pub fn ssm(&self) -> StateSpaceModel {
        StateSpaceModel::new(self.interval_s)
    }

    pub fn initial_state(&self, phi0: &PhiVector) -> StepState {
        StepState {
            h1: vec![0.0; self.denoiser.hidden_dim()],
            h2: vec![0.0; self.encoder.hidden_dim()],
            phi: *phi0,
            aux: KalmanAux::new(self.gain.hidden_dim(), phi0),
        }
    }

    fn row(v: &[f64]) -> Mat {
        Mat::from_vec(1, v.len(), v.to_vec())
    }

    fn check_signals(&self, tx: &[Complex64], rx: &[Complex64]) -> Result<()> {
        check_len("transmit vector length", self.config.n_tx, tx.len())?;
        check_len("received vector length", self.config.n_rx, rx.len())
    }

    /// Denoiser step: returns the echo estimate and the advanced hidden state.
    pub fn denoise_step(&self, tx: &[Complex64], rx: &[Complex64], h1: &[f64]) -> Result<(Vec<Complex64>, Vec<f64>)> {
        self.check_signals(tx, rx)?;
        let (mut ft, mut fr) = (vec![0.0; self.config.tx_dim()], vec![0.0; self.config.echo_dim()]);
        self.norm.tx_features(tx, &mut ft);
        self.norm.rx_features(rx, &mut fr);
        let t = self
            .denoiser
            .forward(&Self::row(&ft), &Self::row(&fr), &Self::row(h1))?;
        let echo = self.norm.echo_from_features(&t.output().data)?;
        Ok((echo, t.hidden().data.clone()))
    }

    /// Encoder step from an echo estimate in physical units.
    pub fn encode_step(
        &self,
        tx: &[Complex64],
        echo_est: &[Complex64],
        phi_prev: &PhiVector,
        h2: &[f64],
    ) -> Result<(ThetaVector, Vec<f64>)> {
        self.check_signals(tx, echo_est)?;
        let (mut ft, mut fe) = (vec![0.0; self.config.tx_dim()], vec![0.0; self.config.echo_dim()]);
        self.norm.tx_features(tx, &mut ft);
        self.norm.echo_features(echo_est, &mut fe);
        let mut z = [0.0; 8];
        phi_norm(&phi_prev.0, &mut z);
        let t = self
            .encoder
            .forward(&Self::row(&ft), &Self::row(&fe), &Self::row(&z), &Self::row(h2))?;
        let mut th = [0.0; 5];
        theta_from_output(&t.output().data, &mut th);
        Ok((ThetaVector(th), t.hidden().data.clone()))
    }

    /// Full network step on one slot, advancing `state` in place. The echo
    /// estimate is passed to the Encoder in standardized form, exactly as
    /// during training.
    pub fn step(&self, tx: &[Complex64], rx: &[Complex64], state: &mut StepState) -> Result<StepOutput> {
        self.check_signals(tx, rx)?;
        let (mut ft, mut fr) = (vec![0.0; self.config.tx_dim()], vec![0.0; self.config.echo_dim()]);
        self.norm.tx_features(tx, &mut ft);
        self.norm.rx_features(rx, &mut fr);
        let ft = Self::row(&ft);
        let dt = self.denoiser.forward(&ft, &Self::row(&fr), &Self::row(&state.h1))?;
        let mut z = [0.0; 8];
        phi_norm(&state.phi.0, &mut z);
        let et = self
            .encoder
            .forward(&ft, dt.output(), &Self::row(&z), &Self::row(&state.h2))?;
        let mut th = [0.0; 5];
        theta_from_output(&et.output().data, &mut th);
        let theta_inst = ThetaVector(th);
        let (phi, theta, aux) = kalmannet_step(&self.gain, &self.ssm(), &theta_inst, &state.phi, &state.aux, None)?;
        let echo = self.norm.echo_from_features(&dt.output().data)?;
        if !theta_inst.is_finite() || echo.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite(String::from("network output")));
        }
        state.h1 = dt.hidden().data.clone();
        state.h2 = et.hidden().data.clone();
        state.phi = phi;
        state.aux = aux;
        Ok(StepOutput {
            echo,
            theta_inst,
            theta,
            phi,
        })
    }
}

impl Params for TrackNetModel {
    fn blocks(&self) -> Vec<&[f64]> {
        let mut b = self.denoiser.blocks();
        b.extend(self.encoder.blocks());
        b.extend(self.gain.blocks());
        b
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        let mut b = self.denoiser.blocks_mut();
        b.extend(self.encoder.blocks_mut());
        b.extend(self.gain.blocks_mut());
        b
    }

    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>) {
        self.denoiser.block_info(&join(prefix, "denoiser"), out);
        self.encoder.block_info(&join(prefix, "encoder"), out);
        self.gain.block_info(&join(prefix, "gain"), out);
    }
}

/// Human-readable summary of the topology, used in checkpoint headers.
pub fn describe(model: &TrackNetModel) -> Vec<String> {
    let c = &model.config;
    vec![
        format!("dnn1 {:?} relu/linear", c.dnn1_widths()),
        format!("gru1 hidden {}", model.denoiser.hidden_dim()),
        format!("dnn2 {:?} relu/linear", c.dnn2_widths()),
        format!("dnn3 {:?} relu/linear", c.dnn3_widths()),
        format!("gru2 hidden {}", model.encoder.hidden_dim()),
        format!("dnn4 {:?} relu/linear", c.dnn4_widths()),
        format!("head {} -> 5 linear", c.dnn4_out),
        format!("gain input {} -> {} linear", GAIN_FEATURES, c.gain_input),
        format!("gru3 hidden {}", c.gain_hidden),
        format!("gain output {} -> 40 linear", c.gain_hidden),
    ]
}
