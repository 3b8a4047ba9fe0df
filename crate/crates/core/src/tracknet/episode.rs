use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::ssm::{reference_kf_step, Mat5, Mat8, StateSpaceModel};
use super::{PhiVector, ThetaVector, TrackNetModel};
use crate::beam::{draw_symbol, transmit, BeamPlan};
use crate::error::{check_len, Error, Result};
use crate::seed::{self, Stream};
use crate::sim::{Scene, SlotSnapshot, TargetState};

/// Covariances of the classical filter used in oracle mode.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleKf {
    pub process_cov: Mat8,
    pub meas_cov: Mat5,
    pub initial_cov: Mat8,
}

impl OracleKf {
    /// Small isotropic covariances suited to an exact measurement oracle.
    pub fn tight() -> Self {
        OracleKf {
            process_cov: Mat8::identity() * 1e-2,
            meas_cov: Mat5::identity() * 1e-4,
            initial_cov: Mat8::identity(),
        }
    }
}

/// How slot estimates are produced.
#[derive(Clone, Debug, PartialEq)]
pub enum TrackMode {
    /// Denoiser, Encoder and learned-gain filter.
    Network,
    /// The Encoder is replaced by ground truth and the learned filter by the
    /// classical Kalman filter.
    Oracle(OracleKf),
}

/// Everything that defines one tracked episode besides the model.
#[derive(Clone, Copy, Debug)]
pub struct EpisodeInputs<'a> {
    pub scene: &'a Scene,
    /// Ground truth; `truth[0]` is the slot described by `phi0`.
    pub truth: &'a [TargetState],
    pub phi0: PhiVector,
    pub root_seed: u64,
    pub episode: u64,
}

/// One tracked slot of the closed loop.
#[derive(Clone, Debug, PartialEq)]
pub struct TrackedSlot {
    pub slot: usize,
    pub plan: BeamPlan,
    pub snapshot: SlotSnapshot,
    pub theta_inst: ThetaVector,
    pub theta: ThetaVector,
    pub phi: PhiVector,
}

/// `Theta` of the true state with its heading unwrapped next to `reference`.
fn unwrapped_truth(s: &TargetState, reference: f64) -> ThetaVector {
    let mut th = ThetaVector::from_state(s);
    let k = libm::round((reference - th.0[2]) / (2.0 * PI));
    th.0[2] += 2.0 * PI * k;
    th
}

/// Runs the tracking loop for slots `1..truth.len()`: predicted azimuth,
/// antenna activation, beamformer, transmission, reception, estimation.
/// Emits `truth.len() - 1` slots.
pub fn track_episode(
    model: Option<&TrackNetModel>,
    ssm: &StateSpaceModel,
    inputs: EpisodeInputs<'_>,
    mode: &TrackMode,
) -> Result<Vec<TrackedSlot>> {
    let cfg = &inputs.scene.cfg;
    if inputs.truth.is_empty() {
        check_len("episode length", 1, 0)?;
    }
    let net = match (mode, model) {
        (TrackMode::Network, None) => {
            return Err(Error::Prerequisite(String::from(
                "network tracking needs a trained model",
            )))
        }
        (TrackMode::Network, Some(m)) => {
            check_len("model transmit elements", cfg.n_tx, m.config.n_tx)?;
            check_len("model receive elements", cfg.n_rx, m.config.n_rx)?;
            Some(m)
        }
        (TrackMode::Oracle(_), _) => None,
    };
    let mut sym_rng = seed::rng(inputs.root_seed, Stream::Symbols, inputs.episode);
    let mut scat_rng = seed::rng(inputs.root_seed, Stream::Scatterers, inputs.episode);
    let mut noise_rng = seed::rng(inputs.root_seed, Stream::Noise, inputs.episode);
    let mut state = net.map(|m| m.initial_state(&inputs.phi0));
    let mut phi = inputs.phi0;
    let mut cov = match mode {
        TrackMode::Oracle(o) => o.initial_cov,
        TrackMode::Network => Mat8::identity(),
    };
    let p_tx = cfg.tx_power_w();
    let mut out = Vec::with_capacity(inputs.truth.len().saturating_sub(1));
    for n in 1..inputs.truth.len() {
        let at = |e: Error| e.at_slot(n);
        let plan = BeamPlan::from_state(&phi, ssm.interval_s, cfg.n_tx).map_err(at)?;
        let w = plan.beamformer(cfg.n_tx).map_err(at)?;
        let tx = transmit(&w, draw_symbol(&mut sym_rng), p_tx);
        let snapshot = inputs
            .scene
            .observe(&inputs.truth[n], tx, &mut scat_rng, &mut noise_rng)
            .map_err(at)?;
        let (theta_inst, theta, next) = match (mode, net, state.as_mut()) {
            (TrackMode::Network, Some(m), Some(st)) => {
                let o = m.step(&snapshot.tx, &snapshot.received, st).map_err(at)?;
                (o.theta_inst, o.theta, o.phi)
            }
            (TrackMode::Oracle(o), _, _) => {
                let z = unwrapped_truth(&inputs.truth[n], ssm.predict(&phi).phi());
                let step = reference_kf_step(&phi, &z, ssm, &o.process_cov, &o.meas_cov, &cov).map_err(at)?;
                cov = step.cov;
                (z, step.phi.project(), step.phi)
            }
            _ => unreachable!("mode and model checked above"),
        };
        if !next.is_finite() {
            return Err(Error::NonFinite(String::from("filter state")).at_slot(n));
        }
        phi = next;
        out.push(TrackedSlot {
            slot: n,
            plan,
            snapshot,
            theta_inst,
            theta,
            phi,
        });
    }
    Ok(out)
}
