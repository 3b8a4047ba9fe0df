//! The tracking network: Denoiser, Encoder and the learned-gain Kalman
//! stage, the constant-velocity model they share, a classical Kalman filter
//! used as an oracle, and the closed tracking loop.

mod episode;
mod model;
mod normalize;
mod sequence;
mod ssm;

use serde::{Deserialize, Serialize};

use crate::sim::TargetState;

pub use episode::{track_episode, EpisodeInputs, OracleKf, TrackMode, TrackedSlot};
pub use model::{
    describe, initial_gain, kalmannet_step, DenoiseTrace, Denoiser, EncodeTrace, Encoder, GainNet, GainTrace,
    KalmanAux, ModelConfig, StepOutput, StepState, TrackNetModel, GAIN_FEATURES,
};
pub use normalize::{
    phi_denorm, phi_norm, theta_from_output, theta_to_output, Normalizer, Stat, INITIAL_SIDE_M, PHI_CENTER, PHI_SCALE,
    THETA_CENTER, THETA_SCALE,
};
pub use sequence::{evaluate_sequence, forward_sequence, SeqBatch, SeqForward, SeqGrads, SeqMode, SeqOutput};
pub use ssm::{reference_kf_step, Gain, KfStep, Mat5, Mat8, StateSpaceModel};

/// Measurement-space parameters `[x, y, phi, L, W]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThetaVector(pub [f64; 5]);

/// Filter state `[x, y, phi, vx, vy, phi_rate, L, W]`; `phi` is unwrapped.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PhiVector(pub [f64; 8]);

impl ThetaVector {
    pub fn new(v: [f64; 5]) -> Self {
        ThetaVector(v)
    }

    pub fn from_state(s: &TargetState) -> Self {
        ThetaVector([s.x_m, s.y_m, s.phi_rad, s.length_m, s.width_m])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    pub fn phi(&self) -> f64 {
        self.0[2]
    }
    pub fn length(&self) -> f64 {
        self.0[3]
    }
    pub fn width(&self) -> f64 {
        self.0[4]
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl PhiVector {
    pub fn new(v: [f64; 8]) -> Self {
        PhiVector(v)
    }

    pub fn from_state(s: &TargetState) -> Self {
        PhiVector([
            s.x_m,
            s.y_m,
            s.phi_rad,
            s.vx_mps,
            s.vy_mps,
            s.phi_rate_rps,
            s.length_m,
            s.width_m,
        ])
    }

    pub fn x(&self) -> f64 {
        self.0[0]
    }
    pub fn y(&self) -> f64 {
        self.0[1]
    }
    pub fn phi(&self) -> f64 {
        self.0[2]
    }
    pub fn vx(&self) -> f64 {
        self.0[3]
    }
    pub fn vy(&self) -> f64 {
        self.0[4]
    }
    pub fn phi_rate(&self) -> f64 {
        self.0[5]
    }
    pub fn length(&self) -> f64 {
        self.0[6]
    }
    pub fn width(&self) -> f64 {
        self.0[7]
    }

    /// `H Phi`.
    pub fn project(&self) -> ThetaVector {
        let p = &self.0;
        ThetaVector([p[0], p[1], p[2], p[6], p[7]])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}
