//! Model checkpoints in the binary container.

use std::path::Path;

use anyhow::Context;
use isac_track_core::nn::{block_infos, flatten, load_flat, param_count};
use isac_track_core::seed::rng_from;
use isac_track_core::tracknet::{
    describe, ModelConfig, Normalizer, TrackNetModel, PHI_CENTER, PHI_SCALE, THETA_CENTER, THETA_SCALE,
};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::container::{self, CHECKPOINT_MAGIC};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Self-describing JSON header of a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub model: ModelConfig,
    pub normalization: Normalizer,
    pub theta_center: [f64; 5],
    pub theta_scale: [f64; 5],
    pub phi_center: [f64; 8],
    pub phi_scale: [f64; 8],
    /// State-space interval T in seconds.
    pub interval_s: f64,
    pub completed_stage: u8,
    pub seed: u64,
    pub activations: String,
    pub topology: Vec<String>,
    /// Parameter blocks in payload order.
    pub blocks: Vec<BlockEntry>,
    pub param_count: usize,
    /// Configuration the model was trained under.
    pub run_config: RunConfig,
}

pub fn header_for(model: &TrackNetModel, cfg: &RunConfig) -> CheckpointHeader {
    CheckpointHeader {
        model: model.config.clone(),
        normalization: model.norm,
        theta_center: THETA_CENTER,
        theta_scale: THETA_SCALE,
        phi_center: PHI_CENTER,
        phi_scale: PHI_SCALE,
        interval_s: model.interval_s,
        completed_stage: model.completed_stage,
        seed: cfg.seed,
        activations: "relu hidden layers, linear last layers; gru gates sigmoid, candidate tanh".into(),
        topology: describe(model),
        blocks: block_infos(model, "")
            .into_iter()
            .map(|b| BlockEntry {
                name: b.name,
                shape: b.shape,
            })
            .collect(),
        param_count: param_count(model),
        run_config: cfg.clone(),
    }
}

pub fn write_checkpoint(path: &Path, model: &TrackNetModel, cfg: &RunConfig) -> anyhow::Result<()> {
    container::write(
        path,
        CHECKPOINT_MAGIC,
        CHECKPOINT_VERSION,
        &header_for(model, cfg),
        &flatten(model),
    )
    .with_context(|| format!("writing checkpoint {}", path.display()))
}

pub fn decode_checkpoint(bytes: &[u8]) -> anyhow::Result<(CheckpointHeader, TrackNetModel)> {
    let (h, payload): (CheckpointHeader, Vec<f64>) = container::decode(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, bytes)?;
    let mut model = TrackNetModel::init(h.model.clone(), h.normalization, h.interval_s, &mut rng_from(0))?;
    let expected = header_for(&model, &h.run_config).blocks;
    if expected != h.blocks {
        anyhow::bail!("checkpoint parameter blocks do not match the model topology");
    }
    load_flat(&mut model, &payload)?;
    model.completed_stage = h.completed_stage;
    Ok((h, model))
}

pub fn read_checkpoint(path: &Path) -> anyhow::Result<(CheckpointHeader, TrackNetModel)> {
    let bytes = std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    decode_checkpoint(&bytes).with_context(|| format!("checkpoint {}", path.display()))
}
