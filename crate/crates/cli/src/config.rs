//! Run configuration: one flat `section.key = value` file.

use std::fs;
use std::path::Path;

use isac_track_core::config::{SystemConfig, TrajectoryParams};
use isac_track_core::tracknet::ModelConfig;
use isac_track_core::train::{PriorNoise, TrainingConfig};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// Layer widths; the array sizes come from `system.n_tx` and `system.n_rx`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelWidths {
    pub encoder_hidden: Vec<usize>,
    pub encoder_features: usize,
    pub dnn4_hidden: Vec<usize>,
    pub dnn4_out: usize,
    pub gain_input: usize,
    pub gain_hidden: usize,
}

impl Default for ModelWidths {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelWidths {
            encoder_hidden: m.encoder_hidden,
            encoder_features: m.encoder_features,
            dnn4_hidden: m.dnn4_hidden,
            dnn4_out: m.dnn4_out,
            gain_input: m.gain_input,
            gain_hidden: m.gain_hidden,
        }
    }
}

impl ModelWidths {
    pub fn model_config(&self, n_tx: usize, n_rx: usize) -> ModelConfig {
        ModelConfig {
            n_tx,
            n_rx,
            encoder_hidden: self.encoder_hidden.clone(),
            encoder_features: self.encoder_features,
            dnn4_hidden: self.dnn4_hidden.clone(),
            dnn4_out: self.dnn4_out,
            gain_input: self.gain_input,
            gain_hidden: self.gain_hidden,
        }
    }
}

/// Everything a run depends on. Every key has a default.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed; every random stream is derived from it.
    pub seed: u64,
    pub system: SystemConfig,
    pub trajectory: TrajectoryParams,
    pub prior: PriorNoise,
    pub train: TrainingConfig,
    pub model: ModelWidths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            system: SystemConfig::default(),
            trajectory: TrajectoryParams::default(),
            prior: PriorNoise::default(),
            train: TrainingConfig::default(),
            model: ModelWidths::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Usage(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("config: cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Defaults when `path` is `None`.
    pub fn load_or_default(path: Option<&Path>) -> Result<Self, CliError> {
        path.map_or_else(|| Ok(Self::default()), Self::load)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |e: isac_track_core::error::Error| CliError::Usage(format!("config: {e}"));
        self.system.validate().map_err(usage)?;
        self.trajectory.validate().map_err(usage)?;
        self.prior.validate().map_err(usage)?;
        self.train.validate().map_err(usage)?;
        self.model_config().validate().map_err(usage)?;
        // TOML integers are signed 64-bit.
        if self.seed > i64::MAX as u64 {
            return Err(CliError::Usage(format!(
                "config: seed {} exceeds {}",
                self.seed,
                i64::MAX
            )));
        }
        if self.train.sample_len > self.system.n_slots {
            return Err(CliError::Usage(format!(
                "config: train.sample_len {} exceeds system.n_slots {}",
                self.train.sample_len, self.system.n_slots
            )));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.model_config(self.system.n_tx, self.system.n_rx)
    }

    /// Flat `section.key = value` lines, sorted, one per key.
    pub fn to_flat_string(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        let mut lines = Vec::new();
        flatten("", &value, &mut lines);
        lines.sort();
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        fs::write(path, self.to_flat_string())?;
        Ok(())
    }
}

fn flatten(prefix: &str, v: &toml::Value, out: &mut Vec<String>) {
    match v {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let key = if prefix.is_empty() {
                    k.clone()
                } else {
                    format!("{prefix}.{k}")
                };
                flatten(&key, v, out);
            }
        }
        leaf => out.push(format!("{prefix} = {leaf}")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_text_round_trips() {
        let mut cfg = RunConfig::default();
        cfg.seed = 99;
        cfg.system.ref_path_gain = 0.123_456_789_012_345_67;
        cfg.model.encoder_hidden = vec![7, 3];
        let text = cfg.to_flat_string();
        assert!(text.contains("system.n_tx = 15"));
        assert!(text.lines().all(|l| !l.starts_with('[')));
        assert_eq!(RunConfig::parse(&text).unwrap(), cfg);
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        for text in ["system.n_txx = 3", "bogus = 1", "train.alpha = 0.5\nsurprise.key = 2"] {
            assert!(matches!(RunConfig::parse(text), Err(CliError::Usage(_))), "{text}");
        }
        assert!(matches!(
            RunConfig::parse("train.alpha = -1.0"),
            Err(CliError::Usage(_))
        ));
        let cfg = RunConfig::parse("system.n_tx = 4\ntrain.alpha = 0.5").unwrap();
        assert_eq!(cfg.system.n_tx, 4);
        assert_eq!(cfg.model_config().n_tx, 4);
        assert_eq!(cfg.system.n_rx, 15);
    }
}
