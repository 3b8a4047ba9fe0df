//! Losses, datasets and the four-stage training curriculum.

mod data;
mod prepare;
mod report;
mod stage;

use alloc::format;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub use data::{
    build_dataset, compute_normalizer, episodes_for, simulate_episode, slice_episode, Dataset, EpisodeData, PriorNoise,
    Sample, Split,
};
pub use prepare::{denoise_split, make_batch, PreparedSplit};
pub use report::{validation_report, ValidationReport, IOU_TAIL};
pub use stage::{run_stage, EarlyStopper, EpochRecord, Optimizers, StageOptions, StageReport, TrainedModule};

/// Weight of slot `n` (1-based): `1 - e^{-alpha n}`.
pub fn slot_weight(n: usize, alpha: f64) -> f64 {
    1.0 - libm::exp(-alpha * n as f64)
}

/// `(1 / N_s) sum_n (1 - e^{-alpha n}) |target_n - output_n|^2` for one
/// sample.
pub fn weighted_seq_loss(targets: &[Vec<f64>], outputs: &[Vec<f64>], alpha: f64) -> Result<f64> {
    check_len("sequence length", targets.len(), outputs.len())?;
    if targets.is_empty() {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (n, (t, o)) in targets.iter().zip(outputs).enumerate() {
        check_len("slot vector length", t.len(), o.len())?;
        let sq: f64 = t.iter().zip(o).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += slot_weight(n + 1, alpha) * sq;
    }
    Ok(acc / targets.len() as f64)
}

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingConfig {
    /// Forgetting factor of the slot weights.
    pub alpha: f64,
    pub m_train: usize,
    pub m_val: usize,
    pub m_test: usize,
    pub sample_len: usize,
    pub batch_size: usize,
    /// Learning rate of stages 1 and 2.
    pub lr_warmup: f64,
    /// Learning rate of stages 3 and 4.
    pub lr_finetune: f64,
    pub patience: usize,
    /// Hard cap on epochs per stage.
    pub max_epochs: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            alpha: 0.2,
            m_train: 512,
            m_val: 128,
            m_test: 128,
            sample_len: 40,
            batch_size: 64,
            lr_warmup: 1e-3,
            lr_finetune: 1e-4,
            patience: 200,
            max_epochs: 10_000,
        }
    }
}

impl TrainingConfig {
    /// Split sizes of the full-size experiment.
    pub fn full_scale(mut self) -> Self {
        self.m_train = 8192;
        self.m_val = 2048;
        self.m_test = 1024;
        self
    }

    pub fn learning_rate(&self, stage: u8) -> f64 {
        if stage <= 2 {
            self.lr_warmup
        } else {
            self.lr_finetune
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(format!("train.{msg}")));
        if !(self.alpha > 0.0) {
            return bad("alpha must be positive");
        }
        if self.sample_len == 0 || self.batch_size == 0 {
            return bad("sample_len and batch_size must be >= 1");
        }
        if self.patience == 0 || self.max_epochs == 0 {
            return bad("patience and max_epochs must be >= 1");
        }
        if !(self.lr_warmup > 0.0 && self.lr_finetune > 0.0) {
            return bad("learning rates must be positive");
        }
        if self.m_train == 0 || self.m_val == 0 {
            return bad("m_train and m_val must be >= 1");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn loss_examples() {
        let t = vec![vec![1.0, 2.0], vec![3.0, -1.0]];
        assert_eq!(weighted_seq_loss(&t, &t, 0.2).unwrap(), 0.0);
        assert!((slot_weight(5, 0.2) - 0.632_120_558_828_557_7).abs() < 1e-15);
        for n in 1..50 {
            assert!(slot_weight(n + 1, 0.2) > slot_weight(n, 0.2));
        }
        let o = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        let want = ((1.0 - (-0.2f64).exp()) * 1.0 + (1.0 - (-0.4f64).exp()) * 4.0) / 2.0;
        assert!((weighted_seq_loss(&t, &o, 0.2).unwrap() - want).abs() < 1e-15);
        assert!(weighted_seq_loss(&t, &o[..1], 0.2).is_err());
    }

    #[test]
    fn large_alpha_is_plain_mse() {
        let t: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64, 1.0]).collect();
        let o: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 + 0.5, -1.0]).collect();
        let mse = t
            .iter()
            .zip(&o)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>())
            .sum::<f64>()
            / 40.0;
        assert!((weighted_seq_loss(&t, &o, 50.0).unwrap() - mse).abs() < 1e-10);
    }
}
