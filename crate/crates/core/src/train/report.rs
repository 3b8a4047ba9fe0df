use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::data::Sample;
use super::prepare::{denoise_split, make_batch, PreparedSplit};
use crate::error::{check_len, Result};
use crate::metrics::iou;
use crate::nn::Mat;
use crate::tracknet::{evaluate_sequence, SeqMode, ThetaVector, TrackNetModel};

/// Slots at the end of each sample over which IoU is averaged.
pub const IOU_TAIL: usize = 10;

/// Validation-split comparisons of each network stage against its baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub samples: usize,
    /// Mean `|e_hat - e|^2` per slot.
    pub denoised_mse: f64,
    /// Mean `|y - e|^2` per slot.
    pub raw_mse: f64,
    /// Encoder position RMSE fed the stored previous states.
    pub teacher_pos_rmse: f64,
    /// Position RMSE of `Phi_0` held fixed over the sample.
    pub static_pos_rmse: f64,
    /// Closed-loop filter output position RMSE.
    pub filtered_pos_rmse: f64,
    /// Closed-loop Encoder position RMSE.
    pub instantaneous_pos_rmse: f64,
    pub tail_iou: f64,
    /// IoU of the fixed initial square.
    pub static_tail_iou: f64,
}

impl ValidationReport {
    pub fn denoiser_beats_raw(&self) -> bool {
        self.denoised_mse < self.raw_mse
    }

    pub fn encoder_gain_over_static(&self) -> f64 {
        self.static_pos_rmse / self.teacher_pos_rmse
    }

    pub fn filter_does_not_hurt(&self) -> bool {
        self.filtered_pos_rmse <= self.instantaneous_pos_rmse
    }

    pub fn iou_margin(&self) -> f64 {
        self.tail_iou - self.static_tail_iou
    }
}

fn pos_sq(est: &[f64], truth: &ThetaVector) -> f64 {
    let (dx, dy) = (est[0] - truth.x(), est[1] - truth.y());
    dx * dx + dy * dy
}

/// A degenerate estimate (non-positive size) overlaps nothing.
fn iou_or_zero(a: &ThetaVector, b: &ThetaVector) -> f64 {
    iou(a, b).unwrap_or(0.0)
}

/// Runs every comparison over `samples`; `prepared` must be built from the
/// same samples with the model's normalizer.
pub fn validation_report(
    model: &TrackNetModel,
    samples: &[Sample],
    prepared: &PreparedSplit,
    alpha: f64,
    batch_size: usize,
) -> Result<ValidationReport> {
    check_len("prepared samples", samples.len(), prepared.n_samples)?;
    let ns = prepared.sample_len;
    let slots = (samples.len() * ns) as f64;

    let cache = denoise_split(model, prepared, batch_size)?;
    let rd = prepared.rx_dim;
    let (mut den, mut raw) = (0.0, 0.0);
    for (i, s) in samples.iter().enumerate() {
        for n in 0..ns {
            let k = i * ns + n;
            let est = model.norm.echo_from_features(&cache[k * rd..(k + 1) * rd])?;
            for ((e, y), h) in s.echo_at(n).iter().zip(s.rx_at(n)).zip(&est) {
                den += (h - e).norm_sqr();
                raw += (y - e).norm_sqr();
            }
        }
    }

    let mut acc = [0.0; 4];
    let (mut tail_iou, mut static_iou, mut tail_n) = (0.0, 0.0, 0usize);
    let idx: Vec<usize> = (0..samples.len()).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let batch = make_batch(prepared, chunk, Some(&cache));
        let teacher = evaluate_sequence(model, &batch, SeqMode::Teacher, alpha)?;
        let closed = evaluate_sequence(model, &batch, SeqMode::Closed, alpha)?;
        for (r, &i) in chunk.iter().enumerate() {
            let s = &samples[i];
            let square = s.phi0.project();
            for n in 0..ns {
                let truth = &s.theta[n];
                let row = |m: &Vec<Mat>| -> [f64; 5] { m[n].row(r).try_into().expect("theta row") };
                acc[0] += pos_sq(&row(&teacher.theta_inst), truth);
                acc[1] += pos_sq(&square.0, truth);
                let filtered = ThetaVector(row(&closed.theta));
                acc[2] += pos_sq(&filtered.0, truth);
                acc[3] += pos_sq(&row(&closed.theta_inst), truth);
                if n + IOU_TAIL >= ns {
                    tail_iou += iou_or_zero(&filtered, truth);
                    static_iou += iou_or_zero(&square, truth);
                    tail_n += 1;
                }
            }
        }
    }
    let rmse = |v: f64| libm::sqrt(v / slots);
    Ok(ValidationReport {
        samples: samples.len(),
        denoised_mse: den / slots,
        raw_mse: raw / slots,
        teacher_pos_rmse: rmse(acc[0]),
        static_pos_rmse: rmse(acc[1]),
        filtered_pos_rmse: rmse(acc[2]),
        instantaneous_pos_rmse: rmse(acc[3]),
        tail_iou: tail_iou / tail_n.max(1) as f64,
        static_tail_iou: static_iou / tail_n.max(1) as f64,
    })
}
