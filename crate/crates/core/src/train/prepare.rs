use alloc::vec;
use alloc::vec::Vec;

use super::data::Sample;
use crate::error::{check_len, Error, Result};
use crate::nn::Mat;
use crate::tracknet::{Normalizer, TrackNetModel};

/// A split converted to network features, stored sample-major and flat.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedSplit {
    pub n_samples: usize,
    pub sample_len: usize,
    pub tx_dim: usize,
    pub rx_dim: usize,
    pub tx: Vec<f64>,
    pub rx: Vec<f64>,
    /// Standardized clean echo.
    pub echo: Vec<f64>,
    /// Raw-unit `Theta` targets.
    pub theta: Vec<f64>,
    /// Raw-unit previous-state inputs.
    pub teacher: Vec<f64>,
    pub phi0: Vec<f64>,
}

impl PreparedSplit {
    pub fn new(samples: &[Sample], norm: &Normalizer) -> Result<Self> {
        let first = samples
            .first()
            .ok_or_else(|| Error::Config("cannot prepare an empty split".into()))?;
        let (ns, nt, nr) = (first.len(), first.n_tx, first.n_rx);
        let (td, rd) = (2 * nt, 2 * nr);
        let m = samples.len();
        let mut p = PreparedSplit {
            n_samples: m,
            sample_len: ns,
            tx_dim: td,
            rx_dim: rd,
            tx: vec![0.0; m * ns * td],
            rx: vec![0.0; m * ns * rd],
            echo: vec![0.0; m * ns * rd],
            theta: Vec::with_capacity(m * ns * 5),
            teacher: Vec::with_capacity(m * ns * 8),
            phi0: Vec::with_capacity(m * 8),
        };
        for (i, s) in samples.iter().enumerate() {
            check_len("sample length", ns, s.len())?;
            check_len("sample transmit antennas", nt, s.n_tx)?;
            check_len("sample receive antennas", nr, s.n_rx)?;
            for n in 0..ns {
                let k = i * ns + n;
                norm.tx_features(s.tx_at(n), &mut p.tx[k * td..(k + 1) * td]);
                norm.rx_features(s.rx_at(n), &mut p.rx[k * rd..(k + 1) * rd]);
                norm.echo_features(s.echo_at(n), &mut p.echo[k * rd..(k + 1) * rd]);
                p.theta.extend_from_slice(&s.theta[n].0);
                p.teacher.extend_from_slice(&s.teacher[n].0);
            }
            p.phi0.extend_from_slice(&s.phi0.0);
        }
        Ok(p)
    }

    fn gather(&self, src: &[f64], width: usize, idx: &[usize], n: usize) -> Mat {
        let mut m = Mat::zeros(idx.len(), width);
        for (r, &i) in idx.iter().enumerate() {
            let k = i * self.sample_len + n;
            m.row_mut(r).copy_from_slice(&src[k * width..(k + 1) * width]);
        }
        m
    }
}

/// Slot-major batch of the samples `indices`. `echo_cache` holds Denoiser
/// outputs laid out like [`PreparedSplit::echo`].
pub fn make_batch(p: &PreparedSplit, indices: &[usize], echo_cache: Option<&[f64]>) -> crate::tracknet::SeqBatch {
    let ns = p.sample_len;
    let slots = |src: &[f64], w: usize| (0..ns).map(|n| p.gather(src, w, indices, n)).collect::<Vec<_>>();
    let mut phi0 = Mat::zeros(indices.len(), 8);
    for (r, &i) in indices.iter().enumerate() {
        phi0.row_mut(r).copy_from_slice(&p.phi0[i * 8..(i + 1) * 8]);
    }
    crate::tracknet::SeqBatch {
        tx: slots(&p.tx, p.tx_dim),
        rx: if echo_cache.is_some() {
            Vec::new()
        } else {
            slots(&p.rx, p.rx_dim)
        },
        echo_cached: echo_cache.map(|c| slots(c, p.rx_dim)),
        echo_target: slots(&p.echo, p.rx_dim),
        theta: slots(&p.theta, 5),
        teacher: slots(&p.teacher, 8),
        phi0,
    }
}

/// Runs the Denoiser over a whole split in batches of `batch_size`.
pub fn denoise_split(model: &TrackNetModel, p: &PreparedSplit, batch_size: usize) -> Result<Vec<f64>> {
    let rd = p.rx_dim;
    let mut out = vec![0.0; p.echo.len()];
    let idx: Vec<usize> = (0..p.n_samples).collect();
    for chunk in idx.chunks(batch_size.max(1)) {
        let b = make_batch(p, chunk, None);
        let mut h = Mat::zeros(chunk.len(), model.denoiser.hidden_dim());
        for n in 0..p.sample_len {
            let t = model
                .denoiser
                .forward(&b.tx[n], &b.rx[n], &h)
                .map_err(|e| e.at_slot(n))?;
            for (r, &i) in chunk.iter().enumerate() {
                let k = i * p.sample_len + n;
                out[k * rd..(k + 1) * rd].copy_from_slice(t.output().row(r));
            }
            h = t.hidden().clone();
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("denoiser output".into()));
    }
    Ok(out)
}
