use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, join, sigmoid, BlockInfo, Mat, Params, View};
use crate::error::{check_len, Result};

/// Gated recurrent unit.
///
/// ```text
/// z  = sigmoid(W_z x + U_z h + b_z)
/// r  = sigmoid(W_r x + U_r h + b_r)
/// n  = tanh(W_n x + U_n (r * h) + b_n)
/// h' = (1 - z) * h + z * n
/// ```
///
/// Gate rows are stacked `[z; r; n]` in `w_in` (`3H x I`), `w_hid`
/// (`3H x H`) and `bias` (`3H`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gru {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub w_in: Vec<f64>,
    pub w_hid: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GruTrace {
    x: Mat,
    h: Mat,
    z: Mat,
    r: Mat,
    n: Mat,
    rh: Mat,
    pub h_new: Mat,
}

impl Gru {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        Gru {
            input_dim,
            hidden_dim,
            w_in: vec![0.0; 3 * hidden_dim * input_dim],
            w_hid: vec![0.0; 3 * hidden_dim * hidden_dim],
            bias: vec![0.0; 3 * hidden_dim],
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialization of both weight matrices.
    pub fn init<R: Rng>(input_dim: usize, hidden_dim: usize, rng: &mut R) -> Self {
        let mut g = Self::zeros(input_dim, hidden_dim);
        let bi = 1.0 / (input_dim as f64).sqrt();
        let bh = 1.0 / (hidden_dim as f64).sqrt();
        for w in g.w_in.iter_mut() {
            *w = rng.random_range(-bi..bi);
        }
        for w in g.w_hid.iter_mut() {
            *w = rng.random_range(-bh..bh);
        }
        g
    }

    pub fn zero_state(&self, batch: usize) -> Mat {
        Mat::zeros(batch, self.hidden_dim)
    }

    pub fn forward(&self, x: &Mat, h: &Mat) -> Result<GruTrace> {
        check_len("gru input width", self.input_dim, x.cols)?;
        check_len("gru hidden width", self.hidden_dim, h.cols)?;
        check_len("gru batch", x.rows, h.rows)?;
        let (b, hd) = (x.rows, self.hidden_dim);
        let mut gx = Mat::zeros(b, 3 * hd);
        gemm(
            View::mat(x),
            View::new(&self.w_in, 3 * hd, self.input_dim).t(),
            &mut gx.data,
            0.0,
        );
        let mut gh = Mat::zeros(b, 2 * hd);
        gemm(
            View::mat(h),
            View::new(&self.w_hid[..2 * hd * hd], 2 * hd, hd).t(),
            &mut gh.data,
            0.0,
        );
        let mut z = Mat::zeros(b, hd);
        let mut r = Mat::zeros(b, hd);
        let mut rh = Mat::zeros(b, hd);
        for i in 0..b {
            let gxi = gx.row(i);
            let ghi = gh.row(i);
            let hi = h.row(i);
            for j in 0..hd {
                let zj = sigmoid(gxi[j] + ghi[j] + self.bias[j]);
                let rj = sigmoid(gxi[hd + j] + ghi[hd + j] + self.bias[hd + j]);
                z.data[i * hd + j] = zj;
                r.data[i * hd + j] = rj;
                rh.data[i * hd + j] = rj * hi[j];
            }
        }
        let mut gn = Mat::zeros(b, hd);
        gemm(
            View::mat(&rh),
            View::new(&self.w_hid[2 * hd * hd..], hd, hd).t(),
            &mut gn.data,
            0.0,
        );
        let mut n = Mat::zeros(b, hd);
        let mut h_new = Mat::zeros(b, hd);
        for i in 0..b {
            for j in 0..hd {
                let k = i * hd + j;
                let nj = libm::tanh(gx.data[i * 3 * hd + 2 * hd + j] + gn.data[k] + self.bias[2 * hd + j]);
                n.data[k] = nj;
                let zj = z.data[k];
                h_new.data[k] = (1.0 - zj) * h.data[k] + zj * nj;
            }
        }
        Ok(GruTrace {
            x: x.clone(),
            h: h.clone(),
            z,
            r,
            n,
            rh,
            h_new,
        })
    }

    /// Single-sample step.
    pub fn step(&self, x: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        let t = self.forward(
            &Mat::from_vec(1, x.len(), x.to_vec()),
            &Mat::from_vec(1, h.len(), h.to_vec()),
        )?;
        Ok(t.h_new.data)
    }

    /// Backpropagates `dh_new` through one step. Accumulates parameter
    /// gradients into `grad`; returns `(dx, dh)`.
    pub fn backward(&self, t: &GruTrace, dh_new: &Mat, grad: &mut Gru) -> (Mat, Mat) {
        let (b, hd, id) = (t.x.rows, self.hidden_dim, self.input_dim);
        assert_eq!((dh_new.rows, dh_new.cols), (b, hd));
        let mut da = Mat::zeros(b, 3 * hd);
        let mut dh = Mat::zeros(b, hd);
        let mut dan = Mat::zeros(b, hd);
        for i in 0..b {
            for j in 0..hd {
                let k = i * hd + j;
                let g = dh_new.data[k];
                let (z, n, h) = (t.z.data[k], t.n.data[k], t.h.data[k]);
                let dz = g * (n - h);
                let dn = g * z;
                dh.data[k] = g * (1.0 - z);
                let a_n = dn * (1.0 - n * n);
                dan.data[k] = a_n;
                da.data[i * 3 * hd + 2 * hd + j] = a_n;
                da.data[i * 3 * hd + j] = dz * z * (1.0 - z);
            }
        }
        // d(r*h) = dA_n U_n
        let mut drh = Mat::zeros(b, hd);
        gemm(
            View::mat(&dan),
            View::new(&self.w_hid[2 * hd * hd..], hd, hd),
            &mut drh.data,
            0.0,
        );
        for i in 0..b {
            for j in 0..hd {
                let k = i * hd + j;
                let r = t.r.data[k];
                let dr = drh.data[k] * t.h.data[k];
                dh.data[k] += drh.data[k] * r;
                da.data[i * 3 * hd + hd + j] = dr * r * (1.0 - r);
            }
        }
        let da_all = View::new(&da.data, b, 3 * hd);
        let da_zr = da_all.cols(0, 2 * hd);
        gemm(da_all.t(), View::mat(&t.x), &mut grad.w_in, 1.0);
        gemm(da_zr.t(), View::mat(&t.h), &mut grad.w_hid[..2 * hd * hd], 1.0);
        gemm(
            View::mat(&dan).t(),
            View::mat(&t.rh),
            &mut grad.w_hid[2 * hd * hd..],
            1.0,
        );
        for i in 0..b {
            for (gb, d) in grad.bias.iter_mut().zip(da.row(i)) {
                *gb += d;
            }
        }
        let mut dx = Mat::zeros(b, id);
        gemm(da_all, View::new(&self.w_in, 3 * hd, id), &mut dx.data, 0.0);
        let mut dh_zr = Mat::zeros(b, hd);
        gemm(
            da_zr,
            View::new(&self.w_hid[..2 * hd * hd], 2 * hd, hd),
            &mut dh_zr.data,
            0.0,
        );
        dh.add_assign(&dh_zr);
        (dx, dh)
    }
}

impl Params for Gru {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.w_in, &self.w_hid, &self.bias]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.w_in, &mut self.w_hid, &mut self.bias]
    }

    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>) {
        let h3 = 3 * self.hidden_dim;
        out.push(BlockInfo {
            name: join(prefix, "w_in"),
            shape: vec![h3, self.input_dim],
        });
        out.push(BlockInfo {
            name: join(prefix, "w_hid"),
            shape: vec![h3, self.hidden_dim],
        });
        out.push(BlockInfo {
            name: join(prefix, "bias"),
            shape: vec![h3],
        });
    }
}
