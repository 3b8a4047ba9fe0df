//! Minimal trainable building blocks with analytic backward passes.
//!
//! Everything works on batches: a [`Mat`] holds one sample per row. Weights
//! are stored row-major as `out x in`, so a layer computes `X W^T + b`.

mod adam;
mod dense;
mod gradcheck;
mod gru;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use dense::{Dense, DenseTrace, Mlp, MlpTrace};
pub use gradcheck::{grad_check, GradCheckOptions, GradCheckReport};
pub use gru::{Gru, GruTrace};

/// Row-major dense matrix; rows index samples of a batch.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "Mat::from_vec: {rows}x{cols} needs {} values",
            rows * cols
        );
        Mat { rows, cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Horizontal concatenation `[self, other]`.
    pub fn hcat(&self, other: &Mat) -> Mat {
        assert_eq!(self.rows, other.rows);
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Mat::from_vec(self.rows, cols, data)
    }

    /// Columns `[start, start + len)` as a new matrix.
    pub fn cols_slice(&self, start: usize, len: usize) -> Mat {
        let mut data = Vec::with_capacity(self.rows * len);
        for i in 0..self.rows {
            data.extend_from_slice(&self.row(i)[start..start + len]);
        }
        Mat::from_vec(self.rows, len, data)
    }

    pub fn add_assign(&mut self, other: &Mat) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Strided read-only view used to feed the GEMM kernel.
#[derive(Clone, Copy)]
pub(crate) struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    pub(crate) fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        Self::strided(data, rows, cols, cols, 1)
    }

    pub(crate) fn strided(data: &'a [f64], rows: usize, cols: usize, rs: usize, cs: usize) -> Self {
        if rows > 0 && cols > 0 {
            assert!(data.len() > (rows - 1) * rs + (cols - 1) * cs, "view out of bounds");
        }
        View {
            data,
            rows,
            cols,
            rs,
            cs,
        }
    }

    pub(crate) fn mat(m: &'a Mat) -> Self {
        Self::new(&m.data, m.rows, m.cols)
    }

    pub(crate) fn t(self) -> Self {
        View {
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }

    /// Columns `[start, start + len)`.
    pub(crate) fn cols(self, start: usize, len: usize) -> Self {
        assert!(start + len <= self.cols);
        View {
            data: &self.data[start * self.cs..],
            cols: len,
            ..self
        }
    }
}

/// `c = beta * c + a * b`, with `c` row-major `a.rows x b.cols`.
pub(crate) fn gemm(a: View<'_>, b: View<'_>, c: &mut [f64], beta: f64) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(c.len(), m * n, "gemm output size");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    // SAFETY: the views were bounds-checked on construction and `c` holds
    // exactly m * n elements with row stride n.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            // `f64::max` would turn NaN into 0 and hide a broken parameter.
            Activation::Relu => {
                if z < 0.0 {
                    0.0
                } else {
                    z
                }
            }
            Activation::Tanh => libm::tanh(z),
            Activation::Linear => z,
        }
    }

    /// Derivative given the pre-activation `z` and output `y`.
    pub fn derivative(self, z: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-z))
}

/// Name and shape of one parameter block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockInfo {
    pub name: String,
    pub shape: Vec<usize>,
}

/// A container of trainable parameter blocks with a fixed declaration order.
///
/// Gradients use the same type as the parameters they belong to.
pub trait Params {
    fn blocks(&self) -> Vec<&[f64]>;
    fn blocks_mut(&mut self) -> Vec<&mut [f64]>;
    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>);
}

pub fn param_count<P: Params + ?Sized>(p: &P) -> usize {
    p.blocks().iter().map(|b| b.len()).sum()
}

pub fn flatten<P: Params + ?Sized>(p: &P) -> Vec<f64> {
    let mut out = Vec::with_capacity(param_count(p));
    for b in p.blocks() {
        out.extend_from_slice(b);
    }
    out
}

/// Overwrites all parameters from a flat slice in declaration order.
pub fn load_flat<P: Params + ?Sized>(p: &mut P, flat: &[f64]) -> crate::Result<()> {
    crate::error::check_len("flat parameter vector", param_count(p), flat.len())?;
    let mut off = 0;
    for b in p.blocks_mut() {
        b.copy_from_slice(&flat[off..off + b.len()]);
        off += b.len();
    }
    Ok(())
}

pub fn fill<P: Params + ?Sized>(p: &mut P, value: f64) {
    for b in p.blocks_mut() {
        b.fill(value);
    }
}

/// A zeroed copy, used as a gradient accumulator.
pub fn zeros_like<P: Params + Clone>(p: &P) -> P {
    let mut g = p.clone();
    fill(&mut g, 0.0);
    g
}

pub fn block_infos<P: Params + ?Sized>(p: &P, prefix: &str) -> Vec<BlockInfo> {
    let mut out = Vec::new();
    p.block_info(prefix, &mut out);
    out
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        String::from(name)
    } else {
        alloc::format!("{prefix}.{name}")
    }
}

/// Accumulates relu activation patterns so finite-difference checks can
/// tell when a perturbation crossed a kink.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct KinkSignature(u64);

impl KinkSignature {
    pub fn new() -> Self {
        KinkSignature(0xcbf2_9ce4_8422_2325)
    }

    pub fn add_bits(&mut self, pre: &[f64]) {
        for (i, z) in pre.iter().enumerate() {
            let bit = (*z > 0.0) as u64;
            self.0 = (self.0 ^ (bit.wrapping_add(i as u64 * 2))).wrapping_mul(0x0100_0000_01b3);
        }
    }

    pub fn value(&self) -> u64 {
        self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_plain_and_transposed() {
        // a = [[1,2],[3,4]], b = [[5,6],[7,8]]
        let a = [1.0, 2.0, 3.0, 4.0];
        let b = [5.0, 6.0, 7.0, 8.0];
        let mut c = [0.0; 4];
        gemm(View::new(&a, 2, 2), View::new(&b, 2, 2), &mut c, 0.0);
        assert_eq!(c, [19.0, 22.0, 43.0, 50.0]);
        gemm(View::new(&a, 2, 2).t(), View::new(&b, 2, 2), &mut c, 0.0);
        assert_eq!(c, [26.0, 30.0, 38.0, 44.0]);
        gemm(View::new(&a, 2, 2), View::new(&b, 2, 2).t(), &mut c, 1.0);
        assert_eq!(c, [26.0 + 17.0, 30.0 + 23.0, 38.0 + 39.0, 44.0 + 53.0]);
    }

    #[test]
    fn column_views() {
        let a = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let v = View::new(&a, 2, 3).cols(1, 2);
        let id = [1.0, 0.0, 0.0, 1.0];
        let mut c = [0.0; 4];
        gemm(v, View::new(&id, 2, 2), &mut c, 0.0);
        assert_eq!(c, [2.0, 3.0, 5.0, 6.0]);
    }
}
