use alloc::vec;
use alloc::vec::Vec;
#[allow(unused_imports)] // shadowed by inherent methods when std is linked
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{gemm, join, Activation, BlockInfo, KinkSignature, Mat, Params, View};
use crate::error::{check_len, Result};

/// Fully connected layer `act(X W^T + b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// `out_dim x in_dim`, row-major.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Values cached by [`Dense::forward`] for the backward pass.
#[derive(Clone, Debug)]
pub struct DenseTrace {
    pub input: Mat,
    pub pre: Mat,
    pub output: Mat,
}

impl Dense {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Dense {
            in_dim,
            out_dim,
            activation,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform He-style initialization (`+-sqrt(6 / fan_in)` ahead of a relu,
    /// `+-sqrt(3 / fan_in)` otherwise); biases start at zero.
    pub fn init<R: Rng>(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut R) -> Self {
        let gain = if activation == Activation::Relu { 6.0 } else { 3.0 };
        let bound = (gain / in_dim as f64).sqrt();
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        for w in layer.weight.iter_mut() {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }

    pub fn scale_weights(&mut self, factor: f64) {
        for w in self.weight.iter_mut() {
            *w *= factor;
        }
    }

    pub fn forward(&self, x: &Mat) -> Result<DenseTrace> {
        check_len("dense layer input width", self.in_dim, x.cols)?;
        let mut pre = Mat::zeros(x.rows, self.out_dim);
        gemm(
            View::mat(x),
            View::new(&self.weight, self.out_dim, self.in_dim).t(),
            &mut pre.data,
            0.0,
        );
        for i in 0..x.rows {
            for (p, b) in pre.row_mut(i).iter_mut().zip(&self.bias) {
                *p += b;
            }
        }
        let act = self.activation;
        let output = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&z| act.apply(z)).collect());
        Ok(DenseTrace {
            input: x.clone(),
            pre,
            output,
        })
    }

    /// Single-sample forward pass.
    pub fn forward_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let t = self.forward(&Mat::from_vec(1, x.len(), x.to_vec()))?;
        Ok(t.output.data)
    }

    /// Accumulates parameter gradients into `grad` and returns the input gradient.
    pub fn backward(&self, trace: &DenseTrace, dy: &Mat, grad: &mut Dense) -> Mat {
        assert_eq!((dy.rows, dy.cols), (trace.output.rows, self.out_dim));
        let act = self.activation;
        let dz: Vec<f64> = dy
            .data
            .iter()
            .zip(&trace.pre.data)
            .zip(&trace.output.data)
            .map(|((g, &z), &y)| g * act.derivative(z, y))
            .collect();
        let dz_view = View::new(&dz, dy.rows, self.out_dim);
        // dW += dZ^T X
        gemm(dz_view.t(), View::mat(&trace.input), &mut grad.weight, 1.0);
        for i in 0..dy.rows {
            for (gb, d) in grad.bias.iter_mut().zip(&dz[i * self.out_dim..(i + 1) * self.out_dim]) {
                *gb += d;
            }
        }
        let mut dx = Mat::zeros(dy.rows, self.in_dim);
        gemm(
            dz_view,
            View::new(&self.weight, self.out_dim, self.in_dim),
            &mut dx.data,
            0.0,
        );
        dx
    }

    pub fn kinks(&self, trace: &DenseTrace, sig: &mut KinkSignature) {
        if self.activation == Activation::Relu {
            sig.add_bits(&trace.pre.data);
        }
    }
}

impl Params for Dense {
    fn blocks(&self) -> Vec<&[f64]> {
        vec![&self.weight, &self.bias]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.weight, &mut self.bias]
    }

    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>) {
        out.push(BlockInfo {
            name: join(prefix, "weight"),
            shape: vec![self.out_dim, self.in_dim],
        });
        out.push(BlockInfo {
            name: join(prefix, "bias"),
            shape: vec![self.out_dim],
        });
    }
}

/// A stack of dense layers: relu on hidden layers, linear at the end.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub layers: Vec<DenseTrace>,
}

impl MlpTrace {
    pub fn output(&self) -> &Mat {
        &self.layers.last().expect("empty mlp trace").output
    }
}

impl Mlp {
    /// `widths = [in, hidden..., out]`.
    pub fn init<R: Rng>(widths: &[usize], rng: &mut R) -> Self {
        assert!(widths.len() >= 2, "an mlp needs input and output widths");
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n {
                    Activation::Linear
                } else {
                    Activation::Relu
                };
                Dense::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Mlp { layers }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].in_dim];
        w.extend(self.layers.iter().map(|l| l.out_dim));
        w
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, x: &Mat) -> Result<MlpTrace> {
        let mut traces: Vec<DenseTrace> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let t = match traces.last() {
                Some(prev) => layer.forward(&prev.output)?,
                None => layer.forward(x)?,
            };
            traces.push(t);
        }
        Ok(MlpTrace { layers: traces })
    }

    pub fn backward(&self, trace: &MlpTrace, dy: &Mat, grad: &mut Mlp) -> Mat {
        let mut d = dy.clone();
        for ((layer, t), g) in self.layers.iter().zip(&trace.layers).zip(grad.layers.iter_mut()).rev() {
            d = layer.backward(t, &d, g);
        }
        d
    }

    pub fn kinks(&self, trace: &MlpTrace, sig: &mut KinkSignature) {
        for (l, t) in self.layers.iter().zip(&trace.layers) {
            l.kinks(t, sig);
        }
    }
}

impl Params for Mlp {
    fn blocks(&self) -> Vec<&[f64]> {
        self.layers.iter().flat_map(|l| l.blocks()).collect()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.blocks_mut()).collect()
    }

    fn block_info(&self, prefix: &str, out: &mut Vec<BlockInfo>) {
        for (i, l) in self.layers.iter().enumerate() {
            l.block_info(&join(prefix, &alloc::format!("{i}")), out);
        }
    }
}
