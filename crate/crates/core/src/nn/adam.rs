use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{block_infos, param_count, Params};
use crate::error::{check_len, Error, Result};

/// Bias-corrected Adam with moments stored flat in parameter declaration order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n_params: usize, lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }

    pub fn for_params<P: Params + ?Sized>(p: &P, lr: f64) -> Self {
        Self::new(param_count(p), lr)
    }

    /// Applies one update. Every gradient is checked for finiteness before
    /// anything is modified.
    pub fn update<P: Params + ?Sized>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        check_len("adam moments", self.m.len(), param_count(params))?;
        check_len("adam gradients", self.m.len(), param_count(grads))?;
        let gblocks = grads.blocks();
        if let Some(bad) = gblocks.iter().position(|b| b.iter().any(|g| !g.is_finite())) {
            let infos = block_infos(grads, "");
            let name = infos.get(bad).map(|i| i.name.as_str()).unwrap_or("?");
            return Err(Error::NonFinite(format!(
                "gradient of parameter block `{name}` at optimizer step {}",
                self.step + 1
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let c1 = 1.0 - libm::pow(self.beta1, t);
        let c2 = 1.0 - libm::pow(self.beta2, t);
        let mut off = 0;
        for (pb, gb) in params.blocks_mut().into_iter().zip(gblocks) {
            for (k, (p, g)) in pb.iter_mut().zip(gb).enumerate() {
                let i = off + k;
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let mh = self.m[i] / c1;
                let vh = self.v[i] / c2;
                *p -= self.lr * mh / (libm::sqrt(vh) + self.eps);
            }
            off += gb.len();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Dense};

    fn layer() -> Dense {
        let mut d = Dense::zeros(2, 2, Activation::Linear);
        d.weight = vec![0.5, -1.0, 2.0, 0.25];
        d.bias = vec![0.1, -0.2];
        d
    }

    #[test]
    fn zero_gradient_is_noop() {
        let mut p = layer();
        let g = Dense::zeros(2, 2, Activation::Linear);
        let mut opt = Adam::for_params(&p, 1e-3);
        for _ in 0..5 {
            opt.update(&mut p, &g).unwrap();
        }
        assert_eq!(p, layer());
    }

    #[test]
    fn first_step_by_hand() {
        let mut p = layer();
        let mut g = Dense::zeros(2, 2, Activation::Linear);
        g.weight = vec![0.3, -2.0, 1e-9, 0.0];
        let mut opt = Adam::for_params(&p, 0.01);
        opt.update(&mut p, &g).unwrap();
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let exp = |w0: f64, g: f64| w0 - 0.01 * g / (g.abs() + 1e-8);
        assert!((p.weight[0] - exp(0.5, 0.3)).abs() < 1e-15);
        assert!((p.weight[1] - exp(-1.0, -2.0)).abs() < 1e-15);
        assert!((p.weight[2] - exp(2.0, 1e-9)).abs() < 1e-15);
        assert_eq!(p.weight[3], 0.25);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        let mut p = layer();
        let mut g = Dense::zeros(2, 2, Activation::Linear);
        g.bias = vec![3.0, -0.01];
        let mut opt = Adam::for_params(&p, 1e-3);
        let mut before = p.bias.clone();
        for _ in 0..2000 {
            before.copy_from_slice(&p.bias);
            opt.update(&mut p, &g).unwrap();
        }
        assert!(((before[0] - p.bias[0]) - 1e-3).abs() < 1e-9);
        assert!(((p.bias[1] - before[1]) - 1e-3).abs() < 1e-6);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut p = layer();
        let mut g = Dense::zeros(2, 2, Activation::Linear);
        g.bias[1] = f64::NAN;
        let mut opt = Adam::for_params(&p, 1e-3);
        let err = opt.update(&mut p, &g).unwrap_err();
        assert!(alloc::format!("{err}").contains("bias"), "{err}");
        assert_eq!(p, layer());
        assert_eq!(opt.step, 0);
    }
}
