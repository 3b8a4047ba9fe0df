use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::BlockInfo;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the worst relative error.
    pub tolerance: f64,
    /// Denominator floor, so that two near-zero gradients are not compared
    /// relatively. With h = 1e-5 the central difference of an O(1) loss is
    /// only resolved to about 1e-10, so entries below the floor are in
    /// effect checked against an absolute error of `tolerance * abs_floor`.
    pub abs_floor: f64,
    /// Check every `stride`-th parameter only.
    pub stride: usize,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            step: 1e-5,
            tolerance: 1e-4,
            abs_floor: 1e-5,
            stride: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub checked: usize,
    /// Parameters skipped because a perturbation flipped a relu.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: Option<usize>,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GradCheckReport {
    /// Name of the parameter block holding the worst entry.
    pub fn worst_block<'a>(&self, infos: &'a [BlockInfo]) -> Option<&'a str> {
        let mut idx = self.worst_index?;
        for info in infos {
            let n: usize = info.shape.iter().product();
            if idx < n {
                return Some(&info.name);
            }
            idx -= n;
        }
        None
    }
}

/// Compares `analytic` against central differences of `loss` around
/// `params`. `loss` returns the scalar and a relu pattern signature; any
/// perturbation that changes the signature is skipped.
pub fn grad_check<F>(params: &[f64], analytic: &[f64], mut loss: F, opts: &GradCheckOptions) -> GradCheckReport
where
    F: FnMut(&[f64]) -> (f64, u64),
{
    assert_eq!(params.len(), analytic.len(), "grad_check: gradient length");
    let (_, sig0) = loss(params);
    let mut p: Vec<f64> = params.to_vec();
    let mut rep = GradCheckReport {
        checked: 0,
        skipped_kinks: 0,
        max_rel_error: 0.0,
        worst_index: None,
        worst_analytic: 0.0,
        worst_numeric: 0.0,
        tolerance: opts.tolerance,
        passed: true,
    };
    for i in (0..p.len()).step_by(opts.stride.max(1)) {
        let orig = p[i];
        p[i] = orig + opts.step;
        let (lp, sp) = loss(&p);
        p[i] = orig - opts.step;
        let (lm, sm) = loss(&p);
        p[i] = orig;
        if sp != sig0 || sm != sig0 {
            rep.skipped_kinks += 1;
            continue;
        }
        rep.checked += 1;
        let num = (lp - lm) / (2.0 * opts.step);
        let a = analytic[i];
        let denom = a.abs().max(num.abs()).max(opts.abs_floor);
        let rel = (a - num).abs() / denom;
        if !(rel <= rep.max_rel_error) {
            rep.max_rel_error = rel;
            rep.worst_index = Some(i);
            rep.worst_analytic = a;
            rep.worst_numeric = num;
        }
    }
    rep.passed = rep.max_rel_error < opts.tolerance && rep.checked > 0;
    rep
}
