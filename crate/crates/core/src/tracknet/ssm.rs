use nalgebra::{SMatrix, SVector};

use super::{PhiVector, ThetaVector};
use crate::error::{Error, Result};

pub type Mat8 = SMatrix<f64, 8, 8>;
pub type Mat5 = SMatrix<f64, 5, 5>;
pub type Gain = SMatrix<f64, 8, 5>;

/// Constant-velocity evolution `F` and measurement `H` for slot interval `T`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpaceModel {
    pub interval_s: f64,
    pub f: Mat8,
    pub h: SMatrix<f64, 5, 8>,
}

impl StateSpaceModel {
    pub fn new(interval_s: f64) -> Self {
        let mut f = Mat8::identity();
        for i in 0..3 {
            f[(i, i + 3)] = interval_s;
        }
        let mut h = SMatrix::<f64, 5, 8>::zeros();
        for (row, col) in [(0, 0), (1, 1), (2, 2), (3, 6), (4, 7)] {
            h[(row, col)] = 1.0;
        }
        StateSpaceModel { interval_s, f, h }
    }

    pub fn predict(&self, phi: &PhiVector) -> PhiVector {
        PhiVector((self.f * SVector::from(phi.0)).into())
    }

    pub fn measure(&self, phi: &PhiVector) -> ThetaVector {
        ThetaVector((self.h * SVector::from(phi.0)).into())
    }

    /// `F Phi + K (theta - H F Phi)`.
    pub fn update_with_gain(&self, phi_prev: &PhiVector, theta: &ThetaVector, gain: &Gain) -> PhiVector {
        let pred = self.f * SVector::from(phi_prev.0);
        let innov = SVector::from(theta.0) - self.h * pred;
        PhiVector((pred + gain * innov).into())
    }
}

// Structured versions of F, F^T, H and H^T on plain slices, used by the
// batched network code.

pub(crate) fn f_apply(t: f64, phi: &[f64], out: &mut [f64]) {
    out.copy_from_slice(&phi[..8]);
    for i in 0..3 {
        out[i] += t * phi[i + 3];
    }
}

pub(crate) fn f_t_add(t: f64, d: &[f64], out: &mut [f64]) {
    for i in 0..8 {
        out[i] += d[i];
    }
    for i in 0..3 {
        out[i + 3] += t * d[i];
    }
}

pub(crate) const H_INDEX: [usize; 5] = [0, 1, 2, 6, 7];

pub(crate) fn h_apply(phi: &[f64], out: &mut [f64]) {
    for (o, &j) in out.iter_mut().zip(&H_INDEX) {
        *o = phi[j];
    }
}

pub(crate) fn h_t_add(d: &[f64], out: &mut [f64]) {
    for (v, &j) in d.iter().zip(&H_INDEX) {
        out[j] += v;
    }
}

/// Result of one classical Kalman filter step.
#[derive(Clone, Debug, PartialEq)]
pub struct KfStep {
    pub phi: PhiVector,
    pub cov: Mat8,
    pub gain: Gain,
}

fn require_pd<const N: usize>(m: &SMatrix<f64, N, N>, what: &'static str) -> Result<()> {
    let sym = (m - m.transpose()).abs().max() <= 1e-12 * m.abs().max().max(1e-300);
    if !sym || m.iter().any(|v| !v.is_finite()) || m.cholesky().is_none() {
        return Err(Error::NotPositiveDefinite(what));
    }
    Ok(())
}

/// Textbook predict/update on `(F, H)` with Joseph-form covariance update.
///
/// `meas_cov` and `est_cov` must be symmetric positive definite;
/// `process_cov` must be symmetric positive semidefinite.
pub fn reference_kf_step(
    phi_prev: &PhiVector,
    theta_meas: &ThetaVector,
    ssm: &StateSpaceModel,
    process_cov: &Mat8,
    meas_cov: &Mat5,
    est_cov: &Mat8,
) -> Result<KfStep> {
    require_pd(meas_cov, "measurement covariance")?;
    require_pd(est_cov, "estimate covariance")?;
    let scale = process_cov.abs().max();
    if (process_cov - process_cov.transpose()).abs().max() > 1e-12 * scale.max(1e-300)
        || process_cov.iter().any(|v| !v.is_finite())
        || process_cov.symmetric_eigenvalues().min() < -1e-12 * scale
    {
        return Err(Error::NotPositiveDefinite("process covariance"));
    }
    let p_pred = ssm.f * est_cov * ssm.f.transpose() + process_cov;
    let s = ssm.h * p_pred * ssm.h.transpose() + meas_cov;
    let chol = s
        .cholesky()
        .ok_or(Error::NotPositiveDefinite("innovation covariance"))?;
    // K = P H^T S^-1, computed as (S^-1 H P)^T since P and S are symmetric.
    let gain: Gain = chol.solve(&(ssm.h * p_pred)).transpose();
    let phi = ssm.update_with_gain(phi_prev, theta_meas, &gain);
    let ikh = Mat8::identity() - gain * ssm.h;
    let cov = ikh * p_pred * ikh.transpose() + gain * meas_cov * gain.transpose();
    Ok(KfStep {
        phi,
        cov: (cov + cov.transpose()) * 0.5,
        gain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_structure() {
        let ssm = StateSpaceModel::new(1.0);
        let phi = PhiVector([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let pred = ssm.predict(&phi);
        assert_eq!(pred.0, [5.0, 7.0, 9.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        assert_eq!(ssm.measure(&pred).0, [5.0, 7.0, 9.0, 7.0, 8.0]);
    }

    #[test]
    fn structured_helpers_match_matrices() {
        let ssm = StateSpaceModel::new(0.7);
        let phi = [0.3, -1.2, 2.5, 0.4, 9.0, -0.1, 3.3, 1.1];
        let mut out = [0.0; 8];
        f_apply(0.7, &phi, &mut out);
        assert_eq!(out, ssm.predict(&PhiVector(phi)).0);
        let mut acc = [0.0; 8];
        f_t_add(0.7, &phi, &mut acc);
        let ft: [f64; 8] = (ssm.f.transpose() * SVector::from(phi)).into();
        assert_eq!(acc, ft);
        let mut th = [0.0; 5];
        h_apply(&phi, &mut th);
        assert_eq!(th, ssm.measure(&PhiVector(phi)).0);
        let mut back = [0.0; 8];
        h_t_add(&th, &mut back);
        let ht: [f64; 8] = (ssm.h.transpose() * SVector::from(th)).into();
        assert_eq!(back, ht);
    }

    #[test]
    fn shape_block_is_static() {
        let ssm = StateSpaceModel::new(2.5);
        let phi = PhiVector([0.1, 50.0, 0.2, 3.0, -1.0, 0.05, 6.0, 4.0]);
        let th = ssm.measure(&ssm.predict(&phi));
        assert_eq!((th.0[3], th.0[4]), (6.0, 4.0));
    }

    #[test]
    fn huge_measurement_noise_ignores_measurement() {
        let ssm = StateSpaceModel::new(1.0);
        let phi = PhiVector([1.0, 40.0, 0.3, 2.0, 1.0, 0.0, 6.0, 4.0]);
        let z = ThetaVector([10.0, 30.0, 1.0, 2.0, 2.0]);
        let q = Mat8::identity() * 0.01;
        let r = Mat5::identity() * 1e12;
        let p = Mat8::identity();
        let step = reference_kf_step(&phi, &z, &ssm, &q, &r, &p).unwrap();
        let pred = SVector::from(ssm.predict(&phi).0);
        assert!((SVector::from(step.phi.0) - pred).norm() < 1e-6 * pred.norm());
    }

    #[test]
    fn rejects_indefinite_inputs() {
        let ssm = StateSpaceModel::new(1.0);
        let phi = PhiVector([0.0, 40.0, 0.0, 0.0, 0.0, 0.0, 4.0, 4.0]);
        let z = ThetaVector([0.0, 40.0, 0.0, 4.0, 4.0]);
        let q = Mat8::identity();
        let p = Mat8::identity();
        let mut r = Mat5::identity();
        r[(2, 2)] = -1.0;
        assert!(matches!(
            reference_kf_step(&phi, &z, &ssm, &q, &r, &p),
            Err(Error::NotPositiveDefinite(_))
        ));
        let mut q_bad = Mat8::identity();
        q_bad[(0, 1)] = 0.5;
        assert!(reference_kf_step(&phi, &z, &ssm, &q_bad, &Mat5::identity(), &p).is_err());
        assert!(reference_kf_step(&phi, &z, &ssm, &Mat8::zeros(), &Mat5::identity(), &p).is_ok());
    }
}
