//! Anisotropic squared-exponential covariance and matrix assembly.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::types::KernelParams;

fn check_dim(x: &[f64], kp: &KernelParams) -> Result<()> {
    if x.len() != kp.dim() {
        return Err(Error::DimensionMismatch {
            expected: kp.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

/// Scaled squared distance `sum_d ((x_d - x2_d) / l_d)^2`. No dimension checks.
#[inline]
pub(crate) fn scaled_sq_dist(x: &[f64], x2: &[f64], lengthscales: &[f64]) -> f64 {
    x.iter()
        .zip(x2)
        .zip(lengthscales)
        .map(|((a, b), l)| {
            let t = (a - b) / l;
            t * t
        })
        .sum()
}

#[inline]
pub(crate) fn se_unchecked(x: &[f64], x2: &[f64], kp: &KernelParams) -> f64 {
    kp.signal_variance * (-0.5 * scaled_sq_dist(x, x2, &kp.lengthscales)).exp()
}

/// `sigma_f^2 * exp(-1/2 * sum_d ((x_d - x2_d) / l_d)^2)`.
pub fn se_cov(x: &[f64], x2: &[f64], kp: &KernelParams) -> Result<f64> {
    check_dim(x, kp)?;
    check_dim(x2, kp)?;
    Ok(se_unchecked(x, x2, kp))
}

/// Cross-covariance between two point sets. No noise term.
pub fn cross_cov_matrix<P, Q>(a: &[P], b: &[Q], kp: &KernelParams) -> Result<DMatrix<f64>>
where
    P: AsRef<[f64]>,
    Q: AsRef<[f64]>,
{
    for x in a.iter().map(AsRef::as_ref).chain(b.iter().map(AsRef::as_ref)) {
        check_dim(x, kp)?;
    }
    Ok(DMatrix::from_fn(a.len(), b.len(), |i, j| {
        se_unchecked(a[i].as_ref(), b[j].as_ref(), kp)
    }))
}

/// Covariance of noisy observations at `a`: `K(a, a) + noise_variance * I`.
pub fn cov_matrix<P: AsRef<[f64]>>(a: &[P], kp: &KernelParams) -> Result<DMatrix<f64>> {
    for x in a {
        check_dim(x.as_ref(), kp)?;
    }
    let n = a.len();
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        c[(i, i)] = kp.signal_variance + kp.noise_variance;
        for j in 0..i {
            let v = se_unchecked(a[i].as_ref(), a[j].as_ref(), kp);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Covariance vector between the points of `a` and a single location.
pub fn cov_vector<P: AsRef<[f64]>>(a: &[P], x: &[f64], kp: &KernelParams) -> Result<DVector<f64>> {
    check_dim(x, kp)?;
    for p in a {
        check_dim(p.as_ref(), kp)?;
    }
    Ok(DVector::from_iterator(
        a.len(),
        a.iter().map(|p| se_unchecked(p.as_ref(), x, kp)),
    ))
}
