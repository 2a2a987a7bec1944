//! Domain types shared by every module.
//!
//! All of these are immutable once built, so they can be shared freely across
//! prediction workers.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training corpus: `N` points in `R^p` with one noisy scalar response each.
///
/// Inputs are stored row-major in a flat buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    inputs: Vec<f64>,
    responses: Vec<f64>,
    dim: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, responses: Vec<f64>) -> Result<Self> {
        let dim = inputs.first().map(Vec::len).ok_or(Error::EmptyDataset)?;
        if inputs.len() != responses.len() {
            return Err(Error::DimensionMismatch {
                expected: inputs.len(),
                found: responses.len(),
            });
        }
        let mut flat = Vec::with_capacity(inputs.len() * dim);
        for row in &inputs {
            if row.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            flat.extend_from_slice(row);
        }
        Self::from_flat(flat, responses, dim)
    }

    pub fn from_flat(inputs: Vec<f64>, responses: Vec<f64>, dim: usize) -> Result<Self> {
        let d = Dataset {
            inputs,
            responses,
            dim,
        };
        validate_dataset(&d)?;
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn response(&self, i: usize) -> f64 {
        self.responses[i]
    }

    pub fn responses(&self) -> &[f64] {
        &self.responses
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> {
        self.inputs.chunks_exact(self.dim.max(1))
    }
}

/// Checks the dataset invariants: consistent shapes, at least one row, finite values.
pub fn validate_dataset(d: &Dataset) -> Result<()> {
    if d.responses.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if d.dim == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            found: 0,
        });
    }
    if d.inputs.len() != d.responses.len() * d.dim {
        return Err(Error::DimensionMismatch {
            expected: d.responses.len() * d.dim,
            found: d.inputs.len(),
        });
    }
    if d.inputs.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("inputs"));
    }
    if d.responses.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("responses"));
    }
    Ok(())
}

/// The `k` nearest training points to a test location, nearest first.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighborhood {
    pub center: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Neighborhood {
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn responses(&self, d: &Dataset) -> Vec<f64> {
        self.indices.iter().map(|&i| d.response(i)).collect()
    }

    pub fn points<'a>(&'a self, d: &'a Dataset) -> Vec<&'a [f64]> {
        self.indices.iter().map(|&i| d.point(i)).collect()
    }

    pub(crate) fn check(&self, d: &Dataset) -> Result<()> {
        if self.center.len() != d.dim() {
            return Err(Error::DimensionMismatch {
                expected: d.dim(),
                found: self.center.len(),
            });
        }
        if self.indices.is_empty() || self.indices.len() > d.len() {
            return Err(Error::KOutOfRange {
                k: self.indices.len(),
                n: d.len(),
            });
        }
        if let Some(&bad) = self.indices.iter().find(|&&i| i >= d.len()) {
            return Err(Error::InvalidParameter(format!(
                "neighbor index {bad} out of bounds"
            )));
        }
        Ok(())
    }
}

/// Parameters of one stationary GP component: squared-exponential kernel,
/// observation noise and constant mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
    pub mean: f64,
}

impl KernelParams {
    pub fn new(
        signal_variance: f64,
        lengthscales: Vec<f64>,
        noise_variance: f64,
        mean: f64,
    ) -> Result<Self> {
        let kp = KernelParams {
            signal_variance,
            lengthscales,
            noise_variance,
            mean,
        };
        kp.validate()?;
        Ok(kp)
    }

    /// Same lengthscale in every one of `dim` dimensions.
    pub fn isotropic(
        signal_variance: f64,
        lengthscale: f64,
        dim: usize,
        noise_variance: f64,
        mean: f64,
    ) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim], noise_variance, mean)
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.signal_variance.is_finite()
            && self.noise_variance.is_finite()
            && self.mean.is_finite()
            && self.lengthscales.iter().all(|l| l.is_finite());
        if !finite {
            return Err(Error::NonFiniteValue("kernel parameters"));
        }
        if self.signal_variance <= 0.0 {
            return Err(Error::InvalidParameter(
                "signal variance must be positive".into(),
            ));
        }
        if self.lengthscales.is_empty() || self.lengthscales.iter().any(|&l| l <= 0.0) {
            return Err(Error::InvalidParameter(
                "lengthscales must be positive".into(),
            ));
        }
        if self.noise_variance < 0.0 {
            return Err(Error::InvalidParameter(
                "noise variance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Coefficients of the affine boundary `B(x) = beta[0] + sum_d beta[d + 1] * x[d]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub beta: Vec<f64>,
}

impl BoundaryParams {
    pub fn new(beta: Vec<f64>) -> Result<Self> {
        if beta.len() < 2 {
            return Err(Error::InvalidParameter(
                "boundary needs an intercept and at least one slope".into(),
            ));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFiniteValue("boundary coefficients"));
        }
        if beta[1..].iter().all(|&b| b == 0.0) {
            return Err(Error::InvalidParameter(
                "boundary normal direction is zero".into(),
            ));
        }
        Ok(BoundaryParams { beta })
    }

    pub fn dim(&self) -> usize {
        self.beta.len() - 1
    }

    pub fn intercept(&self) -> f64 {
        self.beta[0]
    }

    pub fn normal(&self) -> &[f64] {
        &self.beta[1..]
    }

    pub fn negated(&self) -> BoundaryParams {
        BoundaryParams {
            beta: self.beta.iter().map(|b| -b).collect(),
        }
    }
}

/// Gaussian predictive distribution of the latent function at one location.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub mean: f64,
    pub variance: f64,
}

impl Posterior {
    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn well_formed_dataset_validates() {
        let d = Dataset::new(
            vec![vec![0.0, 0.0], vec![0.5, 0.1], vec![-0.2, 0.3]],
            vec![1.0, 2.0, 3.0],
        );
        assert!(d.is_ok());
        let d = d.unwrap();
        assert_eq!(d.len(), 3);
        assert_eq!(d.dim(), 2);
        assert_eq!(d.point(1), &[0.5, 0.1]);
    }

    #[test]
    fn response_count_mismatch_is_rejected() {
        let err = Dataset::new(
            vec![vec![0.0, 0.0], vec![0.5, 0.1], vec![-0.2, 0.3]],
            vec![1.0, 2.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }

    #[test]
    fn ragged_row_is_rejected() {
        let err = Dataset::new(vec![vec![0.0, 0.0], vec![0.5]], vec![1.0, 2.0]).unwrap_err();
        assert_eq!(
            err,
            Error::DimensionMismatch {
                expected: 2,
                found: 1
            }
        );
    }

    #[test]
    fn nan_response_is_rejected() {
        let err = Dataset::new(
            vec![vec![0.0, 0.0], vec![0.5, 0.1], vec![-0.2, 0.3]],
            vec![1.0, f64::NAN, 3.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue(_)));
    }

    #[test]
    fn empty_dataset_is_rejected() {
        assert_eq!(
            Dataset::new(vec![], vec![]).unwrap_err(),
            Error::EmptyDataset
        );
    }

    #[test]
    fn kernel_params_invariants() {
        assert!(KernelParams::new(1.0, vec![0.1, 0.2], 0.0, 3.0).is_ok());
        assert!(KernelParams::new(0.0, vec![0.1], 0.0, 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![-0.1], 0.0, 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![0.1], -1e-3, 0.0).is_err());
        assert!(KernelParams::new(1.0, vec![f64::INFINITY], 0.0, 0.0).is_err());
    }

    #[test]
    fn boundary_requires_nonzero_normal() {
        assert!(BoundaryParams::new(vec![1.0, 0.0, 0.0]).is_err());
        assert!(BoundaryParams::new(vec![1.0, 0.0, 2.0]).is_ok());
    }
}
