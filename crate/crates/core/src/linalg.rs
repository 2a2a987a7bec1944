//! Cholesky factorization with the nugget retry policy, plus the Gaussian
//! log-density pieces built on top of it.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

const JITTER_START: f64 = 1e-10;
const JITTER_RETRIES: usize = 3;

pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Cholesky factor of a covariance matrix, possibly after a diagonal nugget.
#[derive(Debug, Clone)]
pub struct Factor {
    chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

impl Factor {
    /// Factors `c`. On failure adds `1e-10 * scale` to the diagonal and retries,
    /// growing the nugget tenfold up to three times.
    pub fn new(c: DMatrix<f64>, scale: f64) -> Result<Self> {
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::NotPositiveDefinite);
        }
        if let Some(chol) = Cholesky::new(c.clone()) {
            return Ok(Factor { chol, jitter: 0.0 });
        }
        let mut jitter = JITTER_START * scale.abs().max(f64::MIN_POSITIVE);
        for _ in 0..JITTER_RETRIES {
            let mut cj = c.clone();
            for i in 0..cj.nrows() {
                cj[(i, i)] += jitter;
            }
            if let Some(chol) = Cholesky::new(cj) {
                return Ok(Factor { chol, jitter });
            }
            jitter *= 10.0;
        }
        Err(Error::NotPositiveDefinite)
    }

    pub fn dim(&self) -> usize {
        self.chol.l_dirty().nrows()
    }

    pub fn log_det(&self) -> f64 {
        let l = self.chol.l_dirty();
        2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(b)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// Lower-triangular factor `L` with `C = L L^T`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// Solves `L v = b` for the lower factor.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut v = b.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut v);
        v
    }
}

/// Negative log-density of `resid ~ N(0, C)` including the `n/2 log 2pi` term.
pub fn gaussian_nll(factor: &Factor, resid: &DVector<f64>) -> f64 {
    let n = resid.len() as f64;
    let v = factor.solve_lower(resid);
    0.5 * factor.log_det() + 0.5 * v.norm_squared() + n * HALF_LN_2PI
}
