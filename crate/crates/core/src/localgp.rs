//! Conventional local GP: k-nearest-neighbor selection, kriging prediction
//! from the whole neighborhood, and the marginal likelihood used to fit it.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::optimizer::{self, Objective, OptimizerConfig};
use crate::kernel;
use crate::linalg::{self, Factor};
use crate::types::{Dataset, KernelParams, Neighborhood, Posterior};

/// How the constant process mean enters the predictive mean.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeanMode {
    /// `gamma + c^T C^-1 (y - gamma)`: constant-mean kriging.
    #[default]
    Kriging,
    /// `c^T C^-1 (y - gamma)`: prior mean of `f(x*)` taken as zero.
    PaperLiteral,
}

impl MeanMode {
    pub(crate) fn offset(self, gamma: f64) -> f64 {
        match self {
            MeanMode::Kriging => gamma,
            MeanMode::PaperLiteral => 0.0,
        }
    }
}

/// Result of fitting the full-neighborhood GP by maximum likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalFit {
    pub params: KernelParams,
    pub nll: f64,
    pub neighborhood: Neighborhood,
}

/// The `k` nearest training inputs to `x_star`, nearest first; equal
/// distances are ordered by dataset index.
pub fn knn_select(d: &Dataset, x_star: &[f64], k: usize) -> Result<Neighborhood> {
    if k == 0 || k > d.len() {
        return Err(Error::KOutOfRange { k, n: d.len() });
    }
    if x_star.len() != d.dim() {
        return Err(Error::DimensionMismatch {
            expected: d.dim(),
            found: x_star.len(),
        });
    }
    let mut keyed: Vec<(f64, usize)> = d
        .points()
        .enumerate()
        .map(|(i, p)| {
            let sq: f64 = p.iter().zip(x_star).map(|(a, b)| (a - b) * (a - b)).sum();
            (sq, i)
        })
        .collect();
    let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() {
        keyed.select_nth_unstable_by(k - 1, order);
        keyed.truncate(k);
    }
    keyed.sort_unstable_by(order);
    Ok(Neighborhood {
        center: x_star.to_vec(),
        indices: keyed.into_iter().map(|(_, i)| i).collect(),
    })
}

/// Kriging prediction of the latent function at the neighborhood center.
pub fn local_gp_posterior(nb: &Neighborhood, d: &Dataset, kp: &KernelParams) -> Result<Posterior> {
    local_gp_posterior_with(nb, d, kp, MeanMode::Kriging)
}

pub fn local_gp_posterior_with(
    nb: &Neighborhood,
    d: &Dataset,
    kp: &KernelParams,
    mode: MeanMode,
) -> Result<Posterior> {
    nb.check(d)?;
    let pts = nb.points(d);
    let y = DVector::from_vec(nb.responses(d));
    conditional(&pts, &y, &nb.center, kp, mode)
}

/// Gaussian conditioning of `f(center)` on noisy observations `y` at `pts`.
pub(crate) fn conditional(
    pts: &[&[f64]],
    y: &DVector<f64>,
    center: &[f64],
    kp: &KernelParams,
    mode: MeanMode,
) -> Result<Posterior> {
    let c = kernel::cov_matrix(pts, kp)?;
    let cvec = kernel::cov_vector(pts, center, kp)?;
    let factor = Factor::new(c, kp.signal_variance)?;
    let resid = y.add_scalar(-kp.mean);
    let weights = factor.solve(&cvec);
    let mean = mode.offset(kp.mean) + weights.dot(&resid);
    let v = factor.solve_lower(&cvec);
    let variance = kp.signal_variance - v.norm_squared();
    debug_assert!(variance >= -1e-10 * kp.signal_variance.max(1.0));
    Ok(Posterior {
        mean,
        variance: variance.max(0.0),
    })
}

/// Negative log marginal likelihood of the neighborhood responses, including
/// the `n/2 log 2pi` constant.
pub fn local_gp_nll(nb: &Neighborhood, d: &Dataset, kp: &KernelParams) -> Result<f64> {
    nb.check(d)?;
    let pts = nb.points(d);
    let c = kernel::cov_matrix(&pts, kp)?;
    let factor = Factor::new(c, kp.signal_variance)?;
    let resid = DVector::from_vec(nb.responses(d)).add_scalar(-kp.mean);
    Ok(linalg::gaussian_nll(&factor, &resid))
}

/// Neighborhood coordinates and pairwise squared differences per dimension,
/// reused across likelihood evaluations.
#[derive(Debug, Clone)]
pub(crate) struct LocalData {
    pub pts: Vec<Vec<f64>>,
    pub y: DVector<f64>,
    pub center: Vec<f64>,
    pub sqdiff: Vec<DMatrix<f64>>,
}

impl LocalData {
    pub fn new(nb: &Neighborhood, d: &Dataset) -> Result<Self> {
        nb.check(d)?;
        let pts: Vec<Vec<f64>> = nb.indices.iter().map(|&i| d.point(i).to_vec()).collect();
        let n = pts.len();
        let sqdiff = (0..d.dim())
            .map(|k| DMatrix::from_fn(n, n, |i, j| (pts[i][k] - pts[j][k]).powi(2)))
            .collect();
        Ok(LocalData {
            pts,
            y: DVector::from_vec(nb.responses(d)),
            center: nb.center.clone(),
            sqdiff,
        })
    }

    pub fn n(&self) -> usize {
        self.pts.len()
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// Noise-free SE kernel matrix over the neighborhood.
    pub fn kernel_matrix(&self, sv: f64, lengthscales: &[f64]) -> DMatrix<f64> {
        let n = self.n();
        let inv: Vec<f64> = lengthscales.iter().map(|l| 1.0 / (l * l)).collect();
        let mut k = DMatrix::from_element(n, n, sv);
        for i in 0..n {
            for j in 0..i {
                let s: f64 = self
                    .sqdiff
                    .iter()
                    .zip(&inv)
                    .map(|(m, w)| m[(i, j)] * w)
                    .sum();
                let v = sv * (-0.5 * s).exp();
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
        }
        k
    }

    /// Largest distance from the center to a neighbor; 1 if all coincide.
    pub fn radius(&self) -> f64 {
        let r = self
            .pts
            .iter()
            .map(|x| x.iter().zip(&self.center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn response_scale(&self) -> f64 {
        let n = self.n() as f64;
        let mean = self.y.mean();
        let var = self.y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        if var.sqrt() > 1e-12 {
            var.sqrt()
        } else {
            1.0
        }
    }
}

/// `sum_ij a_ij * b_ij`.
#[inline]
pub(crate) fn frob(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Likelihood of one stationary component over the neighborhood in optimizer
/// coordinates `[ln sv, ln l_1..ln l_p, ln noise, gamma / scale]`.
pub(crate) struct LocalObjective<'a> {
    pub data: &'a LocalData,
    pub gamma_scale: f64,
}

impl LocalObjective<'_> {
    pub fn encode(&self, kp: &KernelParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(kp.dim() + 3);
        x.push(kp.signal_variance.ln());
        x.extend(kp.lengthscales.iter().map(|l| l.ln()));
        x.push(noise_floor(kp.noise_variance, kp.signal_variance).ln());
        x.push(kp.mean / self.gamma_scale);
        x
    }

    pub fn decode(&self, x: &[f64]) -> KernelParams {
        let p = self.data.dim();
        KernelParams {
            signal_variance: x[0].exp(),
            lengthscales: x[1..=p].iter().map(|v| v.exp()).collect(),
            noise_variance: x[p + 1].exp(),
            mean: x[p + 2] * self.gamma_scale,
        }
    }

    fn factor(&self, kp: &KernelParams) -> Result<(DMatrix<f64>, Factor)> {
        let k = self.data.kernel_matrix(kp.signal_variance, &kp.lengthscales);
        let mut c = k.clone();
        for i in 0..c.nrows() {
            c[(i, i)] += kp.noise_variance;
        }
        Ok((k, Factor::new(c, kp.signal_variance)?))
    }
}

/// Log-space encoding needs a strictly positive noise level.
pub(crate) fn noise_floor(noise: f64, sv: f64) -> f64 {
    noise.max(1e-10 * sv)
}

impl Objective for LocalObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let kp = self.decode(x);
        let (_, factor) = self.factor(&kp)?;
        let r = self.data.y.add_scalar(-kp.mean);
        Ok(linalg::gaussian_nll(&factor, &r))
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let kp = self.decode(x);
        let p = self.data.dim();
        let (k, factor) = self.factor(&kp)?;
        let r = self.data.y.add_scalar(-kp.mean);
        let value = linalg::gaussian_nll(&factor, &r);
        let alpha = factor.solve(&r);
        let mut q = factor.inverse();
        q.ger(-1.0, &alpha, &alpha, 1.0);

        let mut g = vec![0.0; p + 3];
        g[0] = 0.5 * frob(&q, &k);
        for (dim, sq) in self.data.sqdiff.iter().enumerate() {
            let w = 1.0 / (kp.lengthscales[dim] * kp.lengthscales[dim]);
            let s: f64 = q
                .iter()
                .zip(k.iter())
                .zip(sq.iter())
                .map(|((qv, kv), dv)| qv * kv * dv)
                .sum();
            g[1 + dim] = 0.5 * s * w;
        }
        g[p + 1] = 0.5 * kp.noise_variance * q.trace();
        g[p + 2] = -alpha.sum() * self.gamma_scale;
        Ok((value, g))
    }
}

/// Fits the full local GP by gradient descent on the marginal likelihood,
/// starting from `init`. The mean is a free parameter.
pub fn fit_local_gp(
    nb: &Neighborhood,
    d: &Dataset,
    init: &KernelParams,
    cfg: &OptimizerConfig,
) -> Result<LocalFit> {
    init.validate()?;
    let data = LocalData::new(nb, d)?;
    if init.dim() != data.dim() {
        return Err(Error::DimensionMismatch {
            expected: data.dim(),
            found: init.dim(),
        });
    }
    let obj = LocalObjective {
        data: &data,
        gamma_scale: data.response_scale(),
    };
    let x0 = obj.encode(init);
    let out = optimizer::minimize(&obj, &x0, cfg)?;
    Ok(LocalFit {
        params: obj.decode(&out.x),
        nll: out.value,
        neighborhood: nb.clone(),
    })
}
