//! Maximum-likelihood fitting of the jump GP.
//!
//! The exact one-sided likelihood is piecewise constant in the boundary
//! coefficients, so fitting works on the tanh-smoothed likelihood: the blended
//! covariance over the whole neighborhood with `J_kappa` weights. The boundary
//! starts from the slope of a local linear fit (normalized to a unit normal)
//! with its offset picked by a grid search; the kernel parameters start from a
//! seeded random draw. Plain gradient descent then refines everything jointly.

pub mod optimizer;

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jumpgp::{
    self, boundary_unchecked, side_score, JumpCandidate, JumpFit, JumpParams,
    DEFAULT_KAPPA,
};
use crate::linalg::{self, Factor};
use crate::localgp::{self, frob, noise_floor, LocalData, MeanMode};
use crate::rng::{rng_from, Rng};
use crate::types::{BoundaryParams, Dataset, KernelParams, Neighborhood};

pub use optimizer::{Objective, OptimizerConfig, Outcome, StopReason};

/// Number of candidate offsets in the boundary line search.
pub const INTERCEPT_GRID: usize = 21;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub optimizer: OptimizerConfig,
    pub kappa: f64,
    pub mean_mode: MeanMode,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            optimizer: OptimizerConfig::default(),
            kappa: DEFAULT_KAPPA,
            mean_mode: MeanMode::Kriging,
        }
    }
}

/// Covariance part of one component's starting point (the mean is set from data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovInit {
    pub signal_variance: f64,
    pub lengthscales: Vec<f64>,
    pub noise_variance: f64,
}

impl CovInit {
    /// Deterministic mid-range start for a neighborhood with response variance `var_y`.
    pub fn midpoint(dim: usize, var_y: f64) -> Self {
        CovInit {
            signal_variance: var_y,
            lengthscales: vec![(0.05f64 * 0.5).sqrt(); dim],
            noise_variance: 0.01 * var_y,
        }
    }

    /// Log-uniform draw: lengthscales in [0.05, 0.5], signal variance in
    /// [0.1, 10] x var_y, noise variance in [1e-4, 1] x var_y.
    pub fn random(dim: usize, var_y: f64, rng: &mut Rng) -> Self {
        let mut log_unif = |lo: f64, hi: f64| rng.random_range(lo.ln()..=hi.ln()).exp();
        let lengthscales = (0..dim).map(|_| log_unif(0.05, 0.5)).collect();
        CovInit {
            signal_variance: log_unif(0.1 * var_y, 10.0 * var_y),
            lengthscales,
            noise_variance: log_unif(1e-4 * var_y, var_y),
        }
    }

    pub fn with_mean(&self, mean: f64) -> KernelParams {
        KernelParams {
            signal_variance: self.signal_variance,
            lengthscales: self.lengthscales.clone(),
            noise_variance: self.noise_variance,
            mean,
        }
    }
}

/// Starting point for the joint optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct InitEstimate {
    pub beta0: BoundaryParams,
    pub theta_star: KernelParams,
    pub theta_o: KernelParams,
    /// Raw local-linear slope (before normalization).
    pub alpha: Vec<f64>,
    pub alpha0: f64,
    /// The slope was numerically zero and the principal input axis was used instead.
    pub degenerate_direction: bool,
    /// `(intercept, smoothed nll)` for every grid candidate.
    pub line_search: Vec<(f64, f64)>,
}

/// Likelihood of the smoothed jump model in optimizer coordinates
/// `[theta_*, theta_o, beta]`, each theta laid out as
/// `[ln sv, ln l_1..ln l_p, ln noise, gamma / gamma_scale]`.
///
/// With `beta_radius = Some(r)` the boundary is held as
/// `[B(center), r * beta_1, .., r * beta_p]`, i.e. relative to the
/// neighborhood center and in units of its radius. Intercept and slope are
/// then close to uncorrelated, which plain gradient descent needs.
pub(crate) struct JumpObjective<'a> {
    pub data: &'a LocalData,
    pub kappa: f64,
    pub gamma_scale: f64,
    pub beta_radius: Option<f64>,
}

struct Assembled {
    ks: DMatrix<f64>,
    ko: DMatrix<f64>,
    m: Vec<f64>,
    t: Vec<f64>,
    tc: f64,
    factor: Factor,
    resid: DVector<f64>,
}

impl<'a> JumpObjective<'a> {
    fn block(&self) -> usize {
        self.data.dim() + 3
    }

    pub fn len(&self) -> usize {
        2 * self.block() + self.data.dim() + 1
    }

    fn encode_kp(&self, kp: &KernelParams, out: &mut Vec<f64>) {
        out.push(kp.signal_variance.ln());
        out.extend(kp.lengthscales.iter().map(|l| l.ln()));
        out.push(noise_floor(kp.noise_variance, kp.signal_variance).ln());
        out.push(kp.mean / self.gamma_scale);
    }

    fn decode_kp(&self, x: &[f64]) -> KernelParams {
        let p = self.data.dim();
        KernelParams {
            signal_variance: x[0].exp(),
            lengthscales: x[1..=p].iter().map(|v| v.exp()).collect(),
            noise_variance: x[p + 1].exp(),
            mean: x[p + 2] * self.gamma_scale,
        }
    }

    /// Objective in natural coordinates, as reported by [`nll_gradient`].
    fn plain(data: &'a LocalData, kappa: f64) -> Self {
        JumpObjective {
            data,
            kappa,
            gamma_scale: 1.0,
            beta_radius: None,
        }
    }

    /// Objective in the rescaled coordinates the optimizer works in.
    fn scaled(data: &'a LocalData, kappa: f64) -> Self {
        JumpObjective {
            data,
            kappa,
            gamma_scale: data.response_scale(),
            beta_radius: Some(data.radius()),
        }
    }

    pub fn encode(&self, params: &JumpParams) -> Vec<f64> {
        let mut x = Vec::with_capacity(self.len());
        self.encode_kp(&params.theta_star, &mut x);
        self.encode_kp(&params.theta_o, &mut x);
        let beta = &params.beta.beta;
        match self.beta_radius {
            None => x.extend_from_slice(beta),
            Some(r) => {
                x.push(boundary_unchecked(beta, &self.data.center));
                x.extend(beta[1..].iter().map(|b| b * r));
            }
        }
        x
    }

    /// Decodes without validating `beta`; a zero normal is harmless inside the objective.
    fn decode_raw(&self, x: &[f64]) -> (KernelParams, KernelParams, Vec<f64>) {
        let b = self.block();
        let u = &x[2 * b..];
        let beta = match self.beta_radius {
            None => u.to_vec(),
            Some(r) => {
                let slope: Vec<f64> = u[1..].iter().map(|v| v / r).collect();
                let at_center: f64 = slope.iter().zip(&self.data.center).map(|(s, c)| s * c).sum();
                std::iter::once(u[0] - at_center).chain(slope).collect()
            }
        };
        (self.decode_kp(&x[..b]), self.decode_kp(&x[b..2 * b]), beta)
    }

    pub fn decode(&self, x: &[f64]) -> Result<JumpParams> {
        let (theta_star, theta_o, beta) = self.decode_raw(x);
        Ok(JumpParams {
            theta_star,
            theta_o,
            beta: BoundaryParams::new(beta)?,
            kappa: self.kappa,
        })
    }

    fn assemble(&self, ts: &KernelParams, to: &KernelParams, beta: &[f64]) -> Result<Assembled> {
        let data = self.data;
        let n = data.n();
        let ks = data.kernel_matrix(ts.signal_variance, &ts.lengthscales);
        let ko = data.kernel_matrix(to.signal_variance, &to.lengthscales);
        let tc = side_score(self.kappa, boundary_unchecked(beta, &data.center));
        let t: Vec<f64> = data
            .pts
            .iter()
            .map(|x| side_score(self.kappa, boundary_unchecked(beta, x)))
            .collect();
        let m: Vec<f64> = t.iter().map(|ti| 0.5 * (1.0 + ti * tc)).collect();
        let mut c = DMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                c[(i, j)] = m[i] * m[j] * ks[(i, j)] + (1.0 - m[i]) * (1.0 - m[j]) * ko[(i, j)];
            }
            c[(j, j)] += m[j] * ts.noise_variance + (1.0 - m[j]) * to.noise_variance;
        }
        let resid = DVector::from_fn(n, |i, _| {
            data.y[i] - (m[i] * ts.mean + (1.0 - m[i]) * to.mean)
        });
        let factor = Factor::new(c, ts.signal_variance.max(to.signal_variance))?;
        Ok(Assembled {
            ks,
            ko,
            m,
            t,
            tc,
            factor,
            resid,
        })
    }
}

impl Objective for JumpObjective<'_> {
    fn value(&self, x: &[f64]) -> Result<f64> {
        let (ts, to, beta) = self.decode_raw(x);
        let a = self.assemble(&ts, &to, &beta)?;
        Ok(linalg::gaussian_nll(&a.factor, &a.resid))
    }

    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let (ts, to, beta) = self.decode_raw(x);
        let a = self.assemble(&ts, &to, &beta)?;
        let value = linalg::gaussian_nll(&a.factor, &a.resid);
        let data = self.data;
        let n = data.n();
        let p = data.dim();
        let alpha = a.factor.solve(&a.resid);
        let mut q = a.factor.inverse();
        q.ger(-1.0, &alpha, &alpha, 1.0);

        let mut g = vec![0.0; self.len()];
        let b = self.block();
        for (side, (kp, kmat)) in [(&ts, &a.ks), (&to, &a.ko)].into_iter().enumerate() {
            let w: Vec<f64> = if side == 0 {
                a.m.clone()
            } else {
                a.m.iter().map(|v| 1.0 - v).collect()
            };
            // Weighted component covariance w_i w_j K_ij.
            let aw = DMatrix::from_fn(n, n, |i, j| w[i] * w[j] * kmat[(i, j)]);
            let off = side * b;
            g[off] = 0.5 * frob(&q, &aw);
            for (dim, sq) in data.sqdiff.iter().enumerate() {
                let l = kp.lengthscales[dim];
                let s: f64 = q
                    .iter()
                    .zip(aw.iter())
                    .zip(sq.iter())
                    .map(|((qv, av), dv)| qv * av * dv)
                    .sum();
                g[off + 1 + dim] = 0.5 * s / (l * l);
            }
            g[off + p + 1] =
                0.5 * kp.noise_variance * (0..n).map(|i| q[(i, i)] * w[i]).sum::<f64>();
            g[off + p + 2] = -(0..n).map(|i| alpha[i] * w[i]).sum::<f64>() * self.gamma_scale;
        }

        if self.kappa.is_finite() {
            let k = self.kappa;
            let dnoise = ts.noise_variance - to.noise_variance;
            let dgamma = ts.mean - to.mean;
            // Sensitivity of the likelihood to each weight m_i.
            let sens: Vec<f64> = (0..n)
                .map(|i| {
                    let v: f64 = (0..n)
                        .map(|j| {
                            q[(i, j)] * (a.m[j] * a.ks[(i, j)] - (1.0 - a.m[j]) * a.ko[(i, j)])
                        })
                        .sum();
                    v + 0.5 * q[(i, i)] * dnoise - dgamma * alpha[i]
                })
                .collect();
            let sech_c = 1.0 - a.tc * a.tc;
            let feature = |x: &[f64], idx: usize| if idx == 0 { 1.0 } else { x[idx - 1] };
            for idx in 0..=p {
                let fc = feature(&data.center, idx);
                let s: f64 = (0..n)
                    .map(|i| {
                        let ti = a.t[i];
                        let dm = 0.5
                            * k
                            * ((1.0 - ti * ti) * feature(&data.pts[i], idx) * a.tc
                                + ti * sech_c * fc);
                        dm * sens[i]
                    })
                    .sum();
                g[2 * b + idx] = s;
            }
            if let Some(r) = self.beta_radius {
                let g0 = g[2 * b];
                for (k, c) in data.center.iter().enumerate() {
                    g[2 * b + 1 + k] = (g[2 * b + 1 + k] - g0 * c) / r;
                }
            }
        }
        Ok((value, g))
    }
}

fn check_kappa(kappa: f64) -> Result<()> {
    if kappa > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter("kappa must be positive".into()))
    }
}

/// Smoothed negative log likelihood over the whole neighborhood, `n/2 log 2pi`
/// included.
pub fn smoothed_jump_nll(nb: &Neighborhood, d: &Dataset, params: &JumpParams) -> Result<f64> {
    params.validate()?;
    let data = LocalData::new(nb, d)?;
    let obj = JumpObjective::plain(&data, params.kappa);
    let a = obj.assemble(&params.theta_star, &params.theta_o, &params.beta.beta)?;
    Ok(linalg::gaussian_nll(&a.factor, &a.resid))
}

/// Layout of [`nll_gradient`]: per component `[ln sv, ln l.., ln noise, gamma]`
/// for `theta_*` then `theta_o`, followed by `beta`.
pub fn gradient_layout(dim: usize) -> Vec<String> {
    let mut names = Vec::new();
    for side in ["star", "o"] {
        names.push(format!("ln_sv_{side}"));
        names.extend((1..=dim).map(|d| format!("ln_l{d}_{side}")));
        names.push(format!("ln_noise_{side}"));
        names.push(format!("gamma_{side}"));
    }
    names.extend((0..=dim).map(|d| format!("beta{d}")));
    names
}

/// Analytic gradient of [`smoothed_jump_nll`] with respect to the log kernel
/// parameters, the two means and `beta` (see [`gradient_layout`]).
pub fn nll_gradient(nb: &Neighborhood, d: &Dataset, params: &JumpParams) -> Result<Vec<f64>> {
    params.validate()?;
    let data = LocalData::new(nb, d)?;
    let obj = JumpObjective::plain(&data, params.kappa);
    let x = obj.encode(params);
    Ok(obj.value_grad(&x)?.1)
}

/// Least-squares fit of `y_i ~ alpha0 + alpha^T (x_i - center)`.
pub fn local_linear_fit(nb: &Neighborhood, d: &Dataset) -> Result<(f64, Vec<f64>)> {
    nb.check(d)?;
    let p = d.dim();
    let n = nb.k();
    let design = DMatrix::from_fn(n, p + 1, |i, j| {
        if j == 0 {
            1.0
        } else {
            d.point(nb.indices[i])[j - 1] - nb.center[j - 1]
        }
    });
    let y = DVector::from_vec(nb.responses(d));
    let xtx = design.transpose() * &design;
    let xty = design.transpose() * y;
    let coef = match xtx.clone().cholesky() {
        Some(ch) => ch.solve(&xty),
        None => {
            let mut reg = xtx;
            for i in 0..=p {
                reg[(i, i)] += RIDGE;
            }
            reg.lu()
                .solve(&xty)
                .ok_or_else(|| Error::InvalidParameter("singular local linear design".into()))?
        }
    };
    if coef.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("singular local linear design".into()));
    }
    Ok((coef[0], coef.iter().skip(1).copied().collect()))
}

/// Leading principal axis of the neighborhood inputs, sign-normalized so the
/// first nonzero entry is positive.
fn principal_axis(data: &LocalData) -> Vec<f64> {
    let p = data.dim();
    let n = data.n() as f64;
    let mean: Vec<f64> = (0..p)
        .map(|k| data.pts.iter().map(|x| x[k]).sum::<f64>() / n)
        .collect();
    let cov = DMatrix::from_fn(p, p, |a, b| {
        data.pts
            .iter()
            .map(|x| (x[a] - mean[a]) * (x[b] - mean[b]))
            .sum::<f64>()
            / n
    });
    let eig = SymmetricEigen::new(cov);
    let best = eig.eigenvalues.imax();
    let mut v: Vec<f64> = eig.eigenvectors.column(best).iter().copied().collect();
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if !(norm > 0.0) {
        let mut e = vec![0.0; p];
        e[0] = 1.0;
        return e;
    }
    if v.iter().find(|a| **a != 0.0).is_some_and(|a| *a < 0.0) {
        v.iter_mut().for_each(|a| *a = -*a);
    }
    v.iter().map(|a| a / norm).collect()
}

fn mean_of(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, c) = v.fold((0.0, 0usize), |(s, c), x| (s + x, c + 1));
    (c > 0).then(|| s / c as f64)
}

fn response_variance(y: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let mean = y.mean();
    let var = y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 1e-300 {
        var
    } else {
        1.0
    }
}

/// Boundary initialization with a deterministic mid-range kernel start.
pub fn init_beta(nb: &Neighborhood, d: &Dataset) -> Result<InitEstimate> {
    let data = LocalData::new(nb, d)?;
    let var_y = response_variance(&data.y);
    let cov = CovInit::midpoint(d.dim(), var_y);
    init_beta_with(nb, d, &cov, &cov, DEFAULT_KAPPA)
}

/// Boundary initialization: the local-linear slope gives the unit normal, and
/// the offset is the best of [`INTERCEPT_GRID`] candidates sweeping the
/// neighborhood, scored by the smoothed likelihood with the side means set to
/// the side-wise response averages.
pub fn init_beta_with(
    nb: &Neighborhood,
    d: &Dataset,
    cov_star: &CovInit,
    cov_o: &CovInit,
    kappa: f64,
) -> Result<InitEstimate> {
    check_kappa(kappa)?;
    let p = d.dim();
    if nb.k() < p + 2 {
        return Err(Error::InvalidParameter(format!(
            "boundary initialization needs at least {} neighbors",
            p + 2
        )));
    }
    let data = LocalData::new(nb, d)?;
    let (alpha0, alpha) = local_linear_fit(nb, d)?;

    let alpha_norm = alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
    let radius = data.radius();
    let y_scale = data.y.amax().max(response_variance(&data.y).sqrt()).max(1.0);
    let degenerate = !(alpha_norm * radius > 1e-9 * y_scale);
    let direction: Vec<f64> = if degenerate {
        principal_axis(&data)
    } else {
        alpha.iter().map(|a| a / alpha_norm).collect()
    };

    let proj: Vec<f64> = data
        .pts
        .iter()
        .map(|x| x.iter().zip(&direction).map(|(a, b)| a * b).sum())
        .collect();
    let lo = proj.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = proj.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let obj = JumpObjective::plain(&data, kappa);
    let overall = data.y.mean();
    let mut best: Option<(f64, f64, f64, f64)> = None;
    let mut line_search = Vec::with_capacity(INTERCEPT_GRID);
    for g in 0..INTERCEPT_GRID {
        let level = lo + (hi - lo) * g as f64 / (INTERCEPT_GRID - 1) as f64;
        let mut beta = Vec::with_capacity(p + 1);
        beta.push(-level);
        beta.extend_from_slice(&direction);
        let center_side = boundary_unchecked(&beta, &data.center) >= 0.0;
        let same = |x: &[f64]| (boundary_unchecked(&beta, x) >= 0.0) == center_side;
        let gs = mean_of((0..data.n()).filter(|&i| same(&data.pts[i])).map(|i| data.y[i]))
            .unwrap_or(overall);
        let go = mean_of((0..data.n()).filter(|&i| !same(&data.pts[i])).map(|i| data.y[i]))
            .unwrap_or(overall);
        let nll = obj
            .assemble(&cov_star.with_mean(gs), &cov_o.with_mean(go), &beta)
            .map(|a| linalg::gaussian_nll(&a.factor, &a.resid))
            .unwrap_or(f64::INFINITY);
        line_search.push((-level, nll));
        if nll.is_finite() && best.is_none_or(|b| nll < b.1) {
            best = Some((-level, nll, gs, go));
        }
    }
    let (intercept, _, gs, go) = best.unwrap_or_else(|| {
        let through_center: f64 = nb.center.iter().zip(&direction).map(|(a, b)| a * b).sum();
        (-through_center, f64::INFINITY, overall, overall)
    });
    let mut beta = vec![intercept];
    beta.extend_from_slice(&direction);
    Ok(InitEstimate {
        beta0: BoundaryParams::new(beta)?,
        theta_star: cov_star.with_mean(gs),
        theta_o: cov_o.with_mean(go),
        alpha,
        alpha0,
        degenerate_direction: degenerate,
        line_search,
    })
}

fn full_init(data: &LocalData) -> KernelParams {
    let var_y = response_variance(&data.y);
    CovInit::midpoint(data.dim(), var_y).with_mean(data.y.mean())
}

/// Fits only the full local GP, from the same start that [`fit_jump_gp`]
/// uses for its full-model fit.
pub fn fit_local(nb: &Neighborhood, d: &Dataset, cfg: &FitConfig) -> Result<localgp::LocalFit> {
    cfg.optimizer.validate()?;
    let data = LocalData::new(nb, d)?;
    localgp::fit_local_gp(nb, d, &full_init(&data), &cfg.optimizer)
}

/// Everything recorded along the way by [`fit_jump_gp_traced`].
#[derive(Debug, Clone, PartialEq)]
pub struct FitTrace {
    pub init: InitEstimate,
    pub init_params: JumpParams,
    pub smoothed: Outcome,
    pub full_init: KernelParams,
    pub full_time: Duration,
}

/// Fits the jump model and the full local GP on one neighborhood and keeps
/// whichever has the better likelihood.
pub fn fit_jump_gp(nb: &Neighborhood, d: &Dataset, cfg: &FitConfig, seed: u64) -> Result<JumpFit> {
    fit_jump_gp_traced(nb, d, cfg, seed).map(|(fit, _)| fit)
}

pub fn fit_jump_gp_traced(
    nb: &Neighborhood,
    d: &Dataset,
    cfg: &FitConfig,
    seed: u64,
) -> Result<(JumpFit, FitTrace)> {
    check_kappa(cfg.kappa)?;
    cfg.optimizer.validate()?;
    let data = LocalData::new(nb, d)?;
    let p = d.dim();
    let var_y = response_variance(&data.y);
    let mut rng = rng_from(seed, &[]);
    let cov_star = CovInit::random(p, var_y, &mut rng);
    let cov_o = CovInit::random(p, var_y, &mut rng);

    let init = init_beta_with(nb, d, &cov_star, &cov_o, cfg.kappa)?;
    let init_params = JumpParams {
        theta_star: init.theta_star.clone(),
        theta_o: init.theta_o.clone(),
        beta: init.beta0.clone(),
        kappa: cfg.kappa,
    };
    let obj = JumpObjective::scaled(&data, cfg.kappa);
    let smoothed = optimizer::minimize(&obj, &obj.encode(&init_params), &cfg.optimizer)?;
    let params = obj.decode(&smoothed.x)?;

    let nll_jump = jumpgp::exact_jump_nll(nb, d, &params)?;
    let one_sided = jumpgp::jump_posterior_with(nb, d, &params, cfg.mean_mode)?;
    let full_init = full_init(&data);
    let full_start = Instant::now();
    let full = localgp::fit_local_gp(nb, d, &full_init, &cfg.optimizer)?;
    let full_time = full_start.elapsed();
    let fit = jumpgp::select_model(
        JumpCandidate {
            params,
            nll_jump,
            one_sided,
        },
        full,
        nb,
        d,
        cfg.mean_mode,
    )?;
    Ok((
        fit,
        FitTrace {
            init,
            init_params,
            smoothed,
            full_init,
            full_time,
        },
    ))
}
