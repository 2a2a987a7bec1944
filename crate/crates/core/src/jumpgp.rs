//! The jump GP: a local GP whose neighborhood is cut in two by an affine
//! boundary `B(x) = [1, x^T] beta`, so that prediction at the center only
//! uses the data on the center's side.
//!
//! Two forms of the side indicator are provided. The exact form
//! `J(x, x') = 1[sign B(x) = sign B(x')]` (with `sign(0) = +1`) drives
//! splitting, prediction and model selection. The smoothed form
//! `J_k(x, x') = (1 + tanh(k B(x)) tanh(k B(x'))) / 2` makes the likelihood
//! differentiable in `beta` and is what the optimizer sees.
//!
//! Both the mean and covariance are blended with `m(x) = J(x, x*)`:
//!
//! ```text
//! r(x)     = m(x) gamma_* + (1 - m(x)) gamma_o
//! c(x, x') = m(x) m(x') c_*(x, x') + (1 - m(x)) (1 - m(x')) c_o(x, x')
//! ```
//!
//! With the exact indicator this is block diagonal: same-side pairs use
//! `c_*`, other-side pairs `c_o`, and cross pairs are uncorrelated.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel;
use crate::linalg::{self, Factor};
use crate::localgp::{self, LocalFit, MeanMode};
use crate::types::{BoundaryParams, Dataset, KernelParams, Neighborhood, Posterior};

/// Smoothing sharpness used by default during optimization.
pub const DEFAULT_KAPPA: f64 = 100.0;

/// Indices of a neighborhood on the center's side of the boundary and on the
/// other side, each in neighborhood order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub same_side: Vec<usize>,
    pub other_side: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpParams {
    pub theta_star: KernelParams,
    pub theta_o: KernelParams,
    pub beta: BoundaryParams,
    /// `f64::INFINITY` selects the exact indicator.
    pub kappa: f64,
}

impl JumpParams {
    pub fn validate(&self) -> Result<()> {
        self.theta_star.validate()?;
        self.theta_o.validate()?;
        if !(self.kappa > 0.0) {
            return Err(Error::InvalidParameter("kappa must be positive".into()));
        }
        let p = self.beta.dim();
        if self.theta_star.dim() != p || self.theta_o.dim() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                found: self.theta_star.dim().min(self.theta_o.dim()),
            });
        }
        Ok(())
    }

    pub fn with_kappa(&self, kappa: f64) -> JumpParams {
        JumpParams {
            kappa,
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChosenModel {
    OneSided,
    Full,
}

impl ChosenModel {
    pub fn as_str(self) -> &'static str {
        match self {
            ChosenModel::OneSided => "one-sided",
            ChosenModel::Full => "full",
        }
    }
}

/// Prediction from the one-sided model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneSided {
    pub posterior: Posterior,
    /// No neighbor shares the center's side; the posterior is the `theta_*` prior.
    pub prior_fallback: bool,
}

/// A fitted one-sided model awaiting comparison with the full local GP.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpCandidate {
    pub params: JumpParams,
    pub nll_jump: f64,
    pub one_sided: OneSided,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JumpFit {
    pub params: JumpParams,
    pub nll_jump: f64,
    pub nll_full: f64,
    pub chosen: ChosenModel,
    /// Posterior of whichever model was chosen.
    pub posterior: Posterior,
    pub local: LocalFit,
    pub local_posterior: Posterior,
    pub one_sided: OneSided,
}

fn check_beta(beta: &BoundaryParams, x: &[f64]) -> Result<()> {
    if x.len() != beta.dim() {
        return Err(Error::DimensionMismatch {
            expected: beta.dim(),
            found: x.len(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn boundary_unchecked(beta: &[f64], x: &[f64]) -> f64 {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
}

/// `beta[0] + sum_d beta[d + 1] * x[d]`.
pub fn boundary_eval(beta: &BoundaryParams, x: &[f64]) -> Result<f64> {
    check_beta(beta, x)?;
    Ok(boundary_unchecked(&beta.beta, x))
}

#[inline]
fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `tanh(kappa * b)`, or `sign(b)` with `sign(0) = +1` when kappa is infinite.
#[inline]
pub(crate) fn side_score(kappa: f64, b: f64) -> f64 {
    if kappa.is_infinite() {
        sign(b)
    } else {
        (kappa * b).tanh()
    }
}

/// 1 when `x` and `x2` lie on the same side of `B = 0`, else 0.
pub fn membership(beta: &BoundaryParams, x: &[f64], x2: &[f64]) -> Result<u8> {
    let a = boundary_eval(beta, x)?;
    let b = boundary_eval(beta, x2)?;
    Ok(u8::from(sign(a) == sign(b)))
}

/// Differentiable surrogate for [`membership`].
pub fn smoothed_membership(beta: &BoundaryParams, kappa: f64, x: &[f64], x2: &[f64]) -> Result<f64> {
    if !(kappa > 0.0) {
        return Err(Error::InvalidParameter("kappa must be positive".into()));
    }
    let a = side_score(kappa, boundary_eval(beta, x)?);
    let b = side_score(kappa, boundary_eval(beta, x2)?);
    Ok(0.5 * (1.0 + a * b))
}

pub fn split(nb: &Neighborhood, d: &Dataset, beta: &BoundaryParams) -> Result<Split> {
    nb.check(d)?;
    check_beta(beta, &nb.center)?;
    let center_side = sign(boundary_unchecked(&beta.beta, &nb.center));
    let (same_side, other_side) = nb
        .indices
        .iter()
        .partition(|&&i| sign(boundary_unchecked(&beta.beta, d.point(i))) == center_side);
    Ok(Split {
        same_side,
        other_side,
    })
}

/// Weight `m(x) = J_kappa(x, center)` on the center's component.
fn center_weight(params: &JumpParams, center: &[f64], x: &[f64]) -> Result<f64> {
    if params.kappa.is_infinite() {
        return Ok(f64::from(membership(&params.beta, x, center)?));
    }
    smoothed_membership(&params.beta, params.kappa, x, center)
}

pub fn blended_mean(params: &JumpParams, center: &[f64], x: &[f64]) -> Result<f64> {
    let m = center_weight(params, center, x)?;
    Ok(m * params.theta_star.mean + (1.0 - m) * params.theta_o.mean)
}

/// Blended covariance between two latent values. No noise term.
pub fn blended_cov(params: &JumpParams, center: &[f64], x: &[f64], x2: &[f64]) -> Result<f64> {
    let m1 = center_weight(params, center, x)?;
    let m2 = center_weight(params, center, x2)?;
    let cs = kernel::se_cov(x, x2, &params.theta_star)?;
    let co = kernel::se_cov(x, x2, &params.theta_o)?;
    Ok(m1 * m2 * cs + (1.0 - m1) * (1.0 - m2) * co)
}

/// Blended covariance of noisy observations at `pts`. The diagonal carries
/// `m * noise_* + (1 - m) * noise_o`.
pub fn blended_cov_matrix<P: AsRef<[f64]>>(
    params: &JumpParams,
    center: &[f64],
    pts: &[P],
) -> Result<DMatrix<f64>> {
    let n = pts.len();
    let m: Vec<f64> = pts
        .iter()
        .map(|p| center_weight(params, center, p.as_ref()))
        .collect::<Result<_>>()?;
    let mut c = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..=i {
            let v = blended_cov(params, center, pts[i].as_ref(), pts[j].as_ref())?;
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
        c[(i, i)] += m[i] * params.theta_star.noise_variance
            + (1.0 - m[i]) * params.theta_o.noise_variance;
    }
    Ok(c)
}

pub fn blended_mean_vector<P: AsRef<[f64]>>(
    params: &JumpParams,
    center: &[f64],
    pts: &[P],
) -> Result<DVector<f64>> {
    let vals: Vec<f64> = pts
        .iter()
        .map(|p| blended_mean(params, center, p.as_ref()))
        .collect::<Result<_>>()?;
    Ok(DVector::from_vec(vals))
}

/// Posterior of `f(center)` from the same-side data only.
pub fn jump_posterior(nb: &Neighborhood, d: &Dataset, params: &JumpParams) -> Result<OneSided> {
    jump_posterior_with(nb, d, params, MeanMode::Kriging)
}

pub fn jump_posterior_with(
    nb: &Neighborhood,
    d: &Dataset,
    params: &JumpParams,
    mode: MeanMode,
) -> Result<OneSided> {
    params.validate()?;
    let sp = split(nb, d, &params.beta)?;
    let ts = &params.theta_star;
    if sp.same_side.is_empty() {
        return Ok(OneSided {
            posterior: Posterior {
                mean: mode.offset(ts.mean),
                variance: ts.signal_variance,
            },
            prior_fallback: true,
        });
    }
    let pts: Vec<&[f64]> = sp.same_side.iter().map(|&i| d.point(i)).collect();
    let y = DVector::from_iterator(pts.len(), sp.same_side.iter().map(|&i| d.response(i)));
    let posterior = localgp::conditional(&pts, &y, &nb.center, ts, mode)?;
    Ok(OneSided {
        posterior,
        prior_fallback: false,
    })
}

fn block_nll(d: &Dataset, idx: &[usize], kp: &KernelParams) -> Result<f64> {
    if idx.is_empty() {
        return Ok(0.0);
    }
    let pts: Vec<&[f64]> = idx.iter().map(|&i| d.point(i)).collect();
    let c = kernel::cov_matrix(&pts, kp)?;
    let factor = Factor::new(c, kp.signal_variance)?;
    let r = DVector::from_iterator(idx.len(), idx.iter().map(|&i| d.response(i) - kp.mean));
    Ok(linalg::gaussian_nll(&factor, &r))
}

/// Negative log likelihood of the hard-split model: the sum of the two
/// independent block likelihoods, `n/2 log 2pi` included.
pub fn exact_jump_nll(nb: &Neighborhood, d: &Dataset, params: &JumpParams) -> Result<f64> {
    params.validate()?;
    let sp = split(nb, d, &params.beta)?;
    Ok(block_nll(d, &sp.same_side, &params.theta_star)?
        + block_nll(d, &sp.other_side, &params.theta_o)?)
}

/// Keeps the full local GP only when its likelihood is strictly better; ties
/// go to the one-sided model.
pub fn select_model(
    jump: JumpCandidate,
    full: LocalFit,
    nb: &Neighborhood,
    d: &Dataset,
    mode: MeanMode,
) -> Result<JumpFit> {
    if full.neighborhood != *nb {
        return Err(Error::InvalidParameter(
            "full fit was computed on a different neighborhood".into(),
        ));
    }
    let local_posterior = localgp::local_gp_posterior_with(nb, d, &full.params, mode)?;
    let chosen = if full.nll < jump.nll_jump {
        ChosenModel::Full
    } else {
        ChosenModel::OneSided
    };
    let posterior = match chosen {
        ChosenModel::Full => local_posterior,
        ChosenModel::OneSided => jump.one_sided.posterior,
    };
    Ok(JumpFit {
        params: jump.params,
        nll_jump: jump.nll_jump,
        nll_full: full.nll,
        chosen,
        posterior,
        local: full,
        local_posterior,
        one_sided: jump.one_sided,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::localgp::{knn_select, local_gp_nll, local_gp_posterior};
    use crate::rng::rng_from;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn beta(v: &[f64]) -> BoundaryParams {
        BoundaryParams::new(v.to_vec()).unwrap()
    }

    fn kp(sv: f64, l: f64, nv: f64, mean: f64) -> KernelParams {
        KernelParams::new(sv, vec![l, l], nv, mean).unwrap()
    }

    fn random_params(rng: &mut crate::rng::Rng, kappa: f64) -> JumpParams {
        let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        JumpParams {
            theta_star: KernelParams::new(
                rng.random_range(0.5..5.0),
                vec![rng.random_range(0.1..0.5), rng.random_range(0.1..0.5)],
                rng.random_range(0.05..1.0),
                rng.random_range(-3.0..3.0),
            )
            .unwrap(),
            theta_o: KernelParams::new(
                rng.random_range(0.5..5.0),
                vec![rng.random_range(0.1..0.5), rng.random_range(0.1..0.5)],
                rng.random_range(0.05..1.0),
                rng.random_range(-3.0..3.0),
            )
            .unwrap(),
            beta: beta(&[rng.random_range(-0.2..0.2), angle.cos(), angle.sin()]),
            kappa,
        }
    }

    fn random_data(rng: &mut crate::rng::Rng, n: usize) -> (Dataset, Vec<f64>) {
        let pts: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)])
            .collect();
        let y = (0..n).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let center = vec![rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)];
        (Dataset::new(pts, y).unwrap(), center)
    }

    #[test]
    fn boundary_examples() {
        assert_eq!(boundary_eval(&beta(&[0.0, 1.0, 0.0]), &[0.3, -0.7]).unwrap(), 0.3);
        assert_eq!(boundary_eval(&beta(&[-1.0, 2.0, 0.0]), &[0.5, 123.0]).unwrap(), 0.0);
        let v = boundary_eval(&beta(&[1.0, 1.0, 1.0]), &[0.2, 0.3]).unwrap();
        assert!((v - 1.5).abs() < 1e-15);
        assert!(boundary_eval(&beta(&[1.0, 1.0, 1.0]), &[0.2]).is_err());
    }

    #[test]
    fn membership_examples() {
        // B(x) = x1 - 1 on a 1-D input.
        let b = beta(&[-1.0, 1.0]);
        assert_eq!(membership(&b, &[0.3], &[0.3]).unwrap(), 1);
        assert_eq!(membership(&b, &[3.0], &[-2.0]).unwrap(), 0);
        assert_eq!(membership(&b, &[1.0], &[2.0]).unwrap(), 1);
        assert_eq!(membership(&b, &[1.0], &[0.0]).unwrap(), 0);
    }

    #[test]
    fn split_one_dimensional_example() {
        let d = Dataset::new(vec![vec![-1.0], vec![-0.2], vec![0.5]], vec![0.0; 3]).unwrap();
        let nb = Neighborhood {
            center: vec![0.4],
            indices: vec![2, 1, 0],
        };
        let sp = split(&nb, &d, &beta(&[0.0, 1.0])).unwrap();
        assert_eq!(sp.same_side, vec![2]);
        assert_eq!(sp.other_side, vec![1, 0]);
        let flipped = split(&nb, &d, &beta(&[0.0, -1.0])).unwrap();
        assert_eq!(sp, flipped);
    }

    #[test]
    fn split_with_normal_away_from_data() {
        let d = Dataset::new(vec![vec![0.1, 0.1], vec![0.2, -0.3]], vec![0.0; 2]).unwrap();
        let nb = knn_select(&d, &[0.0, 0.0], 2).unwrap();
        let sp = split(&nb, &d, &beta(&[5.0, 1.0, 1.0])).unwrap();
        assert!(sp.other_side.is_empty());
        assert_eq!(sp.same_side.len(), 2);
    }

    #[test]
    fn smoothed_membership_examples() {
        let b = beta(&[0.0, 1.0]);
        assert_eq!(smoothed_membership(&b, 100.0, &[0.0], &[0.7]).unwrap(), 0.5);
        let same = smoothed_membership(&b, 100.0, &[0.1], &[0.1]).unwrap();
        let t = 10f64.tanh();
        assert!((same - 0.5 * (1.0 + t * t)).abs() < 1e-16);
        assert!((1.0 - same - 4.122e-9).abs() < 1e-11, "{}", 1.0 - same);
        let opp = smoothed_membership(&b, 100.0, &[0.1], &[-0.1]).unwrap();
        assert!((opp - 4.122e-9).abs() < 1e-11, "{opp}");
        assert!(smoothed_membership(&b, 0.0, &[0.1], &[0.1]).is_err());
    }

    #[test]
    fn smoothed_converges_away_from_boundary() {
        let mut rng = rng_from(3, &[]);
        for _ in 0..500 {
            let p = random_params(&mut rng, 100.0);
            let x = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let x2 = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            let b1 = boundary_eval(&p.beta, &x).unwrap();
            let b2 = boundary_eval(&p.beta, &x2).unwrap();
            if b1.abs() < 0.1 || b2.abs() < 0.1 {
                continue;
            }
            let hard = f64::from(membership(&p.beta, &x, &x2).unwrap());
            let soft = smoothed_membership(&p.beta, 100.0, &x, &x2).unwrap();
            assert!((hard - soft).abs() <= 1e-7);
        }
    }

    #[test]
    fn blended_mean_examples() {
        let mut p = JumpParams {
            theta_star: kp(1.0, 0.2, 0.1, 10.0),
            theta_o: kp(1.0, 0.2, 0.1, -4.0),
            beta: beta(&[0.0, 1.0, 0.0]),
            kappa: 100.0,
        };
        let center = [0.3, 0.0];
        assert!((blended_mean(&p, &center, &[0.4, 0.2]).unwrap() - 10.0).abs() < 1e-9);
        assert!((blended_mean(&p, &center, &[0.0, 0.2]).unwrap() - 3.0).abs() < 1e-15);
        p.theta_o.mean = 10.0;
        assert!((blended_mean(&p, &center, &[-0.3, 0.1]).unwrap() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn exact_blended_cov_cases() {
        let p = JumpParams {
            theta_star: kp(2.0, 0.3, 0.1, 0.0),
            theta_o: kp(5.0, 0.1, 0.2, 0.0),
            beta: beta(&[0.0, 1.0, 0.0]),
            kappa: f64::INFINITY,
        };
        let center = [0.2, 0.0];
        let (a, b) = ([0.1, 0.1], [0.3, -0.2]);
        let (u, v) = ([-0.1, 0.1], [-0.2, -0.2]);
        assert_eq!(
            blended_cov(&p, &center, &a, &b).unwrap(),
            kernel::se_cov(&a, &b, &p.theta_star).unwrap()
        );
        assert_eq!(
            blended_cov(&p, &center, &u, &v).unwrap(),
            kernel::se_cov(&u, &v, &p.theta_o).unwrap()
        );
        assert_eq!(blended_cov(&p, &center, &a, &u).unwrap(), 0.0);
    }

    #[test]
    fn exact_matrix_is_block_diagonal_and_factors() {
        let mut rng = rng_from(4, &[]);
        for _ in 0..20 {
            let p = random_params(&mut rng, f64::INFINITY);
            let (d, center) = random_data(&mut rng, 15);
            let nb = knn_select(&d, &center, 15).unwrap();
            let pts = nb.points(&d);
            let c = blended_cov_matrix(&p, &center, &pts).unwrap();
            let sp = split(&nb, &d, &p.beta).unwrap();
            for &i in &sp.same_side {
                for &j in &sp.other_side {
                    let ii = nb.indices.iter().position(|&v| v == i).unwrap();
                    let jj = nb.indices.iter().position(|&v| v == j).unwrap();
                    assert_eq!(c[(ii, jj)], 0.0);
                }
            }
            assert!(Factor::new(c, 5.0).is_ok());
        }
    }

    #[test]
    fn all_same_side_matches_local_posterior() {
        let mut rng = rng_from(5, &[]);
        let (d, _) = random_data(&mut rng, 12);
        let center = [0.0, 0.0];
        let nb = knn_select(&d, &center, 12).unwrap();
        let theta = kp(3.0, 0.25, 0.2, 0.5);
        let p = JumpParams {
            theta_star: theta.clone(),
            theta_o: kp(1.0, 0.1, 0.1, 9.0),
            beta: beta(&[10.0, 1.0, 1.0]),
            kappa: DEFAULT_KAPPA,
        };
        let js = jump_posterior(&nb, &d, &p).unwrap();
        let ls = local_gp_posterior(&nb, &d, &theta).unwrap();
        assert!(!js.prior_fallback);
        assert!((js.posterior.mean - ls.mean).abs() <= 1e-12);
        assert!((js.posterior.variance - ls.variance).abs() <= 1e-12);
    }

    #[test]
    fn empty_same_side_falls_back_to_prior() {
        let d = Dataset::new(vec![vec![0.1], vec![0.2]], vec![1.0, 2.0]).unwrap();
        let nb = Neighborhood {
            center: vec![-0.1],
            indices: vec![0, 1],
        };
        let p = JumpParams {
            theta_star: KernelParams::new(3.0, vec![0.2], 0.1, 7.0).unwrap(),
            theta_o: KernelParams::new(1.0, vec![0.2], 0.1, 0.0).unwrap(),
            beta: beta(&[0.0, 1.0]),
            kappa: DEFAULT_KAPPA,
        };
        let js = jump_posterior(&nb, &d, &p).unwrap();
        assert!(js.prior_fallback);
        assert_eq!(js.posterior, Posterior { mean: 7.0, variance: 3.0 });
    }

    #[test]
    fn posterior_is_permutation_invariant() {
        let mut rng = rng_from(6, &[]);
        for _ in 0..20 {
            let p = random_params(&mut rng, DEFAULT_KAPPA);
            let (d, center) = random_data(&mut rng, 10);
            let nb = knn_select(&d, &center, 10).unwrap();
            let mut shuffled = nb.clone();
            shuffled.indices.reverse();
            shuffled.indices.rotate_left(3);
            let a = jump_posterior(&nb, &d, &p).unwrap().posterior;
            let b = jump_posterior(&shuffled, &d, &p).unwrap().posterior;
            assert!((a.mean - b.mean).abs() < 1e-10);
            assert!((a.variance - b.variance).abs() < 1e-10);
        }
    }

    #[test]
    fn sign_flip_leaves_everything_unchanged() {
        let mut rng = rng_from(7, &[]);
        for _ in 0..20 {
            let p = random_params(&mut rng, DEFAULT_KAPPA);
            let (d, center) = random_data(&mut rng, 10);
            let nb = knn_select(&d, &center, 10).unwrap();
            let mut q = p.clone();
            q.beta = p.beta.negated();
            // Zero boundary values break the symmetry of sign(0) = +1.
            if nb.points(&d).iter().chain([&center[..]].iter()).any(|x| {
                boundary_eval(&p.beta, x).unwrap() == 0.0
            }) {
                continue;
            }
            assert_eq!(split(&nb, &d, &p.beta).unwrap(), split(&nb, &d, &q.beta).unwrap());
            assert_eq!(jump_posterior(&nb, &d, &p).unwrap(), jump_posterior(&nb, &d, &q).unwrap());
            assert_eq!(exact_jump_nll(&nb, &d, &p).unwrap(), exact_jump_nll(&nb, &d, &q).unwrap());
            let ca = blended_cov_matrix(&p, &center, &nb.points(&d)).unwrap();
            let cb = blended_cov_matrix(&q, &center, &nb.points(&d)).unwrap();
            assert!((ca - cb).abs().max() <= 1e-12);
        }
    }

    #[test]
    fn equal_components_one_side_matches_full_nll() {
        let mut rng = rng_from(8, &[]);
        let (d, _) = random_data(&mut rng, 10);
        let center = [0.0, 0.0];
        let nb = knn_select(&d, &center, 10).unwrap();
        let theta = kp(2.0, 0.3, 0.3, 1.0);
        let p = JumpParams {
            theta_star: theta.clone(),
            theta_o: theta.clone(),
            beta: beta(&[3.0, 1.0, -1.0]),
            kappa: f64::INFINITY,
        };
        let a = exact_jump_nll(&nb, &d, &p).unwrap();
        let b = local_gp_nll(&nb, &d, &theta).unwrap();
        assert!((a - b).abs() <= 1e-10);
    }

    fn dummy_candidate(nll: f64) -> JumpCandidate {
        JumpCandidate {
            params: JumpParams {
                theta_star: kp(1.0, 0.2, 0.1, 0.0),
                theta_o: kp(1.0, 0.2, 0.1, 0.0),
                beta: beta(&[0.0, 1.0, 0.0]),
                kappa: DEFAULT_KAPPA,
            },
            nll_jump: nll,
            one_sided: OneSided {
                posterior: Posterior {
                    mean: 42.0,
                    variance: 1.0,
                },
                prior_fallback: false,
            },
        }
    }

    #[test]
    fn selection_rule() {
        let d = Dataset::new(vec![vec![0.0, 0.0], vec![0.1, 0.1]], vec![1.0, 2.0]).unwrap();
        let nb = knn_select(&d, &[0.0, 0.0], 2).unwrap();
        let full = |nll| LocalFit {
            params: kp(1.0, 0.2, 0.1, 0.0),
            nll,
            neighborhood: nb.clone(),
        };
        let pick = |nj, nf| {
            select_model(dummy_candidate(nj), full(nf), &nb, &d, MeanMode::Kriging)
                .unwrap()
                .chosen
        };
        assert_eq!(pick(12.0, 10.0), ChosenModel::Full);
        assert_eq!(pick(10.0, 12.0), ChosenModel::OneSided);
        assert_eq!(pick(10.0, 10.0), ChosenModel::OneSided);

        let fit = select_model(dummy_candidate(10.0), full(12.0), &nb, &d, MeanMode::Kriging).unwrap();
        assert_eq!(fit.posterior.mean, 42.0);
        assert_eq!((fit.nll_jump, fit.nll_full), (10.0, 12.0));
        let fit = select_model(dummy_candidate(12.0), full(10.0), &nb, &d, MeanMode::Kriging).unwrap();
        assert_eq!(fit.posterior, fit.local_posterior);
    }
}
