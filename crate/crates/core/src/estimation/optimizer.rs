//! Gradient descent with Armijo backtracking.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A differentiable objective. `value` may fail (e.g. a covariance that will
/// not factor); the line search treats failures as infinitely bad steps.
pub trait Objective {
    fn value(&self, x: &[f64]) -> Result<f64>;
    fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_iters: usize,
    pub step_init: f64,
    /// Stop once the gradient infinity-norm falls below this.
    pub grad_tol: f64,
    /// Stop once an accepted step changes the objective by less than this, relatively.
    pub f_tol: f64,
    pub shrink: f64,
    pub armijo: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            max_iters: 500,
            step_init: 1e-2,
            grad_tol: 1e-5,
            f_tol: 1e-9,
            shrink: 0.5,
            armijo: 1e-4,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.max_iters >= 1
            && self.step_init > 0.0
            && self.grad_tol > 0.0
            && self.f_tol > 0.0
            && self.shrink > 0.0
            && self.shrink < 1.0
            && self.armijo > 0.0
            && self.armijo < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("optimizer config {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    GradientTolerance,
    ObjectiveTolerance,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub stop: StopReason,
    /// Objective after each accepted step, starting with the initial value.
    pub history: Vec<f64>,
}

const MIN_STEP: f64 = 1e-18;
const MAX_STEP: f64 = 1e3;

fn inf_norm(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub fn minimize<O: Objective + ?Sized>(obj: &O, x0: &[f64], cfg: &OptimizerConfig) -> Result<Outcome> {
    cfg.validate()?;
    let (mut f, mut g) = obj
        .value_grad(x0)
        .map_err(|e| Error::OptimizationFailed(format!("initial point: {e}")))?;
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::OptimizationFailed("non-finite objective at the initial point".into()));
    }
    let mut x = x0.to_vec();
    let mut step = cfg.step_init;
    let mut history = vec![f];
    let mut stop = StopReason::MaxIterations;
    let mut iterations = 0;

    while iterations < cfg.max_iters {
        if inf_norm(&g) < cfg.grad_tol {
            stop = StopReason::GradientTolerance;
            break;
        }
        let gg: f64 = g.iter().map(|v| v * v).sum();
        let accepted = loop {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi - step * gi).collect();
            if let Ok(ft) = obj.value(&trial) {
                if ft.is_finite() && ft <= f - cfg.armijo * step * gg {
                    break Some((trial, ft));
                }
            }
            step *= cfg.shrink;
            if step < MIN_STEP {
                break None;
            }
        };
        let Some((trial, ft)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        // The value succeeded at `trial`, so the gradient normally does too;
        // if it does not, keep the last good point.
        let Ok((fv, gv)) = obj.value_grad(&trial) else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        if gv.iter().any(|v| !v.is_finite()) {
            stop = StopReason::LineSearchFailed;
            break;
        }
        debug_assert_eq!(fv, ft);
        iterations += 1;
        let rel = (f - fv).abs() / f.abs().max(1.0);
        x = trial;
        f = fv;
        g = gv;
        history.push(f);
        if rel < cfg.f_tol {
            stop = StopReason::ObjectiveTolerance;
            break;
        }
        step = (step * 2.0).min(MAX_STEP);
    }

    Ok(Outcome {
        x,
        value: f,
        gradient: g,
        iterations,
        stop,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        scales: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter().zip(&self.scales).map(|(v, s)| 0.5 * s * (v - 1.0).powi(2)).sum())
        }
        fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let g = x.iter().zip(&self.scales).map(|(v, s)| s * (v - 1.0)).collect();
            Ok((self.value(x)?, g))
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn value(&self, x: &[f64]) -> Result<f64> {
            Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn value_grad(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let g0 = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            let g1 = 200.0 * (x[1] - x[0] * x[0]);
            Ok((self.value(x)?, vec![g0, g1]))
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let obj = Quadratic {
            scales: vec![1.0, 4.0, 0.5],
        };
        let out = minimize(&obj, &[0.0, 3.0, -2.0], &OptimizerConfig::default()).unwrap();
        assert!(out.x.iter().all(|v| (v - 1.0).abs() < 1e-4), "{:?}", out.x);
        assert!(inf_norm(&out.gradient) < 1e-5 || out.stop != StopReason::GradientTolerance);
    }

    #[test]
    fn history_is_monotone() {
        let out = minimize(&Rosenbrock, &[-1.2, 1.0], &OptimizerConfig::default()).unwrap();
        assert!(out.history.windows(2).all(|w| w[1] <= w[0]));
        assert!(out.value < out.history[0]);
    }

    #[test]
    fn stops_at_gradient_tolerance() {
        let obj = Quadratic { scales: vec![1.0] };
        let cfg = OptimizerConfig {
            max_iters: 10_000,
            f_tol: 1e-300,
            ..OptimizerConfig::default()
        };
        let out = minimize(&obj, &[3.0], &cfg).unwrap();
        assert_eq!(out.stop, StopReason::GradientTolerance);
        assert!(inf_norm(&out.gradient) < cfg.grad_tol);
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = OptimizerConfig {
            shrink: 1.5,
            ..OptimizerConfig::default()
        };
        assert!(minimize(&Rosenbrock, &[0.0, 0.0], &cfg).is_err());
    }

    struct Broken;
    impl Objective for Broken {
        fn value(&self, _: &[f64]) -> Result<f64> {
            Err(Error::NotPositiveDefinite)
        }
        fn value_grad(&self, _: &[f64]) -> Result<(f64, Vec<f64>)> {
            Err(Error::NotPositiveDefinite)
        }
    }

    #[test]
    fn failing_start_is_optimization_failure() {
        assert!(matches!(
            minimize(&Broken, &[0.0], &OptimizerConfig::default()),
            Err(Error::OptimizationFailed(_))
        ));
    }
}
