//! Prediction-error metrics and the replicated simulation sweep.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::{fit_jump_gp_traced, FitConfig};
use crate::jumpgp::ChosenModel;
use crate::localgp::knn_select;
use crate::rng::derive_seed;
use crate::simulation::{generate, CaseId, Generated, SimCase};
use crate::types::Posterior;

/// Grid points within this distance of a true boundary form the boundary scope.
pub const BOUNDARY_WIDTH: f64 = 0.05;
/// Cells whose failure fraction exceeds this are flagged.
pub const FAILURE_FLAG_FRACTION: f64 = 0.05;
const SD_FLOOR: f64 = 1e-8;

const TAG_DATA: u64 = 0xDA7A;
const TAG_FIT: u64 = 0xF17;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LocalGp,
    JumpGp,
}

impl Method {
    pub const ALL: [Method; 2] = [Method::LocalGp, Method::JumpGp];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::LocalGp => "local-gp",
            Method::JumpGp => "jump-gp",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Scope {
    Boundary,
    Interior,
    All,
}

impl Scope {
    pub const ALL: [Scope; 3] = [Scope::Boundary, Scope::Interior, Scope::All];

    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Boundary => "boundary",
            Scope::Interior => "interior",
            Scope::All => "all",
        }
    }

    pub fn contains(self, boundary_dist: f64) -> bool {
        match self {
            Scope::Boundary => boundary_dist <= BOUNDARY_WIDTH,
            Scope::Interior => boundary_dist > BOUNDARY_WIDTH,
            Scope::All => true,
        }
    }
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::LengthMismatch(a, b));
    }
    if a == 0 {
        return Err(Error::InvalidParameter("no test points".into()));
    }
    Ok(())
}

/// Mean absolute prediction error.
pub fn mape(pred_means: &[f64], truths: &[f64]) -> Result<f64> {
    check_lengths(pred_means.len(), truths.len())?;
    let total: f64 = pred_means.iter().zip(truths).map(|(p, t)| (p - t).abs()).sum();
    Ok(total / pred_means.len() as f64)
}

/// Mean standardized prediction error, with the number of standard deviations
/// that had to be clamped to a small positive floor.
pub fn mspe_counted(pred_means: &[f64], truths: &[f64], pred_sds: &[f64]) -> Result<(f64, usize)> {
    check_lengths(pred_means.len(), truths.len())?;
    check_lengths(pred_means.len(), pred_sds.len())?;
    let mut clamped = 0;
    let total: f64 = pred_means
        .iter()
        .zip(truths)
        .zip(pred_sds)
        .map(|((p, t), s)| {
            let s = if *s > SD_FLOOR {
                *s
            } else {
                clamped += 1;
                SD_FLOOR
            };
            (p - t).abs() / s
        })
        .sum();
    Ok((total / pred_means.len() as f64, clamped))
}

pub fn mspe(pred_means: &[f64], truths: &[f64], pred_sds: &[f64]) -> Result<f64> {
    mspe_counted(pred_means, truths, pred_sds).map(|(v, _)| v)
}

/// One row of the benchmark output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub case_id: CaseId,
    pub sigma2: f64,
    pub k: usize,
    pub replicate: usize,
    pub method: Method,
    pub scope: Scope,
    pub mape: f64,
    pub mspe: f64,
    pub n_test: usize,
    pub failures: usize,
    pub flagged: bool,
    /// Share of the scope's points where selection kept the full model (jump GP only).
    pub full_model_fraction: Option<f64>,
    pub wall_time_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n_train: usize,
    pub fit: FitConfig,
    /// Measure wall time. Off keeps outputs byte-reproducible.
    pub record_timing: bool,
    /// Fit only grid points in this scope; reports then cover only this scope.
    #[serde(default = "all_scope")]
    pub fit_scope: Scope,
}

fn all_scope() -> Scope {
    Scope::All
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            n_train: 500,
            fit: FitConfig::default(),
            record_timing: false,
            fit_scope: Scope::All,
        }
    }
}

/// Per-grid-point outcome for both methods.
#[derive(Debug, Clone, PartialEq)]
pub struct PointOutcome {
    pub local: Posterior,
    pub jump: Posterior,
    pub chosen: ChosenModel,
    pub prior_fallback: bool,
    pub local_ms: f64,
    pub jump_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub data: Generated,
    /// `None` where the fit failed.
    pub outcomes: Vec<Option<PointOutcome>>,
    pub reports: Vec<MetricReport>,
}

/// Seed of the simulated data for one replicate. Independent of `k`, so every
/// neighborhood size sees the same data.
pub fn data_seed(master: u64, case: CaseId, sigma2: f64, replicate: usize) -> u64 {
    derive_seed(master, &[TAG_DATA, case.index(), sigma2.to_bits(), replicate as u64])
}

pub fn fit_seed(master: u64, case: CaseId, sigma2: f64, k: usize, replicate: usize, point: usize) -> u64 {
    derive_seed(
        master,
        &[TAG_FIT, case.index(), sigma2.to_bits(), k as u64, replicate as u64, point as u64],
    )
}

/// Fits both methods at one location. The jump fit also fits the full local
/// GP, which is the local-GP prediction.
pub fn predict_point(
    data: &crate::types::Dataset,
    x: &[f64],
    k: usize,
    fit: &FitConfig,
    seed: u64,
    record_timing: bool,
) -> Result<PointOutcome> {
    let start = Instant::now();
    let nb = knn_select(data, x, k)?;
    let (jf, trace) = fit_jump_gp_traced(&nb, data, fit, seed)?;
    let (local_ms, jump_ms) = if record_timing {
        let total = start.elapsed().as_secs_f64() * 1e3;
        let full = trace.full_time.as_secs_f64() * 1e3;
        (full, total)
    } else {
        (0.0, 0.0)
    };
    Ok(PointOutcome {
        local: jf.local_posterior,
        jump: jf.posterior,
        chosen: jf.chosen,
        prior_fallback: jf.one_sided.prior_fallback,
        local_ms,
        jump_ms,
    })
}

pub fn run_experiment(
    case: CaseId,
    sigma2: f64,
    k: usize,
    replicate: usize,
    seed: u64,
    config: &ExperimentConfig,
) -> Result<Experiment> {
    if !(sigma2 >= 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidParameter(format!("sigma2 {sigma2}")));
    }
    if k == 0 || k > config.n_train {
        return Err(Error::KOutOfRange { k, n: config.n_train });
    }
    let sim = SimCase::new(case);
    let data = generate(&sim, config.n_train, sigma2, data_seed(seed, case, sigma2, replicate))?;
    let outcomes: Vec<Option<PointOutcome>> = data
        .grid
        .points
        .par_iter()
        .enumerate()
        .map(|(t, x)| {
            if !config.fit_scope.contains(data.grid.boundary_dist[t]) {
                return None;
            }
            let s = fit_seed(seed, case, sigma2, k, replicate, t);
            predict_point(&data.train, x, k, &config.fit, s, config.record_timing).ok()
        })
        .collect();
    let reports = summarize_cell(case, sigma2, k, replicate, &data, &outcomes, config.fit_scope)?;
    Ok(Experiment {
        data,
        outcomes,
        reports,
    })
}

fn summarize_cell(
    case: CaseId,
    sigma2: f64,
    k: usize,
    replicate: usize,
    data: &Generated,
    outcomes: &[Option<PointOutcome>],
    fit_scope: Scope,
) -> Result<Vec<MetricReport>> {
    let mut reports = Vec::new();
    let scopes: &[Scope] = if fit_scope == Scope::All { &Scope::ALL } else { &[fit_scope] };
    for method in Method::ALL {
        for &scope in scopes {
            let in_scope: Vec<usize> = (0..outcomes.len())
                .filter(|&t| scope.contains(data.grid.boundary_dist[t]))
                .collect();
            let ok: Vec<(usize, &PointOutcome)> = in_scope
                .iter()
                .filter_map(|&t| outcomes[t].as_ref().map(|o| (t, o)))
                .collect();
            if ok.is_empty() {
                continue;
            }
            let failures = in_scope.len() - ok.len();
            let post = |o: &PointOutcome| match method {
                Method::LocalGp => o.local,
                Method::JumpGp => o.jump,
            };
            let means: Vec<f64> = ok.iter().map(|(_, o)| post(o).mean).collect();
            let sds: Vec<f64> = ok.iter().map(|(_, o)| post(o).sd()).collect();
            let truths: Vec<f64> = ok.iter().map(|(t, _)| data.grid.f_true[*t]).collect();
            let full_model_fraction = (method == Method::JumpGp).then(|| {
                ok.iter().filter(|(_, o)| o.chosen == ChosenModel::Full).count() as f64
                    / ok.len() as f64
            });
            let wall_time_ms = ok
                .iter()
                .map(|(_, o)| match method {
                    Method::LocalGp => o.local_ms,
                    Method::JumpGp => o.jump_ms,
                })
                .sum();
            reports.push(MetricReport {
                case_id: case,
                sigma2,
                k,
                replicate,
                method,
                scope,
                mape: mape(&means, &truths)?,
                mspe: mspe(&means, &truths, &sds)?,
                n_test: ok.len(),
                failures,
                flagged: failures as f64 > FAILURE_FLAG_FRACTION * in_scope.len() as f64,
                full_model_fraction,
                wall_time_ms,
            });
        }
    }
    Ok(reports)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub cases: Vec<CaseId>,
    pub sigma2: Vec<f64>,
    pub k: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub experiment: ExperimentConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            cases: CaseId::PAPER.to_vec(),
            sigma2: vec![1.0, 4.0, 9.0],
            k: vec![25, 35, 50],
            replicates: 25,
            seed: 1,
            experiment: ExperimentConfig::default(),
        }
    }
}

/// Replicate count for quick local and CI runs.
pub const DESK_REPLICATES: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of unsorted values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return f64::NAN;
    }
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

pub fn quartiles(values: &[f64]) -> Quartiles {
    Quartiles {
        q25: percentile(values, 0.25),
        median: percentile(values, 0.5),
        q75: percentile(values, 0.75),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub case_id: CaseId,
    pub k: usize,
    /// `None` pools all noise levels.
    pub sigma2: Option<f64>,
    pub method: Method,
    pub scope: Scope,
    pub count: usize,
    pub mape: Quartiles,
    pub mspe: Quartiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub reports: Vec<MetricReport>,
    pub summary: Vec<SummaryRow>,
    /// Cells that could not run at all, as `(case, sigma2, k, replicate, error)`.
    pub failed_cells: Vec<(CaseId, f64, usize, usize, String)>,
}

/// Quartile summary per `(case, k, method, scope)`, pooled over noise levels
/// and per noise level.
pub fn aggregate(reports: &[MetricReport]) -> Vec<SummaryRow> {
    type Key = (CaseId, usize, Option<u64>, Method, Scope);
    let mut groups: BTreeMap<Key, (Option<f64>, Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for r in reports {
        for s2 in [None, Some(r.sigma2)] {
            let key = (r.case_id, r.k, s2.map(f64::to_bits), r.method, r.scope);
            let e = groups.entry(key).or_insert((s2, Vec::new(), Vec::new()));
            e.1.push(r.mape);
            e.2.push(r.mspe);
        }
    }
    groups
        .into_iter()
        .map(|((case_id, k, _, method, scope), (sigma2, mapes, mspes))| SummaryRow {
            case_id,
            k,
            sigma2,
            method,
            scope,
            count: mapes.len(),
            mape: quartiles(&mapes),
            mspe: quartiles(&mspes),
        })
        .collect()
}

/// Full factorial sweep over cases x noise levels x k x replicates. A cell
/// that fails is recorded and the sweep continues.
pub fn run_sweep(config: &SweepConfig) -> SweepResult {
    let mut reports = Vec::new();
    let mut failed_cells = Vec::new();
    for &case in &config.cases {
        for &s2 in &config.sigma2 {
            for &k in &config.k {
                for rep in 0..config.replicates {
                    match run_experiment(case, s2, k, rep, config.seed, &config.experiment) {
                        Ok(exp) => reports.extend(exp.reports),
                        Err(e) => failed_cells.push((case, s2, k, rep, e.to_string())),
                    }
                }
            }
        }
    }
    let summary = aggregate(&reports);
    SweepResult {
        reports,
        summary,
        failed_cells,
    }
}
