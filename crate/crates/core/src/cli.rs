//! The `jumpgp` command-line tool.
//!
//! ```text
//! jumpgp generate  --case a --n 500 --sigma2 4 --seed 7 --out data/
//! jumpgp predict   --train data/train.csv --test data/truth_grid.csv --method both --out pred/
//! jumpgp benchmark --cases a,b --sigma2 1,4,9 --k 25 --replicates 5 --out bench/
//! ```
//!
//! Every command writes a `manifest.json` next to its outputs holding the
//! resolved configuration. Passing that file back with `--from-manifest`
//! reproduces the outputs byte for byte.
//!
//! File formats (UTF-8 CSV with a header row, floats written with 17
//! significant digits):
//! - `train.csv`: `x1,...,xp,y`
//! - `truth_grid.csv`: `x1,...,xp,f_true,region_id,boundary_dist`
//! - `predictions.csv`: `x1,...,xp,method,mean,sd,chosen_model,nll_full,nll_jump,beta0..beta_p,fit_time_ms`
//! - `reports.csv`: one [`MetricReport`] per row
//! - `summary.json`: quartiles per group

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

use crate::bench::{self, ExperimentConfig, MetricReport, Scope, SummaryRow, SweepConfig};
use crate::error::Error as CoreError;
use crate::estimation::{self, FitConfig, OptimizerConfig};
use crate::jumpgp::{ChosenModel, DEFAULT_KAPPA};
use crate::localgp::{knn_select, MeanMode};
use crate::rng::derive_seed;
use crate::simulation::{self, CaseId, SimCase, TruthGrid};
use crate::types::Dataset;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: row {row}: {message}")]
    MalformedCsv {
        path: PathBuf,
        row: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::InvalidConfig(_) => 2,
            _ => 1,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::InvalidConfig(msg.into())
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Parser)]
#[command(name = "jumpgp", version, about = "Jump GP regression and simulation benchmarks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a training set and its noiseless truth grid.
    Generate(GenerateArgs),
    /// Predict at test locations with the local GP and/or the jump GP.
    Predict(PredictArgs),
    /// Run the replicated simulation sweep and summarize the metrics.
    Benchmark(BenchmarkArgs),
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Re-run from a manifest written by an earlier run; other flags are ignored.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Neighborhood size.
    #[arg(long, default_value_t = 25)]
    pub k: usize,
    /// Smoothing sharpness of the boundary indicator.
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    /// Predict with mean c^T C^-1 (y - gamma), dropping the gamma offset.
    #[arg(long)]
    pub paper_literal_mean: bool,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub step_init: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub grad_tol: f64,
    #[arg(long, default_value_t = 1e-9)]
    pub f_tol: f64,
}

impl FitArgs {
    fn fit_config(&self) -> FitConfig {
        FitConfig {
            optimizer: OptimizerConfig {
                max_iters: self.max_iters,
                step_init: self.step_init,
                grad_tol: self.grad_tol,
                f_tol: self.f_tol,
                ..OptimizerConfig::default()
            },
            kappa: self.kappa,
            mean_mode: if self.paper_literal_mean {
                MeanMode::PaperLiteral
            } else {
                MeanMode::Kriging
            },
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value = "a")]
    pub case: String,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 4.0, allow_negative_numbers = true)]
    pub sigma2: f64,
    #[arg(long, env = "JUMPGP_SEED", default_value_t = 1)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodChoice {
    LocalGp,
    JumpGp,
    Both,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Training data: `x1,...,xp,y`.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Test locations: any CSV with columns `x1,...,xp`.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodChoice::Both)]
    pub method: MethodChoice,
    #[arg(long, env = "JUMPGP_SEED", default_value_t = 1)]
    pub seed: u64,
    /// Record per-fit wall time (makes outputs run-dependent).
    #[arg(long)]
    pub timing: bool,
    /// Concurrent fits; defaults to the available parallelism.
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub fit: FitArgs,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long, value_delimiter = ',', default_value = "a,b,c,d")]
    pub cases: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "1,4,9", allow_negative_numbers = true)]
    pub sigma2: Vec<f64>,
    #[arg(long = "k", value_delimiter = ',', default_value = "25,35,50")]
    pub k: Vec<usize>,
    #[arg(long, default_value_t = bench::DESK_REPLICATES)]
    pub replicates: usize,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, env = "JUMPGP_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_KAPPA)]
    pub kappa: f64,
    #[arg(long)]
    pub paper_literal_mean: bool,
    #[arg(long)]
    pub timing: bool,
    /// Fit only grid points in this scope.
    #[arg(long, value_enum, default_value_t = Scope::All)]
    pub scope: Scope,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub case: CaseId,
    pub n: usize,
    pub sigma2: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictConfig {
    pub train: PathBuf,
    pub test: PathBuf,
    pub method: MethodChoice,
    pub k: usize,
    pub seed: u64,
    pub timing: bool,
    pub fit: FitConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", content = "config", rename_all = "kebab-case")]
pub enum RunConfig {
    Generate(GenerateConfig),
    Predict(PredictConfig),
    Benchmark(SweepConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    #[serde(flatten)]
    pub run: RunConfig,
    pub outputs: Vec<String>,
}

fn check_sigma2(s: f64) -> CliResult<()> {
    if s.is_finite() && s >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("sigma2 must be a finite non-negative number, got {s}")))
    }
}

fn check_fit(fit: &FitConfig) -> CliResult<()> {
    if !(fit.kappa > 0.0) {
        return Err(invalid(format!("kappa must be positive, got {}", fit.kappa)));
    }
    fit.optimizer
        .validate()
        .map_err(|e| invalid(e.to_string()))
}

impl RunConfig {
    pub fn validate(&self) -> CliResult<()> {
        match self {
            RunConfig::Generate(g) => {
                check_sigma2(g.sigma2)?;
                if g.n == 0 {
                    return Err(invalid("n must be at least 1"));
                }
            }
            RunConfig::Predict(p) => {
                if p.k == 0 {
                    return Err(invalid("k must be at least 1"));
                }
                check_fit(&p.fit)?;
            }
            RunConfig::Benchmark(s) => {
                if s.cases.is_empty() || s.sigma2.is_empty() || s.k.is_empty() {
                    return Err(invalid("cases, sigma2 and k must be non-empty"));
                }
                s.sigma2.iter().try_for_each(|v| check_sigma2(*v))?;
                if s.k.iter().any(|&k| k == 0 || k > s.experiment.n_train) {
                    return Err(invalid("every k must be in 1..=n"));
                }
                if s.replicates == 0 || s.experiment.n_train == 0 {
                    return Err(invalid("replicates and n must be at least 1"));
                }
                check_fit(&s.experiment.fit)?;
            }
        }
        Ok(())
    }
}

fn parse_case(s: &str) -> CliResult<CaseId> {
    s.parse().map_err(|e: CoreError| invalid(e.to_string()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn load_manifest(path: &Path) -> CliResult<RunConfig> {
    let m: Manifest = read_json(path)?;
    if m.version != MANIFEST_VERSION {
        return Err(invalid(format!("unsupported manifest version {}", m.version)));
    }
    Ok(m.run)
}

fn write_file(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(bytes).map_err(io_err(path))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn write_manifest(dir: &Path, run: &RunConfig, outputs: &[&str]) -> CliResult<()> {
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        run: run.clone(),
        outputs: outputs.iter().map(|s| s.to_string()).collect(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)
}

/// Float with 17 significant digits, exact on re-parse.
pub fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

fn join_row(fields: &[String]) -> String {
    let mut s = fields.join(",");
    s.push('\n');
    s
}

fn x_header(dim: usize) -> Vec<String> {
    (1..=dim).map(|i| format!("x{i}")).collect()
}

pub fn dataset_to_csv(d: &Dataset) -> String {
    let mut header = x_header(d.dim());
    header.push("y".into());
    let mut out = join_row(&header);
    for i in 0..d.len() {
        let mut row: Vec<String> = d.point(i).iter().map(|v| fmt_f64(*v)).collect();
        row.push(fmt_f64(d.response(i)));
        out.push_str(&join_row(&row));
    }
    out
}

pub fn truth_grid_to_csv(g: &TruthGrid) -> String {
    let mut header = x_header(2);
    header.extend(["f_true", "region_id", "boundary_dist"].map(String::from));
    let mut out = join_row(&header);
    for t in 0..g.len() {
        let row = vec![
            fmt_f64(g.points[t][0]),
            fmt_f64(g.points[t][1]),
            fmt_f64(g.f_true[t]),
            g.region_id[t].to_string(),
            fmt_f64(g.boundary_dist[t]),
        ];
        out.push_str(&join_row(&row));
    }
    out
}

/// Reads a CSV into named numeric columns. `required` columns must exist;
/// `x1, x2, ...` are collected in order until the first missing index.
struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_numeric_csv(path: &Path, wanted: impl Fn(&str) -> bool) -> CliResult<Table> {
    let malformed = |row: usize, message: String| CliError::MalformedCsv {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(source) => CliError::Io {
                path: path.to_path_buf(),
                source,
            },
            other => malformed(1, format!("{other:?}")),
        })?;
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let cols: Vec<usize> = (0..header.len()).filter(|&c| wanted(&header[c])).collect();
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        // Row numbers count the header as row 1.
        let row_no = i + 2;
        let rec = rec.map_err(|e| malformed(row_no, e.to_string()))?;
        let vals = cols
            .iter()
            .map(|&c| {
                let field = rec.get(c).unwrap_or("");
                field
                    .parse::<f64>()
                    .map_err(|_| malformed(row_no, format!("column {}: cannot parse {field:?}", header[c])))
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(vals);
    }
    Ok(Table {
        header: cols.iter().map(|&c| header[c].clone()).collect(),
        rows,
    })
}

fn x_columns(header: &[String]) -> usize {
    (1..).take_while(|i| header.iter().any(|h| *h == format!("x{i}"))).count()
}

fn is_x_column(name: &str) -> bool {
    name.strip_prefix('x').is_some_and(|r| !r.is_empty() && r.chars().all(|c| c.is_ascii_digit()))
}

fn project(table: &Table, names: &[String], path: &Path) -> CliResult<Vec<Vec<f64>>> {
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            table.header.iter().position(|h| h == n).ok_or_else(|| CliError::MalformedCsv {
                path: path.to_path_buf(),
                row: 1,
                message: format!("missing column {n}"),
            })
        })
        .collect::<CliResult<_>>()?;
    Ok(table
        .rows
        .iter()
        .map(|r| idx.iter().map(|&i| r[i]).collect())
        .collect())
}

pub fn read_train_csv(path: &Path) -> CliResult<Dataset> {
    let table = read_numeric_csv(path, |h| is_x_column(h) || h == "y")?;
    let dim = x_columns(&table.header);
    if dim == 0 {
        return Err(CliError::MalformedCsv {
            path: path.to_path_buf(),
            row: 1,
            message: "no x1.. columns".into(),
        });
    }
    let xs = project(&table, &x_header(dim), path)?;
    let ys = project(&table, &["y".to_string()], path)?;
    for (i, row) in xs.iter().zip(&ys).enumerate() {
        if row.0.iter().chain(row.1).any(|v| !v.is_finite()) {
            return Err(CliError::MalformedCsv {
                path: path.to_path_buf(),
                row: i + 2,
                message: "non-finite value".into(),
            });
        }
    }
    Ok(Dataset::new(xs, ys.into_iter().map(|r| r[0]).collect())?)
}

pub fn read_locations_csv(path: &Path, dim: usize) -> CliResult<Vec<Vec<f64>>> {
    let table = read_numeric_csv(path, is_x_column)?;
    if x_columns(&table.header) < dim {
        return Err(CliError::MalformedCsv {
            path: path.to_path_buf(),
            row: 1,
            message: format!("expected columns x1..x{dim}"),
        });
    }
    project(&table, &x_header(dim), path)
}

fn build_pool(jobs: Option<usize>) -> CliResult<rayon::ThreadPool> {
    let threads = match jobs {
        Some(0) => return Err(invalid("--jobs must be at least 1")),
        Some(j) => j,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| invalid(e.to_string()))
}

fn run_generate(cfg: &GenerateConfig, out: &Path) -> CliResult<()> {
    let sim = SimCase::new(cfg.case);
    let g = simulation::generate(&sim, cfg.n, cfg.sigma2, cfg.seed)?;
    write_file(&out.join("train.csv"), dataset_to_csv(&g.train).as_bytes())?;
    write_file(&out.join("truth_grid.csv"), truth_grid_to_csv(&g.grid).as_bytes())?;
    Ok(())
}

/// One output row of `predict`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRow {
    pub x: Vec<f64>,
    pub method: bench::Method,
    pub mean: f64,
    pub sd: f64,
    pub chosen_model: ChosenModel,
    pub nll_full: f64,
    pub nll_jump: Option<f64>,
    pub beta: Option<Vec<f64>>,
    pub fit_time_ms: f64,
}

fn predict_location(
    train: &Dataset,
    x: &[f64],
    cfg: &PredictConfig,
    seed: u64,
) -> CliResult<Vec<PredictionRow>> {
    let start = Instant::now();
    let nb = knn_select(train, x, cfg.k)?;
    let elapsed = |t: Instant| if cfg.timing { t.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
    if cfg.method == MethodChoice::LocalGp {
        let fit = estimation::fit_local(&nb, train, &cfg.fit)?;
        let post = crate::localgp::local_gp_posterior_with(&nb, train, &fit.params, cfg.fit.mean_mode)?;
        return Ok(vec![PredictionRow {
            x: x.to_vec(),
            method: bench::Method::LocalGp,
            mean: post.mean,
            sd: post.sd(),
            chosen_model: ChosenModel::Full,
            nll_full: fit.nll,
            nll_jump: None,
            beta: None,
            fit_time_ms: elapsed(start),
        }]);
    }
    let (jf, trace) = estimation::fit_jump_gp_traced(&nb, train, &cfg.fit, seed)?;
    let mut rows = Vec::with_capacity(2);
    if cfg.method == MethodChoice::Both {
        rows.push(PredictionRow {
            x: x.to_vec(),
            method: bench::Method::LocalGp,
            mean: jf.local_posterior.mean,
            sd: jf.local_posterior.sd(),
            chosen_model: ChosenModel::Full,
            nll_full: jf.nll_full,
            nll_jump: None,
            beta: None,
            fit_time_ms: if cfg.timing { trace.full_time.as_secs_f64() * 1e3 } else { 0.0 },
        });
    }
    rows.push(PredictionRow {
        x: x.to_vec(),
        method: bench::Method::JumpGp,
        mean: jf.posterior.mean,
        sd: jf.posterior.sd(),
        chosen_model: jf.chosen,
        nll_full: jf.nll_full,
        nll_jump: Some(jf.nll_jump),
        beta: Some(jf.params.beta.beta.clone()),
        fit_time_ms: elapsed(start),
    });
    Ok(rows)
}

pub fn predictions_to_csv(dim: usize, rows: &[PredictionRow]) -> String {
    let mut header = x_header(dim);
    header.extend(
        ["method", "mean", "sd", "chosen_model", "nll_full", "nll_jump"].map(String::from),
    );
    header.extend((0..=dim).map(|i| format!("beta{i}")));
    header.push("fit_time_ms".into());
    let mut out = join_row(&header);
    for r in rows {
        let mut f: Vec<String> = r.x.iter().map(|v| fmt_f64(*v)).collect();
        f.push(r.method.as_str().into());
        f.push(fmt_f64(r.mean));
        f.push(fmt_f64(r.sd));
        f.push(r.chosen_model.as_str().into());
        f.push(fmt_f64(r.nll_full));
        f.push(r.nll_jump.map(fmt_f64).unwrap_or_default());
        match &r.beta {
            Some(b) => f.extend(b.iter().map(|v| fmt_f64(*v))),
            None => f.extend(std::iter::repeat_n(String::new(), dim + 1)),
        }
        f.push(fmt_f64(r.fit_time_ms));
        out.push_str(&join_row(&f));
    }
    out
}

fn run_predict(cfg: &PredictConfig, out: &Path, jobs: Option<usize>) -> CliResult<()> {
    let train = read_train_csv(&cfg.train)?;
    if cfg.k > train.len() {
        return Err(invalid(format!("k = {} exceeds the {} training rows", cfg.k, train.len())));
    }
    let locations = read_locations_csv(&cfg.test, train.dim())?;
    let pool = build_pool(jobs)?;
    let per_location: Vec<CliResult<Vec<PredictionRow>>> = pool.install(|| {
        locations
            .par_iter()
            .enumerate()
            .map(|(t, x)| predict_location(&train, x, cfg, derive_seed(cfg.seed, &[t as u64])))
            .collect()
    });
    let mut rows = Vec::new();
    for r in per_location {
        rows.extend(r?);
    }
    write_file(&out.join("predictions.csv"), predictions_to_csv(train.dim(), &rows).as_bytes())
}

pub fn reports_to_csv(reports: &[MetricReport]) -> String {
    let header = [
        "case_id", "sigma2", "k", "replicate", "method", "scope", "mape", "mspe", "n_test",
        "failures", "flagged", "full_model_fraction", "wall_time_ms",
    ]
    .map(String::from);
    let mut out = join_row(&header);
    for r in reports {
        let row = vec![
            r.case_id.as_str().to_string(),
            fmt_f64(r.sigma2),
            r.k.to_string(),
            r.replicate.to_string(),
            r.method.as_str().to_string(),
            r.scope.as_str().to_string(),
            fmt_f64(r.mape),
            fmt_f64(r.mspe),
            r.n_test.to_string(),
            r.failures.to_string(),
            r.flagged.to_string(),
            r.full_model_fraction.map(fmt_f64).unwrap_or_default(),
            fmt_f64(r.wall_time_ms),
        ];
        out.push_str(&join_row(&row));
    }
    out
}

#[derive(Debug, Serialize)]
struct SummaryFile<'a> {
    groups: &'a [SummaryRow],
    failed_cells: &'a [(CaseId, f64, usize, usize, String)],
}

fn run_benchmark(cfg: &SweepConfig, out: &Path, jobs: Option<usize>) -> CliResult<()> {
    let pool = build_pool(jobs)?;
    let result = pool.install(|| bench::run_sweep(cfg));
    write_file(&out.join("reports.csv"), reports_to_csv(&result.reports).as_bytes())?;
    write_json(
        &out.join("summary.json"),
        &SummaryFile {
            groups: &result.summary,
            failed_cells: &result.failed_cells,
        },
    )
}

fn resolve(command: &Command) -> CliResult<(RunConfig, &OutputArgs, Option<usize>)> {
    let (output, jobs) = match command {
        Command::Generate(a) => (&a.output, None),
        Command::Predict(a) => (&a.output, a.jobs),
        Command::Benchmark(a) => (&a.output, a.jobs),
    };
    if let Some(path) = &output.from_manifest {
        let run = load_manifest(path)?;
        let same_kind = matches!(
            (command, &run),
            (Command::Generate(_), RunConfig::Generate(_))
                | (Command::Predict(_), RunConfig::Predict(_))
                | (Command::Benchmark(_), RunConfig::Benchmark(_))
        );
        if !same_kind {
            return Err(invalid("manifest was written by a different command"));
        }
        return Ok((run, output, jobs));
    }
    let run = match command {
        Command::Generate(a) => RunConfig::Generate(GenerateConfig {
            case: parse_case(&a.case)?,
            n: a.n,
            sigma2: a.sigma2,
            seed: a.seed,
        }),
        Command::Predict(a) => RunConfig::Predict(PredictConfig {
            train: a.train.clone().ok_or_else(|| invalid("--train is required"))?,
            test: a.test.clone().ok_or_else(|| invalid("--test is required"))?,
            method: a.method,
            k: a.fit.k,
            seed: a.seed,
            timing: a.timing,
            fit: a.fit.fit_config(),
        }),
        Command::Benchmark(a) => RunConfig::Benchmark(SweepConfig {
            cases: a.cases.iter().map(|c| parse_case(c)).collect::<CliResult<_>>()?,
            sigma2: a.sigma2.clone(),
            k: a.k.clone(),
            replicates: a.replicates,
            seed: a.seed,
            experiment: ExperimentConfig {
                n_train: a.n,
                fit: FitConfig {
                    kappa: a.kappa,
                    mean_mode: if a.paper_literal_mean {
                        MeanMode::PaperLiteral
                    } else {
                        MeanMode::Kriging
                    },
                    ..FitConfig::default()
                },
                record_timing: a.timing,
                fit_scope: a.scope,
            },
        }),
    };
    Ok((run, output, jobs))
}

/// Runs a parsed command line.
pub fn execute(cli: &Cli) -> CliResult<()> {
    let (run, output, jobs) = resolve(&cli.command)?;
    run.validate()?;
    fs::create_dir_all(&output.out).map_err(io_err(&output.out))?;
    let out = output.out.as_path();
    let files: &[&str] = match &run {
        RunConfig::Generate(cfg) => {
            run_generate(cfg, out)?;
            &["train.csv", "truth_grid.csv"]
        }
        RunConfig::Predict(cfg) => {
            run_predict(cfg, out, jobs)?;
            &["predictions.csv"]
        }
        RunConfig::Benchmark(cfg) => {
            run_benchmark(cfg, out, jobs)?;
            &["reports.csv", "summary.json"]
        }
    };
    write_manifest(out, &run, files)
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE, 0.0] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap(), v, "{s}");
        }
        assert_eq!(fmt_f64(f64::INFINITY), "inf");
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn x_column_detection() {
        assert!(is_x_column("x1"));
        assert!(is_x_column("x12"));
        assert!(!is_x_column("x"));
        assert!(!is_x_column("xa"));
        assert!(!is_x_column("y"));
    }

    #[test]
    fn negative_sigma2_is_invalid() {
        let run = RunConfig::Generate(GenerateConfig {
            case: CaseId::A,
            n: 10,
            sigma2: -1.0,
            seed: 1,
        });
        assert!(matches!(run.validate(), Err(CliError::InvalidConfig(_))));
    }

    #[test]
    fn manifest_rejects_unknown_keys() {
        let text = r#"{"version":1,"command":"generate","config":{"case":"a","n":5,"sigma2":1.0,"seed":3,"bogus":1},"outputs":[]}"#;
        assert!(serde_json::from_str::<Manifest>(text).is_err());
        let ok = r#"{"version":1,"command":"generate","config":{"case":"a","n":5,"sigma2":1.0,"seed":3},"outputs":[]}"#;
        let m: Manifest = serde_json::from_str(ok).unwrap();
        assert_eq!(
            m.run,
            RunConfig::Generate(GenerateConfig {
                case: CaseId::A,
                n: 5,
                sigma2: 1.0,
                seed: 3
            })
        );
    }
}
