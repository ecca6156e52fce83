//! `kernvim test | band | simulate`.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use kernvim_core::inference::bh_adjust;
use kernvim_core::measures::{WeightVector, DEFAULT_PERMUTATIONS};
use kernvim_core::nuisance::PseudoMode;
use kernvim_core::pipeline::{Analysis, PipelineConfig, VarsigmaMethod, DEFAULT_CLIP};
use kernvim_core::simulate::{Alternative, Experiment};
use kernvim_core::{Matrix, Subset};

use crate::error::{CliError, Result};
use crate::io::{csv_string, read_dataset, read_nuisances, write_output, ColumnSpec, LoadedData};
use crate::measure_spec::{loco, target_weights, MeasureKind};
use crate::montecarlo::{monte_carlo, Cell, McRow, McSpec};
use crate::report::{ConfigEcho, GroupEcho, TestOutput, VariableResult};
use crate::runner::Parallel;

#[derive(Debug, Parser)]
#[command(name = "kernvim", version, about = "Kernel-embedded variable importance tests for treatment effect heterogeneity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test variables for importance and report norm confidence intervals.
    Test(TestArgs),
    /// Export a sup-norm confidence band along one covariate.
    Band(BandArgs),
    /// Rejection rates on the simulation designs.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Cate,
    Prediction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VarsigmaArg {
    Bootstrap,
    HalfNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentArg {
    Exp1,
    Exp2,
    Exp3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AlternativeArg {
    Smooth,
    Rough,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    /// Test level.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Bootstrap replicates.
    #[arg(long, default_value_t = 4999)]
    pub bootstrap: usize,
    /// Seed for all randomness (falls back to KERNVIM_SEED).
    #[arg(long, env = "KERNVIM_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Ridge penalty (default depends on n and the number of covariates).
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Gaussian bandwidth on standardized covariates (default: median pairwise Euclidean distance).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Propensity clipping level.
    #[arg(long, default_value_t = DEFAULT_CLIP)]
    pub clip: f64,
    /// Permutations for shapley-mc.
    #[arg(long, default_value_t = DEFAULT_PERMUTATIONS)]
    pub permutations: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Cate)]
    pub mode: ModeArg,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Fit subset CATEs out of fold.
    #[arg(long)]
    pub strict_splitting: bool,
    /// How the delta-method interval scale is estimated.
    #[arg(long, value_enum, default_value_t = VarsigmaArg::Bootstrap)]
    pub varsigma: VarsigmaArg,
}

impl FitArgs {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            alpha: self.alpha,
            bootstrap: self.bootstrap,
            seed: self.seed,
            lambda: self.lambda,
            bandwidth: self.bandwidth,
            clip: self.clip,
            mode: match self.mode {
                ModeArg::Cate => PseudoMode::Cate,
                ModeArg::Prediction => PseudoMode::Prediction,
            },
            strict_splitting: self.strict_splitting,
            varsigma: match self.varsigma {
                VarsigmaArg::Bootstrap => VarsigmaMethod::Bootstrap,
                VarsigmaArg::HalfNormal => VarsigmaMethod::HalfNormal,
            },
            ..PipelineConfig::default()
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Headered CSV with one row per participant.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub outcome: String,
    #[arg(long)]
    pub treatment: String,
    /// Covariate columns (default: all other columns).
    #[arg(long, value_delimiter = ',')]
    pub covariates: Vec<String>,
    /// Externally fitted nuisances: CSV with columns g1,mu1,mu0.
    #[arg(long)]
    pub nuisances: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    #[arg(long, value_enum, value_delimiter = ',', default_value = "koi")]
    pub measure: Vec<MeasureKind>,
    /// Covariates to test; a categorical name tests all its levels jointly,
    /// `a+b` tests a set (default: every covariate).
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Larger subset for loco.
    #[arg(long, value_delimiter = ',')]
    pub subset: Vec<String>,
    /// Nested smaller subset for loco (default: empty).
    #[arg(long, value_delimiter = ',')]
    pub baseline_subset: Vec<String>,
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub measures: MeasureArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// JSON report path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional flat CSV table of the results.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct BandArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub measures: MeasureArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Covariate column varied along the grid (default: first target column).
    #[arg(long)]
    pub axis: Option<String>,
    #[arg(long, default_value_t = 100)]
    pub grid_points: usize,
    /// Band CSV path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum, value_delimiter = ',', num_args = 0.., default_value = "exp3")]
    pub experiment: Vec<ExperimentArg>,
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "500")]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "0")]
    pub sigma: Vec<f64>,
    #[arg(long, value_delimiter = ',', num_args = 0.., default_value = "0")]
    pub beta: Vec<f64>,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 0.., default_value = "smooth")]
    pub alternative: Vec<AlternativeArg>,
    #[arg(long, value_enum, value_delimiter = ',', num_args = 0.., default_value = "koi")]
    pub measure: Vec<MeasureKind>,
    /// Covariate tested, `X1`, `X2`, ...
    #[arg(long, default_value = "X1")]
    pub targets: String,
    #[arg(long, default_value_t = 200)]
    pub reps: usize,
    /// True embedded norm, for interval coverage.
    #[arg(long)]
    pub oracle_norm: Option<f64>,
    #[command(flatten)]
    pub fit: FitArgs,
    /// CSV table path (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Optional JSON table path.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Test(a) => {
            let out = cmd_test(&a)?;
            let json = serde_json::to_string_pretty(&out).map_err(|e| CliError::usage(e.to_string()))? + "\n";
            write_output(a.out.as_deref(), &json)?;
            if let Some(p) = &a.csv {
                let header: Vec<String> = VariableResult::HEADER.iter().map(|s| s.to_string()).collect();
                let rows: Vec<Vec<String>> = out.results.iter().map(VariableResult::fields).collect();
                write_output(Some(p), &csv_string(&header, &rows)?)?;
            }
            Ok(())
        }
        Command::Band(a) => {
            let csv = cmd_band(&a)?;
            write_output(a.out.as_deref(), &csv)
        }
        Command::Simulate(a) => {
            let rows = cmd_simulate(&a)?;
            let header: Vec<String> = McRow::HEADER.iter().map(|s| s.to_string()).collect();
            let fields: Vec<Vec<String>> = rows.iter().map(McRow::fields).collect();
            write_output(a.out.as_deref(), &csv_string(&header, &fields)?)?;
            if let Some(p) = &a.json {
                let json = serde_json::to_string_pretty(&rows).map_err(|e| CliError::usage(e.to_string()))? + "\n";
                write_output(Some(p), &json)?;
            }
            Ok(())
        }
    }
}

fn load(data: &DataArgs) -> Result<LoadedData> {
    let covariates = (!data.covariates.is_empty()).then_some(data.covariates.as_slice());
    read_dataset(&data.input, ColumnSpec { outcome: &data.outcome, treatment: &data.treatment, covariates })
}

/// One requested test: a label, its covariate columns and weights.
struct Job {
    measure: MeasureKind,
    label: String,
    columns: Subset,
    omega: WeightVector,
}

fn column_names(data: &LoadedData, s: Subset) -> Vec<String> {
    s.indices().map(|j| data.dataset.column_names()[j].clone()).collect()
}

fn plan_jobs(data: &LoadedData, m: &MeasureArgs, fit: &FitArgs) -> Result<Vec<Job>> {
    let d = data.dataset.d();
    let targets: Vec<String> = if m.targets.is_empty() {
        data.groups.iter().map(|g| g.name.clone()).collect()
    } else {
        m.targets.clone()
    };
    let mut jobs = Vec::new();
    for &kind in &m.measure {
        if kind == MeasureKind::Loco {
            if m.subset.is_empty() {
                return Err(CliError::usage("loco needs --subset (and optionally --baseline-subset)"));
            }
            let larger = data.resolve_list(&m.subset)?;
            let smaller = data.resolve_list(&m.baseline_subset)?;
            let label = format!("{} vs {}", m.subset.join("+"), if m.baseline_subset.is_empty() { "{}".to_string() } else { m.baseline_subset.join("+") });
            jobs.push(Job { measure: kind, label, columns: larger.difference(smaller), omega: loco(larger, smaller)? });
            continue;
        }
        for t in &targets {
            let parts: Vec<String> = t.split('+').map(|p| p.trim().to_string()).collect();
            let columns = data.resolve_list(&parts)?;
            let omega = match kind {
                MeasureKind::Shapley | MeasureKind::ShapleyMc => {
                    // Players are the input covariates; the target must be one of them.
                    let players: Vec<Subset> = data.groups.iter().map(|g| g.columns).collect();
                    let index = players.iter().position(|&p| p == columns).ok_or_else(|| {
                        CliError::usage(format!("Shapley targets must name a single input covariate, got {t:?}"))
                    })?;
                    target_weights(kind, &players, index, d, fit.permutations, fit.seed)?
                }
                _ => target_weights(kind, &[columns], 0, d, fit.permutations, fit.seed)?,
            };
            jobs.push(Job { measure: kind, label: t.clone(), columns, omega });
        }
    }
    Ok(jobs)
}

fn echo(a: &DataArgs, m: &MeasureArgs, fit: &FitArgs, data: &LoadedData, analysis: &Analysis, targets: Vec<String>) -> ConfigEcho {
    let cfg = analysis.config();
    ConfigEcho {
        input: a.input.display().to_string(),
        outcome: a.outcome.clone(),
        treatment: a.treatment.clone(),
        columns: data.dataset.column_names().to_vec(),
        groups: data.groups.iter().map(|g| GroupEcho { name: g.name.clone(), columns: column_names(data, g.columns) }).collect(),
        nuisances: a.nuisances.as_ref().map(|p| p.display().to_string()),
        n: analysis.n(),
        measures: m.measure.clone(),
        targets,
        alpha: cfg.alpha,
        bootstrap: cfg.bootstrap,
        seed: cfg.seed,
        bandwidth: analysis.bandwidth(),
        bandwidth_source: if cfg.bandwidth.is_some() { "user" } else { "median-heuristic" },
        lambda: analysis.lambda(),
        lambda_source: if cfg.lambda.is_some() { "user" } else { "default" },
        clip: cfg.clip,
        permutations: fit.permutations,
        mode: match cfg.mode {
            PseudoMode::Cate => "cate",
            PseudoMode::Prediction => "prediction",
        },
        strict_splitting: cfg.strict_splitting,
        varsigma: match cfg.varsigma {
            VarsigmaMethod::Bootstrap => "bootstrap",
            VarsigmaMethod::HalfNormal => "half-normal",
        },
        threads: Parallel::new(fit.threads).threads(),
    }
}

fn prepare(data: &LoadedData, a: &DataArgs, fit: &FitArgs) -> Result<Analysis> {
    let external = a.nuisances.as_deref().map(read_nuisances).transpose()?;
    if external.is_some() && fit.mode == ModeArg::Prediction {
        return Err(CliError::usage("--nuisances has no effect in prediction mode"));
    }
    Ok(Analysis::prepare(&data.dataset, external, &fit.pipeline())?)
}

pub fn cmd_test(a: &TestArgs) -> Result<TestOutput> {
    let data = load(&a.data)?;
    let jobs = plan_jobs(&data, &a.measures, &a.fit)?;
    let mut analysis = prepare(&data, &a.data, &a.fit)?;
    let runner = Parallel::new(a.fit.threads);
    let mut results: Vec<VariableResult> = Vec::new();
    for job in &jobs {
        let out = analysis.test(&job.omega, &runner)?;
        let mut r = VariableResult::new(job.measure, job.label.clone(), column_names(&data, job.columns), &out.report);
        r.seed = a.fit.seed;
        results.push(r);
    }
    for kind in &a.measures.measure {
        let idx: Vec<usize> = (0..results.len()).filter(|&i| results[i].measure == *kind).collect();
        let p: Vec<f64> = idx.iter().map(|&i| results[i].p_value).collect();
        for (&i, q) in idx.iter().zip(bh_adjust(&p)?) {
            results[i].p_value_bh = q;
        }
    }
    let targets = jobs.iter().map(|j| j.label.clone()).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let config = echo(&a.data, &a.measures, &a.fit, &data, &analysis, targets);
    Ok(TestOutput { config, results })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

pub fn cmd_band(a: &BandArgs) -> Result<String> {
    let data = load(&a.data)?;
    if a.measures.measure.len() != 1 {
        return Err(CliError::usage("band takes exactly one --measure"));
    }
    if a.measures.targets.len() > 1 {
        return Err(CliError::usage("band takes at most one target"));
    }
    if a.grid_points == 0 {
        return Err(CliError::usage("--grid-points must be positive"));
    }
    let jobs = plan_jobs(&data, &a.measures, &a.fit)?;
    let job = jobs.first().ok_or_else(|| CliError::usage("nothing to estimate"))?;
    let axis = match &a.axis {
        Some(name) => data.resolve(name)?,
        None => Subset::singleton(job.columns.indices().next().ok_or_else(|| CliError::usage("empty target"))?),
    };
    if axis.len() != 1 {
        return Err(CliError::usage("--axis must name a single numeric column"));
    }
    let axis = axis.indices().next().unwrap_or(0);

    let mut analysis = prepare(&data, &a.data, &a.fit)?;
    let out = analysis.test(&job.omega, &Parallel::new(a.fit.threads))?;

    let x = data.dataset.covariates();
    let d = x.cols();
    // Other covariates sit at their medians; a categorical group sits at its
    // most frequent level so the grid stays on valid one-hot rows.
    let mut medians: Vec<f64> = (0..d).map(|j| median(&mut x.column(j))).collect();
    for g in data.groups.iter().filter(|g| g.levels.is_some()) {
        let cols: Vec<usize> = g.columns.indices().collect();
        let counts: Vec<f64> = cols.iter().map(|&j| x.column(j).iter().sum()).collect();
        let top = (0..cols.len()).fold(0, |b, i| if counts[i] > counts[b] { i } else { b });
        for (i, &j) in cols.iter().enumerate() {
            medians[j] = if i == top { 1.0 } else { 0.0 };
        }
    }
    let col = x.column(axis);
    let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let g = a.grid_points;
    let grid = Matrix::from_fn(g, d, |i, j| {
        if j != axis {
            medians[j]
        } else if g == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * i as f64 / (g - 1) as f64
        }
    });
    let band = analysis.band(&out, &grid)?;

    let mut header: Vec<String> = data.dataset.column_names().to_vec();
    header.extend(["estimate", "lower", "upper"].map(String::from));
    let rows: Vec<Vec<String>> = band
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let mut r: Vec<String> = grid.row(i).iter().map(f64::to_string).collect();
            r.extend([p.estimate, p.lower, p.upper].map(|v| v.to_string()));
            r
        })
        .collect();
    csv_string(&header, &rows)
}

fn parse_target(name: &str, d: usize) -> Result<usize> {
    let k: usize = name
        .strip_prefix('X')
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| CliError::usage(format!("simulation targets are X1..X{d}, got {name:?}")))?;
    if k == 0 || k > d {
        return Err(CliError::usage(format!("simulation targets are X1..X{d}, got {name:?}")));
    }
    Ok(k - 1)
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Vec<McRow>> {
    let mut rows = Vec::new();
    for &e in &a.experiment {
        let experiment = match e {
            ExperimentArg::Exp1 => Experiment::Exp1,
            ExperimentArg::Exp2 => Experiment::Exp2,
            ExperimentArg::Exp3 => Experiment::Exp3,
        };
        let target = parse_target(&a.targets, experiment.dim())?;
        for &n in &a.n {
            for &sigma in &a.sigma {
                for &beta in &a.beta {
                    for &alt in &a.alternative {
                        let alternative = match alt {
                            AlternativeArg::Smooth => Alternative::Smooth,
                            AlternativeArg::Rough => Alternative::Rough,
                        };
                        if a.measure.is_empty() {
                            continue;
                        }
                        let spec = McSpec {
                            cell: Cell { experiment, n, sigma, beta, alternative },
                            measures: a.measure.clone(),
                            target,
                            reps: a.reps,
                            seed: a.fit.seed,
                            pipeline: a.fit.pipeline(),
                            permutations: a.fit.permutations,
                            oracle_norm: a.oracle_norm,
                        };
                        rows.extend(monte_carlo(&spec, a.fit.threads)?.rows);
                    }
                }
            }
        }
    }
    Ok(rows)
}
