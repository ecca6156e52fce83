//! Monte Carlo replication of the simulation designs: rejection rates, mean
//! norms and interval coverage over seeded replicates.

use kernvim_core::inference::Sequential;
use kernvim_core::pipeline::{derive_seed, Analysis, PipelineConfig};
use kernvim_core::simulate::{sample_dgp, Alternative, DgpConfig, Experiment};
use kernvim_core::Subset;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{CliError, Result};
use crate::measure_spec::{target_weights, MeasureKind};
use crate::runner::Parallel;

/// Replicates may fail (e.g. a fold without treated units); above this
/// fraction the table is not produced.
pub const MAX_FAILURE_FRACTION: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub experiment: Experiment,
    pub n: usize,
    pub sigma: f64,
    pub beta: f64,
    pub alternative: Alternative,
}

#[derive(Debug, Clone)]
pub struct McSpec {
    pub cell: Cell,
    pub measures: Vec<MeasureKind>,
    /// 0-based covariate whose importance is tested.
    pub target: usize,
    pub reps: usize,
    pub seed: u64,
    /// Bootstrap size, level and fitting options; its seed is replaced per
    /// replicate.
    pub pipeline: PipelineConfig,
    pub permutations: usize,
    /// True embedded norm, for interval coverage.
    pub oracle_norm: Option<f64>,
}

/// Outcome of one measure in one replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RepRecord {
    pub p_value: f64,
    pub reject: bool,
    pub norm: f64,
    pub xi_hat: f64,
    pub ci_triangle: [f64; 2],
    pub ci_delta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McRow {
    pub measure: String,
    pub n: usize,
    pub sigma: f64,
    pub beta: f64,
    pub alternative: String,
    pub reps: usize,
    pub reject_rate: f64,
    pub mean_norm: f64,
    /// Fraction of delta-method intervals containing the oracle norm.
    pub coverage: Option<f64>,
    pub failures: usize,
}

impl McRow {
    pub const HEADER: [&'static str; 10] =
        ["measure", "n", "sigma", "beta", "alternative", "reps", "reject_rate", "mean_norm", "coverage", "failures"];

    pub fn fields(&self) -> Vec<String> {
        vec![
            self.measure.clone(),
            self.n.to_string(),
            self.sigma.to_string(),
            self.beta.to_string(),
            self.alternative.clone(),
            self.reps.to_string(),
            self.reject_rate.to_string(),
            self.mean_norm.to_string(),
            self.coverage.map(|c| c.to_string()).unwrap_or_default(),
            self.failures.to_string(),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct McResult {
    pub rows: Vec<McRow>,
    /// `records[m][r]`: measure `m`, replicate `r`; `None` if it failed.
    pub records: Vec<Vec<Option<RepRecord>>>,
}

/// Data seed for replicate `rep`.
pub fn replicate_seed(seed: u64, rep: usize) -> u64 {
    derive_seed(seed, 1000 + rep as u64)
}

type RepOutcome = std::result::Result<RepRecord, String>;

fn run_replicate(spec: &McSpec, rep: usize) -> Vec<RepOutcome> {
    let seed = replicate_seed(spec.seed, rep);
    let prepared = DgpConfig::new(spec.cell.experiment, spec.cell.n, spec.cell.sigma, spec.cell.beta, spec.cell.alternative, seed)
        .and_then(|dgp| sample_dgp(&dgp))
        .and_then(|data| Analysis::prepare(&data, None, &PipelineConfig { seed, ..spec.pipeline.clone() }));
    let mut analysis = match prepared {
        Ok(a) => a,
        Err(e) => return vec![Err(e.to_string()); spec.measures.len()],
    };
    let d = analysis.d();
    let players: Vec<Subset> = (0..d).map(Subset::singleton).collect();
    spec.measures
        .iter()
        .map(|&kind| {
            let omega = target_weights(kind, &players, spec.target, d, spec.permutations, seed).map_err(|e| e.to_string())?;
            let r = analysis.test(&omega, &Sequential).map_err(|e| e.to_string())?.report;
            Ok(RepRecord {
                p_value: r.p_value,
                reject: r.reject,
                norm: r.norm,
                xi_hat: r.xi_hat,
                ci_triangle: r.ci_triangle,
                ci_delta: r.ci_delta,
            })
        })
        .collect()
}

/// Runs `spec.reps` replicates (in parallel over replicates, bootstrap
/// sequential within each) and summarizes them per measure.
pub fn monte_carlo(spec: &McSpec, threads: usize) -> Result<McResult> {
    if spec.reps == 0 {
        return Err(CliError::usage("need at least one replicate"));
    }
    if spec.target >= spec.cell.experiment.dim() {
        return Err(CliError::usage(format!("target {} out of range for {}", spec.target, spec.cell.experiment)));
    }
    let per_rep: Vec<Vec<RepOutcome>> =
        Parallel::new(threads).install(|| (0..spec.reps).into_par_iter().map(|r| run_replicate(spec, r)).collect());
    let mut rows = Vec::new();
    let mut records = Vec::new();
    for (m, kind) in spec.measures.iter().enumerate() {
        let recs: Vec<Option<RepRecord>> = per_rep.iter().map(|r| r[m].as_ref().ok().copied()).collect();
        let ok: Vec<RepRecord> = recs.iter().flatten().copied().collect();
        let failures = recs.len() - ok.len();
        if failures as f64 > MAX_FAILURE_FRACTION * spec.reps as f64 {
            let first = per_rep.iter().find_map(|r| r[m].as_ref().err()).cloned().unwrap_or_default();
            return Err(kernvim_core::Error::Degenerate(format!(
                "{failures} of {} replicates failed for {kind} in {:?}; first failure: {first}",
                spec.reps, spec.cell
            ))
            .into());
        }
        let k = ok.len().max(1) as f64;
        let reject_rate = ok.iter().filter(|r| r.reject).count() as f64 / k;
        let mean_norm = ok.iter().map(|r| r.norm).sum::<f64>() / k;
        let coverage = spec.oracle_norm.map(|truth| {
            ok.iter().filter(|r| r.ci_delta[0] <= truth && truth <= r.ci_delta[1]).count() as f64 / k
        });
        rows.push(McRow {
            measure: kind.name().to_string(),
            n: spec.cell.n,
            sigma: spec.cell.sigma,
            beta: spec.cell.beta,
            alternative: spec.cell.alternative.name().to_string(),
            reps: spec.reps,
            reject_rate,
            mean_norm,
            coverage,
            failures,
        });
        records.push(recs);
    }
    Ok(McResult { rows, records })
}
