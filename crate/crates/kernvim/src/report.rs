//! Serialized forms of test results.

use kernvim_core::inference::TestReport;
use serde::Serialize;

use crate::measure_spec::MeasureKind;

/// Everything needed to rerun an analysis, with defaults resolved.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigEcho {
    pub input: String,
    pub outcome: String,
    pub treatment: String,
    /// Encoded covariate columns in kernel order.
    pub columns: Vec<String>,
    pub groups: Vec<GroupEcho>,
    pub nuisances: Option<String>,
    pub n: usize,
    pub measures: Vec<MeasureKind>,
    pub targets: Vec<String>,
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
    pub bandwidth: f64,
    pub bandwidth_source: &'static str,
    pub lambda: f64,
    pub lambda_source: &'static str,
    pub clip: f64,
    pub permutations: usize,
    pub mode: &'static str,
    pub strict_splitting: bool,
    pub varsigma: &'static str,
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupEcho {
    pub name: String,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VariableResult {
    pub measure: MeasureKind,
    pub target: String,
    pub columns: Vec<String>,
    pub norm: f64,
    pub norm_sq: f64,
    pub statistic: f64,
    pub ci_triangle: [f64; 2],
    pub ci_delta: [f64; 2],
    pub p_value: f64,
    /// Benjamini–Hochberg adjusted across the targets of this measure.
    pub p_value_bh: f64,
    pub reject: bool,
    pub xi_hat: f64,
    pub varsigma_hat: f64,
    pub bootstrap: usize,
    /// The run seed; bootstrap and permutation streams are derived from it.
    pub seed: u64,
}

impl VariableResult {
    pub fn new(measure: MeasureKind, target: String, columns: Vec<String>, r: &TestReport) -> Self {
        Self {
            measure,
            target,
            columns,
            norm: r.norm,
            norm_sq: r.norm_sq,
            statistic: r.statistic,
            ci_triangle: r.ci_triangle,
            ci_delta: r.ci_delta,
            p_value: r.p_value,
            p_value_bh: r.p_value,
            reject: r.reject,
            xi_hat: r.xi_hat,
            varsigma_hat: r.varsigma_hat,
            bootstrap: r.b,
            seed: r.seed,
        }
    }

    pub const HEADER: [&'static str; 14] = [
        "measure",
        "target",
        "norm",
        "ci_triangle_lower",
        "ci_triangle_upper",
        "ci_delta_lower",
        "ci_delta_upper",
        "p_value",
        "p_value_bh",
        "reject",
        "xi_hat",
        "varsigma_hat",
        "bootstrap",
        "seed",
    ];

    pub fn fields(&self) -> Vec<String> {
        vec![
            self.measure.name().to_string(),
            self.target.clone(),
            self.norm.to_string(),
            self.ci_triangle[0].to_string(),
            self.ci_triangle[1].to_string(),
            self.ci_delta[0].to_string(),
            self.ci_delta[1].to_string(),
            self.p_value.to_string(),
            self.p_value_bh.to_string(),
            self.reject.to_string(),
            self.xi_hat.to_string(),
            self.varsigma_hat.to_string(),
            self.bootstrap.to_string(),
            self.seed.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestOutput {
    pub config: ConfigEcho,
    pub results: Vec<VariableResult>,
}
