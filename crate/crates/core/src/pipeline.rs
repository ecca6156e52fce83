//! End-to-end analysis: standardize, choose bandwidth and ridge penalty,
//! cross-fit pseudo-outcomes, fit per-subset components, then estimate,
//! bootstrap and test any number of weight vectors on the same fit.

use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cme::{default_lambda, fit_cate, fit_cate_crossfit, fit_cme_from_gram, fit_cme};
use crate::error::{input_err, Result};
use crate::estimator::{build_components, combine, EmbeddedEstimate, SubsetComponents};
use crate::inference::{
    bootstrap_with, confidence_band, half_normal_varsigma, run_test_with_varsigma, validate_bootstrap, BandPoint,
    BootstrapSummary, ReplicateRunner, TestReport, DEFAULT_ALPHA, DEFAULT_BOOTSTRAP,
};
use crate::kernel::{cross_gram, gram, median_heuristic, GramMatrix, KernelConfig, Standardizer};
use crate::linalg::Matrix;
use crate::measures::WeightVector;
use crate::nuisance::{
    fit_nuisances, pseudo_outcomes, Dataset, ExternalNuisances, FoldAssignment, Learner, NuisanceFit, PseudoMode,
    PseudoOutcomes,
};
use crate::subset::Subset;

pub const DEFAULT_CLIP: f64 = 0.01;

/// How `ς̂` for the delta-method interval is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VarsigmaMethod {
    /// Quantile of `√n·|⟨γ̂, H^#⟩|` over the bootstrap draws.
    #[default]
    Bootstrap,
    /// Half-normal quantile with plug-in variance.
    HalfNormal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub alpha: f64,
    pub bootstrap: usize,
    pub seed: u64,
    /// Ridge penalty for the embeddings and CATE fits; default by `n` and `d`.
    pub lambda: Option<f64>,
    /// Kernel bandwidth on standardized covariates; default median heuristic.
    pub bandwidth: Option<f64>,
    pub clip: f64,
    pub mode: PseudoMode,
    /// Fit `α_V` out of fold so no observation predicts its own `ψ`.
    pub strict_splitting: bool,
    pub varsigma: VarsigmaMethod,
    pub logistic_penalty: f64,
    /// Outcome-regression KRR penalty; default by arm training size.
    pub outcome_lambda: Option<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            bootstrap: DEFAULT_BOOTSTRAP,
            seed: 0,
            lambda: None,
            bandwidth: None,
            clip: DEFAULT_CLIP,
            mode: PseudoMode::Cate,
            strict_splitting: false,
            varsigma: VarsigmaMethod::Bootstrap,
            logistic_penalty: 1.0,
            outcome_lambda: None,
        }
    }
}

/// Independent sub-seeds for the random steps of one run.
pub fn derive_seed(seed: u64, purpose: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose + 1);
    rng.next_u64()
}

pub const SEED_FOLDS: u64 = 0;
pub const SEED_BOOTSTRAP: u64 = 1;
pub const SEED_PERMUTATIONS: u64 = 2;

/// Bytes of cached dense smoothing matrices allowed per analysis.
const SMOOTHER_CACHE_BYTES: usize = 1 << 31;

/// Fitted state shared by every measure tested on one dataset.
#[derive(Debug, Clone)]
pub struct Analysis {
    config: PipelineConfig,
    standardizer: Standardizer,
    rows: Arc<Matrix>,
    kernel: KernelConfig,
    lambda: f64,
    folds: FoldAssignment,
    nuisances: Option<NuisanceFit>,
    psi: PseudoOutcomes,
    full_gram: GramMatrix,
    components: Vec<SubsetComponents>,
    cached_smoothers: usize,
}

impl Analysis {
    pub fn prepare(data: &Dataset, external: Option<ExternalNuisances>, config: &PipelineConfig) -> Result<Self> {
        validate_bootstrap(config.bootstrap, config.alpha)?;
        let (n, d) = (data.n(), data.d());
        let standardizer = Standardizer::fit(data.covariates());
        let rows = Arc::new(standardizer.transform(data.covariates())?);
        let bandwidth = match config.bandwidth {
            Some(h) => h,
            None => median_heuristic(&rows)?,
        };
        let kernel = KernelConfig::gaussian(bandwidth)?;
        let lambda = config.lambda.unwrap_or_else(|| default_lambda(n, d));
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(input_err!("ridge parameter must be positive, got {lambda}"));
        }
        let folds = FoldAssignment::random(n, derive_seed(config.seed, SEED_FOLDS));
        let standardized = data.with_covariates((*rows).clone())?;
        let nuisances = match config.mode {
            PseudoMode::Prediction => None,
            PseudoMode::Cate => {
                let learner = match external {
                    Some(ext) => Learner::External(ext),
                    None => Learner::BuiltIn {
                        kernel,
                        lambda: config.outcome_lambda,
                        logistic_penalty: config.logistic_penalty,
                    },
                };
                Some(fit_nuisances(&standardized, &folds, &learner, config.clip)?)
            }
        };
        let psi = pseudo_outcomes(&standardized, nuisances.as_ref(), config.mode)?;
        let full_gram = gram(&rows, Subset::full(d), &kernel)?;
        Ok(Self {
            config: config.clone(),
            standardizer,
            rows,
            kernel,
            lambda,
            folds,
            nuisances,
            psi,
            full_gram,
            components: Vec::new(),
            cached_smoothers: 0,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.rows.rows()
    }

    pub fn d(&self) -> usize {
        self.rows.cols()
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn bandwidth(&self) -> f64 {
        self.kernel.bandwidth()
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn pseudo_outcomes(&self) -> &PseudoOutcomes {
        &self.psi
    }

    pub fn nuisances(&self) -> Option<&NuisanceFit> {
        self.nuisances.as_ref()
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn standardized_rows(&self) -> &Arc<Matrix> {
        &self.rows
    }

    pub fn full_gram(&self) -> &GramMatrix {
        &self.full_gram
    }

    pub fn components(&self) -> &[SubsetComponents] {
        &self.components
    }

    /// Fits embedding and CATE components for any subsets not yet fitted.
    pub fn ensure_subsets(&mut self, subsets: impl IntoIterator<Item = Subset>) -> Result<()> {
        let full = Subset::full(self.d());
        for s in subsets {
            if !s.is_subset_of(full) {
                return Err(input_err!("subset {s} refers to covariates beyond the {} available", self.d()));
            }
            if self.components.iter().any(|c| c.subset() == s) {
                continue;
            }
            let model = if s == full {
                fit_cme_from_gram(self.full_gram.clone(), self.rows.clone(), self.lambda)?
            } else {
                fit_cme(s, self.rows.clone(), &self.kernel, self.lambda)?
            };
            let cate = if self.config.strict_splitting {
                fit_cate_crossfit(&self.psi, &model, &self.folds)?
            } else {
                fit_cate(&self.psi, &model)?
            };
            self.components.push(build_components(&self.psi, &cate, Arc::new(model))?);
        }
        Ok(())
    }

    pub fn estimate(&mut self, omega: &WeightVector) -> Result<EmbeddedEstimate> {
        self.ensure_subsets(omega.subsets())?;
        combine(&self.components, omega)
    }

    fn cache_smoothers(&mut self, omega: &WeightVector) {
        let per = self.n() * self.n() * core::mem::size_of::<f64>();
        for s in omega.subsets().filter(|s| !s.is_empty()) {
            if (self.cached_smoothers + 1) * per > SMOOTHER_CACHE_BYTES {
                return;
            }
            if let Some(c) = self.components.iter_mut().find(|c| c.subset() == s) {
                c.cache_smoother();
                self.cached_smoothers += 1;
            }
        }
    }

    /// Bootstrap draws for `omega`, using the run's bootstrap seed.
    pub fn bootstrap(&mut self, omega: &WeightVector, est: &EmbeddedEstimate, runner: &dyn ReplicateRunner) -> Result<BootstrapSummary> {
        self.ensure_subsets(omega.subsets())?;
        self.cache_smoothers(omega);
        bootstrap_with(
            runner,
            &self.components,
            omega,
            est,
            &self.full_gram,
            self.config.bootstrap,
            self.config.alpha,
            derive_seed(self.config.seed, SEED_BOOTSTRAP),
        )
    }

    /// Estimate, bootstrap and test one weight vector.
    pub fn test(&mut self, omega: &WeightVector, runner: &dyn ReplicateRunner) -> Result<Outcome> {
        let estimate = self.estimate(omega)?;
        let boot = self.bootstrap(omega, &estimate, runner)?;
        let varsigma = match self.config.varsigma {
            VarsigmaMethod::Bootstrap => boot.varsigma_at(self.config.alpha),
            VarsigmaMethod::HalfNormal => {
                half_normal_varsigma(&self.components, omega, &estimate, &self.full_gram, self.config.alpha)?
            }
        };
        let report = run_test_with_varsigma(&estimate, &self.full_gram, &boot, self.config.alpha, varsigma)?;
        Ok(Outcome { estimate, bootstrap: boot, report })
    }

    /// Sup-norm band at query points given in the original covariate units.
    pub fn band(&self, outcome: &Outcome, queries: &Matrix) -> Result<Vec<BandPoint>> {
        let q = self.standardizer.transform(queries)?;
        let k_cross = cross_gram(&q, &self.rows, Subset::full(self.d()), &self.kernel)?;
        confidence_band(&outcome.estimate, outcome.report.xi_hat, &k_cross)
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub estimate: EmbeddedEstimate,
    pub bootstrap: BootstrapSummary,
    pub report: TestReport,
}
