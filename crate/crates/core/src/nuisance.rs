//! Propensity and outcome-regression nuisances, AIPW pseudo-outcomes and
//! twofold cross-fitting.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cme::default_lambda;
use crate::error::{degenerate_err, input_err, numerical_err, Result};
use crate::kernel::{cross_gram, gram, KernelConfig, RidgeSystem};
use crate::linalg::{dot, mean, Cholesky, Matrix};
use crate::subset::Subset;

/// Observations `(X, A, Y)` with covariate labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    covariates: Matrix,
    treatment: Vec<u8>,
    outcome: Vec<f64>,
    column_names: Vec<String>,
}

impl Dataset {
    pub fn new(covariates: Matrix, treatment: Vec<u8>, outcome: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        let n = covariates.rows();
        if treatment.len() != n || outcome.len() != n {
            return Err(input_err!(
                "row counts disagree: covariates {n}, treatment {}, outcome {}",
                treatment.len(),
                outcome.len()
            ));
        }
        if column_names.len() != covariates.cols() {
            return Err(input_err!("{} column names for {} covariates", column_names.len(), covariates.cols()));
        }
        if n < 4 {
            return Err(input_err!("need at least 4 observations, got {n}"));
        }
        if covariates.cols() == 0 {
            return Err(input_err!("dataset has no covariates"));
        }
        if covariates.cols() > crate::subset::MAX_DIM {
            return Err(input_err!("at most {} covariates are supported", crate::subset::MAX_DIM));
        }
        if let Some(i) = treatment.iter().position(|&a| a > 1) {
            return Err(input_err!("treatment must be 0 or 1; row {i} has {}", treatment[i]));
        }
        if !covariates.all_finite() {
            return Err(input_err!("covariates contain non-finite values"));
        }
        if let Some(i) = outcome.iter().position(|y| !y.is_finite()) {
            return Err(input_err!("outcome row {i} is not finite"));
        }
        Ok(Self { covariates, treatment, outcome, column_names })
    }

    pub fn n(&self) -> usize {
        self.outcome.len()
    }

    pub fn d(&self) -> usize {
        self.covariates.cols()
    }

    pub fn covariates(&self) -> &Matrix {
        &self.covariates
    }

    pub fn treatment(&self) -> &[u8] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Same observations with covariates replaced (e.g. standardized).
    pub fn with_covariates(&self, covariates: Matrix) -> Result<Self> {
        Self::new(covariates, self.treatment.clone(), self.outcome.clone(), self.column_names.clone())
    }

    pub fn with_outcome(&self, outcome: Vec<f64>) -> Result<Self> {
        Self::new(self.covariates.clone(), self.treatment.clone(), outcome, self.column_names.clone())
    }
}

/// Which of the two cross-fitting folds each observation belongs to (0 or 1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment(Vec<u8>);

impl FoldAssignment {
    /// Uniformly random split into two folds whose sizes differ by at most one.
    pub fn random(n: usize, seed: u64) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut folds = vec![0u8; n];
        for (rank, &i) in order.iter().enumerate() {
            folds[i] = if rank < n.div_ceil(2) { 0 } else { 1 };
        }
        Self(folds)
    }

    pub fn from_labels(labels: Vec<u8>) -> Result<Self> {
        if labels.iter().any(|&f| f > 1) {
            return Err(input_err!("fold labels must be 0 or 1"));
        }
        Ok(Self(labels))
    }

    pub fn labels(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn members(&self, fold: u8) -> Vec<usize> {
        self.0.iter().enumerate().filter(|(_, &f)| f == fold).map(|(i, _)| i).collect()
    }
}

/// Nuisance predictions supplied by the user, one row per observation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalNuisances {
    pub g1: Vec<f64>,
    pub mu1: Vec<f64>,
    pub mu0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Learner {
    /// Ridge logistic regression for the propensity and per-arm kernel ridge
    /// regression for the outcome, trained on the opposite fold.
    BuiltIn {
        kernel: KernelConfig,
        /// KRR penalty; `None` uses [`default_lambda`] at the arm's training size.
        lambda: Option<f64>,
        logistic_penalty: f64,
    },
    External(ExternalNuisances),
}

impl Learner {
    pub fn built_in(kernel: KernelConfig) -> Self {
        Learner::BuiltIn { kernel, lambda: None, logistic_penalty: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceFit {
    propensity: Vec<f64>,
    outcome1: Vec<f64>,
    outcome0: Vec<f64>,
    clip: f64,
    folds: FoldAssignment,
}

impl NuisanceFit {
    /// Assembles a fit from raw predictions, clipping the propensity.
    pub fn from_predictions(g1: Vec<f64>, mu1: Vec<f64>, mu0: Vec<f64>, clip: f64, folds: FoldAssignment) -> Result<Self> {
        check_clip(clip)?;
        let n = g1.len();
        if mu1.len() != n || mu0.len() != n || folds.len() != n {
            return Err(input_err!("nuisance predictions have mismatched lengths"));
        }
        if g1.iter().chain(&mu1).chain(&mu0).any(|v| !v.is_finite()) {
            return Err(numerical_err!("nuisance predictions contain non-finite values"));
        }
        let propensity = g1.into_iter().map(|g| g.clamp(clip, 1.0 - clip)).collect();
        Ok(Self { propensity, outcome1: mu1, outcome0: mu0, clip, folds })
    }

    pub fn propensity(&self) -> &[f64] {
        &self.propensity
    }

    pub fn outcome1(&self) -> &[f64] {
        &self.outcome1
    }

    pub fn outcome0(&self) -> &[f64] {
        &self.outcome0
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }

    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }
}

fn check_clip(clip: f64) -> Result<()> {
    if !(clip > 0.0 && clip < 0.5) {
        return Err(input_err!("propensity clip must lie in (0, 0.5), got {clip}"));
    }
    Ok(())
}

pub fn fit_nuisances(data: &Dataset, folds: &FoldAssignment, learner: &Learner, clip: f64) -> Result<NuisanceFit> {
    check_clip(clip)?;
    let n = data.n();
    if folds.len() != n {
        return Err(input_err!("fold assignment has {} entries for {n} rows", folds.len()));
    }
    match learner {
        Learner::External(ext) => {
            if ext.g1.len() != n || ext.mu1.len() != n || ext.mu0.len() != n {
                return Err(input_err!(
                    "external nuisance file has {} rows, dataset has {n}",
                    ext.g1.len().max(ext.mu1.len()).max(ext.mu0.len())
                ));
            }
            NuisanceFit::from_predictions(ext.g1.clone(), ext.mu1.clone(), ext.mu0.clone(), clip, folds.clone())
        }
        Learner::BuiltIn { kernel, lambda, logistic_penalty } => {
            let mut g1 = vec![0.0; n];
            let mut mu1 = vec![0.0; n];
            let mut mu0 = vec![0.0; n];
            for predict_fold in 0..2u8 {
                let train = folds.members(1 - predict_fold);
                let target = folds.members(predict_fold);
                if target.is_empty() {
                    continue;
                }
                let x_train = take_rows(data.covariates(), &train);
                let x_target = take_rows(data.covariates(), &target);
                let a_train: Vec<u8> = train.iter().map(|&i| data.treatment()[i]).collect();
                let y_train: Vec<f64> = train.iter().map(|&i| data.outcome()[i]).collect();

                let treated: Vec<usize> = (0..train.len()).filter(|&k| a_train[k] == 1).collect();
                let control: Vec<usize> = (0..train.len()).filter(|&k| a_train[k] == 0).collect();
                if treated.is_empty() || control.is_empty() {
                    return Err(degenerate_err!(
                        "training fold {} lacks a treatment arm ({} treated, {} control)",
                        1 - predict_fold,
                        treated.len(),
                        control.len()
                    ));
                }

                let labels: Vec<f64> = a_train.iter().map(|&a| f64::from(a)).collect();
                let logit = LogisticRidge::fit(&x_train, &labels, *logistic_penalty)?;
                let p = logit.predict(&x_target);

                let m1 = KernelRidge::fit(&take_rows(&x_train, &treated), &pick(&y_train, &treated), kernel, *lambda)?;
                let m0 = KernelRidge::fit(&take_rows(&x_train, &control), &pick(&y_train, &control), kernel, *lambda)?;
                let p1 = m1.predict(&x_target)?;
                let p0 = m0.predict(&x_target)?;
                for (k, &i) in target.iter().enumerate() {
                    g1[i] = p[k];
                    mu1[i] = p1[k];
                    mu0[i] = p0[k];
                }
            }
            NuisanceFit::from_predictions(g1, mu1, mu0, clip, folds.clone())
        }
    }
}

fn take_rows(x: &Matrix, rows: &[usize]) -> Matrix {
    Matrix::from_fn(rows.len(), x.cols(), |r, j| x[(rows[r], j)])
}

fn pick(v: &[f64], idx: &[usize]) -> Vec<f64> {
    idx.iter().map(|&i| v[i]).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PseudoMode {
    /// AIPW transform whose conditional mean is the CATE.
    Cate,
    /// `ψ = Y`: importance for predicting the outcome itself.
    Prediction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoOutcomes {
    psi: Vec<f64>,
    mode: PseudoMode,
}

impl PseudoOutcomes {
    pub fn new(psi: Vec<f64>, mode: PseudoMode) -> Result<Self> {
        if let Some(i) = psi.iter().position(|v| !v.is_finite()) {
            return Err(numerical_err!("pseudo-outcome {i} is not finite"));
        }
        Ok(Self { psi, mode })
    }

    pub fn values(&self) -> &[f64] {
        &self.psi
    }

    pub fn mode(&self) -> PseudoMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn mean(&self) -> f64 {
        mean(&self.psi)
    }
}

/// `ψ = a/g(1|x)·(y − μ(1,x)) − (1−a)/g(0|x)·(y − μ(0,x)) + μ(1,x) − μ(0,x)`
/// with `g(0|x) = 1 − g(1|x)`, or `ψ = y` in prediction mode.
pub fn pseudo_outcomes(data: &Dataset, fit: Option<&NuisanceFit>, mode: PseudoMode) -> Result<PseudoOutcomes> {
    let psi = match mode {
        PseudoMode::Prediction => data.outcome().to_vec(),
        PseudoMode::Cate => {
            let fit = fit.ok_or_else(|| input_err!("CATE pseudo-outcomes need a nuisance fit"))?;
            if fit.propensity.len() != data.n() {
                return Err(input_err!("nuisance fit has {} rows, dataset has {}", fit.propensity.len(), data.n()));
            }
            (0..data.n())
                .map(|i| {
                    let y = data.outcome()[i];
                    let (g1, m1, m0) = (fit.propensity[i], fit.outcome1[i], fit.outcome0[i]);
                    let residual = if data.treatment()[i] == 1 { (y - m1) / g1 } else { -(y - m0) / (1.0 - g1) };
                    residual + m1 - m0
                })
                .collect()
        }
    };
    PseudoOutcomes::new(psi, mode)
}

/// Fold split, nuisance fit and pseudo-outcomes in one deterministic step.
///
/// Prediction mode needs no nuisances and returns `None` for the fit.
pub fn crossfit_pseudo(
    data: &Dataset,
    learner: &Learner,
    clip: f64,
    mode: PseudoMode,
    seed: u64,
) -> Result<(PseudoOutcomes, Option<NuisanceFit>)> {
    match mode {
        PseudoMode::Prediction => Ok((pseudo_outcomes(data, None, mode)?, None)),
        PseudoMode::Cate => {
            let folds = FoldAssignment::random(data.n(), seed);
            let fit = fit_nuisances(data, &folds, learner, clip)?;
            let psi = pseudo_outcomes(data, Some(&fit), mode)?;
            Ok((psi, Some(fit)))
        }
    }
}

/// Ridge-penalized logistic regression with an unpenalized intercept, fitted
/// by Newton iterations.
#[derive(Debug, Clone)]
pub struct LogisticRidge {
    intercept: f64,
    slopes: Vec<f64>,
}

impl LogisticRidge {
    const TOL: f64 = 1e-8;
    const MAX_ITER: usize = 100;

    pub fn fit(x: &Matrix, labels: &[f64], penalty: f64) -> Result<Self> {
        let n = x.rows();
        let d = x.cols();
        let p = d + 1;
        if labels.len() != n {
            return Err(input_err!("logistic regression: {} labels for {n} rows", labels.len()));
        }
        let mut beta = vec![0.0; p];
        let rate = mean(labels).clamp(1e-6, 1.0 - 1e-6);
        beta[0] = libm::log(rate / (1.0 - rate));
        let mut row = vec![0.0; p];
        for _ in 0..Self::MAX_ITER {
            let mut grad = vec![0.0; p];
            let mut hess = Matrix::zeros(p, p);
            for i in 0..n {
                row[0] = 1.0;
                row[1..].copy_from_slice(x.row(i));
                let prob = expit(dot(&row, &beta));
                let w = prob * (1.0 - prob);
                let r = labels[i] - prob;
                for a in 0..p {
                    grad[a] += r * row[a];
                    let wa = w * row[a];
                    for b in a..p {
                        hess[(a, b)] += wa * row[b];
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    hess[(a, b)] = hess[(b, a)];
                }
            }
            for j in 1..p {
                grad[j] -= penalty * beta[j];
                hess[(j, j)] += penalty;
            }
            // Keeps the intercept direction invertible under complete separation.
            hess[(0, 0)] += 1e-10;
            let step = Cholesky::factor(&hess)
                .map_err(|e| numerical_err!("logistic Newton step failed: {e}"))?
                .solve_vec(&grad);
            let mut largest = 0.0f64;
            for (b, s) in beta.iter_mut().zip(&step) {
                *b += s;
                largest = largest.max(s.abs());
            }
            if beta.iter().any(|b| !b.is_finite()) {
                return Err(numerical_err!("logistic regression diverged"));
            }
            if largest < Self::TOL {
                break;
            }
        }
        Ok(Self { intercept: beta[0], slopes: beta[1..].to_vec() })
    }

    pub fn predict(&self, x: &Matrix) -> Vec<f64> {
        (0..x.rows()).map(|i| expit(self.intercept + dot(x.row(i), &self.slopes))).collect()
    }
}

pub fn expit(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

/// Kernel ridge regression on all covariates, fitted to the centred response
/// and shifted back by the training mean.
#[derive(Debug, Clone)]
pub struct KernelRidge {
    train: Matrix,
    dual: Vec<f64>,
    offset: f64,
    kernel: KernelConfig,
}

impl KernelRidge {
    pub fn fit(x: &Matrix, y: &[f64], kernel: &KernelConfig, lambda: Option<f64>) -> Result<Self> {
        let n = x.rows();
        if n == 0 {
            return Err(degenerate_err!("kernel ridge regression on zero rows"));
        }
        let lambda = lambda.unwrap_or_else(|| default_lambda(n, x.cols()));
        let k = gram(x, Subset::full(x.cols()), kernel)?;
        let offset = mean(y);
        let centred: Vec<f64> = y.iter().map(|v| v - offset).collect();
        let dual = RidgeSystem::new(k.entries(), lambda)?.solve(&centred);
        Ok(Self { train: x.clone(), dual, offset, kernel: *kernel })
    }

    pub fn predict(&self, x: &Matrix) -> Result<Vec<f64>> {
        let kx = cross_gram(x, &self.train, Subset::full(self.train.cols()), &self.kernel)?;
        Ok(kx.matvec(&self.dual).into_iter().map(|v| v + self.offset).collect())
    }
}
