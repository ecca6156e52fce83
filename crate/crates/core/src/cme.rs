//! Kernel-ridge estimators of the conditional mean embedding of `X` given
//! `X_V` and of the subset CATE `ν̂(·; V)`.
//!
//! For the empty subset both collapse to empirical means: `ν̂(·; ∅)` is the
//! sample mean of `ψ` and the embedding is `(1/n) Σ_j K(·, X_j)`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{input_err, Result};
use crate::kernel::{cross_gram, gram, GramMatrix, KernelConfig, RidgeSystem};
use crate::linalg::{mean, Matrix};
use crate::nuisance::{FoldAssignment, PseudoOutcomes};
use crate::subset::Subset;

/// Default ridge penalty: `sqrt(log n / n)` up to five covariates,
/// `log²(n) / sqrt(n)` beyond.
pub fn default_lambda(n: usize, d: usize) -> f64 {
    let nf = (n.max(2)) as f64;
    let ln = libm::log(nf);
    if d <= 5 {
        libm::sqrt(ln / nf)
    } else {
        ln * ln / libm::sqrt(nf)
    }
}

#[derive(Debug, Clone)]
enum Embedding {
    Empty,
    Ridge { gram: GramMatrix, system: RidgeSystem },
}

/// Conditional mean embedding model for one covariate subset.
#[derive(Debug, Clone)]
pub struct CmeModel {
    subset: Subset,
    lambda: f64,
    config: KernelConfig,
    embedding: Embedding,
    training_rows: Arc<Matrix>,
}

impl CmeModel {
    pub fn subset(&self) -> Subset {
        self.subset
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn is_empty_subset(&self) -> bool {
        matches!(self.embedding, Embedding::Empty)
    }

    pub fn n(&self) -> usize {
        self.training_rows.rows()
    }

    pub fn training_rows(&self) -> &Arc<Matrix> {
        &self.training_rows
    }

    pub fn gram(&self) -> Option<&GramMatrix> {
        match &self.embedding {
            Embedding::Empty => None,
            Embedding::Ridge { gram, .. } => Some(gram),
        }
    }

    pub fn system(&self) -> Option<&RidgeSystem> {
        match &self.embedding {
            Embedding::Empty => None,
            Embedding::Ridge { system, .. } => Some(system),
        }
    }

    /// Explicit `W_V = (K_V + λI)⁻¹`; `None` for ∅. Intended for inspection
    /// and tests, the estimators work from the factorization.
    pub fn ridge_inverse(&self) -> Option<Matrix> {
        self.system().map(RidgeSystem::inverse)
    }

    /// `W_V K_V b` (equivalently `K_V W_V b`), or `mean(b)·1` for ∅.
    pub fn smooth(&self, b: &[f64]) -> Vec<f64> {
        match &self.embedding {
            Embedding::Empty => vec![mean(b); b.len()],
            Embedding::Ridge { gram, system } => gram.entries().matvec(&system.solve(b)),
        }
    }

    /// Dense matrix of the smoothing map: `K_V (K_V + λI)⁻¹`, or `(1/n)·11ᵀ`
    /// for ∅.
    pub fn smoother_matrix(&self) -> Matrix {
        let n = self.n();
        match &self.embedding {
            Embedding::Empty => Matrix::from_fn(n, n, |_, _| 1.0 / n as f64),
            Embedding::Ridge { gram, system } => {
                // (K+λI)⁻¹K is symmetric as a function of K; solve once, then average
                // the mirrored entries to remove rounding asymmetry.
                let mut h = system.solve_matrix(gram.entries());
                h.symmetrize();
                h
            }
        }
    }
}

/// Builds the embedding model for `subset` over `training_rows` (all `d`
/// standardized covariates; only the subset columns enter the kernel).
pub fn fit_cme(subset: Subset, training_rows: Arc<Matrix>, config: &KernelConfig, lambda: f64) -> Result<CmeModel> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(input_err!("ridge parameter must be positive, got {lambda}"));
    }
    let embedding = if subset.is_empty() {
        Embedding::Empty
    } else {
        let gram = gram(&training_rows, subset, config)?;
        let system = RidgeSystem::new(gram.entries(), lambda)?;
        Embedding::Ridge { gram, system }
    };
    Ok(CmeModel { subset, lambda, config: *config, embedding, training_rows })
}

/// Same as [`fit_cme`] but from a ready-made Gram matrix.
pub fn fit_cme_from_gram(gram: GramMatrix, training_rows: Arc<Matrix>, lambda: f64) -> Result<CmeModel> {
    if gram.n() != training_rows.rows() {
        return Err(input_err!("Gram matrix is {}x{}, training set has {} rows", gram.n(), gram.n(), training_rows.rows()));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(input_err!("ridge parameter must be positive, got {lambda}"));
    }
    let system = RidgeSystem::new(gram.entries(), lambda)?;
    let config = *gram.config();
    Ok(CmeModel { subset: gram.subset(), lambda, config, embedding: Embedding::Ridge { gram, system }, training_rows })
}

/// In-sample KRR fit of `ψ` on `X_V`.
#[derive(Debug, Clone, PartialEq)]
pub struct CateFit {
    subset: Subset,
    alpha: Vec<f64>,
    /// `(K_V + λI)⁻¹ψ`; empty for ∅.
    dual_weights: Vec<f64>,
    psi_mean: f64,
}

impl CateFit {
    pub fn subset(&self) -> Subset {
        self.subset
    }

    /// `ν̂(X_{V,i})` at the training points.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn dual_weights(&self) -> &[f64] {
        &self.dual_weights
    }
}

/// `α = K_V (K_V + λI)⁻¹ ψ`, or `α_i = mean(ψ)` for ∅.
pub fn fit_cate(psi: &PseudoOutcomes, model: &CmeModel) -> Result<CateFit> {
    let n = model.n();
    if psi.len() != n {
        return Err(input_err!("{} pseudo-outcomes for {n} training rows", psi.len()));
    }
    let psi_mean = psi.mean();
    Ok(match &model.embedding {
        Embedding::Empty => CateFit { subset: model.subset, alpha: vec![psi_mean; n], dual_weights: Vec::new(), psi_mean },
        Embedding::Ridge { gram, system } => {
            let dual = system.solve(psi.values());
            let alpha = gram.entries().matvec(&dual);
            CateFit { subset: model.subset, alpha, dual_weights: dual, psi_mean }
        }
    })
}

/// Sample-splitting variant: `α_i` comes from a KRR fit on the other fold
/// only. Dual weights for prediction still use the full-data fit.
pub fn fit_cate_crossfit(psi: &PseudoOutcomes, model: &CmeModel, folds: &FoldAssignment) -> Result<CateFit> {
    let full = fit_cate(psi, model)?;
    if folds.len() != model.n() {
        return Err(input_err!("fold assignment has {} entries for {} rows", folds.len(), model.n()));
    }
    let mut alpha = vec![0.0; model.n()];
    for target_fold in 0..2u8 {
        let target = folds.members(target_fold);
        let train = folds.members(1 - target_fold);
        if target.is_empty() {
            continue;
        }
        if train.is_empty() {
            return Err(input_err!("cross-fitted CATE needs two non-empty folds"));
        }
        let psi_train: Vec<f64> = train.iter().map(|&i| psi.values()[i]).collect();
        match &model.embedding {
            Embedding::Empty => {
                let m = mean(&psi_train);
                target.iter().for_each(|&i| alpha[i] = m);
            }
            Embedding::Ridge { gram, .. } => {
                let k = gram.entries();
                let ktt = Matrix::from_fn(train.len(), train.len(), |a, b| k[(train[a], train[b])]);
                let dual = RidgeSystem::new(&ktt, model.lambda)?.solve(&psi_train);
                for &i in &target {
                    alpha[i] = train.iter().zip(&dual).map(|(&j, w)| k[(i, j)] * w).sum();
                }
            }
        }
    }
    Ok(CateFit { alpha, ..full })
}

/// `ν̂(x_V)` at query points given with all `d` covariate columns.
pub fn predict_cate(fit: &CateFit, model: &CmeModel, queries: &Matrix) -> Result<Vec<f64>> {
    if fit.subset != model.subset {
        return Err(input_err!("CATE fit for {} does not match embedding model for {}", fit.subset, model.subset));
    }
    if queries.cols() != model.training_rows.cols() {
        return Err(input_err!("queries have {} columns, training rows {}", queries.cols(), model.training_rows.cols()));
    }
    match &model.embedding {
        Embedding::Empty => Ok(vec![fit.psi_mean; queries.rows()]),
        Embedding::Ridge { .. } => {
            let kx = cross_gram(queries, &model.training_rows, model.subset, &model.config)?;
            Ok(kx.matvec(&fit.dual_weights))
        }
    }
}
