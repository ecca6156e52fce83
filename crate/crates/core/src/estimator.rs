//! One-step estimator of the embedded importance function, stored as a
//! kernel coefficient vector `c` so that `γ̂(x) = Σ_j c_j K(x, X_j)`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cme::{CateFit, CmeModel};
use crate::error::{input_err, numerical_err, Result};
use crate::kernel::{GramMatrix, KernelConfig};
use crate::linalg::{axpy, dot, Matrix};
use crate::measures::{Measure, WeightVector};
use crate::nuisance::PseudoOutcomes;
use crate::subset::Subset;

/// Per-subset pieces of the estimated influence function.
#[derive(Debug, Clone)]
pub struct SubsetComponents {
    subset: Subset,
    alpha: Vec<f64>,
    beta: Vec<f64>,
    model: Arc<CmeModel>,
    smoother: Option<Arc<Matrix>>,
}

impl SubsetComponents {
    pub fn subset(&self) -> Subset {
        self.subset
    }

    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// `α_{V,i} = ν̂(X_{V,i})`.
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `β_{V,i} = ψ_i − α_{V,i}`.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn model(&self) -> &Arc<CmeModel> {
        &self.model
    }

    /// `W_V K_V b`, or `mean(b)·1` for ∅.
    pub fn smooth(&self, b: &[f64]) -> Vec<f64> {
        match &self.smoother {
            Some(s) => s.matvec(b),
            None => self.model.smooth(b),
        }
    }

    /// Dense smoothing matrix, cached if [`Self::cache_smoother`] was called.
    pub fn smoother_matrix(&self) -> Arc<Matrix> {
        match &self.smoother {
            Some(s) => s.clone(),
            None => Arc::new(self.model.smoother_matrix()),
        }
    }

    /// Materializes and keeps the dense `n×n` smoothing matrix so repeated
    /// bootstrap plans over the same subset skip the `O(n³)` solve.
    pub fn cache_smoother(&mut self) {
        if self.smoother.is_none() {
            self.smoother = Some(Arc::new(self.model.smoother_matrix()));
        }
    }
}

pub fn build_components(psi: &PseudoOutcomes, cate: &CateFit, cme: Arc<CmeModel>) -> Result<SubsetComponents> {
    if cate.subset() != cme.subset() {
        return Err(input_err!("CATE fit for {} does not match embedding model for {}", cate.subset(), cme.subset()));
    }
    let n = cme.n();
    if psi.len() != n || cate.alpha().len() != n {
        return Err(input_err!("length mismatch: {} pseudo-outcomes, {} fitted values, {n} rows", psi.len(), cate.alpha().len()));
    }
    let alpha = cate.alpha().to_vec();
    let beta = psi.values().iter().zip(&alpha).map(|(p, a)| p - a).collect();
    Ok(SubsetComponents { subset: cme.subset(), alpha, beta, model: cme, smoother: None })
}

/// `γ̂_ω^K` as kernel coefficients over the training points.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddedEstimate {
    coefficients: Vec<f64>,
    measure: Measure,
    kernel: KernelConfig,
}

impl EmbeddedEstimate {
    pub fn new(coefficients: Vec<f64>, measure: Measure, kernel: KernelConfig) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) {
            return Err(numerical_err!("non-finite estimator coefficient"));
        }
        Ok(Self { coefficients, measure, kernel })
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.coefficients.len()
    }
}

pub(crate) fn find_component(components: &[SubsetComponents], subset: Subset) -> Result<&SubsetComponents> {
    components
        .iter()
        .find(|c| c.subset == subset)
        .ok_or_else(|| input_err!("no fitted components for subset {subset}"))
}

/// `c = (1/n) Σ_V ω_V (α_V + W_V K_V β_V)`.
///
/// For ∅ the smoothing term is `mean(β_∅)·1`, which vanishes because
/// `α_∅ = mean(ψ)`, leaving `(mean(ψ)/n)·1`.
pub fn combine(components: &[SubsetComponents], omega: &WeightVector) -> Result<EmbeddedEstimate> {
    let first = components.first().ok_or_else(|| input_err!("no subset components supplied"))?;
    let n = first.n();
    let kernel = *first.model.config();
    let mut c = vec![0.0; n];
    for (subset, w) in omega.iter() {
        let comp = find_component(components, subset)?;
        if comp.n() != n {
            return Err(input_err!("components for {subset} have {} rows, expected {n}", comp.n()));
        }
        if *comp.model.config() != kernel {
            return Err(input_err!("components for {subset} use a different kernel"));
        }
        let smoothed = comp.smooth(&comp.beta);
        let scale = w / n as f64;
        axpy(scale, &comp.alpha, &mut c);
        axpy(scale, &smoothed, &mut c);
    }
    EmbeddedEstimate::new(c, omega.measure().clone(), kernel)
}

/// `γ̂(x) = c·k_X(x)` for each row of `k_cross` (queries × training points).
pub fn evaluate(est: &EmbeddedEstimate, k_cross: &Matrix) -> Result<Vec<f64>> {
    if k_cross.cols() != est.n() {
        return Err(input_err!("kernel sections have {} columns, estimate has {} coefficients", k_cross.cols(), est.n()));
    }
    Ok(k_cross.matvec(&est.coefficients))
}

/// Tolerance below zero tolerated (and clamped) for quadratic forms in `K`.
pub const PSD_TOLERANCE: f64 = 1e-12;

pub(crate) fn clamp_psd(v: f64, what: &str) -> Result<f64> {
    if v.is_nan() {
        return Err(numerical_err!("{what} is NaN"));
    }
    if v < -PSD_TOLERANCE {
        return Err(numerical_err!("{what} is negative ({v:e}); the Gram matrix is not positive semidefinite"));
    }
    Ok(v.max(0.0))
}

/// `‖γ̂‖²_H = cᵀKc` with `K` the Gram matrix over all covariates.
pub fn rkhs_norm_sq(est: &EmbeddedEstimate, k: &GramMatrix) -> Result<f64> {
    if k.n() != est.n() {
        return Err(input_err!("Gram matrix is {0}x{0}, estimate has {1} coefficients", k.n(), est.n()));
    }
    let kc = k.entries().matvec(&est.coefficients);
    clamp_psd(dot(&est.coefficients, &kc), "squared RKHS norm")
}
