//! Gaussian kernel, Gram matrices on covariate subsets, the median-heuristic
//! bandwidth and ridge-regularized inverses.
//!
//! The kernel is `K(x, x') = exp(-‖x - x'‖² / (2h²))`, so the bandwidth `h`
//! reads directly as a length scale in standardized covariate units.

use alloc::vec::Vec;

use crate::error::{degenerate_err, input_err, numerical_err, Result};
use crate::linalg::{mean, Cholesky, Matrix};
use crate::subset::Subset;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    family: KernelFamily,
    bandwidth: f64,
}

impl KernelConfig {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(input_err!("bandwidth must be positive and finite, got {bandwidth}"));
        }
        Ok(Self { family: KernelFamily::Gaussian, bandwidth })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// `sup_x K(x, x)`.
    pub fn sup_value(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian => 1.0,
        }
    }

    #[inline]
    fn eval_sq_dist(&self, sq: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => libm::exp(-sq / (2.0 * self.bandwidth * self.bandwidth)),
        }
    }
}

pub fn gaussian_kernel(x: &[f64], x2: &[f64], config: &KernelConfig) -> Result<f64> {
    if x.len() != x2.len() {
        return Err(input_err!("kernel arguments have dimensions {} and {}", x.len(), x2.len()));
    }
    Ok(config.eval_sq_dist(sq_dist(x, x2)))
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

#[inline]
fn sq_dist_on(a: &[f64], b: &[f64], columns: &[usize]) -> f64 {
    columns.iter().map(|&c| (a[c] - b[c]) * (a[c] - b[c])).sum()
}

/// Median of the `n(n-1)/2` pairwise Euclidean distances between rows.
///
/// For an even number of pairs the two middle distances are averaged.
pub fn median_heuristic(points: &Matrix) -> Result<f64> {
    let n = points.rows();
    if n < 2 {
        return Err(input_err!("median heuristic needs at least 2 points, got {n}"));
    }
    let mut dists = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(libm::sqrt(sq_dist(points.row(i), points.row(j))));
        }
    }
    let m = dists.len();
    let mid = m / 2;
    let (_, upper, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let median = if m % 2 == 1 {
        upper
    } else {
        let lower = dists[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if !(median > 0.0) {
        return Err(degenerate_err!("median pairwise distance is zero; covariates are (nearly) constant"));
    }
    Ok(median)
}

/// A kernel matrix over the training rows, restricted to a covariate subset.
#[derive(Debug, Clone)]
pub struct GramMatrix {
    entries: Matrix,
    subset: Subset,
    config: KernelConfig,
}

impl GramMatrix {
    pub fn entries(&self) -> &Matrix {
        &self.entries
    }

    pub fn subset(&self) -> Subset {
        self.subset
    }

    pub fn config(&self) -> &KernelConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.entries.rows()
    }

    /// Wraps an arbitrary symmetric matrix, for callers that bring their own
    /// kernel values.
    pub fn from_entries(entries: Matrix, subset: Subset, config: KernelConfig) -> Result<Self> {
        if !entries.is_square() {
            return Err(input_err!("Gram matrix must be square"));
        }
        Ok(Self { entries, subset, config })
    }
}

/// Gram matrix of `points` restricted to the columns in `subset`.
///
/// The empty subset is a contract violation: callers handle ∅ through the
/// empirical mean embedding instead.
pub fn gram(points: &Matrix, subset: Subset, config: &KernelConfig) -> Result<GramMatrix> {
    let columns = checked_columns(points.cols(), subset)?;
    let n = points.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = config.eval_sq_dist(0.0);
        let xi = points.row(i);
        for j in (i + 1)..n {
            let v = config.eval_sq_dist(sq_dist_on(xi, points.row(j), &columns));
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(GramMatrix { entries: k, subset, config: *config })
}

/// `out[q][j] = K(query_q, point_j)` on the columns of `subset`.
///
/// Both matrices carry all `d` covariates; only the subset columns are read.
pub fn cross_gram(queries: &Matrix, points: &Matrix, subset: Subset, config: &KernelConfig) -> Result<Matrix> {
    if queries.cols() != points.cols() {
        return Err(input_err!(
            "query dimension {} differs from training dimension {}",
            queries.cols(),
            points.cols()
        ));
    }
    let columns = checked_columns(points.cols(), subset)?;
    Ok(Matrix::from_fn(queries.rows(), points.rows(), |q, j| {
        config.eval_sq_dist(sq_dist_on(queries.row(q), points.row(j), &columns))
    }))
}

fn checked_columns(d: usize, subset: Subset) -> Result<Vec<usize>> {
    if subset.is_empty() {
        return Err(input_err!("kernel on the empty covariate subset is undefined"));
    }
    if subset.span() > d {
        return Err(input_err!("subset {subset} exceeds covariate dimension {d}"));
    }
    Ok(subset.to_vec())
}

/// Cholesky factorization of `K + λI`, with the diagonal-jitter fallback of
/// `1e-10 · trace(K) / n` when the first factorization fails.
#[derive(Debug, Clone)]
pub struct RidgeSystem {
    chol: Cholesky,
    lambda: f64,
}

impl RidgeSystem {
    pub fn new(k: &Matrix, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(input_err!("ridge parameter must be positive, got {lambda}"));
        }
        if !k.is_square() {
            return Err(input_err!("ridge system needs a square matrix"));
        }
        let n = k.rows();
        let mut a = k.clone();
        a.add_diagonal(lambda);
        let jitter = if n > 0 { 1e-10 * k.trace().abs() / n as f64 } else { 0.0 };
        let chol = Cholesky::factor_with_jitter(&a, jitter)
            .map_err(|e| numerical_err!("factorizing K + λI failed: {e}"))?;
        Ok(Self { chol, lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn n(&self) -> usize {
        self.chol.dim()
    }

    /// `(K + λI)⁻¹ b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.chol.solve_vec(b)
    }

    /// `(K + λI)⁻¹ B`.
    pub fn solve_matrix(&self, b: &Matrix) -> Matrix {
        self.chol.solve_matrix(b)
    }

    pub fn inverse(&self) -> Matrix {
        self.chol.inverse()
    }
}

/// `W = (K + λI)⁻¹`, symmetric.
pub fn ridge_inverse(k: &GramMatrix, lambda: f64) -> Result<Matrix> {
    Ok(RidgeSystem::new(k.entries(), lambda)?.inverse())
}

/// Column standardization to zero mean and unit variance, stored so query
/// points can be mapped the same way.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    means: Vec<f64>,
    scales: Vec<f64>,
}

impl Standardizer {
    /// Fits on the columns of `x`. Constant columns keep scale 1.
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows();
        let d = x.cols();
        let mut means = Vec::with_capacity(d);
        let mut scales = Vec::with_capacity(d);
        for j in 0..d {
            let col = x.column(j);
            let m = mean(&col);
            let var = if n > 1 {
                col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            let sd = libm::sqrt(var);
            means.push(m);
            scales.push(if sd > 0.0 && sd.is_finite() { sd } else { 1.0 });
        }
        Self { means, scales }
    }

    pub fn identity(d: usize) -> Self {
        Self { means: alloc::vec![0.0; d], scales: alloc::vec![1.0; d] }
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn scales(&self) -> &[f64] {
        &self.scales
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.means.len() {
            return Err(input_err!("expected {} columns, got {}", self.means.len(), x.cols()));
        }
        Ok(Matrix::from_fn(x.rows(), x.cols(), |i, j| (x[(i, j)] - self.means[j]) / self.scales[j]))
    }
}
