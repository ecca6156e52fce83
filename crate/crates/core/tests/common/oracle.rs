//! Slow reference computations built directly on nalgebra, sharing nothing
//! with the library beyond the input data.

use std::sync::Arc;

use kernvim_core::cme::{fit_cate, fit_cme};
use kernvim_core::estimator::{build_components, SubsetComponents};
use kernvim_core::kernel::KernelConfig;
use kernvim_core::measures::WeightVector;
use kernvim_core::nuisance::{PseudoMode, PseudoOutcomes};
use kernvim_core::{Matrix, Subset};
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Standard normal design and pseudo-outcomes.
pub fn random_problem(n: usize, d: usize, seed: u64) -> (Matrix, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = Matrix::from_fn(n, d, |_, _| StandardNormal.sample(&mut rng));
    let psi = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
    (x, psi)
}

pub fn components(x: &Matrix, psi: &[f64], subsets: impl IntoIterator<Item = Subset>, h: f64, lambda: f64) -> Vec<SubsetComponents> {
    let rows = Arc::new(x.clone());
    let cfg = KernelConfig::gaussian(h).unwrap();
    let p = PseudoOutcomes::new(psi.to_vec(), PseudoMode::Cate).unwrap();
    subsets
        .into_iter()
        .map(|s| {
            let model = Arc::new(fit_cme(s, rows.clone(), &cfg, lambda).unwrap());
            let cate = fit_cate(&p, &model).unwrap();
            build_components(&p, &cate, model).unwrap()
        })
        .collect()
}

/// `exp(−‖x_V − x'_V‖²/(2h²))` over all pairs.
pub fn kernel(x: &Matrix, subset: Subset, h: f64) -> DMatrix<f64> {
    let n = x.rows();
    DMatrix::from_fn(n, n, |i, j| {
        let mut sq = 0.0;
        for k in subset.indices() {
            let diff = x[(i, k)] - x[(j, k)];
            sq += diff * diff;
        }
        (-sq / (2.0 * h * h)).exp()
    })
}

/// Smoother `S_V = K_V (K_V + λI)⁻¹` through an explicit inverse; for ∅
/// it averages.
pub fn smoother(x: &Matrix, subset: Subset, h: f64, lambda: f64) -> DMatrix<f64> {
    let n = x.rows();
    if subset.is_empty() {
        return DMatrix::from_element(n, n, 1.0 / n as f64);
    }
    let k = kernel(x, subset, h);
    let inv = (&k + DMatrix::identity(n, n) * lambda).try_inverse().expect("ridge system is invertible");
    k * inv
}

pub struct Pieces {
    pub omega: f64,
    pub alpha: DVector<f64>,
    pub beta: DVector<f64>,
    pub s: DMatrix<f64>,
}

pub fn pieces(x: &Matrix, psi: &[f64], omega: &WeightVector, h: f64, lambda: f64) -> Vec<Pieces> {
    let psi = DVector::from_column_slice(psi);
    omega
        .iter()
        .map(|(subset, w)| {
            let s = smoother(x, subset, h, lambda);
            let alpha = &s * &psi;
            let beta = &psi - &alpha;
            Pieces { omega: w, alpha, beta, s }
        })
        .collect()
}

/// `cᵀKc` summed pair by pair over subsets: for each `(V, V')` the four
/// inner products `⟨α_V, α_V'⟩`, `⟨α_V, W_V'K_V'β_V'⟩`, `⟨W_VK_Vβ_V, α_V'⟩`
/// and `⟨W_VK_Vβ_V, W_V'K_V'β_V'⟩` in the full-covariate kernel, each as an
/// explicit double sum.
pub fn statistic_expansion(x: &Matrix, psi: &[f64], omega: &WeightVector, h: f64, lambda: f64) -> f64 {
    let n = x.rows();
    let k = kernel(x, Subset::full(x.cols()), h);
    let parts = pieces(x, psi, omega, h, lambda);
    let smoothed: Vec<DVector<f64>> = parts.iter().map(|p| &p.s * &p.beta).collect();
    let inner = |a: &DVector<f64>, b: &DVector<f64>| {
        let mut t = 0.0;
        for i in 0..n {
            for j in 0..n {
                t += a[i] * b[j] * k[(i, j)];
            }
        }
        t
    };
    let mut total = 0.0;
    for (p, sp) in parts.iter().zip(&smoothed) {
        for (q, sq) in parts.iter().zip(&smoothed) {
            let terms = inner(&p.alpha, &q.alpha) + inner(&p.alpha, sq) + inner(sp, &q.alpha) + inner(sp, sq);
            total += p.omega * q.omega * terms;
        }
    }
    total / (n * n) as f64
}

/// Coefficients of each observation's influence function `φ_i` over the
/// training points: `Σ_V ω_V (α_{V,i} e_i + β_{V,i} S_V e_i)`.
pub fn influence_functions(x: &Matrix, psi: &[f64], omega: &WeightVector, h: f64, lambda: f64) -> Vec<DVector<f64>> {
    let n = x.rows();
    let parts = pieces(x, psi, omega, h, lambda);
    (0..n)
        .map(|i| {
            let mut phi = DVector::zeros(n);
            for p in &parts {
                phi[i] += p.omega * p.alpha[i];
                phi += p.s.column(i) * (p.omega * p.beta[i]);
            }
            phi
        })
        .collect()
}

/// `(‖H^#‖², √n·|⟨γ̂, H^#⟩|)` with `H^# = √n Σ_i w_i φ_i`, through the
/// Gram matrix of the `n` functions `⟨φ_i, φ_k⟩`.
pub fn bootstrap_draw(x: &Matrix, psi: &[f64], omega: &WeightVector, h: f64, lambda: f64, counts: &[u32]) -> (f64, f64) {
    let n = x.rows();
    let nf = n as f64;
    let k = kernel(x, Subset::full(x.cols()), h);
    let phis = influence_functions(x, psi, omega, h, lambda);
    let gram = DMatrix::from_fn(n, n, |i, j| phis[i].dot(&(&k * &phis[j])));
    let w: Vec<f64> = counts.iter().map(|&m| (m as f64 - 1.0) / nf).collect();
    let mut norm_sq = 0.0;
    for i in 0..n {
        for j in 0..n {
            norm_sq += w[i] * w[j] * gram[(i, j)];
        }
    }
    // γ̂ = (1/n) Σ_i φ_i
    let mut inner = 0.0;
    for i in 0..n {
        for j in 0..n {
            inner += w[i] * gram[(i, j)] / nf;
        }
    }
    (nf * norm_sq, nf.sqrt() * inner.abs())
}

pub fn min_eigenvalue(m: &Matrix) -> f64 {
    let a = DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    a.symmetric_eigenvalues().min()
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
