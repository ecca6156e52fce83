//! Multinomial bootstrap of the embedded estimator, the test of no
//! importance, norm confidence intervals, sup-norm bands and BH adjustment.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{input_err, Result};
use crate::estimator::{clamp_psd, find_component, rkhs_norm_sq, EmbeddedEstimate, SubsetComponents};
use crate::kernel::GramMatrix;
use crate::linalg::{dot, Matrix};
use crate::measures::{Measure, WeightVector};
use crate::special::normal_quantile;

pub const DEFAULT_BOOTSTRAP: usize = 4999;
pub const MIN_BOOTSTRAP: usize = 100;
pub const DEFAULT_ALPHA: f64 = 0.05;

pub fn validate_level(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 0.5) {
        return Err(input_err!("alpha must lie in (0, 0.5], got {alpha}"));
    }
    Ok(())
}

pub fn validate_bootstrap(b: usize, alpha: f64) -> Result<()> {
    if b < MIN_BOOTSTRAP {
        return Err(input_err!("need at least {MIN_BOOTSTRAP} bootstrap replicates, got {b}"));
    }
    validate_level(alpha)
}

/// RNG for replicate `index`: its own ChaCha stream under the run seed, so
/// draws do not depend on which worker executes which replicate.
pub fn replicate_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Multinomial(n; 1/n, …, 1/n) multiplicities.
pub fn multinomial_counts<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<u32> {
    let mut m = vec![0u32; n];
    for _ in 0..n {
        m[rng.random_range(0..n)] += 1;
    }
    m
}

/// `w_i = (m_i − 1)/n`, so `(P_n^# − P_n) f = Σ_i w_i f(Z_i)`.
pub fn resample_weights(counts: &[u32]) -> Vec<f64> {
    let n = counts.len() as f64;
    counts.iter().map(|&m| (m as f64 - 1.0) / n).collect()
}

/// One bootstrap replicate: `‖H^#‖² = n·c̃ᵀKc̃` and `√n·|cᵀKc̃|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Draw {
    pub norm_sq: f64,
    pub inner: f64,
}

/// Precomputed linear map `w ↦ c̃`.
///
/// `c̃ = Σ_V ω_V (w⊙α_V + W_V K_V (w⊙β_V)) = M w` with
/// `M = Σ_V ω_V (diag(α_V) + W_V K_V diag(β_V))`, so each replicate costs
/// two `n×n` matrix-vector products.
#[derive(Debug, Clone)]
pub struct BootstrapPlan<'a> {
    map: Matrix,
    kc: Vec<f64>,
    k: &'a Matrix,
}

impl<'a> BootstrapPlan<'a> {
    pub fn new(
        components: &[SubsetComponents],
        omega: &WeightVector,
        est: &EmbeddedEstimate,
        k: &'a GramMatrix,
    ) -> Result<Self> {
        let n = est.n();
        if k.n() != n {
            return Err(input_err!("Gram matrix is {0}x{0}, estimate has {1} coefficients", k.n(), n));
        }
        let mut map = Matrix::zeros(n, n);
        for (subset, w) in omega.iter() {
            let comp = find_component(components, subset)?;
            if comp.n() != n {
                return Err(input_err!("components for {subset} have {} rows, expected {n}", comp.n()));
            }
            let (alpha, beta) = (comp.alpha(), comp.beta());
            for i in 0..n {
                map[(i, i)] += w * alpha[i];
            }
            if subset.is_empty() {
                // Rank one: every row gets ω β_j / n.
                let row: Vec<f64> = beta.iter().map(|b| w * b / n as f64).collect();
                for i in 0..n {
                    map.row_mut(i).iter_mut().zip(&row).for_each(|(m, r)| *m += r);
                }
            } else {
                let s = comp.smoother_matrix();
                for i in 0..n {
                    let src = s.row(i);
                    for ((m, sv), b) in map.row_mut(i).iter_mut().zip(src).zip(beta) {
                        *m += w * sv * b;
                    }
                }
            }
        }
        let kc = k.entries().matvec(est.coefficients());
        Ok(Self { map, kc, k: k.entries() })
    }

    pub fn n(&self) -> usize {
        self.kc.len()
    }

    /// The map `M` (for inspection and tests).
    pub fn map(&self) -> &Matrix {
        &self.map
    }

    /// Replicate statistics for explicit resampling weights `w`.
    pub fn draw_from_weights(&self, w: &[f64]) -> Result<Draw> {
        let n = self.n();
        if w.len() != n {
            return Err(input_err!("{} resampling weights for {n} observations", w.len()));
        }
        let ct = self.map.matvec(w);
        let kct = self.k.matvec(&ct);
        let nf = n as f64;
        let norm_sq = clamp_psd(nf * dot(&ct, &kct), "bootstrap squared norm")?;
        let inner = libm::sqrt(nf) * dot(&self.kc, &ct).abs();
        Ok(Draw { norm_sq, inner })
    }

    pub fn draw_from_counts(&self, counts: &[u32]) -> Result<Draw> {
        self.draw_from_weights(&resample_weights(counts))
    }

    /// Replicate `index` under `seed`.
    pub fn draw(&self, seed: u64, index: usize) -> Result<Draw> {
        let counts = multinomial_counts(self.n(), &mut replicate_rng(seed, index));
        self.draw_from_counts(&counts)
    }
}

/// Executes `b` independent replicates, returning them in index order.
pub trait ReplicateRunner {
    fn run(&self, b: usize, replicate: &(dyn Fn(usize) -> Result<Draw> + Sync)) -> Result<Vec<Draw>>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ReplicateRunner for Sequential {
    fn run(&self, b: usize, replicate: &(dyn Fn(usize) -> Result<Draw> + Sync)) -> Result<Vec<Draw>> {
        (0..b).map(replicate).collect()
    }
}

/// Order statistic at rank `⌈B(1−α)⌉` (1-based), no interpolation.
pub fn upper_quantile(draws: &[f64], alpha: f64) -> f64 {
    let mut sorted = draws.to_vec();
    sorted.sort_by(f64::total_cmp);
    quantile_sorted(&sorted, alpha)
}

fn quantile_rank(b: usize, alpha: f64) -> usize {
    let t = b as f64 * (1.0 - alpha);
    // Guard against 949.0000000001-style products landing one rank high.
    let k = libm::ceil(t - 1e-9 * t.max(1.0)) as usize;
    k.clamp(1, b)
}

fn quantile_sorted(sorted: &[f64], alpha: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    sorted[quantile_rank(sorted.len(), alpha) - 1]
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub draws_norm_sq: Vec<f64>,
    pub draws_inner: Vec<f64>,
    pub xi_hat: f64,
    pub varsigma_hat: f64,
    pub b: usize,
    pub seed: u64,
    pub alpha: f64,
}

impl BootstrapSummary {
    pub fn from_draws(draws: &[Draw], alpha: f64, seed: u64) -> Result<Self> {
        validate_level(alpha)?;
        if draws.is_empty() {
            return Err(input_err!("no bootstrap draws"));
        }
        let draws_norm_sq: Vec<f64> = draws.iter().map(|d| d.norm_sq).collect();
        let draws_inner: Vec<f64> = draws.iter().map(|d| d.inner).collect();
        let xi_hat = upper_quantile(&draws_norm_sq, alpha);
        let varsigma_hat = upper_quantile(&draws_inner, alpha);
        Ok(Self { b: draws.len(), draws_norm_sq, draws_inner, xi_hat, varsigma_hat, seed, alpha })
    }

    /// `ξ̂` at another level from the same draws.
    pub fn xi_at(&self, alpha: f64) -> f64 {
        upper_quantile(&self.draws_norm_sq, alpha)
    }

    pub fn varsigma_at(&self, alpha: f64) -> f64 {
        upper_quantile(&self.draws_inner, alpha)
    }
}

/// Sequential bootstrap.
pub fn bootstrap(
    components: &[SubsetComponents],
    omega: &WeightVector,
    est: &EmbeddedEstimate,
    k: &GramMatrix,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    bootstrap_with(&Sequential, components, omega, est, k, b, alpha, seed)
}

#[allow(clippy::too_many_arguments)]
pub fn bootstrap_with(
    runner: &dyn ReplicateRunner,
    components: &[SubsetComponents],
    omega: &WeightVector,
    est: &EmbeddedEstimate,
    k: &GramMatrix,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapSummary> {
    validate_bootstrap(b, alpha)?;
    let plan = BootstrapPlan::new(components, omega, est, k)?;
    let draws = runner.run(b, &|index| plan.draw(seed, index))?;
    BootstrapSummary::from_draws(&draws, alpha, seed)
}

/// `[max(0, ‖γ̂‖ − s), ‖γ̂‖ + s]` with `s = sqrt(ξ̂/n)`.
pub fn norm_ci_triangle(norm: f64, xi_hat: f64, n: usize) -> [f64; 2] {
    let s = libm::sqrt(xi_hat.max(0.0) / n as f64);
    [(norm - s).max(0.0), norm + s]
}

/// Convex hull of `C^{>0} = [sqrt(max(0, ‖γ̂‖² − 2ς̂/√n)), sqrt(‖γ̂‖² + 2ς̂/√n)]`
/// and `C⁰ = {0}` (included when the test fails to reject).
pub fn norm_ci_delta(norm_sq: f64, varsigma_hat: f64, n: usize, reject: bool) -> [f64; 2] {
    let r = 2.0 * varsigma_hat.max(0.0) / libm::sqrt(n as f64);
    let lo = libm::sqrt((norm_sq - r).max(0.0));
    let hi = libm::sqrt(norm_sq + r);
    if reject {
        [lo, hi]
    } else {
        [0.0, hi]
    }
}

/// Half-normal plug-in for `ς̂`: `σ̂·Φ⁻¹(1 − α/2)` with `σ̂² = (1/n) Σ u_i²`,
/// `u_i` the per-observation inner products of the estimated influence
/// function with `γ̂`.
pub fn half_normal_varsigma(
    components: &[SubsetComponents],
    omega: &WeightVector,
    est: &EmbeddedEstimate,
    k: &GramMatrix,
    alpha: f64,
) -> Result<f64> {
    validate_level(alpha)?;
    let n = est.n();
    if k.n() != n {
        return Err(input_err!("Gram matrix is {0}x{0}, estimate has {1} coefficients", k.n(), n));
    }
    let kc = k.entries().matvec(est.coefficients());
    let mut u = vec![0.0; n];
    let mut alpha_sum = vec![0.0; n];
    for (subset, w) in omega.iter() {
        let comp = find_component(components, subset)?;
        let smoothed = comp.smooth(&kc);
        for i in 0..n {
            u[i] += w * (comp.beta()[i] * smoothed[i] + comp.alpha()[i] * kc[i]);
            alpha_sum[i] += w * comp.alpha()[i];
        }
    }
    let centre = dot(&alpha_sum, &kc) / n as f64;
    let sigma2 = u.iter().map(|v| (v - centre) * (v - centre)).sum::<f64>() / n as f64;
    Ok(libm::sqrt(sigma2) * normal_quantile(1.0 - alpha / 2.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestReport {
    pub measure: Measure,
    pub n: usize,
    pub norm_sq: f64,
    pub norm: f64,
    /// `n·‖γ̂‖²`, compared against the bootstrap draws.
    pub statistic: f64,
    pub xi_hat: f64,
    pub varsigma_hat: f64,
    pub p_value: f64,
    pub reject: bool,
    pub ci_triangle: [f64; 2],
    pub ci_delta: [f64; 2],
    pub alpha: f64,
    pub b: usize,
    pub seed: u64,
}

/// Test of `γ^K = 0` with the add-one p-value `(1 + #{draws ≥ n‖γ̂‖²})/(B+1)`.
pub fn run_test(est: &EmbeddedEstimate, k: &GramMatrix, boot: &BootstrapSummary, alpha: f64) -> Result<TestReport> {
    run_test_with_varsigma(est, k, boot, alpha, boot.varsigma_at(alpha))
}

/// As [`run_test`] with an externally supplied `ς̂` for the delta interval.
pub fn run_test_with_varsigma(
    est: &EmbeddedEstimate,
    k: &GramMatrix,
    boot: &BootstrapSummary,
    alpha: f64,
    varsigma_hat: f64,
) -> Result<TestReport> {
    validate_level(alpha)?;
    let n = est.n();
    let norm_sq = rkhs_norm_sq(est, k)?;
    let norm = libm::sqrt(norm_sq);
    let statistic = n as f64 * norm_sq;
    let exceed = boot.draws_norm_sq.iter().filter(|&&d| d >= statistic).count();
    let p_value = (1 + exceed) as f64 / (boot.b + 1) as f64;
    let reject = p_value <= alpha;
    let xi_hat = boot.xi_at(alpha);
    Ok(TestReport {
        measure: est.measure().clone(),
        n,
        norm_sq,
        norm,
        statistic,
        xi_hat,
        varsigma_hat,
        p_value,
        reject,
        ci_triangle: norm_ci_triangle(norm, xi_hat, n),
        ci_delta: norm_ci_delta(norm_sq, varsigma_hat, n, reject),
        alpha,
        b: boot.b,
        seed: boot.seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandPoint {
    pub estimate: f64,
    pub lower: f64,
    pub upper: f64,
}

/// `γ̂(x) ∓ sqrt(ξ̂·sup K / n)` at each query row of `k_cross`.
pub fn confidence_band(est: &EmbeddedEstimate, xi_hat: f64, k_cross: &Matrix) -> Result<Vec<BandPoint>> {
    let values = crate::estimator::evaluate(est, k_cross)?;
    let half = band_halfwidth(xi_hat, est.kernel().sup_value(), est.n());
    Ok(values.into_iter().map(|v| BandPoint { estimate: v, lower: v - half, upper: v + half }).collect())
}

pub fn band_halfwidth(xi_hat: f64, sup_value: f64, n: usize) -> f64 {
    libm::sqrt(xi_hat.max(0.0) * sup_value / n as f64)
}

/// Benjamini–Hochberg step-up adjusted p-values, in input order.
pub fn bh_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
        return Err(input_err!("p-values must lie in (0, 1], got {p}"));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 1.0f64;
    for rank in (0..m).rev() {
        let i = order[rank];
        running = running.min(p_values[i] * m as f64 / (rank + 1) as f64);
        adjusted[i] = running;
    }
    Ok(adjusted)
}
