//! Checks with a single pass/fail verdict and a short detail line.

use kernvim_core::estimator::{combine, rkhs_norm_sq};
use kernvim_core::inference::{bootstrap_with, BootstrapPlan, BootstrapSummary, ReplicateRunner, Sequential};
use kernvim_core::kernel::{gram, KernelConfig};
use kernvim_core::measures::{
    koi_weights, loco_weights, loo_weights, shapley_exact_weights, shapley_mc_weights_players, EnumeratedPermutations,
    Weight, WeightVector,
};
use kernvim_core::Subset;

use super::oracle;

pub type Verdict = Result<String, String>;

/// Library `n·cᵀKc` against the term-by-term expansion, KOI, LOO and exact
/// Shapley for each covariate, `n ∈ {5, 10, 20}`, `d = 3`.
pub fn closed_form_equivalence() -> Verdict {
    let d = 3;
    let (h, lambda) = (1.3, 0.2);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (k, n) in [5usize, 10, 20].into_iter().enumerate() {
        for rep in 0..3u64 {
            let (x, psi) = oracle::random_problem(n, d, 100 * k as u64 + rep);
            let comps = oracle::components(&x, &psi, Subset::full(d).subsets(), h, lambda);
            let k_full = gram(&x, Subset::full(d), &KernelConfig::gaussian(h).unwrap()).unwrap();
            for i in 0..d {
                let target = Subset::singleton(i);
                let omegas = [
                    koi_weights(target).map_err(|e| e.to_string())?,
                    loo_weights(target, d).map_err(|e| e.to_string())?,
                    shapley_exact_weights(i, d).map_err(|e| e.to_string())?,
                ];
                for omega in &omegas {
                    let est = combine(&comps, omega).map_err(|e| e.to_string())?;
                    let stat = n as f64 * rkhs_norm_sq(&est, &k_full).map_err(|e| e.to_string())?;
                    let expected = n as f64 * oracle::statistic_expansion(&x, &psi, omega, h, lambda);
                    let err = oracle::relative_error(stat, expected);
                    worst = worst.max(err);
                    checked += 1;
                    if err > 1e-8 {
                        return Err(format!("n={n} {} target {i}: {stat} vs {expected} (rel {err:.2e})", omega.measure()));
                    }
                }
            }
        }
    }
    Ok(format!("{checked} statistics, worst relative error {worst:.1e}"))
}

/// Efficiency in exact rationals for `d ≤ 6`, and enumeration of all
/// permutations against the subset formula for `d ≤ 4`.
pub fn shapley_identities() -> Verdict {
    for d in 1..=6 {
        let total = WeightVector::sum(&(0..d).map(|i| shapley_exact_weights(i, d).unwrap()).collect::<Vec<_>>());
        let loco = loco_weights(Subset::full(d), Subset::EMPTY).unwrap();
        let mut entries: Vec<(Subset, Weight)> = total.rational().collect();
        entries.retain(|(_, w)| *w != Weight::new(0, 1));
        if entries != loco.rational().collect::<Vec<_>>() {
            return Err(format!("d={d}: Σ_i ω^SHAP,i = {entries:?}"));
        }
    }
    let mut worst: f64 = 0.0;
    for d in 1..=4usize {
        let players: Vec<Subset> = (0..d).map(Subset::singleton).collect();
        let perms: usize = (1..=d).product();
        for i in 0..d {
            let exact = shapley_exact_weights(i, d).unwrap();
            let enumerated =
                shapley_mc_weights_players(&players, i, perms, &mut EnumeratedPermutations::new(), 0).unwrap();
            for s in Subset::full(d).subsets() {
                let diff = exact.get(s) - enumerated.get(s);
                let diff = (*diff.numer() as f64 / *diff.denom() as f64).abs();
                worst = worst.max(diff);
                if diff > 1e-12 {
                    return Err(format!("d={d} i={i} subset {s}: exact {} vs enumerated {}", exact.get(s), enumerated.get(s)));
                }
            }
        }
    }
    Ok(format!("efficiency exact for d<=6; enumeration worst difference {worst:.1e} for d<=4"))
}

/// Bit-identical draws across the given runners, and exact zero at unit
/// multiplicities.
pub fn bootstrap_nullity_and_determinism(runners: &[(&str, &dyn ReplicateRunner)]) -> Verdict {
    let (n, d) = (60, 3);
    let (h, lambda) = (1.0, 0.1);
    let (x, psi) = oracle::random_problem(n, d, 7);
    let comps = oracle::components(&x, &psi, Subset::full(d).subsets(), h, lambda);
    let k = gram(&x, Subset::full(d), &KernelConfig::gaussian(h).unwrap()).unwrap();
    let omega = shapley_exact_weights(1, d).unwrap();
    let est = combine(&comps, &omega).unwrap();
    let plan = BootstrapPlan::new(&comps, &omega, &est, &k).map_err(|e| e.to_string())?;
    let null = plan.draw_from_counts(&vec![1; n]).map_err(|e| e.to_string())?;
    if null.norm_sq != 0.0 || null.inner != 0.0 {
        return Err(format!("unit multiplicities gave {null:?}"));
    }
    let (b, seed, alpha) = (999, 4242, 0.05);
    let reference =
        bootstrap_with(&Sequential, &comps, &omega, &est, &k, b, alpha, seed).map_err(|e| e.to_string())?;
    let bits = |s: &BootstrapSummary| -> Vec<u64> {
        s.draws_norm_sq.iter().chain(&s.draws_inner).chain([&s.xi_hat, &s.varsigma_hat]).map(|v| v.to_bits()).collect()
    };
    for (name, runner) in runners {
        let summary = bootstrap_with(*runner, &comps, &omega, &est, &k, b, alpha, seed).map_err(|e| e.to_string())?;
        if summary != reference || bits(&summary) != bits(&reference) {
            return Err(format!("{name} differs from the sequential summary"));
        }
    }
    Ok(format!("null draw exactly 0; {} runners bit-identical over B={b}", runners.len()))
}
