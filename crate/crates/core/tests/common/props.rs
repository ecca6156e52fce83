//! Property checks over randomly generated inputs. Each runs a fixed number
//! of cases from a deterministic proptest stream so failures reproduce.

use std::sync::Arc;

use kernvim_core::cme::{fit_cate, fit_cme, predict_cate};
use kernvim_core::estimator::{combine, rkhs_norm_sq};
use kernvim_core::inference::{bootstrap, run_test, upper_quantile, BootstrapPlan, BootstrapSummary, Draw};
use kernvim_core::kernel::{gaussian_kernel, gram, median_heuristic, ridge_inverse, KernelConfig};
use kernvim_core::measures::{
    koi_weights, loco_weights, loo_weights, shapley_exact_weights, shapley_mc_weights, shapley_mc_weights_players,
    EnumeratedPermutations, Weight, WeightVector,
};
use kernvim_core::nuisance::{
    fit_nuisances, pseudo_outcomes, Dataset, FoldAssignment, Learner, NuisanceFit, PseudoMode, PseudoOutcomes,
};
use kernvim_core::simulate::{sample_dgp, Alternative, DgpConfig, Experiment};
use kernvim_core::{Matrix, Subset};
use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use super::oracle;

pub type Check = fn() -> Result<(), String>;

fn run<S: Strategy>(cases: u32, strategy: S, test: impl Fn(S::Value) -> Result<(), TestCaseError>) -> Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let mut runner = TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha));
    runner.run(&strategy, test).map_err(|e| e.to_string())
}

fn points(n: usize, d: usize, seed: u64) -> Matrix {
    oracle::random_problem(n, d, seed).0
}

fn cfg(h: f64) -> KernelConfig {
    KernelConfig::gaussian(h).unwrap()
}

fn psi(v: Vec<f64>) -> PseudoOutcomes {
    PseudoOutcomes::new(v, PseudoMode::Cate).unwrap()
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * x.abs().max(y.abs()).max(1.0))
}

pub fn gram_symmetric_psd_unit_diagonal() -> Result<(), String> {
    run(24, (1usize..=200, 1usize..=4, 0.2f64..5.0, any::<u64>()), |(n, d, h, seed)| {
        let x = points(n, d, seed);
        let k = gram(&x, Subset::full(d), &cfg(h)).unwrap();
        let e = k.entries();
        for i in 0..n {
            prop_assert_eq!(e[(i, i)], 1.0);
            for j in 0..i {
                prop_assert_eq!(e[(i, j)], e[(j, i)]);
            }
        }
        let min = oracle::min_eigenvalue(e);
        prop_assert!(min >= -1e-8 * n as f64, "min eigenvalue {min}");
        Ok(())
    })
}

pub fn kernel_translation_invariant() -> Result<(), String> {
    let v = || prop::collection::vec(-5.0f64..5.0, 3);
    run(200, (v(), v(), v(), 0.1f64..4.0), |(x, y, t, h)| {
        let shift = |a: &[f64]| a.iter().zip(&t).map(|(p, q)| p + q).collect::<Vec<_>>();
        let a = gaussian_kernel(&x, &y, &cfg(h)).unwrap();
        let b = gaussian_kernel(&shift(&x), &shift(&y), &cfg(h)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        Ok(())
    })
}

pub fn median_heuristic_rotation_invariant() -> Result<(), String> {
    run(40, (3usize..60, 0.0f64..std::f64::consts::TAU, any::<u64>()), |(n, theta, seed)| {
        let x = points(n, 2, seed);
        let (c, s) = (theta.cos(), theta.sin());
        let r = Matrix::from_fn(n, 2, |i, j| {
            let (a, b) = (x[(i, 0)], x[(i, 1)]);
            if j == 0 { c * a - s * b } else { s * a + c * b }
        });
        let (h1, h2) = (median_heuristic(&x).unwrap(), median_heuristic(&r).unwrap());
        prop_assert!((h1 - h2).abs() <= 1e-10 * h1.max(1.0), "{h1} vs {h2}");
        Ok(())
    })
}

pub fn ridge_inverse_symmetric_and_exact() -> Result<(), String> {
    run(30, (2usize..60, 0.5f64..3.0, 1e-3f64..10.0, any::<u64>()), |(n, h, lambda, seed)| {
        let x = points(n, 3, seed);
        let k = gram(&x, Subset::full(3), &cfg(h)).unwrap();
        let w = ridge_inverse(&k, lambda).unwrap();
        prop_assert!(w.max_asymmetry() <= 1e-10);
        let mut shifted = k.entries().clone();
        shifted.add_diagonal(lambda);
        let residual = w.matmul(&shifted).max_abs_diff(&Matrix::identity(n));
        prop_assert!(residual <= 1e-8, "residual {residual}");
        Ok(())
    })
}

fn raw_nuisances(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let (_, v) = oracle::random_problem(3 * n, 1, seed);
    let g = v[..n].iter().map(|z| 1.0 / (1.0 + (-4.0 * z).exp())).collect();
    (g, v[n..2 * n].to_vec(), v[2 * n..].to_vec())
}

pub fn propensity_clipping_exact() -> Result<(), String> {
    run(100, (4usize..80, 0.001f64..0.49, any::<u64>()), |(n, clip, seed)| {
        let (g, m1, m0) = raw_nuisances(n, seed);
        let fit = NuisanceFit::from_predictions(g, m1, m0, clip, FoldAssignment::random(n, seed)).unwrap();
        prop_assert!(fit.propensity().iter().all(|&p| p >= clip && p <= 1.0 - clip));
        Ok(())
    })
}

fn dataset(x: Matrix, a: Vec<u8>, y: Vec<f64>) -> Dataset {
    let names = (0..x.cols()).map(|j| format!("X{}", j + 1)).collect();
    Dataset::new(x, a, y, names).unwrap()
}

pub fn zero_residual_pseudo_outcome() -> Result<(), String> {
    run(100, (4usize..60, any::<u64>()), |(n, seed)| {
        let (g, m1, m0) = raw_nuisances(n, seed);
        let a: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..n).map(|i| if a[i] == 1 { m1[i] } else { m0[i] }).collect();
        let data = dataset(points(n, 2, seed), a, y);
        let fit = NuisanceFit::from_predictions(g, m1.clone(), m0.clone(), 0.01, FoldAssignment::random(n, seed)).unwrap();
        let p = pseudo_outcomes(&data, Some(&fit), PseudoMode::Cate).unwrap();
        for i in 0..n {
            prop_assert_eq!(p.values()[i], m1[i] - m0[i]);
        }
        Ok(())
    })
}

pub fn crossfit_poisoning() -> Result<(), String> {
    run(6, (30usize..60, any::<u64>()), |(n, seed)| {
        let x = points(n, 2, seed);
        let a: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)] + f64::from(a[i]) * x[(i, 1)]).collect();
        let folds = FoldAssignment::random(n, seed);
        let learner = Learner::built_in(cfg(1.0));
        let clean = dataset(x.clone(), a.clone(), y.clone());
        let fit = fit_nuisances(&clean, &folds, &learner, 0.01).unwrap();
        let target = folds.members(0)[0];
        let mut poisoned_y = y.clone();
        poisoned_y[target] += 1e6;
        let poisoned = dataset(x, a, poisoned_y);
        let fit2 = fit_nuisances(&poisoned, &folds, &learner, 0.01).unwrap();
        let p1 = pseudo_outcomes(&clean, Some(&fit), PseudoMode::Cate).unwrap();
        let p2 = pseudo_outcomes(&poisoned, Some(&fit2), PseudoMode::Cate).unwrap();
        for &i in &folds.members(0) {
            prop_assert_eq!(fit.propensity()[i], fit2.propensity()[i]);
            prop_assert_eq!(fit.outcome1()[i], fit2.outcome1()[i]);
            prop_assert_eq!(fit.outcome0()[i], fit2.outcome0()[i]);
            if i != target {
                prop_assert_eq!(p1.values()[i], p2.values()[i]);
            }
        }
        prop_assert_ne!(p1.values()[target], p2.values()[target]);
        Ok(())
    })
}

fn model(x: &Matrix, subset: Subset, h: f64, lambda: f64) -> kernvim_core::cme::CmeModel {
    fit_cme(subset, Arc::new(x.clone()), &cfg(h), lambda).unwrap()
}

pub fn cate_in_sample_consistency() -> Result<(), String> {
    run(30, (2usize..50, 1u32..8, 0.01f64..5.0, any::<u64>()), |(n, bits, lambda, seed)| {
        let (x, v) = oracle::random_problem(n, 3, seed);
        let m = model(&x, Subset::from_bits(bits), 1.0, lambda);
        let fit = fit_cate(&psi(v), &m).unwrap();
        let predicted = predict_cate(&fit, &m, &x).unwrap();
        prop_assert!(close(fit.alpha(), &predicted, 1e-10));
        Ok(())
    })
}

pub fn cate_empty_subset_is_mean() -> Result<(), String> {
    run(50, (1usize..50, any::<u64>()), |(n, seed)| {
        let (x, v) = oracle::random_problem(n, 2, seed);
        let p = psi(v);
        let fit = fit_cate(&p, &model(&x, Subset::EMPTY, 1.0, 0.1)).unwrap();
        prop_assert!(fit.alpha().iter().all(|&a| a == p.mean()));
        Ok(())
    })
}

pub fn cate_interpolation_limit() -> Result<(), String> {
    // Points spaced well beyond the bandwidth make K nearly the identity, so
    // a vanishing ridge reproduces ψ.
    run(30, (2usize..30, any::<u64>()), |(n, seed)| {
        let (jitter, v) = oracle::random_problem(n, 1, seed);
        let x = Matrix::from_fn(n, 1, |i, _| 3.0 * i as f64 + 0.3 * jitter[(i, 0)].tanh());
        let fit = fit_cate(&psi(v.clone()), &model(&x, Subset::singleton(0), 0.5, 1e-10)).unwrap();
        prop_assert!(close(fit.alpha(), &v, 1e-8));
        Ok(())
    })
}

pub fn cate_shrinkage_monotone() -> Result<(), String> {
    run(20, (3usize..50, any::<u64>()), |(n, seed)| {
        let (x, v) = oracle::random_problem(n, 3, seed);
        let p = psi(v);
        let norms: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2]
            .iter()
            .map(|&l| fit_cate(&p, &model(&x, Subset::full(3), 1.0, l)).unwrap().alpha().iter().map(|a| a * a).sum::<f64>().sqrt())
            .collect();
        for w in norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12), "{norms:?}");
        }
        Ok(())
    })
}

pub fn cate_linear_in_psi() -> Result<(), String> {
    run(30, (2usize..40, -3.0f64..3.0, -3.0f64..3.0, any::<u64>()), |(n, a, b, seed)| {
        let (x, v1) = oracle::random_problem(n, 2, seed);
        let (_, v2) = oracle::random_problem(n, 2, seed ^ 1);
        let m = model(&x, Subset::full(2), 0.8, 0.05);
        let mix: Vec<f64> = v1.iter().zip(&v2).map(|(p, q)| a * p + b * q).collect();
        let f = fit_cate(&psi(mix), &m).unwrap();
        let f1 = fit_cate(&psi(v1), &m).unwrap();
        let f2 = fit_cate(&psi(v2), &m).unwrap();
        let expected: Vec<f64> = f1.alpha().iter().zip(f2.alpha()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(close(f.alpha(), &expected, 1e-10));
        Ok(())
    })
}

/// Every supported measure, for random dimension and target.
fn all_weights(d: usize, target: usize, seed: u64) -> Vec<WeightVector> {
    let t = Subset::singleton(target);
    let mut v = vec![
        koi_weights(t).unwrap(),
        loo_weights(t, d).unwrap(),
        loco_weights(Subset::full(d), Subset::full(d).without(target)).unwrap(),
        shapley_mc_weights(target, d, 40, seed).unwrap(),
    ];
    if d <= 8 {
        v.push(shapley_exact_weights(target, d).unwrap());
    }
    v
}

pub fn weights_are_contrasts_without_zeros() -> Result<(), String> {
    run(120, (1usize..=10, any::<usize>(), any::<u64>()), |(d, t, seed)| {
        for w in all_weights(d, t % d, seed) {
            prop_assert_eq!(w.total(), Weight::new(0, 1));
            prop_assert!(w.rational().all(|(_, v)| v != Weight::new(0, 1)));
        }
        Ok(())
    })
}

pub fn shapley_mass_split() -> Result<(), String> {
    run(40, (1usize..=7, any::<usize>()), |(d, t)| {
        let i = t % d;
        let w = shapley_exact_weights(i, d).unwrap();
        let with: Weight = w.rational().filter(|(s, _)| s.contains(i)).map(|(_, v)| v).sum();
        let without: Weight = w.rational().filter(|(s, _)| !s.contains(i)).map(|(_, v)| v).sum();
        prop_assert_eq!(with, Weight::new(1, 1));
        prop_assert_eq!(without, Weight::new(-1, 1));
        Ok(())
    })
}

pub fn enumerated_mc_reproduces_exact() -> Result<(), String> {
    run(30, (1usize..=4, any::<usize>(), 1usize..4), |(d, t, reps)| {
        let i = t % d;
        let players: Vec<Subset> = (0..d).map(Subset::singleton).collect();
        let m = reps * (1..=d).product::<usize>();
        let mc = shapley_mc_weights_players(&players, i, m, &mut EnumeratedPermutations::new(), 0).unwrap();
        let exact = shapley_exact_weights(i, d).unwrap();
        prop_assert_eq!(mc.rational().collect::<Vec<_>>(), exact.rational().collect::<Vec<_>>());
        let floats = |w: &WeightVector| w.iter().map(|(s, v)| (s, v.to_bits())).collect::<Vec<_>>();
        prop_assert_eq!(floats(&mc), floats(&exact));
        Ok(())
    })
}

pub fn components_split_psi() -> Result<(), String> {
    run(30, (2usize..40, any::<u64>()), |(n, seed)| {
        let (x, v) = oracle::random_problem(n, 3, seed);
        for c in oracle::components(&x, &v, Subset::full(3).subsets(), 1.0, 0.1) {
            for i in 0..n {
                let sum = c.alpha()[i] + c.beta()[i];
                prop_assert!((sum - v[i]).abs() <= 4.0 * f64::EPSILON * v[i].abs().max(c.alpha()[i].abs()));
            }
            if c.subset().is_empty() {
                let mean_beta = c.beta().iter().sum::<f64>() / n as f64;
                prop_assert!(mean_beta.abs() <= 1e-12);
            }
        }
        Ok(())
    })
}

fn rational(x: i64) -> Weight {
    Weight::new(x, 7)
}

pub fn estimator_linear_in_omega() -> Result<(), String> {
    run(30, (2usize..30, -20i64..20, -20i64..20, any::<u64>()), |(n, a, b, seed)| {
        let d = 3;
        let (x, v) = oracle::random_problem(n, d, seed);
        let comps = oracle::components(&x, &v, Subset::full(d).subsets(), 1.0, 0.1);
        let w1 = shapley_exact_weights((seed % 3) as usize, d).unwrap();
        let w2 = loo_weights(Subset::singleton(((seed >> 8) % 3) as usize), d).unwrap();
        let mix = w1.linear_combination(rational(a), &w2, rational(b));
        let c = combine(&comps, &mix).unwrap();
        let c1 = combine(&comps, &w1).unwrap();
        let c2 = combine(&comps, &w2).unwrap();
        let (fa, fb) = (a as f64 / 7.0, b as f64 / 7.0);
        let expected: Vec<f64> = c1.coefficients().iter().zip(c2.coefficients()).map(|(p, q)| fa * p + fb * q).collect();
        prop_assert!(close(c.coefficients(), &expected, 1e-10));
        Ok(())
    })
}

pub fn estimator_linear_in_psi() -> Result<(), String> {
    run(30, (2usize..30, -3.0f64..3.0, -3.0f64..3.0, any::<u64>()), |(n, a, b, seed)| {
        let d = 3;
        let (x, v1) = oracle::random_problem(n, d, seed);
        let (_, v2) = oracle::random_problem(n, d, seed ^ 5);
        let mix: Vec<f64> = v1.iter().zip(&v2).map(|(p, q)| a * p + b * q).collect();
        let omega = shapley_exact_weights(0, d).unwrap();
        let coef = |v: &[f64]| combine(&oracle::components(&x, v, Subset::full(d).subsets(), 1.0, 0.1), &omega).unwrap();
        let (c, c1, c2) = (coef(&mix), coef(&v1), coef(&v2));
        let expected: Vec<f64> = c1.coefficients().iter().zip(c2.coefficients()).map(|(p, q)| a * p + b * q).collect();
        prop_assert!(close(c.coefficients(), &expected, 1e-10));
        Ok(())
    })
}

pub fn estimator_shapley_efficiency() -> Result<(), String> {
    run(20, (2usize..30, 1usize..=4, any::<u64>()), |(n, d, seed)| {
        let (x, v) = oracle::random_problem(n, d, seed);
        let comps = oracle::components(&x, &v, Subset::full(d).subsets(), 1.0, 0.1);
        let mut total = vec![0.0; n];
        for i in 0..d {
            let c = combine(&comps, &shapley_exact_weights(i, d).unwrap()).unwrap();
            total.iter_mut().zip(c.coefficients()).for_each(|(t, v)| *t += v);
        }
        let loco = combine(&comps, &loco_weights(Subset::full(d), Subset::EMPTY).unwrap()).unwrap();
        prop_assert!(total.iter().zip(loco.coefficients()).all(|(a, b)| (a - b).abs() <= 1e-12));
        Ok(())
    })
}

pub fn estimator_permutation_agreement() -> Result<(), String> {
    run(20, (2usize..30, 1usize..=4, any::<usize>(), any::<u64>()), |(n, d, t, seed)| {
        let i = t % d;
        let (x, v) = oracle::random_problem(n, d, seed);
        let comps = oracle::components(&x, &v, Subset::full(d).subsets(), 1.0, 0.1);
        let players: Vec<Subset> = (0..d).map(Subset::singleton).collect();
        let perms = (1..=d).product();
        let enumerated = shapley_mc_weights_players(&players, i, perms, &mut EnumeratedPermutations::new(), 0).unwrap();
        let a = combine(&comps, &shapley_exact_weights(i, d).unwrap()).unwrap();
        let b = combine(&comps, &enumerated).unwrap();
        prop_assert!(a.coefficients().iter().zip(b.coefficients()).all(|(p, q)| (p - q).abs() <= 1e-12));
        Ok(())
    })
}

pub fn statistic_matches_expansion() -> Result<(), String> {
    run(20, (2usize..=20, 1usize..=3, any::<usize>(), any::<u64>()), |(n, d, t, seed)| {
        let i = t % d;
        let (x, v) = oracle::random_problem(n, d, seed);
        let comps = oracle::components(&x, &v, Subset::full(d).subsets(), 1.2, 0.3);
        let k = gram(&x, Subset::full(d), &cfg(1.2)).unwrap();
        let larger = Subset::full(d);
        let omegas = [loco_weights(larger, larger.without(i)).unwrap(), shapley_exact_weights(i, d).unwrap()];
        for omega in &omegas {
            let got = rkhs_norm_sq(&combine(&comps, omega).unwrap(), &k).unwrap();
            let want = oracle::statistic_expansion(&x, &v, omega, 1.2, 0.3);
            prop_assert!(oracle::relative_error(got, want) <= 1e-8 || (got - want).abs() <= 1e-14, "{got} vs {want}");
        }
        Ok(())
    })
}

pub fn bootstrap_matches_materialized_functions() -> Result<(), String> {
    run(20, (2usize..=15, any::<u64>(), prop::collection::vec(0u32..4, 15)), |(n, seed, raw)| {
        let d = 3;
        let (x, v) = oracle::random_problem(n, d, seed);
        let comps = oracle::components(&x, &v, Subset::full(d).subsets(), 1.0, 0.2);
        let k = gram(&x, Subset::full(d), &cfg(1.0)).unwrap();
        let omega = shapley_exact_weights((seed % 3) as usize, d).unwrap();
        let est = combine(&comps, &omega).unwrap();
        let plan = BootstrapPlan::new(&comps, &omega, &est, &k).unwrap();
        let counts = &raw[..n];
        let got = plan.draw_from_counts(counts).unwrap();
        let (norm_sq, inner) = oracle::bootstrap_draw(&x, &v, &omega, 1.0, 0.2, counts);
        let ok = |a: f64, b: f64| oracle::relative_error(a, b) <= 1e-8 || (a - b).abs() <= 1e-13;
        prop_assert!(ok(got.norm_sq, norm_sq), "{} vs {norm_sq}", got.norm_sq);
        prop_assert!(ok(got.inner, inner), "{} vs {inner}", got.inner);
        Ok(())
    })
}

pub fn bootstrap_nullity() -> Result<(), String> {
    run(20, (2usize..40, any::<u64>()), |(n, seed)| {
        let (x, v) = oracle::random_problem(n, 2, seed);
        let comps = oracle::components(&x, &v, Subset::full(2).subsets(), 1.0, 0.1);
        let k = gram(&x, Subset::full(2), &cfg(1.0)).unwrap();
        let omega = koi_weights(Subset::singleton(1)).unwrap();
        let est = combine(&comps, &omega).unwrap();
        let null = BootstrapPlan::new(&comps, &omega, &est, &k).unwrap().draw_from_counts(&vec![1; n]).unwrap();
        prop_assert_eq!(null, Draw { norm_sq: 0.0, inner: 0.0 });
        Ok(())
    })
}

pub fn bootstrap_quantiles() -> Result<(), String> {
    run(100, (prop::collection::vec(0.0f64..10.0, 100..400), any::<u64>()), |(draws, seed)| {
        let ds: Vec<Draw> = draws.iter().map(|&v| Draw { norm_sq: v, inner: v.sqrt() }).collect();
        let s = BootstrapSummary::from_draws(&ds, 0.05, seed).unwrap();
        let mut sorted = draws.clone();
        sorted.sort_by(f64::total_cmp);
        let rank = (draws.len() as f64 * 0.95).ceil() as usize;
        prop_assert_eq!(s.xi_hat, sorted[rank - 1]);
        prop_assert!(s.draws_norm_sq.iter().all(|&v| v >= 0.0));
        let levels = [0.5, 0.2, 0.1, 0.05, 0.01, 0.001];
        let xs: Vec<f64> = levels.iter().map(|&a| upper_quantile(&draws, a)).collect();
        prop_assert!(xs.windows(2).all(|w| w[0] <= w[1]), "{xs:?}");
        Ok(())
    })
}

pub fn test_ci_coherence() -> Result<(), String> {
    run(12, (10usize..40, 0.0f64..3.0, any::<u64>()), |(n, effect, seed)| {
        let d = 2;
        let (x, mut v) = oracle::random_problem(n, d, seed);
        v.iter_mut().enumerate().for_each(|(i, p)| *p += effect * x[(i, 0)]);
        let comps = oracle::components(&x, &v, Subset::full(d).subsets(), 1.0, 0.1);
        let k = gram(&x, Subset::full(d), &cfg(1.0)).unwrap();
        let omega = koi_weights(Subset::singleton(0)).unwrap();
        let est = combine(&comps, &omega).unwrap();
        // (B+1)·α is an integer, so the p-value and order-statistic rules coincide
        let boot = bootstrap(&comps, &omega, &est, &k, 199, 0.05, seed).unwrap();
        let r = run_test(&est, &k, &boot, 0.05).unwrap();
        let mut sorted = boot.draws_norm_sq.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assert_eq!(r.reject, r.statistic > sorted[189]);
        prop_assert_eq!(r.reject, r.p_value <= 0.05);
        prop_assert!(r.p_value > 0.0 && r.p_value <= 1.0);
        prop_assert!(r.ci_triangle[0] >= 0.0 && r.ci_triangle[0] <= r.norm && r.norm <= r.ci_triangle[1]);
        prop_assert_eq!(r.ci_delta[0] == 0.0 || r.reject, true);
        Ok(())
    })
}

pub fn dgp_deterministic_with_shared_prefix() -> Result<(), String> {
    run(10, (5usize..200, 0.0f64..0.9, any::<u64>()), |(n, sigma, seed)| {
        let make = |e| sample_dgp(&DgpConfig::new(e, n, sigma, 1.0, Alternative::Smooth, seed).unwrap()).unwrap();
        let (a, b) = (make(Experiment::Exp1), make(Experiment::Exp2));
        prop_assert_eq!(&a, &make(Experiment::Exp1));
        for i in 0..n {
            prop_assert_eq!(a.covariates().row(i), &b.covariates().row(i)[..5]);
        }
        Ok(())
    })
}

pub const ALL: &[(&str, Check)] = &[
    ("gram matrices symmetric PSD with unit diagonal", gram_symmetric_psd_unit_diagonal),
    ("kernel translation invariance", kernel_translation_invariant),
    ("median heuristic rotation invariance", median_heuristic_rotation_invariant),
    ("ridge inverse symmetric and exact", ridge_inverse_symmetric_and_exact),
    ("propensity clipping", propensity_clipping_exact),
    ("zero-residual pseudo-outcome", zero_residual_pseudo_outcome),
    ("cross-fit poisoning", crossfit_poisoning),
    ("CATE in-sample consistency", cate_in_sample_consistency),
    ("CATE on the empty set is the mean", cate_empty_subset_is_mean),
    ("CATE interpolation limit", cate_interpolation_limit),
    ("CATE shrinkage monotone in lambda", cate_shrinkage_monotone),
    ("CATE linear in psi", cate_linear_in_psi),
    ("weights are contrasts without zeros", weights_are_contrasts_without_zeros),
    ("Shapley mass split", shapley_mass_split),
    ("enumerated permutations reproduce exact Shapley", enumerated_mc_reproduces_exact),
    ("components split psi", components_split_psi),
    ("estimator linear in omega", estimator_linear_in_omega),
    ("estimator linear in psi", estimator_linear_in_psi),
    ("estimator Shapley efficiency", estimator_shapley_efficiency),
    ("estimator permutation agreement", estimator_permutation_agreement),
    ("statistic matches expansion", statistic_matches_expansion),
    ("bootstrap matches materialized functions", bootstrap_matches_materialized_functions),
    ("bootstrap nullity", bootstrap_nullity),
    ("bootstrap quantiles", bootstrap_quantiles),
    ("test and interval coherence", test_ci_coherence),
    ("simulation determinism and shared prefix", dgp_deterministic_with_shared_prefix),
];

/// Runs every property, collecting failures.
pub fn run_all() -> Result<usize, Vec<String>> {
    let failures: Vec<String> =
        ALL.iter().filter_map(|(name, check)| check().err().map(|e| format!("{name}: {e}"))).collect();
    if failures.is_empty() { Ok(ALL.len()) } else { Err(failures) }
}
