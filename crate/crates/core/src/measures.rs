//! Weight vectors `ω = {ω_V}` over covariate subsets for the LOCO family and
//! for Shapley values.
//!
//! Weights are kept as exact rationals. Every measure built here is a
//! contrast, so `Σ_V ω_V = 0` holds exactly, and the Shapley efficiency
//! identity can be checked without rounding.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{input_err, Result};
use crate::subset::{Subset, MAX_DIM};

pub type Weight = Ratio<i64>;

/// Default cap on the number of players for exact Shapley enumeration.
pub const EXACT_SHAPLEY_LIMIT: usize = 12;

/// Default number of sampled permutations for Monte Carlo Shapley values.
pub const DEFAULT_PERMUTATIONS: usize = 40;

/// Which measure a weight vector encodes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Measure {
    Loco { larger: Subset, smaller: Subset },
    Koi { target: Subset },
    Loo { target: Subset },
    Shapley { target: Subset },
    ShapleyMc { target: Subset, permutations: usize, seed: u64 },
    Combination,
}

impl Measure {
    pub fn name(&self) -> &'static str {
        match self {
            Measure::Loco { .. } => "loco",
            Measure::Koi { .. } => "koi",
            Measure::Loo { .. } => "loo",
            Measure::Shapley { .. } => "shapley",
            Measure::ShapleyMc { .. } => "shapley-mc",
            Measure::Combination => "combination",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Measure::Loco { larger, smaller } => write!(f, "loco({larger} vs {smaller})"),
            Measure::Koi { target } => write!(f, "koi({target})"),
            Measure::Loo { target } => write!(f, "loo({target})"),
            Measure::Shapley { target } => write!(f, "shapley({target})"),
            Measure::ShapleyMc { target, permutations, .. } => write!(f, "shapley-mc({target}, m={permutations})"),
            Measure::Combination => f.write_str("combination"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightVector {
    weights: BTreeMap<Subset, Weight>,
    measure: Measure,
}

impl WeightVector {
    fn from_accumulated(weights: BTreeMap<Subset, Weight>, measure: Measure) -> Self {
        let weights = weights.into_iter().filter(|(_, w)| *w != Weight::from_integer(0)).collect();
        Self { weights, measure }
    }

    pub fn measure(&self) -> &Measure {
        &self.measure
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn get(&self, subset: Subset) -> Weight {
        self.weights.get(&subset).copied().unwrap_or_else(|| Weight::from_integer(0))
    }

    pub fn rational(&self) -> impl Iterator<Item = (Subset, Weight)> + '_ {
        self.weights.iter().map(|(s, w)| (*s, *w))
    }

    /// `(V, ω_V)` pairs as floats, in canonical subset order.
    pub fn iter(&self) -> impl Iterator<Item = (Subset, f64)> + '_ {
        self.weights.iter().map(|(s, w)| (*s, to_f64(*w)))
    }

    pub fn subsets(&self) -> impl Iterator<Item = Subset> + '_ {
        self.weights.keys().copied()
    }

    /// Exact `Σ_V ω_V`.
    pub fn total(&self) -> Weight {
        self.weights.values().fold(Weight::from_integer(0), |a, w| a + w)
    }

    /// `a·self + b·other`, dropping cancelled entries.
    pub fn linear_combination(&self, a: Weight, other: &WeightVector, b: Weight) -> WeightVector {
        let mut acc: BTreeMap<Subset, Weight> = BTreeMap::new();
        for (s, w) in self.rational() {
            *acc.entry(s).or_insert_with(|| Weight::from_integer(0)) += a * w;
        }
        for (s, w) in other.rational() {
            *acc.entry(s).or_insert_with(|| Weight::from_integer(0)) += b * w;
        }
        Self::from_accumulated(acc, Measure::Combination)
    }

    pub fn sum<'a>(vectors: impl IntoIterator<Item = &'a WeightVector>) -> WeightVector {
        let one = Weight::from_integer(1);
        let empty = WeightVector { weights: BTreeMap::new(), measure: Measure::Combination };
        vectors.into_iter().fold(empty, |acc, w| acc.linear_combination(one, w, one))
    }
}

pub fn to_f64(w: Weight) -> f64 {
    *w.numer() as f64 / *w.denom() as f64
}

/// `{V1: +1, V2: −1}` for nested `V2 ⊊ V1`.
pub fn loco_weights(larger: Subset, smaller: Subset) -> Result<WeightVector> {
    if !smaller.is_subset_of(larger) {
        return Err(input_err!("LOCO baseline {smaller} is not contained in {larger}"));
    }
    if smaller == larger {
        return Err(input_err!("LOCO subsets must differ, both are {larger}"));
    }
    let mut w = BTreeMap::new();
    w.insert(larger, Weight::from_integer(1));
    w.insert(smaller, Weight::from_integer(-1));
    Ok(WeightVector::from_accumulated(w, Measure::Loco { larger, smaller }))
}

/// Keep-one-in: the target set against the empty set.
pub fn koi_weights(target: Subset) -> Result<WeightVector> {
    if target.is_empty() {
        return Err(input_err!("KOI target must be non-empty"));
    }
    let mut w = loco_weights(target, Subset::EMPTY)?;
    w.measure = Measure::Koi { target };
    Ok(w)
}

/// Leave-one-out: all `d` covariates against all but the target set.
pub fn loo_weights(target: Subset, d: usize) -> Result<WeightVector> {
    let full = Subset::full(d);
    if target.is_empty() || !target.is_subset_of(full) {
        return Err(input_err!("LOO target {target} must be a non-empty subset of the {d} covariates"));
    }
    let mut w = loco_weights(full, full.difference(target))?;
    w.measure = Measure::Loo { target };
    Ok(w)
}

fn binomial(n: usize, k: usize) -> i64 {
    let k = k.min(n - k);
    let mut acc: i64 = 1;
    for j in 0..k {
        acc = acc * (n - j) as i64 / (j + 1) as i64;
    }
    acc
}

fn check_players(players: &[Subset], target: usize) -> Result<()> {
    if target >= players.len() {
        return Err(input_err!("target player {target} out of range for {} players", players.len()));
    }
    let mut seen = Subset::EMPTY;
    for p in players {
        if p.is_empty() {
            return Err(input_err!("Shapley players must be non-empty covariate sets"));
        }
        if p.bits() & seen.bits() != 0 {
            return Err(input_err!("Shapley players must be disjoint; {p} overlaps another player"));
        }
        seen = seen.union(*p);
    }
    Ok(())
}

fn union_of(players: &[Subset], members: impl Iterator<Item = usize>) -> Subset {
    members.fold(Subset::EMPTY, |acc, k| acc.union(players[k]))
}

/// Exact Shapley weights where each player is a (disjoint) set of covariates.
///
/// For every coalition `S` of the other players with weight
/// `β_S = 1 / (p · C(p−1, |S|))`, `+β_S` goes to `S ∪ {target}` and `−β_S` to
/// `S`, each mapped to the union of its players' covariates.
pub fn shapley_exact_weights_players(players: &[Subset], target: usize, limit: usize) -> Result<WeightVector> {
    check_players(players, target)?;
    let p = players.len();
    if p > limit {
        return Err(input_err!(
            "exact Shapley weights over {p} players exceed the limit of {limit}; use permutation sampling (shapley-mc)"
        ));
    }
    if p >= MAX_DIM {
        return Err(input_err!("too many players for exact Shapley weights"));
    }
    let others = Subset::full(p).without(target);
    let mut acc: BTreeMap<Subset, Weight> = BTreeMap::new();
    for coalition in others.subsets() {
        let beta = Weight::new(1, p as i64 * binomial(p - 1, coalition.len()));
        let without = union_of(players, coalition.indices());
        let with = without.union(players[target]);
        *acc.entry(with).or_insert_with(|| Weight::from_integer(0)) += beta;
        *acc.entry(without).or_insert_with(|| Weight::from_integer(0)) -= beta;
    }
    Ok(WeightVector::from_accumulated(acc, Measure::Shapley { target: players[target] }))
}

/// Exact Shapley weights for covariate `i` (0-based) among `d`.
pub fn shapley_exact_weights(i: usize, d: usize) -> Result<WeightVector> {
    if d == 0 || i >= d {
        return Err(input_err!("variable index {i} out of range for dimension {d}"));
    }
    let players: Vec<Subset> = (0..d).map(Subset::singleton).collect();
    shapley_exact_weights_players(&players, i, EXACT_SHAPLEY_LIMIT)
}

/// Source of permutations of `0..p` for Monte Carlo Shapley weights.
pub trait PermutationSource {
    /// Writes the next permutation into `out`; `out.len()` is the player count.
    fn next_permutation(&mut self, out: &mut [usize]);
}

/// Uniform permutations drawn with replacement from a seeded ChaCha stream.
#[derive(Debug, Clone)]
pub struct RandomPermutations {
    rng: ChaCha8Rng,
}

impl RandomPermutations {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl PermutationSource for RandomPermutations {
    fn next_permutation(&mut self, out: &mut [usize]) {
        for (k, v) in out.iter_mut().enumerate() {
            *v = k;
        }
        out.shuffle(&mut self.rng);
    }
}

/// Cycles through all permutations in lexicographic order.
#[derive(Debug, Clone, Default)]
pub struct EnumeratedPermutations {
    current: Option<Vec<usize>>,
}

impl EnumeratedPermutations {
    pub fn new() -> Self {
        Self::default()
    }
}

impl PermutationSource for EnumeratedPermutations {
    fn next_permutation(&mut self, out: &mut [usize]) {
        let p = out.len();
        let next = match self.current.take() {
            Some(mut cur) if cur.len() == p => {
                if !next_lexicographic(&mut cur) {
                    cur.iter_mut().enumerate().for_each(|(k, v)| *v = k);
                }
                cur
            }
            _ => (0..p).collect(),
        };
        out.copy_from_slice(&next);
        self.current = Some(next);
    }
}

/// Advances to the next permutation; returns false after the last one.
pub fn next_lexicographic(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Monte Carlo Shapley weights from `m` permutations of the players: each
/// permutation adds `+1/m` to (players before target) ∪ target and `−1/m`
/// to the players before the target.
pub fn shapley_mc_weights_players(
    players: &[Subset],
    target: usize,
    m: usize,
    source: &mut dyn PermutationSource,
    seed: u64,
) -> Result<WeightVector> {
    check_players(players, target)?;
    if m == 0 {
        return Err(input_err!("need at least one permutation"));
    }
    let p = players.len();
    let mut counts: BTreeMap<Subset, i64> = BTreeMap::new();
    let mut perm = alloc::vec![0usize; p];
    for _ in 0..m {
        source.next_permutation(&mut perm);
        let pos = perm.iter().position(|&k| k == target).expect("permutation must contain every player");
        let before = union_of(players, perm[..pos].iter().copied());
        *counts.entry(before.union(players[target])).or_insert(0) += 1;
        *counts.entry(before).or_insert(0) -= 1;
    }
    let weights = counts.into_iter().map(|(s, c)| (s, Weight::new(c, m as i64))).collect();
    Ok(WeightVector::from_accumulated(
        weights,
        Measure::ShapleyMc { target: players[target], permutations: m, seed },
    ))
}

/// Monte Carlo Shapley weights for covariate `i` among `d`, seeded.
pub fn shapley_mc_weights(i: usize, d: usize, m: usize, seed: u64) -> Result<WeightVector> {
    if d == 0 || i >= d {
        return Err(input_err!("variable index {i} out of range for dimension {d}"));
    }
    let players: Vec<Subset> = (0..d).map(Subset::singleton).collect();
    shapley_mc_weights_players(&players, i, m, &mut RandomPermutations::new(seed), seed)
}
