//! Named measures resolved against a set of players (covariates or
//! covariate groups).

use std::fmt;

use kernvim_core::measures::{
    koi_weights, loco_weights, loo_weights, shapley_exact_weights_players, shapley_mc_weights_players,
    RandomPermutations, WeightVector, EXACT_SHAPLEY_LIMIT,
};
use kernvim_core::pipeline::{derive_seed, SEED_PERMUTATIONS};
use kernvim_core::Subset;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, clap::ValueEnum, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MeasureKind {
    Koi,
    Loo,
    Loco,
    Shapley,
    ShapleyMc,
}

impl MeasureKind {
    pub fn name(self) -> &'static str {
        match self {
            MeasureKind::Koi => "koi",
            MeasureKind::Loo => "loo",
            MeasureKind::Loco => "loco",
            MeasureKind::Shapley => "shapley",
            MeasureKind::ShapleyMc => "shapley-mc",
        }
    }
}

impl fmt::Display for MeasureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Seed of the permutation stream for the Monte Carlo Shapley value of
/// player `target`.
pub fn permutation_seed(seed: u64, target: usize) -> u64 {
    derive_seed(derive_seed(seed, SEED_PERMUTATIONS), target as u64)
}

/// Weights for `kind` applied to `players[target]`, with `d` covariate
/// columns in total. LOCO needs explicit subsets; see [`loco`].
pub fn target_weights(
    kind: MeasureKind,
    players: &[Subset],
    target: usize,
    d: usize,
    permutations: usize,
    seed: u64,
) -> Result<WeightVector> {
    let t = *players.get(target).ok_or_else(|| CliError::usage(format!("target {target} out of range")))?;
    let w = match kind {
        MeasureKind::Koi => koi_weights(t)?,
        MeasureKind::Loo => loo_weights(t, d)?,
        MeasureKind::Shapley => shapley_exact_weights_players(players, target, EXACT_SHAPLEY_LIMIT)?,
        MeasureKind::ShapleyMc => {
            let s = permutation_seed(seed, target);
            shapley_mc_weights_players(players, target, permutations, &mut RandomPermutations::new(s), s)?
        }
        MeasureKind::Loco => {
            return Err(CliError::usage("loco compares two explicit subsets; pass --subset and --baseline-subset"))
        }
    };
    Ok(w)
}

pub fn loco(larger: Subset, smaller: Subset) -> Result<WeightVector> {
    Ok(loco_weights(larger, smaller)?)
}
