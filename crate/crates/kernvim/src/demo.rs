//! Synthetic trial-like dataset for trying the workflow end to end.
//!
//! Columns: `country` (six sites), `age`, `sex`, `bmi`, `prior_infection`,
//! `treatment` and a continuous `response`. The treatment effect grows
//! with prior infection and shrinks with age; `country` shifts the baseline
//! response only.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::io::csv_string;

pub const DEMO_FILE: &str = "data/demo_trial.csv";
pub const DEMO_ROWS: usize = 400;
pub const DEMO_SEED: u64 = 2024;

const SITES: [(&str, f64); 6] = [("COL", 0.3), ("HND", -0.2), ("IND", 0.0), ("KEN", -0.4), ("NPL", 0.1), ("USA", 0.5)];

pub fn demo_csv(n: usize, seed: u64) -> Result<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let header: Vec<String> =
        ["country", "age", "sex", "bmi", "prior_infection", "treatment", "response"].map(String::from).to_vec();
    let mut rows = Vec::with_capacity(n);
    for _ in 0..n {
        let (site, shift) = SITES[rng.random_range(0..SITES.len())];
        let age = rng.random_range(18..=80) as f64;
        let sex = u8::from(rng.random_bool(0.5));
        let bmi = (24.0_f64 + 4.0 * noise.sample(&mut rng)).clamp(15.0, 45.0);
        let prior = u8::from(rng.random_bool(0.35));
        let treat = u8::from(rng.random_bool(0.5));
        let effect = 1.0 + 0.8 * f64::from(prior) - 0.02 * (age - 45.0);
        let base = 2.0 + shift + 0.01 * (bmi - 24.0) - 0.005 * (age - 45.0) + 0.3 * f64::from(prior);
        let y = base + f64::from(treat) * effect + noise.sample(&mut rng);
        rows.push(vec![
            site.to_string(),
            age.to_string(),
            sex.to_string(),
            format!("{bmi:.1}"),
            prior.to_string(),
            treat.to_string(),
            format!("{y:.4}"),
        ]);
    }
    csv_string(&header, &rows)
}
