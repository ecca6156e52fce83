//! Simulation designs: Gaussian-copula covariates, logistic treatment
//! assignment and Gaussian outcomes with a configurable CATE.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{input_err, Error, Result};
use crate::linalg::Matrix;
use crate::nuisance::{expit, Dataset};
use crate::special::normal_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Experiment {
    /// Five covariates, CATE `β·g(X₁) + f(X₂..X₅)`.
    Exp1,
    /// Experiment 1 plus five irrelevant covariates `X₆..X₁₀`.
    Exp2,
    /// Three covariates, CATE `β·g(X₁)`.
    Exp3,
}

impl Experiment {
    pub fn dim(self) -> usize {
        match self {
            Experiment::Exp1 => 5,
            Experiment::Exp2 => 10,
            Experiment::Exp3 => 3,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Exp1 => "exp1",
            Experiment::Exp2 => "exp2",
            Experiment::Exp3 => "exp3",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exp1" | "exp1_d5" => Ok(Experiment::Exp1),
            "exp2" | "exp2_d10" => Ok(Experiment::Exp2),
            "exp3" | "exp3_d3" => Ok(Experiment::Exp3),
            _ => Err(input_err!("unknown experiment {s:?} (expected exp1, exp2 or exp3)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Alternative {
    /// `g(x) = x`.
    Smooth,
    /// `g(x) = sin(5πx)`.
    Rough,
}

impl Alternative {
    pub fn name(self) -> &'static str {
        match self {
            Alternative::Smooth => "smooth",
            Alternative::Rough => "rough",
        }
    }

    pub fn g(self, x1: f64) -> f64 {
        match self {
            Alternative::Smooth => x1,
            Alternative::Rough => libm::sin(5.0 * core::f64::consts::PI * x1),
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Alternative {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(Alternative::Smooth),
            "rough" => Ok(Alternative::Rough),
            _ => Err(input_err!("unknown alternative {s:?} (expected smooth or rough)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpConfig {
    pub experiment: Experiment,
    pub n: usize,
    /// Off-diagonal correlation of the copula normals, in `[0, 1)`.
    pub sigma: f64,
    pub beta: f64,
    pub alternative: Alternative,
    pub seed: u64,
}

impl DgpConfig {
    pub fn new(experiment: Experiment, n: usize, sigma: f64, beta: f64, alternative: Alternative, seed: u64) -> Result<Self> {
        let c = Self { experiment, n, sigma, beta, alternative, seed };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.sigma) {
            return Err(input_err!("copula correlation must lie in [0, 1), got {}", self.sigma));
        }
        if self.n < 4 {
            return Err(input_err!("need n >= 4, got {}", self.n));
        }
        if !self.beta.is_finite() {
            return Err(input_err!("effect size must be finite"));
        }
        Ok(())
    }

    /// `τ(x)` for a row of covariates on the uniform scale.
    pub fn cate(&self, x: &[f64]) -> f64 {
        let main = self.beta * self.alternative.g(x[0]);
        match self.experiment {
            Experiment::Exp3 => main,
            Experiment::Exp1 | Experiment::Exp2 => main + auxiliary_effect(x),
        }
    }
}

/// `f = 0.2(X₂² + X₃ − 2X₃X₄ + 4X₅)`.
pub fn auxiliary_effect(x: &[f64]) -> f64 {
    0.2 * (x[1] * x[1] + x[2] - 2.0 * x[2] * x[3] + 4.0 * x[4])
}

/// `E[Y | A=0, X]`.
pub fn baseline_mean(x: &[f64]) -> f64 {
    x[0] * x[1] + 2.0 * x[1] * x[1] - x[0]
}

pub fn propensity(x: &[f64]) -> f64 {
    expit(-0.4 * x[0] + 0.1 * x[0] * x[1])
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const STREAM_SHARED: u64 = 0;
const STREAM_EXTRA: u64 = 1;
const STREAM_OUTCOME: u64 = 2;

/// Equicorrelated copula normals `Z_j = √σ·W + √(1−σ)·E_j`.
///
/// The common factor and the first five idiosyncratic terms come from one
/// stream and columns six onwards from another, so Experiment 2 shares its
/// first five columns with Experiment 1 under the same seed.
pub fn copula_normals(n: usize, d: usize, sigma: f64, seed: u64) -> Matrix {
    let shared = d.min(5);
    let (a, b) = (libm::sqrt(sigma), libm::sqrt(1.0 - sigma));
    let mut rng = stream(seed, STREAM_SHARED);
    let mut extra = stream(seed, STREAM_EXTRA);
    let mut z = Matrix::zeros(n, d);
    for i in 0..n {
        let w: f64 = rng.sample(StandardNormal);
        let row = z.row_mut(i);
        for v in row.iter_mut().take(shared) {
            let e: f64 = rng.sample(StandardNormal);
            *v = a * w + b * e;
        }
        for v in row.iter_mut().skip(shared) {
            let e: f64 = extra.sample(StandardNormal);
            *v = a * w + b * e;
        }
    }
    z
}

/// Draws a dataset: `X` with uniform(0,1) marginals from the Gaussian
/// copula, `A ~ Bernoulli(expit(−0.4X₁ + 0.1X₁X₂))`,
/// `Y ~ N(X₁X₂ + 2X₂² − X₁ + Aτ(X), 1)`.
pub fn sample_dgp(config: &DgpConfig) -> Result<Dataset> {
    config.validate()?;
    let (n, d) = (config.n, config.experiment.dim());
    let mut x = copula_normals(n, d, config.sigma, config.seed);
    for i in 0..n {
        x.row_mut(i).iter_mut().for_each(|v| *v = normal_cdf(*v));
    }
    let mut rng = stream(config.seed, STREAM_OUTCOME);
    let mut treatment = vec![0u8; n];
    let mut outcome = vec![0.0; n];
    for i in 0..n {
        let row = x.row(i);
        let u: f64 = rng.random();
        let a = u8::from(u < propensity(row));
        let noise: f64 = rng.sample(StandardNormal);
        treatment[i] = a;
        outcome[i] = baseline_mean(row) + f64::from(a) * config.cate(row) + noise;
    }
    let names: Vec<String> = (1..=d).map(|j| format!("X{j}")).collect();
    Dataset::new(x, treatment, outcome, names)
}
