//! Command-line front end and std-only machinery for `kernvim-core`:
//! CSV input with categorical covariate groups, a thread-pool bootstrap
//! runner, the Monte Carlo harness and JSON/CSV reports.

pub mod cli;
pub mod demo;
pub mod error;
pub mod io;
pub mod measure_spec;
pub mod montecarlo;
pub mod report;
pub mod runner;

pub use kernvim_core;
