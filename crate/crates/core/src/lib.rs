//! Kernel-based variable importance measures for conditional average
//! treatment effects.
//!
//! The crate is `no_std` with `alloc`. The `std` feature only adds
//! `std::error::Error` integration through `thiserror`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod subset;
pub mod kernel;
pub mod nuisance;
pub mod cme;
pub mod measures;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use subset::Subset;
pub mod estimator;
pub mod inference;
pub mod special;
pub mod simulate;
pub mod pipeline;
