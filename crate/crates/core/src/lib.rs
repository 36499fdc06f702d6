//! Changepoint detection in errors-in-variables linear relations.
//!
//! The pipeline is: [`model::Dataset`] → [`spectral::lambda_sequences`] →
//! [`detect::decide`]. Critical values come from [`limit_sim`], synthetic
//! scenarios from [`datagen`], and [`harness`] ties everything to files.

pub mod datagen;
pub mod detect;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod limit_sim;
pub mod linalg;
pub mod model;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
