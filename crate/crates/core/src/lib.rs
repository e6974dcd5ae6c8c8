//! Entropic value-at-risk portfolio optimization under jump-diffusion
//! return models.
//!
//! Two return models are provided ([`model::Model1Params`] with per-asset and
//! systemic jumps, [`model::Model2Params`] with correlated diffusion and
//! systemic jumps). Each exposes its exact moments, Laplace exponent,
//! truncated mixture density and a reproducible sampler. [`risk`] computes
//! EVaR from the Laplace exponent or from samples, [`optimize`] solves the
//! long-only EVaR and minimum-variance problems and sweeps frontiers, and
//! [`estimate`] fits either model to observed returns by extended least
//! squares.

pub mod data;
pub mod error;
pub mod estimate;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod risk;

pub use error::{Error, ErrorCategory, Result};
