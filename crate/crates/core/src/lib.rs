//! Robust Bayesian persuasion against receivers whose belief formation is
//! unknown.
//!
//! The sender learns a predictor of receiver actions from interaction data,
//! wraps it in split-conformal action sets, and picks the signaling policy
//! that maximizes the worst-case sender reward over those sets.
//!
//! - [`domain`]: finite games, policies, posteriors, best responses.
//! - [`receiver`]: simulated receivers and interaction datasets.
//! - [`neural`]: the action predictor and its training loop.
//! - [`conformal`]: nonconformity scores, calibration, prediction sets.
//! - [`robustopt`]: robust policy search, shift diagnostics, baselines.

pub mod conformal;
pub mod domain;
mod error;
pub mod neural;
pub mod receiver;
pub mod rng;
pub mod robustopt;

pub use error::{Error, Result};
