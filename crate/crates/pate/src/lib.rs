//! Privacy-preserving aggregation of teacher-ensemble votes.
//!
//! This crate implements the noisy-argmax family of vote aggregation
//! mechanisms (Gaussian and Laplace, plus thresholded and interactive
//! variants), a Renyi differential privacy accountant with data-dependent
//! per-query bounds, and a smooth-sensitivity pipeline for releasing the
//! accountant's own output with differential privacy.
//!
//! The main entry points:
//!
//! * [`histogram::VoteHistogram`] — a validated per-query vote histogram.
//! * [`mechanisms`] — the aggregation mechanisms themselves.
//! * [`accountant`] — per-query Renyi DP bounds, composition, and conversion
//!   to (epsilon, delta)-DP.
//! * [`smooth_sensitivity`] — smooth sensitivity of the data-dependent
//!   accountant output and the noisy release built on it.
//! * [`simulation`] — synthetic teacher ensembles for end-to-end sweeps.
//! * [`cli`] — the command-line front end.

pub mod accountant;
pub mod cli;
pub mod error;
pub mod histogram;
pub mod mechanisms;
pub mod numerics;
pub mod rng;
pub mod simulation;
pub mod smooth_sensitivity;

pub use error::{PateError, Result};
