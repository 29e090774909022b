//! Distribution-aligned refinement of soft pseudo-labels.
//!
//! Semi-supervised pipelines trained on class-imbalanced data produce
//! pseudo-labels whose class mass drifts toward the head classes. This crate
//! refines a row-stochastic pseudo-label matrix so its per-class totals hit
//! a target marginal while staying as close as possible — in
//! confidence-weighted relative entropy — to the original predictions.
//!
//! The pieces:
//!
//! * [`refinery`] — the `darp` entry point: optional small-entry clipping,
//!   per-sample confidence weights, and the constrained projection.
//! * [`solver`] — the weighted scaling solver behind the projection, a
//!   coordinate ascent on the dual with a safeguarded scalar root finder.
//! * [`estimator`] — recovers unknown target marginals from a confusion
//!   matrix and aggregate prediction mass.
//! * [`harness`] — synthetic long-tailed scenario generator plus the
//!   imbalance-aware metrics used to judge refinement.
//! * [`types`] — validated matrix/vector newtypes shared by the above.
//! * [`io`] — minimal CSV exchange format for the command-line tools.

pub mod error;
pub mod estimator;
pub mod harness;
pub mod io;
pub mod refinery;
pub mod solver;
pub mod types;

pub use error::{Error, Result};
