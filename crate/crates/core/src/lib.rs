//! Clustering of time-series panels with mixtures of dynamic linear models.
//!
//! Each cluster follows its own DLM with discount-factor evolution. Series
//! belong to clusters either statically (one weight vector per series) or
//! dynamically, with weights that evolve over time through a Dirichlet
//! evolution process. Both settings have a Gibbs sampler and a fast point
//! estimator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dlm;
pub mod dynamic;
pub mod edp;
pub mod error;
pub mod init;
pub mod io;
mod linalg;
pub mod panel;
pub mod mixture;
pub mod random;

pub use error::{Error, Result};
pub use panel::TimeSeriesPanel;
