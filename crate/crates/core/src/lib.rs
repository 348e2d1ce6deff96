//! Bayesian nonparanormal semi-supervised binary classifier.
//!
//! Each feature is mapped into (0, 1) by a Gaussian CDF, then through a
//! monotone cubic B-spline transformation under which both classes are
//! multivariate normal. Transformations, class parameters and missing labels
//! are sampled jointly by Gibbs sampling; the spline basis size is chosen by a
//! low-density boundary criterion.

pub mod classifier;
pub mod cli;
pub mod csvio;
pub mod dataset;
pub mod error;
pub mod gibbs;
pub mod harness;
pub mod metrics;
pub mod numeric;
pub mod prior;
pub mod simgen;
pub mod splines;
pub mod tmvn;

pub use error::{Error, Result};
