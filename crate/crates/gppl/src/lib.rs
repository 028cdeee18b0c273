//! Rank items and classify pairwise preferences from noisy comparisons.
//!
//! The model places a Gaussian-process prior over a latent "convincingness"
//! score per item and explains each observed comparison through a probit
//! link on the score difference. Fitting is variational: a dense fit for
//! small collections, and a stochastic inducing-point fit that scales to
//! large ones. On top of the fitted posterior the crate offers ranking,
//! pair classification, lengthscale selection by marginal-likelihood
//! ascent, and uncertainty-driven selection of which pairs to label next.

pub mod active;
pub mod cli;
pub mod data;
pub mod error;
pub mod inference;
pub mod kernel;
pub mod kmeans;
pub mod likelihood;
pub mod linalg;
pub mod math;
pub mod mlii;
pub mod model;
pub mod opt;
pub mod predict;
pub mod svi;
pub mod toy;

pub use error::{Error, Result};
