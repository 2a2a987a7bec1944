//! Jump Gaussian process regression.
//!
//! A local GP predicts at each test location from its `k` nearest training
//! points. When the surface is only piecewise continuous, neighbors from across
//! a discontinuity bias that prediction. The jump GP fits a linear boundary
//! through the neighborhood jointly with the kernel hyperparameters and
//! predicts only from the neighbors on the test location's side; a likelihood
//! comparison falls back to the ordinary local GP where no jump is present.
//!
//! Module map:
//! - [`types`], [`rng`]: shared domain types and seed derivation.
//! - [`kernel`]: squared-exponential covariance.
//! - [`localgp`]: neighbor search, kriging and its likelihood.
//! - [`jumpgp`]: boundary, split, blended covariance, one-sided posterior, model selection.
//! - [`estimation`]: smoothed likelihood, its gradient, initialization and the fit driver.
//! - [`simulation`]: piecewise test surfaces and data generators.
//! - [`bench`]: error metrics and the replicated experiment sweep.
//! - [`cli`]: the `jumpgp` command-line tool and its file formats.

pub mod bench;
pub mod cli;
pub mod error;
pub mod estimation;
pub mod jumpgp;
pub mod kernel;
pub mod linalg;
pub mod localgp;
pub mod rng;
pub mod simulation;
pub mod types;

pub use error::{Error, Result};
pub use types::{validate_dataset, BoundaryParams, Dataset, KernelParams, Neighborhood, Posterior};
