//! Exact OLS covariance algebra for a design augmented by one observation
//! under heteroscedastic noise.
//!
//! The crate computes the sandwich covariances before and after the
//! augmentation, splits their difference into interpretable terms, and
//! decides whether every coordinate's variance is guaranteed not to grow
//! ("variance reduction") for all non-increasing noise profiles. Straight
//! line designs get closed forms, a planner for admissible next points and
//! a Monte Carlo harness.

pub mod decomposition;
pub mod error;
pub mod matrixcore;
pub mod model;
pub mod planner;
pub mod simulate;
pub mod straightline;

pub use error::{Error, Result, RootDenominator};
pub use matrixcore::{Matrix, SymMatrix};
pub use model::{AugmentedProblem, DesignMatrix, NoiseModel, NoiseSpec};
