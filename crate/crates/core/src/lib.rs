//! Numerical laboratory for Liouville Brownian motion on the unit torus.
//!
//! The crate synthesizes a layered log-correlated Gaussian field with an exactly
//! star-scale-invariant covariance ([`fieldgen`]), builds the Gaussian
//! multiplicative chaos measure on top of it ([`chaos`]), time-changes Brownian
//! paths by the associated clock ([`pathkit`]) and estimates the resolvent, heat
//! kernel, Green function, ergodic averages and Dirichlet quotient of the
//! resulting process by Monte Carlo ([`operators`]). The regularized intrinsic
//! metric lives in [`metric`]; experiment orchestration and report emission in
//! [`harness`].

pub mod chaos;
pub mod error;
pub mod fieldgen;
pub mod grid;
pub mod harness;
pub mod metric;
pub mod operators;
pub mod pathkit;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{GridFunction, GridSpec, TorusPoint};
pub use harness::seed::SeedTree;
