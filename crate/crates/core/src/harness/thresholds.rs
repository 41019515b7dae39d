//! Pass/fail thresholds of the acceptance experiments, in one versioned table.
//!
//! Bump [`VERSION`] whenever a value changes; every JSON summary records it.

use serde::Serialize;

pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Thresholds {
    /// Field covariance estimates: `|estimate - reference| <= z s.e.`.
    pub field_covariance_z: f64,
    /// Max-norm gap between the FFT covariance and the Cholesky oracle.
    pub cholesky_max_abs: f64,
    /// Clipped negative spectral mass as a fraction of the trace.
    pub clip_fraction: f64,
    /// Total chaos mass within `sigma` standard errors of 1.
    pub mass_sigma: f64,
    /// `|slope - 2 xi(q)|` for ball moments.
    pub ball_exponent_tol: f64,
    /// `|slope - xi(q)|` for clock moments.
    pub clock_exponent_tol: f64,
    pub revuz_z: f64,
    /// Relative slack for `f = 1`, where both sides are exact up to rounding.
    pub revuz_rounding: f64,
    pub resolvent_oracle_z: f64,
    pub resolvent_symmetry_z: f64,
    pub resolvent_identity_z: f64,
    /// One-sided 95% normal quantile: `alpha - z s.e. > 0`.
    pub modulus_z: f64,
    pub kernel_normalization: f64,
    pub kernel_gaussian_z: f64,
    pub kernel_symmetry_z: f64,
    pub chapman_z: f64,
    /// Relative ergodic error at `gamma = 0`, horizon 100 (calibration).
    pub ergodic_gamma_zero: f64,
    /// Mean relative ergodic error at `gamma > 0`, horizon 200 (calibration).
    pub ergodic_gamma: f64,
    pub dirichlet_z: f64,
    /// Rescaled median metric at most this multiple of its first-level value.
    pub metric_rescaled_factor: f64,
    /// `gamma = 0` lattice distance within this fraction of Euclidean.
    pub metric_euclidean_tol: f64,
    /// Relative spread of `gamma = 0` distances across levels.
    pub metric_level_spread: f64,
    /// Green consistency at `gamma = 0` (not an acceptance criterion).
    pub green_z: f64,
    pub green_residual: f64,
}

pub const THRESHOLDS: Thresholds = Thresholds {
    field_covariance_z: 4.0,
    cholesky_max_abs: 1e-3,
    clip_fraction: 1e-6,
    mass_sigma: 3.0,
    ball_exponent_tol: 0.3,
    clock_exponent_tol: 0.2,
    revuz_z: 4.0,
    revuz_rounding: 1e-9,
    resolvent_oracle_z: 3.0,
    resolvent_symmetry_z: 4.0,
    resolvent_identity_z: 4.0,
    modulus_z: 1.6448536269514722,
    kernel_normalization: 1e-12,
    kernel_gaussian_z: 4.0,
    kernel_symmetry_z: 4.0,
    chapman_z: 4.0,
    ergodic_gamma_zero: 0.05,
    ergodic_gamma: 0.10,
    dirichlet_z: 4.0,
    metric_rescaled_factor: 3.0,
    metric_euclidean_tol: 0.083,
    metric_level_spread: 1e-12,
    green_z: 4.0,
    green_residual: 1e-10,
};
