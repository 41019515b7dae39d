//! Trigonometric polynomials on the torus: smooth test functions with exact
//! gradients and exact Brownian semigroup and resolvent.

use std::f64::consts::PI;

use serde::Serialize;

use crate::grid::{GridFunction, GridSpec, TorusPoint};

/// `a cos(2 pi (kx x + ky y)) + b sin(2 pi (kx x + ky y))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrigTerm {
    pub kx: i32,
    pub ky: i32,
    pub cos: f64,
    pub sin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrigPolynomial {
    pub terms: Vec<TrigTerm>,
}

impl TrigPolynomial {
    pub fn constant(c: f64) -> Self {
        Self {
            terms: vec![TrigTerm {
                kx: 0,
                ky: 0,
                cos: c,
                sin: 0.0,
            }],
        }
    }

    /// `cos(2 pi x_1)`.
    pub fn cos_x() -> Self {
        Self {
            terms: vec![TrigTerm {
                kx: 1,
                ky: 0,
                cos: 1.0,
                sin: 0.0,
            }],
        }
    }

    pub fn plus(mut self, other: &TrigPolynomial) -> Self {
        self.terms.extend_from_slice(&other.terms);
        self
    }

    pub fn value(&self, p: TorusPoint) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let a = 2.0 * PI * (t.kx as f64 * p.x + t.ky as f64 * p.y);
                t.cos * a.cos() + t.sin * a.sin()
            })
            .sum()
    }

    pub fn gradient(&self, p: TorusPoint) -> [f64; 2] {
        let mut g = [0.0; 2];
        for t in &self.terms {
            let a = 2.0 * PI * (t.kx as f64 * p.x + t.ky as f64 * p.y);
            let d = -t.cos * a.sin() + t.sin * a.cos();
            g[0] += 2.0 * PI * t.kx as f64 * d;
            g[1] += 2.0 * PI * t.ky as f64 * d;
        }
        g
    }

    /// `sup |f|` bounded by the sum of amplitudes.
    pub fn sup_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.cos.hypot(t.sin)).sum()
    }

    pub fn on_grid(&self, grid: GridSpec) -> GridFunction {
        GridFunction::from_fn(grid, |p| self.value(p))
    }

    /// `sum_cells |grad f(center)|^2 h^2`.
    pub fn energy(&self, grid: GridSpec) -> f64 {
        let h2 = grid.spacing() * grid.spacing();
        (0..grid.cells())
            .map(|k| {
                let g = self.gradient(grid.center_of_index(k));
                g[0] * g[0] + g[1] * g[1]
            })
            .sum::<f64>()
            * h2
    }

    /// Exact `E[f(x + B_t)]` for standard Brownian motion.
    pub fn heat(&self, t: f64, p: TorusPoint) -> f64 {
        self.map_modes(p, |k2| (-2.0 * PI * PI * k2 * t).exp())
    }

    /// Exact `int_0^inf e^{-lambda s} E[f(x + B_s)] ds`.
    pub fn resolvent(&self, lambda: f64, p: TorusPoint) -> f64 {
        self.map_modes(p, |k2| 1.0 / (lambda + 2.0 * PI * PI * k2))
    }

    fn map_modes(&self, p: TorusPoint, m: impl Fn(f64) -> f64) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let a = 2.0 * PI * (t.kx as f64 * p.x + t.ky as f64 * p.y);
                let k2 = (t.kx * t.kx + t.ky * t.ky) as f64;
                m(k2) * (t.cos * a.cos() + t.sin * a.sin())
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gradient_matches_finite_differences() {
        let f = TrigPolynomial {
            terms: vec![
                TrigTerm { kx: 1, ky: 2, cos: 0.3, sin: -0.7 },
                TrigTerm { kx: -3, ky: 1, cos: 1.1, sin: 0.2 },
            ],
        };
        let p = TorusPoint::new(0.31, 0.77);
        let e = 1e-6;
        let g = f.gradient(p);
        let dx = (f.value(p.shifted(e, 0.0)) - f.value(p.shifted(-e, 0.0))) / (2.0 * e);
        let dy = (f.value(p.shifted(0.0, e)) - f.value(p.shifted(0.0, -e))) / (2.0 * e);
        assert_relative_eq!(g[0], dx, max_relative = 1e-6);
        assert_relative_eq!(g[1], dy, max_relative = 1e-6);
    }

    #[test]
    fn energy_of_cos_is_two_pi_squared() {
        let g = GridSpec::new(64).unwrap();
        assert_relative_eq!(TrigPolynomial::cos_x().energy(g), 2.0 * PI * PI, max_relative = 1e-12);
        assert_eq!(TrigPolynomial::constant(3.0).energy(g), 0.0);
    }

    #[test]
    fn spectral_oracles() {
        let f = TrigPolynomial::cos_x();
        let p = TorusPoint::new(0.1, 0.4);
        let c = (2.0 * PI * 0.1).cos();
        assert_relative_eq!(f.resolvent(1.0, p), c / (1.0 + 2.0 * PI * PI), max_relative = 1e-14);
        assert_relative_eq!(f.heat(0.05, p), c * (-PI * PI * 0.1).exp(), max_relative = 1e-14);
    }

    #[test]
    fn resolvent_is_lambda_excessive() {
        // e^{-lambda t} P_t R_lambda f <= R_lambda f for f >= 0
        let f = TrigPolynomial::constant(1.0).plus(&TrigPolynomial {
            terms: vec![TrigTerm { kx: 1, ky: 1, cos: 0.5, sin: 0.4 }],
        });
        let lambda = 2.0;
        let g = GridSpec::new(16).unwrap();
        for k in 0..g.cells() {
            let p = g.center_of_index(k);
            assert!(f.value(p) >= 0.0);
            let r = f.resolvent(lambda, p);
            for t in [0.001, 0.01, 0.1, 1.0] {
                // P_t R_lambda f has the modes of R_lambda f damped by the heat factor
                let pr = TrigPolynomial {
                    terms: f
                        .terms
                        .iter()
                        .map(|tm| {
                            let k2 = (tm.kx * tm.kx + tm.ky * tm.ky) as f64;
                            let s = 1.0 / (lambda + 2.0 * PI * PI * k2);
                            TrigTerm { cos: tm.cos * s, sin: tm.sin * s, ..*tm }
                        })
                        .collect(),
                }
                .heat(t, p);
                assert!((-lambda * t).exp() * pr <= r + 1e-14);
            }
        }
    }
}
