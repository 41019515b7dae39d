//! Time averages along LBM paths: ergodic averages and the Dirichlet quotient.

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::CellMeasure;
use crate::error::{invalid, Result};
use crate::grid::{GridFunction, TorusPoint};
use crate::harness::seed::SeedTree;
use crate::pathkit::{DensitySampler, LbmModel};
use crate::stats::Accumulator;

use super::trig::TrigPolynomial;
use super::Observable;

/// `int_0^T f(LBM_r) dr = int f(B_s) F(x, ds)` up to clock value `T`, with the
/// left-endpoint rule and a partial last step.
pub(crate) fn quantum_time_integral(model: &LbmModel, f: &dyn Observable, x: TorusPoint, horizon: f64, seed: u64) -> f64 {
    let mut walker = model.walker(x, seed);
    let mut acc = 0.0;
    loop {
        let node = *walker.current();
        let end = node.clock + node.increment;
        if end >= horizon {
            return acc + f.eval(node.point()) * (horizon - node.clock);
        }
        acc += f.eval(node.point()) * node.increment;
        walker.advance();
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ErgodicRun {
    /// `(t, (1/t) int_0^t f(LBM_r) dr)` at `horizon 2^{-j}`, increasing in `t`.
    pub checkpoints: Vec<(f64, f64)>,
    /// `sum f mass / sum mass`.
    pub target: f64,
}

impl ErgodicRun {
    pub fn final_average(&self) -> f64 {
        self.checkpoints.last().unwrap().1
    }

    pub fn relative_error(&self) -> f64 {
        ((self.final_average() - self.target) / self.target).abs()
    }
}

/// Running averages of `f` along one LBM path at dyadic checkpoints
/// `horizon / 2^j`, `j = 0..levels`.
pub fn ergodic_average(
    model: &LbmModel,
    measure: &CellMeasure,
    f: &GridFunction,
    horizon: f64,
    x: TorusPoint,
    levels: usize,
    seed: u64,
) -> Result<ErgodicRun> {
    if !(horizon > 0.0) || levels == 0 {
        return Err(invalid("need a positive horizon and at least one checkpoint"));
    }
    let target = measure.mean_of(f)?;
    let marks: Vec<f64> = (0..levels).rev().map(|j| horizon / 2f64.powi(j as i32)).collect();
    let mut walker = model.walker(x, seed);
    let mut acc = 0.0;
    let mut checkpoints = Vec::with_capacity(levels);
    let mut next = 0;
    while next < marks.len() {
        let node = *walker.current();
        let v = f.eval(node.point());
        let end = node.clock + node.increment;
        while next < marks.len() && end >= marks[next] {
            let t = marks[next];
            checkpoints.push((t, (acc + v * (t - node.clock)) / t));
            next += 1;
        }
        acc += v * node.increment;
        walker.advance();
    }
    Ok(ErgodicRun { checkpoints, target })
}

#[derive(Debug, Clone, Serialize)]
pub struct DirichletEstimate {
    pub t: f64,
    /// `(1/t) int (f - P_t f) f dM`.
    pub quotient: f64,
    pub stderr: f64,
    /// `sum_cells |grad f|^2 h^2`.
    pub energy: f64,
    pub replicas: usize,
}

/// Estimates `(1/t) int (f(x) - P_t f(x)) f(x) M(dx)` with starts drawn from
/// the Liouville measure and one LBM endpoint per start.
pub fn dirichlet_quotient(
    model: &LbmModel,
    measure: &CellMeasure,
    f: &TrigPolynomial,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<DirichletEstimate> {
    if !(t > 0.0) || replicas < 2 {
        return Err(invalid("need t > 0 and at least two replicas"));
    }
    let sampler = DensitySampler::new(model.density());
    let tree = SeedTree::new(seed);
    let samples: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| {
            let stream = tree.child(i as u64);
            let x = sampler.sample(&mut stream.child(0).rng());
            let mut walker = model.walker(x, stream.child(1).seed());
            let y = walker.position_at(t);
            let fx = f.value(x);
            (fx - f.value(y)) * fx / t
        })
        .collect();
    let acc: Accumulator = samples.into_iter().collect();
    let total = measure.total();
    Ok(DirichletEstimate {
        t,
        quotient: total * acc.mean(),
        stderr: total * acc.stderr(),
        energy: f.energy(measure.grid()),
        replicas,
    })
}

/// Exact quotient `(1 - e^{-2 pi^2 t}) / (2 t)` for `cos(2 pi x_1)` under
/// standard Brownian motion; tends to `pi^2`, half the energy `2 pi^2`.
pub fn cosine_quotient_exact(t: f64) -> f64 {
    let l = 2.0 * std::f64::consts::PI * std::f64::consts::PI;
    (1.0 - (-l * t).exp()) / (2.0 * t)
}
