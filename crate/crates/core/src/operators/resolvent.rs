//! Resolvent `R_lambda f(x) = E[int_0^inf e^{-lambda F(x,t)} f(B^x_t) F(x, dt)]`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, GridSpec, TorusPoint};
use crate::harness::seed::SeedTree;
use crate::pathkit::{DensitySampler, LbmModel};
use crate::stats::{linear_fit, Accumulator};

use super::Observable;

#[derive(Debug, Clone, Copy)]
pub struct ResolventOptions {
    pub replicas: usize,
    /// A replica stops once the discount `e^{-lambda F}` drops below this.
    pub eps_tail: f64,
    /// Per-replica step cap.
    pub max_steps: u64,
    pub seed: u64,
}

impl Default for ResolventOptions {
    fn default() -> Self {
        Self {
            replicas: 100,
            eps_tail: 1e-4,
            max_steps: 200_000_000,
            seed: 0,
        }
    }
}

impl ResolventOptions {
    fn validate(&self, lambda: f64) -> Result<()> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        if !(self.eps_tail > 0.0 && self.eps_tail < 1.0) {
            return Err(invalid("eps_tail must lie in (0, 1)"));
        }
        if self.replicas < 2 {
            return Err(invalid("need at least two replicas"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventEstimate {
    pub lambda: f64,
    pub x: TorusPoint,
    pub value: f64,
    pub stderr: f64,
    /// Deterministic truncation bound `sup|f| eps_tail / lambda`.
    pub tail_bound: f64,
    pub replicas: usize,
}

/// Discounted integrals of several observables along one LBM path from `start`.
pub(crate) fn discounted_integrals(
    model: &LbmModel,
    lambda: f64,
    fs: &[&dyn Observable],
    start: TorusPoint,
    seed: u64,
    eps_tail: f64,
    max_steps: u64,
) -> Result<Vec<f64>> {
    let mut walker = model.walker(start, seed);
    let mut acc = vec![0.0; fs.len()];
    let mut discount = 1.0;
    loop {
        let node = *walker.current();
        let next = (-lambda * (node.clock + node.increment)).exp();
        let mass = (discount - next) / lambda;
        let p = node.point();
        for (a, f) in acc.iter_mut().zip(fs) {
            *a += f.eval(p) * mass;
        }
        if next < eps_tail {
            return Ok(acc);
        }
        if walker.steps() + 1 >= max_steps {
            return Err(Error::StepBudget {
                steps: max_steps,
                clock: node.clock + node.increment,
                discount: next,
            });
        }
        discount = next;
        walker.advance();
    }
}

/// Per-replica path seed; independent of the starting point so that runs
/// from different points share their driving noise.
#[inline]
pub(crate) fn path_seed(tree: &SeedTree, replica: usize) -> u64 {
    tree.child(replica as u64).child(1).seed()
}

/// Monte Carlo estimate of `R_lambda f(x)`.
pub fn resolvent(
    model: &LbmModel,
    lambda: f64,
    f: &dyn Observable,
    x: TorusPoint,
    options: ResolventOptions,
) -> Result<ResolventEstimate> {
    let acc = replicas_at(model, lambda, &[f], x, options)?;
    Ok(ResolventEstimate {
        lambda,
        x,
        value: acc[0].mean(),
        stderr: acc[0].stderr(),
        tail_bound: f.sup() * options.eps_tail / lambda,
        replicas: options.replicas,
    })
}

fn replicas_at(
    model: &LbmModel,
    lambda: f64,
    fs: &[&dyn Observable],
    x: TorusPoint,
    options: ResolventOptions,
) -> Result<Vec<Accumulator>> {
    Ok(paired_samples(model, lambda, fs, x, options)?
        .into_iter()
        .fold(vec![Accumulator::new(); fs.len()], |mut acc, row| {
            for (a, v) in acc.iter_mut().zip(row) {
                a.push(v);
            }
            acc
        }))
}

/// Per-replica values for each observable, in replica order.
pub(crate) fn paired_samples(
    model: &LbmModel,
    lambda: f64,
    fs: &[&dyn Observable],
    x: TorusPoint,
    options: ResolventOptions,
) -> Result<Vec<Vec<f64>>> {
    options.validate(lambda)?;
    let tree = SeedTree::new(options.seed);
    (0..options.replicas)
        .into_par_iter()
        .map(|i| {
            discounted_integrals(
                model,
                lambda,
                fs,
                x,
                path_seed(&tree, i),
                options.eps_tail,
                options.max_steps,
            )
        })
        .collect()
}

/// Least-squares Hölder fit of `|R f(x) - R f(y)|` against `|x - y|`.
#[derive(Debug, Clone, Serialize)]
pub struct ModulusFit {
    pub lambda: f64,
    pub alpha: f64,
    pub alpha_stderr: f64,
    /// Prefactor `e^{intercept}` of the fitted modulus `C d^alpha`.
    pub c: f64,
    pub c_stderr: f64,
    pub r_squared: f64,
    pub distances: Vec<f64>,
    pub differences: Vec<f64>,
    pub difference_stderr: Vec<f64>,
    /// Whether each pair cleared the noise floor and entered the fit.
    pub used: Vec<bool>,
    pub noise: f64,
    pub replicas: usize,
}

/// Fits the resolvent modulus on point pairs, with shared driving noise for
/// the two points of a pair. Pairs whose mean difference is below twice its
/// standard error are dropped from the fit.
pub fn resolvent_modulus(
    model: &LbmModel,
    lambda: f64,
    f: &dyn Observable,
    pairs: &[(TorusPoint, TorusPoint)],
    options: ResolventOptions,
) -> Result<ModulusFit> {
    options.validate(lambda)?;
    let distances: Vec<f64> = pairs.iter().map(|(x, y)| x.distance(y)).collect();
    let dmin = distances.iter().cloned().fold(f64::INFINITY, f64::min);
    let dmax = distances.iter().cloned().fold(0.0, f64::max);
    if pairs.len() < 2 || !(dmin > 0.0) || dmax / dmin < 10.0 * (1.0 - 1e-12) {
        return Err(invalid("pair distances must be positive and span at least one decade"));
    }
    let mut differences = Vec::with_capacity(pairs.len());
    let mut stderr = Vec::with_capacity(pairs.len());
    for (x, y) in pairs {
        let a = paired_samples(model, lambda, &[f], *x, options)?;
        let b = paired_samples(model, lambda, &[f], *y, options)?;
        let acc: Accumulator = a.iter().zip(&b).map(|(u, v)| u[0] - v[0]).collect();
        differences.push(acc.mean());
        stderr.push(acc.stderr());
    }
    let used: Vec<bool> = differences
        .iter()
        .zip(&stderr)
        .map(|(d, s)| d.abs() > 2.0 * s && *d != 0.0)
        .collect();
    let noise = stderr.iter().cloned().fold(0.0, f64::max);
    let (lx, ly): (Vec<f64>, Vec<f64>) = distances
        .iter()
        .zip(&differences)
        .zip(&used)
        .filter(|(_, u)| **u)
        .map(|((d, v), _)| (d.ln(), v.abs().ln()))
        .unzip();
    if lx.len() < 3 {
        return Err(Error::InsufficientSignal { noise });
    }
    let fit = linear_fit(&lx, &ly).ok_or(Error::InsufficientSignal { noise })?;
    let c = fit.intercept.exp();
    Ok(ModulusFit {
        lambda,
        alpha: fit.slope,
        alpha_stderr: fit.slope_stderr,
        c,
        c_stderr: c * fit.intercept_stderr,
        r_squared: fit.r_squared,
        distances,
        differences,
        difference_stderr: stderr,
        used,
        noise,
        replicas: options.replicas,
    })
}

/// Two paired Monte Carlo quantities and their difference.
#[derive(Debug, Clone, Serialize)]
pub struct PairedReport {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    pub difference: f64,
    pub difference_stderr: f64,
    pub replicas: usize,
}

impl PairedReport {
    fn from_pairs(rows: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut l = Accumulator::new();
        let mut r = Accumulator::new();
        let mut d = Accumulator::new();
        for (a, b) in rows {
            l.push(a);
            r.push(b);
            d.push(a - b);
        }
        Self {
            lhs: l.mean(),
            lhs_stderr: l.stderr(),
            rhs: r.mean(),
            rhs_stderr: r.stderr(),
            difference: d.mean(),
            difference_stderr: d.stderr(),
            replicas: l.count() as usize,
        }
    }

    /// `|difference| / stderr`.
    pub fn z(&self) -> f64 {
        if self.difference_stderr > 0.0 {
            self.difference.abs() / self.difference_stderr
        } else if self.difference == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// `<R f, g>` against `<f, R g>` under the normalized Liouville measure, with
/// starts drawn from it and both integrals taken along the same path.
pub fn resolvent_symmetry(
    model: &LbmModel,
    lambda: f64,
    f: &dyn Observable,
    g: &dyn Observable,
    options: ResolventOptions,
) -> Result<PairedReport> {
    options.validate(lambda)?;
    let sampler = DensitySampler::new(model.density());
    let tree = SeedTree::new(options.seed);
    let rows: Vec<Result<(f64, f64)>> = (0..options.replicas)
        .into_par_iter()
        .map(|i| {
            let mut rng = tree.child(i as u64).child(0).rng();
            let x = sampler.sample(&mut rng);
            let r = discounted_integrals(
                model,
                lambda,
                &[f, g],
                x,
                path_seed(&tree, i),
                options.eps_tail,
                options.max_steps,
            )?;
            Ok((g.eval(x) * r[0], f.eval(x) * r[1]))
        })
        .collect();
    let rows: Vec<(f64, f64)> = rows.into_iter().collect::<Result<_>>()?;
    Ok(PairedReport::from_pairs(rows.into_iter()))
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityRow {
    pub x: TorusPoint,
    /// `R_mu f(x) - R_lambda f(x)`.
    pub lhs: f64,
    /// `(lambda - mu) R_lambda (R_mu f)(x)`.
    pub rhs: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub mu: f64,
    pub lambda: f64,
    pub rows: Vec<IdentityRow>,
    pub max_z: f64,
    pub mean_abs_residual: f64,
    pub replicas: usize,
}

/// Checks `R_mu f - R_lambda f = (lambda - mu) R_lambda R_mu f` on the centers
/// of a `k x k` evaluation grid.
///
/// `R_mu f` is first estimated at the evaluation points and extended to the
/// torus by periodic bilinear interpolation; `R_lambda f` and `R_lambda R_mu f`
/// then share their paths. The standard error adds the two independent stages
/// and a bound `((lambda - mu)/lambda) max se(R_mu f)` for the noise carried by
/// the interpolated function.
pub fn resolvent_identity(
    model: &LbmModel,
    mu: f64,
    lambda: f64,
    f: &dyn Observable,
    points_per_axis: usize,
    options: ResolventOptions,
) -> Result<IdentityReport> {
    options.validate(mu)?;
    options.validate(lambda)?;
    let coarse = GridSpec::coarse(points_per_axis)?;
    let first = ResolventOptions {
        seed: SeedTree::new(options.seed).child(0).seed(),
        ..options
    };
    let second = ResolventOptions {
        seed: SeedTree::new(options.seed).child(1).seed(),
        ..options
    };
    let points: Vec<TorusPoint> = (0..coarse.cells()).map(|k| coarse.center_of_index(k)).collect();
    let stage_one: Vec<Accumulator> = points
        .iter()
        .map(|x| replicas_at(model, mu, &[f], *x, first).map(|mut a| a.remove(0)))
        .collect::<Result<_>>()?;
    let coarse_fn = GridFunction::new(coarse, stage_one.iter().map(|a| a.mean()).collect())?;
    let fine = GridFunction::from_fn(model.grid(), |p| coarse_fn.value_at(p));
    let carried = (lambda - mu).abs() / lambda * stage_one.iter().map(|a| a.stderr()).fold(0.0, f64::max);
    let mut rows = Vec::with_capacity(points.len());
    for (x, a) in points.iter().zip(&stage_one) {
        let samples = paired_samples(model, lambda, &[f, &fine], *x, second)?;
        let mut rf = Accumulator::new();
        let mut rh = Accumulator::new();
        let mut combo = Accumulator::new();
        for s in &samples {
            rf.push(s[0]);
            rh.push(s[1]);
            combo.push(s[0] + (lambda - mu) * s[1]);
        }
        let se = (a.stderr().powi(2) + combo.stderr().powi(2) + carried * carried).sqrt();
        rows.push(IdentityRow {
            x: *x,
            lhs: a.mean() - rf.mean(),
            rhs: (lambda - mu) * rh.mean(),
            stderr: se,
        });
    }
    let max_z = rows
        .iter()
        .map(|r| (r.lhs - r.rhs).abs() / r.stderr)
        .fold(0.0, f64::max);
    let mean_abs_residual = rows.iter().map(|r| (r.lhs - r.rhs).abs()).sum::<f64>() / rows.len() as f64;
    Ok(IdentityReport {
        mu,
        lambda,
        rows,
        max_z,
        mean_abs_residual,
        replicas: options.replicas,
    })
}
