//! Brownian paths on the torus, the Liouville clock `F(x, t)`, its inverse and
//! Liouville Brownian motion trajectories.
//!
//! The clock density at `p` is `exp(gamma X_n(p) - gamma^2 V_n(p) / 2)` where
//! `X_n(p)` is the bilinear interpolation of the cell-center field and `V_n(p)`
//! its exact variance under the lattice covariance. At cell centers
//! `V_n = E[X_n^2] = n`; between centers the interpolated field has slightly
//! smaller variance and using `V_n(p)` keeps the density at unit mean.

mod scaling;
mod walker;

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::{chaos_measure, check_gamma};
use crate::error::{invalid, Error, Result};
use crate::fieldgen::{FieldSource, LatticeCovariance, LayeredField};
use crate::grid::{wrap_unit, GridFunction, GridSpec, TorusPoint};
use crate::harness::seed::SeedTree;
use crate::stats::Accumulator;

pub use scaling::{clock_moment_scaling, ClockScalingFit};
pub use walker::{Node, Walker};

/// Largest admissible time step at level `n`: `e^{-2n} / 4`, so that a
/// Brownian step stays below half the smallest correlation length.
pub fn max_time_step(n: usize) -> f64 {
    (-2.0 * n as f64).exp() / 4.0
}

fn check_time_step(dt: f64, n: usize) -> Result<()> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    let max_dt = max_time_step(n);
    if dt > max_dt * (1.0 + 1e-12) {
        return Err(Error::StepTooCoarse {
            dt,
            level: n,
            max_dt,
        });
    }
    Ok(())
}

/// Pointwise clock density of a field at one level.
#[derive(Debug, Clone)]
pub struct ClockDensity {
    grid: GridSpec,
    gamma: f64,
    level: usize,
    values: Vec<f64>,
    cov: LatticeCovariance,
}

impl ClockDensity {
    pub fn new(field: &LayeredField, gamma: f64, n: usize) -> Result<Self> {
        check_gamma(gamma)?;
        field.check_level(n)?;
        Ok(Self {
            grid: field.grid(),
            gamma,
            level: n,
            values: field.values(n)?.to_vec(),
            cov: field.lattice_covariance(n)?,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Interpolated field value and its variance at `p`.
    #[inline]
    pub fn field_and_variance(&self, p: TorusPoint) -> (f64, f64) {
        let b = self.grid.bilinear(p);
        let w = b.weight;
        let x = w[0] * self.values[b.index[0]]
            + w[1] * self.values[b.index[1]]
            + w[2] * self.values[b.index[2]]
            + w[3] * self.values[b.index[3]];
        let [c0, c1, c2] = self.cov;
        let same = w[0] * w[0] + w[1] * w[1] + w[2] * w[2] + w[3] * w[3];
        let axis = w[0] * w[1] + w[2] * w[3] + w[0] * w[2] + w[1] * w[3];
        let diag = w[0] * w[3] + w[1] * w[2];
        (x, c0 * same + 2.0 * c1 * axis + 2.0 * c2 * diag)
    }

    #[inline]
    pub fn weight(&self, p: TorusPoint) -> f64 {
        if self.gamma == 0.0 {
            return 1.0;
        }
        let (x, v) = self.field_and_variance(p);
        (self.gamma * x - 0.5 * self.gamma * self.gamma * v).exp()
    }
}

/// Draws points from the continuous clock density `w(p) dp` by rejection
/// against a per-cell upper bound, optionally restricted to one coarse cell.
///
/// This is the measure the discretized process is reversible for; cell-center
/// masses approximate it to quadrature accuracy.
#[derive(Debug, Clone)]
pub struct DensitySampler<'a> {
    density: &'a ClockDensity,
    cells: Vec<usize>,
    cumulative: Vec<f64>,
    bound: Vec<f64>,
}

impl<'a> DensitySampler<'a> {
    pub fn new(density: &'a ClockDensity) -> Self {
        Self::over_cells(density, 0..density.grid.cells())
    }

    /// Restricted to the fine cells of coarse cell `coarse_index` at `factor`.
    pub fn within_coarse_cell(density: &'a ClockDensity, factor: usize, coarse_index: usize) -> Result<Self> {
        let grid = density.grid;
        let coarse = grid.coarsened(factor)?;
        if coarse_index >= coarse.cells() {
            return Err(invalid(format!("coarse cell {coarse_index} out of range")));
        }
        let (ci, cj) = coarse.coords(coarse_index);
        let cells = (0..factor)
            .flat_map(|dj| (0..factor).map(move |di| grid.index(ci * factor + di, cj * factor + dj)));
        Ok(Self::over_cells(density, cells))
    }

    fn over_cells(density: &'a ClockDensity, cells: impl Iterator<Item = usize>) -> Self {
        let grid = density.grid;
        let n = grid.size() as isize;
        let g = density.gamma;
        let [c0, c1, c2] = density.cov;
        // smallest variance of the interpolant, reached mid-way between four centers
        let v_min = (c0 + 2.0 * c1 + c2) / 4.0;
        let cells: Vec<usize> = cells.collect();
        let mut bound = Vec::with_capacity(cells.len());
        let mut cumulative = Vec::with_capacity(cells.len());
        let mut acc = 0.0;
        for &c in &cells {
            let b = if g == 0.0 {
                1.0
            } else {
                let (i, j) = grid.coords(c);
                let mut top = f64::NEG_INFINITY;
                for dj in -1..=1 {
                    for di in -1..=1 {
                        let ii = (i as isize + di).rem_euclid(n) as usize;
                        let jj = (j as isize + dj).rem_euclid(n) as usize;
                        top = top.max(density.values[grid.index(ii, jj)]);
                    }
                }
                // g x is maximal at the largest corner value, the variance term at v_min
                (g * top - 0.5 * g * g * v_min.min(c0)).exp()
            };
            bound.push(b);
            acc += b;
            cumulative.push(acc);
        }
        Self {
            density,
            cells,
            cumulative,
            bound,
        }
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> TorusPoint {
        let grid = self.density.grid;
        let h = grid.spacing();
        let total = *self.cumulative.last().unwrap();
        loop {
            let u = rng.random::<f64>() * total;
            let k = self.cumulative.partition_point(|&c| c <= u).min(self.cells.len() - 1);
            let (i, j) = grid.coords(self.cells[k]);
            let p = TorusPoint::new(
                (i as f64 + rng.random::<f64>()) * h,
                (j as f64 + rng.random::<f64>()) * h,
            );
            if rng.random::<f64>() * self.bound[k] <= self.density.weight(p) {
                return p;
            }
        }
    }
}

/// Field, coupling, level and time step: everything needed to run LBM.
#[derive(Debug, Clone)]
pub struct LbmModel {
    density: ClockDensity,
    dt: f64,
}

impl LbmModel {
    /// Checks `dt <= e^{-2n}/4`.
    pub fn new(field: &LayeredField, gamma: f64, n: usize, dt: f64) -> Result<Self> {
        check_time_step(dt, n)?;
        Ok(Self {
            density: ClockDensity::new(field, gamma, n)?,
            dt,
        })
    }

    /// Model with the largest admissible step.
    pub fn with_max_step(field: &LayeredField, gamma: f64, n: usize) -> Result<Self> {
        Self::new(field, gamma, n, max_time_step(n))
    }

    pub fn density(&self) -> &ClockDensity {
        &self.density
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn gamma(&self) -> f64 {
        self.density.gamma
    }

    pub fn level(&self) -> usize {
        self.density.level
    }

    pub fn grid(&self) -> GridSpec {
        self.density.grid
    }

    pub fn walker(&self, start: TorusPoint, seed: u64) -> Walker<'_> {
        Walker::new(self, start, seed)
    }
}

/// Sampled Brownian path with its unwrapped lift.
#[derive(Debug, Clone, Serialize)]
pub struct BrownianPath {
    start: TorusPoint,
    dt: f64,
    positions: Vec<TorusPoint>,
    unwrapped: Vec<[f64; 2]>,
}

impl BrownianPath {
    pub fn start(&self) -> TorusPoint {
        self.start
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.positions.len() - 1
    }

    pub fn positions(&self) -> &[TorusPoint] {
        &self.positions
    }

    pub fn unwrapped(&self) -> &[[f64; 2]] {
        &self.unwrapped
    }

    /// The path restarted at node `k`, with time shifted by `k dt`.
    pub fn tail(&self, k: usize) -> Result<BrownianPath> {
        if k > self.steps() {
            return Err(invalid(format!("node {k} beyond the path length {}", self.steps())));
        }
        Ok(BrownianPath {
            start: self.positions[k],
            dt: self.dt,
            positions: self.positions[k..].to_vec(),
            unwrapped: self.unwrapped[k..].to_vec(),
        })
    }
}

/// `K = ceil(horizon / dt)` Gaussian steps from `x0`, wrapped onto the torus.
pub fn brownian_path(x0: TorusPoint, horizon: f64, dt: f64, seed: u64) -> Result<BrownianPath> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(invalid(format!("time step must be positive, got {dt}")));
    }
    if !(horizon >= dt) || !horizon.is_finite() {
        return Err(invalid(format!("horizon {horizon} must be finite and at least dt = {dt}")));
    }
    let steps = ((horizon / dt) * (1.0 - 1e-12)).ceil() as usize;
    let mut unwrapped = Vec::with_capacity(steps + 1);
    let mut pos = [x0.x, x0.y];
    unwrapped.push(pos);
    for d in walker::increments(seed, steps, dt) {
        pos = [pos[0] + d[0], pos[1] + d[1]];
        unwrapped.push(pos);
    }
    let positions = unwrapped
        .iter()
        .map(|u| TorusPoint {
            x: wrap_unit(u[0]),
            y: wrap_unit(u[1]),
        })
        .collect();
    Ok(BrownianPath {
        start: x0,
        dt,
        positions,
        unwrapped,
    })
}

/// Cumulative clock values `F_k = F(x0, k dt)` along a path.
#[derive(Debug, Clone, Serialize)]
pub struct PathClock {
    gamma: f64,
    level: usize,
    dt: f64,
    values: Vec<f64>,
}

impl PathClock {
    /// Clock from explicit samples at times `k dt`; must start at zero and be
    /// strictly increasing.
    pub fn from_values(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(invalid("time step must be positive"));
        }
        if values.first() != Some(&0.0) {
            return Err(invalid("clock must start at 0"));
        }
        if values.windows(2).any(|w| !(w[1] > w[0])) || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("clock samples must be finite and strictly increasing"));
        }
        Ok(Self {
            gamma: f64::NAN,
            level: 0,
            dt,
            values,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `F_K`, the last clock value.
    pub fn total(&self) -> f64 {
        *self.values.last().unwrap()
    }

    /// `(k, frac)` with `F_k <= tau < F_{k+1}` and `frac` the linear position of
    /// `tau` within that step; `tau = F_K` maps to `(K, 0)`.
    fn locate(&self, tau: f64) -> Result<(usize, f64)> {
        if !(tau >= 0.0) {
            return Err(invalid(format!("clock time must be nonnegative, got {tau}")));
        }
        let total = self.total();
        if tau > total {
            return Err(Error::HorizonExhausted {
                reached: total,
                requested: tau,
            });
        }
        let k = self.values.partition_point(|&f| f <= tau) - 1;
        if k + 1 == self.values.len() {
            return Ok((k, 0.0));
        }
        let (a, b) = (self.values[k], self.values[k + 1]);
        Ok((k, (tau - a) / (b - a)))
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "F"])?;
        for (k, f) in self.values.iter().enumerate() {
            w.write_record(&[(k as f64 * self.dt).to_string(), f.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Left-endpoint clock `F_k = dt sum_{j<k} w(B_j)` along `path`.
pub fn clock(field: &LayeredField, gamma: f64, n: usize, path: &BrownianPath) -> Result<PathClock> {
    check_time_step(path.dt, n)?;
    let density = ClockDensity::new(field, gamma, n)?;
    let mut values = Vec::with_capacity(path.positions.len());
    let mut sum = 0.0;
    values.push(0.0);
    for p in &path.positions[..path.steps()] {
        sum += density.weight(*p);
        values.push(sum * path.dt);
    }
    Ok(PathClock {
        gamma,
        level: n,
        dt: path.dt,
        values,
    })
}

/// Brownian time `inf{s : F(s) > tau}` under linear interpolation of the clock.
pub fn invert_clock(clock: &PathClock, tau: f64) -> Result<f64> {
    let (k, frac) = clock.locate(tau)?;
    Ok((k as f64 + frac) * clock.dt)
}

/// Positions of Liouville Brownian motion at quantum times.
#[derive(Debug, Clone, Serialize)]
pub struct LbmTrajectory {
    pub times: Vec<f64>,
    pub brownian_times: Vec<f64>,
    pub positions: Vec<TorusPoint>,
}

impl LbmTrajectory {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "x", "y"])?;
        for (t, p) in self.times.iter().zip(&self.positions) {
            w.write_record(&[t.to_string(), p.x.to_string(), p.y.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `B` evaluated at the inverted clock for each quantum time in `times`.
pub fn lbm_trajectory(path: &BrownianPath, clock: &PathClock, times: &[f64]) -> Result<LbmTrajectory> {
    if clock.values.len() != path.positions.len() || clock.dt != path.dt {
        return Err(invalid("clock was not computed on this path"));
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times must be sorted"));
    }
    let mut brownian_times = Vec::with_capacity(times.len());
    let mut positions = Vec::with_capacity(times.len());
    for &tau in times {
        let (k, frac) = clock.locate(tau)?;
        let a = path.unwrapped[k];
        let p = if frac == 0.0 {
            path.positions[k]
        } else {
            let b = path.unwrapped[k + 1];
            TorusPoint::new(a[0] + frac * (b[0] - a[0]), a[1] + frac * (b[1] - a[1]))
        };
        brownian_times.push((k as f64 + frac) * clock.dt);
        positions.push(p);
    }
    Ok(LbmTrajectory {
        times: times.to_vec(),
        brownian_times,
        positions,
    })
}

/// Both sides of the Revuz identity for an ensemble of fields.
#[derive(Debug, Clone, Serialize)]
pub struct RevuzReport {
    /// Ensemble mean of `(1/t) E[int_0^t f(B_s) F(x, ds)]` over stratified starts.
    pub lhs: f64,
    pub lhs_stderr: f64,
    /// Ensemble mean of `sum_cells f mass`.
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// Mean and standard error of the per-field differences `lhs_i - rhs_i`.
    pub difference: f64,
    pub difference_stderr: f64,
    pub fields: usize,
    pub starts_per_field: usize,
}

/// Options for [`revuz_check`].
#[derive(Debug, Clone, Copy)]
pub struct RevuzOptions {
    /// Starts form a `k x k` grid shifted by a uniform random offset per field.
    pub starts_per_axis: usize,
    /// Time step; `None` takes the largest admissible step.
    pub dt: Option<f64>,
    pub seed: u64,
}

/// Compares `(1/t) int dx E[int_0^t f(B^x_s) F(x, ds)]` with `sum_cells f mass`
/// field by field.
pub fn revuz_check<S: FieldSource + ?Sized>(
    fields: &S,
    gamma: f64,
    n: usize,
    f: &GridFunction,
    t: f64,
    options: RevuzOptions,
) -> Result<RevuzReport> {
    if fields.count() == 0 {
        return Err(invalid("need at least one field"));
    }
    if !(t > 0.0) {
        return Err(invalid("t must be positive"));
    }
    let k = options.starts_per_axis;
    if k == 0 {
        return Err(invalid("need at least one start per axis"));
    }
    let tree = SeedTree::new(options.seed);
    let rows: Vec<Result<(f64, f64)>> = (0..fields.count())
        .into_par_iter()
        .map(|i| {
            let field = fields.field(i)?;
            let field = field.as_ref();
            if field.grid() != f.grid() {
                return Err(invalid("f and the fields live on different grids"));
            }
            let dt = options.dt.unwrap_or_else(|| max_time_step(n));
            let model = LbmModel::new(field, gamma, n, dt)?;
            let rhs = chaos_measure(field, gamma, n)?.integrate(f)?;
            let stream = tree.child(i as u64);
            let mut rng = stream.child(0).rng();
            let offset: [f64; 2] = [rand::Rng::random(&mut rng), rand::Rng::random(&mut rng)];
            let steps = ((t / dt) * (1.0 - 1e-12)).ceil() as u64;
            let mut sum = 0.0;
            for s in 0..k * k {
                let (a, b) = (s % k, s / k);
                let x = TorusPoint::new((a as f64 + offset[0]) / k as f64, (b as f64 + offset[1]) / k as f64);
                let mut walker = model.walker(x, stream.child(1).child(s as u64).seed());
                let mut acc = 0.0;
                loop {
                    let node = *walker.current();
                    let dt_eff = if node.time + dt > t { (t - node.time) / dt } else { 1.0 };
                    acc += f.value_at(node.point()) * node.increment * dt_eff;
                    if walker.steps() + 1 >= steps {
                        break;
                    }
                    walker.advance();
                }
                sum += acc / t;
            }
            Ok((sum / (k * k) as f64, rhs))
        })
        .collect();
    let mut lhs = Accumulator::new();
    let mut rhs = Accumulator::new();
    let mut diff = Accumulator::new();
    for row in rows {
        let (l, r) = row?;
        lhs.push(l);
        rhs.push(r);
        diff.push(l - r);
    }
    Ok(RevuzReport {
        lhs: lhs.mean(),
        lhs_stderr: lhs.stderr(),
        rhs: rhs.mean(),
        rhs_stderr: rhs.stderr(),
        difference: diff.mean(),
        difference_stderr: diff.stderr(),
        fields: fields.count(),
        starts_per_field: k * k,
    })
}
