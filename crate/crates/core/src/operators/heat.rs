//! Heat kernel `p_t(x, .)` with respect to the Liouville measure, estimated by
//! binning LBM endpoints on a coarse grid, and the Chapman-Kolmogorov check.

use rayon::prelude::*;
use serde::Serialize;

use crate::chaos::CellMeasure;
use crate::error::{invalid, Result};
use crate::grid::{GridSpec, TorusPoint};
use crate::harness::seed::SeedTree;
use crate::pathkit::{DensitySampler, LbmModel};

/// Cells lighter than this multiple of the average mass are flagged instead of
/// divided by.
pub const MASS_FLOOR: f64 = 1e-6;

/// Where the LBM replicas start.
#[derive(Debug, Clone, Copy, Serialize)]
pub enum Start {
    Point(TorusPoint),
    /// Drawn from the Liouville measure restricted to a cell of the binning grid.
    Cell(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelEstimate {
    pub time: f64,
    pub start: Start,
    /// Binning grid: `size / factor` cells per axis.
    pub bins: GridSpec,
    pub factor: usize,
    pub counts: Vec<u64>,
    pub bin_mass: Vec<f64>,
    /// `count / (replicas mass)` per bin; zero on flagged bins.
    pub density: Vec<f64>,
    pub flagged: Vec<usize>,
    pub replicas: usize,
}

impl KernelEstimate {
    fn from_counts(
        time: f64,
        start: Start,
        bins: GridSpec,
        factor: usize,
        counts: Vec<u64>,
        bin_mass: Vec<f64>,
        replicas: usize,
    ) -> Self {
        let floor = MASS_FLOOR * bin_mass.iter().sum::<f64>() / bin_mass.len() as f64;
        let mut flagged = Vec::new();
        let density = counts
            .iter()
            .zip(&bin_mass)
            .enumerate()
            .map(|(k, (&c, &m))| {
                if m < floor {
                    flagged.push(k);
                    0.0
                } else {
                    c as f64 / (replicas as f64 * m)
                }
            })
            .collect();
        Self {
            time,
            start,
            bins,
            factor,
            counts,
            bin_mass,
            density,
            flagged,
            replicas,
        }
    }

    /// `sum density mass`, plus the endpoint fraction on flagged bins.
    pub fn normalization(&self) -> f64 {
        let on_density: f64 = self.density.iter().zip(&self.bin_mass).map(|(d, m)| d * m).sum();
        let on_flagged: u64 = self.flagged.iter().map(|&k| self.counts[k]).sum();
        on_density + on_flagged as f64 / self.replicas as f64
    }

    /// Fraction of endpoints in bin `k`.
    pub fn probability(&self, k: usize) -> f64 {
        self.counts[k] as f64 / self.replicas as f64
    }

    /// Binomial standard error of the density in bin `k`, with the count
    /// floored at one so empty bins keep a nonzero error.
    pub fn density_stderr(&self, k: usize) -> f64 {
        let r = self.replicas as f64;
        let p = (self.counts[k].max(1) as f64 / r).min(1.0);
        (p * (1.0 - p) / r).sqrt() / self.bin_mass[k]
    }
}

fn bin_masses(measure: &CellMeasure, factor: usize) -> Result<(GridSpec, Vec<f64>)> {
    let bins = measure.grid().coarsened(factor)?;
    Ok((bins, measure.coarse_masses(factor)?))
}

/// Endpoint bins of `replicas` LBM runs at each of the sorted `times`.
fn endpoint_counts(
    model: &LbmModel,
    start: Start,
    factor: usize,
    times: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<Vec<Vec<u64>>> {
    if times.is_empty() || times.iter().any(|t| !(*t > 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid("times must be positive and sorted"));
    }
    if replicas == 0 {
        return Err(invalid("need at least one replica"));
    }
    let grid = model.grid();
    let bins = grid.coarsened(factor)?;
    let sampler = match start {
        Start::Cell(k) => Some(DensitySampler::within_coarse_cell(model.density(), factor, k)?),
        Start::Point(_) => None,
    };
    let tree = SeedTree::new(seed);
    let chunk = 256;
    let chunks = replicas.div_ceil(chunk);
    let partial: Vec<Vec<Vec<u64>>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut counts = vec![vec![0u64; bins.cells()]; times.len()];
            for i in c * chunk..((c + 1) * chunk).min(replicas) {
                let stream = tree.child(i as u64);
                let x = match (&sampler, start) {
                    (Some(s), _) => s.sample(&mut stream.child(0).rng()),
                    (None, Start::Point(p)) => p,
                    (None, Start::Cell(_)) => unreachable!(),
                };
                let mut walker = model.walker(x, stream.child(1).seed());
                for (slot, &t) in counts.iter_mut().zip(times) {
                    let p = walker.position_at(t);
                    slot[bins.index_of(p)] += 1;
                }
            }
            counts
        })
        .collect();
    let mut total = vec![vec![0u64; bins.cells()]; times.len()];
    for part in partial {
        for (t, p) in total.iter_mut().zip(part) {
            for (a, b) in t.iter_mut().zip(p) {
                *a += b;
            }
        }
    }
    Ok(total)
}

/// Density of LBM at quantum time `t` with respect to `measure`, binned on the
/// grid with `size / factor` cells per axis.
pub fn heat_kernel(
    model: &LbmModel,
    measure: &CellMeasure,
    t: f64,
    start: Start,
    factor: usize,
    replicas: usize,
    seed: u64,
) -> Result<KernelEstimate> {
    Ok(heat_kernel_times(model, measure, &[t], start, factor, replicas, seed)?.remove(0))
}

/// Kernel estimates at several times from the same set of paths.
pub fn heat_kernel_times(
    model: &LbmModel,
    measure: &CellMeasure,
    times: &[f64],
    start: Start,
    factor: usize,
    replicas: usize,
    seed: u64,
) -> Result<Vec<KernelEstimate>> {
    if measure.grid() != model.grid() {
        return Err(invalid("measure and model live on different grids"));
    }
    let (bins, mass) = bin_masses(measure, factor)?;
    let counts = endpoint_counts(model, start, factor, times, replicas, seed)?;
    Ok(counts
        .into_iter()
        .zip(times)
        .map(|(c, &t)| KernelEstimate::from_counts(t, start, bins, factor, c, mass.clone(), replicas))
        .collect())
}

/// Exact probability that a wrapped Brownian motion started at `x` sits in
/// each bin at time `t`.
pub fn wrapped_gaussian_bins(bins: GridSpec, x: TorusPoint, t: f64) -> Vec<f64> {
    use statrs::distribution::{ContinuousCDF, Normal};
    let normal = Normal::new(0.0, t.sqrt()).unwrap();
    let n = bins.size();
    let axis = |c: f64| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let (a, b) = (i as f64 / n as f64, (i + 1) as f64 / n as f64);
                let reach = (10.0 * t.sqrt()).ceil() as i64 + 1;
                (-reach..=reach)
                    .map(|m| normal.cdf(b + m as f64 - c) - normal.cdf(a + m as f64 - c))
                    .sum()
            })
            .collect()
    };
    let px = axis(x.x);
    let py = axis(x.y);
    (0..bins.cells())
        .map(|k| {
            let (i, j) = bins.coords(k);
            px[i] * py[j]
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryRow {
    pub a: usize,
    pub b: usize,
    /// `p_t(A -> B) / M(B)`.
    pub forward: f64,
    /// `p_t(B -> A) / M(A)`.
    pub backward: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SymmetryReport {
    pub time: f64,
    pub rows: Vec<SymmetryRow>,
    /// Mean of `forward - backward` over pairs and its standard error.
    pub mean_difference: f64,
    pub mean_stderr: f64,
    pub max_z: f64,
}

/// Kernel symmetry on pairs of bins, starting from the Liouville measure
/// restricted to each bin.
pub fn heat_kernel_symmetry(
    model: &LbmModel,
    measure: &CellMeasure,
    t: f64,
    pairs: &[(usize, usize)],
    factor: usize,
    replicas: usize,
    seed: u64,
) -> Result<SymmetryReport> {
    let tree = SeedTree::new(seed);
    let mut rows = Vec::with_capacity(pairs.len());
    for (idx, &(a, b)) in pairs.iter().enumerate() {
        let stream = tree.child(idx as u64);
        let ka = heat_kernel(model, measure, t, Start::Cell(a), factor, replicas, stream.child(0).seed())?;
        let kb = heat_kernel(model, measure, t, Start::Cell(b), factor, replicas, stream.child(1).seed())?;
        let se = ka.density_stderr(b).hypot(kb.density_stderr(a));
        rows.push(SymmetryRow {
            a,
            b,
            forward: ka.density[b],
            backward: kb.density[a],
            stderr: se,
        });
    }
    let k = rows.len() as f64;
    let mean_difference = rows.iter().map(|r| r.forward - r.backward).sum::<f64>() / k;
    let mean_stderr = rows.iter().map(|r| r.stderr * r.stderr).sum::<f64>().sqrt() / k;
    let max_z = rows
        .iter()
        .map(|r| (r.forward - r.backward).abs() / r.stderr)
        .fold(0.0, f64::max);
    Ok(SymmetryReport {
        time: t,
        rows,
        mean_difference,
        mean_stderr,
        max_z,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChapmanReport {
    pub s: f64,
    pub t: f64,
    pub bins: GridSpec,
    /// `p_{s+t}(x, B)` per bin.
    pub direct: Vec<f64>,
    /// `sum_z p_s(x, z) p_t(z, B) M(z)` per bin.
    pub composed: Vec<f64>,
    pub stderr: Vec<f64>,
    pub max_abs_residual: f64,
    pub mean_abs_residual: f64,
    pub max_z: f64,
    pub replicas: usize,
}

/// Compares `p_{s+t}(x, .)` with `int p_s(x, z) p_t(z, .) M(dz)` on the binning
/// grid. The second factor starts from the Liouville measure within each bin
/// `z`. All three stages use independent randomness, and the standard error
/// per bin combines their multinomial variances.
#[allow(clippy::too_many_arguments)]
pub fn chapman_kolmogorov_check(
    model: &LbmModel,
    measure: &CellMeasure,
    s: f64,
    t: f64,
    x: TorusPoint,
    factor: usize,
    replicas: usize,
    seed: u64,
) -> Result<ChapmanReport> {
    let tree = SeedTree::new(seed);
    let direct = heat_kernel(model, measure, s + t, Start::Point(x), factor, replicas, tree.child(0).seed())?;
    let first = heat_kernel(model, measure, s, Start::Point(x), factor, replicas, tree.child(1).seed())?;
    let bins = direct.bins;
    let cells = bins.cells();
    let from_z: Vec<KernelEstimate> = (0..cells)
        .map(|z| heat_kernel(model, measure, t, Start::Cell(z), factor, replicas, tree.child(2).child(z as u64).seed()))
        .collect::<Result<_>>()?;
    let r = replicas as f64;
    let a: Vec<f64> = (0..cells).map(|z| first.probability(z)).collect();
    let mut composed = Vec::with_capacity(cells);
    let mut stderr = Vec::with_capacity(cells);
    for b in 0..cells {
        let m_b = direct.bin_mass[b];
        let q: Vec<f64> = (0..cells).map(|z| from_z[z].probability(b)).collect();
        let c: f64 = a.iter().zip(&q).map(|(u, v)| u * v).sum();
        // multinomial variance of sum_z a_z q_z over the first stage
        let second_moment: f64 = a.iter().zip(&q).map(|(u, v)| u * v * v).sum();
        let var_first = (second_moment - c * c).max(0.0) / r;
        // binomial variances of the independent q_z
        let var_second: f64 = a
            .iter()
            .zip(&from_z)
            .map(|(u, k)| {
                let p = (k.counts[b].max(1) as f64 / r).min(1.0);
                u * u * p * (1.0 - p) / r
            })
            .sum();
        let p = (direct.counts[b].max(1) as f64 / r).min(1.0);
        let var_direct = p * (1.0 - p) / r;
        composed.push(c / m_b);
        stderr.push((var_first + var_second + var_direct).sqrt() / m_b);
    }
    let residuals: Vec<f64> = direct.density.iter().zip(&composed).map(|(d, c)| d - c).collect();
    let max_abs_residual = residuals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mean_abs_residual = residuals.iter().map(|v| v.abs()).sum::<f64>() / cells as f64;
    let max_z = residuals
        .iter()
        .zip(&stderr)
        .map(|(v, s)| v.abs() / s)
        .fold(0.0, f64::max);
    Ok(ChapmanReport {
        s,
        t,
        bins,
        direct: direct.density,
        composed,
        stderr,
        max_abs_residual,
        mean_abs_residual,
        max_z,
        replicas,
    })
}
