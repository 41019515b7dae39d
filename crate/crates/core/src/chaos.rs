//! Gaussian multiplicative chaos on the grid: the Liouville measure at a cutoff
//! level, sampling from it, ball-moment scaling exponents and thick-point ratios.

use std::borrow::Cow;
use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fieldgen::{FieldSource, LayeredField};
use crate::grid::{GridFunction, GridSpec, TorusPoint};
use crate::harness::seed::SeedTree;
use crate::stats::linear_fit;

pub(crate) fn check_gamma(gamma: f64) -> Result<()> {
    if !(0.0..2.0).contains(&gamma) {
        return Err(invalid(format!("gamma must lie in [0, 2), got {gamma}")));
    }
    Ok(())
}

/// Moments `E[M(B)^q]` are finite for `q < min(2, 4/gamma^2)`.
pub fn moment_threshold(gamma: f64) -> f64 {
    if gamma == 0.0 {
        2.0
    } else {
        (4.0 / (gamma * gamma)).min(2.0)
    }
}

/// Multifractal exponent `(1 + gamma^2/4) q - gamma^2 q^2 / 4`.
pub fn xi(q: f64, gamma: f64) -> Result<f64> {
    check_gamma(gamma)?;
    if !(q >= 0.0) {
        return Err(invalid(format!("q must be nonnegative, got {q}")));
    }
    let g2 = gamma * gamma / 4.0;
    Ok((1.0 + g2) * q - g2 * q * q)
}

/// Liouville measure at cutoff `n`, as a mass per grid cell.
#[derive(Debug, Clone)]
pub struct CellMeasure {
    grid: GridSpec,
    level: usize,
    gamma: f64,
    masses: Vec<f64>,
}

impl CellMeasure {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    pub fn average(&self) -> f64 {
        self.total() / self.masses.len() as f64
    }

    /// Mass of the cell containing `p`.
    pub fn mass_at(&self, p: TorusPoint) -> f64 {
        self.masses[self.grid.index_of(p)]
    }

    /// Masses aggregated onto the grid with `size / factor` cells per axis.
    pub fn coarse_masses(&self, factor: usize) -> Result<Vec<f64>> {
        let coarse = self.grid.coarsened(factor)?;
        let mut out = vec![0.0; coarse.cells()];
        for (k, m) in self.masses.iter().enumerate() {
            let (i, j) = self.grid.coords(k);
            out[coarse.index(i / factor, j / factor)] += m;
        }
        Ok(out)
    }

    /// `sum_cells f * mass`.
    pub fn integrate(&self, f: &GridFunction) -> Result<f64> {
        if f.grid() != self.grid {
            return Err(invalid("grid function and measure live on different grids"));
        }
        Ok(f.values().iter().zip(&self.masses).map(|(a, b)| a * b).sum())
    }

    /// M-average of `f`: `sum f * mass / sum mass`.
    pub fn mean_of(&self, f: &GridFunction) -> Result<f64> {
        Ok(self.integrate(f)? / self.total())
    }

    /// Constructs a measure from explicit masses.
    pub fn from_masses(grid: GridSpec, gamma: f64, level: usize, masses: Vec<f64>) -> Result<Self> {
        check_gamma(gamma)?;
        if masses.len() != grid.cells() {
            return Err(invalid("mass vector does not match the grid"));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(invalid("masses must be finite and nonnegative"));
        }
        Ok(Self {
            grid,
            level,
            gamma,
            masses,
        })
    }
}

/// `mass(cell) = exp(gamma X_n(center) - gamma^2 n / 2) h^2`.
pub fn chaos_measure(field: &LayeredField, gamma: f64, n: usize) -> Result<CellMeasure> {
    check_gamma(gamma)?;
    field.check_level(n)?;
    let grid = field.grid();
    let area = grid.spacing() * grid.spacing();
    let shift = 0.5 * gamma * gamma * field.variance(n);
    let masses = field
        .values(n)?
        .iter()
        .map(|x| (gamma * x - shift).exp() * area)
        .collect();
    Ok(CellMeasure {
        grid,
        level: n,
        gamma,
        masses,
    })
}

/// Cumulative table over cells for drawing points proportionally to mass.
#[derive(Debug, Clone)]
pub struct MeasureSampler {
    grid: GridSpec,
    cells: Vec<usize>,
    cumulative: Vec<f64>,
}

impl MeasureSampler {
    pub fn new(measure: &CellMeasure) -> Result<Self> {
        Self::over_cells(measure, 0..measure.grid.cells())
    }

    /// Sampler restricted to the fine cells of coarse cell `coarse_index`.
    pub fn within_coarse_cell(measure: &CellMeasure, factor: usize, coarse_index: usize) -> Result<Self> {
        let coarse = measure.grid.coarsened(factor)?;
        let (ci, cj) = coarse.coords(coarse_index);
        let grid = measure.grid;
        let cells = (0..factor)
            .flat_map(|dj| (0..factor).map(move |di| grid.index(ci * factor + di, cj * factor + dj)));
        Self::over_cells(measure, cells)
    }

    fn over_cells(measure: &CellMeasure, cells: impl Iterator<Item = usize>) -> Result<Self> {
        let cells: Vec<usize> = cells.collect();
        let mut cumulative = Vec::with_capacity(cells.len());
        let mut acc = 0.0;
        for &c in &cells {
            acc += measure.masses[c];
            cumulative.push(acc);
        }
        if !(acc > 0.0) {
            return Err(Error::ZeroMass);
        }
        Ok(Self {
            grid: measure.grid,
            cells,
            cumulative,
        })
    }

    pub fn sample_cell<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let total = *self.cumulative.last().unwrap();
        let u = rng.random::<f64>() * total;
        let k = self.cumulative.partition_point(|&c| c <= u);
        // skip zero-mass cells that share a cumulative value
        self.cells[k.min(self.cells.len() - 1)]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TorusPoint {
        let cell = self.sample_cell(rng);
        let (i, j) = self.grid.coords(cell);
        let h = self.grid.spacing();
        TorusPoint::new(
            (i as f64 + rng.random::<f64>()) * h,
            (j as f64 + rng.random::<f64>()) * h,
        )
    }
}

/// Draws `count` points from the measure, cells chosen proportionally to mass
/// and positions uniform within the cell.
pub fn sample_from_measure(measure: &CellMeasure, seed: u64, count: usize) -> Result<Vec<TorusPoint>> {
    let sampler = MeasureSampler::new(measure)?;
    let mut rng = SeedTree::new(seed).rng();
    Ok((0..count).map(|_| sampler.sample(&mut rng)).collect())
}

/// Fitted log-log moment exponent for one `q`.
#[derive(Debug, Clone, Serialize)]
pub struct ExponentRow {
    pub q: f64,
    pub slope: f64,
    pub stderr: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
    /// Log of the estimated moment per scale.
    pub log_moments: Vec<f64>,
    /// Exponent predicted by the multifractal formula: `2 xi(q)` for balls,
    /// `xi(q)` for the clock.
    pub theory: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExponentFit {
    pub gamma: f64,
    pub radii: Vec<f64>,
    pub rows: Vec<ExponentRow>,
    pub replicas: usize,
    pub centers_per_replica: usize,
}

impl ExponentFit {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["q", "slope", "stderr", "r_squared", "theory", "replicas"])?;
        for r in &self.rows {
            w.write_record(&[
                r.q.to_string(),
                r.slope.to_string(),
                r.stderr.to_string(),
                r.r_squared.to_string(),
                r.theory.to_string(),
                self.replicas.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// How ball centers are drawn for the moment estimates.
#[derive(Debug, Clone, Copy)]
pub struct BallSampling {
    pub centers_per_measure: usize,
    pub seed: u64,
}

/// Cell offsets `(di, dj)` whose centers lie within `r` of a cell center,
/// grouped as a half-width per row offset.
fn ball_rows(grid: GridSpec, r: f64) -> Vec<(isize, usize)> {
    let rr = r / grid.spacing();
    let reach = rr.floor() as isize;
    (-reach..=reach)
        .map(|dj| {
            let w = (rr * rr - (dj * dj) as f64).max(0.0).sqrt().floor() as usize;
            (dj, w)
        })
        .collect()
}

/// Periodic row prefix sums for O(1) window sums.
struct RowPrefix {
    n: usize,
    prefix: Vec<f64>,
}

impl RowPrefix {
    fn new(grid: GridSpec, masses: &[f64]) -> Self {
        let n = grid.size();
        let mut prefix = Vec::with_capacity(n * (n + 1));
        for j in 0..n {
            let mut acc = 0.0;
            prefix.push(0.0);
            for i in 0..n {
                acc += masses[j * n + i];
                prefix.push(acc);
            }
        }
        Self { n, prefix }
    }

    /// Sum of row `j` over the window `[i - w, i + w]` (periodic).
    #[inline]
    fn window(&self, j: usize, i: usize, w: usize) -> f64 {
        let n = self.n;
        let row = &self.prefix[j * (n + 1)..(j + 1) * (n + 1)];
        let len = 2 * w + 1;
        let start = (i + n - w % n) % n;
        if start + len <= n {
            row[start + len] - row[start]
        } else {
            row[n] - row[start] + row[start + len - n]
        }
    }
}

/// Least-squares slopes of `log E[M(B(x,r))^q]` against `log r`.
///
/// `M(B(x,r))` sums the cells whose centers lie within `r` of `x`; centers `x`
/// are cell centers drawn uniformly, independently per measure.
pub fn structure_exponents(
    measures: &[CellMeasure],
    q: &[f64],
    radii: &[f64],
    sampling: BallSampling,
) -> Result<ExponentFit> {
    let first = measures
        .first()
        .ok_or_else(|| invalid("need at least one measure"))?;
    let (grid, gamma) = (first.grid, first.gamma);
    if measures.iter().any(|m| m.grid != grid || m.gamma != gamma) {
        return Err(invalid("measures must share grid and gamma"));
    }
    ball_exponents(grid, gamma, measures.len(), |i| Ok(Cow::Borrowed(&measures[i])), q, radii, sampling)
}

/// [`structure_exponents`] for the level-`n` chaos of each field of a source,
/// building one measure at a time.
pub fn structure_exponents_of<S: FieldSource + ?Sized>(
    fields: &S,
    gamma: f64,
    n: usize,
    q: &[f64],
    radii: &[f64],
    sampling: BallSampling,
) -> Result<ExponentFit> {
    check_gamma(gamma)?;
    if fields.count() == 0 {
        return Err(invalid("need at least one field"));
    }
    let grid = fields.grid()?;
    ball_exponents(
        grid,
        gamma,
        fields.count(),
        |i| Ok(Cow::Owned(chaos_measure(fields.field(i)?.as_ref(), gamma, n)?)),
        q,
        radii,
        sampling,
    )
}

fn ball_exponents<'a, F>(
    grid: GridSpec,
    gamma: f64,
    count: usize,
    measure: F,
    q: &[f64],
    radii: &[f64],
    sampling: BallSampling,
) -> Result<ExponentFit>
where
    F: Fn(usize) -> Result<Cow<'a, CellMeasure>> + Sync,
{
    let threshold = moment_threshold(gamma);
    for &qi in q {
        if !(qi >= 0.0) || qi >= threshold {
            return Err(invalid(format!(
                "q = {qi} outside the moment range [0, {threshold}): moments diverge"
            )));
        }
    }
    let h = grid.spacing();
    if radii.len() < 2 {
        return Err(invalid("need at least two radii"));
    }
    for &r in radii {
        if r < 4.0 * h * (1.0 - 1e-12) || r > 0.25 * (1.0 + 1e-12) {
            return Err(invalid(format!("radius {r} outside [4h, 1/4] = [{}, 0.25]", 4.0 * h)));
        }
    }
    let rmin = radii.iter().cloned().fold(f64::INFINITY, f64::min);
    let rmax = radii.iter().cloned().fold(0.0, f64::max);
    if rmax / rmin < 10.0 * (1.0 - 1e-12) {
        return Err(invalid("radii must span at least one decade"));
    }
    if sampling.centers_per_measure == 0 {
        return Err(invalid("need at least one center per measure"));
    }

    let shapes: Vec<Vec<(isize, usize)>> = radii.iter().map(|&r| ball_rows(grid, r)).collect();
    let n = grid.size();
    let tree = SeedTree::new(sampling.seed);
    // per measure: sums of M(B)^q, indexed [radius][q]
    let partial: Vec<Result<Vec<Vec<f64>>>> = (0..count)
        .into_par_iter()
        .map(|idx| {
            let m = measure(idx)?;
            if m.grid != grid || m.gamma != gamma {
                return Err(invalid("measures must share grid and gamma"));
            }
            let prefix = RowPrefix::new(grid, &m.masses);
            let mut rng = tree.child(idx as u64).rng();
            let centers: Vec<(usize, usize)> = (0..sampling.centers_per_measure)
                .map(|_| (rng.random_range(0..n), rng.random_range(0..n)))
                .collect();
            Ok(shapes
                .iter()
                .map(|rows| {
                    let mut sums = vec![0.0; q.len()];
                    for &(ci, cj) in &centers {
                        let mass: f64 = rows
                            .iter()
                            .map(|&(dj, w)| {
                                let j = (cj as isize + dj).rem_euclid(n as isize) as usize;
                                prefix.window(j, ci, w)
                            })
                            .sum();
                        for (s, &qi) in sums.iter_mut().zip(q) {
                            *s += mass.powf(qi);
                        }
                    }
                    sums
                })
                .collect())
        })
        .collect();
    let partial: Vec<Vec<Vec<f64>>> = partial.into_iter().collect::<Result<_>>()?;

    let total_centers = (count * sampling.centers_per_measure) as f64;
    let log_r: Vec<f64> = radii.iter().map(|r| r.ln()).collect();
    let mut rows = Vec::with_capacity(q.len());
    for (qi_idx, &qi) in q.iter().enumerate() {
        let log_moments: Vec<f64> = (0..radii.len())
            .map(|ri| {
                let total: f64 = partial.iter().map(|p| p[ri][qi_idx]).sum();
                (total / total_centers).ln()
            })
            .collect();
        let fit = linear_fit(&log_r, &log_moments).ok_or_else(|| invalid("degenerate radii"))?;
        rows.push(ExponentRow {
            q: qi,
            slope: fit.slope,
            stderr: fit.slope_stderr,
            r_squared: fit.r_squared,
            residuals: fit.residuals,
            log_moments,
            theory: 2.0 * xi(qi, gamma)?,
        });
    }
    Ok(ExponentFit {
        gamma,
        radii: radii.to_vec(),
        rows,
        replicas: count,
        centers_per_replica: sampling.centers_per_measure,
    })
}

/// `X_n(p) / n`, the thick-point ratio (here `ln(1/c_{n+1}) = n`).
pub fn thickness_ratio(field: &LayeredField, p: TorusPoint, n: usize) -> Result<f64> {
    Ok(field.field_at(p, n)? / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fieldgen::{synthesize_layers, FieldSynthesizer};
    use approx::assert_relative_eq;

    #[test]
    fn xi_values() {
        for g in [0.0, 0.5, 1.0, 1.9] {
            assert_relative_eq!(xi(1.0, g).unwrap(), 1.0, epsilon = 1e-14);
        }
        assert_relative_eq!(xi(2.0, 1.0).unwrap(), 1.5, epsilon = 1e-14);
        for g in [1.5f64, 1.8] {
            assert_relative_eq!(xi(4.0 / (g * g), g).unwrap(), 1.0, epsilon = 1e-12);
        }
        for q in [0.0, 0.3, 1.7, 5.0] {
            assert_eq!(xi(q, 0.0).unwrap(), q);
        }
        assert!(xi(1.0, 2.0).is_err());
        assert!(xi(1.0, -0.1).is_err());
        assert!(xi(-1.0, 1.0).is_err());
    }

    #[test]
    fn gamma_zero_is_lebesgue() {
        let f = synthesize_layers(GridSpec::new(32).unwrap(), 2, 5).unwrap();
        let m = chaos_measure(&f, 0.0, 2).unwrap();
        let h2 = 1.0 / 1024.0;
        assert!(m.masses().iter().all(|&v| v == h2));
        assert!(chaos_measure(&f, 1.0, 3).is_err());
        assert!(chaos_measure(&f, 2.0, 1).is_err());
    }

    #[test]
    fn direct_formula() {
        let f = synthesize_layers(GridSpec::new(32).unwrap(), 2, 6).unwrap();
        let m = chaos_measure(&f, 1.3, 2).unwrap();
        let x = f.values(2).unwrap()[17];
        let expect = (1.3 * x - 0.5 * 1.69 * 2.0).exp() / 1024.0;
        assert_relative_eq!(m.masses()[17], expect, max_relative = 1e-14);
    }

    #[test]
    fn point_mass_sampling() {
        let g = GridSpec::new(8).unwrap();
        let mut masses = vec![0.0; 64];
        masses[g.index(2, 5)] = 0.7;
        let m = CellMeasure::from_masses(g, 1.0, 1, masses).unwrap();
        for p in sample_from_measure(&m, 1, 500).unwrap() {
            assert_eq!(g.cell_of(p), (2, 5));
        }
        let zero = CellMeasure::from_masses(g, 1.0, 1, vec![0.0; 64]).unwrap();
        assert!(matches!(sample_from_measure(&zero, 1, 1), Err(Error::ZeroMass)));
    }

    #[test]
    fn uniform_sampling_passes_chi_square() {
        use statrs::distribution::{ChiSquared, ContinuousCDF};
        let g = GridSpec::new(32).unwrap();
        let f = synthesize_layers(g, 1, 0).unwrap();
        let m = chaos_measure(&f, 0.0, 1).unwrap();
        let draws = 100_000;
        let mut counts = vec![0usize; g.cells()];
        for p in sample_from_measure(&m, 77, draws).unwrap() {
            counts[g.index_of(p)] += 1;
        }
        let e = draws as f64 / g.cells() as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        let crit = ChiSquared::new((g.cells() - 1) as f64).unwrap().inverse_cdf(0.99);
        assert!(chi2 < crit, "chi2 {chi2} >= {crit}");
    }

    #[test]
    fn generic_sampling_matches_cell_masses() {
        let g = GridSpec::new(16).unwrap();
        let f = FieldSynthesizer::with_resolution(g, 2, crate::fieldgen::Resolution::Relaxed)
            .unwrap()
            .sample(3);
        let m = chaos_measure(&f, 1.5, 2).unwrap();
        let draws = 200_000;
        let mut counts = vec![0usize; g.cells()];
        for p in sample_from_measure(&m, 8, draws).unwrap() {
            counts[g.index_of(p)] += 1;
        }
        let total = m.total();
        for (c, &mass) in counts.iter().zip(m.masses()) {
            let p = mass / total;
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((*c as f64 / draws as f64 - p).abs() <= 4.0 * se + 1e-12);
        }
    }

    #[test]
    fn coarse_cell_sampler_stays_inside() {
        let g = GridSpec::new(16).unwrap();
        let m = CellMeasure::from_masses(g, 0.0, 1, vec![1.0 / 256.0; 256]).unwrap();
        let s = MeasureSampler::within_coarse_cell(&m, 4, 5).unwrap();
        let mut rng = SeedTree::new(3).rng();
        for _ in 0..200 {
            let p = s.sample(&mut rng);
            let (i, j) = g.cell_of(p);
            assert_eq!((i / 4, j / 4), (1, 1));
        }
    }

    #[test]
    fn lebesgue_ball_exponent_is_two_q() {
        let g = GridSpec::new(256).unwrap();
        let f = synthesize_layers(g, 1, 0).unwrap();
        let m = chaos_measure(&f, 0.0, 1).unwrap();
        let radii: Vec<f64> = (0..6).map(|k| 4.0 / 256.0 * 2f64.powf(k as f64 * 0.8)).collect();
        let fit = structure_exponents(
            &[m],
            &[0.5, 1.0, 1.5],
            &radii,
            BallSampling { centers_per_measure: 4, seed: 1 },
        )
        .unwrap();
        for row in &fit.rows {
            assert!((row.slope - 2.0 * row.q).abs() < 0.05, "{row:?}");
        }
    }

    #[test]
    fn exponent_guards() {
        let g = GridSpec::new(64).unwrap();
        let f = synthesize_layers(g, 1, 0).unwrap();
        let m = chaos_measure(&f, 1.5, 1).unwrap();
        let s = BallSampling { centers_per_measure: 2, seed: 0 };
        let radii = [0.0625, 0.25];
        // 4 / 1.5^2 = 1.78
        assert!(structure_exponents(std::slice::from_ref(&m), &[1.8], &[0.02, 0.25], s).is_err());
        assert!(structure_exponents(std::slice::from_ref(&m), &[1.0], &radii, s).is_err());
        assert!(structure_exponents(std::slice::from_ref(&m), &[1.0], &[0.01, 0.25], s).is_err());
        assert!(structure_exponents(&[m], &[1.0], &[0.0625, 0.3], s).is_err());
    }

    #[test]
    fn window_sums_wrap() {
        let g = GridSpec::new(8).unwrap();
        let masses: Vec<f64> = (0..64).map(|k| k as f64).collect();
        let p = RowPrefix::new(g, &masses);
        // row 1 is 8..16; window around i=0 with w=1 covers columns 7, 0, 1
        assert_eq!(p.window(1, 0, 1), 15.0 + 8.0 + 9.0);
        assert_eq!(p.window(1, 4, 2), (10..15).sum::<usize>() as f64);
    }

    #[test]
    fn thickness_of_constant_field() {
        let g = GridSpec::new(8).unwrap();
        let cov = vec![[1.0, 1.0, 1.0]; 2];
        let layers = vec![vec![1.5; 64], vec![0.5; 64]];
        let f = LayeredField::from_layers(g, 0, layers, cov);
        let p = TorusPoint::new(0.37, 0.81);
        assert_relative_eq!(thickness_ratio(&f, p, 2).unwrap(), 2.0 / 2.0, epsilon = 1e-14);
        assert_relative_eq!(thickness_ratio(&f, p, 1).unwrap(), 1.5, epsilon = 1e-14);
        assert!(thickness_ratio(&f, p, 3).is_err());
    }
}
