//! Layered log-correlated Gaussian field with a star-scale-invariant covariance.
//!
//! The cumulative field `X_n = Y_1 + ... + Y_n` has covariance
//! `K_n(r) = ∫_1^{e^n} (1 - u r)_+ / u du` with seed kernel `(1 - |z|)_+`, so
//! each layer has unit variance and `E[X_n^2] = n`. Layers are drawn by
//! circulant (FFT) synthesis of the periodized covariance on the torus grid.

mod fft;
pub mod io;

use std::borrow::Cow;

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;

use crate::error::{invalid, Error, Result};
use crate::grid::{minimal_image, GridSpec, TorusPoint};
use crate::harness::seed::SeedTree;

pub(crate) use fft::Fft2;

/// Negative spectral mass allowed, as a fraction of the trace, before synthesis fails.
pub const CLIP_TOLERANCE: f64 = 1e-6;

/// Smallest correlation scale `e^{-n}` must span at least this many cells.
pub const CELLS_PER_SCALE: f64 = 4.0;

/// Cumulative covariance `K_n(r)` of the star-scale-invariant field.
pub fn covariance_cumulative(r: f64, n: f64) -> Result<f64> {
    if !(r >= 0.0) || !r.is_finite() {
        return Err(invalid(format!("distance must be nonnegative, got {r}")));
    }
    if !(n >= 0.0) || !n.is_finite() {
        return Err(invalid(format!("level must be nonnegative, got {n}")));
    }
    Ok(cumulative_kernel(r, n))
}

#[inline]
pub(crate) fn cumulative_kernel(r: f64, n: f64) -> f64 {
    if r >= 1.0 {
        0.0
    } else if r >= (-n).exp() {
        -r.ln() - 1.0 + r
    } else {
        n - r * n.exp_m1()
    }
}

/// Covariance of the single layer `Y_k`: `K_k(r) - K_{k-1}(r)`.
pub fn layer_covariance(r: f64, k: usize) -> f64 {
    debug_assert!(k >= 1);
    cumulative_kernel(r, k as f64) - cumulative_kernel(r, (k - 1) as f64)
}

/// Covariance of the torus field: the kernel summed over periodic images.
///
/// The kernel vanishes beyond distance 1, so only the nine nearest images of
/// the minimal-image offset contribute.
pub fn periodized_covariance(dx: f64, dy: f64, n: usize) -> f64 {
    let dx = minimal_image(dx);
    let dy = minimal_image(dy);
    let mut sum = 0.0;
    for mx in -1..=1 {
        for my in -1..=1 {
            sum += cumulative_kernel((dx + mx as f64).hypot(dy + my as f64), n as f64);
        }
    }
    sum
}

fn periodized_layer(dx: f64, dy: f64, k: usize) -> f64 {
    let dx = minimal_image(dx);
    let dy = minimal_image(dy);
    let mut sum = 0.0;
    for mx in -1..=1 {
        for my in -1..=1 {
            sum += layer_covariance((dx + mx as f64).hypot(dy + my as f64), k);
        }
    }
    sum
}

/// Smallest admissible grid size (power of two) for `n_max` levels.
pub fn minimal_grid_size(n_max: usize) -> usize {
    let need = CELLS_PER_SCALE * (n_max as f64).exp();
    (need.ceil() as usize)
        .next_power_of_two()
        .max(GridSpec::MIN_SIZE)
}

/// Whether [`FieldSynthesizer::with_resolution`] enforces the resolution rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Resolution {
    Enforced,
    /// Allows under-resolved grids; used for small exact-oracle comparisons.
    Relaxed,
}

/// Lattice covariances of a cumulative level at offsets `(0,0)`, `(1,0)` and `(1,1)`.
pub type LatticeCovariance = [f64; 3];

#[derive(Debug, Clone)]
struct LayerSpectrum {
    /// `sqrt(eigenvalue) / N` per Fourier mode.
    amplitude: Vec<f64>,
    clip_fraction: f64,
    implied: LatticeCovariance,
}

/// Precomputed per-layer spectra for a grid; draws fields for any seed.
pub struct FieldSynthesizer {
    grid: GridSpec,
    n_max: usize,
    layers: Vec<LayerSpectrum>,
    fft: Fft2,
}

impl FieldSynthesizer {
    pub fn new(grid: GridSpec, n_max: usize) -> Result<Self> {
        Self::with_resolution(grid, n_max, Resolution::Enforced)
    }

    pub fn with_resolution(grid: GridSpec, n_max: usize, resolution: Resolution) -> Result<Self> {
        let minimal = minimal_grid_size(n_max);
        if resolution == Resolution::Enforced && grid.size() < minimal {
            return Err(Error::Resolution {
                size: grid.size(),
                n_max,
                minimal,
            });
        }
        let fft = Fft2::new(grid.size());
        let layers = (1..=n_max)
            .into_par_iter()
            .map(|k| layer_spectrum(grid, k, &fft))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            grid,
            n_max,
            layers,
            fft,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    /// Fraction of the trace removed by clipping negative eigenvalues of layer `k`.
    pub fn clip_fraction(&self, k: usize) -> f64 {
        self.layers[k - 1].clip_fraction
    }

    /// Covariance of the cumulative level `n` implied by the clipped spectra,
    /// at every lattice offset (row-major, offset `(i, j)` at `j * N + i`).
    pub fn implied_covariance(&self, n: usize) -> Vec<f64> {
        let size = self.grid.size();
        let cells = self.grid.cells();
        let mut total = vec![0.0; cells];
        for spec in &self.layers[..n.min(self.n_max)] {
            let mut buf: Vec<Complex64> = spec
                .amplitude
                .iter()
                .map(|a| Complex64::new(a * a, 0.0))
                .collect();
            self.fft.inverse(&mut buf);
            for (t, b) in total.iter_mut().zip(&buf) {
                *t += b.re;
            }
        }
        debug_assert_eq!(total.len(), size * size);
        total
    }

    /// Draws a field; layer `k` uses the stream `SeedTree::new(seed).child(k)`.
    pub fn sample(&self, seed: u64) -> LayeredField {
        let tree = SeedTree::new(seed);
        let layers: Vec<Vec<f64>> = self
            .layers
            .par_iter()
            .enumerate()
            .map(|(idx, spec)| self.sample_layer(spec, &tree.child(idx as u64 + 1)))
            .collect();
        let implied = self.layers.iter().map(|s| s.implied).collect();
        LayeredField::from_layers(self.grid, seed, layers, implied)
    }

    fn sample_layer(&self, spec: &LayerSpectrum, stream: &SeedTree) -> Vec<f64> {
        let mut rng = stream.rng();
        let mut buf: Vec<Complex64> = spec
            .amplitude
            .iter()
            .map(|&a| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(a * re, a * im)
            })
            .collect();
        self.fft.forward(&mut buf);
        buf.into_iter().map(|c| c.re).collect()
    }
}

fn layer_spectrum(grid: GridSpec, k: usize, fft: &Fft2) -> Result<LayerSpectrum> {
    let n = grid.size();
    let h = grid.spacing();
    let mut buf: Vec<Complex64> = (0..grid.cells())
        .map(|idx| {
            let (i, j) = grid.coords(idx);
            Complex64::new(periodized_layer(i as f64 * h, j as f64 * h, k), 0.0)
        })
        .collect();
    fft.forward(&mut buf);
    let trace: f64 = buf.iter().map(|c| c.re).sum();
    let negative: f64 = buf.iter().map(|c| (-c.re).max(0.0)).sum();
    let clip_fraction = if trace > 0.0 { negative / trace } else { 0.0 };
    if clip_fraction > CLIP_TOLERANCE {
        return Err(Error::SpectralClip {
            layer: k,
            fraction: clip_fraction,
        });
    }
    let eig: Vec<f64> = buf.iter().map(|c| c.re.max(0.0)).collect();
    let nf = n as f64;
    let amplitude = eig.iter().map(|&l| l.sqrt() / nf).collect();

    // covariance implied by the clipped spectrum at the three stencil offsets
    let implied_at = |i: usize, j: usize| -> f64 {
        let mut s = 0.0;
        for (idx, &l) in eig.iter().enumerate() {
            let (a, b) = grid.coords(idx);
            let phase = 2.0 * std::f64::consts::PI * ((a * i + b * j) % n) as f64 / nf;
            s += l * phase.cos();
        }
        s / (nf * nf)
    };
    let implied = [implied_at(0, 0), implied_at(1, 0), implied_at(1, 1)];
    Ok(LayerSpectrum {
        amplitude,
        clip_fraction,
        implied,
    })
}

/// Draws a layered field with the resolution rule enforced.
pub fn synthesize_layers(grid: GridSpec, n_max: usize, seed: u64) -> Result<LayeredField> {
    Ok(FieldSynthesizer::new(grid, n_max)?.sample(seed))
}

/// Replica fields indexed `0..count`, stored or synthesized on demand.
pub trait FieldSource: Sync {
    fn count(&self) -> usize;
    fn field(&self, index: usize) -> Result<Cow<'_, LayeredField>>;

    fn grid(&self) -> Result<GridSpec> {
        Ok(self.field(0)?.grid())
    }
}

impl FieldSource for [LayeredField] {
    fn count(&self) -> usize {
        self.len()
    }

    fn field(&self, index: usize) -> Result<Cow<'_, LayeredField>> {
        self.get(index)
            .map(Cow::Borrowed)
            .ok_or_else(|| invalid(format!("no field {index}")))
    }
}

impl FieldSource for Vec<LayeredField> {
    fn count(&self) -> usize {
        self.len()
    }

    fn field(&self, index: usize) -> Result<Cow<'_, LayeredField>> {
        self.as_slice().field(index)
    }
}

/// `count` fields with seeds `SeedTree::new(seed).child(i)`, drawn when asked
/// for so that large ensembles never sit in memory together.
pub struct Ensemble<'a> {
    pub synth: &'a FieldSynthesizer,
    pub seed: u64,
    pub count: usize,
}

impl Ensemble<'_> {
    pub fn seed_of(&self, index: usize) -> u64 {
        SeedTree::new(self.seed).child(index as u64).seed()
    }
}

impl FieldSource for Ensemble<'_> {
    fn count(&self) -> usize {
        self.count
    }

    fn field(&self, index: usize) -> Result<Cow<'_, LayeredField>> {
        if index >= self.count {
            return Err(invalid(format!("no field {index}")));
        }
        Ok(Cow::Owned(self.synth.sample(self.seed_of(index))))
    }

    fn grid(&self) -> Result<GridSpec> {
        Ok(self.synth.grid())
    }
}

/// Per-level samples of the cutoff field on a periodic grid.
#[derive(Debug, Clone)]
pub struct LayeredField {
    grid: GridSpec,
    seed: u64,
    layers: Vec<Vec<f64>>,
    /// `cumulative[n]` holds `X_n`; `cumulative[0]` is identically zero.
    cumulative: Vec<Vec<f64>>,
    /// Lattice covariance of each cumulative level, index `n`.
    lattice_cov: Vec<LatticeCovariance>,
}

impl LayeredField {
    pub(crate) fn from_layers(
        grid: GridSpec,
        seed: u64,
        layers: Vec<Vec<f64>>,
        layer_cov: Vec<LatticeCovariance>,
    ) -> Self {
        let mut cumulative = Vec::with_capacity(layers.len() + 1);
        cumulative.push(vec![0.0; grid.cells()]);
        for layer in &layers {
            let prev = cumulative.last().unwrap();
            let next: Vec<f64> = prev.iter().zip(layer).map(|(a, b)| a + b).collect();
            cumulative.push(next);
        }
        let mut lattice_cov = vec![[0.0; 3]];
        for c in &layer_cov {
            let prev = *lattice_cov.last().unwrap();
            lattice_cov.push([prev[0] + c[0], prev[1] + c[1], prev[2] + c[2]]);
        }
        Self {
            grid,
            seed,
            layers,
            cumulative,
            lattice_cov,
        }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_max(&self) -> usize {
        self.layers.len()
    }

    /// Layer `Y_k`, `1 <= k <= n_max`.
    pub fn layer(&self, k: usize) -> Result<&[f64]> {
        self.check_level(k)?;
        Ok(&self.layers[k - 1])
    }

    /// Cumulative values `X_n` at cell centers, `0 <= n <= n_max`.
    pub fn values(&self, n: usize) -> Result<&[f64]> {
        if n > self.n_max() {
            return Err(Error::LevelOutOfRange {
                level: n,
                n_max: self.n_max(),
            });
        }
        Ok(&self.cumulative[n])
    }

    /// Pointwise variance `E[X_n^2] = n` of the cumulative field.
    pub fn variance(&self, n: usize) -> f64 {
        n as f64
    }

    /// Lattice covariance of `X_n` at offsets `(0,0)`, `(1,0)`, `(1,1)`.
    pub fn lattice_covariance(&self, n: usize) -> Result<LatticeCovariance> {
        self.values(n)?;
        Ok(self.lattice_cov[n])
    }

    pub(crate) fn check_level(&self, n: usize) -> Result<()> {
        if n == 0 || n > self.n_max() {
            return Err(Error::LevelOutOfRange {
                level: n,
                n_max: self.n_max(),
            });
        }
        Ok(())
    }

    /// Bilinear interpolation of `X_n` over the surrounding cell centers.
    pub fn field_at(&self, p: TorusPoint, n: usize) -> Result<f64> {
        self.check_level(n)?;
        Ok(interpolate(self.grid, &self.cumulative[n], p))
    }
}

#[inline]
pub(crate) fn interpolate(grid: GridSpec, values: &[f64], p: TorusPoint) -> f64 {
    let b = grid.bilinear(p);
    b.weight[0] * values[b.index[0]]
        + b.weight[1] * values[b.index[1]]
        + b.weight[2] * values[b.index[2]]
        + b.weight[3] * values[b.index[3]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Adaptive Simpson quadrature, independent of the closed form.
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
        fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let lm = 0.5 * (a + m);
            let rm = 0.5 * (m + b);
            let flm = f(lm);
            let frm = f(rm);
            let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
            let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                    + rec(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
            }
        }
        let m = 0.5 * (a + b);
        let (fa, fm, fb) = (f(a), f(m), f(b));
        let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        rec(f, a, b, fa, fm, fb, whole, tol, 50)
    }

    fn quadrature_kernel(r: f64, n: f64) -> f64 {
        let upper = n.exp();
        // split at the kink u = 1/r of the integrand
        let integrand = |u: f64| (1.0 - u * r).max(0.0) / u;
        if r > 0.0 && 1.0 / r > 1.0 && 1.0 / r < upper {
            simpson(&integrand, 1.0, 1.0 / r, 1e-13) + simpson(&integrand, 1.0 / r, upper, 1e-13)
        } else {
            simpson(&integrand, 1.0, upper, 1e-13)
        }
    }

    #[test]
    fn kernel_examples() {
        assert_eq!(covariance_cumulative(0.0, 3.0).unwrap(), 3.0);
        assert_eq!(covariance_cumulative(1.0, 5.0).unwrap(), 0.0);
        let r = (-2.0f64).exp();
        let oracle = quadrature_kernel(r, 2.0);
        assert_relative_eq!(oracle, 1.0 + (-2.0f64).exp(), epsilon = 1e-9);
        assert_relative_eq!(covariance_cumulative(r, 2.0).unwrap(), oracle, epsilon = 1e-9);
        assert_relative_eq!(oracle, 1.135_335_283_236_612_7, epsilon = 1e-9);
    }

    #[test]
    fn kernel_matches_quadrature_on_a_sweep() {
        for &n in &[0.5, 1.0, 2.0, 3.5] {
            for &r in &[0.0, 0.001, 0.03, 0.1, 0.3, 0.7, 0.99, 1.2] {
                let q = quadrature_kernel(r, n);
                assert_relative_eq!(cumulative_kernel(r, n), q, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn kernel_rejects_negative_arguments() {
        assert!(covariance_cumulative(-0.1, 1.0).is_err());
        assert!(covariance_cumulative(0.1, -1.0).is_err());
        assert!(covariance_cumulative(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn kernel_continuous_at_branch_points() {
        for n in 0..8 {
            let nf = n as f64;
            let r = (-nf).exp();
            let inner = nf - r * nf.exp_m1();
            let outer = -r.ln() - 1.0 + r;
            assert!((inner - outer).abs() < 1e-12, "n={n}");
            assert!(cumulative_kernel(1.0 - 1e-15, nf).abs() < 1e-12);
        }
    }

    #[test]
    fn resolution_rule_names_minimal_size() {
        let g = GridSpec::new(64).unwrap();
        match FieldSynthesizer::new(g, 4) {
            Err(Error::Resolution { minimal, .. }) => assert_eq!(minimal, 256),
            other => panic!("expected resolution error, got {:?}", other.err()),
        }
        assert_eq!(minimal_grid_size(5), 1024);
        assert_eq!(minimal_grid_size(0), 8);
    }

    #[test]
    fn zero_levels_give_zero_field() {
        let f = synthesize_layers(GridSpec::new(8).unwrap(), 0, 3).unwrap();
        assert_eq!(f.n_max(), 0);
        assert!(f.values(0).unwrap().iter().all(|&v| v == 0.0));
        assert!(f.field_at(TorusPoint::new(0.3, 0.3), 1).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let g = GridSpec::new(32).unwrap();
        let s = FieldSynthesizer::new(g, 2).unwrap();
        let a = s.sample(9);
        let b = s.sample(9);
        let c = s.sample(10);
        assert_eq!(a.layer(1).unwrap(), b.layer(1).unwrap());
        assert_eq!(a.layer(2).unwrap(), b.layer(2).unwrap());
        assert_ne!(a.layer(1).unwrap(), c.layer(1).unwrap());
    }

    #[test]
    fn periodized_spectrum_needs_no_clipping() {
        let s = FieldSynthesizer::with_resolution(GridSpec::new(16).unwrap(), 3, Resolution::Relaxed)
            .unwrap();
        for k in 1..=3 {
            assert_eq!(s.clip_fraction(k), 0.0);
        }
    }

    #[test]
    fn implied_variance_is_level() {
        let s = FieldSynthesizer::new(GridSpec::new(64).unwrap(), 2).unwrap();
        let f = s.sample(1);
        let c = f.lattice_covariance(2).unwrap();
        assert_relative_eq!(c[0], 2.0, epsilon = 1e-10);
        let h = 1.0 / 64.0;
        assert_relative_eq!(c[1], periodized_covariance(h, 0.0, 2), epsilon = 1e-10);
        assert_relative_eq!(c[2], periodized_covariance(h, h, 2), epsilon = 1e-10);
    }

    #[test]
    fn field_at_nodes_midpoints_and_seam() {
        let g = GridSpec::new(32).unwrap();
        let f = synthesize_layers(g, 2, 4).unwrap();
        let x = f.values(2).unwrap();
        let c = g.cell_center(5, 7);
        assert_relative_eq!(f.field_at(c, 2).unwrap(), x[g.index(5, 7)], epsilon = 1e-12);
        let mid = TorusPoint::new(c.x + 0.5 * g.spacing(), c.y);
        let expect = 0.5 * (x[g.index(5, 7)] + x[g.index(6, 7)]);
        assert_relative_eq!(f.field_at(mid, 2).unwrap(), expect, epsilon = 1e-12);
        // within h/2 of the seam: wraps onto the last column
        let p = TorusPoint::new(0.25 * g.spacing(), 0.4);
        let q = TorusPoint::new(p.x + 1.0, p.y);
        assert_eq!(f.field_at(p, 2).unwrap(), f.field_at(q, 2).unwrap());
        let last = x[g.index(31, 12)];
        let first = x[g.index(0, 12)];
        let on_row = TorusPoint::new(0.0, g.cell_center(0, 12).y);
        assert_relative_eq!(f.field_at(on_row, 2).unwrap(), 0.5 * (last + first), epsilon = 1e-12);
        assert!(f.field_at(c, 3).is_err());
        assert!(f.field_at(c, 0).is_err());
    }
}
