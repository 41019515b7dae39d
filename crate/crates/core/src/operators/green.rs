//! Zero-mean Green kernel of the torus Laplacian and its application to
//! M-weighted functions.

use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::chaos::CellMeasure;
use crate::error::{invalid, Error, Result};
use crate::fieldgen::Fft2;
use crate::grid::{GridFunction, GridSpec, TorusPoint};
use crate::harness::seed::SeedTree;
use crate::pathkit::LbmModel;
use crate::stats::Accumulator;

use super::Observable;
use rayon::prelude::*;

/// Convolution kernel `g(x - y)` solving `-h^2 Lap_h g = delta - h^2` with
/// zero mean, where `Lap_h` is the five-point Laplacian and `delta` the
/// Kronecker delta at the origin. `g` approximates the Green function of
/// `-Lap` on the unit torus.
#[derive(Debug, Clone, Serialize)]
pub struct GreenTable {
    grid: GridSpec,
    kernel: Vec<f64>,
}

impl GreenTable {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// `g` at lattice offset `(i, j)`, row-major.
    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    pub fn at(&self, di: isize, dj: isize) -> f64 {
        let n = self.grid.size() as isize;
        self.kernel[self.grid.index(di.rem_euclid(n) as usize, dj.rem_euclid(n) as usize)]
    }

    /// `max |-h^2 Lap_h g - (delta - h^2)|`.
    pub fn laplacian_residual(&self) -> f64 {
        let n = self.grid.size() as isize;
        let h2 = self.grid.spacing() * self.grid.spacing();
        let mut worst: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let lap = self.at(i + 1, j) + self.at(i - 1, j) + self.at(i, j + 1) + self.at(i, j - 1)
                    - 4.0 * self.at(i, j);
                let target = if i == 0 && j == 0 { 1.0 - h2 } else { -h2 };
                worst = worst.max((-lap - target).abs());
            }
        }
        worst
    }
}

/// Solves the discrete Poisson problem by the 2-D DFT.
pub fn green_kernel_torus(grid: GridSpec) -> GreenTable {
    let n = grid.size();
    let fft = Fft2::new(n);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut spectrum: Vec<Complex64> = (0..grid.cells())
        .map(|k| {
            let (a, b) = grid.coords(k);
            if k == 0 {
                return Complex64::new(0.0, 0.0);
            }
            let mu = 4.0 - 2.0 * (two_pi * a as f64 / n as f64).cos() - 2.0 * (two_pi * b as f64 / n as f64).cos();
            Complex64::new(1.0 / mu, 0.0)
        })
        .collect();
    fft.inverse(&mut spectrum);
    let scale = 1.0 / grid.cells() as f64;
    GreenTable {
        grid,
        kernel: spectrum.iter().map(|c| c.re * scale).collect(),
    }
}

/// `x -> sum_cells g(x - y) f(y) mass(y)` for `f` with vanishing M-mean:
/// `|sum f mass| <= tol_mean sum |f| mass`.
pub fn green_apply(green: &GreenTable, measure: &CellMeasure, f: &GridFunction, tol_mean: f64) -> Result<GridFunction> {
    let grid = green.grid;
    if measure.grid() != grid || f.grid() != grid {
        return Err(invalid("Green table, measure and f must share a grid"));
    }
    let weighted: Vec<f64> = f.values().iter().zip(measure.masses()).map(|(a, m)| a * m).collect();
    let mean: f64 = weighted.iter().sum();
    let scale: f64 = weighted.iter().map(|v| v.abs()).sum();
    if mean.abs() > tol_mean * scale {
        return Err(Error::NonZeroMean {
            mean,
            tolerance: tol_mean * scale,
        });
    }
    let fft = Fft2::new(grid.size());
    let mut a: Vec<Complex64> = green.kernel.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut b: Vec<Complex64> = weighted.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft.forward(&mut a);
    fft.forward(&mut b);
    for (x, y) in a.iter_mut().zip(&b) {
        *x *= y;
    }
    fft.inverse(&mut a);
    let s = 1.0 / grid.cells() as f64;
    GridFunction::new(grid, a.iter().map(|c| c.re * s).collect())
}

/// Mean and standard error of `int_0^T f(B_s) F(x, ds)` over independent
/// paths, i.e. the LBM occupation integral `int_0^T f(LBM_r) dr`.
///
/// For Brownian motion with generator `Lap / 2` and M-mean-zero `f` this
/// tends to `2 green_apply(f)(x)` as `T` grows.
pub fn occupation_integral(
    model: &LbmModel,
    f: &dyn Observable,
    x: TorusPoint,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(horizon > 0.0) || replicas < 2 {
        return Err(invalid("need a positive horizon and at least two replicas"));
    }
    let tree = SeedTree::new(seed);
    let values: Vec<f64> = (0..replicas)
        .into_par_iter()
        .map(|i| super::averages::quantum_time_integral(model, f, x, horizon, tree.child(i as u64).seed()))
        .collect();
    let acc: Accumulator = values.into_iter().collect();
    Ok((acc.mean(), acc.stderr()))
}
