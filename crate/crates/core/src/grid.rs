//! Periodic lattice geometry on the unit torus.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A point of the unit torus, stored with coordinates in `[0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusPoint {
    pub x: f64,
    pub y: f64,
}

#[inline]
pub(crate) fn wrap_unit(v: f64) -> f64 {
    let r = v.rem_euclid(1.0);
    // rem_euclid can round up to exactly 1.0 for tiny negative inputs
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Minimal-image representative of a coordinate difference, in `[-1/2, 1/2)`.
#[inline]
pub(crate) fn minimal_image(d: f64) -> f64 {
    d - (d + 0.5).floor()
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x: wrap_unit(x),
            y: wrap_unit(y),
        }
    }

    pub fn shifted(&self, dx: f64, dy: f64) -> Self {
        Self::new(self.x + dx, self.y + dy)
    }

    /// Euclidean distance between minimal images.
    pub fn distance(&self, other: &TorusPoint) -> f64 {
        let dx = minimal_image(self.x - other.x);
        let dy = minimal_image(self.y - other.y);
        dx.hypot(dy)
    }
}

/// Torus distance between two unwrapped coordinate pairs.
pub fn torus_distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    minimal_image(a[0] - b[0]).hypot(minimal_image(a[1] - b[1]))
}

/// An `N x N` grid of square cells covering the unit torus.
///
/// Cell `(i, j)` has its center at `((i + 1/2) h, (j + 1/2) h)`; `i` runs along
/// the first coordinate. Flat storage is row-major in `j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    size: usize,
}

/// Indices and weights of the four cell centers surrounding a point.
#[derive(Debug, Clone, Copy)]
pub struct Bilinear {
    /// Flat indices of the corners `(i0,j0), (i1,j0), (i0,j1), (i1,j1)`.
    pub index: [usize; 4],
    pub weight: [f64; 4],
}

impl GridSpec {
    pub const MIN_SIZE: usize = 8;

    pub fn new(size: usize) -> Result<Self> {
        if !size.is_power_of_two() || size < Self::MIN_SIZE {
            return Err(invalid(format!(
                "grid size {size} must be a power of two and at least {}",
                Self::MIN_SIZE
            )));
        }
        Ok(Self { size })
    }

    /// Grid without the lower bound on the size, for coarse binning grids.
    pub(crate) fn coarse(size: usize) -> Result<Self> {
        if size == 0 || !size.is_power_of_two() {
            return Err(invalid(format!("coarse grid size {size} must be a power of two")));
        }
        Ok(Self { size })
    }

    #[inline]
    pub fn size(&self) -> usize {
        self.size
    }

    #[inline]
    pub fn spacing(&self) -> f64 {
        1.0 / self.size as f64
    }

    #[inline]
    pub fn cells(&self) -> usize {
        self.size * self.size
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.size + i
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.size, index / self.size)
    }

    pub fn cell_center(&self, i: usize, j: usize) -> TorusPoint {
        let h = self.spacing();
        TorusPoint {
            x: (i as f64 + 0.5) * h,
            y: (j as f64 + 0.5) * h,
        }
    }

    pub fn center_of_index(&self, index: usize) -> TorusPoint {
        let (i, j) = self.coords(index);
        self.cell_center(i, j)
    }

    /// Cell containing `p`.
    #[inline]
    pub fn cell_of(&self, p: TorusPoint) -> (usize, usize) {
        let n = self.size as f64;
        let i = ((p.x * n) as usize).min(self.size - 1);
        let j = ((p.y * n) as usize).min(self.size - 1);
        (i, j)
    }

    #[inline]
    pub fn index_of(&self, p: TorusPoint) -> usize {
        let (i, j) = self.cell_of(p);
        self.index(i, j)
    }

    /// Bilinear stencil over cell centers with periodic wrap.
    #[inline]
    pub fn bilinear(&self, p: TorusPoint) -> Bilinear {
        let n = self.size;
        let sx = p.x * n as f64 - 0.5;
        let sy = p.y * n as f64 - 0.5;
        let fx = sx.floor();
        let fy = sy.floor();
        let u = sx - fx;
        let v = sy - fy;
        let i0 = (fx as isize).rem_euclid(n as isize) as usize;
        let j0 = (fy as isize).rem_euclid(n as isize) as usize;
        let i1 = if i0 + 1 == n { 0 } else { i0 + 1 };
        let j1 = if j0 + 1 == n { 0 } else { j0 + 1 };
        Bilinear {
            index: [j0 * n + i0, j0 * n + i1, j1 * n + i0, j1 * n + i1],
            weight: [(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v],
        }
    }

    /// Grid with `size / factor` cells per axis.
    pub fn coarsened(&self, factor: usize) -> Result<GridSpec> {
        if factor == 0 || !factor.is_power_of_two() || factor > self.size {
            return Err(invalid(format!(
                "coarse factor {factor} must be a power of two dividing {}",
                self.size
            )));
        }
        GridSpec::coarse(self.size / factor)
    }
}

/// Real values attached to the cells of a grid, read back by bilinear
/// interpolation between cell centers.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() {
            return Err(invalid(format!(
                "expected {} values, got {}",
                grid.cells(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("grid function values must be finite"));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: vec![c; grid.cells()],
        }
    }

    /// Samples `f` at every cell center.
    pub fn from_fn(grid: GridSpec, f: impl Fn(TorusPoint) -> f64) -> Self {
        let values = (0..grid.cells())
            .map(|k| f(grid.center_of_index(k)))
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn value_at(&self, p: TorusPoint) -> f64 {
        let b = self.grid.bilinear(p);
        b.weight
            .iter()
            .zip(b.index)
            .map(|(w, k)| w * self.values[k])
            .sum()
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_nonnegative(&self) -> bool {
        self.values.iter().all(|&v| v >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(GridSpec::new(100).is_err());
        assert!(GridSpec::new(4).is_err());
        assert!(GridSpec::new(64).is_ok());
    }

    #[test]
    fn wrap_and_distance() {
        let p = TorusPoint::new(-0.25, 1.5);
        assert_eq!(p, TorusPoint { x: 0.75, y: 0.5 });
        assert!(TorusPoint::new(-1e-18, 0.0).x < 1.0);
        let a = TorusPoint::new(0.05, 0.5);
        let b = TorusPoint::new(0.95, 0.5);
        assert!((a.distance(&b) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bilinear_weights_sum_to_one_and_hit_nodes() {
        let g = GridSpec::new(8).unwrap();
        let c = g.cell_center(3, 5);
        let b = g.bilinear(c);
        assert_eq!(b.index[0], g.index(3, 5));
        assert!((b.weight[0] - 1.0).abs() < 1e-12);
        let b = g.bilinear(TorusPoint::new(0.01, 0.99));
        assert!((b.weight.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_function_interpolates_midpoints() {
        let g = GridSpec::new(8).unwrap();
        let f = GridFunction::from_fn(g, |p| p.x * 10.0);
        let a = g.cell_center(2, 2);
        let mid = TorusPoint::new(a.x + 0.5 * g.spacing(), a.y);
        let expected = 0.5 * (f.values()[g.index(2, 2)] + f.values()[g.index(3, 2)]);
        assert!((f.value_at(mid) - expected).abs() < 1e-12);
    }
}
