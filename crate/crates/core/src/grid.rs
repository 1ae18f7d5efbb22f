//! Uniform cell-centered grids and the fields that live on them.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math;

/// Uniform rectangular grid of `nx * ny` cells. Cell `(i, j)` has its lower
/// left corner at `origin + (i * hx, j * hy)`; storage is row-major with `i`
/// running fastest.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructuredGrid {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub origin: (f64, f64),
}

impl StructuredGrid {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, origin: (f64, f64)) -> Result<Self> {
        if nx < 2 && ny < 2 {
            return Err(invalid("grid", "need at least two cells in one direction"));
        }
        if nx == 0 || ny == 0 {
            return Err(invalid("grid", "cell counts must be positive"));
        }
        if !(hx > 0.0 && hx.is_finite() && hy > 0.0 && hy.is_finite()) {
            return Err(invalid("grid", "spacings must be positive and finite"));
        }
        Ok(Self { nx, ny, hx, hy, origin })
    }

    /// Grid covering `[x0, x1] x [y0, y1]` exactly.
    pub fn covering(x: (f64, f64), y: (f64, f64), nx: usize, ny: usize) -> Result<Self> {
        if !(x.1 > x.0 && y.1 > y.0) {
            return Err(invalid("grid", "empty region"));
        }
        if nx == 0 || ny == 0 {
            return Err(invalid("grid", "cell counts must be positive"));
        }
        Self::new(nx, ny, (x.1 - x.0) / nx as f64, (y.1 - y.0) / ny as f64, (x.0, y.0))
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, k: usize) -> (usize, usize) {
        (k % self.nx, k / self.nx)
    }

    pub fn center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (i as f64 + 0.5) * self.hx,
            self.origin.1 + (j as f64 + 0.5) * self.hy,
        )
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn x_extent(&self) -> (f64, f64) {
        (self.origin.0, self.origin.0 + self.nx as f64 * self.hx)
    }

    pub fn y_extent(&self) -> (f64, f64) {
        (self.origin.1, self.origin.1 + self.ny as f64 * self.hy)
    }

    /// Index of the vertical grid line closest to `x`, if it lies within
    /// `tol` of a face.
    pub fn x_face_at(&self, x: f64, tol: f64) -> Option<usize> {
        let s = (x - self.origin.0) / self.hx;
        let k = math::floor(s + 0.5);
        if k < 0.0 || k > self.nx as f64 || (s - k).abs() > tol {
            None
        } else {
            Some(k as usize)
        }
    }

    pub fn y_face_at(&self, y: f64, tol: f64) -> Option<usize> {
        let s = (y - self.origin.1) / self.hy;
        let k = math::floor(s + 0.5);
        if k < 0.0 || k > self.ny as f64 || (s - k).abs() > tol {
            None
        } else {
            Some(k as usize)
        }
    }
}

/// Obstacle mask: `true` marks an excluded (solid) cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellMask {
    nx: usize,
    ny: usize,
    blocked: Vec<bool>,
}

impl CellMask {
    pub fn empty(grid: &StructuredGrid) -> Self {
        Self { nx: grid.nx, ny: grid.ny, blocked: vec![false; grid.len()] }
    }

    pub fn from_fn(grid: &StructuredGrid, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut mask = Self::empty(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                mask.blocked[grid.index(i, j)] = f(i, j);
            }
        }
        mask
    }

    #[inline]
    pub fn is_blocked(&self, k: usize) -> bool {
        self.blocked[k]
    }

    #[inline]
    pub fn is_open(&self, k: usize) -> bool {
        !self.blocked[k]
    }

    pub fn set(&mut self, k: usize, blocked: bool) {
        self.blocked[k] = blocked;
    }

    pub fn blocked_count(&self) -> usize {
        self.blocked.iter().filter(|b| **b).count()
    }

    pub fn open_count(&self) -> usize {
        self.blocked.len() - self.blocked_count()
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.blocked
    }

    pub fn matches(&self, grid: &StructuredGrid) -> bool {
        self.nx == grid.nx && self.ny == grid.ny
    }
}

/// Cell-centered scalar field. Masked cells hold `0.0` and are skipped by the
/// masked reductions.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: StructuredGrid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: StructuredGrid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    pub fn from_fn(grid: StructuredGrid, mut f: impl FnMut(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { grid, values }
    }

    pub fn from_values(grid: StructuredGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid("field", "value count does not match the grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field", "values must be finite"));
        }
        Ok(Self { grid, values })
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Zero out masked cells.
    pub fn apply_mask(&mut self, mask: &CellMask) {
        for (v, b) in self.values.iter_mut().zip(mask.as_slice()) {
            if *b {
                *v = 0.0;
            }
        }
    }

    pub fn integral(&self, mask: &CellMask) -> f64 {
        let area = self.grid.cell_area();
        self.open_values(mask).sum::<f64>() * area
    }

    pub fn mean(&self, mask: &CellMask) -> f64 {
        let n = mask.open_count();
        if n == 0 {
            0.0
        } else {
            self.open_values(mask).sum::<f64>() / n as f64
        }
    }

    pub fn max_norm(&self, mask: &CellMask) -> f64 {
        self.open_values(mask).fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn l2_norm(&self, mask: &CellMask) -> f64 {
        math::sqrt(self.open_values(mask).map(|v| v * v).sum::<f64>() * self.grid.cell_area())
    }

    pub fn min_max(&self, mask: &CellMask) -> (f64, f64) {
        self.open_values(mask)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
    }

    fn open_values<'a>(&'a self, mask: &'a CellMask) -> impl Iterator<Item = f64> + 'a {
        self.values.iter().zip(mask.as_slice()).filter(|(_, b)| !**b).map(|(v, _)| *v)
    }
}

/// A 2x2 diffusion tensor `[[d11, d12], [d21, d22]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Tensor2 {
    pub d11: f64,
    pub d12: f64,
    pub d21: f64,
    pub d22: f64,
}

impl Tensor2 {
    pub const ZERO: Tensor2 = Tensor2 { d11: 0.0, d12: 0.0, d21: 0.0, d22: 0.0 };
    pub const IDENTITY: Tensor2 = Tensor2 { d11: 1.0, d12: 0.0, d21: 0.0, d22: 1.0 };

    pub const fn new(d11: f64, d12: f64, d21: f64, d22: f64) -> Self {
        Self { d11, d12, d21, d22 }
    }

    pub const fn diagonal(d11: f64, d22: f64) -> Self {
        Self { d11, d12: 0.0, d21: 0.0, d22 }
    }

    pub fn is_diagonal(&self) -> bool {
        self.d12 == 0.0 && self.d21 == 0.0
    }

    pub fn determinant(&self) -> f64 {
        self.d11 * self.d22 - self.d12 * self.d21
    }

    pub fn inverse(&self) -> Option<Tensor2> {
        let det = self.determinant();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Tensor2::new(self.d22 / det, -self.d12 / det, -self.d21 / det, self.d11 / det))
    }

    pub fn mul(&self, o: &Tensor2) -> Tensor2 {
        Tensor2::new(
            self.d11 * o.d11 + self.d12 * o.d21,
            self.d11 * o.d12 + self.d12 * o.d22,
            self.d21 * o.d11 + self.d22 * o.d21,
            self.d21 * o.d12 + self.d22 * o.d22,
        )
    }

    pub fn scale(&self, s: f64) -> Tensor2 {
        Tensor2::new(self.d11 * s, self.d12 * s, self.d21 * s, self.d22 * s)
    }

    pub fn max_abs_diff(&self, o: &Tensor2) -> f64 {
        (self.d11 - o.d11)
            .abs()
            .max((self.d12 - o.d12).abs())
            .max((self.d21 - o.d21).abs())
            .max((self.d22 - o.d22).abs())
    }

    pub fn is_finite(&self) -> bool {
        self.d11.is_finite() && self.d12.is_finite() && self.d21.is_finite() && self.d22.is_finite()
    }

    /// Checks `d11 > 0`, `d22 > 0` and positive definiteness of the
    /// symmetric part.
    pub fn check_admissible(&self) -> core::result::Result<(), &'static str> {
        if !self.is_finite() {
            return Err("non-finite entry");
        }
        if self.d11 <= 0.0 || self.d22 <= 0.0 {
            return Err("diagonal entries must be positive");
        }
        let off = 0.5 * (self.d12 + self.d21);
        if self.d11 * self.d22 - off * off <= 0.0 {
            return Err("symmetric part is not positive definite");
        }
        Ok(())
    }
}

/// Per-cell diffusion tensors. Masked cells carry [`Tensor2::ZERO`].
#[derive(Debug, Clone, PartialEq)]
pub struct TensorField {
    pub values: Vec<Tensor2>,
}

impl TensorField {
    pub fn uniform(grid: &StructuredGrid, t: Tensor2) -> Self {
        Self { values: vec![t; grid.len()] }
    }

    pub fn from_fn(grid: &StructuredGrid, mut f: impl FnMut(f64, f64) -> Tensor2) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.center(i, j);
                values.push(f(x, y));
            }
        }
        Self { values }
    }

    /// Zero-extension onto the obstacle cells.
    pub fn masked(mut self, mask: &CellMask) -> Self {
        for (t, b) in self.values.iter_mut().zip(mask.as_slice()) {
            if *b {
                *t = Tensor2::ZERO;
            }
        }
        self
    }

    pub fn validate(&self, grid: &StructuredGrid, mask: &CellMask) -> Result<()> {
        if self.values.len() != grid.len() || !mask.matches(grid) {
            return Err(invalid("tensor field", "size does not match the grid"));
        }
        for (k, t) in self.values.iter().enumerate() {
            if mask.is_open(k) {
                t.check_admissible().map_err(|reason| Error::InvalidTensor { cell: k, reason })?;
            }
        }
        Ok(())
    }

    pub fn is_diagonal(&self) -> bool {
        self.values.iter().all(Tensor2::is_diagonal)
    }

    /// True when the discrete cross-term stencil is symmetric: diagonal
    /// tensors everywhere.
    pub fn has_cross_terms(&self) -> bool {
        !self.is_diagonal()
    }

    #[inline]
    pub fn get(&self, k: usize) -> &Tensor2 {
        &self.values[k]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn covering_grid_reaches_the_far_corner() {
        let g = StructuredGrid::covering((-1.0, 1.0), (0.0, 0.8), 10, 4).unwrap();
        assert_eq!(g.x_extent(), (-1.0, 1.0));
        assert!((g.y_extent().1 - 0.8).abs() < 1e-15);
        assert_eq!(g.x_face_at(0.0, 1e-9), Some(5));
        assert_eq!(g.x_face_at(0.05, 1e-9), None);
    }

    #[test]
    fn masked_reductions_skip_obstacles() {
        let g = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), 2, 2).unwrap();
        let mask = CellMask::from_fn(&g, |i, j| i == 0 && j == 0);
        let f = ScalarField::from_values(g, vec![100.0, 1.0, 2.0, 3.0]).unwrap();
        assert_eq!(f.mean(&mask), 2.0);
        assert_eq!(f.max_norm(&mask), 3.0);
        assert_eq!(f.min_max(&mask), (1.0, 3.0));
    }

    #[test]
    fn tensor_admissibility() {
        assert!(Tensor2::IDENTITY.check_admissible().is_ok());
        assert!(Tensor2::new(1.0, -0.05, 0.05, 0.1).check_admissible().is_ok());
        assert!(Tensor2::new(1.0, 2.0, 2.0, 1.0).check_admissible().is_err());
        assert!(Tensor2::diagonal(0.0, 1.0).check_admissible().is_err());
    }

    #[test]
    fn tensor_inverse_round_trips() {
        let t = Tensor2::new(2.0, 0.3, -0.1, 0.7);
        let p = t.mul(&t.inverse().unwrap());
        assert!(p.max_abs_diff(&Tensor2::IDENTITY) < 1e-14);
    }
}
