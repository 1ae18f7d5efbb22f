//! Strip, membrane and obstacle geometry.
//!
//! Physical lengths (cm) are mapped to dimensionless coordinates with
//! `X = 2x / l`, so the strip `[-l/2, l/2] x [0, h]` becomes
//! `[-1, 1] x [0, 2h/l]` and the membrane occupies `|X1| <= w/l`.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::grid::{CellMask, StructuredGrid};
use crate::math;

/// Strip dimensions in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalGeometry {
    /// Horizontal strip length.
    pub ell: f64,
    /// Strip height.
    pub h: f64,
    /// Membrane width.
    pub w: f64,
    /// Periodicity cell height.
    pub eta: f64,
}

impl PhysicalGeometry {
    pub fn validate(&self) -> Result<()> {
        let all = [self.ell, self.h, self.w, self.eta];
        if all.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(invalid("geometry", "all lengths must be positive and finite"));
        }
        if self.w >= self.ell {
            return Err(invalid("geometry.w", "membrane width must be smaller than the strip length"));
        }
        if self.eta > self.h {
            return Err(invalid("geometry.eta", "cell height must not exceed the strip height"));
        }
        Ok(())
    }

    /// Dimensionless cell height `2 eta / l`.
    pub fn epsilon(&self) -> f64 {
        2.0 * self.eta / self.ell
    }
}

/// Obstacle shape, sized relative to its periodicity cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MicrostructureSpec {
    /// Axis-aligned rectangle; fractions of the cell width and height.
    Rectangle { width_fraction: f64, height_fraction: f64 },
    /// Disk whose diameter is a fraction of the shorter cell side.
    Disk { diameter_fraction: f64 },
}

impl MicrostructureSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |f: f64| f > 0.0 && f < 1.0;
        match *self {
            MicrostructureSpec::Rectangle { width_fraction, height_fraction } => {
                if !ok(width_fraction) || !ok(height_fraction) {
                    return Err(invalid("microstructure", "rectangle fractions must lie in (0, 1)"));
                }
            }
            MicrostructureSpec::Disk { diameter_fraction } => {
                if !ok(diameter_fraction) {
                    return Err(invalid("microstructure", "disk fraction must lie in (0, 1)"));
                }
            }
        }
        Ok(())
    }

    /// Area of the obstacle inside a cell of the given size.
    pub fn area_in(&self, cell: &Rect) -> f64 {
        match *self {
            MicrostructureSpec::Rectangle { width_fraction, height_fraction } => {
                width_fraction * cell.width() * height_fraction * cell.height()
            }
            MicrostructureSpec::Disk { diameter_fraction } => {
                let r = 0.5 * diameter_fraction * cell.width().min(cell.height());
                core::f64::consts::PI * r * r
            }
        }
    }

    /// Whether `(x, y)` lies strictly inside the obstacle centered in `cell`.
    pub fn contains(&self, cell: &Rect, x: f64, y: f64) -> bool {
        let (cx, cy) = cell.center();
        match *self {
            MicrostructureSpec::Rectangle { width_fraction, height_fraction } => {
                (x - cx).abs() < 0.5 * width_fraction * cell.width()
                    && (y - cy).abs() < 0.5 * height_fraction * cell.height()
            }
            MicrostructureSpec::Disk { diameter_fraction } => {
                let r = 0.5 * diameter_fraction * cell.width().min(cell.height());
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy < r * r
            }
        }
    }
}

/// Closed axis-aligned rectangle `[x0, x1] x [y0, y1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub x0: f64,
    pub x1: f64,
    pub y0: f64,
    pub y1: f64,
}

impl Rect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }
    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }
    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }
    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x0 + self.x1), 0.5 * (self.y0 + self.y1))
    }
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// The strip in dimensionless coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct DimensionlessGeometry {
    /// Whole strip `[-1, 1] x [0, 2h/l]`.
    pub domain: Rect,
    pub left: Rect,
    pub membrane: Rect,
    pub right: Rect,
    /// Dimensionless cell height `2 eta / l`.
    pub epsilon: f64,
    /// Periodicity cells from bottom to top; the last one is truncated when
    /// `h / eta` is not an integer.
    pub cells: Vec<Rect>,
}

/// Maps the physical strip to dimensionless coordinates.
pub fn nondimensionalize(geom: &PhysicalGeometry) -> Result<DimensionlessGeometry> {
    geom.validate()?;
    let height = 2.0 * geom.h / geom.ell;
    let half = geom.w / geom.ell;
    let epsilon = geom.epsilon();
    let ratio = geom.h / geom.eta;
    // h/eta can land a few ulps above an integer (0.4 / 0.08).
    let count = math::ceil(ratio - 1e-9 * ratio).max(1.0) as usize;
    let cells = (0..count)
        .map(|i| Rect {
            x0: -half,
            x1: half,
            y0: i as f64 * epsilon,
            y1: ((i + 1) as f64 * epsilon).min(height),
        })
        .collect();
    Ok(DimensionlessGeometry {
        domain: Rect { x0: -1.0, x1: 1.0, y0: 0.0, y1: height },
        left: Rect { x0: -1.0, x1: -half, y0: 0.0, y1: height },
        membrane: Rect { x0: -half, x1: half, y0: 0.0, y1: height },
        right: Rect { x0: half, x1: 1.0, y0: 0.0, y1: height },
        epsilon,
        cells,
    })
}

impl DimensionlessGeometry {
    pub fn height(&self) -> f64 {
        self.domain.height()
    }

    /// Half width `w / l` of the membrane.
    pub fn membrane_half_width(&self) -> f64 {
        self.membrane.x1
    }

    /// Index of the periodicity cell containing height `y`.
    pub fn cell_index(&self, y: f64) -> Option<usize> {
        if y < 0.0 || y > self.height() {
            return None;
        }
        let k = math::floor(y / self.epsilon) as usize;
        Some(k.min(self.cells.len() - 1))
    }
}

/// Marks grid cells whose centers lie inside an obstacle. Without a
/// microstructure the mask is empty.
pub fn rasterize_obstacles(
    geom: &DimensionlessGeometry,
    micro: Option<&MicrostructureSpec>,
    grid: &StructuredGrid,
) -> Result<CellMask> {
    let Some(micro) = micro else {
        return Ok(CellMask::empty(grid));
    };
    micro.validate()?;
    if geom.epsilon / grid.hy < 8.0 - 1e-9 {
        return Err(Error::UnderResolved(alloc::format!(
            "{:.2} grid rows per cell height, need at least 8",
            geom.epsilon / grid.hy
        )));
    }
    rasterize_in_cells(&geom.cells, micro, grid)
}

/// Rasterizes one obstacle per rectangle in `cells`.
pub fn rasterize_in_cells(cells: &[Rect], micro: &MicrostructureSpec, grid: &StructuredGrid) -> Result<CellMask> {
    micro.validate()?;
    let mut mask = CellMask::empty(grid);
    let mut hits = alloc::vec![0usize; cells.len()];
    for j in 0..grid.ny {
        for i in 0..grid.nx {
            let (x, y) = grid.center(i, j);
            for (c, cell) in cells.iter().enumerate() {
                if cell.contains(x, y) && micro.contains(cell, x, y) {
                    mask.set(grid.index(i, j), true);
                    hits[c] += 1;
                    break;
                }
            }
        }
    }
    if let Some(c) = hits.iter().position(|h| *h == 0) {
        return Err(Error::UnderResolved(alloc::format!("obstacle in cell {c} covers no grid cell center")));
    }
    Ok(mask)
}
