//! Regularized cell problems on the normalized unit cell `[0,1]^2`.
//!
//! `Y1` runs across the membrane and `Y2` along the periodic direction.
//! With `K = diag(delta D11, D22)` both cell functions solve
//! `div(K grad w_j + S_j) = 0`, where `S_1 = (s(delta) D11, 0)` and
//! `S_2 = (0, D22)`; `s` is the configurable scaling of the first source
//! (default `sqrt(delta)`). The conditions are:
//!
//! * periodic in `Y2`;
//! * `grad w . n = 0` on the two `Y1` sides;
//! * zero total flux on the obstacle boundary, realized by extending `D`
//!   by zero into the obstacle.
//!
//! Both functions are normalized to zero mean over the pore space.

use alloc::vec::Vec;

use crate::boundary::{BoundaryCondition, Boundaries};
use crate::discretization::assemble_diffusion;
use crate::error::{invalid, Error, Result};
use crate::geometry::{rasterize_in_cells, MicrostructureSpec, Rect};
use crate::grid::{CellMask, StructuredGrid, Tensor2, TensorField};
use crate::linear_solver::{solve_spd_zero_mean, SolverConfig};

/// Normalization of the cell average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AveragingMode {
    /// `D` extended by zero into obstacles, divided by the full cell area.
    #[default]
    ZeroExtension,
    /// Divided by the pore area only.
    PoreAverage,
}

/// Factor in front of the `Y1` source of the first cell problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SourceScaling {
    #[default]
    SqrtDelta,
    Delta,
    Unit,
}

impl SourceScaling {
    pub fn factor(self, delta: f64) -> f64 {
        match self {
            SourceScaling::SqrtDelta => crate::math::sqrt(delta),
            SourceScaling::Delta => delta,
            SourceScaling::Unit => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellProblemSpec {
    pub grid: StructuredGrid,
    pub mask: CellMask,
    /// Tensor on the cell grid; obstacle cells are ignored.
    pub tensor: TensorField,
    pub delta: f64,
    pub averaging: AveragingMode,
    pub source_scaling: SourceScaling,
    pub solver: SolverConfig,
}

impl CellProblemSpec {
    /// `nx x ny` grid on the unit cell, uniform tensor, optional obstacle.
    pub fn uniform(
        nx: usize,
        ny: usize,
        tensor: Tensor2,
        obstacle: Option<&MicrostructureSpec>,
        delta: f64,
    ) -> Result<Self> {
        Self::with_tensor(nx, ny, obstacle, delta, |_, _| tensor)
    }

    /// Cell with a tensor given as a function of `(Y1, Y2)`.
    pub fn with_tensor(
        nx: usize,
        ny: usize,
        obstacle: Option<&MicrostructureSpec>,
        delta: f64,
        f: impl FnMut(f64, f64) -> Tensor2,
    ) -> Result<Self> {
        let grid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), nx, ny)?;
        let mask = match obstacle {
            Some(m) => rasterize_in_cells(&[Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 }], m, &grid)?,
            None => CellMask::empty(&grid),
        };
        let tensor = TensorField::from_fn(&grid, f).masked(&mask);
        Ok(CellProblemSpec {
            grid,
            mask,
            tensor,
            delta,
            averaging: AveragingMode::default(),
            source_scaling: SourceScaling::default(),
            solver: SolverConfig::default(),
        })
    }

    pub fn with_delta(&self, delta: f64) -> Self {
        CellProblemSpec { delta, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(invalid("delta", "regularization must be positive"));
        }
        let g = &self.grid;
        for j in 0..g.ny {
            if (0..g.nx).all(|i| self.mask.is_blocked(g.index(i, j))) {
                return Err(Error::BlockedCell("an obstacle spans the full cell width"));
            }
        }
        for i in 0..g.nx {
            if (0..g.ny).all(|j| self.mask.is_blocked(g.index(i, j))) {
                return Err(Error::BlockedCell("an obstacle spans the full cell height"));
            }
        }
        self.tensor.validate(&self.grid, &self.mask)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellSolution {
    pub grid: StructuredGrid,
    pub mask: CellMask,
    pub w1: Vec<f64>,
    pub w2: Vec<f64>,
    pub effective: Tensor2,
    pub tortuosity: Tensor2,
    /// Final linear-solver residuals of the two problems.
    pub residuals: [f64; 2],
    /// Pore area fraction of the cell.
    pub porosity: f64,
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Solves both cell problems and evaluates the effective tensor.
pub fn solve_cell_functions(spec: &CellProblemSpec) -> Result<CellSolution> {
    spec.validate()?;
    let g = spec.grid;
    let (nx, ny) = (g.nx, g.ny);
    let mask = &spec.mask;
    let t = &spec.tensor;
    let reg = TensorField {
        values: t
            .values
            .iter()
            .enumerate()
            .map(|(k, d)| if mask.is_open(k) { Tensor2::diagonal(spec.delta * d.d11, d.d22) } else { Tensor2::ZERO })
            .collect(),
    };
    let bcs = Boundaries {
        left: BoundaryCondition::ZeroFlux,
        right: BoundaryCondition::ZeroFlux,
        bottom: BoundaryCondition::Periodic,
        top: BoundaryCondition::Periodic,
    };
    let disc = assemble_diffusion(&g, &reg, mask, &bcs)?;

    // Right sides: discrete divergence of the source fluxes.
    let s1 = spec.source_scaling.factor(spec.delta);
    let mut b1 = alloc::vec![0.0; g.len()];
    let mut b2 = alloc::vec![0.0; g.len()];
    for j in 0..ny {
        for f in 0..=nx {
            let left = (f > 0).then(|| g.index(f - 1, j));
            let right = (f < nx).then(|| g.index(f, j));
            let flux = match (left, right) {
                (Some(l), Some(r)) => harmonic(t.get(l).d11, t.get(r).d11),
                // The sides only constrain grad w, so the source keeps its
                // interior value there.
                (None, Some(c)) | (Some(c), None) if mask.is_open(c) => t.get(c).d11,
                _ => 0.0,
            } * s1;
            if let Some(l) = left {
                b1[l] += flux / g.hx;
            }
            if let Some(r) = right {
                b1[r] -= flux / g.hx;
            }
        }
    }
    for f in 0..ny {
        // face between rows f - 1 (wrapping) and f
        let below = if f == 0 { ny - 1 } else { f - 1 };
        for i in 0..nx {
            let (m, p) = (g.index(i, below), g.index(i, f));
            let flux = harmonic(t.get(m).d22, t.get(p).d22);
            b2[m] += flux / g.hy;
            b2[p] -= flux / g.hy;
        }
    }
    // With A = -div(K grad) the loops above built the right side div S.
    for k in 0..g.len() {
        if mask.is_blocked(k) {
            b1[k] = 0.0;
            b2[k] = 0.0;
        }
    }
    let active: Vec<bool> = (0..g.len()).map(|k| mask.is_open(k)).collect();
    let sol1 = solve_spd_zero_mean(disc.operator(), &b1, &active, &spec.solver)?;
    let sol2 = solve_spd_zero_mean(disc.operator(), &b2, &active, &spec.solver)?;
    let effective = effective_tensor_on(&g, mask, t, &sol1.x, &sol2.x, spec.averaging);
    let porosity = mask.open_count() as f64 / g.len() as f64;
    let tortuosity = tortuosity(t, mask, &effective, spec.averaging);
    Ok(CellSolution {
        grid: g,
        mask: mask.clone(),
        w1: sol1.x,
        w2: sol2.x,
        effective,
        tortuosity,
        residuals: [sol1.residual, sol2.residual],
        porosity,
    })
}

/// Cell average of `D (I + [[0, 0], [d2 w1, d2 w2]])`.
pub fn effective_tensor(sol: &CellSolution, tensor: &TensorField, mode: AveragingMode) -> Tensor2 {
    effective_tensor_on(&sol.grid, &sol.mask, tensor, &sol.w1, &sol.w2, mode)
}

fn effective_tensor_on(
    g: &StructuredGrid,
    mask: &CellMask,
    t: &TensorField,
    w1: &[f64],
    w2: &[f64],
    mode: AveragingMode,
) -> Tensor2 {
    let (nx, ny) = (g.nx, g.ny);
    let area = g.cell_area();
    let mut acc = Tensor2::ZERO;
    for k in 0..g.len() {
        if mask.is_open(k) {
            let d = t.get(k);
            acc.d11 += d.d11 * area;
            acc.d12 += d.d12 * area;
            acc.d21 += d.d21 * area;
            acc.d22 += d.d22 * area;
        }
    }
    // Gradient corrections live on the y-faces, where the discrete flux of
    // the cell problem is defined; d22 here is exactly that flux.
    let mut d22 = 0.0;
    for f in 0..ny {
        let below = if f == 0 { ny - 1 } else { f - 1 };
        for i in 0..nx {
            let (m, p) = (g.index(i, below), g.index(i, f));
            if mask.is_blocked(m) || mask.is_blocked(p) {
                continue;
            }
            let (tm, tp) = (t.get(m), t.get(p));
            let k22 = harmonic(tm.d22, tp.d22);
            let k12 = 0.5 * (tm.d12 + tp.d12);
            let g1 = (w1[p] - w1[m]) / g.hy;
            let g2 = (w2[p] - w2[m]) / g.hy;
            acc.d11 += k12 * g1 * area;
            acc.d12 += k12 * g2 * area;
            acc.d21 += k22 * g1 * area;
            d22 += k22 * (1.0 + g2) * area;
        }
    }
    acc.d22 = d22;
    let total = match mode {
        AveragingMode::ZeroExtension => g.len() as f64 * area,
        AveragingMode::PoreAverage => mask.open_count() as f64 * area,
    };
    acc.scale(1.0 / total)
}

/// `<D>^-1 D*`, with `<D>` averaged like `D*`.
fn tortuosity(t: &TensorField, mask: &CellMask, eff: &Tensor2, mode: AveragingMode) -> Tensor2 {
    let mut avg = Tensor2::ZERO;
    let mut count = 0usize;
    for (k, d) in t.values.iter().enumerate() {
        if mask.is_open(k) {
            avg = Tensor2::new(avg.d11 + d.d11, avg.d12 + d.d12, avg.d21 + d.d21, avg.d22 + d.d22);
            count += 1;
        }
    }
    let denom = match mode {
        AveragingMode::ZeroExtension => t.values.len(),
        AveragingMode::PoreAverage => count,
    } as f64;
    let avg = avg.scale(1.0 / denom);
    avg.inverse().map_or(Tensor2::ZERO, |inv| inv.mul(eff))
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub parameter: f64,
    pub delta: f64,
    pub result: core::result::Result<CellSolution, Error>,
}

fn check_sorted_positive(values: &[f64], what: &'static str) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptyInput(what));
    }
    if values.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(invalid(what, "values must be positive"));
    }
    if values.windows(2).any(|w| w[1] < w[0]) {
        return Err(invalid(what, "values must be sorted ascending"));
    }
    Ok(())
}

/// Solves the cell problem for every `delta`; failures are recorded per row.
pub fn sweep_delta(spec: &CellProblemSpec, deltas: &[f64]) -> Result<Vec<SweepPoint>> {
    check_sorted_positive(deltas, "deltas")?;
    Ok(deltas
        .iter()
        .map(|&d| SweepPoint { parameter: d, delta: d, result: solve_cell_functions(&spec.with_delta(d)) })
        .collect())
}

/// Sweep over cell heights of geometrically similar cells. On the
/// normalized cell only the regularization changes, with `delta = eta`.
pub fn sweep_eta(spec: &CellProblemSpec, etas: &[f64]) -> Result<Vec<SweepPoint>> {
    check_sorted_positive(etas, "etas")?;
    Ok(etas
        .iter()
        .map(|&e| SweepPoint { parameter: e, delta: e, result: solve_cell_functions(&spec.with_delta(e)) })
        .collect())
}

/// `n` logarithmically spaced values from `lo` to `hi`.
pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return alloc::vec![lo];
    }
    let (a, b) = (libm::log(lo), libm::log(hi));
    (0..n).map(|k| libm::exp(a + (b - a) * k as f64 / (n - 1) as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homogeneous_cell_is_transparent() {
        let d = Tensor2::diagonal(1.0, 0.1);
        let s = solve_cell_functions(&CellProblemSpec::uniform(32, 32, d, None, 0.1).unwrap()).unwrap();
        assert!(s.effective.max_abs_diff(&d) < 1e-12);
        assert!(s.w1.iter().chain(&s.w2).all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn two_layers_give_the_harmonic_mean() {
        let spec = CellProblemSpec::with_tensor(16, 16, None, 0.5, |_, y| {
            Tensor2::diagonal(1.0, if y < 0.5 { 1.0 } else { 2.0 })
        })
        .unwrap();
        let s = solve_cell_functions(&spec).unwrap();
        assert!((s.effective.d22 - 4.0 / 3.0).abs() < 1e-10);
        // slopes 1/3 below, -1/3 above
        let g = s.grid;
        let slope = |j: usize| (s.w2[g.index(3, j + 1)] - s.w2[g.index(3, j)]) / g.hy;
        assert!((slope(2) - 1.0 / 3.0).abs() < 1e-9);
        assert!((slope(12) + 1.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn full_width_obstacle_is_rejected() {
        let mut spec = CellProblemSpec::uniform(8, 8, Tensor2::IDENTITY, None, 0.1).unwrap();
        for i in 0..8 {
            spec.mask.set(spec.grid.index(i, 4), true);
        }
        assert!(matches!(solve_cell_functions(&spec), Err(Error::BlockedCell(_))));
    }

    #[test]
    fn sweep_inputs_are_checked() {
        let spec = CellProblemSpec::uniform(8, 8, Tensor2::IDENTITY, None, 0.1).unwrap();
        assert!(matches!(sweep_eta(&spec, &[]), Err(Error::EmptyInput(_))));
        assert!(sweep_delta(&spec, &[0.5, 0.1]).is_err());
        let pts = log_space(1e-3, 1.0, 20);
        assert_eq!(pts.len(), 20);
        assert!((pts[19] - 1.0).abs() < 1e-12 && (pts[0] - 1e-3).abs() < 1e-15);
    }
}
