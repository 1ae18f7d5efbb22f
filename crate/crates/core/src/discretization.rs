//! Cell-centered finite volumes for `-div(D grad u)` and the drift
//! divergence `div(D G(u))` with `G = (g(u), 0)`.
//!
//! Every face carries one flux, written as a linear stencil in the cell
//! values plus a constant collecting boundary data. The face flux enters the
//! two adjacent rows with opposite signs, so the scheme is conservative by
//! construction (column sums of the operator vanish away from Dirichlet
//! rows).
//!
//! * Normal part: two-point flux with the harmonic mean of `D11` (x-faces)
//!   or `D22` (y-faces).
//! * Cross part: arithmetic face mean of `D12` (x-faces) or `D21` (y-faces)
//!   times the mean of the tangential central differences in the two
//!   adjacent cells. Near obstacles and zero-flux walls the differences
//!   become one-sided; next to a Dirichlet edge they use the boundary value
//!   at half a cell.
//! * Dirichlet edges are eliminated through a ghost value, which adds
//!   `2 D11 / hx^2` to the diagonal and moves the data to the load vector.
//! * Obstacle cells get identity rows with zero load.
//! * Drift: Murman-Roe upwinding of the advective flux `-k g(u)` with `k`
//!   the harmonic `D11` on x-faces and the mean `D21` on y-faces.

use alloc::vec::Vec;

use crate::boundary::{BoundaryCondition, Boundaries, Edge};
use crate::drift::DriftPolynomial;
use crate::error::{invalid, Result};
use crate::grid::{CellMask, StructuredGrid, TensorField};
use crate::sparse::{SparseOperator, TripletBuilder};

/// Small linear combination `sum c_k u[idx_k] + constant`.
#[derive(Debug, Clone, Copy)]
struct Lin {
    idx: [usize; 8],
    c: [f64; 8],
    n: usize,
    constant: f64,
}

impl Lin {
    const ZERO: Lin = Lin { idx: [0; 8], c: [0.0; 8], n: 0, constant: 0.0 };

    fn push(&mut self, k: usize, c: f64) {
        if c == 0.0 {
            return;
        }
        for t in 0..self.n {
            if self.idx[t] == k {
                self.c[t] += c;
                return;
            }
        }
        self.idx[self.n] = k;
        self.c[self.n] = c;
        self.n += 1;
    }
}

/// What sits next to a cell in one direction.
#[derive(Debug, Clone, Copy)]
enum Side {
    Cell(usize),
    Value(f64),
    Wall,
}

/// Tangential derivative at a cell center from its two neighbors.
fn derivative(center: usize, minus: Side, plus: Side, h: f64) -> Lin {
    let mut l = Lin::ZERO;
    match (minus, plus) {
        (Side::Cell(a), Side::Cell(b)) => {
            l.push(b, 0.5 / h);
            l.push(a, -0.5 / h);
        }
        // quadratic through the boundary value at -h/2, the center and +h
        (Side::Value(v), Side::Cell(b)) => {
            l.constant = -4.0 * v / (3.0 * h);
            l.push(center, 1.0 / h);
            l.push(b, 1.0 / (3.0 * h));
        }
        (Side::Cell(a), Side::Value(v)) => {
            l.constant = 4.0 * v / (3.0 * h);
            l.push(center, -1.0 / h);
            l.push(a, -1.0 / (3.0 * h));
        }
        (Side::Wall, Side::Cell(b)) => {
            l.push(b, 1.0 / h);
            l.push(center, -1.0 / h);
        }
        (Side::Cell(a), Side::Wall) => {
            l.push(center, 1.0 / h);
            l.push(a, -1.0 / h);
        }
        (Side::Value(v), Side::Wall) => {
            l.push(center, 2.0 / h);
            l.constant = -2.0 * v / h;
        }
        (Side::Wall, Side::Value(v)) => {
            l.push(center, -2.0 / h);
            l.constant = 2.0 * v / h;
        }
        (Side::Value(a), Side::Value(b)) => l.constant = (b - a) / h,
        (Side::Wall, Side::Wall) => {}
    }
    l
}

fn harmonic(a: f64, b: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum FaceKind {
    Closed,
    /// Between `minus` (lower index side) and `plus`.
    Inner { minus: usize, plus: usize },
    /// On a Dirichlet or interface edge; `node` indexes along the edge.
    Boundary { cell: usize, edge: Edge, node: usize },
}

/// Faces of one orientation, stored with their flux stencils.
#[derive(Debug, Clone)]
struct Faces {
    kind: Vec<FaceKind>,
    /// Coefficient multiplying `-g(u)` in the advective flux.
    adv: Vec<f64>,
    stencil: Vec<Lin>,
}

impl Faces {
    fn flux(&self, f: usize, u: &[f64]) -> f64 {
        let s = &self.stencil[f];
        let mut acc = s.constant;
        for t in 0..s.n {
            acc += s.c[t] * u[s.idx[t]];
        }
        acc
    }
}

/// Net flux through the four edges, each integrated along the edge and
/// signed along the coordinate axis (`+x` for left/right, `+y` for
/// bottom/top).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EdgeFluxes {
    pub left: f64,
    pub right: f64,
    pub bottom: f64,
    pub top: f64,
}

impl EdgeFluxes {
    /// Total flux leaving the domain.
    pub fn net_outflow(&self) -> f64 {
        self.right - self.left + self.top - self.bottom
    }
}

/// Assembled diffusion operator together with everything needed to evaluate
/// face fluxes and the drift divergence on the same grid.
#[derive(Debug, Clone)]
pub struct Discretization {
    grid: StructuredGrid,
    mask: CellMask,
    bcs: Boundaries,
    operator: SparseOperator,
    load: Vec<f64>,
    xf: Faces,
    yf: Faces,
    symmetric: bool,
}

/// Assembles `-div(D grad u)` with the given boundary conditions.
pub fn assemble_diffusion(
    grid: &StructuredGrid,
    tensor: &TensorField,
    mask: &CellMask,
    bcs: &Boundaries,
) -> Result<Discretization> {
    Discretization::new(grid, tensor, mask, bcs)
}

/// Adds the boundary load to `rhs` and zeroes the obstacle rows.
pub fn apply_bc(disc: &Discretization, rhs: &mut [f64]) {
    disc.apply_bc(rhs);
}

/// Discrete `div(D G(u))`, the drift term on the right of `du/dt`.
pub fn drift_divergence(disc: &Discretization, drift: &DriftPolynomial, u: &[f64]) -> Vec<f64> {
    disc.drift_divergence(drift, u)
}

struct Builder<'a> {
    g: &'a StructuredGrid,
    t: &'a TensorField,
    mask: &'a CellMask,
    bcs: &'a Boundaries,
}

impl Builder<'_> {
    fn open(&self, i: usize, j: usize) -> Option<usize> {
        let k = self.g.index(i, j);
        self.mask.is_open(k).then_some(k)
    }

    fn edge_side(&self, bc: &BoundaryCondition, node: usize, wrap: (usize, usize)) -> Side {
        match bc {
            BoundaryCondition::Periodic => self.open(wrap.0, wrap.1).map_or(Side::Wall, Side::Cell),
            BoundaryCondition::ZeroFlux => Side::Wall,
            BoundaryCondition::Dirichlet(v) => Side::Value(*v),
            BoundaryCondition::Interface(c) => Side::Value(c.trace[node]),
        }
    }

    fn neighbor(&self, i: usize, j: usize, dir: Edge) -> Side {
        let (nx, ny) = (self.g.nx, self.g.ny);
        let cell = |ii, jj| self.open(ii, jj).map_or(Side::Wall, Side::Cell);
        match dir {
            Edge::Left if i > 0 => cell(i - 1, j),
            Edge::Left => self.edge_side(&self.bcs.left, j, (nx - 1, j)),
            Edge::Right if i + 1 < nx => cell(i + 1, j),
            Edge::Right => self.edge_side(&self.bcs.right, j, (0, j)),
            Edge::Bottom if j > 0 => cell(i, j - 1),
            Edge::Bottom => self.edge_side(&self.bcs.bottom, i, (i, ny - 1)),
            Edge::Top if j + 1 < ny => cell(i, j + 1),
            Edge::Top => self.edge_side(&self.bcs.top, i, (i, 0)),
        }
    }

    fn dx(&self, i: usize, j: usize) -> Lin {
        let k = self.g.index(i, j);
        derivative(k, self.neighbor(i, j, Edge::Left), self.neighbor(i, j, Edge::Right), self.g.hx)
    }

    fn dy(&self, i: usize, j: usize) -> Lin {
        let k = self.g.index(i, j);
        derivative(k, self.neighbor(i, j, Edge::Bottom), self.neighbor(i, j, Edge::Top), self.g.hy)
    }

    /// Derivative of edge data along the edge at `node`.
    fn trace_derivative(&self, bc: &BoundaryCondition, node: usize, len: usize, h: f64, periodic: bool) -> f64 {
        let BoundaryCondition::Interface(c) = bc else {
            return 0.0;
        };
        let tr = &c.trace;
        if len < 2 {
            return 0.0;
        }
        let prev = if node > 0 { Some(node - 1) } else if periodic { Some(len - 1) } else { None };
        let next = if node + 1 < len { Some(node + 1) } else if periodic { Some(0) } else { None };
        match (prev, next) {
            (Some(a), Some(b)) => (tr[b] - tr[a]) / (2.0 * h),
            (None, Some(b)) => (tr[b] - tr[node]) / h,
            (Some(a), None) => (tr[node] - tr[a]) / h,
            (None, None) => 0.0,
        }
    }

    fn x_faces(&self) -> Faces {
        let g = self.g;
        let (nx, ny) = (g.nx, g.ny);
        let count = (nx + 1) * ny;
        let mut kind = alloc::vec![FaceKind::Closed; count];
        let mut adv = alloc::vec![0.0; count];
        let mut stencil = alloc::vec![Lin::ZERO; count];
        for j in 0..ny {
            for f in 0..=nx {
                let id = j * (nx + 1) + f;
                let inner = |m: (usize, usize), p: (usize, usize)| -> Option<(usize, usize)> {
                    Some((self.open(m.0, m.1)?, self.open(p.0, p.1)?))
                };
                let pair = if f > 0 && f < nx {
                    inner((f - 1, j), (f, j))
                } else if self.bcs.left.is_periodic() {
                    inner((nx - 1, j), (0, j))
                } else {
                    None
                };
                if let Some((m, p)) = pair {
                    let (tm, tp) = (self.t.get(m), self.t.get(p));
                    let k = harmonic(tm.d11, tp.d11);
                    let c = 0.5 * (tm.d12 + tp.d12);
                    let (mi, mj) = g.coords(m);
                    let (pi, pj) = g.coords(p);
                    let mut l = Lin::ZERO;
                    l.push(p, -k / g.hx);
                    l.push(m, k / g.hx);
                    if c != 0.0 {
                        for d in [self.dy(mi, mj), self.dy(pi, pj)] {
                            for t in 0..d.n {
                                l.push(d.idx[t], -0.5 * c * d.c[t]);
                            }
                            l.constant -= 0.5 * c * d.constant;
                        }
                    }
                    kind[id] = FaceKind::Inner { minus: m, plus: p };
                    adv[id] = k;
                    stencil[id] = l;
                    continue;
                }
                if f > 0 && f < nx {
                    continue;
                }
                let (edge, bc, ci) = if f == 0 { (Edge::Left, &self.bcs.left, 0) } else { (Edge::Right, &self.bcs.right, nx - 1) };
                let Some(cell) = self.open(ci, j) else { continue };
                let Some(v) = (match bc {
                    BoundaryCondition::Dirichlet(v) => Some(*v),
                    BoundaryCondition::Interface(c) => Some(c.trace[j]),
                    _ => None,
                }) else {
                    continue;
                };
                let t = self.t.get(cell);
                let dtr = self.trace_derivative(bc, j, ny, g.hy, self.bcs.y_periodic());
                // -D11 du/dx - D12 dtrace/dy with the ghost difference over hx/2
                let sign = if f == 0 { 1.0 } else { -1.0 };
                let mut l = Lin::ZERO;
                l.push(cell, -sign * 2.0 * t.d11 / g.hx);
                l.constant = sign * 2.0 * t.d11 * v / g.hx - t.d12 * dtr;
                kind[id] = FaceKind::Boundary { cell, edge, node: j };
                adv[id] = t.d11;
                stencil[id] = l;
            }
        }
        Faces { kind, adv, stencil }
    }

    fn y_faces(&self) -> Faces {
        let g = self.g;
        let (nx, ny) = (g.nx, g.ny);
        let count = nx * (ny + 1);
        let mut kind = alloc::vec![FaceKind::Closed; count];
        let mut adv = alloc::vec![0.0; count];
        let mut stencil = alloc::vec![Lin::ZERO; count];
        for f in 0..=ny {
            for i in 0..nx {
                let id = f * nx + i;
                let inner = |m: (usize, usize), p: (usize, usize)| -> Option<(usize, usize)> {
                    Some((self.open(m.0, m.1)?, self.open(p.0, p.1)?))
                };
                let pair = if f > 0 && f < ny {
                    inner((i, f - 1), (i, f))
                } else if self.bcs.bottom.is_periodic() {
                    inner((i, ny - 1), (i, 0))
                } else {
                    None
                };
                if let Some((m, p)) = pair {
                    let (tm, tp) = (self.t.get(m), self.t.get(p));
                    let k = harmonic(tm.d22, tp.d22);
                    let c = 0.5 * (tm.d21 + tp.d21);
                    let (mi, mj) = g.coords(m);
                    let (pi, pj) = g.coords(p);
                    let mut l = Lin::ZERO;
                    l.push(p, -k / g.hy);
                    l.push(m, k / g.hy);
                    if c != 0.0 {
                        for d in [self.dx(mi, mj), self.dx(pi, pj)] {
                            for t in 0..d.n {
                                l.push(d.idx[t], -0.5 * c * d.c[t]);
                            }
                            l.constant -= 0.5 * c * d.constant;
                        }
                    }
                    kind[id] = FaceKind::Inner { minus: m, plus: p };
                    adv[id] = c;
                    stencil[id] = l;
                    continue;
                }
                if f > 0 && f < ny {
                    continue;
                }
                let (edge, bc, cj) = if f == 0 { (Edge::Bottom, &self.bcs.bottom, 0) } else { (Edge::Top, &self.bcs.top, ny - 1) };
                let Some(cell) = self.open(i, cj) else { continue };
                let Some(v) = (match bc {
                    BoundaryCondition::Dirichlet(v) => Some(*v),
                    BoundaryCondition::Interface(c) => Some(c.trace[i]),
                    _ => None,
                }) else {
                    continue;
                };
                let t = self.t.get(cell);
                let dtr = self.trace_derivative(bc, i, nx, g.hx, self.bcs.x_periodic());
                let sign = if f == 0 { 1.0 } else { -1.0 };
                let mut l = Lin::ZERO;
                l.push(cell, -sign * 2.0 * t.d22 / g.hy);
                l.constant = sign * 2.0 * t.d22 * v / g.hy - t.d21 * dtr;
                kind[id] = FaceKind::Boundary { cell, edge, node: i };
                adv[id] = t.d21;
                stencil[id] = l;
            }
        }
        Faces { kind, adv, stencil }
    }
}

impl Discretization {
    pub fn new(grid: &StructuredGrid, tensor: &TensorField, mask: &CellMask, bcs: &Boundaries) -> Result<Self> {
        if !mask.matches(grid) {
            return Err(invalid("mask", "size does not match the grid"));
        }
        tensor.validate(grid, mask)?;
        bcs.validate(grid)?;
        let b = Builder { g: grid, t: tensor, mask, bcs };
        let xf = b.x_faces();
        let yf = b.y_faces();
        let n = grid.len();
        let mut tb = TripletBuilder::with_capacity(n, 12 * n);
        let mut offset = alloc::vec![0.0; n];
        let (nx, ny) = (grid.nx, grid.ny);
        let periodic_x = bcs.x_periodic();
        let periodic_y = bcs.y_periodic();
        let mut scatter = |faces: &Faces, id: usize, h: f64| {
            let s = faces.stencil[id];
            let mut add = |row: usize, sign: f64| {
                for t in 0..s.n {
                    tb.push(row, s.idx[t], sign * s.c[t] / h);
                }
                offset[row] += sign * s.constant / h;
            };
            match faces.kind[id] {
                FaceKind::Closed => {}
                FaceKind::Inner { minus, plus } => {
                    add(minus, 1.0);
                    add(plus, -1.0);
                }
                FaceKind::Boundary { cell, edge, .. } => match edge {
                    Edge::Left | Edge::Bottom => add(cell, -1.0),
                    Edge::Right | Edge::Top => add(cell, 1.0),
                },
            }
        };
        for j in 0..ny {
            // A periodic face appears at both ends; count it once.
            let start = usize::from(periodic_x);
            for f in start..=nx {
                scatter(&xf, j * (nx + 1) + f, grid.hx);
            }
        }
        let start = usize::from(periodic_y);
        for f in start..=ny {
            for i in 0..nx {
                scatter(&yf, f * nx + i, grid.hy);
            }
        }
        for k in 0..n {
            if mask.is_blocked(k) {
                tb.push(k, k, 1.0);
            }
        }
        let load = offset.into_iter().map(|o| -o).collect();
        Ok(Discretization {
            grid: *grid,
            mask: mask.clone(),
            bcs: bcs.clone(),
            operator: tb.build(),
            load,
            xf,
            yf,
            symmetric: tensor.is_diagonal(),
        })
    }

    /// Same tensor and mask with new boundary data.
    pub fn with_boundaries(&self, tensor: &TensorField, bcs: &Boundaries) -> Result<Self> {
        Self::new(&self.grid, tensor, &self.mask, bcs)
    }

    pub fn grid(&self) -> &StructuredGrid {
        &self.grid
    }

    pub fn mask(&self) -> &CellMask {
        &self.mask
    }

    pub fn boundaries(&self) -> &Boundaries {
        &self.bcs
    }

    pub fn operator(&self) -> &SparseOperator {
        &self.operator
    }

    /// Boundary-data contribution to the right side of `A u = load + f`.
    pub fn load(&self) -> &[f64] {
        &self.load
    }

    /// True when the operator is symmetric (diagonal tensors everywhere).
    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn apply_bc(&self, rhs: &mut [f64]) {
        for (k, (r, l)) in rhs.iter_mut().zip(&self.load).enumerate() {
            if self.mask.is_blocked(k) {
                *r = 0.0;
            } else {
                *r += l;
            }
        }
    }

    /// Diffusive flux density `-(D grad u) . e_x` on x-face `f` (between
    /// cells `f - 1` and `f`) of row `j`.
    pub fn diffusive_x_flux(&self, f: usize, j: usize, u: &[f64]) -> f64 {
        self.xf.flux(j * (self.grid.nx + 1) + f, u)
    }

    /// Diffusive flux density `-(D grad u) . e_y` on y-face `f` of column `i`.
    pub fn diffusive_y_flux(&self, i: usize, f: usize, u: &[f64]) -> f64 {
        self.yf.flux(f * self.grid.nx + i, u)
    }

    fn advective(&self, faces: &Faces, id: usize, drift: &DriftPolynomial, u: &[f64]) -> f64 {
        let k = faces.adv[id];
        match faces.kind[id] {
            FaceKind::Closed => 0.0,
            FaceKind::Inner { minus, plus } => roe(k, drift, u[minus], u[plus]),
            FaceKind::Boundary { cell, edge, node } => {
                let bc = self.bcs.edge(edge);
                let low_side = matches!(edge, Edge::Left | Edge::Bottom);
                match bc {
                    BoundaryCondition::Interface(c) => {
                        let q = c.advective_flux[node];
                        if low_side {
                            -q
                        } else {
                            q
                        }
                    }
                    BoundaryCondition::Dirichlet(v) => {
                        if low_side {
                            roe(k, drift, *v, u[cell])
                        } else {
                            roe(k, drift, u[cell], *v)
                        }
                    }
                    _ => 0.0,
                }
            }
        }
    }

    /// Advective flux density `-(D G(u)) . e_x` on an x-face.
    pub fn advective_x_flux(&self, f: usize, j: usize, drift: &DriftPolynomial, u: &[f64]) -> f64 {
        self.advective(&self.xf, j * (self.grid.nx + 1) + f, drift, u)
    }

    /// Advective flux density `-(D G(u)) . e_y` on a y-face.
    pub fn advective_y_flux(&self, i: usize, f: usize, drift: &DriftPolynomial, u: &[f64]) -> f64 {
        self.advective(&self.yf, f * self.grid.nx + i, drift, u)
    }

    /// Discrete `div(D G(u))`; zero on obstacle cells.
    pub fn drift_divergence(&self, drift: &DriftPolynomial, u: &[f64]) -> Vec<f64> {
        let g = &self.grid;
        let mut out = alloc::vec![0.0; g.len()];
        if drift.is_zero() {
            return out;
        }
        let (nx, ny) = (g.nx, g.ny);
        let mut scatter = |faces: &Faces, id: usize, h: f64, f: f64| match faces.kind[id] {
            FaceKind::Closed => {}
            FaceKind::Inner { minus, plus } => {
                out[minus] -= f / h;
                out[plus] += f / h;
            }
            FaceKind::Boundary { cell, edge, .. } => match edge {
                Edge::Left | Edge::Bottom => out[cell] += f / h,
                Edge::Right | Edge::Top => out[cell] -= f / h,
            },
        };
        for j in 0..ny {
            for f in usize::from(self.bcs.x_periodic())..=nx {
                let id = j * (nx + 1) + f;
                let flux = self.advective(&self.xf, id, drift, u);
                scatter(&self.xf, id, g.hx, flux);
            }
        }
        for f in usize::from(self.bcs.y_periodic())..=ny {
            for i in 0..nx {
                let id = f * nx + i;
                if self.yf.adv[id] == 0.0 && !matches!(self.yf.kind[id], FaceKind::Boundary { .. }) {
                    continue;
                }
                let flux = self.advective(&self.yf, id, drift, u);
                scatter(&self.yf, id, g.hy, flux);
            }
        }
        out
    }

    /// Largest explicit drift step that keeps the upwind update monotone
    /// for values in `[lo, hi]`.
    pub fn cfl_limit(&self, drift: &DriftPolynomial, lo: f64, hi: f64) -> f64 {
        let gp = drift.max_abs_derivative(lo, hi);
        let peak = |f: &Faces| {
            f.kind
                .iter()
                .zip(&f.adv)
                .filter(|(k, _)| !matches!(k, FaceKind::Closed))
                .fold(0.0_f64, |m, (_, a)| m.max(a.abs()))
        };
        let rate = gp * (peak(&self.xf) / self.grid.hx + peak(&self.yf) / self.grid.hy);
        if rate > 0.0 {
            1.0 / rate
        } else {
            f64::INFINITY
        }
    }

    /// Total flux `J . e_x` integrated over x-face line `f`, with the
    /// diffusive part taken from `u_diff` and the advective part from
    /// `u_adv`.
    pub fn x_line_flux(&self, f: usize, drift: &DriftPolynomial, u_diff: &[f64], u_adv: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..self.grid.ny {
            s += self.diffusive_x_flux(f, j, u_diff) + self.advective_x_flux(f, j, drift, u_adv);
        }
        s * self.grid.hy
    }

    /// Total flux `J . e_y` integrated over y-face line `f`.
    pub fn y_line_flux(&self, f: usize, drift: &DriftPolynomial, u_diff: &[f64], u_adv: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.grid.nx {
            s += self.diffusive_y_flux(i, f, u_diff) + self.advective_y_flux(i, f, drift, u_adv);
        }
        s * self.grid.hx
    }

    pub fn edge_fluxes(&self, drift: &DriftPolynomial, u_diff: &[f64], u_adv: &[f64]) -> EdgeFluxes {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        EdgeFluxes {
            left: self.x_line_flux(0, drift, u_diff, u_adv),
            right: self.x_line_flux(nx, drift, u_diff, u_adv),
            bottom: self.y_line_flux(0, drift, u_diff, u_adv),
            top: self.y_line_flux(ny, drift, u_diff, u_adv),
        }
    }
}

/// Murman-Roe upwind value of the face flux `-k g(u)`.
fn roe(k: f64, drift: &DriftPolynomial, ul: f64, ur: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    let fl = -k * drift.eval(ul);
    let fr = -k * drift.eval(ur);
    let du = ur - ul;
    let speed = if du.abs() > 1e-14 * (1.0 + ul.abs().max(ur.abs())) {
        (fr - fl) / du
    } else {
        -k * drift.derivative(0.5 * (ul + ur))
    };
    if speed >= 0.0 {
        fl
    } else {
        fr
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Tensor2;

    fn unit(nx: usize, ny: usize) -> StructuredGrid {
        StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), nx, ny).unwrap()
    }

    #[test]
    fn constants_are_in_the_neumann_null_space() {
        let g = unit(3, 3);
        let d = assemble_diffusion(
            &g,
            &TensorField::uniform(&g, Tensor2::IDENTITY),
            &CellMask::empty(&g),
            &Boundaries::all(BoundaryCondition::ZeroFlux),
        )
        .unwrap();
        for s in d.operator().row_sums() {
            assert!(s.abs() < 1e-12);
        }
        for s in d.operator().column_sums() {
            assert!(s.abs() < 1e-12);
        }
        assert!(d.operator().is_symmetric(1e-14));
    }

    #[test]
    fn cross_terms_keep_column_sums_zero() {
        let g = unit(6, 5);
        let t = TensorField::uniform(&g, Tensor2::new(1.0, 0.3, -0.2, 2.0));
        let mask = CellMask::from_fn(&g, |i, j| i == 2 && j == 2);
        let d = assemble_diffusion(&g, &t, &mask, &Boundaries::all(BoundaryCondition::ZeroFlux)).unwrap();
        let cs = d.operator().column_sums();
        for k in 0..g.len() {
            if mask.is_open(k) {
                assert!(cs[k].abs() < 1e-11, "column {k}: {}", cs[k]);
            }
        }
    }

    #[test]
    fn inadmissible_tensor_is_rejected() {
        let g = unit(3, 3);
        let t = TensorField::uniform(&g, Tensor2::new(1.0, 2.0, 2.0, 1.0));
        let r = assemble_diffusion(&g, &t, &CellMask::empty(&g), &Boundaries::strip(0.0, 1.0));
        assert!(matches!(r, Err(crate::Error::InvalidTensor { .. })));
    }

    #[test]
    fn interface_flux_is_prescribed() {
        let g = unit(4, 2);
        let mut b = Boundaries::strip(0.0, 0.0);
        b.right = BoundaryCondition::Interface(crate::InterfaceCoupling::new(
            alloc::vec![0.0, 0.0],
            alloc::vec![0.5, 0.5],
        ));
        let d = assemble_diffusion(&g, &TensorField::uniform(&g, Tensor2::IDENTITY), &CellMask::empty(&g), &b)
            .unwrap();
        let drift = DriftPolynomial::dimensionless(alloc::vec![1.0]).unwrap();
        let u = alloc::vec![0.0; 8];
        let div = d.drift_divergence(&drift, &u);
        // 0.5 leaves through the right face of the last column
        assert!((div[3] + 0.5 / g.hx).abs() < 1e-14);
        assert!((d.advective_x_flux(4, 0, &drift, &u) - 0.5).abs() < 1e-15);
    }
}
