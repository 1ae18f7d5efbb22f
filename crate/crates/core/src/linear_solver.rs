//! Jacobi-preconditioned Krylov solvers.
//!
//! All reductions run sequentially in index order, so a given input always
//! produces bitwise-identical iterates.

use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::{dot, norm2};
use crate::sparse::SparseOperator;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub rel_tolerance: f64,
    pub abs_tolerance: f64,
    /// Iteration cap; `None` means `10 n`.
    pub max_iterations: Option<usize>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig { rel_tolerance: 1e-10, abs_tolerance: 1e-14, max_iterations: None }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tolerance > 0.0 && self.abs_tolerance > 0.0) {
            return Err(invalid("solver tolerance", "tolerances must be positive"));
        }
        Ok(())
    }

    fn cap(&self, n: usize) -> usize {
        self.max_iterations.unwrap_or(10 * n.max(1))
    }

    fn target(&self, b_norm: f64) -> f64 {
        self.rel_tolerance * b_norm + self.abs_tolerance
    }
}

/// Solution vector with the residual `||b - A x||_2` recomputed at exit.
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn inverse_diagonal(a: &SparseOperator) -> Vec<f64> {
    a.diagonal().into_iter().map(|d| if d != 0.0 { 1.0 / d } else { 1.0 }).collect()
}

fn residual(a: &SparseOperator, x: &[f64], b: &[f64], r: &mut [f64]) {
    a.apply(x, r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
}

fn check_dims(a: &SparseOperator, b: &[f64], x0: Option<&[f64]>) -> Result<()> {
    if b.len() != a.dim() || x0.is_some_and(|x| x.len() != a.dim()) {
        return Err(invalid("linear system", "dimension mismatch"));
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(invalid("linear system", "right-hand side is not finite"));
    }
    Ok(())
}

/// Restricts the zero-mean projection to a subset of unknowns.
struct Projector<'a> {
    active: &'a [bool],
    count: f64,
}

impl Projector<'_> {
    fn project(&self, v: &mut [f64]) {
        let mut s = 0.0;
        for (vi, a) in v.iter().zip(self.active) {
            if *a {
                s += vi;
            }
        }
        let m = s / self.count;
        for (vi, a) in v.iter_mut().zip(self.active) {
            if *a {
                *vi -= m;
            }
        }
    }
}

/// Conjugate gradients for symmetric positive definite `A`.
pub fn solve_spd(a: &SparseOperator, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cg(a, b, None, None, cfg)
}

/// As [`solve_spd`], starting from `x0`.
pub fn solve_spd_from(a: &SparseOperator, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    cg(a, b, Some(x0), None, cfg)
}

/// Conjugate gradients for a symmetric positive semidefinite `A` whose null
/// space is the constant vector on the `active` unknowns. The right side is
/// projected to zero mean on `active`, and so is the returned solution.
/// Inactive unknowns must be decoupled from the active ones.
pub fn solve_spd_zero_mean(a: &SparseOperator, b: &[f64], active: &[bool], cfg: &SolverConfig) -> Result<Solution> {
    if active.len() != a.dim() {
        return Err(invalid("linear system", "active mask has wrong length"));
    }
    let count = active.iter().filter(|v| **v).count();
    if count == 0 {
        return Err(Error::EmptyInput("no active unknowns"));
    }
    let p = Projector { active, count: count as f64 };
    cg(a, b, None, Some(&p), cfg)
}

fn cg(
    a: &SparseOperator,
    b: &[f64],
    x0: Option<&[f64]>,
    proj: Option<&Projector<'_>>,
    cfg: &SolverConfig,
) -> Result<Solution> {
    cfg.validate()?;
    check_dims(a, b, x0)?;
    let n = a.dim();
    let mut b = b.to_vec();
    if let Some(p) = proj {
        p.project(&mut b);
    }
    let target = cfg.target(norm2(&b));
    let cap = cfg.cap(n);
    let minv = inverse_diagonal(a);
    let mut x = x0.map_or_else(|| alloc::vec![0.0; n], <[f64]>::to_vec);
    if let Some(p) = proj {
        p.project(&mut x);
    }
    let mut r = alloc::vec![0.0; n];
    let mut z = alloc::vec![0.0; n];
    let mut q = alloc::vec![0.0; n];
    let mut iterations = 0;

    // The outer loop restarts from the true residual if the recurrence
    // drifted below the target while the real residual did not.
    loop {
        residual(a, &x, &b, &mut r);
        if let Some(p) = proj {
            p.project(&mut r);
        }
        let mut rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(Solution { x, iterations, residual: rnorm });
        }
        if iterations >= cap {
            return Err(Error::NotConverged { iterations, residual: rnorm, target });
        }
        for i in 0..n {
            z[i] = minv[i] * r[i];
        }
        if let Some(p) = proj {
            p.project(&mut z);
        }
        let mut pdir = z.clone();
        let mut rz = dot(&r, &z);
        while iterations < cap {
            a.apply(&pdir, &mut q);
            let pq = dot(&pdir, &q);
            if !(pq.is_finite()) || pq <= 0.0 {
                if rnorm <= target {
                    break;
                }
                return Err(Error::Breakdown("non-positive curvature in conjugate gradients"));
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * pdir[i];
                r[i] -= alpha * q[i];
            }
            iterations += 1;
            rnorm = norm2(&r);
            if rnorm <= target {
                break;
            }
            for i in 0..n {
                z[i] = minv[i] * r[i];
            }
            if let Some(p) = proj {
                p.project(&mut z);
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                pdir[i] = z[i] + beta * pdir[i];
            }
        }
        if let Some(p) = proj {
            p.project(&mut x);
        }
        // Converged in the recurrence or hit the cap; the loop head checks the
        // true residual and decides.
        if iterations >= cap {
            residual(a, &x, &b, &mut r);
            if let Some(p) = proj {
                p.project(&mut r);
            }
            let res = norm2(&r);
            if res <= target {
                return Ok(Solution { x, iterations, residual: res });
            }
            return Err(Error::NotConverged { iterations, residual: res, target });
        }
    }
}

/// Right-preconditioned BiCGSTAB for general nonsingular `A`.
pub fn solve_general(a: &SparseOperator, b: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    bicgstab(a, b, None, cfg)
}

/// As [`solve_general`], starting from `x0`.
pub fn solve_general_from(a: &SparseOperator, b: &[f64], x0: &[f64], cfg: &SolverConfig) -> Result<Solution> {
    bicgstab(a, b, Some(x0), cfg)
}

fn bicgstab(a: &SparseOperator, b: &[f64], x0: Option<&[f64]>, cfg: &SolverConfig) -> Result<Solution> {
    cfg.validate()?;
    check_dims(a, b, x0)?;
    let n = a.dim();
    let target = cfg.target(norm2(b));
    let cap = cfg.cap(n);
    let minv = inverse_diagonal(a);
    let mut x = x0.map_or_else(|| alloc::vec![0.0; n], <[f64]>::to_vec);
    let mut r = alloc::vec![0.0; n];
    let mut p = alloc::vec![0.0; n];
    let mut v = alloc::vec![0.0; n];
    let mut s = alloc::vec![0.0; n];
    let mut t = alloc::vec![0.0; n];
    let mut ph = alloc::vec![0.0; n];
    let mut sh = alloc::vec![0.0; n];
    let mut iterations = 0;
    let mut restarts = 0;

    loop {
        residual(a, &x, b, &mut r);
        let rnorm = norm2(&r);
        if rnorm <= target {
            return Ok(Solution { x, iterations, residual: rnorm });
        }
        if iterations >= cap {
            return Err(Error::NotConverged { iterations, residual: rnorm, target });
        }
        let rhat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0_f64, 1.0_f64, 1.0_f64);
        p.iter_mut().for_each(|e| *e = 0.0);
        v.iter_mut().for_each(|e| *e = 0.0);
        let mut broke = false;
        while iterations < cap {
            let rho_new = dot(&rhat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                broke = true;
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
                ph[i] = minv[i] * p[i];
            }
            a.apply(&ph, &mut v);
            let rv = dot(&rhat, &v);
            if rv == 0.0 || !rv.is_finite() {
                broke = true;
                break;
            }
            alpha = rho / rv;
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            iterations += 1;
            if norm2(&s) <= target {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                break;
            }
            for i in 0..n {
                sh[i] = minv[i] * s[i];
            }
            a.apply(&sh, &mut t);
            let tt = dot(&t, &t);
            if tt == 0.0 || !tt.is_finite() {
                for i in 0..n {
                    x[i] += alpha * ph[i];
                }
                broke = true;
                break;
            }
            omega = dot(&t, &s) / tt;
            for i in 0..n {
                x[i] += alpha * ph[i] + omega * sh[i];
                r[i] = s[i] - omega * t[i];
            }
            if norm2(&r) <= target {
                break;
            }
            if omega == 0.0 {
                broke = true;
                break;
            }
        }
        if x.iter().any(|e| !e.is_finite()) {
            return Err(Error::Breakdown("non-finite iterate in BiCGSTAB"));
        }
        if broke {
            restarts += 1;
            if restarts > 20 {
                return Err(Error::Breakdown("repeated BiCGSTAB breakdown"));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lap1d(n: usize) -> SparseOperator {
        let mut rows = alloc::vec![alloc::vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = 2.0;
            if i > 0 {
                rows[i][i - 1] = -1.0;
            }
            if i + 1 < n {
                rows[i][i + 1] = -1.0;
            }
        }
        SparseOperator::from_dense(&rows)
    }

    #[test]
    fn identity_converges_in_one_step() {
        let a = SparseOperator::identity(4);
        let b = [1.0, -2.0, 3.0, 0.5];
        let s = solve_spd(&a, &b, &SolverConfig::default()).unwrap();
        assert_eq!(s.x, b.to_vec());
        assert!(s.iterations <= 1);
    }

    #[test]
    fn tridiagonal_matches_closed_form() {
        // Inverse of the n=5 Dirichlet Laplacian: (A^-1)_{ij} = min(i,j)(n+1-max(i,j))/(n+1).
        let a = lap1d(5);
        let s = solve_spd(&a, &[0.0, 0.0, 1.0, 0.0, 0.0], &SolverConfig::default()).unwrap();
        let expect = [0.5, 1.0, 1.5, 1.0, 0.5];
        for (x, e) in s.x.iter().zip(expect) {
            assert!((x - e).abs() < 1e-12);
        }
    }

    #[test]
    fn too_few_iterations_is_reported() {
        let a = lap1d(50);
        let b = alloc::vec![1.0; 50];
        let cfg = SolverConfig { max_iterations: Some(3), ..SolverConfig::default() };
        assert!(matches!(solve_spd(&a, &b, &cfg), Err(Error::NotConverged { iterations: 3, .. })));
    }

    #[test]
    fn upper_triangular_bicgstab() {
        let a = SparseOperator::from_dense(&[
            alloc::vec![2.0, 1.0, -1.0],
            alloc::vec![0.0, 3.0, 2.0],
            alloc::vec![0.0, 0.0, 4.0],
        ]);
        let s = solve_general(&a, &[1.0, 2.0, 8.0], &SolverConfig::default()).unwrap();
        // back-substitution: x3 = 2, x2 = (2 - 4)/3, x1 = (1 - x2 + x3)/2
        let x3 = 2.0;
        let x2 = (2.0 - 2.0 * x3) / 3.0;
        let x1 = (1.0 - x2 + x3) / 2.0;
        for (x, e) in s.x.iter().zip([x1, x2, x3]) {
            assert!((x - e).abs() < 1e-12);
        }
    }
}
