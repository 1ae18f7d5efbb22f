//! Dense reference computations for the assembled operators and solvers.

use membrane_core::boundary::{BoundaryCondition, Boundaries};
use membrane_core::discretization::{assemble_diffusion, drift_divergence};
use membrane_core::drift::DriftPolynomial;
use membrane_core::grid::{CellMask, StructuredGrid, Tensor2, TensorField};
use membrane_core::linear_solver::{solve_general, solve_spd, solve_spd_zero_mean, SolverConfig};
use membrane_core::sparse::SparseOperator;
use membrane_core::transport::ImexStepper;

fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn upwind(k: f64, g: &DriftPolynomial, ul: f64, ur: f64) -> f64 {
    let (fl, fr) = (-k * g.eval(ul), -k * g.eval(ur));
    let speed = if ur != ul { (fr - fl) / (ur - ul) } else { -k * g.derivative(ul) };
    if speed >= 0.0 {
        fl
    } else {
        fr
    }
}

#[test]
fn imex_step_matches_dense_elimination() {
    let (nx, ny) = (8, 8);
    let grid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), nx, ny).unwrap();
    let (a, c) = (1.3, 0.4);
    let (ul, ur) = (0.2, 0.9);
    let dt = 2e-3;
    let g = DriftPolynomial::dimensionless(vec![2.0, -2.0]).unwrap();
    let u0: Vec<f64> = (0..grid.len()).map(|k| 0.5 + 0.4 * ((k * 7 % 11) as f64 / 11.0 - 0.5)).collect();
    let source: Vec<f64> = (0..grid.len()).map(|k| 0.1 * (k % 3) as f64).collect();

    let n = grid.len();
    let (hx, hy) = (grid.hx, grid.hy);
    let mut m = vec![vec![0.0; n]; n];
    let mut rhs: Vec<f64> = (0..n).map(|k| u0[k] / dt + source[k]).collect();
    for j in 0..ny {
        for i in 0..nx {
            let p = grid.index(i, j);
            m[p][p] += 1.0 / dt;
            for (di, dj, coef) in [(-1i64, 0i64, a / (hx * hx)), (1, 0, a / (hx * hx)), (0, -1, c / (hy * hy)), (0, 1, c / (hy * hy))] {
                let (ii, jj) = (i as i64 + di, j as i64 + dj);
                if jj < 0 || jj >= ny as i64 {
                    continue;
                }
                if ii < 0 || ii >= nx as i64 {
                    let v = if ii < 0 { ul } else { ur };
                    m[p][p] += 2.0 * coef;
                    rhs[p] += 2.0 * coef * v;
                    continue;
                }
                let q = grid.index(ii as usize, jj as usize);
                m[p][p] += coef;
                m[p][q] -= coef;
            }
        }
        // upwind fluxes on the x-faces of row j, boundary values included
        for f in 0..=nx {
            let left = if f == 0 { ul } else { u0[grid.index(f - 1, j)] };
            let right = if f == nx { ur } else { u0[grid.index(f, j)] };
            let flux = upwind(a, &g, left, right);
            if f > 0 {
                rhs[grid.index(f - 1, j)] -= flux / hx;
            }
            if f < nx {
                rhs[grid.index(f, j)] += flux / hx;
            }
        }
    }
    let expect = dense_solve(m, rhs);

    let disc = assemble_diffusion(
        &grid,
        &TensorField::uniform(&grid, Tensor2::diagonal(a, c)),
        &CellMask::empty(&grid),
        &Boundaries::strip(ul, ur),
    )
    .unwrap();
    let solver = SolverConfig { rel_tolerance: 1e-15, abs_tolerance: 1e-15, max_iterations: None };
    let out = ImexStepper::new(&disc, &g, &source, dt, solver).unwrap().step(&u0, 0.0).unwrap();
    let err = out.u.iter().zip(&expect).fold(0.0_f64, |e, (x, y)| e.max((x - y).abs()));
    assert!(err < 1e-12, "max deviation {err:e}");
    assert!(out.record.mass_residual <= out.record.residual_bound);
}

#[test]
fn quadratic_is_reproduced_in_the_interior() {
    let n = 12;
    let grid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), n, n).unwrap();
    let disc = assemble_diffusion(
        &grid,
        &TensorField::uniform(&grid, Tensor2::diagonal(2.0, 3.0)),
        &CellMask::empty(&grid),
        &Boundaries::all(BoundaryCondition::Dirichlet(0.0)),
    )
    .unwrap();
    let u: Vec<f64> = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            let (x, y) = grid.center(i, j);
            x * x + y * y
        })
        .collect();
    let au = disc.operator().mul_vec(&u);
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            assert!((au[grid.index(i, j)] + 10.0).abs() < 1e-9);
        }
    }
}

#[test]
fn mixed_derivative_of_a_bilinear_field() {
    let n = 12;
    let grid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), n, n).unwrap();
    let disc = assemble_diffusion(
        &grid,
        &TensorField::uniform(&grid, Tensor2::new(1.0, 0.05, 0.05, 1.0)),
        &CellMask::empty(&grid),
        &Boundaries::all(BoundaryCondition::Dirichlet(0.0)),
    )
    .unwrap();
    let u: Vec<f64> = (0..grid.len())
        .map(|k| {
            let (i, j) = grid.coords(k);
            let (x, y) = grid.center(i, j);
            x * y
        })
        .collect();
    let au = disc.operator().mul_vec(&u);
    for j in 2..n - 2 {
        for i in 2..n - 2 {
            assert!((au[grid.index(i, j)] + 0.1).abs() < 1e-9, "{}", au[grid.index(i, j)]);
        }
    }
}

#[test]
fn upwind_divergence_of_a_step() {
    let grid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), 4, 1).unwrap();
    let disc = assemble_diffusion(
        &grid,
        &TensorField::uniform(&grid, Tensor2::IDENTITY),
        &CellMask::empty(&grid),
        &Boundaries::all(BoundaryCondition::ZeroFlux),
    )
    .unwrap();
    let g = DriftPolynomial::dimensionless(vec![1.0]).unwrap();
    let div = drift_divergence(&disc, &g, &[0.0, 0.0, 1.0, 1.0]);
    let expect = [0.0, 4.0, 0.0, -4.0];
    for (d, e) in div.iter().zip(expect) {
        assert!((d - e).abs() < 1e-12, "{div:?}");
    }
    assert!(div.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn zero_mean_solution_matches_pseudo_inverse() {
    let grid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), 4, 4).unwrap();
    let disc = assemble_diffusion(
        &grid,
        &TensorField::uniform(&grid, Tensor2::IDENTITY),
        &CellMask::empty(&grid),
        &Boundaries::all(BoundaryCondition::ZeroFlux),
    )
    .unwrap();
    let a = disc.operator();
    let n = a.dim();
    let mut b: Vec<f64> = (0..n).map(|k| ((k * 5 % 7) as f64) - 3.0).collect();
    let mean = b.iter().sum::<f64>() / n as f64;
    b.iter_mut().for_each(|v| *v -= mean);
    // (A + 11^T / n) x = b has the zero-mean least-squares solution.
    let mut dense = a.to_dense();
    for row in &mut dense {
        for v in row.iter_mut() {
            *v += 1.0 / n as f64;
        }
    }
    let expect = dense_solve(dense, b.clone());
    let cfg = SolverConfig { rel_tolerance: 1e-14, ..SolverConfig::default() };
    let got = solve_spd_zero_mean(a, &b, &vec![true; n], &cfg).unwrap();
    for (x, y) in got.x.iter().zip(&expect) {
        assert!((x - y).abs() < 1e-11);
    }
    assert!(got.x.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn bicgstab_agrees_with_cg_on_symmetric_input() {
    let grid = StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), 10, 10).unwrap();
    let disc = assemble_diffusion(
        &grid,
        &TensorField::uniform(&grid, Tensor2::diagonal(1.0, 0.3)),
        &CellMask::empty(&grid),
        &Boundaries::strip(0.0, 1.0),
    )
    .unwrap();
    let mut b = vec![1.0; grid.len()];
    disc.apply_bc(&mut b);
    let cfg = SolverConfig::default();
    let x = solve_spd(disc.operator(), &b, &cfg).unwrap().x;
    let y = solve_general(disc.operator(), &b, &cfg).unwrap().x;
    assert!(x.iter().zip(&y).all(|(p, q)| (p - q).abs() < 1e-9));
}

#[test]
fn advection_dominated_system_meets_the_residual_bound() {
    let n = 40;
    let h = 1.0 / n as f64;
    let (eps, v) = (1e-3, 1.0);
    let mut rows = vec![vec![0.0; n]; n];
    for i in 0..n {
        rows[i][i] = 2.0 * eps / (h * h) + v / h;
        if i > 0 {
            rows[i][i - 1] = -eps / (h * h) - v / h;
        }
        if i + 1 < n {
            rows[i][i + 1] = -eps / (h * h);
        }
    }
    let a = SparseOperator::from_dense(&rows);
    let b = vec![1.0; n];
    let cfg = SolverConfig::default();
    let sol = solve_general(&a, &b, &cfg).unwrap();
    let expect = dense_solve(rows, b.clone());
    let bn = (n as f64).sqrt();
    assert!(sol.residual <= cfg.rel_tolerance * bn + cfg.abs_tolerance);
    let scale = expect.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    assert!(sol.x.iter().zip(&expect).all(|(p, q)| (p - q).abs() < 1e-6 * scale));
}
