use proptest::prelude::*;

use membrane_core::boundary::{BoundaryCondition, Boundaries};
use membrane_core::cell_problem::{solve_cell_functions, CellProblemSpec};
use membrane_core::discretization::Discretization;
use membrane_core::drift::DriftPolynomial;
use membrane_core::geometry::{rasterize_in_cells, MicrostructureSpec, Rect};
use membrane_core::grid::{CellMask, StructuredGrid, Tensor2, TensorField};
use membrane_core::linear_solver::{solve_general, solve_spd, SolverConfig};
use membrane_core::sparse::TripletBuilder;
use membrane_core::transport::ImexStepper;

fn unit_grid(nx: usize, ny: usize) -> StructuredGrid {
    StructuredGrid::covering((0.0, 1.0), (0.0, 1.0), nx, ny).unwrap()
}

fn field(grid: &StructuredGrid, vals: &[f64]) -> Vec<f64> {
    (0..grid.len()).map(|k| vals[k % vals.len()]).collect()
}

fn diagonal_field(grid: &StructuredGrid, d: &[(f64, f64)]) -> TensorField {
    TensorField { values: (0..grid.len()).map(|k| Tensor2::diagonal(d[k % d.len()].0, d[k % d.len()].1)).collect() }
}

prop_compose! {
    fn grid_dims()(nx in 3usize..9, ny in 3usize..9) -> (usize, usize) { (nx, ny) }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn closed_systems_conserve_mass(
        (nx, ny) in grid_dims(),
        d in prop::collection::vec((0.1f64..2.0, 0.1f64..2.0), 1..7),
        cross in -0.05f64..0.05,
        u0 in prop::collection::vec(0.0f64..1.0, 1..13),
        b in 0.0f64..3.0,
        periodic in any::<bool>(),
        blocked in prop::collection::vec(any::<bool>(), 0..4),
    ) {
        let grid = unit_grid(nx, ny);
        let mut mask = CellMask::empty(&grid);
        for (k, flag) in blocked.iter().enumerate() {
            // a few isolated cells in the interior
            mask.set(grid.index(1 + k % (nx - 2), 1 + k % (ny - 2)), *flag && k % 2 == 0);
        }
        let tensor = TensorField {
            values: (0..grid.len()).map(|k| {
                let (a, c) = d[k % d.len()];
                Tensor2::new(a, cross * a.min(c), cross * a.min(c), c)
            }).collect(),
        }.masked(&mask);
        let side = if periodic { BoundaryCondition::Periodic } else { BoundaryCondition::ZeroFlux };
        let bcs = Boundaries { left: BoundaryCondition::ZeroFlux, right: BoundaryCondition::ZeroFlux, bottom: side.clone(), top: side };
        let disc = Discretization::new(&grid, &tensor, &mask, &bcs).unwrap();
        let drift = DriftPolynomial::dimensionless(vec![-b, b]).unwrap();
        let u: Vec<f64> = field(&grid, &u0).iter().enumerate().map(|(k, v)| if mask.is_open(k) { *v } else { 0.0 }).collect();
        let source = vec![0.0; grid.len()];
        let probe = ImexStepper::new(&disc, &drift, &source, 1.0, SolverConfig::default()).unwrap();
        let dt = 0.5 * probe.cfl_limit(&u).min(1.0);
        let stepper = ImexStepper::new(&disc, &drift, &source, dt, SolverConfig::default()).unwrap();
        let out = stepper.step(&u, 0.0).unwrap();
        prop_assert!(out.record.mass_residual <= out.record.residual_bound, "{:?}", out.record);
        prop_assert!(out.record.fluxes.net_outflow().abs() < 1e-12);
        let col = disc.operator().column_sums();
        prop_assert!(col.iter().enumerate().all(|(k, s)| mask.is_blocked(k) || s.abs() < 1e-9));
    }

    #[test]
    fn logistic_drift_keeps_values_in_the_unit_interval(
        (nx, ny) in grid_dims(),
        d in prop::collection::vec((0.1f64..2.0, 0.1f64..2.0), 1..5),
        u0 in prop::collection::vec(0.0f64..=1.0, 1..13),
        b in 0.0f64..60.0,
        ul in 0.0f64..=1.0,
        ur in 0.0f64..=1.0,
    ) {
        let grid = unit_grid(nx, ny);
        let disc = Discretization::new(&grid, &diagonal_field(&grid, &d), &CellMask::empty(&grid), &Boundaries::strip(ul, ur)).unwrap();
        let drift = DriftPolynomial::dimensionless(vec![-b, b]).unwrap();
        let source = vec![0.0; grid.len()];
        let mut u = field(&grid, &u0);
        let dt = disc.cfl_limit(&drift, 0.0, 1.0).min(0.1);
        let stepper = ImexStepper::new(&disc, &drift, &source, dt, SolverConfig::default()).unwrap();
        for s in 0..5 {
            u = stepper.step(&u, s as f64 * dt).unwrap().u;
            prop_assert!(u.iter().all(|v| *v >= -1e-9 && *v <= 1.0 + 1e-9), "{u:?}");
        }
    }

    #[test]
    fn pure_diffusion_obeys_the_maximum_principle(
        (nx, ny) in grid_dims(),
        d in prop::collection::vec((0.1f64..2.0, 0.1f64..2.0), 1..5),
        u0 in prop::collection::vec(-1.0f64..1.0, 1..13),
        ul in -1.0f64..1.0,
        ur in -1.0f64..1.0,
        dt in 1e-3f64..1.0,
    ) {
        let grid = unit_grid(nx, ny);
        let disc = Discretization::new(&grid, &diagonal_field(&grid, &d), &CellMask::empty(&grid), &Boundaries::strip(ul, ur)).unwrap();
        let source = vec![0.0; grid.len()];
        let none = DriftPolynomial::zero();
        let stepper = ImexStepper::new(&disc, &none, &source, dt, SolverConfig::default()).unwrap();
        let mut u = field(&grid, &u0);
        for s in 0..3 {
            let (lo, hi) = stepper.value_range(&u);
            u = stepper.step(&u, s as f64 * dt).unwrap().u;
            prop_assert!(u.iter().all(|v| *v >= lo - 1e-9 && *v <= hi + 1e-9));
        }
    }

    #[test]
    fn centered_obstacles_rasterize_symmetrically(
        wf in 0.1f64..0.9,
        hf in 0.1f64..0.9,
        na in 4usize..20,
        nb in 4usize..20,
        disk in any::<bool>(),
    ) {
        let (nx, ny) = (2 * na, 2 * nb);
        let grid = unit_grid(nx, ny);
        let micro = if disk {
            MicrostructureSpec::Disk { diameter_fraction: wf }
        } else {
            MicrostructureSpec::Rectangle { width_fraction: wf, height_fraction: hf }
        };
        let cell = Rect { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        let Ok(mask) = rasterize_in_cells(&[cell], &micro, &grid) else { return Ok(()) };
        for j in 0..ny {
            for i in 0..nx {
                let here = mask.is_blocked(grid.index(i, j));
                prop_assert_eq!(here, mask.is_blocked(grid.index(nx - 1 - i, j)));
                prop_assert_eq!(here, mask.is_blocked(grid.index(i, ny - 1 - j)));
            }
        }
    }

    #[test]
    fn solver_residual_respects_the_bound(
        n in 2usize..30,
        off in prop::collection::vec(-1.0f64..1.0, 1..40),
        rhs in prop::collection::vec(-10.0f64..10.0, 1..40),
        skew in -0.5f64..0.5,
    ) {
        let mut t = TripletBuilder::new(n);
        let mut u = TripletBuilder::new(n);
        for i in 0..n {
            let a = off[i % off.len()];
            t.push(i, i, 2.5 + a.abs());
            u.push(i, i, 2.5 + a.abs());
            if i + 1 < n {
                t.push(i, i + 1, a);
                t.push(i + 1, i, a);
                u.push(i, i + 1, a + skew);
                u.push(i + 1, i, a - skew);
            }
        }
        let (spd, gen) = (t.build(), u.build());
        let b: Vec<f64> = (0..n).map(|i| rhs[i % rhs.len()]).collect();
        let cfg = SolverConfig::default();
        let bn = b.iter().map(|v| v * v).sum::<f64>().sqrt();
        let bound = cfg.rel_tolerance * bn + cfg.abs_tolerance;
        for (a, sol) in [(&spd, solve_spd(&spd, &b, &cfg).unwrap()), (&gen, solve_general(&gen, &b, &cfg).unwrap())] {
            let ax = a.mul_vec(&sol.x);
            let r = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
            prop_assert!(r <= bound);
            prop_assert!((r - sol.residual).abs() <= 1e-12 * (1.0 + bn));
        }
        // bitwise determinism
        prop_assert_eq!(solve_spd(&spd, &b, &cfg).unwrap().x, solve_spd(&spd, &b, &cfg).unwrap().x);
        prop_assert_eq!(solve_general(&gen, &b, &cfg).unwrap().x, solve_general(&gen, &b, &cfg).unwrap().x);
    }

    #[test]
    fn layered_cells_sit_between_the_mean_bounds(
        layers in prop::collection::vec(0.1f64..5.0, 2..6),
        delta in 1e-3f64..1.0,
    ) {
        let n = 24;
        let m = layers.len();
        let spec = CellProblemSpec::with_tensor(n, n, None, delta, |_, y| {
            let k = ((y * m as f64) as usize).min(m - 1);
            Tensor2::diagonal(1.0, layers[k])
        }).unwrap();
        let sol = solve_cell_functions(&spec).unwrap();
        let grid = spec.grid;
        let vals: Vec<f64> = (0..grid.ny).map(|j| spec.tensor.get(grid.index(0, j)).d22).collect();
        let arith = vals.iter().sum::<f64>() / vals.len() as f64;
        let harm = vals.len() as f64 / vals.iter().map(|v| 1.0 / v).sum::<f64>();
        let d22 = sol.effective.d22;
        prop_assert!(d22 >= harm * (1.0 - 1e-6) && d22 <= arith * (1.0 + 1e-6), "{harm} {d22} {arith}");
        // the face-harmonic scheme reproduces the discrete harmonic mean of the faces
        let faces: Vec<f64> = (0..grid.ny).map(|f| {
            let (a, b) = (vals[(f + grid.ny - 1) % grid.ny], vals[f]);
            2.0 * a * b / (a + b)
        }).collect();
        let face_harm = faces.len() as f64 / faces.iter().map(|v| 1.0 / v).sum::<f64>();
        prop_assert!((d22 - face_harm).abs() < 1e-7 * face_harm);
    }
}
