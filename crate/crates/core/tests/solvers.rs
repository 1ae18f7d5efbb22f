use std::f64::consts::PI;

use membrane_core::cell_problem::{
    effective_tensor, solve_cell_functions, sweep_delta, sweep_eta, AveragingMode, CellProblemSpec,
};
use membrane_core::drift::DriftPolynomial;
use membrane_core::error::Error;
use membrane_core::geometry::{nondimensionalize, MicrostructureSpec, PhysicalGeometry};
use membrane_core::grid::{Tensor2, TensorField};
use membrane_core::linear_solver::SolverConfig;
use membrane_core::micro_solver::{MicroProblem, Physics};
use membrane_core::thin_membrane::{run_thin, MembraneState, Side, ThinMembraneProblem, ThinNumerics, ThinSystem};
use membrane_core::transport::RunConfig;

fn rect() -> MicrostructureSpec {
    MicrostructureSpec::Rectangle { width_fraction: 0.5, height_fraction: 0.5 }
}

fn two_layer(n: usize, delta: f64) -> CellProblemSpec {
    CellProblemSpec::with_tensor(n, n, None, delta, |_, y| Tensor2::diagonal(1.0, if y < 0.5 { 1.0 } else { 2.0 })).unwrap()
}

#[test]
fn two_layer_cell_gives_the_harmonic_mean_for_every_delta() {
    for delta in [1e-3, 0.03, 1.0] {
        let sol = solve_cell_functions(&two_layer(32, delta)).unwrap();
        assert!((sol.effective.d22 - 4.0 / 3.0).abs() < 1e-8, "{}", sol.effective.d22);
        // slopes 1 + w2' = (4/3) / D22
        let g = sol.grid;
        let (i, j_lo, j_hi) = (5, 4, 24);
        let slope_lo = (sol.w2[g.index(i, j_lo + 1)] - sol.w2[g.index(i, j_lo)]) / g.hy;
        let slope_hi = (sol.w2[g.index(i, j_hi + 1)] - sol.w2[g.index(i, j_hi)]) / g.hy;
        assert!((slope_lo - 1.0 / 3.0).abs() < 1e-7 && (slope_hi + 1.0 / 3.0).abs() < 1e-7);
    }
}

#[test]
fn obstacle_obstructs_transverse_transport() {
    let sol = solve_cell_functions(&CellProblemSpec::uniform(32, 32, Tensor2::IDENTITY, Some(&rect()), 0.1).unwrap()).unwrap();
    assert!(sol.effective.d22 < 1.0 && sol.effective.d22 > 0.0);
    assert!((sol.porosity - 0.75).abs() < 1e-12);
    let pore = effective_tensor(&sol, &TensorField::uniform(&sol.grid, Tensor2::IDENTITY).masked(&sol.mask), AveragingMode::PoreAverage);
    assert!((pore.d22 * sol.porosity - sol.effective.d22).abs() < 1e-12);
}

#[test]
fn symmetric_obstacle_gives_an_antisymmetric_w2() {
    let spec = CellProblemSpec::uniform(48, 48, Tensor2::diagonal(1.0, 0.1), Some(&rect()), 0.08).unwrap();
    let sol = solve_cell_functions(&spec).unwrap();
    let g = sol.grid;
    let mut worst = 0.0_f64;
    for j in 0..g.ny {
        for i in 0..g.nx {
            let k = g.index(i, j);
            if sol.mask.is_open(k) {
                worst = worst.max((sol.w2[k] + sol.w2[g.index(i, g.ny - 1 - j)]).abs());
            }
        }
    }
    assert!(worst < 1e-8, "{worst:e}");
    let mean: f64 = (0..g.len()).filter(|k| sol.mask.is_open(*k)).map(|k| sol.w1[k] + sol.w2[k]).sum();
    assert!(mean.abs() < 1e-9);
}

#[test]
fn d11_stops_mattering_as_delta_vanishes() {
    let gap = |delta: f64| {
        let field = |scale: f64| {
            CellProblemSpec::with_tensor(32, 32, None, delta, move |x, y| {
                Tensor2::diagonal(scale * (1.0 + 0.5 * (2.0 * PI * x).sin()), 1.0 + 0.5 * (2.0 * PI * y).cos())
            })
            .unwrap()
        };
        let a = solve_cell_functions(&field(1.0)).unwrap();
        let b = solve_cell_functions(&field(2.0)).unwrap();
        (a.effective.d21 - b.effective.d21).abs() + (a.effective.d22 - b.effective.d22).abs()
    };
    let (coarse, fine) = (gap(0.1), gap(1e-4));
    assert!(fine < 0.1 * coarse.max(1e-300) || fine < 1e-10, "{coarse:e} {fine:e}");
}

#[test]
fn sweeps_are_reproducible_and_match_direct_solves() {
    let spec = CellProblemSpec::uniform(24, 24, Tensor2::diagonal(1.0, 0.1), Some(&rect()), 0.1).unwrap();
    let rows = sweep_delta(&spec, &[0.01, 0.01, 0.5]).unwrap();
    let a = rows[0].result.as_ref().unwrap();
    let b = rows[1].result.as_ref().unwrap();
    assert_eq!(a.w2, b.w2);
    assert_eq!(a.effective, b.effective);
    let single = sweep_eta(&spec, &[0.04]).unwrap();
    let direct = solve_cell_functions(&spec.with_delta(0.04)).unwrap();
    assert_eq!(single[0].result.as_ref().unwrap().effective, direct.effective);
    assert!(matches!(sweep_eta(&spec, &[]), Err(Error::EmptyInput(_))));
    assert!(sweep_delta(&spec, &[0.5, 0.1]).is_err());
}

#[test]
fn effective_coefficient_converges_under_refinement() {
    let d22 = |n: usize| {
        solve_cell_functions(&CellProblemSpec::uniform(n, n, Tensor2::diagonal(1.0, 0.1), Some(&rect()), 0.08).unwrap())
            .unwrap()
            .effective
            .d22
    };
    let v: Vec<f64> = [16, 32, 64, 128].into_iter().map(d22).collect();
    let diffs: Vec<f64> = v.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
    assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{v:?}");
}

fn co2_geometry() -> (PhysicalGeometry, membrane_core::geometry::DimensionlessGeometry) {
    let pg = PhysicalGeometry { ell: 1.0, h: 0.4, w: 0.25, eta: 0.08 };
    let g = nondimensionalize(&pg).unwrap();
    (pg, g)
}

#[test]
fn drift_free_micro_problem_has_the_linear_profile() {
    let (pg, g) = co2_geometry();
    let mut phys = Physics::logistic(10.0, 1.0, 0.0, 0.0, 5.8e-5);
    phys.drift.clear();
    let sys = MicroProblem::from_physical(&g, &pg, None, &phys, None).unwrap().discretize(32, 16).unwrap();
    let mut cfg = RunConfig::new(0.05, 40.0, 1e-14);
    cfg.solver = SolverConfig { rel_tolerance: 1e-14, abs_tolerance: 1e-20, max_iterations: None };
    let res = sys.run_to_steady_state(&cfg).unwrap();
    assert!(res.steady);
    let grid = sys.grid;
    for k in 0..grid.len() {
        let (i, j) = grid.coords(k);
        let (x, _) = grid.center(i, j);
        assert!((res.final_state[k] - 5.8e-5 * (x + 1.0) / 2.0).abs() < 1e-10 * 5.8e-5 + 1e-15);
    }
    let expect = 1.0 * 5.8e-5 / 2.0 * g.height();
    assert!((res.outflux() - expect).abs() < 1e-8 * expect, "{} vs {expect}", res.outflux());
    assert!(res.max_mass_residual() <= res.records.iter().map(|r| r.residual_bound).fold(0.0, f64::max));
}

#[test]
fn obstacles_reduce_the_outflux() {
    let (pg, g) = co2_geometry();
    let phys = Physics::logistic(10.0, 1.0, 2.0, 0.0, 5.8e-5);
    let cfg = RunConfig::new(0.05, 30.0, 1e-7 * 5.8e-5);
    let open = MicroProblem::from_physical(&g, &pg, None, &phys, None).unwrap().discretize(64, 40).unwrap();
    let blocked = MicroProblem::from_physical(&g, &pg, Some(rect()), &phys, None).unwrap().discretize(64, 40).unwrap();
    let a = open.run_to_steady_state(&cfg).unwrap();
    let b = blocked.run_to_steady_state(&cfg).unwrap();
    assert!(a.steady && b.steady);
    assert!(b.outflux() < a.outflux());
}

fn thin_problem(m: usize) -> ThinMembraneProblem {
    ThinMembraneProblem {
        height: 0.4,
        bulk_left: Tensor2::diagonal(1.0, 0.1),
        bulk_right: Tensor2::diagonal(1.0, 0.1),
        membrane: Tensor2::diagonal(1.0, 0.1),
        drift: DriftPolynomial::zero(),
        source_left: 0.0,
        source_right: 0.0,
        membrane_source: vec![0.0; m],
        u_left: 0.0,
        u_right: 0.0,
        initial_left: 0.0,
        initial_right: 0.0,
        initial_membrane: 0.0,
    }
}

fn thin_numerics(nx: usize, ny: usize) -> ThinNumerics {
    ThinNumerics {
        nx_bulk: nx,
        ny,
        dt: 0.05,
        t_end: 200.0,
        steady_tol: 1e-11,
        coupling_tol: 1e-13,
        max_coupling_iterations: 1000,
        solver: SolverConfig { rel_tolerance: 1e-13, abs_tolerance: 1e-16, max_iterations: None },
    }
}

#[test]
fn membrane_profile_matches_the_discrete_fourier_solution() {
    let m = 16;
    let mut p = thin_problem(m);
    p.membrane_source = (0..m).map(|k| (2.0 * PI * (k as f64 + 0.5) / m as f64).sin()).collect();
    let sys = ThinSystem::new(p, thin_numerics(4, 3)).unwrap();
    let mut st = MembraneState::constant(3, m, 0.0);
    for _ in 0..400 {
        st = sys.membrane_step(&st, &[0.3; 3], &[0.3; 3], 1.0).unwrap();
    }
    let h = 1.0 / m as f64;
    let lambda = 4.0 * (PI * h).sin().powi(2) / (h * h);
    for j in 0..3 {
        for (k, v) in st.row(j).iter().enumerate() {
            let y = (k as f64 + 0.5) * h;
            let expect = 0.3 + (2.0 * PI * y).sin() / (0.1 * lambda);
            assert!((v - expect).abs() < 1e-10, "{v} {expect}");
        }
    }
}

#[test]
fn periodic_cross_term_averages_out() {
    let m = 12;
    let mut p = thin_problem(m);
    p.membrane = Tensor2::new(1.0, 0.05, 0.05, 0.1);
    let sys = ThinSystem::new(p, thin_numerics(4, 2)).unwrap();
    let mut st = MembraneState::constant(2, m, 0.0);
    for j in 0..2 {
        for (k, v) in st.row_mut(j).iter_mut().enumerate() {
            *v = (2.0 * PI * k as f64 / m as f64).cos() + j as f64;
        }
    }
    assert!(sys.membrane_flux(&st, Side::Left).iter().all(|q| q.abs() < 1e-15));
}

#[test]
fn transparent_membrane_reproduces_the_single_domain_solution() {
    let (nx, ny) = (16, 6);
    let mut p = thin_problem(8);
    p.u_right = 1.0;
    let res = run_thin(&p, &thin_numerics(nx, ny)).unwrap();
    assert!(res.steady);
    let combined = res.combined(nx, ny);
    for j in 0..ny {
        for i in 0..2 * nx {
            let x = -1.0 + (i as f64 + 0.5) / nx as f64;
            assert!((combined[j * 2 * nx + i] - (x + 1.0) / 2.0).abs() < 1e-8);
        }
    }
    assert!(res.membrane.values.iter().all(|v| (v - 0.5).abs() < 1e-8));
    assert!(res.records.iter().all(|r| r.coupling_history.windows(2).all(|w| w[1] < w[0])));
}

#[test]
fn membrane_source_feeds_both_bulks_symmetrically() {
    let (nx, ny) = (12, 4);
    let mut p = thin_problem(8);
    p.membrane_source = vec![1.0; 8];
    let res = run_thin(&p, &thin_numerics(nx, ny)).unwrap();
    assert!(res.steady);
    for j in 0..ny {
        for i in 0..nx {
            let l = res.left[j * nx + i];
            let r = res.right[j * nx + nx - 1 - i];
            assert!(l > 0.0 && (l - r).abs() < 1e-10 * l.max(1.0));
        }
    }
    let jump = res.records.last().unwrap().jump;
    let expect = -2.0 * 1.0 * p.height;
    assert!((jump.bulk - expect).abs() < 1e-8 && (jump.membrane - expect).abs() < 1e-8, "{jump:?}");
}

#[test]
fn jump_balance_closes_with_drift_and_cross_terms() {
    let m = 8;
    let mut p = thin_problem(m);
    p.u_right = 0.8;
    p.drift = DriftPolynomial::logistic(2.0, 1.0, 10.0).unwrap();
    p.membrane = Tensor2::new(1.0, 0.05, -0.05, 0.1);
    p.membrane_source = (0..m).map(|k| 0.5 + (2.0 * PI * (k as f64 + 0.5) / m as f64).sin()).collect();
    let res = run_thin(&p, &thin_numerics(12, 4)).unwrap();
    assert!(res.steady);
    let jump = res.records.last().unwrap().jump;
    assert!((jump.bulk - jump.membrane).abs() < 1e-8, "{jump:?}");
    assert!(res.records.iter().all(|r| r.coupling_history.windows(2).all(|w| w[1] < w[0])));
}

#[test]
fn coupling_failure_reports_the_history() {
    let mut p = thin_problem(8);
    p.u_right = 1.0;
    let mut n = thin_numerics(8, 2);
    n.max_coupling_iterations = 2;
    match run_thin(&p, &n) {
        Err(Error::CouplingNotConverged { iterations, history }) => {
            assert_eq!(iterations, 2);
            assert_eq!(history.len(), 2);
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn transient_macro_run_settles_on_the_series_flux() {
    use membrane_core::macro_membrane::{run_macro, series_flux, MacroProblem};
    let (_, g) = co2_geometry();
    let p = MacroProblem {
        geometry: g,
        bulk: Tensor2::diagonal(1.0, 0.1),
        effective: Tensor2::diagonal(0.4, 0.05),
        drift: DriftPolynomial::zero(),
        source_bulk: 0.0,
        source_membrane: 0.0,
        u_left: 0.0,
        u_right: 1.0,
        initial: 0.0,
    };
    let mut cfg = RunConfig::new(0.05, 80.0, 1e-11);
    cfg.solver = SolverConfig { rel_tolerance: 1e-13, abs_tolerance: 1e-16, max_iterations: None };
    let res = run_macro(&p, 64, 8, &cfg).unwrap();
    assert!(res.transient.steady);
    let height = p.geometry.height();
    let expect = -series_flux(&p) * height;
    assert!((res.outflux() - expect).abs() < 1e-8 * expect, "{} {expect}", res.outflux());
    let last = res.interface.last().unwrap();
    assert!((last.left + expect).abs() < 1e-8 * expect && (last.right + expect).abs() < 1e-8 * expect);
}
