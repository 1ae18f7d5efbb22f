//! Command-line verbs. Each verb writes into `<output-dir>/<verb>/` and
//! finishes with a manifest; a rerun whose resolved inputs hash to the
//! manifest's value is skipped unless `--force` is given.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use membrane_core::cell_problem::{CellSolution, SweepPoint};
use membrane_core::transport::TransientResult;
use membrane_core::{StructuredGrid, Tensor2};
use serde_json::json;

use crate::config::{DriftConfig, DriftRun, LogRange, ScenarioConfig};
use crate::error::{SimError, SimResult};
use crate::output::{num, read_manifest, sha256_hex, unix_now, RunDir};
use crate::plot::{Heatmap, LinePlot, Series};
use crate::scenario::Scenario;

#[derive(Debug, Parser)]
#[command(name = "membrane-sim", version, about = "Multiscale transport through a periodic membrane")]
pub struct Cli {
    /// JSON scenario file; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Root directory for outputs (overrides `experiment.output_dir`).
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Assert a deterministic run. Nothing in the program is random, so the
    /// flag only gets recorded in the manifest.
    #[arg(long, global = true)]
    pub seedless: bool,
    /// Rerun even when the manifest says the outputs are current.
    #[arg(long, global = true)]
    pub force: bool,
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    /// Cell problems, effective tensor and the delta / eta sweeps.
    Cell(CellArgs),
    /// Obstacle-resolved strip solve to steady state.
    Micro,
    /// Homogenized strip with the cell-problem tensor in the membrane.
    Macro(MacroArgs),
    /// Infinitely thin membrane coupled to the two bulks.
    Thin(ThinArgs),
    /// Macro runs over the configured drift strengths.
    Sweep(SweepArgs),
    /// Micro-vs-macro discrepancy over decreasing epsilon.
    Converge(ConvergeArgs),
}

#[derive(Debug, Args)]
pub struct CellArgs {
    /// `LO..HI` (log spaced, see --delta-points) or a comma list.
    #[arg(long)]
    pub deltas: Option<String>,
    /// Points of a `LO..HI` range (default 20).
    #[arg(long)]
    pub delta_points: Option<usize>,
    /// Comma list of cell heights in cm.
    #[arg(long, value_delimiter = ',')]
    pub etas: Option<Vec<f64>>,
    /// Regularization of the single cell solve.
    #[arg(long)]
    pub delta: Option<f64>,
}

#[derive(Debug, Args)]
pub struct MacroArgs {
    /// Logistic drift strength.
    #[arg(long)]
    pub b: Option<f64>,
    /// `D12,D21` of the membrane tensor.
    #[arg(long, value_delimiter = ',', num_args = 2, allow_negative_numbers = true)]
    pub off_diagonal: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ThinArgs {
    #[arg(long)]
    pub compare_single_domain: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma list of drift strengths, replacing the configured runs.
    #[arg(long, value_delimiter = ',')]
    pub b: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    /// Comma list of epsilon values.
    #[arg(long, value_delimiter = ',')]
    pub eps: Option<Vec<f64>>,
}

/// Parses `args`, runs the verb and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn verb_name(v: &Verb) -> &'static str {
    match v {
        Verb::Cell(_) => "cell",
        Verb::Micro => "micro",
        Verb::Macro(_) => "macro",
        Verb::Thin(_) => "thin",
        Verb::Sweep(_) => "sweep",
        Verb::Converge(_) => "converge",
    }
}

fn parse_deltas(spec: &str, points: usize) -> SimResult<Vec<f64>> {
    let bad = |m: String| SimError::config("--deltas", m);
    if let Some((lo, hi)) = spec.split_once("..") {
        let lo: f64 = lo.trim().parse().map_err(|e| bad(format!("{e}")))?;
        let hi: f64 = hi.trim().parse().map_err(|e| bad(format!("{e}")))?;
        if !(lo > 0.0 && hi >= lo) || points == 0 {
            return Err(bad("need 0 < LO <= HI and at least one point".into()));
        }
        return Ok(LogRange { lo, hi, count: points }.values());
    }
    let v = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}"))))
        .collect::<SimResult<Vec<_>>>()?;
    if v.iter().any(|d| !(*d > 0.0)) {
        return Err(bad("values must be positive".into()));
    }
    Ok(v)
}

/// Applies verb flags to the config; returns extra inputs that enter the
/// hash but have no config key.
fn apply_overrides(verb: &Verb, cfg: &mut ScenarioConfig) -> SimResult<serde_json::Value> {
    match verb {
        Verb::Cell(a) => {
            if let Some(n) = a.delta_points {
                cfg.experiment.deltas.count = n;
            }
            if let Some(e) = &a.etas {
                cfg.experiment.etas = e.clone();
            }
            if let Some(d) = a.delta {
                cfg.numerics.delta = Some(d);
            }
            let deltas = match &a.deltas {
                Some(s) => parse_deltas(s, cfg.experiment.deltas.count)?,
                None => cfg.experiment.deltas.values(),
            };
            Ok(json!({ "deltas": deltas }))
        }
        Verb::Macro(a) => {
            if let Some(b) = a.b {
                cfg.physics.drift = DriftConfig::Logistic { b };
            }
            if let Some(o) = &a.off_diagonal {
                cfg.macro_model.off_diagonal = Some([o[0], o[1]]);
            }
            Ok(json!({}))
        }
        Verb::Thin(a) => {
            cfg.thin.compare_single_domain |= a.compare_single_domain;
            Ok(json!({}))
        }
        Verb::Sweep(a) => {
            if let Some(bs) = &a.b {
                cfg.experiment.drift_runs = bs.iter().map(|&b| DriftRun { b, off_diagonal: None }).collect();
            }
            Ok(json!({}))
        }
        Verb::Converge(a) => {
            if let Some(e) = &a.eps {
                cfg.experiment.eps_levels = e.clone();
            }
            Ok(json!({}))
        }
        Verb::Micro => Ok(json!({})),
    }
}

fn execute(cli: &Cli) -> SimResult<()> {
    let mut cfg = match &cli.config {
        Some(p) => ScenarioConfig::load(p)?,
        None => ScenarioConfig::default(),
    };
    let extra = apply_overrides(&cli.verb, &mut cfg)?;
    if let Some(d) = &cli.output_dir {
        cfg.experiment.output_dir = d.to_string_lossy().into_owned();
    }
    let scenario = Scenario::new(cfg)?;
    let verb = verb_name(&cli.verb);

    let mut hashed = scenario.config.clone();
    hashed.experiment.output_dir.clear();
    let identity = json!({ "verb": verb, "config": hashed, "extra": extra });
    let hash = sha256_hex(serde_json::to_string(&identity).expect("identity serializes").as_bytes());

    let root = PathBuf::from(&scenario.config.experiment.output_dir).join(verb);
    if !cli.force {
        if let Some(m) = read_manifest(&root) {
            if m.scenario_hash == hash {
                println!("{verb}: outputs in {} are current (hash {}); use --force to rerun", root.display(), &hash[..12]);
                return Ok(());
            }
        }
    }
    let started = unix_now();
    let mut dir = RunDir::create(root)?;
    dir.text("config.json", &(scenario.config.to_json() + "\n"))?;
    match &cli.verb {
        Verb::Cell(_) => {
            let deltas: Vec<f64> = serde_json::from_value(extra["deltas"].clone()).expect("deltas list");
            cell(&scenario, &deltas, &mut dir)?
        }
        Verb::Micro => micro(&scenario, &mut dir)?,
        Verb::Macro(_) => macro_run(&scenario, &mut dir)?,
        Verb::Thin(_) => thin(&scenario, &mut dir)?,
        Verb::Sweep(_) => sweep(&scenario, &mut dir)?,
        Verb::Converge(_) => converge(&scenario, &mut dir)?,
    }
    let root = dir.root().to_path_buf();
    let manifest = dir.finish(verb, &hash, started, cli.seedless)?;
    println!("{verb}: wrote {} files to {}", manifest.outputs.len() + 1, root.display());
    Ok(())
}

fn plot(dir: &mut RunDir, name: &str, svg: Result<String, String>) -> SimResult<()> {
    match svg {
        Ok(s) => dir.text(name, &s),
        Err(reason) => {
            eprintln!("warning: skipped {name}: {reason}");
            Ok(())
        }
    }
}

fn tensor_cells(t: &Tensor2) -> [String; 4] {
    [num(t.d11), num(t.d12), num(t.d21), num(t.d22)]
}

fn flag(b: bool) -> String {
    if b { "true" } else { "false" }.into()
}

fn sweep_rows(points: &[SweepPoint]) -> Vec<Vec<String>> {
    points
        .iter()
        .map(|p| {
            let mut row = vec![num(p.parameter), num(p.delta)];
            match &p.result {
                Ok(s) => {
                    row.extend(tensor_cells(&s.effective));
                    row.extend([num(s.residuals[0]), num(s.residuals[1]), "ok".into()]);
                }
                Err(e) => {
                    row.extend(std::iter::repeat(String::new()).take(6));
                    row.push(format!("error: {e}"));
                }
            }
            row
        })
        .collect()
}

fn d22_series(points: &[SweepPoint], label: &str) -> Series {
    Series {
        label: label.into(),
        points: points.iter().filter_map(|p| p.result.as_ref().ok().map(|s| (p.parameter, s.effective.d22))).collect(),
    }
}

/// Effective-tensor row shared by the cell and macro outputs.
fn effective_row(delta: f64, sol: &CellSolution) -> Vec<String> {
    let mut row = vec![num(delta), num(sol.porosity)];
    row.extend(tensor_cells(&sol.effective));
    row.extend(tensor_cells(&sol.tortuosity));
    row.extend([num(sol.residuals[0]), num(sol.residuals[1])]);
    row
}

const EFFECTIVE_HEADER: [&str; 12] =
    ["delta", "porosity", "D11s", "D12s", "D21s", "D22s", "T11", "T12", "T21", "T22", "residual_w1", "residual_w2"];
const SWEEP_HEADER: [&str; 9] = ["parameter", "delta", "D11s", "D12s", "D21s", "D22s", "residual_w1", "residual_w2", "status"];

fn cell(s: &Scenario, deltas: &[f64], dir: &mut RunDir) -> SimResult<()> {
    let sol = s.solve_cell()?;
    let e = sol.effective;
    println!("cell: D* = [[{}, {}], [{}, {}]], porosity {}", num(e.d11), num(e.d12), num(e.d21), num(e.d22), num(sol.porosity));
    dir.csv("effective.csv", &EFFECTIVE_HEADER, [effective_row(s.delta(), &sol)])?;
    dir.grid("w1.grid", &sol.grid, &sol.w1, Some(&sol.mask))?;
    dir.grid("w2.grid", &sol.grid, &sol.w2, Some(&sol.mask))?;

    let by_delta = s.delta_sweep(deltas)?;
    dir.csv("sweep_delta.csv", &SWEEP_HEADER, sweep_rows(&by_delta))?;
    let by_eta = s.eta_sweep(&s.config.experiment.etas)?;
    dir.csv("sweep_eta.csv", &SWEEP_HEADER, sweep_rows(&by_eta))?;
    let failed = by_delta.iter().chain(&by_eta).filter(|p| p.result.is_err()).count();
    if failed > 0 {
        eprintln!("warning: {failed} sweep points failed; see the status column");
    }

    let line = |title: &str, x: &str, series: Series| LinePlot {
        title: title.into(),
        x_label: x.into(),
        y_label: "D22*".into(),
        log_x: true,
        log_y: false,
        series: vec![series],
    };
    plot(dir, "d22_vs_delta.svg", line("D22* against the regularization", "delta", d22_series(&by_delta, "D22*")).to_svg())?;
    plot(dir, "d22_vs_eta.svg", line("D22* against the cell height", "eta [cm]", d22_series(&by_eta, "D22*")).to_svg())?;
    Ok(())
}

fn transient_outputs(dir: &mut RunDir, grid: &StructuredGrid, mask: Option<&membrane_core::CellMask>, r: &TransientResult, dt: f64) -> SimResult<()> {
    dir.csv(
        "summary.csv",
        &["steady", "final_time", "steps", "dt", "outflux", "flux_right", "max_mass_residual"],
        [vec![
            flag(r.steady),
            num(r.final_time()),
            r.records.len().to_string(),
            num(dt),
            num(r.outflux()),
            num(r.final_fluxes().right),
            num(r.max_mass_residual()),
        ]],
    )?;
    dir.csv(
        "diagnostics.csv",
        &["time", "mass", "flux_left", "flux_right", "mass_residual", "residual_bound", "rate", "iterations"],
        r.records.iter().map(|rec| {
            vec![
                num(rec.time),
                num(rec.mass),
                num(rec.fluxes.left),
                num(rec.fluxes.right),
                num(rec.mass_residual),
                num(rec.residual_bound),
                num(rec.rate),
                rec.iterations.to_string(),
            ]
        }),
    )?;
    let mut index = Vec::new();
    for (k, snap) in r.snapshots.iter().enumerate() {
        let name = format!("field_{k}.grid");
        dir.grid(&name, grid, &snap.values, mask)?;
        let title = format!("u at t = {}", num(snap.time));
        plot(dir, &format!("field_{k}.svg"), Heatmap { title: &title, grid, values: &snap.values, mask }.to_svg())?;
        index.push(vec![k.to_string(), num(snap.time), name]);
    }
    dir.csv("snapshots.csv", &["index", "time", "file"], index)?;
    if !r.steady {
        eprintln!("warning: horizon reached before steady state (final rate {})", num(r.records.last().map_or(f64::NAN, |x| x.rate)));
    }
    println!("outflux {} (steady: {})", num(r.outflux()), r.steady);
    Ok(())
}

fn micro(s: &Scenario, dir: &mut RunDir) -> SimResult<()> {
    let m = s.run_micro()?;
    transient_outputs(dir, &m.system.grid, Some(&m.system.mask), &m.result, m.run.dt)
}

fn macro_run(s: &Scenario, dir: &mut RunDir) -> SimResult<()> {
    let m = s.run_macro()?;
    let mut row = effective_row(s.delta(), &m.cell);
    row.extend(tensor_cells(&m.problem.effective));
    let mut header = EFFECTIVE_HEADER.to_vec();
    header.extend(["Dm11", "Dm12", "Dm21", "Dm22"]);
    dir.csv("effective.csv", &header, [row])?;
    dir.csv(
        "interface.csv",
        &["time", "flux_left_interface", "flux_right_interface"],
        m.result.interface.iter().map(|r| vec![num(r.time), num(r.left), num(r.right)]),
    )?;
    transient_outputs(dir, &m.system.grid, None, &m.result.transient, m.run.dt)
}

fn thin(s: &Scenario, dir: &mut RunDir) -> SimResult<()> {
    let t = s.run_thin()?;
    let n = t.system.numerics;
    let r = &t.result;
    let last = r.records.last();
    let worst_jump = r.records.iter().fold(0.0_f64, |m, x| m.max((x.jump.bulk - x.jump.membrane).abs()));
    dir.csv(
        "summary.csv",
        &["steady", "final_time", "steps", "outflux", "flux_right", "final_jump_bulk", "final_jump_membrane", "max_jump_mismatch", "single_domain_error"],
        [vec![
            flag(r.steady),
            num(last.map_or(0.0, |x| x.time)),
            r.records.len().to_string(),
            num(r.outflux()),
            num(last.map_or(0.0, |x| x.flux_right)),
            num(last.map_or(0.0, |x| x.jump.bulk)),
            num(last.map_or(0.0, |x| x.jump.membrane)),
            num(worst_jump),
            t.single_domain_error.map_or_else(String::new, num),
        ]],
    )?;
    dir.csv(
        "diagnostics.csv",
        &["time", "rate", "coupling_iterations", "coupling_residual", "flux_left", "flux_right", "dz1_estimate"],
        r.records.iter().map(|x| {
            vec![
                num(x.time),
                num(x.rate),
                x.coupling_history.len().to_string(),
                num(x.coupling_history.last().copied().unwrap_or(0.0)),
                num(x.flux_left),
                num(x.flux_right),
                num(x.dz1_estimate),
            ]
        }),
    )?;
    dir.csv(
        "jump_balance.csv",
        &["time", "bulk", "membrane", "difference"],
        r.records.iter().map(|x| vec![num(x.time), num(x.jump.bulk), num(x.jump.membrane), num(x.jump.bulk - x.jump.membrane)]),
    )?;
    let hy = t.system.problem.height / n.ny as f64;
    let m = t.system.points();
    let mut rows = Vec::new();
    for snap in &t.snapshots {
        for j in 0..n.ny {
            for (k, v) in snap.membrane.row(j).iter().enumerate() {
                rows.push(vec![num((j as f64 + 0.5) * hy), num((k as f64 + 0.5) / m as f64), num(*v), num(snap.time)]);
            }
        }
    }
    dir.csv("membrane_state.csv", &["z2", "y2", "value", "time"], rows)?;
    let grid = StructuredGrid::covering((-1.0, 1.0), (0.0, t.system.problem.height), 2 * n.nx_bulk, n.ny)
        .map_err(|e| SimError::Solver { context: "thin output grid".into(), source: e })?;
    let mut index = Vec::new();
    for (k, snap) in t.snapshots.iter().enumerate() {
        let name = format!("bulk_{k}.grid");
        dir.grid(&name, &grid, &snap.bulk, None)?;
        let title = format!("bulk u at t = {}", num(snap.time));
        plot(dir, &format!("bulk_{k}.svg"), Heatmap { title: &title, grid: &grid, values: &snap.bulk, mask: None }.to_svg())?;
        index.push(vec![k.to_string(), num(snap.time), name]);
    }
    dir.csv("snapshots.csv", &["index", "time", "file"], index)?;
    if !r.steady {
        eprintln!("warning: horizon reached before steady state");
    }
    println!("outflux {} (steady: {})", num(r.outflux()), r.steady);
    if let Some(e) = t.single_domain_error {
        println!("max difference to the strip without membrane: {}", num(e));
    }
    Ok(())
}

fn sweep(s: &Scenario, dir: &mut RunDir) -> SimResult<()> {
    let rows = s.drift_sweep()?;
    dir.csv(
        "sweep_b.csv",
        &["b", "Dm11", "Dm12", "Dm21", "Dm22", "outflux", "steady", "final_time", "max_mass_residual"],
        rows.iter().map(|r| {
            let mut row = vec![num(r.drift.b)];
            row.extend(tensor_cells(&r.effective));
            row.extend([num(r.outflux), flag(r.steady), num(r.final_time), num(r.max_mass_residual)]);
            row
        }),
    )?;
    let pick = |full: bool| rows.iter().filter(|r| r.drift.off_diagonal.is_some() == full).map(|r| (r.drift.b, r.outflux)).collect::<Vec<_>>();
    let mut series = vec![Series { label: "diagonal D*".into(), points: pick(false) }];
    let full = pick(true);
    if !full.is_empty() {
        series.push(Series { label: "full D*".into(), points: full });
    }
    series.retain(|x| !x.points.is_empty());
    let chart = LinePlot {
        title: "Outflux against drift strength".into(),
        x_label: "b".into(),
        y_label: "outflux".into(),
        log_x: false,
        log_y: false,
        series,
    };
    plot(dir, "outflux_vs_b.svg", chart.to_svg())?;
    for r in &rows {
        println!("b = {}: outflux {} (steady: {})", num(r.drift.b), num(r.outflux), r.steady);
    }
    Ok(())
}

fn converge(s: &Scenario, dir: &mut RunDir) -> SimResult<()> {
    let rows = s.converge()?;
    dir.csv(
        "converge.csv",
        &["epsilon", "eta", "cells", "D11s", "D22s", "bulk_l2", "membrane_l2", "total_l2", "micro_outflux", "macro_outflux", "micro_steady", "macro_steady"],
        rows.iter().map(|r| {
            vec![
                num(r.epsilon),
                num(r.eta),
                r.cells.to_string(),
                num(r.effective.d11),
                num(r.effective.d22),
                num(r.discrepancy.bulk),
                num(r.discrepancy.membrane),
                num(r.discrepancy.total()),
                num(r.micro_outflux),
                num(r.macro_outflux),
                flag(r.micro_steady),
                flag(r.macro_steady),
            ]
        }),
    )?;
    let series = |label: &str, f: fn(&crate::scenario::ConvergeRow) -> f64| Series {
        label: label.into(),
        points: rows.iter().map(|r| (r.epsilon, f(r))).collect(),
    };
    let chart = LinePlot {
        title: "Micro against macro discrepancy".into(),
        x_label: "epsilon".into(),
        y_label: "L2 discrepancy".into(),
        log_x: true,
        log_y: true,
        series: vec![
            series("total", |r| r.discrepancy.total()),
            series("bulk", |r| r.discrepancy.bulk),
            series("membrane", |r| r.discrepancy.membrane),
        ],
    };
    plot(dir, "discrepancy.svg", chart.to_svg())?;
    let decreasing = rows.windows(2).all(|w| w[1].discrepancy.total() < w[0].discrepancy.total());
    for r in &rows {
        println!("epsilon {}: discrepancy {}", num(r.epsilon), num(r.discrepancy.total()));
    }
    println!("strictly decreasing: {decreasing}");
    Ok(())
}
