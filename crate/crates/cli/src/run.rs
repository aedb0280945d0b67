//! Executes one configured experiment into an output directory.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use normsolve::asymptotics::{
    beta_limit_experiment, bubble_limit_experiment, collapse_experiment, cutoff_bubble_estimates,
    refined_energy_bound_check, SweepResult,
};
use normsolve::dump::write_fields;
use normsolve::evolution::{evolve, stability_experiment, ComplexState, EvolutionTrace, EvolveConfig};
use normsolve::functional::{fiber_from, integrals};
use normsolve::profiles::{solve_scalar_ground_state, ConstantsTable};
use normsolve::solver::{solve, Mode, SolveResult};
use normsolve::thresholds::{classify_regime, h_curve_csv, report_table};
use normsolve::{Error, Grid, Params};
use serde_json::{json, Map, Value};

use crate::config::{print_config, Experiment, RunConfig};

/// Tag carried by every emitted JSON document.
pub const FORMAT: &str = "normsolve-diagnostics/1";

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_NOT_CONVERGED: u8 = 2;
pub const EXIT_REGIME: u8 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success,
    NotConverged,
}

impl Status {
    pub fn code(self) -> u8 {
        match self {
            Status::Success => 0,
            Status::NotConverged => EXIT_NOT_CONVERGED,
        }
    }
}

/// Exit status for a failed run.
pub fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(ne) = cause.downcast_ref::<Error>() {
            return match ne {
                Error::Regime(_) => EXIT_REGIME,
                Error::ProfileSolve(_) | Error::Structure(_) | Error::Singular(_) => EXIT_NOT_CONVERGED,
                _ => EXIT_USAGE,
            };
        }
    }
    EXIT_USAGE
}

fn write(out: &Path, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json(out: &Path, kind: Experiment, cfg: &RunConfig, payload: Map<String, Value>) -> Result<()> {
    let mut doc = Map::new();
    doc.insert("format".into(), FORMAT.into());
    doc.insert("kind".into(), kind.name().into());
    doc.insert("seed".into(), cfg.solve.seed.into());
    doc.insert("params".into(), serde_json::to_value(cfg.problem)?);
    doc.extend(payload);
    let mut text = serde_json::to_string_pretty(&Value::Object(doc))?;
    text.push('\n');
    write(out, "diagnostics.json", text)
}

fn dump(out: &Path, name: &str, grid: &Grid, fields: &[&[f64]]) -> Result<()> {
    let mut buf = Vec::new();
    write_fields(&mut buf, grid, fields)?;
    write(out, name, buf)
}

fn obj(v: Value) -> Map<String, Value> {
    match v {
        Value::Object(m) => m,
        _ => unreachable!("payloads are objects"),
    }
}

fn problem(cfg: &RunConfig) -> Result<Params> {
    cfg.problem.context("this experiment needs a [problem] section")
}

/// Runs `cfg` with all artifacts under `out`, which is created if needed.
pub fn run(cfg: &RunConfig, out: &Path) -> Result<Status> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if cfg.experiment != Experiment::Report {
        write(out, "run.toml", print_config(cfg))?;
    }
    match cfg.experiment {
        Experiment::Solve => run_solve(cfg, out),
        Experiment::Thresholds => run_thresholds(cfg, out),
        Experiment::Profile => run_profile(cfg, out),
        Experiment::Evolve => run_evolve(cfg, out),
        Experiment::Collapse | Experiment::Bubble | Experiment::Betalimit | Experiment::Cutoff => run_sweep(cfg, out),
        Experiment::Report => {
            let dir = cfg.settings.results_dir.as_deref().unwrap_or(&cfg.output_dir);
            crate::report::report(dir, out).map(|_| Status::Success)
        }
    }
}

fn solve_summary_md(p: &Params, r: &SolveResult) -> String {
    let d = &r.diagnostics;
    let mut s = String::new();
    let _ = writeln!(s, "# solve ({:?})\n", r.branch);
    let _ = writeln!(s, "- converged: {} after {} iterations", r.converged, r.iterations);
    let _ = writeln!(s, "- energy: {:.12e}", d.energy);
    let _ = writeln!(s, "- multipliers: λ₁ = {:.10e}, λ₂ = {:.10e}", d.lambda1, d.lambda2);
    let _ = writeln!(s, "- kinetic^(1/2): {:.10e}", d.kinetic.sqrt());
    let _ = writeln!(s, "- Pohozaev: {:.3e}, Ψ''(0): {:.6e}", d.pohozaev, d.fiber_second);
    let _ = writeln!(s, "- gradient norm: {:.3e}, multiplier residual: {:.3e}", d.grad_norm, d.multiplier_residual);
    let c = &r.certificates;
    let _ = writeln!(s, "- certificates: gradient {}, Pohozaev {}, multiplier {}", c.grad, c.pohozaev, c.multiplier);
    let _ = writeln!(s, "- masses: b₁ = {}, b₂ = {}", p.b1, p.b2);
    s
}

fn run_solve(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let p = problem(cfg)?;
    let c = ConstantsTable::global();
    let regime = classify_regime(&p, &c);
    let mut payload = obj(json!({ "mode": cfg.solve.mode, "regime": regime }));
    let r = match solve(&p, &cfg.solve) {
        Ok(r) => r,
        Err(e) => {
            payload.insert("result".into(), Value::Null);
            payload.insert("error".into(), e.to_string().into());
            write_json(out, Experiment::Solve, cfg, payload)?;
            write(out, "summary.md", format!("# solve\n\n{e}\n\n```\n{}```\n", report_table(&regime)))?;
            return Err(e.into());
        }
    };
    payload.insert("result".into(), serde_json::to_value(r.summary(&p))?);
    if cfg.solve.mode == Mode::LocalMin && p.dim == 3 {
        payload.insert("refined_bound".into(), serde_json::to_value(refined_energy_bound_check(&p, &r, &c))?);
    }
    write_json(out, Experiment::Solve, cfg, payload)?;
    dump(out, "fields.bin", r.state.grid(), &[r.state.u.values(), r.state.v.values()])?;
    let ints = integrals(&p, &r.state);
    let mut fiber = String::from("t,psi,dpsi,d2psi\n");
    for k in 0..=240 {
        let t = -3.0 + 0.025 * k as f64;
        let (a, b, c) = fiber_from(p.dim, &ints, p.beta, t);
        let _ = writeln!(fiber, "{t},{a:e},{b:e},{c:e}");
    }
    write(out, "fiber.csv", fiber)?;
    let mut profile = String::from("r,u,v\n");
    for ((r, u), v) in r.state.grid().nodes().iter().zip(r.state.u.values()).zip(r.state.v.values()) {
        let _ = writeln!(profile, "{r:e},{u:e},{v:e}");
    }
    write(out, "profile.csv", profile)?;
    write(out, "summary.md", solve_summary_md(&p, &r))?;
    Ok(if r.converged { Status::Success } else { Status::NotConverged })
}

fn run_thresholds(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let p = problem(cfg)?;
    let c = ConstantsTable::global();
    let report = classify_regime(&p, &c);
    let table = report_table(&report);
    print!("{table}");
    write_json(out, Experiment::Thresholds, cfg, obj(json!({ "report": report })))?;
    write(out, "h_curve.csv", h_curve_csv(&p, &c, 400))?;
    write(out, "summary.md", format!("# thresholds\n\n```\n{table}```\n"))?;
    Ok(Status::Success)
}

fn run_profile(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let dim = cfg.dim().context("profile needs a dimension")?;
    let power = cfg.settings.power;
    let g = solve_scalar_ground_state(dim, power)?;
    let grid = g.field.grid();
    let c = ConstantsTable::global();
    let payload = json!({
        "profile": {
            "N": dim,
            "power": power,
            "center": g.center,
            "residual": g.residual,
            "mass": g.field.mass(),
            "kinetic": g.field.kinetic(),
        },
        "constants": {
            "gn": c.gn_json(),
            "sobolev_s": c.sobolev_s,
            "q_mass_sq": c.q_mass_sq,
            "w_mass_sq": c.w_mass_sq,
            "w_kinetic": c.w_kinetic,
        },
    });
    write_json(out, Experiment::Profile, cfg, obj(payload))?;
    dump(out, "profile.bin", grid, &[g.field.values()])?;
    let mut csv = String::from("r,u\n");
    for (r, u) in grid.nodes().iter().zip(g.field.values()) {
        let _ = writeln!(csv, "{r:e},{u:e}");
    }
    write(out, "profile.csv", csv)?;
    write(
        out,
        "summary.md",
        format!(
            "# profile\n\n- N = {dim}, p = {power}\n- u(0) = {:.12e}\n- mass = {:.12e}\n- kinetic = {:.12e}\n- residual = {:.3e}\n",
            g.center,
            g.field.mass(),
            g.field.kinetic(),
            g.residual
        ),
    )?;
    Ok(Status::Success)
}

fn run_evolve(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let p = problem(cfg)?;
    if p.dim != 3 {
        return Err(Error::Domain(format!("evolution is three-dimensional, got N = {}", p.dim)).into());
    }
    let s = &cfg.settings;
    let ground = solve(&p, &cfg.solve)?;
    let mut payload = obj(json!({ "ground": ground.summary(&p), "dt": s.dt, "t_end": s.t_end }));
    if !ground.converged {
        payload.insert("unperturbed".into(), Value::Null);
        payload.insert("stability".into(), Value::Null);
        write_json(out, Experiment::Evolve, cfg, payload)?;
        return Ok(Status::NotConverged);
    }
    let d = &ground.diagnostics;
    let x0 = ComplexState::from_real(&ground.state);
    let tr = evolve(&x0, &p, &EvolveConfig::for_state(s.dt, s.t_end, d.lambda1, d.lambda2), Some(&ground.state))?;
    let unperturbed = json!({
        "sup_distance": tr.sup_distance(),
        "mass1_drift": EvolutionTrace::max_relative_drift(&tr.mass1),
        "mass2_drift": EvolutionTrace::max_relative_drift(&tr.mass2),
        "energy_drift": EvolutionTrace::max_relative_drift(&tr.energy),
        "hamiltonian_drift": EvolutionTrace::max_relative_drift(&tr.hamiltonian),
        "blowup": tr.blowup,
    });
    payload.insert("unperturbed".into(), unperturbed);
    let stability = if s.perturbations > 0 {
        Some(stability_experiment(&ground, &p, s.amplitude, s.perturbations, s.t_end, s.dt, cfg.solve.seed)?)
    } else {
        None
    };
    payload.insert("stability".into(), serde_json::to_value(&stability)?);
    write_json(out, Experiment::Evolve, cfg, payload)?;
    write(out, "trace.csv", tr.to_csv())?;
    let g = ground.state.grid();
    dump(out, "ground.bin", g, &[ground.state.u.values(), ground.state.v.values()])?;
    let parts: Vec<Vec<f64>> = [&tr.last.phi, &tr.last.psi]
        .iter()
        .flat_map(|z| [z.iter().map(|c| c.re).collect(), z.iter().map(|c| c.im).collect()])
        .collect();
    dump(out, "final.bin", g, &parts.iter().map(Vec::as_slice).collect::<Vec<_>>())?;
    let mut md = format!(
        "# evolve\n\n- ground energy {:.12e}\n- t ∈ [0, {}], dt = {}\n- unperturbed sup distance {:.3e}, energy drift {:.3e}\n",
        d.energy,
        s.t_end,
        s.dt,
        tr.sup_distance(),
        EvolutionTrace::max_relative_drift(&tr.energy)
    );
    if let Some(st) = &stability {
        let worst = st.runs.iter().map(|r| r.sup_distance).fold(0.0, f64::max);
        let _ = writeln!(
            md,
            "- {} perturbations of amplitude {}: worst sup distance {:.3e} (threshold {:.3e}), stable: {}",
            st.runs.len(),
            st.amplitude,
            worst,
            st.threshold,
            st.stable
        );
    }
    write(out, "summary.md", md)?;
    Ok(Status::Success)
}

fn sweep_summary_md(r: &SweepResult) -> String {
    let mut s = format!("# {}\n\nswept: {}, {} points{}\n\n", r.experiment, r.swept, r.points.len(), if r.partial { " (partial)" } else { "" });
    s.push_str("| fit | slope | residual | points |\n|---|---|---|---|\n");
    for f in &r.fits {
        let _ = writeln!(s, "| {} | {:.4} | {:.2e} | {} |", f.quantity, f.slope, f.residual, f.points);
    }
    s.push_str("\n| check | verdict | detail |\n|---|---|---|\n");
    for c in &r.checks {
        let _ = writeln!(s, "| {} | {} | {} |", c.name, if c.passed { "pass" } else { "fail" }, c.detail);
    }
    s
}

/// One row per fitted quantity.
pub fn fits_csv(r: &SweepResult) -> String {
    let mut s = String::from("quantity,slope,intercept,residual,points\n");
    for f in &r.fits {
        let _ = writeln!(s, "{},{},{},{},{}", f.quantity, f.slope, f.intercept, f.residual, f.points);
    }
    s
}

fn run_sweep(cfg: &RunConfig, out: &Path) -> Result<Status> {
    let ladder = cfg.ladder.clone().unwrap_or_default();
    let result = match cfg.experiment {
        Experiment::Collapse => collapse_experiment(&problem(cfg)?, &ladder.masses, &cfg.solve)?,
        Experiment::Bubble => bubble_limit_experiment(&problem(cfg)?, &ladder.masses, &cfg.solve, cfg.settings.refine)?,
        Experiment::Betalimit => beta_limit_experiment(&problem(cfg)?, &ladder.betas, &cfg.solve)?,
        Experiment::Cutoff => cutoff_bubble_estimates(&ladder.eps, cfg.settings.cutoff_n)?,
        other => unreachable!("{} is not a sweep", other.name()),
    };
    write_json(out, cfg.experiment, cfg, obj(json!({ "sweep": result })))?;
    write(out, "sweep.csv", result.to_csv())?;
    write(out, "fits.csv", fits_csv(&result))?;
    write(out, "summary.md", sweep_summary_md(&result))?;
    Ok(if result.partial { Status::NotConverged } else { Status::Success })
}
