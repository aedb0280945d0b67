//! Aggregates a directory of run outputs into Markdown and CSV summaries.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use normsolve::asymptotics::SweepResult;
use normsolve::evolution::StabilityReport;
use normsolve::solver::SolveSummary;
use normsolve::thresholds::ThresholdReport;
use serde_json::Value;

use crate::run::FORMAT;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub run: String,
    pub kind: String,
    pub ok: bool,
    pub value: Option<f64>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitRow {
    pub run: String,
    pub quantity: String,
    pub slope: f64,
    pub residual: f64,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckRow {
    pub run: String,
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Summary {
    pub rows: Vec<Row>,
    pub fits: Vec<FitRow>,
    pub checks: Vec<CheckRow>,
    /// Plot-ready CSV files found next to the diagnostics.
    pub plots: Vec<String>,
    pub skipped: Vec<(String, String)>,
}

fn walk(dir: &Path, depth: usize, files: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .collect();
    entries.sort();
    for path in entries {
        if path.is_dir() {
            if depth > 0 {
                walk(&path, depth - 1, files)?;
            }
        } else {
            files.push(path);
        }
    }
    Ok(())
}

fn field<T: serde::de::DeserializeOwned>(doc: &Value, key: &str) -> Result<T, String> {
    let v = doc.get(key).ok_or_else(|| format!("missing {key:?}"))?;
    serde_json::from_value(v.clone()).map_err(|e| format!("{key}: {e}"))
}

fn summarize(run: &str, doc: &Value, s: &mut Summary) -> Result<Row, String> {
    if doc.get("format").and_then(Value::as_str) != Some(FORMAT) {
        return Err("not a normsolve diagnostics document".into());
    }
    let kind: String = field(doc, "kind")?;
    let row = |ok: bool, value: Option<f64>, detail: String| Row { run: run.to_string(), kind: kind.clone(), ok, value, detail };
    match kind.as_str() {
        "solve" => {
            let result: Option<SolveSummary> = field(doc, "result")?;
            Ok(match result {
                Some(r) => {
                    let d = r.diagnostics;
                    row(
                        r.converged && r.certificates.all(),
                        Some(d.energy),
                        format!("{:?}: λ = ({:.6e}, {:.6e}), gradient {:.2e}", r.branch, d.lambda1, d.lambda2, d.grad_norm),
                    )
                }
                None => row(false, None, field::<String>(doc, "error").unwrap_or_default()),
            })
        }
        "thresholds" => {
            let r: ThresholdReport = field(doc, "report")?;
            let opt = |x: Option<f64>| x.map_or("-".into(), |v| format!("{v:.6e}"));
            Ok(row(true, r.r0, format!("{}: R0 = {}, R1 = {}", r.regime.name(), opt(r.r0), opt(r.r1))))
        }
        "profile" => {
            let p: Value = field(doc, "profile")?;
            let mass = p.get("mass").and_then(Value::as_f64).ok_or("profile.mass missing")?;
            Ok(row(true, Some(mass), format!("N = {}, p = {}, u(0) = {}", p["N"], p["power"], p["center"])))
        }
        "evolve" => {
            let ground: SolveSummary = field(doc, "ground")?;
            let stability: Option<StabilityReport> = field(doc, "stability")?;
            let sup = doc.pointer("/unperturbed/sup_distance").and_then(Value::as_f64);
            let stable = stability.as_ref().map_or(true, |st| st.stable);
            let detail = match &stability {
                Some(st) => format!("{} perturbed runs, stable: {}", st.runs.len(), st.stable),
                None => "unperturbed only".into(),
            };
            Ok(row(ground.converged && sup.is_some() && stable, sup, detail))
        }
        "collapse" | "bubble" | "betalimit" | "cutoff" => {
            let r: SweepResult = field(doc, "sweep")?;
            for f in &r.fits {
                s.fits.push(FitRow { run: run.into(), quantity: f.quantity.clone(), slope: f.slope, residual: f.residual, points: f.points });
            }
            for c in &r.checks {
                s.checks.push(CheckRow { run: run.into(), name: c.name.clone(), passed: c.passed, detail: c.detail.clone() });
            }
            let passed = r.checks.iter().filter(|c| c.passed).count();
            let slope = r.fits.first().map(|f| f.slope);
            let fitted = r.fits.iter().map(|f| format!("{} slope {:.4}", f.quantity, f.slope)).collect::<Vec<_>>().join(", ");
            Ok(row(
                r.all_passed(),
                slope,
                format!("{} points{}, {passed}/{} checks pass; {fitted}", r.points.len(), if r.partial { " (partial)" } else { "" }, r.checks.len()),
            ))
        }
        other => Err(format!("unknown kind {other:?}")),
    }
}

/// Reads every JSON document under `dir` (three levels deep).
pub fn collect(dir: &Path) -> Result<Summary> {
    if !dir.is_dir() {
        bail!("{} is not a directory", dir.display());
    }
    let mut files = Vec::new();
    walk(dir, 3, &mut files)?;
    let mut s = Summary::default();
    for path in files {
        let rel = path.strip_prefix(dir).unwrap_or(&path);
        let name = rel.to_string_lossy().into_owned();
        match path.extension().and_then(|e| e.to_str()) {
            Some("json") => {}
            Some("csv") if rel.parent().is_some_and(|p| !p.as_os_str().is_empty()) => {
                s.plots.push(name);
                continue;
            }
            _ => continue,
        }
        let run = rel.parent().map(|p| p.to_string_lossy().into_owned()).filter(|p| !p.is_empty()).unwrap_or_else(|| ".".into());
        let parsed = fs::read_to_string(&path)
            .map_err(|e| e.to_string())
            .and_then(|t| serde_json::from_str::<Value>(&t).map_err(|e| format!("invalid JSON: {e}")))
            .and_then(|doc| summarize(&run, &doc, &mut s));
        match parsed {
            Ok(row) => s.rows.push(row),
            Err(reason) => s.skipped.push((name, reason)),
        }
    }
    Ok(s)
}

fn csv_cell(x: &str) -> String {
    if x.contains([',', '"', '\n']) {
        format!("\"{}\"", x.replace('"', "\"\""))
    } else {
        x.to_string()
    }
}

fn value_cell(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

pub fn to_markdown(s: &Summary) -> String {
    let mut md = String::from("# normsolve report\n\n| run | kind | ok | value | detail |\n|---|---|---|---|---|\n");
    for r in &s.rows {
        let value = r.value.map_or("-".into(), |v| format!("{v:.10e}"));
        let _ = writeln!(md, "| {} | {} | {} | {value} | {} |", r.run, r.kind, if r.ok { "yes" } else { "no" }, r.detail);
    }
    if !s.fits.is_empty() {
        md.push_str("\n## Fitted exponents\n\n| run | quantity | slope | residual | points |\n|---|---|---|---|---|\n");
        for f in &s.fits {
            let _ = writeln!(md, "| {} | {} | {:.4} | {:.2e} | {} |", f.run, f.quantity, f.slope, f.residual, f.points);
        }
    }
    if !s.checks.is_empty() {
        md.push_str("\n## Checks\n\n| run | check | verdict | detail |\n|---|---|---|---|\n");
        for c in &s.checks {
            let _ = writeln!(md, "| {} | {} | {} | {} |", c.run, c.name, if c.passed { "pass" } else { "fail" }, c.detail);
        }
    }
    if !s.plots.is_empty() {
        md.push_str("\n## Plot-ready tables\n\n");
        for p in &s.plots {
            let _ = writeln!(md, "- {p}");
        }
    }
    if !s.skipped.is_empty() {
        md.push_str("\n## Skipped\n\n");
        for (path, why) in &s.skipped {
            let _ = writeln!(md, "- {path}: {why}");
        }
    }
    md
}

pub fn to_csv(s: &Summary) -> String {
    let mut out = String::from("run,kind,ok,value,detail\n");
    for r in &s.rows {
        let _ = writeln!(out, "{},{},{},{},{}", csv_cell(&r.run), r.kind, r.ok, value_cell(r.value), csv_cell(&r.detail));
    }
    out
}

pub fn fits_csv(s: &Summary) -> String {
    let mut out = String::from("run,quantity,slope,residual,points\n");
    for f in &s.fits {
        let _ = writeln!(out, "{},{},{},{},{}", csv_cell(&f.run), f.quantity, f.slope, f.residual, f.points);
    }
    out
}

/// Writes `report.md`, `report.csv` and `fits.csv` into `out`; fails when
/// nothing under `dir` could be aggregated.
pub fn report(dir: &Path, out: &Path) -> Result<Summary> {
    let s = collect(dir)?;
    for (path, why) in &s.skipped {
        eprintln!("skipped {path}: {why}");
    }
    if s.rows.is_empty() {
        bail!("nothing to aggregate under {}", dir.display());
    }
    fs::create_dir_all(out)?;
    fs::write(out.join("report.md"), to_markdown(&s))?;
    fs::write(out.join("report.csv"), to_csv(&s))?;
    fs::write(out.join("fits.csv"), fits_csv(&s))?;
    Ok(s)
}
