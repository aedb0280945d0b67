//! Scaling-law experiments: small-mass collapse in `R³`, the `β → 0` limit of
//! the excited state, the small-mass bubble limit in `R⁴` and the cutoff
//! bubble estimates.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::profiles::{AubinTalenti, BubbleParams, ConstantsTable, GroundState};
use crate::solver::{
    aligned_distance, solve_local_min, solve_mountain_pass, SolveConfig, SolveResult, SolveSummary,
};
use crate::state::h1_norm;
use crate::thresholds::{classify_regime, Regime};
use crate::{Field, Grid, Params, State};

/// Rates of the small-mass rescaling `u(x) ≈ L₁ ũ(θ₁x)`, `v(x) ≈ L₂ ṽ(θ₂x)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseScaling {
    pub theta1: f64,
    pub theta2: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: f64,
    pub lambda1_ref: f64,
    pub lambda2_ref: f64,
}

impl CollapseScaling {
    /// `w_mass_sq` is `‖w‖²` for `-Δw + w = w²` in `R³`.
    pub fn new(p: &Params, w_mass_sq: f64) -> Result<Self> {
        p.validate()?;
        if p.dim != 3 || !(p.beta > 0.0) || !(w_mass_sq > 0.0) {
            return Err(Error::Domain(
                "collapse rates need N = 3, β > 0 and ‖w‖ > 0".into(),
            ));
        }
        let (b1, b2, beta) = (p.b1, p.b2, p.beta);
        let w2 = w_mass_sq;
        let b4 = beta.powi(4);
        let s = CollapseScaling {
            theta1: 2.0 * beta * beta * b1.powf(1.2) * b2.powf(0.8) / (16f64.powf(0.4) * w2),
            theta2: beta * beta * b1.powf(1.6) * b2.powf(0.4) / (16f64.powf(0.2) * w2),
            l1: 2.0 * b4 * b1.powf(2.8) * b2.powf(1.2) / (16f64.powf(0.6) * w2 * w2),
            l2: 4.0 * b4 * b1.powf(2.4) * b2.powf(1.6) / (16f64.powf(0.8) * w2 * w2),
            lambda1_ref: 4.0 * b4 * b1.powf(2.4) * b2.powf(1.6) / (16f64.powf(0.8) * w2 * w2),
            lambda2_ref: b4 * b1.powf(3.2) * b2.powf(0.8) / (16f64.powf(0.4) * w2 * w2),
        };
        let (m1, m2) = s.masses(beta, w2);
        let err = ((m1 - b1 * b1) / (b1 * b1)).abs().max(((m2 - b2 * b2) / (b2 * b2)).abs());
        if !(err < 1e-6) {
            return Err(Error::Structure(format!(
                "rescaled masses miss the spheres by {err:.2e}"
            )));
        }
        Ok(s)
    }

    /// `(‖L₁u₀(θ₁·)‖², ‖L₂v₀(θ₂·)‖²)` with `u₀ = √2β⁻¹w`, `v₀ = β⁻¹w`.
    pub fn masses(&self, beta: f64, w_mass_sq: f64) -> (f64, f64) {
        let base = w_mass_sq / (beta * beta);
        (
            self.l1 * self.l1 * 2.0 * base / self.theta1.powi(3),
            self.l2 * self.l2 * base / self.theta2.powi(3),
        )
    }

    /// The masses lie on the ray `b₁ = √2 b₂`, where both rescalings agree.
    pub fn on_ray(&self) -> bool {
        ((self.theta1 - self.theta2) / self.theta1).abs() < 1e-12
    }
}

/// `(L₁u₀(θ₁x), L₂v₀(θ₂x))` built from the computed `w`, on the grid of `w`
/// shrunk by `θ₁`.
pub fn explicit_state(p: &Params, w: &GroundState) -> Result<State> {
    if w.dim != 3 || w.power != 2 {
        return Err(Error::Domain("explicit state needs w solving -Δw + w = w² in R³".into()));
    }
    let sc = CollapseScaling::new(p, w.field.mass())?;
    let grid = Arc::new(w.field.grid().scaled(1.0 / sc.theta1)?);
    let a1 = sc.l1 * 2f64.sqrt() / p.beta;
    let a2 = sc.l2 / p.beta;
    let u = RadialField::new(grid.clone(), w.field.values().iter().map(|x| a1 * x).collect())?;
    let v = if sc.on_ray() {
        RadialField::new(grid.clone(), w.field.values().iter().map(|x| a2 * x).collect())?
    } else {
        RadialField::from_fn(grid.clone(), |r| a2 * w.field.sample(sc.theta2 * r))
    };
    State::new(u, v, p.b1, p.b2)
}

/// Closed-form energy of the explicit state on the ray `b₁ = √2 b₂`, and the
/// refined upper bound for `m⁺` in general.
pub fn quadratic_limit_energy(p: &Params, c: &ConstantsTable) -> f64 {
    let (b1, b2) = (p.b1, p.b2);
    let b4 = p.beta.powi(4);
    let w6 = c.w_mass_sq.powi(3);
    let a = 4.0 * b4 * b1.powf(4.4) * b2.powf(1.6) / (16f64.powf(0.8) * w6);
    let b = b4 * b1.powf(3.2) * b2.powf(2.8) / (16f64.powf(0.4) * w6);
    -(a + b) * c.w_kinetic / 6.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub energy: f64,
    pub bound: f64,
    /// `bound - energy`; positive when the bound holds.
    pub margin: f64,
    pub satisfied: bool,
}

pub fn refined_energy_bound_check(p: &Params, ground: &SolveResult, c: &ConstantsTable) -> BoundReport {
    let energy = ground.diagnostics.energy;
    let bound = quadratic_limit_energy(p, c);
    BoundReport {
        energy,
        bound,
        margin: bound - energy,
        satisfied: energy < bound,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub swept: f64,
    pub params: Option<Params>,
    pub converged: bool,
    pub summary: Option<SolveSummary>,
    pub error: Option<String>,
    pub extras: BTreeMap<String, f64>,
}

impl SweepPoint {
    fn new(swept: f64, params: Option<Params>) -> Self {
        SweepPoint {
            swept,
            params,
            converged: false,
            summary: None,
            error: None,
            extras: BTreeMap::new(),
        }
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.extras.get(key).copied()
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub quantity: String,
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square deviation of `ln y` from the line.
    pub residual: f64,
    pub points: usize,
}

pub fn fit_loglog(quantity: &str, xs: &[f64], ys: &[f64]) -> Option<Fit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    Some(Fit {
        quantity: quantity.to_string(),
        slope,
        intercept,
        residual: (ss / nf).sqrt(),
        points: n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub experiment: String,
    pub swept: String,
    pub points: Vec<SweepPoint>,
    pub fits: Vec<Fit>,
    pub checks: Vec<Check>,
    /// Some point failed to converge or errored.
    pub partial: bool,
}

impl SweepResult {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn fit(&self, quantity: &str) -> Option<&Fit> {
        self.fits.iter().find(|f| f.quantity == quantity)
    }

    pub fn all_passed(&self) -> bool {
        !self.partial && self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// One row per ladder point; extras appear as columns in key order.
    pub fn to_csv(&self) -> String {
        let keys: Vec<&String> = {
            let mut k: Vec<&String> = self.points.iter().flat_map(|p| p.extras.keys()).collect();
            k.sort();
            k.dedup();
            k
        };
        let mut out = format!("{},converged,energy", self.swept);
        for k in &keys {
            out.push(',');
            out.push_str(k);
        }
        out.push('\n');
        for p in &self.points {
            let energy = p.summary.as_ref().map_or(f64::NAN, |s| s.diagnostics.energy);
            out.push_str(&format!("{},{},{}", p.swept, p.converged, energy));
            for k in &keys {
                match p.extras.get(*k) {
                    Some(v) => out.push_str(&format!(",{v}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }

    fn column(&self, key: &str) -> (Vec<f64>, Vec<f64>) {
        self.points
            .iter()
            .filter_map(|p| p.get(key).map(|v| (p.swept, v)))
            .unzip()
    }

    fn add_fit(&mut self, key: &str) -> Option<Fit> {
        let (xs, ys) = self.column(key);
        let fit = fit_loglog(key, &xs, &ys)?;
        self.fits.push(fit.clone());
        Some(fit)
    }
}

/// Strictly monotone and positive, at least two points.
pub fn validate_ladder(xs: &[f64]) -> Result<()> {
    if xs.len() < 2 {
        return Err(Error::Config("a ladder needs at least two points".into()));
    }
    if xs.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::Config("ladder values must be positive".into()));
    }
    let up = xs.windows(2).all(|w| w[1] > w[0]);
    let down = xs.windows(2).all(|w| w[1] < w[0]);
    if !(up || down) {
        return Err(Error::Config("ladder must be strictly monotone".into()));
    }
    Ok(())
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.len() >= 2 && v.windows(2).all(|w| w[1] < w[0])
}

fn fmt_list(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.4e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn record(point: &mut SweepPoint, p: &Params, r: &SolveResult) {
    point.converged = r.converged;
    point.summary = Some(r.summary(p));
    let d = &r.diagnostics;
    point.extras.insert("kinetic".into(), d.kinetic);
    point.extras.insert("lambda1".into(), d.lambda1);
    point.extras.insert("lambda2".into(), d.lambda2);
}

/// `(ũ, ṽ)(x) = (u(x/θ₁)/L₁, v(x/θ₂)/L₂)` sampled on `target`.
pub fn rescaled_profile(s: &State, sc: &CollapseScaling, target: Arc<Grid>) -> Result<State> {
    let u = RadialField::from_fn(target.clone(), |r| s.u.sample(r / sc.theta1) / sc.l1);
    let v = RadialField::from_fn(target, |r| s.v.sample(r / sc.theta2) / sc.l2);
    State::new(u, v, s.b1, s.b2)
}

/// The gradient pulled back to the solver's unit-width grid scales like the
/// multipliers, so the default tolerance follows `θ₁²` once that is small.
fn collapse_config(cfg: &SolveConfig, p: &Params, sc: &CollapseScaling) -> SolveConfig {
    let mut out = cfg.clone();
    if out.tol_grad.is_none() {
        let base = out.tol_grad_for(p);
        out.tol_grad = Some(base.min(1e-5 * (p.b1 + p.b2) * sc.theta1 * sc.theta1));
    }
    out
}

/// Local minimisers along a shrinking mass ladder, rescaled and compared with
/// `(√2β⁻¹w, β⁻¹w)`. `ladder` holds `(b₁, b₂)`; the swept value is `b₁`.
pub fn collapse_experiment(
    base: &Params,
    ladder: &[(f64, f64)],
    cfg: &SolveConfig,
) -> Result<SweepResult> {
    if base.dim != 3 {
        return Err(Error::Domain("mass collapse is three-dimensional".into()));
    }
    validate_ladder(&ladder.iter().map(|l| l.0).collect::<Vec<_>>())?;
    let c = ConstantsTable::global();
    let w = crate::profiles::solve_scalar_ground_state(3, 2)?;
    let wgrid = w.field.grid().clone();
    let beta = base.beta;
    let target = {
        let a = 2f64.sqrt() / beta;
        let u = w.field.map(|x| a * x);
        let v = w.field.map(|x| x / beta);
        State::new(u, v, 1.0, 1.0)?
    };
    let target_norm = h1_norm(&target);

    let mut points: Vec<SweepPoint> = ladder
        .par_iter()
        .map(|&(b1, b2)| {
            let p = base.with_masses(b1, b2);
            let mut point = SweepPoint::new(b1, Some(p));
            let regime = classify_regime(&p, &c).regime;
            if regime != Regime::TwoSolution3d {
                point.error = Some(format!("regime {}", regime.name()));
                return point;
            }
            let Ok(sc) = CollapseScaling::new(&p, c.w_mass_sq) else {
                point.error = Some("collapse rates undefined".into());
                return point;
            };
            let r = match solve_local_min(&p, &collapse_config(cfg, &p, &sc)) {
                Ok(r) => r,
                Err(e) => {
                    point.error = Some(e.to_string());
                    return point;
                }
            };
            record(&mut point, &p, &r);
            let d = &r.diagnostics;
            point.extras.insert("theta1".into(), sc.theta1);
            point.extras.insert("theta2".into(), sc.theta2);
            point.extras.insert("ratio1".into(), d.lambda1 / (sc.theta1 * sc.theta1));
            point.extras.insert("ratio2".into(), d.lambda2 / (sc.theta2 * sc.theta2));
            if let Ok(tilde) = rescaled_profile(&r.state, &sc, wgrid.clone()) {
                if let Ok(dist) = crate::state::h1_distance(&tilde, &target) {
                    point.extras.insert("profile_error".into(), dist / target_norm);
                }
            }
            let bound = refined_energy_bound_check(&p, &r, &c);
            point.extras.insert("bound".into(), bound.bound);
            point.extras.insert("bound_margin".into(), bound.margin);
            point
        })
        .collect();
    points.sort_by(|a, b| b.swept.total_cmp(&a.swept));

    let mut out = SweepResult {
        experiment: "collapse".into(),
        swept: "b1".into(),
        partial: points.iter().any(|p| !p.converged || p.error.is_some()),
        points,
        fits: Vec::new(),
        checks: Vec::new(),
    };
    let kin = out.add_fit("kinetic");
    out.checks.push(match kin {
        Some(f) => Check::new(
            "kinetic_slope",
            f.points >= 4 && (f.slope - 6.0).abs() <= 0.5,
            format!("slope {:.4} over {} points (target 6 ± 0.5)", f.slope, f.points),
        ),
        None => Check::new("kinetic_slope", false, "too few points".into()),
    });
    let (_, errs) = out.column("profile_error");
    out.checks.push(Check::new(
        "profile_error_decreasing",
        errs.len() == out.points.len() && strictly_decreasing(&errs),
        fmt_list(&errs),
    ));
    let last = errs.last().copied().unwrap_or(f64::NAN);
    out.checks.push(Check::new(
        "profile_error_final",
        last < 0.1,
        format!("{last:.4e} (target < 0.1)"),
    ));
    let lastp = out.points.last();
    let r1 = lastp.and_then(|p| p.get("ratio1")).unwrap_or(f64::NAN);
    let r2 = lastp.and_then(|p| p.get("ratio2")).unwrap_or(f64::NAN);
    out.checks.push(Check::new(
        "multiplier_ratios",
        (r1 - 1.0).abs() <= 0.2 && (r2 - 1.0).abs() <= 0.2,
        format!("λ₁/θ₁² = {r1:.4}, λ₂/θ₂² = {r2:.4} at the smallest mass"),
    ));
    let (_, margins) = out.column("bound_margin");
    out.checks.push(Check::new(
        "refined_bound",
        margins.len() == out.points.len() && margins.iter().all(|m| *m > 0.0),
        format!("margins {}", fmt_list(&margins)),
    ));
    Ok(out)
}

/// Amplitude fit of the bubble pair `(√k₁U_ε, √k₂U_ε)` to a state.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleFit {
    /// Scale from the central amplitude `√(u(0)² + v(0)²) = 2√2√(k₁+k₂)/ε`.
    pub eps: f64,
    /// Radius where `√(u² + v²)` falls to half its central value; equals `ε`
    /// for an exact bubble pair.
    pub eps_width: f64,
    /// `‖∇(u − √k₁U_ε, v − √k₂U_ε)‖² / ((k₁+k₂)S²)`, square-rooted.
    pub d12_error: f64,
}

pub fn fit_bubble(s: &State, bp: &BubbleParams) -> Result<BubbleFit> {
    let grid = s.grid();
    if grid.dim() != 4 {
        return Err(Error::Domain("bubble fit is four-dimensional".into()));
    }
    let amp = |r: f64| s.u.sample(r).hypot(s.v.sample(r));
    let peak = s.u.values()[0].hypot(s.v.values()[0]);
    let center = amp(0.0).max(peak);
    let kk = bp.k1 + bp.k2;
    let eps = 2.0 * 2f64.sqrt() * kk.sqrt() / center;
    let nodes = grid.nodes();
    let amps: Vec<f64> = s.u.values().iter().zip(s.v.values()).map(|(a, b)| a.hypot(*b)).collect();
    let half = 0.5 * center;
    let eps_width = match amps.iter().position(|&a| a < half) {
        Some(0) => nodes[0],
        Some(j) => {
            let (r0, r1, a0, a1) = (nodes[j - 1], nodes[j], amps[j - 1], amps[j]);
            r0 + (a0 - half) / (a0 - a1) * (r1 - r0)
        }
        None => grid.r_max(),
    };
    let bubble = AubinTalenti::new(eps)?;
    let b = grid.tabulate(|r| bubble.value(r));
    let du: Vec<f64> = s.u.values().iter().zip(&b).map(|(x, y)| x - bp.k1.sqrt() * y).collect();
    let dv: Vec<f64> = s.v.values().iter().zip(&b).map(|(x, y)| x - bp.k2.sqrt() * y).collect();
    let inside = grid.kinetic(&du) + grid.kinetic(&dv);
    let total = inside + kk * bubble.gradient_tail(grid.r_max());
    let scale = bp.s_coupled.powi(2);
    Ok(BubbleFit {
        eps,
        eps_width,
        d12_error: (total / scale).sqrt(),
    })
}

/// Mountain-pass states along a shrinking mass ladder in `R⁴` compared with
/// the bubble pair. With `refine`, the smallest-mass point is re-solved on a
/// grid with twice the nodes to test the stability of the fitted `ε`.
pub fn bubble_limit_experiment(
    base: &Params,
    ladder: &[(f64, f64)],
    cfg: &SolveConfig,
    refine: bool,
) -> Result<SweepResult> {
    if base.dim != 4 {
        return Err(Error::Domain("the bubble limit is four-dimensional".into()));
    }
    validate_ladder(&ladder.iter().map(|l| l.0).collect::<Vec<_>>())?;
    let bp = BubbleParams::new(base.mu1, base.mu2, base.rho)?;
    let level = bp.level();
    let c = ConstantsTable::global();

    let measure = |p: &Params, cfg: &SolveConfig| -> (SweepPoint, Option<BubbleFit>) {
        let mut point = SweepPoint::new(p.b1, Some(*p));
        let regime = classify_regime(p, &c).regime;
        if regime != Regime::Critical4dOk {
            point.error = Some(format!("regime {}", regime.name()));
            return (point, None);
        }
        let r = match solve_mountain_pass(p, cfg) {
            Ok(r) => r,
            Err(e) => {
                point.error = Some(e.to_string());
                return (point, None);
            }
        };
        record(&mut point, p, &r);
        let d = &r.diagnostics;
        point.extras.insert("level".into(), level);
        point.extras.insert("gap".into(), (level - d.energy) / level);
        point.extras.insert("coupling".into(), p.beta * d.cubic_coupling);
        let l4 = |f: &Field| f.grid().integrate(&f.values().iter().map(|x| x.powi(4)).collect::<Vec<_>>());
        let ratio = (l4(&r.state.u) / l4(&r.state.v)).powf(0.25);
        point.extras.insert("l4_ratio".into(), ratio);
        point.extras.insert("l4_ratio_target".into(), (bp.k1 / bp.k2).sqrt());
        let fit = fit_bubble(&r.state, &bp).ok();
        if let Some(f) = fit {
            point.extras.insert("eps".into(), f.eps);
            point.extras.insert("eps_width".into(), f.eps_width);
            point.extras.insert("d12_error".into(), f.d12_error);
        }
        (point, fit)
    };

    let mut points: Vec<SweepPoint> = ladder
        .par_iter()
        .map(|&(b1, b2)| measure(&base.with_masses(b1, b2), cfg).0)
        .collect();
    points.sort_by(|a, b| b.swept.total_cmp(&a.swept));

    let mut out = SweepResult {
        experiment: "bubble".into(),
        swept: "b1".into(),
        partial: points.iter().any(|p| !p.converged || p.error.is_some()),
        points,
        fits: Vec::new(),
        checks: Vec::new(),
    };
    out.add_fit("gap");
    out.add_fit("coupling");
    out.add_fit("eps");
    let n = out.points.len();
    let energies: Vec<f64> = out
        .points
        .iter()
        .filter_map(|p| p.summary.as_ref().map(|s| s.diagnostics.energy))
        .collect();
    out.checks.push(Check::new(
        "below_level",
        energies.len() == n && energies.iter().all(|e| *e > 0.0 && *e < level),
        format!("energies {} vs level {level:.6}", fmt_list(&energies)),
    ));
    let (_, gaps) = out.column("gap");
    out.checks.push(Check::new(
        "gap_decreasing",
        gaps.len() == n && strictly_decreasing(&gaps),
        fmt_list(&gaps),
    ));
    let last_gap = gaps.last().copied().unwrap_or(f64::NAN);
    out.checks.push(Check::new(
        "gap_final",
        last_gap < 0.05,
        format!("{last_gap:.4e} (target < 0.05)"),
    ));
    let (_, d12) = out.column("d12_error");
    out.checks.push(Check::new(
        "d12_decreasing",
        d12.len() == n && strictly_decreasing(&d12),
        fmt_list(&d12),
    ));
    let lastp = out.points.last();
    let ratio = lastp.and_then(|p| p.get("l4_ratio")).unwrap_or(f64::NAN);
    let want = (bp.k1 / bp.k2).sqrt();
    out.checks.push(Check::new(
        "component_ratio",
        ((ratio - want) / want).abs() < 0.05,
        format!("‖u‖₄/‖v‖₄ = {ratio:.5} vs (k₁/k₂)^½ = {want:.5}"),
    ));
    let (_, coupling) = out.column("coupling");
    out.checks.push(Check::new(
        "coupling_vanishing",
        coupling.len() == n && strictly_decreasing(&coupling),
        fmt_list(&coupling),
    ));
    if refine {
        if let Some(last) = out.points.last().and_then(|p| p.params) {
            let mut fine = cfg.clone();
            fine.grid.n *= 2;
            let (point, fit) = measure(&last, &fine);
            let coarse = out.points.last().and_then(|p| p.get("eps"));
            let (passed, detail) = match (fit, coarse) {
                (Some(f), Some(e)) => {
                    let rel = (f.eps - e).abs() / e;
                    (rel < 0.02, format!("ε {e:.6e} → {:.6e}, rel. change {rel:.3e}", f.eps))
                }
                _ => (false, point.error.unwrap_or_else(|| "refined solve failed".into())),
            };
            out.checks.push(Check::new("eps_refinement", passed, detail));
        }
    }
    Ok(out)
}

fn flat(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

fn flat_prime(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp() / (s * s)
    } else {
        0.0
    }
}

/// Smooth radial cutoff, `1` on the unit ball and `0` outside radius 2,
/// with its derivative.
pub fn cutoff(r: f64) -> (f64, f64) {
    let a = flat(2.0 - r);
    let b = flat(r - 1.0);
    let s = a + b;
    let da = -flat_prime(2.0 - r);
    let db = flat_prime(r - 1.0);
    (a / s, (da * b - a * db) / (s * s))
}

/// `∫|∇U|² = ∫U⁴` for the bubble in `R⁴`, in closed form.
pub fn bubble_energy() -> f64 {
    32.0 * PI * PI / 3.0
}

/// Norms of the cut-off bubble `W_ε = ξU_ε` on a grid of `n` nodes over the
/// ball of radius 2. The deficits against `S²` are integrated only where
/// `ξ < 1`, plus the analytic tail outside the ball.
pub fn cutoff_bubble_estimates(eps_ladder: &[f64], n: usize) -> Result<SweepResult> {
    validate_ladder(eps_ladder)?;
    if eps_ladder.iter().any(|e| *e > 0.5) {
        return Err(Error::Domain("cutoff estimates take ε in (0, 0.5]".into()));
    }
    let grid = Grid::graded(4, 2.0, n, 8.0)?;
    let mut points = Vec::new();
    for &eps in eps_ladder {
        let b = AubinTalenti::new(eps)?;
        let mut cols: [Vec<f64>; 5] = Default::default();
        for &r in grid.nodes() {
            let (xi, dxi) = cutoff(r);
            let (u, du) = (b.value(r), b.derivative(r));
            let w = xi * u;
            let dw = dxi * u + xi * du;
            cols[0].push(du * du - dw * dw);
            cols[1].push((1.0 - xi.powi(4)) * u.powi(4));
            cols[2].push(w.powi(3));
            cols[3].push(w * w);
            cols[4].push(dw * dw);
        }
        let r_max = grid.r_max();
        let grad_deficit = (grid.integrate(&cols[0]) + b.gradient_tail(r_max)).abs();
        let l4_deficit = grid.integrate(&cols[1]) + b.quartic_tail(r_max);
        let l3 = grid.integrate(&cols[2]);
        let l2 = grid.integrate(&cols[3]);
        let mut point = SweepPoint::new(eps, None);
        point.converged = true;
        point.extras.insert("grad_sq".into(), grid.integrate(&cols[4]));
        point.extras.insert("grad_deficit".into(), grad_deficit);
        point.extras.insert("l4_deficit".into(), l4_deficit);
        point.extras.insert("l3_cubed".into(), l3);
        point.extras.insert("l2_sq".into(), l2);
        point.extras.insert("l2_over_log".into(), l2 / eps.ln().abs());
        points.push(point);
    }
    let mut out = SweepResult {
        experiment: "cutoff".into(),
        swept: "eps".into(),
        points,
        fits: Vec::new(),
        checks: Vec::new(),
        partial: false,
    };
    for (key, target, name) in [
        ("grad_deficit", 2.0, "gradient_slope"),
        ("l3_cubed", 1.0, "l3_slope"),
        ("l2_over_log", 2.0, "l2_log_slope"),
        ("l4_deficit", 4.0, "l4_slope"),
    ] {
        let fit = out.add_fit(key);
        out.checks.push(match fit {
            Some(f) => Check::new(
                name,
                f.points >= 4 && (f.slope - target).abs() <= 0.3,
                format!("slope {:.4} (target {target} ± 0.3), residual {:.2e}", f.slope, f.residual),
            ),
            None => Check::new(name, false, "too few points".into()),
        });
    }
    Ok(out)
}

/// Both branches along a decreasing `β` ladder at fixed masses, compared with
/// the `β = 0` excited state.
pub fn beta_limit_experiment(base: &Params, betas: &[f64], cfg: &SolveConfig) -> Result<SweepResult> {
    if base.dim != 3 {
        return Err(Error::Domain("the β limit is three-dimensional".into()));
    }
    validate_ladder(betas)?;
    if betas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::Config("β ladder must decrease".into()));
    }
    let p0 = base.with_beta(0.0);
    let reference = solve_mountain_pass(&p0, cfg)?;
    let ref_norm = h1_norm(&reference.state);
    let m0 = reference.diagnostics.energy;

    let mut points: Vec<SweepPoint> = betas
        .par_iter()
        .map(|&beta| {
            let p = base.with_beta(beta);
            let mut point = SweepPoint::new(beta, Some(p));
            match solve_mountain_pass(&p, cfg) {
                Ok(r) => {
                    record(&mut point, &p, &r);
                    point.extras.insert("m_minus".into(), r.diagnostics.energy);
                    if let Ok(d) = aligned_distance(&reference.state, &r.state) {
                        point.extras.insert("excited_distance".into(), d / ref_norm);
                    }
                }
                Err(e) => point.error = Some(e.to_string()),
            }
            match solve_local_min(&p, cfg) {
                Ok(r) if r.converged => {
                    point.extras.insert("m_plus".into(), r.diagnostics.energy);
                    point.extras.insert("kinetic_plus".into(), r.diagnostics.kinetic);
                }
                _ => {
                    point.extras.insert("ground_lost".into(), 1.0);
                }
            }
            point
        })
        .collect();
    points.sort_by(|a, b| b.swept.total_cmp(&a.swept));

    let mut out = SweepResult {
        experiment: "betalimit".into(),
        swept: "beta".into(),
        partial: points.iter().any(|p| !p.converged || p.error.is_some()),
        points,
        fits: Vec::new(),
        checks: Vec::new(),
    };
    let n = out.points.len();
    let (_, mplus) = out.column("m_plus");
    let abs_plus: Vec<f64> = mplus.iter().map(|m| m.abs()).collect();
    out.checks.push(Check::new(
        "m_plus_vanishing",
        abs_plus.len() >= 2 && strictly_decreasing(&abs_plus) && mplus.iter().all(|m| *m < 0.0),
        format!("m⁺ {} ({} of {n} points lost the ground branch)", fmt_list(&mplus), n - mplus.len()),
    ));
    let (_, mminus) = out.column("m_minus");
    let chain = mminus.len() == n
        && mminus.windows(2).all(|w| w[0] <= w[1] + 1e-12)
        && mminus.iter().all(|m| *m <= m0 + 1e-4);
    out.checks.push(Check::new(
        "m_minus_chain",
        chain,
        format!("m⁻ {} with m⁻₀ = {m0:.8}", fmt_list(&mminus)),
    ));
    let (_, dist) = out.column("excited_distance");
    out.checks.push(Check::new(
        "excited_distance_decreasing",
        dist.len() == n && strictly_decreasing(&dist),
        fmt_list(&dist),
    ));
    let last = dist.last().copied().unwrap_or(f64::NAN);
    out.checks.push(Check::new(
        "excited_distance_final",
        last < 0.05,
        format!("{last:.4e} (target < 0.05)"),
    ));
    out.add_fit("excited_distance");
    Ok(out)
}
