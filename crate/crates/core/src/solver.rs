//! Constrained minimisation on the product of mass spheres.
//!
//! Every mode minimises a dilation-invariant functional `M` over states on a
//! fixed reference grid:
//!
//! - `global_min`: `M = min_t Ψ(t)`, which has the same infimum as `J`;
//! - `local_min`: `M = Ψ(s)` at the fiber's local minimum (projection to `P⁺`);
//! - `mountain_pass`: `M = Ψ(t)` at the fiber's maximum (projection to `P⁻`);
//! - `rayleigh_quotient_A`: `M = K/Q`.
//!
//! The inner fiber optimum contributes no derivative, so `∇M` is the gradient
//! of `J` at the dilated state pulled back to the reference grid. The
//! physical state is recovered at the end by rescaling the grid, which is an
//! exact symmetry of the discrete functional.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::banded::BandedLu;
use crate::error::{Error, Result};
use crate::functional::{
    diagnostics, fiber_from, fiber_roots, gradient_blend, integrals, project_tangent, Blend,
    Diagnostics, Integrals, Tangent,
};
use crate::grid::Spacing;
use crate::newton::{self, System};
use crate::profiles::ConstantsTable;
use crate::thresholds::{classify_regime, solve_r0_r1, Regime};
use crate::{Field, Grid, Params, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    GlobalMin,
    LocalMin,
    MountainPass,
    #[serde(rename = "rayleigh_quotient_A")]
    RayleighQuotientA,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    GroundPlus,
    ExcitedMinus,
    Global,
    Quotient,
}

/// Which components take part; the others are held at zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Support {
    #[default]
    Both,
    FirstOnly,
    SecondOnly,
}

impl Support {
    fn active(self) -> [bool; 2] {
        match self {
            Support::Both => [true, true],
            Support::FirstOnly => [true, false],
            Support::SecondOnly => [false, true],
        }
    }
}

/// Reference grid; `r_max = None` picks the decay heuristic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub r_max: Option<f64>,
    #[serde(default = "default_spacing")]
    pub spacing: Spacing,
}

fn default_n() -> usize {
    2048
}

fn default_spacing() -> Spacing {
    Spacing::Graded { stretch: 8.0 }
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: default_n(),
            r_max: None,
            spacing: default_spacing(),
        }
    }
}

/// Reference profiles have unit width after recentring; their tails have
/// dropped below `1e-10` of the peak well inside this radius.
pub const AUTO_R_MAX: f64 = 40.0;

impl GridSpec {
    pub fn build(&self, dim: usize) -> Result<Grid> {
        Grid::new(dim, self.r_max.unwrap_or(AUTO_R_MAX), self.n, self.spacing)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub mode: Mode,
    #[serde(default = "default_step")]
    pub step: f64,
    /// Defaults to `1e-7 (b₁ + b₂)`.
    #[serde(default)]
    pub tol_grad: Option<f64>,
    #[serde(default = "default_tol_pohozaev")]
    pub tol_pohozaev: f64,
    #[serde(default = "default_max_iters")]
    pub max_iters: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub ball_radius: Option<f64>,
    #[serde(default)]
    pub support: Support,
    #[serde(default)]
    pub grid: GridSpec,
}

fn default_step() -> f64 {
    1e-2
}
fn default_tol_pohozaev() -> f64 {
    1e-6
}
fn default_max_iters() -> usize {
    50_000
}

impl SolveConfig {
    pub fn new(mode: Mode) -> Self {
        SolveConfig {
            mode,
            step: default_step(),
            tol_grad: None,
            tol_pohozaev: default_tol_pohozaev(),
            max_iters: default_max_iters(),
            seed: 0,
            ball_radius: None,
            support: Support::Both,
            grid: GridSpec::default(),
        }
    }

    pub fn tol_grad_for(&self, p: &Params) -> f64 {
        self.tol_grad.unwrap_or(1e-7 * (p.b1 + p.b2))
    }

    pub fn validate(&self) -> Result<()> {
        let tol_ok = self.tol_grad.map_or(true, |t| t > 0.0);
        if !(self.step > 0.0 && tol_ok && self.tol_pohozaev > 0.0) {
            return Err(Error::Config("step and tolerances must be positive".into()));
        }
        if self.max_iters < 1 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        if self.ball_radius.is_some_and(|r| !(r > 0.0)) {
            return Err(Error::Config("ball_radius must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub grad: bool,
    pub pohozaev: bool,
    pub multiplier: bool,
}

impl Certificates {
    pub fn all(&self) -> bool {
        self.grad && self.pohozaev && self.multiplier
    }
}

#[derive(Clone, Debug)]
pub struct SolveResult {
    pub state: State,
    pub diagnostics: Diagnostics,
    pub converged: bool,
    pub iterations: usize,
    pub branch: Branch,
    pub certificates: Certificates,
    /// Value of the minimised functional (`K/Q` in quotient mode, else the energy).
    pub value: f64,
}

/// JSON-facing summary of a [`SolveResult`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub params: Params,
    pub branch: Branch,
    pub converged: bool,
    pub iterations: usize,
    pub value: f64,
    pub certificates: Certificates,
    pub diagnostics: Diagnostics,
    pub grid_r_max: f64,
    pub grid_n: usize,
}

impl SolveResult {
    pub fn summary(&self, p: &Params) -> SolveSummary {
        SolveSummary {
            params: *p,
            branch: self.branch,
            converged: self.converged,
            iterations: self.iterations,
            value: self.value,
            certificates: self.certificates,
            diagnostics: self.diagnostics,
            grid_r_max: self.state.grid().r_max(),
            grid_n: self.state.grid().len(),
        }
    }
}

pub fn solve(p: &Params, cfg: &SolveConfig) -> Result<SolveResult> {
    match cfg.mode {
        Mode::GlobalMin => solve_global_min(p, cfg),
        Mode::LocalMin => solve_local_min(p, cfg),
        Mode::MountainPass => solve_mountain_pass(p, cfg),
        Mode::RayleighQuotientA => quotient_run(p, cfg),
    }
}

pub fn solve_global_min(p: &Params, cfg: &SolveConfig) -> Result<SolveResult> {
    p.validate()?;
    let c = ConstantsTable::global();
    match p.dim {
        1 => {}
        2 => {
            let report = classify_regime(p, &c);
            if report.regime != Regime::Coercive2d {
                return Err(Error::Regime(format!(
                    "global minimisation needs coercive_2d, got {}",
                    report.regime.name()
                )));
            }
        }
        n => {
            return Err(Error::Regime(format!(
                "J is unbounded below on the spheres for N = {n}"
            )))
        }
    }
    run(p, cfg, Mode::GlobalMin, None)
}

pub fn solve_local_min(p: &Params, cfg: &SolveConfig) -> Result<SolveResult> {
    p.validate()?;
    let c = ConstantsTable::global();
    let report = classify_regime(p, &c);
    if report.regime != Regime::TwoSolution3d {
        return Err(Error::Regime(format!(
            "local minimisation needs two_solution_3d, got {}",
            report.regime.name()
        )));
    }
    let ball = match cfg.ball_radius {
        Some(r) => r,
        None => solve_r0_r1(p, &c)?.0,
    };
    run(p, cfg, Mode::LocalMin, Some(ball))
}

pub fn solve_mountain_pass(p: &Params, cfg: &SolveConfig) -> Result<SolveResult> {
    p.validate()?;
    let c = ConstantsTable::global();
    let scalar = cfg.support != Support::Both;
    match p.dim {
        3 => {
            if !scalar && p.beta != 0.0 {
                let report = classify_regime(p, &c);
                if report.regime != Regime::TwoSolution3d {
                    return Err(Error::Regime(format!(
                        "mountain pass needs two_solution_3d, got {}",
                        report.regime.name()
                    )));
                }
            }
            if p.beta < 0.0 {
                return Err(Error::Regime("β < 0 in N = 3".into()));
            }
        }
        4 => {
            if !scalar {
                let report = classify_regime(p, &c);
                if report.regime != Regime::Critical4dOk {
                    return Err(Error::Regime(format!(
                        "mountain pass needs critical_4d_ok, got {}",
                        report.regime.name()
                    )));
                }
            }
        }
        n => {
            return Err(Error::Regime(format!(
                "no mountain-pass geometry for N = {n}"
            )))
        }
    }
    run(p, cfg, Mode::MountainPass, None)
}

/// Mountain-pass level of one component alone, i.e. `m⁻(b₁, 0)` or `m⁻(0, b₂)`.
pub fn solve_semitrivial(p: &Params, cfg: &SolveConfig, support: Support) -> Result<SolveResult> {
    let cfg = SolveConfig {
        support,
        mode: Mode::MountainPass,
        ..cfg.clone()
    };
    solve_mountain_pass(p, &cfg)
}

fn quotient_run(p: &Params, cfg: &SolveConfig) -> Result<SolveResult> {
    p.validate()?;
    if p.dim != 2 {
        return Err(Error::Domain(format!(
            "the constant A is planar, got N = {}",
            p.dim
        )));
    }
    run(p, cfg, Mode::RayleighQuotientA, None)
}

/// `A = inf K/Q` over the product of spheres.
pub fn estimate_constant_a(p: &Params, cfg: &SolveConfig) -> Result<f64> {
    Ok(quotient_run(p, cfg)?.value)
}

struct Reduced {
    value: f64,
    t: f64,
    blend: Blend<f64>,
    ints: Integrals<f64>,
}

fn reduce(mode: Mode, p: &Params, s: &State) -> Result<Reduced> {
    let ints = integrals(p, s);
    let (k, q, bc) = (ints.kinetic(), ints.quartic, p.beta * ints.cubic);
    let at = |t: f64| Reduced {
        value: fiber_from(p.dim, &ints, p.beta, t).0,
        t,
        blend: Blend::dilated(p.dim, t),
        ints,
    };
    match mode {
        Mode::GlobalMin => Ok(fiber_minimum(p.dim, &ints, p.beta).map_or_else(|| at(0.0), at)),
        Mode::LocalMin => {
            if !(bc > 0.0) {
                return Err(Error::Structure(format!("βC = {bc:.3e} is not positive")));
            }
            let t = fiber_roots(p.dim, k, q, bc)?
                .s
                .ok_or_else(|| Error::Structure("no local minimum".into()))?;
            let d2 = fiber_from(p.dim, &ints, p.beta, t).2;
            if !(d2 > 1e-10 * k * (2.0 * t).exp()) {
                return Err(Error::Structure(format!(
                    "Ψ'' = {d2:.3e} at the local minimum"
                )));
            }
            Ok(at(t))
        }
        Mode::MountainPass => {
            let t = fiber_roots(p.dim, k, q, bc)?
                .t
                .ok_or_else(|| Error::Structure("no maximum".into()))?;
            let d2 = fiber_from(p.dim, &ints, p.beta, t).2;
            if !(d2 < -1e-10 * k * (2.0 * t).exp()) {
                return Err(Error::Structure(format!("Ψ'' = {d2:.3e} at the maximum")));
            }
            Ok(at(t))
        }
        Mode::RayleighQuotientA => {
            if !(q > 0.0) {
                return Err(Error::Structure("vanishing quartic term".into()));
            }
            Ok(Reduced {
                value: k / q,
                t: 0.0,
                blend: Blend {
                    kinetic: 2.0 / q,
                    quartic: 4.0 * k / (q * q),
                    cubic: 0.0,
                },
                ints,
            })
        }
    }
}

/// Lowest negative local minimum of `Ψ` over `t ∈ [-60, 60]`, if any.
pub fn fiber_minimum(dim: usize, ints: &Integrals<f64>, beta: f64) -> Option<f64> {
    let d1 = |t: f64| fiber_from(dim, ints, beta, t).1;
    let psi = |t: f64| fiber_from(dim, ints, beta, t).0;
    let mut best: Option<(f64, f64)> = None;
    let h = 0.25;
    let mut a = -60.0;
    let mut fa = d1(a);
    while a < 60.0 {
        let b = a + h;
        let fb = d1(b);
        if fa < 0.0 && fb >= 0.0 {
            let (mut lo, mut hi) = (a, b);
            for _ in 0..60 {
                let mid = 0.5 * (lo + hi);
                if d1(mid) < 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let t = 0.5 * (lo + hi);
            let v = psi(t);
            if v < 0.0 && best.map_or(true, |(_, bv)| v < bv) {
                best = Some((t, v));
            }
        }
        a = b;
        fa = fb;
    }
    best.map(|(t, _)| t)
}

fn initial_state(grid: &Arc<Grid>, p: &Params, seed: u64, active: [bool; 2]) -> Result<State> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w1: f64 = rng.gen_range(-0.3f64..0.3).exp();
    let w2: f64 = rng.gen_range(-0.3f64..0.3).exp();
    let gauss = |w: f64, on: bool| {
        Field::from_fn(grid.clone(), move |r: f64| {
            if on {
                (-r * r / (2.0 * w * w)).exp()
            } else {
                0.0
            }
        })
    };
    State::normalized(gauss(w1, active[0]), gauss(w2, active[1]), p.b1, p.b2)
}

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 60;
const RECENTER_AT: f64 = 0.5;
const EDGE_TOL: f64 = 1e-8;
const MAX_RETRIES: usize = 3;
const NEWTON_GATE: f64 = 1e-2;

fn run(p: &Params, cfg: &SolveConfig, mode: Mode, ball: Option<f64>) -> Result<SolveResult> {
    cfg.validate()?;
    let mut spec = cfg.grid;
    let mut attempt = 0;
    loop {
        let grid = Arc::new(spec.build(p.dim)?);
        let out = descend(p, cfg, mode, ball, grid)?;
        let edge = out.state.u.edge_ratio().max(out.state.v.edge_ratio());
        if edge < EDGE_TOL || attempt == MAX_RETRIES {
            return finish(p, cfg, mode, out);
        }
        attempt += 1;
        spec.r_max = Some(1.5 * spec.r_max.unwrap_or(AUTO_R_MAX));
    }
}

struct Descent {
    state: State,
    /// Newton-polished physical state, when the polish succeeded.
    polished: Option<State>,
    reduced: Reduced,
    iterations: usize,
    stationary: bool,
}

struct Preconditioner {
    lu: BandedLu<f64>,
}

impl Preconditioner {
    fn new(grid: &Grid, kinetic_weight: f64, shift: f64) -> Result<Self> {
        let mut a = grid.stiffness().map(|x| kinetic_weight * x);
        let d: Vec<f64> = grid.weights().iter().map(|&w| shift * w).collect();
        a.add_diagonal(&d);
        Ok(Preconditioner { lu: a.factor()? })
    }

    /// `H¹`-Riesz representative of `g`, projected so that `⟨d, c⟩ = 0`.
    fn direction(&self, grid: &Grid, g: &[f64], c: &[f64]) -> Vec<f64> {
        let w = grid.weights();
        let rhs_g: Vec<f64> = g.iter().zip(w).map(|(x, w)| x * w).collect();
        let rhs_c: Vec<f64> = c.iter().zip(w).map(|(x, w)| x * w).collect();
        let pg = self.lu.solve(&rhs_g);
        let pc = self.lu.solve(&rhs_c);
        let den = grid.dot(&pc, c);
        let a = if den.abs() > 0.0 {
            grid.dot(&pg, c) / den
        } else {
            0.0
        };
        pg.iter().zip(&pc).map(|(x, y)| x - a * y).collect()
    }
}

fn descend(
    p: &Params,
    cfg: &SolveConfig,
    mode: Mode,
    ball: Option<f64>,
    grid: Arc<Grid>,
) -> Result<Descent> {
    let active = cfg.support.active();
    let positive = p.beta >= 0.0;
    let tol = match mode {
        Mode::RayleighQuotientA => 1e-9,
        _ => cfg.tol_grad_for(p),
    };
    let mut state = initial_state(&grid, p, cfg.seed, active)?;
    let mut red = reduce(mode, p, &state)?;
    let mut recenters = 0;
    let mut alpha = cfg.step;
    let mut prev: Option<(Vec<f64>, Vec<f64>, f64)> = None;
    let mut dir_prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut stationary = false;
    let mut polished = None;
    let mut newton_gate = f64::INFINITY;
    while iterations < cfg.max_iters {
        let shift = width(&state).ln();
        if shift.abs() > RECENTER_AT && recenters < 40 {
            if let Ok(mut moved) = state.dilate(shift) {
                moved.project_masses();
                if let Ok(r) = reduce(mode, p, &moved) {
                    state = moved;
                    red = r;
                    recenters += 1;
                    prev = None;
                    dir_prev = None;
                    alpha = alpha.max(cfg.step);
                }
            }
        }
        let tan = masked_tangent(p, &state, &red, active);
        if tan.norm < tol {
            stationary = true;
            break;
        }
        let scale = tan.lambda1.abs() * state.b1 + tan.lambda2.abs() * state.b2;
        if tan.norm < NEWTON_GATE * scale && tan.norm < newton_gate {
            newton_gate = 0.5 * tan.norm;
            if let Some(done) = try_newton(p, mode, &state, &red, &tan, active, tol) {
                polished = Some(done);
                stationary = true;
                break;
            }
        }
        let floor = 1e-2
            * tan
                .lambda1
                .abs()
                .max(tan.lambda2.abs())
                .max(1e-12 * red.blend.kinetic);
        let mut z = (Vec::new(), Vec::new());
        for (i, (gi, lam)) in [(&tan.gu, tan.lambda1), (&tan.gv, tan.lambda2)]
            .into_iter()
            .enumerate()
        {
            let c = if i == 0 {
                state.u.values()
            } else {
                state.v.values()
            };
            let zi = if active[i] {
                Preconditioner::new(&grid, red.blend.kinetic, lam.max(floor))?
                    .direction(&grid, gi, c)
            } else {
                vec![0.0; gi.len()]
            };
            if i == 0 {
                z.0 = zi;
            } else {
                z.1 = zi;
            }
        }
        let gz = grid.dot(&tan.gu, &z.0) + grid.dot(&tan.gv, &z.1);
        // Polak-Ribière+ on the preconditioned gradient.
        let mut dir = z.clone();
        if let (Some((pzu, pzv, pgz)), Some((du, dv))) = (&prev, &dir_prev) {
            let cross = grid.dot(&tan.gu, pzu) + grid.dot(&tan.gv, pzv);
            let b = ((gz - cross) / pgz).max(0.0);
            if b > 0.0 {
                for (x, y) in dir.0.iter_mut().zip(du) {
                    *x += b * y;
                }
                for (x, y) in dir.1.iter_mut().zip(dv) {
                    *x += b * y;
                }
                tangent_part(&grid, &mut dir.0, state.u.values(), state.b1);
                tangent_part(&grid, &mut dir.1, state.v.values(), state.b2);
            }
        }
        let mut slope = grid.dot(&tan.gu, &dir.0) + grid.dot(&tan.gv, &dir.1);
        if !(slope > 1e-3 * gz) {
            dir = z.clone();
            slope = gz;
        }
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            if let Some(trial) = step(&state, &dir, alpha, positive, active) {
                if let Ok(r) = reduce(mode, p, &trial) {
                    let inside = admissible(mode, p, &r, ball);
                    if inside && r.value <= red.value - ARMIJO * alpha * slope {
                        accepted = Some((trial, r));
                        break;
                    }
                    // Below the resolution of M, fall back to the gradient norm.
                    let noise =
                        1e-13 * (red.value.abs() + (2.0 * red.t).exp() * red.ints.kinetic());
                    if inside
                        && r.value <= red.value + noise
                        && tangent_norm(p, &trial, &r, active) < tan.norm
                    {
                        accepted = Some((trial, r));
                        break;
                    }
                }
            }
            alpha *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, r)) => {
                prev = Some((z.0, z.1, gz));
                dir_prev = Some(dir);
                state = trial;
                red = r;
                alpha = (alpha * 2.0).min(4.0);
            }
            None => break,
        }
    }
    Ok(Descent {
        state,
        polished,
        reduced: red,
        iterations,
        stationary,
    })
}

/// Size of the rounding error in the discrete gradient: `L²` norm of
/// `ε W⁻¹|S||f|` over both components. Gradient tolerances below it are
/// unattainable on the given grid.
pub fn roundoff_floor(s: &State) -> f64 {
    let grid = s.grid();
    let stiff = grid.stiffness().map(f64::abs);
    let w = grid.weights();
    let mut total = 0.0;
    for f in [&s.u, &s.v] {
        let abs: Vec<f64> = f.values().iter().map(|x| x.abs()).collect();
        let m = stiff.matvec(&abs);
        total += m.iter().zip(w).map(|(x, w)| x * x / w).sum::<f64>();
    }
    f64::EPSILON * total.sqrt()
}

/// `(∫r²(u² + v²) / ∫(u² + v²))^{1/2}`.
fn width(s: &State) -> f64 {
    let grid = s.grid();
    let f: Vec<f64> = grid
        .nodes()
        .iter()
        .zip(s.u.values().iter().zip(s.v.values()))
        .map(|(r, (a, b))| r * r * (a * a + b * b))
        .collect();
    (grid.integrate(&f)
        / (s.b1 * s.b1 * (s.u.mass() > 0.0) as u8 as f64
            + s.b2 * s.b2 * (s.v.mass() > 0.0) as u8 as f64))
        .sqrt()
}

/// Newton polish of the current iterate; for the fiber modes it runs on the
/// physical grid.
fn try_newton(p: &Params, mode: Mode, s: &State, red: &Reduced, tan: &Tangent<f64>, active: [bool; 2], tol: f64) -> Option<State> {
    let (start, scalars, system) = match mode {
        Mode::RayleighQuotientA => {
            let half_q = 0.5 * red.ints.quartic;
            let a = 2.0 * red.ints.kinetic() / red.ints.quartic;
            (s.clone(), [half_q * tan.lambda2, a], System::Quotient { lambda1: half_q * tan.lambda1 })
        }
        _ => (s.dilate_exact(red.t).ok()?, [tan.lambda1, tan.lambda2], System::Multipliers),
    };
    let floor = roundoff_floor(&start);
    let done = newton::polish(p, &start, scalars, system, active, 1e-4 * tol, 0.5 * tol.max(floor), 30)?;
    let out = done.state;
    let positive = p.beta >= 0.0;
    let peak = out.u.max_abs().max(out.v.max_abs());
    let signs_ok = out.u.values().iter().all(|&x| x > -1e-10 * peak)
        && (!positive || out.v.values().iter().all(|&x| x > -1e-10 * peak));
    let value = match mode {
        Mode::RayleighQuotientA => {
            let ints = integrals(p, &out);
            ints.kinetic() / ints.quartic
        }
        _ => crate::functional::energy(p, &out),
    };
    let scale = red.value.abs() + (2.0 * red.t).exp() * red.ints.kinetic();
    (signs_ok && (value - red.value).abs() < 1e-6 * scale).then_some(out)
}

fn tangent_norm(p: &Params, s: &State, r: &Reduced, active: [bool; 2]) -> f64 {
    masked_tangent(p, s, r, active).norm
}

fn masked_tangent(p: &Params, s: &State, r: &Reduced, active: [bool; 2]) -> Tangent<f64> {
    let mut g = gradient_blend(p, s, r.blend);
    if !active[0] {
        g.0.iter_mut().for_each(|x| *x = 0.0);
    }
    if !active[1] {
        g.1.iter_mut().for_each(|x| *x = 0.0);
    }
    project_tangent(s, g)
}

fn tangent_part(grid: &Grid, d: &mut [f64], c: &[f64], b: f64) {
    if b > 0.0 {
        let a = grid.dot(d, c) / (b * b);
        for (x, y) in d.iter_mut().zip(c) {
            *x -= a * y;
        }
    }
}

fn step(
    s: &State,
    dir: &(Vec<f64>, Vec<f64>),
    alpha: f64,
    positive: bool,
    active: [bool; 2],
) -> Option<State> {
    let grid = s.grid().clone();
    let mv = |f: &Field, d: &[f64], on: bool, abs: bool| {
        let vals: Vec<f64> = if on {
            f.values()
                .iter()
                .zip(d)
                .map(|(x, y)| {
                    if abs {
                        (x - alpha * y).abs()
                    } else {
                        x - alpha * y
                    }
                })
                .collect()
        } else {
            f.values().to_vec()
        };
        Field::new(grid.clone(), vals).ok()
    };
    let u = mv(&s.u, &dir.0, active[0], true)?;
    let v = mv(&s.v, &dir.1, active[1], positive)?;
    let out = State::normalized(u, v, s.b1, s.b2).ok()?;
    out.u
        .values()
        .iter()
        .chain(out.v.values())
        .all(|x| x.is_finite())
        .then_some(out)
}

fn admissible(mode: Mode, p: &Params, r: &Reduced, ball: Option<f64>) -> bool {
    if mode != Mode::LocalMin {
        return true;
    }
    let kin = (2.0 * r.t).exp() * r.ints.kinetic();
    p.beta * r.ints.cubic > 0.0 && ball.map_or(true, |b| kin.sqrt() < b)
}

fn finish(p: &Params, cfg: &SolveConfig, mode: Mode, out: Descent) -> Result<SolveResult> {
    let state = match (out.polished, mode) {
        (Some(s), _) => s,
        (None, Mode::RayleighQuotientA) => out.state,
        (None, _) => out.state.dilate_exact(out.reduced.t)?,
    };
    let mut diag = diagnostics(p, &state);
    let active = cfg.support.active();
    if active != [true, true] {
        diag.grad_norm = masked_tangent(p, &state, &Reduced { value: 0.0, t: 0.0, blend: Blend::unit(), ints: integrals(p, &state) }, active).norm;
    }
    let value = match mode {
        Mode::RayleighQuotientA => {
            let ints = integrals(p, &state);
            ints.kinetic() / ints.quartic
        }
        _ => diag.energy,
    };
    let tol = cfg.tol_grad_for(p).max(roundoff_floor(&state));
    let certificates = Certificates {
        grad: diag.grad_norm < tol,
        pohozaev: diag.pohozaev.abs() < cfg.tol_pohozaev * diag.kinetic,
        multiplier: diag.multiplier_residual < 10.0 * tol,
    };
    let (branch, converged) = match mode {
        Mode::GlobalMin => (Branch::Global, out.stationary && certificates.all()),
        Mode::LocalMin => (
            Branch::GroundPlus,
            out.stationary && certificates.all() && diag.fiber_second > 0.0,
        ),
        Mode::MountainPass => (
            Branch::ExcitedMinus,
            out.stationary && certificates.all() && diag.fiber_second < 0.0,
        ),
        Mode::RayleighQuotientA => (Branch::Quotient, out.stationary),
    };
    Ok(SolveResult {
        state,
        diagnostics: diag,
        converged,
        iterations: out.iterations,
        branch,
        certificates,
        value,
    })
}

/// `H¹` distance after interpolating `b` onto the grid of `a`.
pub fn aligned_distance(a: &State, b: &State) -> Result<f64> {
    let moved = b.resample_onto(a.grid().clone())?;
    crate::state::h1_distance(a, &moved)
}
