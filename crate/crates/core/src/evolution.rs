//! Time evolution of the coupled system for radial complex fields.
//!
//! The flow is
//!
//! ```text
//! i∂Φ = ΔΦ + μ₁|Φ|²Φ + ρ|Ψ|²Φ + βΦ̄Ψ
//! i∂Ψ = ΔΨ + μ₂|Ψ|²Ψ + ρ|Φ|²Ψ + (β/2)Φ² + δΨ
//! ```
//!
//! with detuning `δ = 2λ₁ − λ₂`, so that a stationary `(u, v, λ₁, λ₂)` gives
//! the standing wave `Φ = e^{−iλ₁t}u`, `Ψ = e^{−2iλ₁t}v`. It conserves the
//! charge `∫|Φ|² + 2∫|Ψ|²` and `H = J − (δ/2)∫|Ψ|²`.
//!
//! One step is Strang splitting: a pointwise nonlinear half step, a
//! Crank–Nicolson step for the linear part, and another nonlinear half step.
//! Inside the nonlinear step the cubic terms are an exact phase rotation and
//! the quadratic exchange uses the implicit midpoint rule.

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::banded::{Banded, BandedLu};
use crate::error::{Error, Result};
use crate::solver::SolveResult;
use crate::state::h1_norm;
use crate::{Grid, Params, State};

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Clone, Debug)]
pub struct ComplexState {
    grid: Arc<Grid>,
    pub phi: Vec<Complex64>,
    pub psi: Vec<Complex64>,
}

impl ComplexState {
    pub fn new(grid: Arc<Grid>, phi: Vec<Complex64>, psi: Vec<Complex64>) -> Result<Self> {
        if phi.len() != grid.len() || psi.len() != grid.len() {
            return Err(Error::GridMismatch);
        }
        Ok(ComplexState { grid, phi, psi })
    }

    pub fn from_real(s: &State) -> Self {
        let lift = |f: &[f64]| f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        ComplexState {
            grid: s.grid().clone(),
            phi: lift(s.u.values()),
            psi: lift(s.v.values()),
        }
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn masses(&self) -> (f64, f64) {
        let m = |f: &[Complex64]| self.grid.integrate(&f.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
        (m(&self.phi), m(&self.psi))
    }

    pub fn kinetic(&self) -> f64 {
        [&self.phi, &self.psi].iter().map(|f| complex_kinetic(&self.grid, f)).sum()
    }

    /// `J_β` of the complex pair, with `Re ∫Φ̄²Ψ` as the cubic coupling.
    pub fn energy(&self, p: &Params) -> f64 {
        let g = &self.grid;
        let quartic: Vec<f64> = self
            .phi
            .iter()
            .zip(&self.psi)
            .map(|(a, b)| {
                let (x, y) = (a.norm_sqr(), b.norm_sqr());
                p.mu1 * x * x + p.mu2 * y * y + 2.0 * p.rho * x * y
            })
            .collect();
        let cubic: Vec<f64> = self.phi.iter().zip(&self.psi).map(|(a, b)| (a.conj() * a.conj() * b).re).collect();
        0.5 * self.kinetic() - 0.25 * g.integrate(&quartic) - 0.5 * p.beta * g.integrate(&cubic)
    }

    pub fn h1_norm(&self) -> f64 {
        let (m1, m2) = self.masses();
        (self.kinetic() + m1 + m2).sqrt()
    }

    pub fn distance(&self, other: &ComplexState) -> Result<f64> {
        if !self.grid.same_layout(&other.grid) {
            return Err(Error::GridMismatch);
        }
        let diff = |a: &[Complex64], b: &[Complex64]| a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>();
        let d = ComplexState {
            grid: self.grid.clone(),
            phi: diff(&self.phi, &other.phi),
            psi: diff(&self.psi, &other.psi),
        };
        Ok(d.h1_norm())
    }

    /// `H¹` distance to the orbit `{(e^{iφ₁}u, e^{iφ₂}v)}`, each phase
    /// optimised in closed form.
    pub fn orbit_distance(&self, reference: &State) -> Result<f64> {
        if !self.grid.same_layout(reference.grid()) {
            return Err(Error::GridMismatch);
        }
        let g = &self.grid;
        let mut total = 0.0;
        for (f, r) in [(&self.phi, reference.u.values()), (&self.psi, reference.v.values())] {
            let re: Vec<f64> = f.iter().map(|z| z.re).collect();
            let im: Vec<f64> = f.iter().map(|z| z.im).collect();
            let overlap = Complex64::new(g.kinetic_form(&re, r) + g.dot(&re, r), g.kinetic_form(&im, r) + g.dot(&im, r));
            let phase = if overlap.norm() > 0.0 { overlap / overlap.norm() } else { Complex64::new(1.0, 0.0) };
            let d: Vec<Complex64> = f.iter().zip(r).map(|(z, &x)| z - phase * x).collect();
            total += complex_kinetic(g, &d) + g.integrate(&d.iter().map(|z| z.norm_sqr()).collect::<Vec<_>>());
        }
        Ok(total.sqrt())
    }
}

fn complex_kinetic(g: &Grid, f: &[Complex64]) -> f64 {
    let re: Vec<f64> = f.iter().map(|z| z.re).collect();
    let im: Vec<f64> = f.iter().map(|z| z.im).collect();
    g.kinetic(&re) + g.kinetic(&im)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub dt: f64,
    pub t_end: f64,
    /// `2λ₁ − λ₂` of the stationary state being followed.
    pub detuning: f64,
    /// Record every this many steps.
    pub sample_every: usize,
}

impl EvolveConfig {
    pub fn new(dt: f64, t_end: f64, detuning: f64) -> Self {
        let steps = (t_end / dt).abs().round().max(1.0) as usize;
        EvolveConfig { dt, t_end, detuning, sample_every: (steps / 1000).max(1) }
    }

    pub fn for_state(dt: f64, t_end: f64, lambda1: f64, lambda2: f64) -> Self {
        Self::new(dt, t_end, 2.0 * lambda1 - lambda2)
    }
}

#[derive(Clone, Debug)]
pub struct EvolutionTrace {
    pub times: Vec<f64>,
    pub mass1: Vec<f64>,
    pub mass2: Vec<f64>,
    pub energy: Vec<f64>,
    /// Conserved `J − (δ/2)∫|Ψ|²`.
    pub hamiltonian: Vec<f64>,
    pub dist_to_ground: Vec<f64>,
    pub kinetic: Vec<f64>,
    /// Unwrapped `arg Φ` at the innermost node.
    pub phase: Vec<f64>,
    pub blowup: bool,
    pub last: ComplexState,
}

impl EvolutionTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,mass1,mass2,energy,dist,kinetic\n");
        for k in 0..self.times.len() {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                self.times[k], self.mass1[k], self.mass2[k], self.energy[k], self.dist_to_ground[k], self.kinetic[k]
            );
        }
        out
    }

    pub fn charge(&self, k: usize) -> f64 {
        self.mass1[k] + 2.0 * self.mass2[k]
    }

    pub fn max_relative_drift(series: &[f64]) -> f64 {
        let x0 = series[0];
        series.iter().map(|x| ((x - x0) / x0).abs()).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self) -> f64 {
        self.dist_to_ground.iter().copied().fold(0.0, f64::max)
    }

    /// Least-squares slope of the recorded phase against time.
    pub fn phase_rate(&self) -> f64 {
        let n = self.times.len() as f64;
        let tm = self.times.iter().sum::<f64>() / n;
        let pm = self.phase.iter().sum::<f64>() / n;
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for (t, ph) in self.times.iter().zip(&self.phase) {
            sxy += (t - tm) * (ph - pm);
            sxx += (t - tm) * (t - tm);
        }
        sxy / sxx
    }
}

struct LinearStep {
    lu_phi: BandedLu<Complex64>,
    lu_psi: BandedLu<Complex64>,
    rhs_phi: Banded<Complex64>,
    rhs_psi: Banded<Complex64>,
}

impl LinearStep {
    /// Crank–Nicolson for `W∂f = iSf − iδWf`.
    fn new(g: &Grid, dt: f64, detuning: f64) -> Result<Self> {
        let s = g.stiffness().map(|x| Complex64::new(x, 0.0));
        let w: Vec<Complex64> = g.weights().iter().map(|&x| Complex64::new(x, 0.0)).collect();
        let half = 0.5 * dt * I;
        let build = |delta: f64, sign: f64| {
            let mut m = s.combine(Complex64::new(0.0, 0.0), &s, -sign * half);
            let diag: Vec<Complex64> = w.iter().map(|&x| x * (1.0 + sign * half * delta)).collect();
            m.add_diagonal(&diag);
            m
        };
        Ok(LinearStep {
            lu_phi: build(0.0, 1.0).factor()?,
            lu_psi: build(detuning, 1.0).factor()?,
            rhs_phi: build(0.0, -1.0),
            rhs_psi: build(detuning, -1.0),
        })
    }

    fn apply(&self, x: &mut ComplexState, scratch: &mut Vec<Complex64>) {
        scratch.resize(x.phi.len(), Complex64::new(0.0, 0.0));
        self.rhs_phi.matvec_into(&x.phi, scratch);
        self.lu_phi.solve_in_place(scratch);
        std::mem::swap(&mut x.phi, scratch);
        self.rhs_psi.matvec_into(&x.psi, scratch);
        self.lu_psi.solve_in_place(scratch);
        std::mem::swap(&mut x.psi, scratch);
    }
}

/// Exact flow of the cubic terms: moduli are frozen, so each component
/// only rotates.
fn cubic_rotation(p: &Params, a: &mut Complex64, b: &mut Complex64, h: f64) {
    let (x, y) = (a.norm_sqr(), b.norm_sqr());
    *a *= Complex64::from_polar(1.0, -h * (p.mu1 * x + p.rho * y));
    *b *= Complex64::from_polar(1.0, -h * (p.mu2 * y + p.rho * x));
}

/// Implicit midpoint step of `iΦ' = βΦ̄Ψ`, `iΨ' = (β/2)Φ²`; keeps
/// `|Φ|² + 2|Ψ|²` exactly. `None` if the fixed point does not settle.
fn quadratic_midpoint(beta: f64, a0: Complex64, b0: Complex64, h: f64) -> Option<(Complex64, Complex64)> {
    let scale = a0.norm() + b0.norm();
    if beta == 0.0 || scale == 0.0 {
        return Some((a0, b0));
    }
    let (mut a1, mut b1) = (a0, b0);
    let mut change = f64::INFINITY;
    for _ in 0..100 {
        let (am, bm) = (0.5 * (a0 + a1), 0.5 * (b0 + b1));
        let na = a0 - I * (h * beta) * am.conj() * bm;
        let nb = b0 - I * (0.5 * h * beta) * am * am;
        change = (na - a1).norm() + (nb - b1).norm();
        a1 = na;
        b1 = nb;
        if change <= 4.0 * f64::EPSILON * scale {
            break;
        }
    }
    (change <= 1e-10 * scale && a1.is_finite() && b1.is_finite()).then_some((a1, b1))
}

/// Nonlinear step of length `h`: cubic rotation, quadratic exchange, cubic
/// rotation. `false` if the exchange step fails.
fn nonlinear_step(p: &Params, x: &mut ComplexState, h: f64) -> bool {
    for (a, b) in x.phi.iter_mut().zip(x.psi.iter_mut()) {
        cubic_rotation(p, a, b, 0.5 * h);
        match quadratic_midpoint(p.beta, *a, *b, h) {
            Some((na, nb)) => {
                *a = na;
                *b = nb;
            }
            None => return false,
        }
        cubic_rotation(p, a, b, 0.5 * h);
    }
    true
}

/// Kinetic growth beyond this factor counts as blow-up.
pub const BLOWUP_FACTOR: f64 = 1e3;

/// Integrates from `initial` for `t_end / dt` steps (negative `dt` runs
/// backwards). Distances are measured to the orbit of `reference` when given.
pub fn evolve(initial: &ComplexState, p: &Params, cfg: &EvolveConfig, reference: Option<&State>) -> Result<EvolutionTrace> {
    p.validate()?;
    let g = initial.grid().clone();
    if g.dim() != 3 || p.dim != 3 {
        return Err(Error::Domain(format!("evolution is three-dimensional, got N = {}", g.dim())));
    }
    if !(cfg.dt != 0.0 && cfg.dt.is_finite() && cfg.t_end > 0.0 && cfg.sample_every >= 1) {
        return Err(Error::Config("dt must be nonzero and t_end positive".into()));
    }
    if let Some(r) = reference {
        if !r.grid().same_layout(&g) {
            return Err(Error::GridMismatch);
        }
    }
    let steps = (cfg.t_end / cfg.dt.abs()).round() as usize;
    let linear = LinearStep::new(&g, cfg.dt, cfg.detuning)?;
    let mut x = initial.clone();
    let mut trace = EvolutionTrace {
        times: Vec::new(),
        mass1: Vec::new(),
        mass2: Vec::new(),
        energy: Vec::new(),
        hamiltonian: Vec::new(),
        dist_to_ground: Vec::new(),
        kinetic: Vec::new(),
        phase: Vec::new(),
        blowup: false,
        last: initial.clone(),
    };
    let record = |trace: &mut EvolutionTrace, x: &ComplexState, t: f64| -> Result<()> {
        let (m1, m2) = x.masses();
        let e = x.energy(p);
        trace.times.push(t);
        trace.mass1.push(m1);
        trace.mass2.push(m2);
        trace.energy.push(e);
        trace.hamiltonian.push(e - 0.5 * cfg.detuning * m2);
        trace.kinetic.push(x.kinetic());
        trace.dist_to_ground.push(match reference {
            Some(r) => x.orbit_distance(r)?,
            None => f64::NAN,
        });
        let arg = x.phi[0].arg();
        let ph = match trace.phase.last() {
            Some(&prev) => prev + (arg - prev + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI) - std::f64::consts::PI,
            None => arg,
        };
        trace.phase.push(ph);
        Ok(())
    };
    record(&mut trace, &x, 0.0)?;
    let k0 = trace.kinetic[0];
    let h = 0.5 * cfg.dt;
    let mut scratch = Vec::new();
    for step in 1..=steps {
        let ok = nonlinear_step(p, &mut x, h);
        linear.apply(&mut x, &mut scratch);
        let ok = ok && nonlinear_step(p, &mut x, h);
        let t = step as f64 * cfg.dt;
        if !ok {
            trace.blowup = true;
            break;
        }
        if step % cfg.sample_every == 0 || step == steps {
            record(&mut trace, &x, t)?;
            if *trace.kinetic.last().unwrap() > BLOWUP_FACTOR * k0 {
                trace.blowup = true;
                break;
            }
        }
    }
    trace.last = x;
    Ok(trace)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbedRun {
    pub seed: u64,
    pub sup_distance: f64,
    pub max_kinetic_ratio: f64,
    /// Kinetic energy more than doubled at some time.
    pub growth: bool,
    pub blowup: bool,
    pub charge_drift: f64,
    pub hamiltonian_drift: f64,
    pub final_time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub amplitude: f64,
    pub ground_h1: f64,
    pub threshold: f64,
    pub runs: Vec<PerturbedRun>,
    pub stable: bool,
    pub any_growth: bool,
}

/// Smooth random radial perturbation scaled to `amplitude · ‖ground‖_{H¹}`.
pub fn random_perturbation(ground: &State, amplitude: f64, seed: u64) -> ComplexState {
    let g = ground.grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let width = {
        let f: Vec<f64> = g
            .nodes()
            .iter()
            .zip(ground.u.values().iter().zip(ground.v.values()))
            .map(|(r, (a, b))| r * r * (a * a + b * b))
            .collect();
        (g.integrate(&f) / (ground.b1 * ground.b1 + ground.b2 * ground.b2)).sqrt()
    };
    let mut bump = || -> Vec<Complex64> {
        let mut f = vec![Complex64::new(0.0, 0.0); g.len()];
        for _ in 0..3 {
            let c = Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let centre = width * rng.gen_range(0.0..1.5);
            let spread = width * rng.gen_range(0.3..1.0);
            for (z, &r) in f.iter_mut().zip(g.nodes()) {
                *z += c * (-((r - centre) / spread).powi(2)).exp();
            }
        }
        f
    };
    let phi = bump();
    let psi = bump();
    let mut d = ComplexState { grid: g, phi, psi };
    let scale = amplitude * h1_norm(ground) / d.h1_norm();
    for z in d.phi.iter_mut().chain(d.psi.iter_mut()) {
        *z *= scale;
    }
    d
}

/// Evolves `n_perturbations` perturbed copies of `ground` in parallel and
/// reports the largest orbit distance of each.
pub fn stability_experiment(
    ground: &SolveResult,
    p: &Params,
    amplitude: f64,
    n_perturbations: usize,
    t_end: f64,
    dt: f64,
    seed: u64,
) -> Result<StabilityReport> {
    if !ground.converged {
        return Err(Error::Config("stability needs a converged stationary state".into()));
    }
    let state = &ground.state;
    let cfg = EvolveConfig::for_state(dt, t_end, ground.diagnostics.lambda1, ground.diagnostics.lambda2);
    let base = ComplexState::from_real(state);
    let runs: Vec<PerturbedRun> = (0..n_perturbations as u64)
        .into_par_iter()
        .map(|k| -> Result<PerturbedRun> {
            let run_seed = seed.wrapping_mul(0x9E37_79B9).wrapping_add(k);
            let d = random_perturbation(state, amplitude, run_seed);
            let mut init = base.clone();
            for (z, w) in init.phi.iter_mut().zip(&d.phi) {
                *z += w;
            }
            for (z, w) in init.psi.iter_mut().zip(&d.psi) {
                *z += w;
            }
            let tr = evolve(&init, p, &cfg, Some(state))?;
            let k0 = tr.kinetic[0];
            let kmax = tr.kinetic.iter().copied().fold(0.0, f64::max);
            let charge: Vec<f64> = (0..tr.times.len()).map(|i| tr.charge(i)).collect();
            Ok(PerturbedRun {
                seed: run_seed,
                sup_distance: tr.sup_distance(),
                max_kinetic_ratio: kmax / k0,
                growth: kmax > 2.0 * k0,
                blowup: tr.blowup,
                charge_drift: EvolutionTrace::max_relative_drift(&charge),
                hamiltonian_drift: EvolutionTrace::max_relative_drift(&tr.hamiltonian),
                final_time: *tr.times.last().unwrap(),
            })
        })
        .collect::<Result<_>>()?;
    let ground_h1 = h1_norm(state);
    let threshold = 10.0 * amplitude * ground_h1;
    let stable = runs.iter().all(|r| !r.blowup && r.sup_distance < threshold);
    let any_growth = runs.iter().any(|r| r.growth);
    Ok(StabilityReport { amplitude, ground_h1, threshold, runs, stable, any_growth })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Field, Grid};

    fn gaussian(sigma: f64, amp: f64) -> ComplexState {
        let g = Arc::new(Grid::graded(3, 30.0, 512, 4.0).unwrap());
        let phi = g.nodes().iter().map(|r| Complex64::new(amp * (-r * r / sigma).exp(), 0.0)).collect();
        let psi = g.nodes().iter().map(|r| Complex64::new(0.5, 0.2) * amp * (-r * r / (2.0 * sigma)).exp()).collect();
        ComplexState::new(g, phi, psi).unwrap()
    }

    fn params() -> Params {
        Params { dim: 3, mu1: 1.0, mu2: 1.0, rho: 2.0, beta: 1.5, b1: 1.0, b2: 1.0 }
    }

    #[test]
    fn nonlinear_step_keeps_pointwise_charge() {
        let p = params();
        let mut x = gaussian(2.0, 0.8);
        let charge = |x: &ComplexState| -> Vec<f64> {
            x.phi.iter().zip(&x.psi).map(|(a, b)| a.norm_sqr() + 2.0 * b.norm_sqr()).collect()
        };
        let before = charge(&x);
        assert!(nonlinear_step(&p, &mut x, 0.05));
        for (a, b) in before.iter().zip(charge(&x)) {
            assert!((a - b).abs() < 1e-13 * (1.0 + a));
        }
    }

    #[test]
    fn free_flow_keeps_each_mass() {
        let x0 = gaussian(1.0, 1.0);
        let p = Params { beta: 0.0, mu1: 1e-12, mu2: 1e-12, rho: 1e-12, ..params() };
        let tr = evolve(&x0, &p, &EvolveConfig::new(1e-2, 2.0, 0.3), None).unwrap();
        assert!(EvolutionTrace::max_relative_drift(&tr.mass1) < 1e-12);
        assert!(EvolutionTrace::max_relative_drift(&tr.mass2) < 1e-12);
        assert!(tr.kinetic.last().unwrap() < &tr.kinetic[0]);
    }

    #[test]
    fn reverse_run_returns() {
        let p = params();
        let x0 = gaussian(1.5, 0.6);
        let fwd = evolve(&x0, &p, &EvolveConfig::new(1e-2, 0.5, 0.2), None).unwrap();
        let back = evolve(&fwd.last, &p, &EvolveConfig::new(-1e-2, 0.5, 0.2), None).unwrap();
        assert!(back.last.distance(&x0).unwrap() < 1e-10 * x0.h1_norm());
    }

    #[test]
    fn second_order_in_time() {
        let p = params();
        let x0 = gaussian(1.5, 0.7);
        let run = |dt: f64| evolve(&x0, &p, &EvolveConfig::new(dt, 0.4, 0.2), None).unwrap().last;
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        let ratio = a.distance(&b).unwrap() / b.distance(&c).unwrap();
        assert!((ratio - 4.0).abs() < 0.5, "{ratio}");
    }

    #[test]
    fn orbit_distance_ignores_phases() {
        let x = gaussian(1.0, 1.0);
        let re = |f: &[Complex64]| Field::new(x.grid().clone(), f.iter().map(|z| z.norm()).collect()).unwrap();
        let s = State::new(re(&x.phi), re(&x.phi), 1.0, 1.0).unwrap();
        let mut y = ComplexState::from_real(&s);
        for z in &mut y.phi {
            *z *= Complex64::from_polar(1.0, 0.7);
        }
        for z in &mut y.psi {
            *z *= Complex64::from_polar(1.0, -2.1);
        }
        assert!(y.orbit_distance(&s).unwrap() < 1e-7);
        assert!(y.distance(&ComplexState::from_real(&s)).unwrap() > 0.1);
    }

    #[test]
    fn planar_input_is_refused() {
        let g = Arc::new(Grid::uniform(2, 10.0, 64).unwrap());
        let z = vec![Complex64::new(1.0, 0.0); 64];
        let x = ComplexState::new(g, z.clone(), z).unwrap();
        let p = Params { dim: 2, ..params() };
        assert!(matches!(evolve(&x, &p, &EvolveConfig::new(1e-2, 1.0, 0.0), None), Err(Error::Domain(_))));
    }
}
