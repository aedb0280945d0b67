//! The energy
//!
//! `J(u,v) = ½∫|∇u|²+|∇v|² − ¼∫(μ₁u⁴ + μ₂v⁴ + 2ρu²v²) − (β/2)∫u²v`
//!
//! on the product of mass spheres, its constrained gradient, the Pohozaev
//! functional and the dilation fiber `Ψ(t) = J(t⋆(u,v))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::state::StatePair;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams<S> {
    #[serde(rename = "N")]
    pub dim: usize,
    pub mu1: S,
    pub mu2: S,
    pub rho: S,
    pub beta: S,
    pub b1: S,
    pub b2: S,
}

impl<S: Scalar> ProblemParams<S> {
    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.dim) {
            return Err(Error::Config(format!("N = {} not in 1..=4", self.dim)));
        }
        let all = [self.mu1, self.mu2, self.rho, self.beta, self.b1, self.b2];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::Config("parameters must be finite".into()));
        }
        if self.mu1 < S::zero() || self.mu2 < S::zero() || self.rho < S::zero() {
            return Err(Error::Config("μ₁, μ₂, ρ must be nonnegative".into()));
        }
        if !(self.b1 > S::zero() && self.b2 > S::zero()) {
            return Err(Error::Config("masses b₁, b₂ must be positive".into()));
        }
        Ok(())
    }

    pub fn with_masses(&self, b1: S, b2: S) -> Self {
        ProblemParams { b1, b2, ..*self }
    }

    pub fn with_beta(&self, beta: S) -> Self {
        ProblemParams { beta, ..*self }
    }
}

/// The scalar integrals every functional here is assembled from.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Integrals<S> {
    pub kinetic_u: S,
    pub kinetic_v: S,
    pub mass_u: S,
    pub mass_v: S,
    /// `∫ μ₁u⁴ + μ₂v⁴ + 2ρu²v²`.
    pub quartic: S,
    /// `∫ u²v`.
    pub cubic: S,
}

impl<S: Scalar> Integrals<S> {
    pub fn kinetic(&self) -> S {
        self.kinetic_u + self.kinetic_v
    }

    pub fn energy(&self, beta: S) -> S {
        let half = S::of(0.5);
        half * self.kinetic() - S::of(0.25) * self.quartic - half * beta * self.cubic
    }

    pub fn pohozaev(&self, dim: usize, beta: S) -> S {
        let nq = S::of(dim as f64 / 4.0);
        self.kinetic() - nq * self.quartic - nq * beta * self.cubic
    }
}

pub fn integrals<S: Scalar>(p: &ProblemParams<S>, s: &StatePair<S>) -> Integrals<S> {
    let grid = s.grid();
    let (u, v) = (s.u.values(), s.v.values());
    let two = S::of(2.0);
    let mut quartic = S::zero();
    let mut cubic = S::zero();
    for ((&a, &b), &w) in u.iter().zip(v).zip(grid.weights()) {
        let (a2, b2) = (a * a, b * b);
        quartic += w * (p.mu1 * a2 * a2 + p.mu2 * b2 * b2 + two * p.rho * a2 * b2);
        cubic += w * a2 * b;
    }
    Integrals {
        kinetic_u: grid.kinetic(u),
        kinetic_v: grid.kinetic(v),
        mass_u: grid.norm_sq(u),
        mass_v: grid.norm_sq(v),
        quartic,
        cubic,
    }
}

pub fn energy<S: Scalar>(p: &ProblemParams<S>, s: &StatePair<S>) -> S {
    integrals(p, s).energy(p.beta)
}

pub fn pohozaev<S: Scalar>(p: &ProblemParams<S>, s: &StatePair<S>) -> S {
    integrals(p, s).pohozaev(p.dim, p.beta)
}

/// Weights on the three parts of `J` whose gradient is wanted:
/// `a_K ∇(½K) − a_Q ∇(¼Q) − a_C ∇(½βC)`. All ones gives `∇J`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blend<S> {
    pub kinetic: S,
    pub quartic: S,
    pub cubic: S,
}

impl<S: Scalar> Blend<S> {
    pub fn unit() -> Self {
        Blend {
            kinetic: S::one(),
            quartic: S::one(),
            cubic: S::one(),
        }
    }

    /// Weights of `Ψ'` terms at dilation parameter `t`.
    pub fn dilated(dim: usize, t: S) -> Self {
        let nd = S::of(dim as f64);
        Blend {
            kinetic: (S::of(2.0) * t).exp(),
            quartic: (nd * t).exp(),
            cubic: (nd * t / S::of(2.0)).exp(),
        }
    }
}

/// `L²` gradient of `J` (or of a blend of its parts): `∂J/∂u_j = w_j g_j`.
pub fn gradient_blend<S: Scalar>(
    p: &ProblemParams<S>,
    s: &StatePair<S>,
    blend: Blend<S>,
) -> (Vec<S>, Vec<S>) {
    let grid = s.grid();
    let (u, v) = (s.u.values(), s.v.values());
    let su = grid.stiffness_apply(u);
    let sv = grid.stiffness_apply(v);
    let w = grid.weights();
    let half = S::of(0.5);
    let mut gu = Vec::with_capacity(u.len());
    let mut gv = Vec::with_capacity(u.len());
    for j in 0..u.len() {
        let (a, b) = (u[j], v[j]);
        gu.push(
            blend.kinetic * su[j] / w[j]
                - blend.quartic * (p.mu1 * a * a * a + p.rho * b * b * a)
                - blend.cubic * p.beta * a * b,
        );
        gv.push(
            blend.kinetic * sv[j] / w[j]
                - blend.quartic * (p.mu2 * b * b * b + p.rho * a * a * b)
                - blend.cubic * half * p.beta * a * a,
        );
    }
    (gu, gv)
}

pub fn gradient<S: Scalar>(p: &ProblemParams<S>, s: &StatePair<S>) -> (Vec<S>, Vec<S>) {
    gradient_blend(p, s, Blend::unit())
}

/// Tangential part of a gradient on the product of spheres together with
/// the multipliers `λᵢ = -⟨gᵢ, compᵢ⟩ / bᵢ²`.
#[derive(Clone, Debug)]
pub struct Tangent<S> {
    pub gu: Vec<S>,
    pub gv: Vec<S>,
    pub lambda1: S,
    pub lambda2: S,
    /// `L²` norm of the tangential gradient.
    pub norm: S,
}

pub fn project_tangent<S: Scalar>(s: &StatePair<S>, g: (Vec<S>, Vec<S>)) -> Tangent<S> {
    let grid = s.grid();
    let (mut gu, mut gv) = g;
    let l1 = -grid.dot(&gu, s.u.values()) / (s.b1 * s.b1);
    let l2 = -grid.dot(&gv, s.v.values()) / (s.b2 * s.b2);
    for (x, &c) in gu.iter_mut().zip(s.u.values()) {
        *x += l1 * c;
    }
    for (x, &c) in gv.iter_mut().zip(s.v.values()) {
        *x += l2 * c;
    }
    let norm = (grid.norm_sq(&gu) + grid.norm_sq(&gv)).sqrt();
    Tangent {
        gu,
        gv,
        lambda1: l1,
        lambda2: l2,
        norm,
    }
}

/// `|λ₁b₁² + λ₂b₂² − ((1 − N/4)Q + (3/2 − N/4)βC)|`, the combination of the
/// Nehari and Pohozaev identities satisfied by every critical point. For
/// `N = 3` the right side is `¼Q + ¾βC`, for `N = 2` it is `½Q + βC`.
pub fn multiplier_identity_residual<S: Scalar>(
    p: &ProblemParams<S>,
    s: &StatePair<S>,
    lambda1: S,
    lambda2: S,
) -> Result<S> {
    if !(1..=4).contains(&p.dim) {
        return Err(Error::Domain(format!("N = {}", p.dim)));
    }
    let ints = integrals(p, s);
    Ok(multiplier_residual_from(
        p, &ints, s.b1, s.b2, lambda1, lambda2,
    ))
}

fn multiplier_residual_from<S: Scalar>(
    p: &ProblemParams<S>,
    ints: &Integrals<S>,
    b1: S,
    b2: S,
    l1: S,
    l2: S,
) -> S {
    let nq = S::of(p.dim as f64 / 4.0);
    let rhs = (S::one() - nq) * ints.quartic + (S::of(1.5) - nq) * p.beta * ints.cubic;
    (l1 * b1 * b1 + l2 * b2 * b2 - rhs).abs()
}

/// `(Ψ(t), Ψ'(t), Ψ''(t))` from the integrals of the undilated state.
pub fn fiber_from<S: Scalar>(dim: usize, ints: &Integrals<S>, beta: S, t: S) -> (S, S, S) {
    let nd = S::of(dim as f64);
    let two = S::of(2.0);
    let ek = (two * t).exp();
    let eq = (nd * t).exp();
    let ec = (nd * t / two).exp();
    let (k, q, c) = (ints.kinetic(), ints.quartic, beta * ints.cubic);
    let psi = ek * k / two - eq * q / S::of(4.0) - ec * c / two;
    let d1 = ek * k - nd / S::of(4.0) * eq * q - nd / S::of(4.0) * ec * c;
    let d2 = two * ek * k - nd * nd / S::of(4.0) * eq * q - nd * nd / S::of(8.0) * ec * c;
    (psi, d1, d2)
}

pub fn fiber_map<S: Scalar>(p: &ProblemParams<S>, s: &StatePair<S>, t: S) -> S {
    fiber_from(p.dim, &integrals(p, s), p.beta, t).0
}

/// Critical points of the fiber map: `s` a strict local minimum, `t` a
/// strict maximum; `c < d` are the zeros of `Ψ` when present.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiberCriticalPoints {
    pub s: Option<f64>,
    pub t: Option<f64>,
    pub c: Option<f64>,
    pub d: Option<f64>,
}

pub fn fiber_critical_points<S: Scalar>(
    p: &ProblemParams<S>,
    s: &StatePair<S>,
) -> Result<FiberCriticalPoints> {
    let ints = integrals(p, s);
    fiber_roots(
        p.dim,
        ints.kinetic().f64(),
        ints.quartic.f64(),
        (p.beta * ints.cubic).f64(),
    )
}

/// Fiber structure from `K`, `Q` and `βC`. In `N = 3` the substitution
/// `τ = e^{t/2}` turns `Ψ'` into `τ³(τK − ¾τ³Q − ¾βC)`; in `N = 4` the fiber
/// is `e^{2t}(K − βC)/2 − e^{4t}Q/4`.
pub fn fiber_roots(dim: usize, k: f64, q: f64, bc: f64) -> Result<FiberCriticalPoints> {
    match dim {
        3 => fiber_roots_3d(k, q, bc),
        4 => {
            let a = k - bc;
            if !(a > 0.0 && q > 0.0) {
                return Err(Error::Structure(format!(
                    "K − βC = {a:.3e}, Q = {q:.3e}: no maximum"
                )));
            }
            let t = 0.5 * (a / q).ln();
            // Ψ vanishes at t = -∞ and at e^{2t} = 2(K − βC)/Q.
            Ok(FiberCriticalPoints {
                s: None,
                t: Some(t),
                c: None,
                d: Some(0.5 * (2.0 * a / q).ln()),
            })
        }
        _ => Err(Error::Domain(format!(
            "fiber critical points need N = 3 or 4, got {dim}"
        ))),
    }
}

const TAU_LO: f64 = 1e-6;
const TAU_HI: f64 = 1e6;

fn fiber_roots_3d(k: f64, q: f64, bc: f64) -> Result<FiberCriticalPoints> {
    if !(k > 0.0) {
        return Err(Error::Structure("vanishing kinetic energy".into()));
    }
    let target = 0.75 * bc;
    let phi = |tau: f64| tau * k - 0.75 * tau.powi(3) * q - target;
    let dphi = |tau: f64| k - 2.25 * tau * tau * q;
    let zero_target = 0.5 * bc;
    let chi = |tau: f64| 0.5 * tau * k - 0.25 * tau.powi(3) * q - zero_target;
    let dchi = |tau: f64| 0.5 * k - 0.75 * tau * tau * q;
    if q <= 0.0 {
        // Ψ' = τ³(τK − ¾βC): a single minimum when βC > 0.
        if bc <= 0.0 {
            return Err(Error::Structure(
                "Ψ is increasing: no critical point".into(),
            ));
        }
        let s = 2.0 * (target / k).ln();
        let c = 2.0 * (zero_target / (0.5 * k)).ln();
        return Ok(FiberCriticalPoints {
            s: Some(s),
            t: None,
            c: Some(c),
            d: None,
        });
    }
    let tau_star = (2.0 / 3.0) * (k / q).sqrt();
    let tau_zero = (2.0 * k / (3.0 * q)).sqrt();
    let upper = TAU_HI.max(4.0 * tau_star);
    let t = root(&phi, &dphi, tau_star, upper).map(|x| 2.0 * x.ln());
    let d = root(&chi, &dchi, tau_zero, upper).map(|x| 2.0 * x.ln());
    let (s, c) = if bc > 0.0 {
        (
            root(&phi, &dphi, TAU_LO.min(0.25 * tau_star), tau_star).map(|x| 2.0 * x.ln()),
            root(&chi, &dchi, TAU_LO.min(0.25 * tau_zero), tau_zero).map(|x| 2.0 * x.ln()),
        )
    } else {
        (None, None)
    };
    if t.is_none() {
        return Err(Error::Structure(format!(
            "βC = {bc:.3e} exceeds the fiber barrier (4/9)K^{{3/2}}/Q^{{1/2}} = {:.3e}",
            (4.0 / 9.0) * k.powf(1.5) / q.sqrt() * (4.0 / 3.0)
        )));
    }
    Ok(FiberCriticalPoints { s, t, c, d })
}

/// Sign-change root by bisection to `1e-12` relative width, finished with
/// Newton steps.
fn root(f: &dyn Fn(f64) -> f64, df: &dyn Fn(f64) -> f64, a: f64, b: f64) -> Option<f64> {
    let (mut lo, mut hi) = (a, b);
    let (flo, fhi) = (f(lo), f(hi));
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    let rising = flo < 0.0;
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if (f(mid) < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..3 {
        let d = df(x);
        if d == 0.0 {
            break;
        }
        let nx = x - f(x) / d;
        if !(nx > a && nx < b) {
            break;
        }
        x = nx;
    }
    Some(x)
}

/// Per-state diagnostics written next to every solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub energy: f64,
    pub kinetic: f64,
    pub kinetic_u: f64,
    pub kinetic_v: f64,
    pub mass_u: f64,
    pub mass_v: f64,
    pub quartic: f64,
    pub cubic_coupling: f64,
    pub lambda1: f64,
    pub lambda2: f64,
    pub pohozaev: f64,
    pub fiber_second: f64,
    pub multiplier_residual: f64,
    pub grad_norm: f64,
}

pub fn diagnostics<S: Scalar>(p: &ProblemParams<S>, s: &StatePair<S>) -> Diagnostics {
    let ints = integrals(p, s);
    let tan = project_tangent(s, gradient(p, s));
    let (_, _, d2) = fiber_from(p.dim, &ints, p.beta, S::zero());
    Diagnostics {
        energy: ints.energy(p.beta).f64(),
        kinetic: ints.kinetic().f64(),
        kinetic_u: ints.kinetic_u.f64(),
        kinetic_v: ints.kinetic_v.f64(),
        mass_u: ints.mass_u.f64(),
        mass_v: ints.mass_v.f64(),
        quartic: ints.quartic.f64(),
        cubic_coupling: ints.cubic.f64(),
        lambda1: tan.lambda1.f64(),
        lambda2: tan.lambda2.f64(),
        pohozaev: ints.pohozaev(p.dim, p.beta).f64(),
        fiber_second: d2.f64(),
        multiplier_residual: multiplier_residual_from(
            p,
            &ints,
            s.b1,
            s.b2,
            tan.lambda1,
            tan.lambda2,
        )
        .f64(),
        grad_norm: tan.norm.f64(),
    }
}

/// CSV with header `t,Psi,dPsi,d2Psi`.
pub fn fiber_trace_csv<S: Scalar>(p: &ProblemParams<S>, s: &StatePair<S>, ts: &[f64]) -> String {
    let ints = integrals(p, s);
    let mut out = String::from("t,Psi,dPsi,d2Psi\n");
    for &t in ts {
        let (a, b, c) = fiber_from(p.dim, &ints, p.beta, S::of(t));
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e}\n",
            t,
            a.f64(),
            b.f64(),
            c.f64()
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::{Field, Grid, State};
    use std::sync::Arc;

    fn params(dim: usize) -> ProblemParams<f64> {
        ProblemParams {
            dim,
            mu1: 1.0,
            mu2: 2.0,
            rho: 3.0,
            beta: 0.7,
            b1: 0.6,
            b2: 0.9,
        }
    }

    fn state(dim: usize) -> State {
        let g = Arc::new(Grid::uniform(dim, 20.0, 1024).unwrap());
        let u = Field::from_fn(g.clone(), |r: f64| (-r * r / 2.0).exp());
        let v = Field::from_fn(g, |r: f64| (1.0 + r * r / 4.0).recip().powi(3));
        State::normalized(u, v, 0.6, 0.9).unwrap()
    }

    #[test]
    fn gradient_matches_directional_derivative() {
        for dim in 1..=4 {
            let p = params(dim);
            let s = state(dim);
            let (gu, gv) = gradient(&p, &s);
            let g = s.grid().clone();
            let phi: Vec<f64> = g.tabulate(|r| (r * 0.8).sin() * (-r * r / 5.0).exp());
            let psi: Vec<f64> = g.tabulate(|r| (-r * r / 3.0).exp() * (1.0 - r));
            let h = 1e-5;
            let shifted = |e: f64| {
                let mut t = s.clone();
                for (x, d) in t.u.values_mut().iter_mut().zip(&phi) {
                    *x += e * d;
                }
                for (x, d) in t.v.values_mut().iter_mut().zip(&psi) {
                    *x += e * d;
                }
                energy(&p, &t)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let an = g.dot(&gu, &phi) + g.dot(&gv, &psi);
            assert!(
                (fd - an).abs() < 1e-7 * an.abs().max(1e-3),
                "dim {dim}: {fd} vs {an}"
            );
        }
    }

    #[test]
    fn tangent_is_orthogonal() {
        let p = params(3);
        let s = state(3);
        let t = project_tangent(&s, gradient(&p, &s));
        let g = s.grid();
        assert!(g.dot(&t.gu, s.u.values()).abs() < 1e-12);
        assert!(g.dot(&t.gv, s.v.values()).abs() < 1e-12);
    }

    #[test]
    fn fiber_derivatives_are_consistent() {
        let p = params(3);
        let s = state(3);
        let ints = integrals(&p, &s);
        let h = 1e-5;
        for t in [-0.5, 0.0, 0.8] {
            let (_, d1, d2) = fiber_from(3, &ints, p.beta, t);
            let f = |x: f64| fiber_from(3, &ints, p.beta, x).0;
            let g = |x: f64| fiber_from(3, &ints, p.beta, x).1;
            assert!(((f(t + h) - f(t - h)) / (2.0 * h) - d1).abs() < 1e-7);
            assert!(((g(t + h) - g(t - h)) / (2.0 * h) - d2).abs() < 1e-7);
        }
        assert!((fiber_from(3, &ints, p.beta, 0.0).0 - ints.energy(p.beta)).abs() < 1e-14);
        assert!((fiber_from(3, &ints, p.beta, 0.0).1 - ints.pohozaev(3, p.beta)).abs() < 1e-14);
    }

    #[test]
    fn three_dimensional_fiber_roots() {
        let fc = fiber_roots(3, 1.0, 1.0, 0.01).unwrap();
        let (s, t) = (fc.s.unwrap(), fc.t.unwrap());
        assert!(s < t);
        let ints = Integrals {
            kinetic_u: 1.0,
            kinetic_v: 0.0,
            mass_u: 1.0,
            mass_v: 1.0,
            quartic: 1.0,
            cubic: 0.01,
        };
        let (_, ds, dds) = fiber_from(3, &ints, 1.0, s);
        let (_, dt, ddt) = fiber_from(3, &ints, 1.0, t);
        assert!(ds.abs() < 1e-12 && dt.abs() < 1e-12);
        assert!(dds > 0.0 && ddt < 0.0);
        let (c, d) = (fc.c.unwrap(), fc.d.unwrap());
        assert!(s < c && c < t && t < d);
    }

    #[test]
    fn structure_error_past_barrier() {
        assert!(matches!(
            fiber_roots(3, 1.0, 1.0, 10.0),
            Err(Error::Structure(_))
        ));
        assert!(matches!(
            fiber_roots(4, 1.0, 1.0, 2.0),
            Err(Error::Structure(_))
        ));
        assert!(matches!(
            fiber_roots(2, 1.0, 1.0, 0.1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn four_dimensional_maximum() {
        let fc = fiber_roots(4, 2.0, 0.5, 0.4).unwrap();
        let ints = Integrals {
            kinetic_u: 2.0,
            kinetic_v: 0.0,
            mass_u: 1.0,
            mass_v: 1.0,
            quartic: 0.5,
            cubic: 0.4,
        };
        let (_, d1, d2) = fiber_from(4, &ints, 1.0, fc.t.unwrap());
        assert!(d1.abs() < 1e-12 && d2 < 0.0);
    }
}
