//! Radial shooting for `-Δu + u = |u|^{p-1} u` in `R^N`.

use crate::error::{Error, Result};

const STEP: f64 = 1e-3;
const R_LIMIT: f64 = 60.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    /// The trajectory crosses zero: the central value is too large.
    Overshoot,
    /// The trajectory turns upward before reaching zero: too small.
    Undershoot,
}

fn rhs(dim: usize, p: f64, r: f64, u: f64, du: f64) -> (f64, f64) {
    let nl = u.abs().powf(p - 1.0) * u;
    (du, u - nl - (dim as f64 - 1.0) * du / r)
}

fn rk4(dim: usize, p: f64, r: f64, u: f64, du: f64, h: f64) -> (f64, f64) {
    let (k1u, k1v) = rhs(dim, p, r, u, du);
    let (k2u, k2v) = rhs(dim, p, r + 0.5 * h, u + 0.5 * h * k1u, du + 0.5 * h * k1v);
    let (k3u, k3v) = rhs(dim, p, r + 0.5 * h, u + 0.5 * h * k2u, du + 0.5 * h * k2v);
    let (k4u, k4v) = rhs(dim, p, r + h, u + h * k3u, du + h * k3v);
    (
        u + h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u),
        du + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v),
    )
}

/// Series start `u ≈ a + c r²` off the coordinate singularity.
fn start(dim: usize, p: f64, a: f64) -> (f64, f64, f64) {
    let c = (a - a.abs().powf(p - 1.0) * a) / (2.0 * dim as f64);
    let r0 = STEP;
    (r0, a + c * r0 * r0, 2.0 * c * r0)
}

/// Integrates until the trajectory is classified, recording `(r, u, u')`
/// when `record` is set.
pub fn shoot(
    dim: usize,
    p: f64,
    a: f64,
    mut record: Option<&mut Vec<(f64, f64, f64)>>,
) -> (Outcome, f64) {
    let (mut r, mut u, mut du) = start(dim, p, a);
    if let Some(t) = record.as_deref_mut() {
        t.push((0.0, a, 0.0));
        t.push((r, u, du));
    }
    while r < R_LIMIT {
        let (nu, ndu) = rk4(dim, p, r, u, du, STEP);
        r += STEP;
        u = nu;
        du = ndu;
        if let Some(t) = record.as_deref_mut() {
            t.push((r, u, du));
        }
        if u < 0.0 {
            return (Outcome::Overshoot, r);
        }
        if du > 0.0 {
            return (Outcome::Undershoot, r);
        }
    }
    (Outcome::Undershoot, r)
}

/// Bisection on the central value inside `[lo, hi]`, which must bracket
/// the transition from undershoot to overshoot.
pub fn bisect_center(dim: usize, p: f64, lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi)
        || shoot(dim, p, lo, None).0 != Outcome::Undershoot
        || shoot(dim, p, hi, None).0 != Outcome::Overshoot
    {
        return Err(Error::ProfileSolve(format!(
            "[{lo}, {hi}] does not bracket the ground state"
        )));
    }
    let (mut lo, mut hi) = (lo, hi);
    while hi - lo > 1e-14 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match shoot(dim, p, mid, None).0 {
            Outcome::Overshoot => hi = mid,
            Outcome::Undershoot => lo = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Expands an upper end from `1` until it overshoots, then bisects.
pub fn find_center(dim: usize, p: f64) -> Result<f64> {
    let mut hi = 2.0;
    for _ in 0..60 {
        if shoot(dim, p, hi, None).0 == Outcome::Overshoot {
            return bisect_center(dim, p, 1.0, hi);
        }
        hi *= 2.0;
    }
    Err(Error::ProfileSolve(format!(
        "no overshooting central value for N = {dim}, p = {p}"
    )))
}

/// Trajectory of the converged shot up to where it stays trustworthy.
pub struct Shot {
    pub center: f64,
    pub trajectory: Vec<(f64, f64, f64)>,
    pub r_break: f64,
}

pub fn trace(dim: usize, p: f64, center: f64) -> Shot {
    let mut traj = Vec::new();
    shoot(dim, p, center, Some(&mut traj));
    // Stop well before the shot peels off: once u is tiny the exponential
    // mode dominates and further values carry only the bisection error.
    let cut = traj
        .iter()
        .position(|&(_, u, du)| u < 1e-6 * center || du > 0.0)
        .unwrap_or(traj.len() - 1);
    let cut = cut.max(4);
    traj.truncate(cut);
    let r_break = traj.last().map(|t| t.0).unwrap_or(0.0);
    Shot {
        center,
        trajectory: traj,
        r_break,
    }
}

impl Shot {
    /// Value at radius `r`: Hermite interpolation along the trajectory,
    /// continued by the decaying asymptotic tail past `r_break`.
    pub fn value(&self, dim: usize, r: f64) -> f64 {
        let t = &self.trajectory;
        if r >= self.r_break {
            let (rb, ub, _) = *t.last().unwrap();
            let k = (dim as f64 - 1.0) / 2.0;
            return ub * (rb / r).powf(k) * (-(r - rb)).exp();
        }
        let i = ((r / STEP).floor() as usize).min(t.len() - 2);
        // Index 0 is the origin, index 1 sits at r = STEP.
        let (r0, u0, d0) = t[i];
        let (r1, u1, d1) = t[i + 1];
        let h = r1 - r0;
        let s = ((r - r0) / h).clamp(0.0, 1.0);
        let h00 = 2.0 * s * s * s - 3.0 * s * s + 1.0;
        let h10 = s * s * s - 2.0 * s * s + s;
        let h01 = -2.0 * s * s * s + 3.0 * s * s;
        let h11 = s * s * s - s * s;
        h00 * u0 + h10 * h * d0 + h01 * u1 + h11 * h * d1
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_dimensional_cubic_is_sech() {
        // -u'' + u = u³ has u = √2 sech r.
        let a = find_center(1, 3.0).unwrap();
        assert!((a - 2f64.sqrt()).abs() < 1e-9, "{a}");
        let shot = trace(1, 3.0, a);
        for r in [0.3f64, 1.0, 2.5, 5.0] {
            let exact = 2f64.sqrt() / r.cosh();
            assert!((shot.value(1, r) - exact).abs() < 1e-8);
        }
    }

    #[test]
    fn bracket_must_straddle() {
        assert!(bisect_center(3, 3.0, 5.0, 9.0).is_err());
    }
}
