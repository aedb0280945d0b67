//! Newton iteration for the discrete stationary system on a fixed grid,
//! used to finish the descent once it is close to a critical point.
//!
//! Unknowns are the nodal values interleaved as `(u₀, v₀, u₁, v₁, …)` plus two
//! scalars; the Jacobian is banded with a two-column border.

use crate::banded::Banded;
use crate::{Field, Params, State};

/// What the two scalar unknowns are.
#[derive(Clone, Copy, Debug)]
pub enum System {
    /// `Su + W(λ₁u − ∂_u F) = 0`, `Sv + W(λ₂v − ∂_v F) = 0` with unknown `λ₁, λ₂`.
    Multipliers,
    /// `Su + W(λ₁u − a f_u) = 0`, `Sv + W(λ₂v − a f_v) = 0` with the
    /// quartic part only, `λ₁` held fixed and unknown `λ₂, a`.
    Quotient { lambda1: f64 },
}

#[derive(Clone, Debug)]
pub struct Polished {
    pub state: State,
    pub scalars: [f64; 2],
    pub residual: f64,
    pub iterations: usize,
}

struct Eval {
    f: Vec<f64>,
    g: [f64; 2],
    norm: f64,
}

/// Runs damped Newton steps from `(s, scalars)` until the residual drops
/// below `target` or stops decreasing; succeeds if it ends below `accept`.
pub fn polish(
    p: &Params,
    s: &State,
    scalars: [f64; 2],
    system: System,
    active: [bool; 2],
    target: f64,
    accept: f64,
    max_iters: usize,
) -> Option<Polished> {
    let grid = s.grid().clone();
    let n = grid.len();
    let stiff = grid.stiffness();
    let w = grid.weights().to_vec();
    let mut x: Vec<f64> = (0..2 * n).map(|k| if k % 2 == 0 { s.u.values()[k / 2] } else { s.v.values()[k / 2] }).collect();
    let mut y = scalars;
    let masses = [s.b1 * s.b1, s.b2 * s.b2];

    let coeffs = |y: &[f64; 2]| -> (f64, f64, f64, f64) {
        match system {
            System::Multipliers => (y[0], y[1], 1.0, p.beta),
            System::Quotient { lambda1 } => (lambda1, y[0], y[1], 0.0),
        }
    };
    let evaluate = |x: &[f64], y: &[f64; 2]| -> Eval {
        let (l1, l2, a, beta) = coeffs(y);
        let mut f = vec![0.0; 2 * n];
        let u: Vec<f64> = x.iter().step_by(2).copied().collect();
        let v: Vec<f64> = x.iter().skip(1).step_by(2).copied().collect();
        let su = stiff.matvec(&u);
        let sv = stiff.matvec(&v);
        let mut norm = 0.0;
        for j in 0..n {
            let (uj, vj) = (u[j], v[j]);
            if active[0] {
                let fu = a * (p.mu1 * uj * uj * uj + p.rho * uj * vj * vj) + beta * uj * vj;
                f[2 * j] = su[j] + w[j] * (l1 * uj - fu);
            }
            if active[1] {
                let fv = a * (p.mu2 * vj * vj * vj + p.rho * uj * uj * vj) + 0.5 * beta * uj * uj;
                f[2 * j + 1] = sv[j] + w[j] * (l2 * vj - fv);
            }
            norm += (f[2 * j] * f[2 * j] + f[2 * j + 1] * f[2 * j + 1]) / w[j];
        }
        let mass = |c: &[f64]| c.iter().zip(&w).map(|(a, b)| a * a * b).sum::<f64>();
        let g = [
            if active[0] { 0.5 * (mass(&u) - masses[0]) } else { 0.0 },
            if active[1] { 0.5 * (mass(&v) - masses[1]) } else { 0.0 },
        ];
        Eval { norm: norm.sqrt() + g[0].abs() + g[1].abs(), f, g }
    };

    let mut cur = evaluate(&x, &y);
    let mut iterations = 0;
    while iterations < max_iters && cur.norm >= target {
        iterations += 1;
        let (l1, l2, a, beta) = coeffs(&y);
        let mut jac = Banded::zeros(2 * n, 7, 7);
        for j in 0..n {
            let (uj, vj) = (x[2 * j], x[2 * j + 1]);
            for k in j.saturating_sub(3)..(j + 4).min(n) {
                let sjk = stiff.get(j, k);
                if active[0] {
                    jac.add(2 * j, 2 * k, sjk);
                }
                if active[1] {
                    jac.add(2 * j + 1, 2 * k + 1, sjk);
                }
            }
            let duu = a * (3.0 * p.mu1 * uj * uj + p.rho * vj * vj) + beta * vj;
            let dvv = a * (3.0 * p.mu2 * vj * vj + p.rho * uj * uj);
            let duv = a * 2.0 * p.rho * uj * vj + beta * uj;
            if active[0] {
                jac.add(2 * j, 2 * j, w[j] * (l1 - duu));
            } else {
                jac.add(2 * j, 2 * j, 1.0);
            }
            if active[1] {
                jac.add(2 * j + 1, 2 * j + 1, w[j] * (l2 - dvv));
            } else {
                jac.add(2 * j + 1, 2 * j + 1, 1.0);
            }
            if active[0] && active[1] {
                jac.add(2 * j, 2 * j + 1, -w[j] * duv);
                jac.add(2 * j + 1, 2 * j, -w[j] * duv);
            }
        }
        // Border columns ∂F/∂y and rows ∂G/∂x.
        let mut cols = [vec![0.0; 2 * n], vec![0.0; 2 * n]];
        let mut rows = [vec![0.0; 2 * n], vec![0.0; 2 * n]];
        for j in 0..n {
            let (uj, vj) = (x[2 * j], x[2 * j + 1]);
            match system {
                System::Multipliers => {
                    cols[0][2 * j] = w[j] * uj;
                    cols[1][2 * j + 1] = w[j] * vj;
                }
                System::Quotient { .. } => {
                    cols[0][2 * j + 1] = w[j] * vj;
                    cols[1][2 * j] = -w[j] * (p.mu1 * uj * uj * uj + p.rho * uj * vj * vj);
                    cols[1][2 * j + 1] = -w[j] * (p.mu2 * vj * vj * vj + p.rho * uj * uj * vj);
                }
            }
            if active[0] {
                rows[0][2 * j] = w[j] * uj;
            }
            if active[1] {
                rows[1][2 * j + 1] = w[j] * vj;
            }
        }
        let lu = jac.factor_pivoted().ok()?;
        let neg_f: Vec<f64> = cur.f.iter().map(|v| -v).collect();
        let z0 = lu.solve(&neg_f);
        let zc = [lu.solve(&cols[0]), lu.solve(&cols[1])];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        // Which border equations are live.
        let live: Vec<usize> = match (system, active) {
            (System::Multipliers, [a0, a1]) => [a0, a1].iter().enumerate().filter(|(_, &on)| on).map(|(k, _)| k).collect(),
            (System::Quotient { .. }, _) => vec![0, 1],
        };
        // Row `r` of the Schur system: rows[r]·(z0 − Σ zc[k] dy[k]) = −g[r].
        let mut dy = [0.0; 2];
        match live.len() {
            2 => {
                let m = [
                    [dot(&rows[0], &zc[0]), dot(&rows[0], &zc[1])],
                    [dot(&rows[1], &zc[0]), dot(&rows[1], &zc[1])],
                ];
                let r = [dot(&rows[0], &z0) + cur.g[0], dot(&rows[1], &z0) + cur.g[1]];
                let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
                if det == 0.0 || !det.is_finite() {
                    return None;
                }
                dy[0] = (r[0] * m[1][1] - r[1] * m[0][1]) / det;
                dy[1] = (m[0][0] * r[1] - m[1][0] * r[0]) / det;
            }
            1 => {
                let k = live[0];
                let m = dot(&rows[k], &zc[k]);
                if m == 0.0 {
                    return None;
                }
                dy[k] = (dot(&rows[k], &z0) + cur.g[k]) / m;
            }
            _ => return None,
        }
        let dx: Vec<f64> = (0..2 * n).map(|i| z0[i] - zc[0][i] * dy[0] - zc[1][i] * dy[1]).collect();
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..12 {
            let xt: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + step * b).collect();
            let yt = [y[0] + step * dy[0], y[1] + step * dy[1]];
            let trial = evaluate(&xt, &yt);
            if trial.norm.is_finite() && trial.norm < cur.norm {
                x = xt;
                y = yt;
                cur = trial;
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    if !(cur.norm < accept) {
        return None;
    }
    let u = Field::new(grid.clone(), x.iter().step_by(2).copied().collect()).ok()?;
    let v = Field::new(grid, x.iter().skip(1).step_by(2).copied().collect()).ok()?;
    Some(Polished { state: State::new(u, v, s.b1, s.b2).ok()?, scalars: y, residual: cur.norm, iterations })
}
