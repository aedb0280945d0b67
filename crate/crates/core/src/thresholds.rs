//! Closed-form regime classification from the sharp constants.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::integrals;
use crate::profiles::ConstantsTable;
use crate::{Params, State};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    #[serde(rename = "coercive_1d")]
    Coercive1d,
    #[serde(rename = "coercive_2d")]
    Coercive2d,
    #[serde(rename = "unbounded_2d")]
    Unbounded2d,
    #[serde(rename = "indeterminate_2d")]
    Indeterminate2d,
    #[serde(rename = "two_solution_3d")]
    TwoSolution3d,
    #[serde(rename = "outside_3d_window")]
    Outside3dWindow,
    #[serde(rename = "critical_4d_ok")]
    Critical4dOk,
    #[serde(rename = "outside_4d_window")]
    Outside4dWindow,
    NonexistenceBetaNegative,
}

impl Regime {
    pub fn name(self) -> &'static str {
        match self {
            Regime::Coercive1d => "coercive_1d",
            Regime::Coercive2d => "coercive_2d",
            Regime::Unbounded2d => "unbounded_2d",
            Regime::Indeterminate2d => "indeterminate_2d",
            Regime::TwoSolution3d => "two_solution_3d",
            Regime::Outside3dWindow => "outside_3d_window",
            Regime::Critical4dOk => "critical_4d_ok",
            Regime::Outside4dWindow => "outside_4d_window",
            Regime::NonexistenceBetaNegative => "nonexistence_beta_negative",
        }
    }
}

/// Constants a report was evaluated with.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsUsed {
    pub c33: f64,
    pub c34: f64,
    pub c43: f64,
    pub q_mass_sq: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub regime: Regime,
    #[serde(rename = "R0")]
    pub r0: Option<f64>,
    #[serde(rename = "R1")]
    pub r1: Option<f64>,
    pub condition_lhs: f64,
    pub condition_rhs: f64,
    #[serde(rename = "A_lower")]
    pub a_lower: Option<f64>,
    #[serde(rename = "A_upper")]
    pub a_upper: Option<f64>,
    pub notes: String,
    pub constants: ConstantsUsed,
}

/// Right side `2√6/3` of the three-dimensional smallness condition.
pub fn condition_rhs_3d() -> f64 {
    2.0 * 6f64.sqrt() / 3.0
}

/// `β(2b₁^{3/2} + b₂^{3/2}) C³_{3,3} C²_{3,4} √(μ₁b₁ + μ₂b₂ + ρ√(b₁b₂))`.
pub fn condition_lhs_3d(p: &Params, c: &ConstantsTable) -> f64 {
    let (c33, c34) = (c.gn(3, 3), c.gn(3, 4));
    p.beta * (2.0 * p.b1.powf(1.5) + p.b2.powf(1.5)) * c33.powi(3) * c34.powi(2) * mix(p).sqrt()
}

fn mix(p: &Params) -> f64 {
    p.mu1 * p.b1 + p.mu2 * p.b2 + p.rho * (p.b1 * p.b2).sqrt()
}

/// Coefficients `(𝒟₁ + 𝒟₂ + ρ𝒟₃, 𝒟₄)` of `h`.
fn h_coefficients(p: &Params, c: &ConstantsTable) -> (f64, f64) {
    let c34 = c.gn(3, 4).powi(4);
    let d4 = (2.0 / 3.0 * p.b1.powf(1.5) + 1.0 / 3.0 * p.b2.powf(1.5)) * c.gn(3, 3).powi(3);
    (c34 * mix(p), d4)
}

/// `h(t) = ½t² − ¼(𝒟₁+𝒟₂+ρ𝒟₃)t³ − ½|β|𝒟₄t^{3/2}`, a lower bound for `J`
/// on states with `‖∇(u,v)‖₂ = t`.
pub fn h_eval(t: f64, p: &Params, c: &ConstantsTable) -> f64 {
    let (d, d4) = h_coefficients(p, c);
    0.5 * t * t - 0.25 * d * t.powi(3) - 0.5 * p.beta.abs() * d4 * t.powf(1.5)
}

/// Interior maximiser of `t^{-3/2} h(t)`, which separates the two roots.
pub fn t_tilde(p: &Params, c: &ConstantsTable) -> f64 {
    2.0 / (3.0 * c.gn(3, 4).powi(4) * mix(p))
}

pub fn solve_r0_r1(p: &Params, c: &ConstantsTable) -> Result<(f64, f64)> {
    if p.dim != 3 {
        return Err(Error::Regime(format!(
            "R₀, R₁ are defined for N = 3, got {}",
            p.dim
        )));
    }
    let (lhs, rhs) = (condition_lhs_3d(p, c), condition_rhs_3d());
    if !(lhs < rhs) || p.beta <= 0.0 {
        return Err(Error::Regime(format!(
            "smallness condition fails: {lhs:.6e} ≥ {rhs:.6e} (β = {})",
            p.beta
        )));
    }
    let tt = t_tilde(p, c);
    let h = |t: f64| h_eval(t, p, c);
    if !(h(tt) > 0.0) {
        return Err(Error::Regime(format!("h(t̃) = {:.3e} ≤ 0", h(tt))));
    }
    let mut lo = tt;
    while h(lo) > 0.0 {
        lo *= 0.5;
    }
    let r0 = bisect(&h, lo, tt);
    let mut hi = tt;
    while h(hi) > 0.0 {
        hi *= 2.0;
    }
    let r1 = bisect(&h, tt, hi);
    Ok((r0, r1))
}

fn bisect(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let (mut lo, mut hi) = (a, b);
    let rising = f(lo) < f(hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) < 0.0) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `(‖Q‖²/(2max{(μ₁+ρ)b₁², (μ₂+ρ)b₂²}), ½(b₁²+b₂²)‖Q‖²/(μ₁b₁⁴+μ₂b₂⁴+2ρb₁²b₂²))`.
pub fn constant_a_bracket(p: &Params, c: &ConstantsTable) -> Result<(f64, f64)> {
    if p.dim != 2 {
        return Err(Error::Domain(format!(
            "the constant A is planar, got N = {}",
            p.dim
        )));
    }
    let q = c.q_mass_sq;
    let (b1s, b2s) = (p.b1 * p.b1, p.b2 * p.b2);
    let lower = q / (2.0 * ((p.mu1 + p.rho) * b1s).max((p.mu2 + p.rho) * b2s));
    let upper =
        0.5 * (b1s + b2s) * q / (p.mu1 * b1s * b1s + p.mu2 * b2s * b2s + 2.0 * p.rho * b1s * b2s);
    Ok((lower, upper))
}

pub fn classify_regime(p: &Params, c: &ConstantsTable) -> ThresholdReport {
    let constants = ConstantsUsed {
        c33: c.gn(3, 3),
        c34: c.gn(3, 4),
        c43: c.gn(4, 3),
        q_mass_sq: c.q_mass_sq,
    };
    let mut report = ThresholdReport {
        regime: Regime::Outside3dWindow,
        r0: None,
        r1: None,
        condition_lhs: f64::NAN,
        condition_rhs: f64::NAN,
        a_lower: None,
        a_upper: None,
        notes: String::new(),
        constants,
    };
    let mut notes = Vec::new();
    match p.dim {
        1 => {
            report.regime = Regime::Coercive1d;
            report.condition_lhs = 0.0;
            report.condition_rhs = 0.0;
            if p.beta <= 0.0 {
                notes.push(
                    "existence of a positive minimiser is asserted for β > 0 only".to_string(),
                );
            }
        }
        2 => {
            let q = c.q_mass_sq;
            let (b1s, b2s) = (p.b1 * p.b1, p.b2 * p.b2);
            let coercive = ((p.mu1 + p.rho) * b1s).max((p.mu2 + p.rho) * b2s);
            let unbounded =
                (p.mu1 * b1s * b1s + p.mu2 * b2s * b2s + 2.0 * p.rho * b1s * b2s) / (b1s + b2s);
            let (lo, hi) = constant_a_bracket(p, c).expect("planar");
            report.a_lower = Some(lo);
            report.a_upper = Some(hi);
            report.condition_rhs = q;
            if coercive < q {
                report.regime = Regime::Coercive2d;
                report.condition_lhs = coercive;
                if p.b2 > q.sqrt() {
                    notes.push("b₂ exceeds ‖Q‖₂".to_string());
                }
            } else if unbounded > q {
                report.regime = Regime::Unbounded2d;
                report.condition_lhs = unbounded;
            } else {
                report.regime = Regime::Indeterminate2d;
                report.condition_lhs = coercive;
                notes.push(format!(
                    "neither test decides: max{{(μ₁+ρ)b₁²,(μ₂+ρ)b₂²}} = {coercive:.6e} ≥ ‖Q‖² and \
                     (μ₁b₁⁴+μ₂b₂⁴+2ρb₁²b₂²)/(b₁²+b₂²) = {unbounded:.6e} ≤ ‖Q‖² = {q:.6e}"
                ));
            }
            if p.beta < 0.0 {
                notes.push("β < 0: minimisers need not be positive".to_string());
            }
        }
        3 => {
            report.condition_lhs = condition_lhs_3d(p, c);
            report.condition_rhs = condition_rhs_3d();
            match solve_r0_r1(p, c) {
                Ok((r0, r1)) => {
                    report.regime = Regime::TwoSolution3d;
                    report.r0 = Some(r0);
                    report.r1 = Some(r1);
                }
                Err(e) => {
                    report.regime = Regime::Outside3dWindow;
                    notes.push(if p.beta == 0.0 {
                        "β = 0: no local minimiser; only the mountain-pass branch".to_string()
                    } else {
                        e.to_string()
                    });
                }
            }
        }
        _ => {
            let c43 = c.gn(4, 3).powi(3);
            report.condition_lhs = (p.beta * p.b1 * 2.0 * c43 / 3.0).max(p.beta * p.b2 * c43 / 3.0);
            report.condition_rhs = 1.0;
            let (lo, hi) = (p.mu1.min(p.mu2), p.mu1.max(p.mu2));
            let rho_ok = p.rho < lo || p.rho > hi;
            if p.beta < 0.0 {
                report.regime = Regime::NonexistenceBetaNegative;
                notes.push("β < 0 in N ≥ 4: no positive solution".to_string());
            } else if p.beta > 0.0 && report.condition_lhs < 1.0 && rho_ok {
                report.regime = Regime::Critical4dOk;
            } else {
                report.regime = Regime::Outside4dWindow;
                if !rho_ok {
                    notes.push(format!("ρ = {} lies in [{lo}, {hi}]", p.rho));
                }
                if p.beta == 0.0 {
                    notes.push("β = 0".to_string());
                }
            }
        }
    }
    report.notes = notes.join("; ");
    report
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Membership {
    InsideBall,
    Annulus,
    Outside,
}

pub fn check_3d_window_membership(s: &State, p: &Params, c: &ConstantsTable) -> Result<Membership> {
    let (r0, r1) = solve_r0_r1(p, c)?;
    let k = integrals(p, s).kinetic().sqrt();
    Ok(if k < r0 {
        Membership::InsideBall
    } else if k < r1 {
        Membership::Annulus
    } else {
        Membership::Outside
    })
}

/// Plot-ready `t,h` samples on `[0, 1.2 R₁]` (or up to `2t̃` outside the window).
pub fn h_curve_csv(p: &Params, c: &ConstantsTable, points: usize) -> String {
    let end = solve_r0_r1(p, c)
        .map(|(_, r1)| 1.2 * r1)
        .unwrap_or(2.0 * t_tilde(p, c));
    let mut out = String::from("t,h\n");
    for k in 0..=points {
        let t = end * k as f64 / points as f64;
        out.push_str(&format!("{:e},{:e}\n", t, h_eval(t, p, c)));
    }
    out
}

/// Fixed-order two-column table for terminal output.
pub fn report_table(r: &ThresholdReport) -> String {
    let opt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{v:.10e}"));
    let rows = [
        ("regime", r.regime.name().to_string()),
        ("R0", opt(r.r0)),
        ("R1", opt(r.r1)),
        ("condition_lhs", format!("{:.10e}", r.condition_lhs)),
        ("condition_rhs", format!("{:.10e}", r.condition_rhs)),
        ("A_lower", opt(r.a_lower)),
        ("A_upper", opt(r.a_upper)),
        ("C_3,3", format!("{:.10e}", r.constants.c33)),
        ("C_3,4", format!("{:.10e}", r.constants.c34)),
        ("C_4,3", format!("{:.10e}", r.constants.c43)),
        ("|Q|^2", format!("{:.10e}", r.constants.q_mass_sq)),
        ("notes", r.notes.clone()),
    ];
    rows.iter().map(|(k, v)| format!("{k:<14} {v}\n")).collect()
}
