use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use super::{solve_scalar_ground_state, AubinTalenti};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;

/// Exponent `γ_p = N(p-2)/(2p)` in `‖u‖_p ≤ C ‖∇u‖^γ ‖u‖^{1-γ}`.
pub fn gn_exponent(dim: usize, p: u32) -> f64 {
    dim as f64 * (p as f64 - 2.0) / (2.0 * p as f64)
}

/// Weinstein quotient `‖u‖_p / (‖∇u‖^γ ‖u‖^{1-γ})` on the grid.
pub fn weinstein_quotient(grid: &RadialGrid<f64>, u: &[f64], p: u32) -> f64 {
    let gamma = gn_exponent(grid.dim(), p);
    let lp: Vec<f64> = u.iter().map(|x| x.abs().powi(p as i32)).collect();
    let norm_p = grid.integrate(&lp).powf(1.0 / p as f64);
    let k = grid.kinetic(u).sqrt();
    let m = grid.norm_sq(u).sqrt();
    norm_p / (k.powf(gamma) * m.powf(1.0 - gamma))
}

/// Sharp Gagliardo–Nirenberg constant `C_{N,p}`.
pub fn gn_constant(dim: usize, p: u32) -> Result<f64> {
    if (dim, p) == (4, 4) {
        return Ok(1.0 / sobolev_constant().sqrt());
    }
    let critical = match dim {
        3 => p >= 6,
        4 => p >= 4,
        _ => false,
    };
    if !(1..=4).contains(&dim) || p <= 2 || critical {
        return Err(Error::Domain(format!(
            "no subcritical Gagliardo–Nirenberg inequality for N = {dim}, p = {p}"
        )));
    }
    let gs = solve_scalar_ground_state(dim, p - 1)?;
    Ok(weinstein_quotient(gs.field.grid(), gs.field.values(), p))
}

/// Sharp Sobolev constant in `R⁴`, `S = ‖∇U‖² / ‖U‖₄²` for the bubble `U₁`.
pub fn sobolev_constant() -> f64 {
    static S: OnceLock<f64> = OnceLock::new();
    *S.get_or_init(|| {
        let grid = RadialGrid::graded(4, 1e8, 8192, 20.0).expect("static layout");
        let b = AubinTalenti { eps: 1.0 };
        let u = grid.tabulate(|r| b.value(r));
        let k = grid.kinetic(&u) + b.gradient_tail(grid.r_max());
        let q4: Vec<f64> = u.iter().map(|x| x.powi(4)).collect();
        let q = grid.integrate(&q4) + b.quartic_tail(grid.r_max());
        k / q.sqrt()
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GnEntry {
    #[serde(rename = "N")]
    pub dim: usize,
    pub p: u32,
    #[serde(rename = "C")]
    pub c: f64,
    pub gamma: f64,
}

/// Constants used across the threshold formulas, computed once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsTable {
    pub gn: Vec<GnEntry>,
    pub sobolev_s: f64,
    /// `‖Q‖²` for the planar cubic ground state.
    pub q_mass_sq: f64,
    /// `‖w‖²` and `‖∇w‖²` for the quadratic ground state in `R³`.
    pub w_mass_sq: f64,
    pub w_kinetic: f64,
    /// `‖Q₃‖²` for the cubic ground state in `R³`.
    pub q3_mass_sq: f64,
}

const TABLE: [(usize, u32); 8] = [
    (1, 3),
    (1, 4),
    (2, 3),
    (2, 4),
    (3, 3),
    (3, 4),
    (4, 3),
    (4, 4),
];

impl ConstantsTable {
    pub fn compute() -> Result<Self> {
        let gn = TABLE
            .iter()
            .map(|&(dim, p)| {
                Ok(GnEntry {
                    dim,
                    p,
                    c: gn_constant(dim, p)?,
                    gamma: gn_exponent(dim, p),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let q = solve_scalar_ground_state(2, 3)?;
        let w = solve_scalar_ground_state(3, 2)?;
        let q3 = solve_scalar_ground_state(3, 3)?;
        Ok(ConstantsTable {
            gn,
            sobolev_s: sobolev_constant(),
            q_mass_sq: q.field.mass(),
            w_mass_sq: w.field.mass(),
            w_kinetic: w.field.kinetic(),
            q3_mass_sq: q3.field.mass(),
        })
    }

    /// Shared table, computed on first use.
    pub fn global() -> Arc<ConstantsTable> {
        static TABLE: OnceLock<Arc<ConstantsTable>> = OnceLock::new();
        TABLE
            .get_or_init(|| Arc::new(ConstantsTable::compute().expect("constant table")))
            .clone()
    }

    pub fn gn(&self, dim: usize, p: u32) -> f64 {
        self.gn
            .iter()
            .find(|e| e.dim == dim && e.p == p)
            .map(|e| e.c)
            .unwrap_or_else(|| panic!("C_{{{dim},{p}}} not tabulated"))
    }

    /// JSON list of `{"N","p","C","gamma"}` records.
    pub fn gn_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.gn).expect("plain data")
    }
}

/// Bubble weights for the critical coupled system in `R⁴`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BubbleParams {
    pub k1: f64,
    pub k2: f64,
    /// `S_{μ1,μ2,ρ} = √(k1 + k2) S`.
    #[serde(rename = "coupled_S")]
    pub s_coupled: f64,
}

impl BubbleParams {
    pub fn new(mu1: f64, mu2: f64, rho: f64) -> Result<Self> {
        let (lo, hi) = (mu1.min(mu2), mu1.max(mu2));
        let det = rho * rho - mu1 * mu2;
        if (lo..=hi).contains(&rho) || det == 0.0 {
            return Err(Error::Regime(format!("ρ = {rho} lies in [{lo}, {hi}]")));
        }
        let k1 = (rho - mu2) / det;
        let k2 = (rho - mu1) / det;
        if !(k1 > 0.0 && k2 > 0.0) {
            return Err(Error::Regime(format!(
                "bubble weights ({k1}, {k2}) not positive"
            )));
        }
        let residual = (mu1 * k1 + rho * k2 - 1.0)
            .abs()
            .max((rho * k1 + mu2 * k2 - 1.0).abs());
        if residual > 1e-5 {
            return Err(Error::Regime(format!(
                "bubble weights solve the system only to {residual:.2e}"
            )));
        }
        Ok(BubbleParams {
            k1,
            k2,
            s_coupled: (k1 + k2).sqrt() * sobolev_constant(),
        })
    }

    /// Threshold level `(k1 + k2) S² / 4` approached by the mountain-pass energy.
    pub fn level(&self) -> f64 {
        self.s_coupled * self.s_coupled / 4.0
    }
}
