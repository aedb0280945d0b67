//! Scalar ground states, Aubin–Talenti bubbles and the sharp constants
//! derived from them.

mod constants;
pub mod shooting;

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::{Field, Grid};

pub use constants::{
    gn_constant, gn_exponent, sobolev_constant, BubbleParams, ConstantsTable, GnEntry,
};

/// Positive radial solution of `-Δu + u = u^p` sampled on a grid.
#[derive(Clone, Debug)]
pub struct GroundState {
    pub dim: usize,
    pub power: u32,
    pub field: Field,
    /// Central value found by shooting.
    pub center: f64,
    /// Relative residual of the discretized equation after polishing.
    pub residual: f64,
}

fn check_power(dim: usize, power: u32) -> Result<()> {
    if !(1..=4).contains(&dim) {
        return Err(Error::Domain(format!("dimension {dim}")));
    }
    let supercritical = match dim {
        3 => power >= 5,
        4 => power >= 3,
        _ => false,
    };
    if power < 2 || supercritical {
        return Err(Error::Domain(format!(
            "power {power} in dimension {dim} has no H¹ ground state"
        )));
    }
    Ok(())
}

/// Grid adequate for the exponentially decaying ground states.
pub fn default_profile_grid(dim: usize) -> Result<Grid> {
    RadialGrid::graded(dim, 40.0, 4096, 3.0)
}

pub fn solve_scalar_ground_state(dim: usize, power: u32) -> Result<GroundState> {
    ground_state_on(Arc::new(default_profile_grid(dim)?), power)
}

/// Shooting for the central value, then Newton polish on `grid`.
pub fn ground_state_on(grid: Arc<Grid>, power: u32) -> Result<GroundState> {
    check_power(grid.dim(), power)?;
    let dim = grid.dim();
    let p = power as f64;
    let center = shooting::find_center(dim, p)?;
    let shot = shooting::trace(dim, p, center);
    let guess = grid.tabulate(|r| shot.value(dim, r));
    let (values, residual) = polish(&grid, p, guess)?;
    Ok(GroundState {
        dim,
        power,
        field: RadialField::new(grid, values)?,
        center,
        residual,
    })
}

/// Newton iteration on `S u + W (u - u^p) = 0`.
pub fn polish(grid: &Grid, p: f64, mut u: Vec<f64>) -> Result<(Vec<f64>, f64)> {
    let stiff = grid.stiffness();
    let w = grid.weights();
    let mut residual = f64::INFINITY;
    for _ in 0..50 {
        let su = grid.stiffness_apply(&u);
        let f: Vec<f64> = (0..u.len())
            .map(|j| su[j] + w[j] * (u[j] - u[j].abs().powf(p - 1.0) * u[j]))
            .collect();
        let scale = grid.norm_sq(&u).sqrt();
        let next = (f.iter().zip(w).map(|(x, wj)| x * x / wj).sum::<f64>()).sqrt() / scale;
        if next >= residual && next < 1e-10 {
            break;
        }
        residual = next;
        if residual < 1e-13 {
            break;
        }
        let mut jac = stiff.clone();
        let diag: Vec<f64> = (0..u.len())
            .map(|j| w[j] * (1.0 - p * u[j].abs().powf(p - 1.0)))
            .collect();
        jac.add_diagonal(&diag);
        let step = jac
            .factor()?
            .solve(&f.iter().map(|x| -x).collect::<Vec<_>>());
        for (x, d) in u.iter_mut().zip(&step) {
            *x += d;
        }
    }
    if !(residual < 1e-10) {
        return Err(Error::ProfileSolve(format!(
            "Newton polish stalled at residual {residual:.3e}"
        )));
    }
    Ok((u, residual))
}

/// Aubin–Talenti bubble `U_ε(r) = 2√2 ε / (ε² + r²)`, solving `-ΔU = U³` in `R⁴`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AubinTalenti {
    pub eps: f64,
}

impl AubinTalenti {
    pub fn new(eps: f64) -> Result<Self> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(Error::Domain(format!("bubble scale {eps}")));
        }
        Ok(AubinTalenti { eps })
    }

    pub fn value(&self, r: f64) -> f64 {
        2.0 * 2f64.sqrt() * self.eps / (self.eps * self.eps + r * r)
    }

    pub fn derivative(&self, r: f64) -> f64 {
        let s = self.eps * self.eps + r * r;
        -4.0 * 2f64.sqrt() * self.eps * r / (s * s)
    }

    /// `∫_{|x|>R} U⁴` over `R⁴`.
    pub fn quartic_tail(&self, r: f64) -> f64 {
        let e2 = self.eps * self.eps;
        let s = e2 + r * r;
        let omega = 2.0 * std::f64::consts::PI.powi(2);
        omega * 64.0 * e2 * e2 * 0.5 * (1.0 / (2.0 * s * s) - e2 / (3.0 * s * s * s))
    }

    /// `∫_{|x|>R} |∇U|²` over `R⁴`.
    pub fn gradient_tail(&self, r: f64) -> f64 {
        let e2 = self.eps * self.eps;
        let s = e2 + r * r;
        let omega = 2.0 * std::f64::consts::PI.powi(2);
        omega * 16.0 * e2 * (1.0 / s - e2 / (s * s) + e2 * e2 / (3.0 * s * s * s))
    }

    pub fn sample(&self, grid: Arc<Grid>) -> Field {
        RadialField::from_fn(grid, |r| self.value(r))
    }
}

/// Scale of the bubble with the given central value.
pub fn bubble_scale_from_peak(peak: f64) -> f64 {
    2.0 * 2f64.sqrt() / peak
}
