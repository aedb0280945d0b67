use std::sync::Arc;

use crate::error::{Error, Result};
use crate::field::RadialField;
use crate::grid::RadialGrid;
use crate::scalar::Scalar;

/// A pair `(u, v)` on one grid together with its target masses `(b1, b2)`,
/// meaning `∫u² = b1²` and `∫v² = b2²`.
#[derive(Clone, Debug)]
pub struct StatePair<S> {
    pub u: RadialField<S>,
    pub v: RadialField<S>,
    pub b1: S,
    pub b2: S,
}

impl<S: Scalar> StatePair<S> {
    pub fn new(u: RadialField<S>, v: RadialField<S>, b1: S, b2: S) -> Result<Self> {
        if !u.same_grid(&v) {
            return Err(Error::GridMismatch);
        }
        Ok(StatePair { u, v, b1, b2 })
    }

    /// Rescales each nonzero component onto its mass sphere.
    pub fn normalized(u: RadialField<S>, v: RadialField<S>, b1: S, b2: S) -> Result<Self> {
        let mut s = Self::new(u, v, b1, b2)?;
        s.project_masses();
        Ok(s)
    }

    pub fn project_masses(&mut self) {
        for (f, b) in [(&mut self.u, self.b1), (&mut self.v, self.b2)] {
            let m = f.mass();
            if m > S::zero() {
                f.scale(b / m.sqrt());
            }
        }
    }

    pub fn grid(&self) -> &Arc<RadialGrid<S>> {
        self.u.grid()
    }

    pub fn masses(&self) -> (S, S) {
        (self.u.mass(), self.v.mass())
    }

    /// Mass-preserving dilation `(t⋆u)(x) = e^{Nt/2} u(e^t x)` resampled on
    /// the same grid.
    pub fn dilate(&self, t: S) -> Result<StatePair<S>> {
        let grid = self.grid().clone();
        let nd = S::of(grid.dim() as f64);
        let amp = (nd * t / S::of(2.0)).exp();
        let k = t.exp();
        let resample = |f: &RadialField<S>| -> Result<RadialField<S>> {
            let g = RadialField::from_fn(grid.clone(), |r| amp * f.sample(k * r));
            let (m0, m1) = (f.mass(), g.mass());
            if m0 > S::zero() {
                let drift = ((m1 - m0) / m0).abs();
                if drift > S::of(1e-6) || !drift.is_finite() {
                    return Err(Error::DilationRange {
                        t: t.f64(),
                        drift: drift.f64(),
                    });
                }
            }
            Ok(g)
        };
        Ok(StatePair {
            u: resample(&self.u)?,
            v: resample(&self.v)?,
            b1: self.b1,
            b2: self.b2,
        })
    }

    /// The same dilation realised exactly by rescaling the grid itself:
    /// radii shrink by `e^{-t}` and values grow by `e^{Nt/2}`.
    pub fn dilate_exact(&self, t: S) -> Result<StatePair<S>> {
        let grid = Arc::new(self.grid().scaled((-t).exp())?);
        let nd = S::of(grid.dim() as f64);
        let amp = (nd * t / S::of(2.0)).exp();
        let lift = |f: &RadialField<S>| {
            RadialField::new(grid.clone(), f.values().iter().map(|&x| amp * x).collect())
        };
        Ok(StatePair {
            u: lift(&self.u)?,
            v: lift(&self.v)?,
            b1: self.b1,
            b2: self.b2,
        })
    }
}

impl StatePair<f64> {
    /// Interpolates both components onto another grid of the same dimension.
    pub fn resample_onto(&self, grid: Arc<RadialGrid<f64>>) -> Result<StatePair<f64>> {
        if grid.dim() != self.grid().dim() {
            return Err(Error::GridMismatch);
        }
        let u = RadialField::from_fn(grid.clone(), |r| self.u.sample(r));
        let v = RadialField::from_fn(grid, |r| self.v.sample(r));
        StatePair::new(u, v, self.b1, self.b2)
    }
}

/// `‖(u₁ - u₂, v₁ - v₂)‖_{H¹}` for states on a common grid.
pub fn h1_distance<S: Scalar>(a: &StatePair<S>, b: &StatePair<S>) -> Result<S> {
    if !a.u.same_grid(&b.u) {
        return Err(Error::GridMismatch);
    }
    let grid = a.grid();
    let mut total = S::zero();
    for (f, g) in [(&a.u, &b.u), (&a.v, &b.v)] {
        let d: Vec<S> = f
            .values()
            .iter()
            .zip(g.values())
            .map(|(&x, &y)| x - y)
            .collect();
        total += grid.kinetic(&d) + grid.norm_sq(&d);
    }
    Ok(total.sqrt())
}

pub fn h1_norm<S: Scalar>(s: &StatePair<S>) -> S {
    (s.u.h1_norm_sq() + s.v.h1_norm_sq()).sqrt()
}
