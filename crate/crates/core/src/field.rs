use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::scalar::Scalar;

/// Samples of a radial function at the nodes of a shared grid.
#[derive(Clone, Debug)]
pub struct RadialField<S> {
    grid: Arc<RadialGrid<S>>,
    values: Vec<S>,
}

impl<S: Scalar> RadialField<S> {
    pub fn new(grid: Arc<RadialGrid<S>>, values: Vec<S>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::Config(format!(
                "{} samples for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        Ok(RadialField { grid, values })
    }

    pub fn from_fn(grid: Arc<RadialGrid<S>>, f: impl Fn(S) -> S) -> Self {
        let values = grid.tabulate(f);
        RadialField { grid, values }
    }

    pub fn zeros(grid: Arc<RadialGrid<S>>) -> Self {
        let values = vec![S::zero(); grid.len()];
        RadialField { grid, values }
    }

    pub fn grid(&self) -> &Arc<RadialGrid<S>> {
        &self.grid
    }
    pub fn values(&self) -> &[S] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [S] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<S> {
        self.values
    }

    pub fn integrate(&self) -> S {
        self.grid.integrate(&self.values)
    }
    pub fn mass(&self) -> S {
        self.grid.norm_sq(&self.values)
    }
    pub fn kinetic(&self) -> S {
        self.grid.kinetic(&self.values)
    }
    pub fn h1_norm_sq(&self) -> S {
        self.kinetic() + self.mass()
    }
    pub fn laplacian(&self) -> RadialField<S> {
        RadialField {
            grid: self.grid.clone(),
            values: self.grid.laplacian(&self.values),
        }
    }
    pub fn sample(&self, r: S) -> S {
        self.grid.sample(&self.values, r)
    }
    pub fn map(&self, f: impl Fn(S) -> S) -> RadialField<S> {
        RadialField {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }
    pub fn scale(&mut self, a: S) {
        for x in &mut self.values {
            *x *= a;
        }
    }
    pub fn max_abs(&self) -> S {
        self.values.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
    }
    /// `|f(r_max⁻)| / max|f|`, the boundary decay ratio used to size grids.
    pub fn edge_ratio(&self) -> S {
        let m = self.max_abs();
        if m == S::zero() {
            return S::zero();
        }
        self.values[self.values.len() - 1].abs() / m
    }

    pub fn same_grid(&self, other: &RadialField<S>) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || self.grid.same_layout(&other.grid)
    }
}
