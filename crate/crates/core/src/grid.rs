//! Cell-centred radial grids on `[0, r_max]`.
//!
//! Nodes sit at `r_j = φ((j + 1/2)/n)` for a mapping `φ` of the unit
//! interval (identity or a sinh stretch). Integrals use the midpoint rule in
//! the mapped variable with Euler–Maclaurin end corrections; derivatives are
//! fourth-order staggered differences on cell faces, with even reflection
//! at the origin and odd reflection (Dirichlet) at `r_max`.

use serde::{Deserialize, Serialize};

use crate::banded::Banded;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Spacing {
    Uniform,
    Graded { stretch: f64 },
}

impl Spacing {
    pub const DEFAULT_STRETCH: f64 = 4.0;

    pub fn graded() -> Self {
        Spacing::Graded {
            stretch: Self::DEFAULT_STRETCH,
        }
    }
}

/// Surface measure of the unit sphere in `R^N` (2 for `N = 1`).
pub fn sphere_area<S: Scalar>(dim: usize) -> S {
    let pi = S::PI();
    match dim {
        1 => S::of(2.0),
        2 => S::of(2.0) * pi,
        3 => S::of(4.0) * pi,
        4 => S::of(2.0) * pi * pi,
        _ => unreachable!("dimension validated on construction"),
    }
}

#[derive(Clone, Debug)]
pub struct RadialGrid<S> {
    dim: usize,
    r_max: S,
    n: usize,
    spacing: Spacing,
    h: S,
    nodes: Vec<S>,
    weights: Vec<S>,
    face_weights: Vec<S>,
}

const D1: f64 = 1.0 / 24.0;
const D27: f64 = 27.0 / 24.0;

impl<S: Scalar> RadialGrid<S> {
    pub fn new(dim: usize, r_max: S, n: usize, spacing: Spacing) -> Result<Self> {
        if !(1..=4).contains(&dim) {
            return Err(Error::Config(format!("dimension {dim} not in 1..=4")));
        }
        if !(r_max > S::zero()) || !r_max.is_finite() {
            return Err(Error::Config(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        if n < 64 {
            return Err(Error::Config(format!(
                "grid needs at least 64 nodes, got {n}"
            )));
        }
        if let Spacing::Graded { stretch } = spacing {
            if !(stretch > 0.0) || !stretch.is_finite() {
                return Err(Error::Config(format!(
                    "stretch must be positive, got {stretch}"
                )));
            }
        }
        let h = S::one() / S::of(n as f64);
        let mut grid = RadialGrid {
            dim,
            r_max,
            n,
            spacing,
            h,
            nodes: Vec::new(),
            weights: Vec::new(),
            face_weights: Vec::new(),
        };
        grid.nodes = (0..n).map(|j| grid.map(grid.xi_node(j))).collect();
        grid.weights = grid.build_weights();
        grid.face_weights = grid.build_face_weights();
        Ok(grid)
    }

    pub fn uniform(dim: usize, r_max: S, n: usize) -> Result<Self> {
        Self::new(dim, r_max, n, Spacing::Uniform)
    }

    pub fn graded(dim: usize, r_max: S, n: usize, stretch: f64) -> Result<Self> {
        Self::new(dim, r_max, n, Spacing::Graded { stretch })
    }

    /// Same layout with every radius multiplied by `factor`.
    pub fn scaled(&self, factor: S) -> Result<Self> {
        Self::new(self.dim, self.r_max * factor, self.n, self.spacing)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn r_max(&self) -> S {
        self.r_max
    }
    pub fn len(&self) -> usize {
        self.n
    }
    pub fn is_empty(&self) -> bool {
        self.n == 0
    }
    pub fn spacing(&self) -> Spacing {
        self.spacing
    }
    pub fn nodes(&self) -> &[S] {
        &self.nodes
    }
    pub fn weights(&self) -> &[S] {
        &self.weights
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.dim == other.dim
            && self.n == other.n
            && self.spacing == other.spacing
            && self.r_max == other.r_max
    }

    fn xi_node(&self, j: usize) -> S {
        (S::of(j as f64) + S::of(0.5)) * self.h
    }

    fn map(&self, xi: S) -> S {
        match self.spacing {
            Spacing::Uniform => self.r_max * xi,
            Spacing::Graded { stretch } => {
                let s = S::of(stretch);
                self.r_max * (s * xi).sinh() / s.sinh()
            }
        }
    }

    fn dmap(&self, xi: S) -> S {
        match self.spacing {
            Spacing::Uniform => self.r_max,
            Spacing::Graded { stretch } => {
                let s = S::of(stretch);
                self.r_max * s * (s * xi).cosh() / s.sinh()
            }
        }
    }

    fn inverse_map(&self, r: S) -> S {
        match self.spacing {
            Spacing::Uniform => r / self.r_max,
            Spacing::Graded { stretch } => {
                let s = S::of(stretch);
                (r * s.sinh() / self.r_max).asinh() / s
            }
        }
    }

    fn build_weights(&self) -> Vec<S> {
        let n = self.n;
        let omega: S = sphere_area(self.dim);
        let g: Vec<S> = (0..n)
            .map(|j| {
                let xi = self.xi_node(j);
                self.map(xi).powi(self.dim as i32 - 1) * self.dmap(xi)
            })
            .collect();
        let mut kappa = vec![S::zero(); n];
        // Outer end: one-sided quartic fit of the integrand for g'(1), g'''(1).
        let inv = end_fit_rows();
        for k in 0..5 {
            let c = inv[1][k] / 24.0 - 42.0 * inv[3][k] / 5760.0;
            kappa[n - 1 - k] += S::of(c);
        }
        if self.dim % 2 == 0 {
            // Odd integrand at the origin: fit c1 ξ + c3 ξ³ to the first two cells.
            kappa[0] += S::of(-2.25 / 24.0 - 7.0 / 960.0);
            kappa[1] += S::of(1.0 / (12.0 * 24.0) + 7.0 / (3.0 * 960.0));
        }
        g.iter()
            .zip(&kappa)
            .map(|(&gj, &kj)| omega * self.h * gj * (S::one() + kj))
            .collect()
    }

    fn build_face_weights(&self) -> Vec<S> {
        let omega: S = sphere_area(self.dim);
        (0..=self.n)
            .map(|k| {
                let xi = S::of(k as f64) * self.h;
                let mut c = omega * self.h * self.map(xi).powi(self.dim as i32 - 1) / self.dmap(xi);
                if k == 0 || k == self.n {
                    c = c * S::of(0.5);
                }
                c
            })
            .collect()
    }

    #[inline]
    fn ghost(&self, f: &[S], i: isize) -> S {
        let n = self.n as isize;
        if i < 0 {
            f[(-1 - i) as usize]
        } else if i >= n {
            -f[(2 * n - 1 - i) as usize]
        } else {
            f[i as usize]
        }
    }

    /// `df/dξ` on the faces `ξ = k h`, `k = 0..=n`.
    pub fn face_derivative(&self, f: &[S]) -> Vec<S> {
        assert_eq!(f.len(), self.n);
        let (a, b) = (S::of(D1) / self.h, S::of(D27) / self.h);
        (0..=self.n as isize)
            .map(|k| {
                a * (self.ghost(f, k - 2) - self.ghost(f, k + 1))
                    + b * (self.ghost(f, k) - self.ghost(f, k - 1))
            })
            .collect()
    }

    /// Weighted Dirichlet form `∫ ∇f·∇g`.
    pub fn kinetic_form(&self, f: &[S], g: &[S]) -> S {
        let df = self.face_derivative(f);
        let dg = self.face_derivative(g);
        self.face_weights
            .iter()
            .zip(df.iter().zip(&dg))
            .map(|(&c, (&x, &y))| c * x * y)
            .sum()
    }

    pub fn kinetic(&self, f: &[S]) -> S {
        let df = self.face_derivative(f);
        self.face_weights
            .iter()
            .zip(&df)
            .map(|(&c, &x)| c * x * x)
            .sum()
    }

    /// Stiffness product `S f`, the gradient of `½∫|∇f|²` with respect to nodal values.
    pub fn stiffness_apply(&self, f: &[S]) -> Vec<S> {
        let df = self.face_derivative(f);
        let n = self.n as isize;
        let (a, b) = (S::of(D1) / self.h, S::of(D27) / self.h);
        let mut out = vec![S::zero(); self.n];
        let mut scatter = |i: isize, x: S| {
            if i < 0 {
                out[(-1 - i) as usize] += x;
            } else if i >= n {
                out[(2 * n - 1 - i) as usize] -= x;
            } else {
                out[i as usize] += x;
            }
        };
        for (k, (&c, &d)) in self.face_weights.iter().zip(&df).enumerate() {
            let y = c * d;
            let k = k as isize;
            scatter(k - 2, a * y);
            scatter(k + 1, -a * y);
            scatter(k, b * y);
            scatter(k - 1, -b * y);
        }
        out
    }

    /// Banded stiffness matrix, bandwidth 3.
    pub fn stiffness(&self) -> Banded<S> {
        let n = self.n as isize;
        let (a, b) = (S::of(D1) / self.h, S::of(D27) / self.h);
        let fold = |i: isize| -> (usize, S) {
            if i < 0 {
                ((-1 - i) as usize, S::one())
            } else if i >= n {
                ((2 * n - 1 - i) as usize, -S::one())
            } else {
                (i as usize, S::one())
            }
        };
        let mut m = Banded::zeros(self.n, 3, 3);
        for (k, &c) in self.face_weights.iter().enumerate() {
            let k = k as isize;
            let stencil = [(k - 2, a), (k - 1, -b), (k, b), (k + 1, -a)];
            let row: Vec<(usize, S)> = stencil
                .iter()
                .map(|&(i, w)| {
                    let (j, s) = fold(i);
                    (j, s * w)
                })
                .collect();
            for &(i, wi) in &row {
                for &(j, wj) in &row {
                    m.add(i, j, c * wi * wj);
                }
            }
        }
        m
    }

    /// Pointwise radial Laplacian `Δf = -W⁻¹ S f`.
    pub fn laplacian(&self, f: &[S]) -> Vec<S> {
        self.stiffness_apply(f)
            .iter()
            .zip(&self.weights)
            .map(|(&s, &w)| -s / w)
            .collect()
    }

    pub fn integrate(&self, f: &[S]) -> S {
        assert_eq!(f.len(), self.n);
        f.iter().zip(&self.weights).map(|(&x, &w)| x * w).sum()
    }

    pub fn dot(&self, f: &[S], g: &[S]) -> S {
        f.iter()
            .zip(g)
            .zip(&self.weights)
            .map(|((&x, &y), &w)| x * y * w)
            .sum()
    }

    pub fn norm_sq(&self, f: &[S]) -> S {
        self.dot(f, f)
    }

    /// Cubic interpolation in the mapped variable, zero beyond `r_max`.
    pub fn sample(&self, f: &[S], r: S) -> S {
        let r = r.abs();
        if r >= self.r_max {
            return S::zero();
        }
        let p = self.inverse_map(r) / self.h - S::of(0.5);
        let i0 = p.floor();
        let t = p - i0;
        let i0 = i0.to_isize().unwrap_or(0);
        let n = self.n as isize;
        let at = |i: isize| -> S {
            if i < 0 {
                f[(-1 - i) as usize]
            } else if i >= n {
                S::zero()
            } else {
                f[i as usize]
            }
        };
        let one = S::one();
        let two = S::of(2.0);
        let six = S::of(6.0);
        let wm = -t * (t - one) * (t - two) / six;
        let w0 = (t + one) * (t - one) * (t - two) / two;
        let w1 = -(t + one) * t * (t - two) / two;
        let w2 = (t + one) * t * (t - one) / six;
        wm * at(i0 - 1) + w0 * at(i0) + w1 * at(i0 + 1) + w2 * at(i0 + 2)
    }

    pub fn tabulate(&self, f: impl Fn(S) -> S) -> Vec<S> {
        self.nodes.iter().map(|&r| f(r)).collect()
    }
}

/// Rows 1 and 3 of the inverse Vandermonde matrix for the nodes
/// `s_k = -(k + 1/2)`, `k = 0..5`, i.e. `p'(0)` and `p'''(0)/6` weights.
fn end_fit_rows() -> [[f64; 5]; 4] {
    let mut v = [[0.0f64; 5]; 5];
    for (k, row) in v.iter_mut().enumerate() {
        let s = -(k as f64 + 0.5);
        for (m, x) in row.iter_mut().enumerate() {
            *x = s.powi(m as i32);
        }
    }
    // Invert by Gauss-Jordan on [V | I].
    let mut a = [[0.0f64; 10]; 5];
    for i in 0..5 {
        a[i][..5].copy_from_slice(&v[i]);
        a[i][5 + i] = 1.0;
    }
    for c in 0..5 {
        let p = (c..5)
            .max_by(|&x, &y| a[x][c].abs().total_cmp(&a[y][c].abs()))
            .unwrap();
        a.swap(c, p);
        let d = a[c][c];
        for x in a[c].iter_mut() {
            *x /= d;
        }
        for r in 0..5 {
            if r != c {
                let f = a[r][c];
                for j in 0..10 {
                    a[r][j] -= f * a[c][j];
                }
            }
        }
    }
    // Inverse is a[.][5..]; coefficient m of the interpolant is sum_k inv[m][k] g_k.
    let mut out = [[0.0f64; 5]; 4];
    for m in 0..4 {
        for k in 0..5 {
            out[m][k] = a[m][5 + k];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball_volume(dim: usize, r: f64) -> f64 {
        let pi = std::f64::consts::PI;
        match dim {
            1 => 2.0 * r,
            2 => pi * r * r,
            3 => 4.0 / 3.0 * pi * r.powi(3),
            _ => pi * pi / 2.0 * r.powi(4),
        }
    }

    #[test]
    fn constant_integrates_to_ball_volume() {
        for dim in 1..=4 {
            for sp in [Spacing::Uniform, Spacing::graded()] {
                let g = RadialGrid::<f64>::new(dim, 7.5, 300, sp).unwrap();
                let v = g.integrate(&vec![1.0; 300]);
                let exact = ball_volume(dim, 7.5);
                let tol = if sp == Spacing::Uniform { 1e-12 } else { 1e-9 };
                assert!(
                    (v / exact - 1.0).abs() < tol,
                    "dim {dim} {sp:?}: {v} vs {exact}"
                );
            }
        }
    }

    #[test]
    fn gaussian_mass() {
        let g = RadialGrid::<f64>::uniform(3, 12.0, 2048).unwrap();
        let f = g.tabulate(|r| (-r * r).exp());
        let pi = std::f64::consts::PI;
        assert!((g.integrate(&f) / pi.powf(1.5) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_positive() {
        for dim in 1..=4 {
            let g = RadialGrid::<f64>::graded(dim, 30.0, 64, 6.0).unwrap();
            assert!(g.weights().iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn stiffness_matches_apply_and_is_symmetric() {
        let g = RadialGrid::<f64>::graded(3, 10.0, 64, 3.0).unwrap();
        let m = g.stiffness();
        let f: Vec<f64> = (0..64).map(|i| ((i as f64) * 0.37).cos()).collect();
        let a = g.stiffness_apply(&f);
        let b = m.matvec(&f);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10 * (1.0 + x.abs()));
        }
        for i in 0..40 {
            for j in 0..40 {
                assert!((m.get(i, j) - m.get(j, i)).abs() < 1e-12);
            }
        }
        assert!((g.kinetic(&f) - f.iter().zip(&a).map(|(x, y)| x * y).sum::<f64>()).abs() < 1e-10);
    }

    #[test]
    fn laplacian_of_gaussian() {
        for dim in 1..=4 {
            let g = RadialGrid::<f64>::uniform(dim, 10.0, 1000).unwrap();
            let f = g.tabulate(|r| (-r * r).exp());
            let lap = g.laplacian(&f);
            let nd = dim as f64;
            for (j, &r) in g
                .nodes()
                .iter()
                .enumerate()
                .filter(|(_, &r)| r > 0.3 && r < 6.0)
            {
                let exact = (4.0 * r * r - 2.0 * nd) * (-r * r).exp();
                assert!(
                    (lap[j] - exact).abs() < 1e-6,
                    "dim {dim} r {r}: {} vs {exact}",
                    lap[j]
                );
            }
        }
    }

    #[test]
    fn kinetic_of_gaussian() {
        let g = RadialGrid::<f64>::graded(3, 9.0, 1024, 2.0).unwrap();
        let f = g.tabulate(|r| (-r * r).exp());
        let pi = std::f64::consts::PI;
        let exact = 3.0 * pi.powf(1.5) / (2.0 * 2f64.sqrt());
        assert!(
            (g.kinetic(&f) / exact - 1.0).abs() < 1e-10,
            "{} vs {exact}",
            g.kinetic(&f)
        );
    }

    #[test]
    fn interpolation_reproduces_smooth_field() {
        let g = RadialGrid::<f64>::graded(2, 8.0, 512, 3.0).unwrap();
        let f = g.tabulate(|r| (-r * r / 3.0).exp());
        for k in 0..200 {
            let r = 7.5 * k as f64 / 200.0;
            assert!((g.sample(&f, r) - (-r * r / 3.0).exp()).abs() < 1e-7);
        }
        assert_eq!(g.sample(&f, 8.5), 0.0);
    }

    #[test]
    fn single_precision_grid() {
        let g = RadialGrid::<f32>::uniform(3, 8.0, 512).unwrap();
        let f = g.tabulate(|r| (-r * r).exp());
        let pi = std::f32::consts::PI;
        assert!((g.integrate(&f) / pi.powf(1.5) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn rejects_bad_layout() {
        assert!(RadialGrid::<f64>::uniform(5, 1.0, 100).is_err());
        assert!(RadialGrid::<f64>::uniform(3, -1.0, 100).is_err());
        assert!(RadialGrid::<f64>::uniform(3, 1.0, 4).is_err());
    }
}
