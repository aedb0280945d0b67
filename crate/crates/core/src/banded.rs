//! Banded matrices with LU factorizations.
//!
//! The shifted Laplacians assembled on radial grids are eliminated without
//! row exchanges; indefinite Jacobians use the pivoted variant.

use num_traits::Num;

use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct Banded<T> {
    n: usize,
    kl: usize,
    ku: usize,
    data: Vec<T>,
}

impl<T: Copy + Num> Banded<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        Banded {
            n,
            kl,
            ku,
            data: vec![T::zero(); n * (kl + ku + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        if j + self.kl < i || j > i + self.ku || i >= self.n || j >= self.n {
            return None;
        }
        Some(i * (self.kl + self.ku + 1) + (j + self.kl - i))
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |s| self.data[s])
    }

    pub fn add(&mut self, i: usize, j: usize, x: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = self.data[s] + x;
    }

    pub fn set(&mut self, i: usize, j: usize, x: T) {
        let s = self.slot(i, j).expect("entry outside band");
        self.data[s] = x;
    }

    pub fn add_diagonal(&mut self, d: &[T]) {
        for (i, &x) in d.iter().enumerate() {
            self.add(i, i, x);
        }
    }

    /// Entrywise `a * self + b * other` for matrices of identical shape.
    pub fn combine(&self, a: T, other: &Banded<T>, b: T) -> Banded<T> {
        assert!(self.n == other.n && self.kl == other.kl && self.ku == other.ku);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&x, &y)| a * x + b * y)
            .collect();
        Banded {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            data,
        }
    }

    pub fn map<U: Copy + Num>(&self, f: impl Fn(T) -> U) -> Banded<U> {
        Banded {
            n: self.n,
            kl: self.kl,
            ku: self.ku,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        self.matvec_into(x, &mut y);
        y
    }

    pub fn matvec_into(&self, x: &[T], y: &mut [T]) {
        let w = self.kl + self.ku + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.kl);
            let hi = (i + self.ku + 1).min(self.n);
            let row = &self.data[i * w..(i + 1) * w];
            let mut acc = T::zero();
            for j in lo..hi {
                acc = acc + row[j + self.kl - i] * x[j];
            }
            y[i] = acc;
        }
    }

    pub fn factor(mut self) -> Result<BandedLu<T>> {
        let w = self.kl + self.ku + 1;
        for k in 0..self.n {
            let pivot = self.data[k * w + self.kl];
            if pivot.is_zero() {
                return Err(Error::Singular(k));
            }
            let imax = (k + self.kl + 1).min(self.n);
            let jmax = (k + self.ku + 1).min(self.n);
            for i in k + 1..imax {
                let sik = i * w + (k + self.kl - i);
                let l = self.data[sik] / pivot;
                self.data[sik] = l;
                for j in k + 1..jmax {
                    let skj = k * w + (j + self.kl - k);
                    let sij = i * w + (j + self.kl - i);
                    self.data[sij] = self.data[sij] - l * self.data[skj];
                }
            }
        }
        Ok(BandedLu { m: self })
    }
}

#[derive(Clone, Debug)]
pub struct BandedLu<T> {
    m: Banded<T>,
}

impl<T: Copy + Num> BandedLu<T> {
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }

    pub fn solve_in_place(&self, x: &mut [T]) {
        let m = &self.m;
        let w = m.kl + m.ku + 1;
        for i in 0..m.n {
            let lo = i.saturating_sub(m.kl);
            let mut acc = x[i];
            for j in lo..i {
                acc = acc - m.data[i * w + (j + m.kl - i)] * x[j];
            }
            x[i] = acc;
        }
        for i in (0..m.n).rev() {
            let hi = (i + m.ku + 1).min(m.n);
            let mut acc = x[i];
            for j in i + 1..hi {
                acc = acc - m.data[i * w + (j + m.kl - i)] * x[j];
            }
            x[i] = acc / m.data[i * w + m.kl];
        }
    }
}

/// LU factorization with partial pivoting for indefinite banded systems.
/// Rows exchanged at step `k` keep the band: `U` gains `kl` extra
/// superdiagonals.
#[derive(Clone, Debug)]
pub struct PivotedLu {
    n: usize,
    kl: usize,
    width: usize,
    /// Row `i` holds columns `i..i + width` of `U`.
    upper: Vec<f64>,
    lower: Vec<f64>,
    pivots: Vec<usize>,
}

impl Banded<f64> {
    pub fn factor_pivoted(&self) -> Result<PivotedLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        // Working rows store columns `i - kl ..= i + ku + kl`.
        let span = 2 * kl + ku + 1;
        let mut rows = vec![0.0; n * span];
        for i in 0..n {
            for j in i.saturating_sub(kl)..(i + ku + 1).min(n) {
                rows[i * span + j + kl - i] = self.get(i, j);
            }
        }
        let at = |i: usize, j: usize| i * span + j + kl - i;
        let width = ku + kl + 1;
        let mut lower = vec![0.0; n * kl];
        let mut pivots = vec![0; n];
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            for i in k + 1..=last {
                if rows[at(i, k)].abs() > rows[at(p, k)].abs() {
                    p = i;
                }
            }
            pivots[k] = p;
            let jmax = (k + width).min(n);
            if p != k {
                for j in k..jmax {
                    rows.swap(at(k, j), at(p, j));
                }
            }
            let pivot = rows[at(k, k)];
            if pivot == 0.0 {
                return Err(Error::Singular(k));
            }
            for i in k + 1..=last {
                let l = rows[at(i, k)] / pivot;
                lower[k * kl.max(1) + (i - k - 1)] = l;
                if l != 0.0 {
                    for j in k + 1..jmax {
                        rows[at(i, j)] -= l * rows[at(k, j)];
                    }
                }
            }
        }
        let mut upper = vec![0.0; n * width];
        for i in 0..n {
            for j in i..(i + width).min(n) {
                upper[i * width + j - i] = rows[at(i, j)];
            }
        }
        Ok(PivotedLu { n, kl, width, upper, lower, pivots })
    }
}

impl PivotedLu {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, kl, w) = (self.n, self.kl, self.width);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
            let xk = x[k];
            for i in k + 1..(k + kl + 1).min(n) {
                x[i] -= self.lower[k * kl.max(1) + (i - k - 1)] * xk;
            }
        }
        for i in (0..n).rev() {
            let row = &self.upper[i * w..(i + 1) * w];
            let mut acc = x[i];
            for j in i + 1..(i + w).min(n) {
                acc -= row[j - i] * x[j];
            }
            x[i] = acc / row[0];
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn tridiag(n: usize) -> Banded<f64> {
        let mut a = Banded::zeros(n, 1, 1);
        for i in 0..n {
            a.set(i, i, 4.0);
            if i > 0 {
                a.set(i, i - 1, -1.0);
            }
            if i + 1 < n {
                a.set(i, i + 1, -1.5);
            }
        }
        a
    }

    #[test]
    fn lu_inverts_matvec() {
        let a = tridiag(50);
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.3).sin()).collect();
        let b = a.matvec(&x);
        let y = a.factor().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-13);
        }
    }

    #[test]
    fn complex_wide_band() {
        let n = 40;
        let mut a = Banded::<Complex64>::zeros(n, 3, 3);
        for i in 0..n {
            for j in i.saturating_sub(3)..(i + 4).min(n) {
                let d = (i as f64 - j as f64).abs();
                let v = if i == j {
                    Complex64::new(10.0, 1.0)
                } else {
                    Complex64::new(-1.0 / (1.0 + d), 0.5)
                };
                a.set(i, j, v);
            }
        }
        let x: Vec<Complex64> = (0..n)
            .map(|i| Complex64::new(i as f64, -(i as f64).sqrt()))
            .collect();
        let b = a.matvec(&x);
        let y = a.factor().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).norm() < 1e-11);
        }
    }

    #[test]
    fn pivoting_handles_zero_diagonal() {
        let n = 30;
        let mut a = Banded::<f64>::zeros(n, 2, 2);
        for i in 0..n {
            for j in i.saturating_sub(2)..(i + 3).min(n) {
                let v = if i == j { 0.0 } else { 1.0 + ((i * 7 + j * 3) % 5) as f64 };
                a.set(i, j, v);
            }
        }
        let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).cos()).collect();
        let b = a.matvec(&x);
        assert!(a.clone().factor().is_err());
        let y = a.factor_pivoted().unwrap().solve(&b);
        for (p, q) in x.iter().zip(&y) {
            assert!((p - q).abs() < 1e-10, "{p} {q}");
        }
    }

    #[test]
    fn zero_pivot_reported() {
        let a = Banded::<f64>::zeros(3, 1, 1);
        assert!(matches!(a.factor(), Err(Error::Singular(0))));
    }
}
