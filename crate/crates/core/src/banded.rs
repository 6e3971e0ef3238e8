//! Symmetric banded matrices with an `LDL^T` factorization.
//!
//! Storage keeps the lower band: `band[i][d]` holds entry `(i, i - d)` for
//! `d = 0..=bw`.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct SymBanded<T> {
    n: usize,
    bw: usize,
    band: Vec<T>,
}

impl<T: Scalar> SymBanded<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self { n, bw, band: vec![T::zero(); n * (bw + 1)] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (hi, lo) = if i >= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        (d <= self.bw).then(|| hi * (self.bw + 1) + d)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.slot(i, j).map_or(T::zero(), |s| self.band[s])
    }

    /// Adds `v` to entry `(i, j)` (and, by symmetry, `(j, i)`).
    ///
    /// # Panics
    /// If `|i - j|` exceeds the bandwidth.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let s = self.slot(i, j).unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bw));
        self.band[s] += v;
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self.band[i * (self.bw + 1)] += v;
        }
    }

    pub fn diagonal(&self) -> Vec<T> {
        (0..self.n).map(|i| self.band[i * (self.bw + 1)]).collect()
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let row = &self.band[i * (self.bw + 1)..(i + 1) * (self.bw + 1)];
            y[i] += row[0] * x[i];
            for d in 1..=self.bw.min(i) {
                let j = i - d;
                y[i] += row[d] * x[j];
                y[j] += row[d] * x[i];
            }
        }
        y
    }

    /// In-place `LDL^T` factorization; fails on a non-positive pivot.
    pub fn factor(mut self) -> Result<BandedLdl<T>> {
        let w = self.bw + 1;
        let mut diag = vec![T::zero(); self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..i {
                // L(i,j) = (A(i,j) - sum_{k<j} L(i,k) D(k) L(j,k)) / D(j)
                let k0 = j0.max(j.saturating_sub(self.bw));
                let mut s = self.band[i * w + (i - j)];
                for k in k0..j {
                    s -= self.band[i * w + (i - k)] * diag[k] * self.band[j * w + (j - k)];
                }
                self.band[i * w + (i - j)] = s / diag[j];
            }
            let mut d = self.band[i * w];
            for k in j0..i {
                let l = self.band[i * w + (i - k)];
                d -= l * l * diag[k];
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::NotPositiveDefinite { row: i });
            }
            diag[i] = d;
        }
        Ok(BandedLdl { n: self.n, bw: self.bw, lower: self.band, diag })
    }
}

#[derive(Debug, Clone)]
pub struct BandedLdl<T> {
    n: usize,
    bw: usize,
    lower: Vec<T>,
    diag: Vec<T>,
}

impl<T: Scalar> BandedLdl<T> {
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let w = self.bw + 1;
        let mut x = rhs.to_vec();
        for i in 0..self.n {
            let mut s = x[i];
            for j in i.saturating_sub(self.bw)..i {
                s -= self.lower[i * w + (i - j)] * x[j];
            }
            x[i] = s;
        }
        for i in 0..self.n {
            x[i] /= self.diag[i];
        }
        for i in (0..self.n).rev() {
            let mut s = x[i];
            for j in i + 1..(i + self.bw + 1).min(self.n) {
                s -= self.lower[j * w + (j - i)] * x[j];
            }
            x[i] = s;
        }
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn solves_random_spd_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(n, bw) in &[(1usize, 0usize), (7, 1), (30, 4), (50, 12)] {
            let mut a = SymBanded::<f64>::zeros(n, bw);
            for i in 0..n {
                for d in 1..=bw.min(i) {
                    a.add(i, i - d, rng.gen_range(-1.0..1.0));
                }
            }
            a.add_diagonal(2.0 * (bw as f64 + 1.0));
            let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b = a.matvec(&x);
            let got = a.clone().factor().unwrap().solve(&b);
            for (g, e) in got.iter().zip(&x) {
                assert_relative_eq!(*g, *e, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = SymBanded::<f64>::zeros(2, 1);
        a.add(0, 0, 1.0);
        a.add(1, 0, 2.0);
        a.add(1, 1, 1.0);
        assert!(matches!(a.factor(), Err(Error::NotPositiveDefinite { row: 1 })));
    }

    #[test]
    fn tridiagonal_laplacian() {
        let n = 9;
        let mut a = SymBanded::<f64>::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 2.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        let b = vec![1.0; n];
        let x = a.factor().unwrap().solve(&b);
        // closed form x_i = (i+1)(n-i)/2
        for (i, xi) in x.iter().enumerate() {
            assert_relative_eq!(*xi, ((i + 1) * (n - i)) as f64 / 2.0, epsilon = 1e-12);
        }
    }
}
