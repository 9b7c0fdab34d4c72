//! Symmetric banded matrices and their Cholesky factorization.

use crate::error::{Error, Result};

/// Symmetric matrix storing the lower band `j ∈ [i - bandwidth, i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    bw: usize,
    // row-major: data[i * (bw + 1) + (bw - (i - j))] holds A[i][j]
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, bandwidth: usize) -> Self {
        SymBand {
            n,
            bw: bandwidth,
            data: vec![0.0; n * (bandwidth + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        let off = i - j;
        (off <= self.bw).then(|| i * (self.bw + 1) + (self.bw - off))
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |k| self.data[k])
    }

    /// Adds `v` to the symmetric pair `(i, j)` / `(j, i)`.
    ///
    /// Panics when `(i, j)` lies outside the band.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bw));
        self.data[k] += v;
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .slot(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) outside bandwidth {}", self.bw));
        self.data[k] = v;
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    /// `self += s * other`, both with the same shape.
    pub fn axpy(&mut self, s: f64, other: &SymBand) {
        assert_eq!((self.n, self.bw), (other.n, other.bw));
        self.data
            .iter_mut()
            .zip(&other.data)
            .for_each(|(a, b)| *a += s * b);
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.data[i * (self.bw + 1) + (self.bw - (i - j))];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// `xᵀ A y`.
    pub fn bilinear(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| (0..self.n).map(|j| self.get(i, j)).collect())
            .collect()
    }

    /// Principal submatrix on the sorted index set `keep`.
    ///
    /// The band is preserved because `keep` is increasing.
    pub fn restrict(&self, keep: &[usize]) -> SymBand {
        let mut out = SymBand::zeros(keep.len(), self.bw);
        for (a, &i) in keep.iter().enumerate() {
            for b in a.saturating_sub(self.bw)..=a {
                let j = keep[b];
                if i - j <= self.bw {
                    out.set(a, b, self.get(i, j));
                }
            }
        }
        out
    }

    pub fn cholesky(&self) -> Result<BandCholesky> {
        let n = self.n;
        let bw = self.bw;
        let mut l = self.data.clone();
        let idx = |i: usize, j: usize| i * (bw + 1) + (bw - (i - j));
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut s = l[idx(i, j)];
                let klo = lo.max(j.saturating_sub(bw));
                for k in klo..j {
                    s -= l[idx(i, k)] * l[idx(j, k)];
                }
                if i == j {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(Error::NotPositiveDefinite { row: i, pivot: s });
                    }
                    l[idx(i, i)] = s.sqrt();
                } else {
                    l[idx(i, j)] = s / l[idx(j, j)];
                }
            }
        }
        Ok(BandCholesky { n, bw, l })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let bw = self.bw;
        let idx = |i: usize, j: usize| i * (bw + 1) + (bw - (i - j));
        let mut y = b.to_vec();
        for i in 0..self.n {
            let mut s = y[i];
            for k in i.saturating_sub(bw)..i {
                s -= self.l[idx(i, k)] * y[k];
            }
            y[i] = s / self.l[idx(i, i)];
        }
        for i in (0..self.n).rev() {
            let mut s = y[i];
            for k in i + 1..(i + bw + 1).min(self.n) {
                s -= self.l[idx(k, i)] * y[k];
            }
            y[i] = s / self.l[idx(i, i)];
        }
        y
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spd_tridiagonal(n: usize) -> SymBand {
        let mut a = SymBand::zeros(n, 1);
        for i in 0..n {
            a.add(i, i, 4.0);
            if i > 0 {
                a.add(i, i - 1, -1.0);
            }
        }
        a
    }

    #[test]
    fn solve_tridiagonal() {
        let a = spd_tridiagonal(6);
        let x: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let b = a.matvec(&x);
        let sol = a.cholesky().unwrap().solve(&b);
        for (s, e) in sol.iter().zip(&x) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn solve_wider_band_matches_dense() {
        let n = 9;
        let mut a = SymBand::zeros(n, 3);
        for i in 0..n {
            a.add(i, i, 10.0 + i as f64);
            for off in 1..=3 {
                if i >= off {
                    a.add(i, i - off, 1.0 / (off as f64 + i as f64));
                }
            }
        }
        let dense = nalgebra::DMatrix::from_fn(n, n, |i, j| a.get(i, j));
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let expected = dense.lu().solve(&nalgebra::DVector::from_vec(b.clone())).unwrap();
        let got = a.cholesky().unwrap().solve(&b);
        for i in 0..n {
            assert!((got[i] - expected[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn indefinite_is_rejected() {
        let mut a = spd_tridiagonal(3);
        a.set(1, 1, -1.0);
        assert!(matches!(
            a.cholesky(),
            Err(Error::NotPositiveDefinite { row: 1, .. })
        ));
    }

    #[test]
    fn restrict_keeps_band() {
        let a = spd_tridiagonal(5);
        let r = a.restrict(&[0, 2, 3]);
        assert_eq!(r.get(0, 0), 4.0);
        assert_eq!(r.get(1, 0), 0.0);
        assert_eq!(r.get(2, 1), -1.0);
    }
}
