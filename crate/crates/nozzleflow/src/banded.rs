//! Banded Gaussian elimination with partial pivoting.

use crate::error::{Error, Result};

/// Square matrix with `kl` sub- and `ku` super-diagonals.
///
/// Rows are stored in a window wide enough for the fill-in created by row
/// interchanges, so the same storage is reused for the factorization.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        Self { n, kl, ku, width, data: vec![0.0; n * width] }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    fn slot(&self, row: usize, col: usize) -> usize {
        debug_assert!(col + self.kl >= row && col <= row + self.ku + self.kl);
        row * self.width + (col + self.kl - row)
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        if col + self.kl < row || col > row + self.ku + self.kl {
            0.0
        } else {
            self.data[self.slot(row, col)]
        }
    }

    pub fn add(&mut self, row: usize, col: usize, v: f64) {
        assert!(col + self.kl >= row && col <= row + self.ku, "entry ({row}, {col}) outside the band");
        let s = self.slot(row, col);
        self.data[s] += v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| {
                let lo = r.saturating_sub(self.kl);
                let hi = (r + self.ku + self.kl).min(self.n - 1);
                (lo..=hi).map(|c| self.get(r, c) * x[c]).sum()
            })
            .collect()
    }

    pub fn row_norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|r| self.data[r * self.width..(r + 1) * self.width].iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Solves `A x = b`, consuming the matrix.
    pub fn solve(mut self, mut b: Vec<f64>) -> Result<Vec<f64>> {
        let n = self.n;
        let (kl, w) = (self.kl, self.width);
        let reach = self.ku + self.kl;
        let scale = self.row_norm_inf().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let last = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.get(k, k).abs();
            for r in k + 1..=last {
                let v = self.get(r, k).abs();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > 1e-300 * scale) || !best.is_finite() {
                return Err(Error::SingularSystem(k));
            }
            let cend = (k + reach).min(n - 1);
            if p != k {
                // Columns k..=cend cover every non-zero of both rows.
                for c in k..=cend {
                    let (sk, sp) = (k * w + (c + kl - k), p * w + (c + kl - p));
                    self.data.swap(sk, sp);
                }
                b.swap(k, p);
            }
            let piv = self.data[k * w + kl];
            for r in k + 1..=last {
                let sr = r * w + (k + kl - r);
                let f = self.data[sr] / piv;
                if f == 0.0 {
                    continue;
                }
                self.data[sr] = 0.0;
                let (kb, rb) = (k * w + kl - k, r * w + kl - r);
                for c in k + 1..=cend {
                    self.data[rb + c] -= f * self.data[kb + c];
                }
                b[r] -= f * b[k];
            }
        }
        let mut x = vec![0.0; n];
        for k in (0..n).rev() {
            let cend = (k + reach).min(n - 1);
            let kb = k * w + kl - k;
            let mut s = b[k];
            for c in k + 1..=cend {
                s -= self.data[kb + c] * x[c];
            }
            x[k] = s / self.data[kb + k];
        }
        Ok(x)
    }
}

/// Relative residual `|A x - b|_inf / (|A|_inf |x|_inf + |b|_inf)`.
pub fn relative_residual(a: &BandMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.mul_vec(x);
    let r = ax.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    let xn = x.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let bn = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let d = a.row_norm_inf() * xn + bn;
    if d == 0.0 {
        0.0
    } else {
        r / d
    }
}
