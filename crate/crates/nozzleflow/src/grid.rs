//! Uniform x1 grids and finite-difference helpers.

use crate::error::{Error, Result};

/// Uniform grid on `[l0, l1]` whose nodes include `x1 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub x: Vec<f64>,
    pub h: f64,
    pub throat: usize,
}

impl Grid {
    pub fn new(l0: f64, l1: f64, n: usize) -> Result<Self> {
        if n < 5 {
            return Err(Error::Domain(format!("grid needs at least 5 nodes, got {n}")));
        }
        let h = (l1 - l0) / (n - 1) as f64;
        let k = (-l0 / h).round();
        if ((-l0 / h) - k).abs() > 1e-9 || k < 1.0 || k as usize >= n - 1 {
            return Err(Error::Domain(format!("throat x1 = 0 is not a node of the {n}-point grid on [{l0}, {l1}]")));
        }
        let throat = k as usize;
        let x = (0..n).map(|i| if i == throat { 0.0 } else { l0 + h * i as f64 }).collect();
        Ok(Self { x, h, throat })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Trapezoid weights.
    pub fn weights(&self) -> Vec<f64> {
        let n = self.len();
        (0..n).map(|i| if i == 0 || i == n - 1 { 0.5 * self.h } else { self.h }).collect()
    }

    pub fn trapezoid(&self, f: &[f64]) -> f64 {
        let n = f.len();
        self.h * (f[1..n - 1].iter().sum::<f64>() + 0.5 * (f[0] + f[n - 1]))
    }
}

/// Second-order first derivative; one-sided at the ends.
pub fn d1(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * h);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * h);
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    out
}

/// Second-order second derivative; one-sided at the ends.
pub fn d2(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let h2 = h * h;
    let mut out = vec![0.0; n];
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / h2;
    out[n - 1] = (2.0 * f[n - 1] - 5.0 * f[n - 2] + 4.0 * f[n - 3] - f[n - 4]) / h2;
    for i in 1..n - 1 {
        out[i] = (f[i + 1] - 2.0 * f[i] + f[i - 1]) / h2;
    }
    out
}

/// Running integral from the first node with fourth-order accuracy.
pub fn cumulative_simpson(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n < 4 {
        for i in 1..n {
            out[i] = out[i - 1] + 0.5 * h * (f[i - 1] + f[i]);
        }
        return out;
    }
    for i in 1..n {
        out[i] = if i % 2 == 0 {
            out[i - 2] + h / 3.0 * (f[i - 2] + 4.0 * f[i - 1] + f[i])
        } else if i == 1 {
            h / 24.0 * (9.0 * f[0] + 19.0 * f[1] - 5.0 * f[2] + f[3])
        } else {
            out[i - 3] + 3.0 * h / 8.0 * (f[i - 3] + 3.0 * f[i - 2] + 3.0 * f[i - 1] + f[i])
        };
    }
    out
}
