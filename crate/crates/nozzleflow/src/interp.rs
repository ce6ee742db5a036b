//! Monotone piecewise-cubic Hermite interpolation.

use crate::error::{Error, Result};

/// Fritsch–Carlson interpolant through strictly increasing knots.
#[derive(Debug, Clone, PartialEq)]
pub struct Pchip {
    x: Vec<f64>,
    y: Vec<f64>,
    d: Vec<f64>,
}

impl Pchip {
    pub fn new(x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if n < 2 || y.len() != n {
            return Err(Error::Domain(format!("interpolant needs matching knots, got {} and {}", n, y.len())));
        }
        if x.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("interpolation knots must be strictly increasing".into()));
        }
        let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
        let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
        let mut d = vec![0.0; n];
        if n == 2 {
            d.fill(delta[0]);
            return Ok(Self { x, y, d });
        }
        for k in 1..n - 1 {
            if delta[k - 1] * delta[k] > 0.0 {
                let w1 = 2.0 * h[k] + h[k - 1];
                let w2 = h[k] + 2.0 * h[k - 1];
                d[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
            }
        }
        d[0] = end_slope(h[0], h[1], delta[0], delta[1]);
        d[n - 1] = end_slope(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
        Ok(Self { x, y, d })
    }

    pub fn knots(&self) -> (&[f64], &[f64]) {
        (&self.x, &self.y)
    }

    /// Value at `t`, clamped to the knot range.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.x.len();
        let t = t.clamp(self.x[0], self.x[n - 1]);
        let k = (self.x.partition_point(|v| *v <= t).max(1) - 1).min(n - 2);
        let h = self.x[k + 1] - self.x[k];
        let s = (t - self.x[k]) / h;
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        h00 * self.y[k] + h10 * h * self.d[k] + h01 * self.y[k + 1] + h11 * h * self.d[k + 1]
    }
}

/// Three-point end slope, limited to keep the end interval monotone.
fn end_slope(h0: f64, h1: f64, del0: f64, del1: f64) -> f64 {
    let d = ((2.0 * h0 + h1) * del0 - h0 * del1) / (h0 + h1);
    if d * del0 <= 0.0 {
        0.0
    } else if del0 * del1 < 0.0 && d.abs() > 3.0 * del0.abs() {
        3.0 * del0
    } else {
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reproduces_knots_and_lines() {
        let x = vec![0.0, 0.3, 1.0, 1.1, 2.0];
        let p = Pchip::new(x.clone(), x.iter().map(|v| 2.0 * v - 1.0).collect()).unwrap();
        for t in [0.0, 0.1, 0.3, 0.77, 1.05, 2.0] {
            assert!((p.eval(t) - (2.0 * t - 1.0)).abs() < 1e-14);
        }
        assert_eq!(p.eval(-1.0), -1.0);
        assert_eq!(p.eval(5.0), 3.0);
    }

    #[test]
    fn rejects_unordered_knots() {
        assert!(Pchip::new(vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 2.0]).is_err());
        assert!(Pchip::new(vec![0.0], vec![0.0]).is_err());
    }

    #[test]
    fn smooth_data_converges_at_third_order_or_better() {
        let err = |n: usize| {
            let x: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
            let p = Pchip::new(x.clone(), x.iter().map(|v| v.exp()).collect()).unwrap();
            (0..1000).map(|k| (k as f64 + 0.5) / 1000.0).map(|t| (p.eval(t) - t.exp()).abs()).fold(0.0, f64::max)
        };
        let order = (err(40) / err(80)).log2();
        assert!(order > 2.8, "{order}");
    }

    proptest! {
        #[test]
        fn monotone_data_gives_monotone_interpolant(steps in prop::collection::vec((0.01f64..1.0, 0.0f64..1.0), 3..12)) {
            let mut x = vec![0.0];
            let mut y = vec![0.0];
            for (dx, dy) in &steps {
                x.push(x.last().unwrap() + dx);
                y.push(y.last().unwrap() + dy);
            }
            let p = Pchip::new(x.clone(), y).unwrap();
            let end = *x.last().unwrap();
            let mut prev = p.eval(0.0);
            for k in 1..=500 {
                let v = p.eval(end * k as f64 / 500.0);
                prop_assert!(v >= prev - 1e-14);
                prev = v;
            }
        }
    }
}
