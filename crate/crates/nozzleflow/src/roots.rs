//! Bracketed scalar root finding.

/// Safeguarded Newton iteration inside a sign-changing bracket.
///
/// `f` returns `(value, derivative)`. The bracket `[lo, hi]` must satisfy
/// `f(lo) * f(hi) <= 0`. Falls back to bisection whenever the Newton step
/// leaves the bracket or stalls.
pub fn newton_bisect(f: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64, x0: f64) -> f64 {
    let lo_positive = f(lo).0 > 0.0;
    let mut x = if x0 > lo && x0 < hi { x0 } else { 0.5 * (lo + hi) };
    let mut last_width = hi - lo;
    for _ in 0..400 {
        let (fx, dfx) = f(x);
        if fx == 0.0 {
            return x;
        }
        if (fx > 0.0) == lo_positive {
            lo = x;
        } else {
            hi = x;
        }
        let newton = x - fx / dfx;
        let width = hi - lo;
        let next = if newton.is_finite() && newton > lo && newton < hi && width < 0.75 * last_width + f64::MIN_POSITIVE {
            newton
        } else if newton.is_finite() && newton > lo && newton < hi && (newton - x).abs() < 0.25 * width {
            newton
        } else {
            0.5 * (lo + hi)
        };
        last_width = width;
        if (next - x).abs() <= 2.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) || width <= 2.0 * f64::EPSILON * x.abs() {
            return next;
        }
        x = next;
    }
    x
}

/// Plain bisection on a sign change; returns the midpoint of the final bracket.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, width: f64) -> f64 {
    let lo_positive = f(lo) > 0.0;
    while hi - lo > width {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_simple_roots() {
        let r = newton_bisect(|x| (x * x - 2.0, 2.0 * x), 0.0, 2.0, 1.0);
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
        let r = newton_bisect(|x| (x.exp() - 3.0, x.exp()), -10.0, 10.0, 9.0);
        assert!((r - 3f64.ln()).abs() < 1e-15);
        let r = bisect(|x| x.cos(), 0.0, 3.0, 1e-14);
        assert!((r - std::f64::consts::FRAC_PI_2).abs() < 1e-13);
    }

    #[test]
    fn survives_flat_derivative() {
        let r = newton_bisect(|x| (x.powi(3), 3.0 * x * x), -1.0, 2.0, 0.0);
        assert!(r.abs() < 1e-5);
    }
}
