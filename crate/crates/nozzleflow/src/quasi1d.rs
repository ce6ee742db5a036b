//! Exact quasi-1D transonic flow.
//!
//! Along the nozzle the mass flux `J = a rho u` and the Bernoulli constant are
//! conserved, so the velocity solves `F(x, u; J) = 0` with
//! `F = u^2/2 + gamma J^(gamma-1) / ((gamma-1) a^(gamma-1)) u^(1-gamma) - B0`.
//! For a calibrated inflow `F` has a double root at the throat. The solver
//! works in the scaled excess `s = u/c* - 1`, where
//! `F/c*^2 = phi(s) + R(x) (1+s)^(1-gamma) / (gamma-1)` and
//! `R = (a0/a)^(gamma-1) - 1`; both pieces are evaluated without cancellation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::nozzle::{admissibility_residual, NozzleProfile, Side, ThroatClass, TOL_ZERO};
use crate::roots::newton_bisect;

/// Sonic window half-width as a fraction of `L1 - L0`.
pub const DELTA_SONIC_REL: f64 = 1e-3;
/// Largest admissibility residual accepted as calibrated.
pub const CALIBRATION_TOL: f64 = 1e-9;
const SERIES_RADIUS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    Subsonic,
    Supersonic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow1D {
    pub x1: Vec<f64>,
    pub a: Vec<f64>,
    pub u: Vec<f64>,
    pub rho: Vec<f64>,
    pub m2: Vec<f64>,
    pub j: f64,
    pub b0: f64,
    pub gamma: f64,
    /// Index of the throat node for transonic flows.
    pub sonic_index: Option<usize>,
    pub c_star: Option<f64>,
}

impl Flow1D {
    pub fn len(&self) -> usize {
        self.x1.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x1.is_empty()
    }

    pub fn pressure(&self) -> Vec<f64> {
        self.rho.iter().map(|r| r.powf(self.gamma)).collect()
    }

    /// Largest `|F(x, u; J)| / B0` over the grid.
    pub fn bernoulli_residual(&self) -> f64 {
        let g = self.gamma;
        (0..self.len())
            .map(|i| {
                let t = self.u[i];
                let k = g * self.j.powf(g - 1.0) / self.a[i].powf(g - 1.0);
                (0.5 * t * t + k / (g - 1.0) * t.powf(1.0 - g) - self.b0).abs() / self.b0
            })
            .fold(0.0, f64::max)
    }

    /// Largest relative deviation of `a rho u` from `J`.
    pub fn mass_flux_error(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.a[i] * self.rho[i] * self.u[i] - self.j).abs() / self.j)
            .fold(0.0, f64::max)
    }

    /// Linear interpolation of `(u, rho)` at `x`.
    pub fn state_at(&self, x: f64) -> (f64, f64) {
        let i = match self.x1.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => return (self.u[i], self.rho[i]),
            Err(i) => i.clamp(1, self.len() - 1),
        };
        let w = (x - self.x1[i - 1]) / (self.x1[i] - self.x1[i - 1]);
        (
            self.u[i - 1] + w * (self.u[i] - self.u[i - 1]),
            self.rho[i - 1] + w * (self.rho[i] - self.rho[i - 1]),
        )
    }
}

/// Uniform grid of `n` points on `[l0, l1]` with `x = 0` as an exact node.
pub fn throat_grid(l0: f64, l1: f64, n: usize) -> Vec<f64> {
    let h = (l1 - l0) / (n - 1) as f64;
    let mut x: Vec<f64> = (0..n).map(|i| l0 + h * i as f64).collect();
    x[n - 1] = l1;
    let (k, d) = x
        .iter()
        .enumerate()
        .map(|(k, v)| (k, v.abs()))
        .min_by(|p, q| p.1.partial_cmp(&q.1).unwrap())
        .unwrap();
    if d <= 1e-9 * h {
        x[k] = 0.0;
    } else {
        let pos = x.partition_point(|v| *v < 0.0);
        x.insert(pos, 0.0);
    }
    x
}

/// Minimizer of `t -> F(x, t; J)`.
pub fn t_star(profile: &NozzleProfile, gas: &GasModel, j: f64, x1: f64) -> f64 {
    let g = gas.gamma();
    (g * j.powf(g - 1.0) / profile.a(x1).powf(g - 1.0)).powf(1.0 / (g + 1.0))
}

/// `F(x, t; J)`.
pub fn bernoulli_residual(profile: &NozzleProfile, gas: &GasModel, j: f64, b0: f64, x1: f64, t: f64) -> f64 {
    let g = gas.gamma();
    let k = g * j.powf(g - 1.0) / profile.a(x1).powf(g - 1.0);
    0.5 * t * t + k / (g - 1.0) * t.powf(1.0 - g) - b0
}

/// Root of `F(x, .; J)` on the requested branch for an arbitrary Bernoulli constant.
pub fn branch_solve(
    profile: &NozzleProfile,
    gas: &GasModel,
    j: f64,
    b0: f64,
    x1: f64,
    branch: Branch,
) -> Result<f64> {
    let g = gas.gamma();
    if !(j > 0.0) {
        return Err(Error::Domain(format!("mass flux must be positive, got {j}")));
    }
    let k = g * j.powf(g - 1.0) / profile.a(x1).powf(g - 1.0);
    let ts = k.powf(1.0 / (g + 1.0));
    let f = |t: f64| (0.5 * t * t + k / (g - 1.0) * t.powf(1.0 - g) - b0, t - k * t.powf(-g));
    let fmin = f(ts).0;
    let tol = 1e-13 * b0;
    if fmin > tol {
        return Err(Error::NoRoot { x1, residual: fmin });
    }
    if fmin >= -tol {
        return Ok(ts);
    }
    match branch {
        Branch::Subsonic => {
            let mut lo = 0.5 * ts;
            while f(lo).0 <= 0.0 {
                lo *= 0.5;
            }
            Ok(newton_bisect(f, lo, ts, 0.5 * (lo + ts)))
        }
        Branch::Supersonic => {
            let hi = (2.0 * b0).sqrt();
            Ok(newton_bisect(f, ts, hi, 0.5 * (ts + hi)))
        }
    }
}

fn pow1p(s: f64, e: f64) -> f64 {
    (e * s.ln_1p()).exp()
}

/// Cancellation-free pieces of the scaled Bernoulli residual for one gas.
#[derive(Debug, Clone)]
struct Scaled {
    gamma: f64,
    series: Vec<f64>,
}

impl Scaled {
    fn new(gamma: f64) -> Self {
        // phi(s) = sum_{k>=2} e_k s^k; series[k] = e_k.
        let mut series = vec![0.0; 64];
        let mut binom = 1.0;
        for (k, e) in series.iter_mut().enumerate().skip(1) {
            binom *= (1.0 - gamma - (k as f64 - 1.0)) / k as f64;
            *e = binom / (gamma - 1.0);
        }
        series[0] = 0.0;
        series[1] = 0.0;
        series[2] = 0.5 * (gamma + 1.0);
        Self { gamma, series }
    }

    /// `phi(s) - (gamma+1) s^2 / 2`.
    fn phi3(&self, s: f64) -> f64 {
        if s.abs() <= SERIES_RADIUS {
            let mut acc = 0.0;
            let mut p = s * s * s;
            for k in 3..self.series.len() {
                let term = self.series[k] * p;
                acc += term;
                if term.abs() <= 1e-18 * acc.abs() {
                    break;
                }
                p *= s;
            }
            acc
        } else {
            self.phi(s) - self.series[2] * s * s
        }
    }

    fn phi(&self, s: f64) -> f64 {
        if s.abs() <= SERIES_RADIUS {
            self.series[2] * s * s + self.phi3(s)
        } else {
            let g = self.gamma;
            s + 0.5 * s * s + (-(g - 1.0) * s.ln_1p()).exp_m1() / (g - 1.0)
        }
    }

    /// Scaled residual and its derivative in `s`.
    fn residual(&self, r: f64, s: f64) -> (f64, f64) {
        let g = self.gamma;
        let v = self.phi(s) + r * pow1p(s, 1.0 - g) / (g - 1.0);
        let d = s - (-g * s.ln_1p()).exp_m1() - r * pow1p(s, -g);
        (v, d)
    }
}

/// Transonic solution machinery for a calibrated nozzle.
#[derive(Debug, Clone)]
pub struct TransonicSolver<'a> {
    profile: &'a NozzleProfile,
    gas: GasModel,
    scaled: Scaled,
    pub j: f64,
    pub b0: f64,
    pub c_star: f64,
    pub class: ThroatClass,
    pub delta_sonic: f64,
}

impl<'a> TransonicSolver<'a> {
    /// Requires the inflow to put the sonic point at the throat.
    pub fn new(profile: &'a NozzleProfile, gas: &GasModel, rho0: f64, u0: f64, delta_sonic: f64) -> Result<Self> {
        let res = admissibility_residual(profile, gas, rho0, u0)?;
        if !(res.abs() <= CALIBRATION_TOL) {
            return Err(Error::NotCalibrated(res));
        }
        let class = profile.classify_throat(TOL_ZERO)?;
        let g = gas.gamma();
        let j = profile.a(profile.l0()) * rho0 * u0;
        // The Bernoulli constant is pinned to the double-root value for this J.
        let c_star = t_star(profile, gas, j, 0.0);
        let b0 = (g + 1.0) * c_star * c_star / (2.0 * (g - 1.0));
        Ok(Self { profile, gas: *gas, scaled: Scaled::new(g), j, b0, c_star, class, delta_sonic })
    }

    fn r(&self, x: f64) -> f64 {
        let g = self.gas.gamma();
        (-(g - 1.0) * (self.profile.delta_from_throat(x) / self.profile.a0()).ln_1p()).exp_m1()
    }

    /// Scaled excess `s = u/c* - 1` from the bracketed root of the branch equation.
    pub fn s_branch(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        let g = self.gas.gamma();
        let r = self.r(x);
        let s_min = (r.ln_1p() / (g + 1.0)).exp_m1();
        let f = |s: f64| self.scaled.residual(r, s);
        let guess = (-2.0 * r / ((g + 1.0) * (g - 1.0))).max(0.0).sqrt();
        if x < 0.0 {
            let mut lo = -0.5;
            while lo < s_min && f(lo).0 <= 0.0 {
                lo = -1.0 + 0.5 * (1.0 + lo);
            }
            newton_bisect(f, lo.min(s_min), s_min, (-guess).max(lo))
        } else {
            let hi = ((g + 1.0) / (g - 1.0)).sqrt() - 1.0;
            newton_bisect(f, s_min, hi, guess.min(hi))
        }
    }

    /// Scaled excess from the desingularized fixed point `s = sign(x) |x|^p z`.
    pub fn s_window(&self, x: f64) -> Result<f64> {
        if x == 0.0 {
            return Ok(0.0);
        }
        let g = self.gas.gamma();
        let p = self.class.exponent();
        let w = x.abs().powf(p);
        let w2 = w * w;
        let sign = x.signum();
        let q = -self.r(x) / ((g - 1.0) * w2);
        let map = |z: f64| {
            let s = sign * w * z;
            let rhs = 2.0 / (g + 1.0) * (q * pow1p(s, 1.0 - g) - self.scaled.phi3(s) / w2);
            rhs.max(0.0).sqrt()
        };
        let mut z = (2.0 * q / (g + 1.0)).sqrt();
        let mut theta = 1.0;
        let mut last = f64::INFINITY;
        for _ in 0..100 {
            let next = (1.0 - theta) * z + theta * map(z);
            let step = (next - z).abs();
            if !next.is_finite() {
                break;
            }
            z = next;
            if step <= 4.0 * f64::EPSILON * z {
                return Ok(sign * w * z);
            }
            if step > last {
                theta *= 0.5;
            }
            last = step;
        }
        Err(Error::SonicWindowDivergence(x))
    }

    pub fn s_at(&self, x: f64) -> Result<f64> {
        if x.abs() < self.delta_sonic {
            self.s_window(x)
        } else {
            Ok(self.s_branch(x))
        }
    }

    pub fn velocity(&self, x: f64) -> Result<f64> {
        Ok(self.c_star * (1.0 + self.s_at(x)?))
    }

    pub fn solve_on_grid(&self, grid: &[f64]) -> Result<Flow1D> {
        let g = self.gas.gamma();
        let mut u = Vec::with_capacity(grid.len());
        for &x in grid {
            u.push(self.velocity(x)?);
        }
        let a: Vec<f64> = grid.iter().map(|&x| self.profile.a(x)).collect();
        let rho: Vec<f64> = (0..grid.len()).map(|i| self.j / (a[i] * u[i])).collect();
        let m2 = (0..grid.len()).map(|i| u[i] * u[i] / (g * rho[i].powf(g - 1.0))).collect();
        Ok(Flow1D {
            x1: grid.to_vec(),
            a,
            u,
            rho,
            m2,
            j: self.j,
            b0: self.b0,
            gamma: g,
            sonic_index: grid.iter().position(|&x| x == 0.0),
            c_star: Some(self.c_star),
        })
    }
}

/// Transonic flow on a uniform grid of `n_points` nodes plus the throat.
pub fn solve_transonic(profile: &NozzleProfile, gas: &GasModel, rho0: f64, u0: f64, n_points: usize) -> Result<Flow1D> {
    solve_transonic_with(profile, gas, rho0, u0, n_points, DELTA_SONIC_REL * profile.length())
}

pub fn solve_transonic_with(
    profile: &NozzleProfile,
    gas: &GasModel,
    rho0: f64,
    u0: f64,
    n_points: usize,
    delta_sonic: f64,
) -> Result<Flow1D> {
    if n_points < 3 {
        return Err(Error::Domain(format!("need at least 3 grid points, got {n_points}")));
    }
    let solver = TransonicSolver::new(profile, gas, rho0, u0, delta_sonic)?;
    solver.solve_on_grid(&throat_grid(profile.l0(), profile.l1(), n_points))
}

/// Subsonic flow from entrance data `(rho_in, u_in)` at `x_in` over `grid`.
pub fn solve_subsonic_on_grid(
    profile: &NozzleProfile,
    gas: &GasModel,
    rho_in: f64,
    u_in: f64,
    x_in: f64,
    grid: &[f64],
) -> Result<Flow1D> {
    let g = gas.gamma();
    let j = profile.a(x_in) * rho_in * u_in;
    let b0 = gas.bernoulli(rho_in, u_in * u_in)?;
    let mut u = Vec::with_capacity(grid.len());
    for &x in grid {
        u.push(if x == x_in || profile.a(x) == profile.a(x_in) { u_in } else { branch_solve(profile, gas, j, b0, x, Branch::Subsonic)? });
    }
    let a: Vec<f64> = grid.iter().map(|&x| profile.a(x)).collect();
    let rho: Vec<f64> = (0..grid.len()).map(|i| j / (a[i] * u[i])).collect();
    let m2 = (0..grid.len()).map(|i| u[i] * u[i] / (g * rho[i].powf(g - 1.0))).collect();
    Ok(Flow1D { x1: grid.to_vec(), a, u, rho, m2, j, b0, gamma: g, sonic_index: None, c_star: None })
}

/// `u'(0) = c* sqrt(a''(0) / ((gamma+1) a(0)))` for positive-acceleration throats.
pub fn sonic_acceleration(profile: &NozzleProfile, gas: &GasModel, b0: f64) -> Result<f64> {
    let class = profile.classify_throat(TOL_ZERO)?;
    if class != ThroatClass::PositiveAcceleration {
        return Err(Error::WrongThroatClass { expected: "PositiveAcceleration".into(), found: class.label() });
    }
    let cs = gas.critical_speed(b0)?;
    let g = gas.gamma();
    Ok(cs * (profile.throat_deriv(2, Side::Right) / ((g + 1.0) * profile.a0())).sqrt())
}

/// Leading behaviour of `u - c*` at a degenerate throat.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingCoefficient {
    /// Derivative order for smooth cases; `None` for corners.
    pub order: Option<usize>,
    /// `u^(order)(0-)`, or the coefficient of `|x|^(m+1/2)` on the left for corners.
    pub left: f64,
    pub right: f64,
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |p, k| p * k as f64)
}

/// Leading coefficient for zero-acceleration and corner throats.
pub fn zero_accel_leading_coeff(
    profile: &NozzleProfile,
    gas: &GasModel,
    b0: f64,
    class: ThroatClass,
) -> Result<LeadingCoefficient> {
    let found = profile.classify_throat(TOL_ZERO)?;
    if found != class || class == ThroatClass::PositiveAcceleration {
        return Err(Error::WrongThroatClass { expected: class.label(), found: found.label() });
    }
    let g = gas.gamma();
    let cs2 = gas.critical_speed(b0)?.powi(2);
    let a0 = profile.a0();
    let k = class.leading_order();
    let side = |s: Side| (2.0 * cs2 * profile.throat_deriv(k, s).abs() / ((g + 1.0) * factorial(k) * a0)).sqrt();
    Ok(match class {
        ThroatClass::ZeroAccelCase1(m) => {
            let o = 2 * m as usize + 1;
            let v = factorial(o) * side(Side::Right);
            LeadingCoefficient { order: Some(o), left: v, right: v }
        }
        ThroatClass::ZeroAccelCase2(m) => {
            let o = 2 * m as usize;
            LeadingCoefficient { order: Some(o), left: -factorial(o) * side(Side::Left), right: factorial(o) * side(Side::Right) }
        }
        ThroatClass::Corner(_) => LeadingCoefficient { order: None, left: -side(Side::Left), right: side(Side::Right) },
        ThroatClass::PositiveAcceleration => unreachable!(),
    })
}

/// Largest deviations of the grid solution from the three ODE forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeResiduals {
    pub u: f64,
    pub rho: f64,
    pub m2: f64,
    pub nodes: usize,
}

/// Checks `u'`, `rho'` and `(M^2)'` against their ODEs with 4th-order differences.
pub fn ode_rhs_diagnostics(flow: &Flow1D, profile: &NozzleProfile, delta_sonic: f64) -> OdeResiduals {
    let g = flow.gamma;
    let x = &flow.x1;
    let mut out = OdeResiduals { u: 0.0, rho: 0.0, m2: 0.0, nodes: 0 };
    for i in 2..x.len().saturating_sub(2) {
        if x[i].abs() < delta_sonic {
            continue;
        }
        let h = x[i + 1] - x[i];
        let uniform = (-2..2).all(|k: i64| {
            let k0 = (i as i64 + k) as usize;
            ((x[k0 + 1] - x[k0]) - h).abs() <= 1e-9 * h
        });
        if !uniform {
            continue;
        }
        let d = |f: &[f64]| (8.0 * (f[i + 1] - f[i - 1]) - (f[i + 2] - f[i - 2])) / (12.0 * h);
        let b = profile.b(x[i]);
        let (u, rho, m2) = (flow.u[i], flow.rho[i], flow.m2[i]);
        let k = g * flow.j.powf(g - 1.0);
        let du = k * u * b / (flow.a[i].powf(g - 1.0) * u.powf(g + 1.0) - k);
        let drho = rho * m2 * b / (1.0 - m2);
        let dm2 = -m2 * (2.0 + (g - 1.0) * m2) * b / (1.0 - m2);
        out.u = out.u.max((d(&flow.u) - du).abs());
        out.rho = out.rho.max((d(&flow.rho) - drho).abs());
        out.m2 = out.m2.max((d(&flow.m2) - dm2).abs());
        out.nodes += 1;
    }
    out
}

/// Least-squares slope of `ln|u - c*|` against `ln|x|` on one side of the throat.
pub fn fit_degeneracy_exponent(flow: &Flow1D, side: Side, window: [f64; 2]) -> Result<f64> {
    let cs = flow.c_star.ok_or_else(|| Error::Domain("flow has no sonic point".into()))?;
    let pts: Vec<(f64, f64)> = flow
        .x1
        .iter()
        .zip(&flow.u)
        .filter(|(x, _)| match side {
            Side::Left => **x < 0.0,
            Side::Right => **x > 0.0,
        })
        .filter(|(x, _)| x.abs() >= window[0] * (1.0 - 1e-12) && x.abs() <= window[1] * (1.0 + 1e-12))
        .map(|(x, u)| (x.abs().ln(), (u - cs).abs().ln()))
        .filter(|(_, y)| y.is_finite())
        .collect();
    if pts.len() < 8 {
        return Err(Error::InsufficientPoints { found: pts.len(), needed: 8 });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nozzle::calibrate_inflow;

    fn gas2() -> GasModel {
        GasModel::new(2.0).unwrap()
    }

    fn quad() -> NozzleProfile {
        NozzleProfile::polynomial(-1.0, 1.0, vec![1.0, 0.0, 1.0]).unwrap()
    }

    fn calibrated(p: &NozzleProfile, n: usize) -> Flow1D {
        let g = gas2();
        let u0 = calibrate_inflow(p, &g, 1.0).unwrap();
        solve_transonic(p, &g, 1.0, u0, n).unwrap()
    }

    #[test]
    fn t_star_values() {
        let g = gas2();
        let flat = NozzleProfile::unchecked(-1.0, 1.0, vec![1.0], vec![1.0]).unwrap();
        assert!((t_star(&flat, &g, 1.0, 0.3) - 2f64.powf(1.0 / 3.0)).abs() < 1e-15);
        // Minimizer located by bisection on the sign of dF/dt, an oracle independent of the closed form.
        let df = |t: f64| {
            let e = 1e-6 * t;
            bernoulli_residual(&flat, &g, 1.0, 2.5, 0.0, t + e) - bernoulli_residual(&flat, &g, 1.0, 2.5, 0.0, t - e)
        };
        let m = crate::roots::bisect(df, 0.1, 3.0, 1e-14);
        assert!((m - t_star(&flat, &g, 1.0, 0.0)).abs() < 1e-10);
    }

    #[test]
    fn branch_roots() {
        let g = gas2();
        let flat = NozzleProfile::unchecked(-1.0, 1.0, vec![1.0], vec![1.0]).unwrap();
        // J = 1: t^3 - 5t + 4 = (t - 1)(t^2 + t - 4).
        let sup = branch_solve(&flat, &g, 1.0, 2.5, 0.0, Branch::Supersonic).unwrap();
        assert!((sup - (17f64.sqrt() - 1.0) / 2.0).abs() < 1e-14);
        let sub = branch_solve(&flat, &g, 1.0, 2.5, 0.0, Branch::Subsonic).unwrap();
        assert!((sub - 1.0).abs() < 1e-14);
        // J = 1/2: t^3 - 5t + 2 = (t - 2)(t^2 + 2t - 1).
        let sup = branch_solve(&flat, &g, 0.5, 2.5, 0.0, Branch::Supersonic).unwrap();
        assert!((sup - 2.0).abs() < 1e-14);
        let sub = branch_solve(&flat, &g, 0.5, 2.5, 0.0, Branch::Subsonic).unwrap();
        let oracle = crate::roots::bisect(|t| 0.5 * t * t + 1.0 / t - 2.5, 0.1, 1.0, 1e-15);
        assert!((sub - oracle).abs() < 1e-13 && (sub - (2f64.sqrt() - 1.0)).abs() < 1e-14);
        assert!(bernoulli_residual(&flat, &g, 0.5, 2.5, 0.0, sub).abs() <= 1e-13 * 2.5);
        assert!(matches!(branch_solve(&flat, &g, 1.0, 1.0, 0.0, Branch::Subsonic), Err(Error::NoRoot { .. })));
    }

    #[test]
    fn straight_duct_is_constant_and_not_transonic() {
        let g = gas2();
        let flat = NozzleProfile::unchecked(-1.0, 1.0, vec![1.0], vec![1.0]).unwrap();
        let b0 = g.bernoulli(1.0, 0.49).unwrap();
        for x in [-1.0, -0.3, 0.0, 0.8] {
            let u = branch_solve(&flat, &g, 0.7, b0, x, Branch::Subsonic).unwrap();
            assert!((u - 0.7).abs() < 1e-14);
        }
        assert!(matches!(solve_transonic(&flat, &g, 1.0, 0.7, 101), Err(Error::NotCalibrated(_))));
        let flow = solve_subsonic_on_grid(&flat, &g, 1.0, 0.7, -1.0, &throat_grid(-1.0, 1.0, 41)).unwrap();
        let r = ode_rhs_diagnostics(&flow, &flat, 0.0);
        assert_eq!((r.u, r.rho, r.m2), (0.0, 0.0, 0.0));
    }

    #[test]
    fn throat_value_is_critical_speed() {
        let p = quad();
        let g = gas2();
        let u0 = calibrate_inflow(&p, &g, 1.0).unwrap();
        let s = TransonicSolver::new(&p, &g, 1.0, u0, 2e-3).unwrap();
        assert!((s.c_star - g.critical_speed(s.b0).unwrap()).abs() < 1e-15);
        let b0_user = g.bernoulli(1.0, u0 * u0).unwrap();
        assert!((s.b0 - b0_user).abs() < 1e-10 * b0_user);
        let sub = branch_solve(&p, &g, s.j, s.b0, 0.0, Branch::Subsonic).unwrap();
        let sup = branch_solve(&p, &g, s.j, s.b0, 0.0, Branch::Supersonic).unwrap();
        assert!((sub - s.c_star).abs() < 1e-7 && (sup - s.c_star).abs() < 1e-7);
    }

    #[test]
    fn flow_invariants() {
        for p in [
            quad(),
            NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 6, false).unwrap(),
            NozzleProfile::polynomial(-0.5, 2.0, vec![2.0, 0.0, 0.3, 0.1]).unwrap(),
        ] {
            let f = calibrated(&p, 2001);
            assert!(f.bernoulli_residual() <= 1e-11, "{}", f.bernoulli_residual());
            assert!(f.mass_flux_error() <= 1e-12);
            let k = f.sonic_index.unwrap();
            assert_eq!(f.x1[k], 0.0);
            for i in 1..f.len() {
                assert!(f.u[i] > f.u[i - 1] && f.m2[i] > f.m2[i - 1]);
                if f.x1[i] < 0.0 {
                    assert!(f.m2[i] < 1.0);
                }
                if f.x1[i] > 0.0 {
                    assert!(f.m2[i] > 1.0);
                }
            }
        }
    }

    #[test]
    fn branch_ordering_and_window_continuity() {
        let g = gas2();
        for p in [
            quad(),
            NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 6, false).unwrap(),
            NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 4, false).unwrap(),
            NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 1, true).unwrap(),
        ] {
            let u0 = calibrate_inflow(&p, &g, 1.0).unwrap();
            let s = TransonicSolver::new(&p, &g, 1.0, u0, 2e-3).unwrap();
            for x in [-2e-3, 2e-3] {
                let a = s.s_branch(x);
                let b = s.s_window(x).unwrap();
                assert!((a - b).abs() * s.c_star <= 1e-9, "{:?} {x}: {a} {b}", s.class);
            }
            for x in [-0.7, -0.1, 0.05, 0.9] {
                let ts = t_star(&p, &g, s.j, x);
                let sub = branch_solve(&p, &g, s.j, s.b0, x, Branch::Subsonic).unwrap();
                let sup = branch_solve(&p, &g, s.j, s.b0, x, Branch::Supersonic).unwrap();
                assert!(sub < ts && ts < sup);
            }
        }
    }

    #[test]
    fn sonic_acceleration_values() {
        let g = gas2();
        let mu = sonic_acceleration(&quad(), &g, 1.5).unwrap();
        assert!((mu - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let scaled = quad().scaled(3.7).unwrap();
        assert!((sonic_acceleration(&scaled, &g, 1.5).unwrap() - mu).abs() < 1e-15);
        let flat = NozzleProfile::polynomial(-1.0, 1.0, vec![1.0, 0.0, 1e-8]).unwrap();
        assert!(sonic_acceleration(&flat, &g, 1.5).unwrap() < 1e-4);
        let p6 = NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 6, false).unwrap();
        assert!(matches!(sonic_acceleration(&p6, &g, 1.5), Err(Error::WrongThroatClass { .. })));
    }

    #[test]
    fn sonic_derivative_matches_formula() {
        let p = quad();
        let g = gas2();
        let u0 = calibrate_inflow(&p, &g, 1.0).unwrap();
        let s = TransonicSolver::new(&p, &g, 1.0, u0, 2e-3).unwrap();
        let h = 1e-4;
        let d = |h: f64| (s.velocity(h).unwrap() - s.velocity(-h).unwrap()) / (2.0 * h);
        let rich = (4.0 * d(h) - d(2.0 * h)) / 3.0;
        let mu = sonic_acceleration(&p, &g, s.b0).unwrap();
        assert!((rich - mu).abs() <= 1e-6 * mu);
    }

    #[test]
    fn leading_coefficients() {
        let g = gas2();
        let p6 = NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 6, false).unwrap();
        let c = zero_accel_leading_coeff(&p6, &g, 1.5, ThroatClass::ZeroAccelCase1(1)).unwrap();
        assert_eq!(c.order, Some(3));
        assert!((c.right - 6.0 * (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        // Cross-check against the solution: u - c* ~ u'''(0) x^3 / 6.
        let u0 = calibrate_inflow(&p6, &g, 1.0).unwrap();
        let s = TransonicSolver::new(&p6, &g, 1.0, u0, 2e-3).unwrap();
        let c = zero_accel_leading_coeff(&p6, &g, s.b0, ThroatClass::ZeroAccelCase1(1)).unwrap();
        let x = 1e-4;
        let fitted = 6.0 * (s.velocity(x).unwrap() - s.c_star) / x.powi(3);
        assert!((fitted - c.right).abs() < 1e-3 * c.right);
        let p4 = NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 4, false).unwrap();
        let c4 = zero_accel_leading_coeff(&p4, &g, 1.5, ThroatClass::ZeroAccelCase2(1)).unwrap();
        assert!(c4.left < 0.0 && c4.right > 0.0 && (c4.left + c4.right).abs() < 1e-15);
        let pc = NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 1, true).unwrap();
        let cc = zero_accel_leading_coeff(&pc, &g, 1.5, ThroatClass::Corner(0)).unwrap();
        assert!((cc.right - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!(zero_accel_leading_coeff(&quad(), &g, 1.5, ThroatClass::ZeroAccelCase1(1)).is_err());
    }

    #[test]
    fn ode_residuals_converge() {
        let p = quad();
        let runs: Vec<OdeResiduals> =
            [251, 501, 1001].iter().map(|&n| ode_rhs_diagnostics(&calibrated(&p, n), &p, 2e-3)).collect();
        for w in runs.windows(2) {
            for (c, f) in [(w[0].u, w[1].u), (w[0].rho, w[1].rho), (w[0].m2, w[1].m2)] {
                assert!((c / f).log2() >= 1.9, "{c} {f}");
            }
        }
        let coarse = calibrated(&p, 2001);
        let r = ode_rhs_diagnostics(&coarse, &p, 2e-3);
        let h = 2.0 / 2000.0;
        assert!(r.u.max(r.rho).max(r.m2) <= 1e3 * h * h);
        for i in 0..coarse.len() {
            let x = coarse.x1[i];
            if x != 0.0 {
                let du_sign = -coarse.u[i] * p.b(x) / (1.0 - coarse.m2[i]);
                assert!(du_sign > 0.0);
            }
        }
    }

    #[test]
    fn exponents() {
        let cases = [
            (quad(), 1.0),
            (NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 6, false).unwrap(), 3.0),
            (NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 4, false).unwrap(), 2.0),
            (NozzleProfile::throat_power(-1.0, 1.0, 1.0, 1.0, 1, true).unwrap(), 0.5),
        ];
        for (p, e) in cases {
            let f = calibrated(&p, 2001);
            for side in [Side::Left, Side::Right] {
                let k = fit_degeneracy_exponent(&f, side, [1e-3, 1e-1]).unwrap();
                assert!((k - e).abs() <= 0.05, "{e}: {k}");
            }
        }
        let f = calibrated(&quad(), 21);
        assert!(matches!(fit_degeneracy_exponent(&f, Side::Left, [1e-3, 1e-1]), Err(Error::InsufficientPoints { .. })));
    }
}
