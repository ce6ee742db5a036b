//! Transonic shocks matching a prescribed exit pressure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::nozzle::NozzleProfile;
use crate::quasi1d::{
    branch_solve, solve_subsonic_on_grid, throat_grid, Branch, Flow1D, TransonicSolver, DELTA_SONIC_REL,
};
use crate::roots::newton_bisect;

/// Width of the final shock-position bracket relative to `L1 - L0`.
pub const LS_TOL_REL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShockSolution {
    pub ls: f64,
    pub upstream: Flow1D,
    pub downstream: Flow1D,
    pub p_exit: f64,
    pub rho_minus: f64,
    pub u_minus: f64,
    pub rho_plus: f64,
    pub u_plus: f64,
}

impl ShockSolution {
    /// Relative residuals of the mass and momentum jump conditions.
    pub fn rh_residuals(&self, gas: &GasModel) -> (f64, f64) {
        let g = gas.gamma();
        let m = self.rho_minus * self.u_minus;
        let mom = |r: f64, u: f64| r * u * u + r.powf(g);
        let pm = mom(self.rho_minus, self.u_minus);
        (
            (self.rho_plus * self.u_plus - m).abs() / m,
            (mom(self.rho_plus, self.u_plus) - pm).abs() / pm,
        )
    }
}

/// Subsonic state behind a shock with supersonic upstream state `(rho_minus, u_minus)`.
pub fn rh_jump(gas: &GasModel, rho_minus: f64, u_minus: f64) -> Result<(f64, f64)> {
    let g = gas.gamma();
    let m2 = u_minus * u_minus / gas.sound_speed_sq(rho_minus)?;
    if m2 < 1.0 - 1e-12 {
        return Err(Error::NotSupersonic(m2));
    }
    let m = rho_minus * u_minus;
    let momentum = m * u_minus + rho_minus.powf(g);
    // g(rho) = m^2/rho + rho^gamma is convex with its minimum at the sonic density.
    let rho_s = (m * m / g).powf(1.0 / (g + 1.0)).max(rho_minus);
    let f = |r: f64| (m * m / r + r.powf(g) - momentum, -m * m / (r * r) + g * r.powf(g - 1.0));
    if f(rho_s).0 >= 0.0 {
        return Ok((rho_s, m / rho_s));
    }
    let mut hi = momentum.powf(1.0 / g).max(rho_s);
    while f(hi).0 <= 0.0 {
        hi *= 2.0;
    }
    let rho_plus = newton_bisect(f, rho_s, hi, hi);
    Ok((rho_plus, m / rho_plus))
}

/// Exit-pressure map of a calibrated nozzle: shock position to exit pressure.
#[derive(Debug, Clone)]
pub struct ShockMap<'a> {
    profile: &'a NozzleProfile,
    gas: GasModel,
    solver: TransonicSolver<'a>,
}

impl<'a> ShockMap<'a> {
    pub fn new(profile: &'a NozzleProfile, gas: &GasModel, rho0: f64, u0: f64) -> Result<Self> {
        let solver = TransonicSolver::new(profile, gas, rho0, u0, DELTA_SONIC_REL * profile.length())?;
        Ok(Self { profile, gas: *gas, solver })
    }

    pub fn ls_min(&self) -> f64 {
        self.solver.delta_sonic
    }

    /// Upstream and downstream states at a shock located at `ls`.
    pub fn jump_at(&self, ls: f64) -> Result<((f64, f64), (f64, f64))> {
        let u = self.solver.velocity(ls)?;
        let rho = self.solver.j / (self.profile.a(ls) * u);
        Ok(((rho, u), rh_jump(&self.gas, rho, u)?))
    }

    pub fn exit_pressure(&self, ls: f64) -> Result<f64> {
        let (_, (rho_p, u_p)) = self.jump_at(ls)?;
        let l1 = self.profile.l1();
        let u_exit = if ls >= l1 {
            u_p
        } else {
            let b_plus = self.gas.bernoulli(rho_p, u_p * u_p)?;
            branch_solve(self.profile, &self.gas, self.solver.j, b_plus, l1, Branch::Subsonic)?
        };
        self.gas.pressure(self.solver.j / (self.profile.a(l1) * u_exit))
    }

    pub fn pressure_range(&self) -> Result<(f64, f64)> {
        Ok((self.exit_pressure(self.profile.l1())?, self.exit_pressure(self.ls_min())?))
    }

    /// Shock position whose exit pressure equals `p_e`.
    pub fn locate(&self, p_e: f64) -> Result<f64> {
        let (p_min, p_max) = self.pressure_range()?;
        if !(p_e > p_min && p_e < p_max) {
            return Err(Error::ExitPressureOutOfRange { p_e, p_min, p_max });
        }
        let (mut lo, mut hi) = (self.ls_min(), self.profile.l1());
        let (mut p_lo, mut p_hi) = (p_max, p_min);
        let width = LS_TOL_REL * self.profile.length();
        while hi - lo > width {
            let mid = 0.5 * (lo + hi);
            let p = self.exit_pressure(mid)?;
            if !(p < p_lo && p > p_hi) {
                return Err(Error::NonMonotone(mid));
            }
            if p > p_e {
                lo = mid;
                p_lo = p;
            } else {
                hi = mid;
                p_hi = p;
            }
        }
        // Final linear interpolation inside the bracket.
        let t = ((p_lo - p_e) / (p_lo - p_hi)).clamp(0.0, 1.0);
        Ok(lo + t * (hi - lo))
    }

    /// Full solution with the shock at `ls`, sampled on `n_points` grid nodes.
    pub fn solution_at(&self, ls: f64, n_points: usize) -> Result<ShockSolution> {
        let grid = throat_grid(self.profile.l0(), self.profile.l1(), n_points);
        let mut up: Vec<f64> = grid.iter().copied().filter(|&x| x < ls).collect();
        up.push(ls);
        let mut down = vec![ls];
        down.extend(grid.iter().copied().filter(|&x| x > ls));
        if down.len() == 1 {
            down.push(self.profile.l1().max(ls));
            down.dedup();
        }
        let upstream = self.solver.solve_on_grid(&up)?;
        let ((rho_m, u_m), (rho_p, u_p)) = self.jump_at(ls)?;
        let downstream = solve_subsonic_on_grid(self.profile, &self.gas, rho_p, u_p, ls, &down)?;
        let p_exit = *downstream.pressure().last().unwrap();
        Ok(ShockSolution {
            ls,
            upstream,
            downstream,
            p_exit,
            rho_minus: rho_m,
            u_minus: u_m,
            rho_plus: rho_p,
            u_plus: u_p,
        })
    }
}

/// `(p_min, p_max)`: exit pressures with the shock at the exit and at the sonic window edge.
pub fn exit_pressure_range(profile: &NozzleProfile, gas: &GasModel, rho0: f64, u0: f64) -> Result<(f64, f64)> {
    ShockMap::new(profile, gas, rho0, u0)?.pressure_range()
}

pub fn solve_shock(
    profile: &NozzleProfile,
    gas: &GasModel,
    rho0: f64,
    u0: f64,
    p_e: f64,
    n_points: usize,
) -> Result<ShockSolution> {
    let map = ShockMap::new(profile, gas, rho0, u0)?;
    let ls = map.locate(p_e)?;
    map.solution_at(ls, n_points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nozzle::calibrate_inflow;
    use crate::roots::bisect;

    fn setup() -> (NozzleProfile, GasModel, f64) {
        let p = NozzleProfile::polynomial(-1.0, 1.0, vec![1.0, 0.0, 1.0]).unwrap();
        let g = GasModel::new(2.0).unwrap();
        let u0 = calibrate_inflow(&p, &g, 1.0).unwrap();
        (p, g, u0)
    }

    #[test]
    fn jump_example() {
        let g = GasModel::new(2.0).unwrap();
        let (rp, up) = rh_jump(&g, 0.5, 2.0).unwrap();
        // (rho - 0.5)(rho^2 + 0.5 rho - 2) = 0, bisection oracle on (0.5, 3].
        let oracle = bisect(|r| r * r * r - 2.25 * r + 1.0, 0.6, 3.0, 1e-15);
        assert!((rp - oracle).abs() < 1e-13);
        assert!((rp - (-0.5 + 8.25f64.sqrt()) / 2.0).abs() < 1e-13);
        assert!((up - 1.0 / rp).abs() < 1e-14);
        assert!((rp - 1.186141).abs() < 1e-6 && (up - 0.843070).abs() < 1e-6);
        let res = (rp * up - 1.0).abs() + (rp * up * up + rp * rp - 2.25).abs();
        assert!(res <= 1e-12 * 3.25);
        assert!(rp * rp > 0.25);
    }

    #[test]
    fn sonic_upstream_gives_zero_strength() {
        let g = GasModel::new(1.4).unwrap();
        let rho = 0.8;
        let u = g.sound_speed_sq(rho).unwrap().sqrt();
        let (rp, up) = rh_jump(&g, rho, u).unwrap();
        assert!((rp - rho).abs() < 1e-7 && (up - u).abs() < 1e-7);
        assert!(matches!(rh_jump(&g, 1.0, 0.5), Err(Error::NotSupersonic(_))));
    }

    #[test]
    fn pressure_range_and_monotone_positions() {
        let (p, g, u0) = setup();
        let map = ShockMap::new(&p, &g, 1.0, u0).unwrap();
        let (p_min, p_max) = map.pressure_range().unwrap();
        assert!(0.0 < p_min && p_min < p_max);
        let mid = map.exit_pressure(0.5).unwrap();
        assert!(p_min < mid && mid < p_max);
        let mut last = 0.0;
        for k in 1..=10 {
            let p_e = p_max - (p_max - p_min) * k as f64 / 11.0;
            let s = solve_shock(&p, &g, 1.0, u0, p_e, 401).unwrap();
            assert!(s.ls > last);
            last = s.ls;
            assert!((s.p_exit - p_e).abs() <= 1e-9 * p_e);
            let (rm, rmom) = s.rh_residuals(&g);
            assert!(rm <= 1e-10 && rmom <= 1e-10);
            assert!(g.pressure(s.rho_plus).unwrap() > g.pressure(s.rho_minus).unwrap());
            assert!(s.downstream.m2.iter().all(|&m| m < 1.0));
            assert!(s.upstream.m2.last().unwrap() > &1.0);
            assert!(s.downstream.bernoulli_residual() <= 1e-11);
            assert!(s.upstream.bernoulli_residual() <= 1e-11);
            assert!((s.downstream.j - s.upstream.j).abs() <= 1e-15 * s.upstream.j);
        }
    }

    #[test]
    fn limits_of_the_range() {
        let (p, g, u0) = setup();
        let map = ShockMap::new(&p, &g, 1.0, u0).unwrap();
        let (p_min, p_max) = map.pressure_range().unwrap();
        let offsets = [1e-2, 1e-4, 1e-6, 1e-8];
        let to_exit: Vec<f64> = offsets.iter().map(|o| map.locate(p_min + o * (p_max - p_min)).unwrap()).collect();
        let to_throat: Vec<f64> = offsets.iter().map(|o| map.locate(p_max - o * (p_max - p_min)).unwrap()).collect();
        assert!(to_exit.windows(2).all(|w| w[1] > w[0]) && *to_exit.last().unwrap() > 1.0 - 1e-6);
        assert!(to_throat.windows(2).all(|w| w[1] < w[0]));
        assert!(*to_throat.last().unwrap() - map.ls_min() < 1e-3);
        assert!(matches!(solve_shock(&p, &g, 1.0, u0, p_max * 1.01, 101), Err(Error::ExitPressureOutOfRange { .. })));
        assert!(matches!(solve_shock(&p, &g, 1.0, u0, p_min * 0.99, 101), Err(Error::ExitPressureOutOfRange { .. })));
    }

    #[test]
    fn round_trip() {
        let (p, g, u0) = setup();
        let map = ShockMap::new(&p, &g, 1.0, u0).unwrap();
        for ls in [0.05, 0.37, 0.8] {
            let p_e = map.exit_pressure(ls).unwrap();
            assert!((map.locate(p_e).unwrap() - ls).abs() <= 1e-8);
        }
    }

    #[test]
    fn regression_constants() {
        let (p, g, u0) = setup();
        let (p_min, p_max) = exit_pressure_range(&p, &g, 1.0, u0).unwrap();
        // Frozen from an independent 40-digit bisection computation.
        assert!((p_min - 0.568286675012191405).abs() < 1e-11, "{p_min:.17}");
        assert!((p_max - 0.999999986816453641).abs() < 1e-11, "{p_max:.17}");
    }
}
