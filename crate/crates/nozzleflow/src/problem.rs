//! Shared setup for the 2D drivers: background, basis, grid and schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::grid::Grid;
use crate::mixedpde::{self, Background, MultiplierData, Schedule};
use crate::nozzle::{calibrate_inflow, NozzleProfile};
use crate::quasi1d::{TransonicSolver, DELTA_SONIC_REL};
use crate::spectral::Basis;

/// Numerical parameters of the 2D solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverParams {
    pub n1: usize,
    #[serde(rename = "N")]
    pub n_modes: usize,
    pub sigma0: f64,
    pub c_sigma: f64,
    pub tol_fp: f64,
    pub tol_inner: f64,
    pub tol_outer: f64,
    /// Sonic window half-width relative to `L1 - L0`.
    pub delta_sonic: f64,
    pub max_iter: usize,
    /// Run the full sigma schedule on every linear step, not only the first.
    pub full_continuation: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            n1: 401,
            n_modes: 16,
            sigma0: mixedpde::SIGMA0,
            c_sigma: 1.0,
            tol_fp: 1e-10,
            tol_inner: 1e-10,
            tol_outer: 1e-10,
            delta_sonic: DELTA_SONIC_REL,
            max_iter: 50,
            full_continuation: false,
        }
    }
}

impl SolverParams {
    pub fn validate(&self) -> Result<()> {
        if self.n1 < 33 || self.n1 % 2 == 0 {
            return Err(Error::Domain(format!("n1 must be odd and at least 33, got {}", self.n1)));
        }
        if self.n_modes < 1 {
            return Err(Error::Domain("N must be at least 1".into()));
        }
        for (name, v) in [
            ("sigma0", self.sigma0),
            ("c_sigma", self.c_sigma),
            ("tol_fp", self.tol_fp),
            ("tol_inner", self.tol_inner),
            ("tol_outer", self.tol_outer),
            ("delta_sonic", self.delta_sonic),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter < 1 {
            return Err(Error::Domain("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything a 2D solve needs that does not depend on the boundary data.
#[derive(Debug, Clone)]
pub struct Setup {
    pub profile: NozzleProfile,
    pub gas: GasModel,
    pub rho0: f64,
    pub u0: f64,
    pub params: SolverParams,
    pub grid: Grid,
    pub basis: Basis,
    pub bg: Background,
    pub multiplier: MultiplierData,
    pub schedule: Schedule,
}

impl Setup {
    /// `u0 = None` calibrates the inflow velocity.
    pub fn new(profile: &NozzleProfile, gas: &GasModel, rho0: f64, u0: Option<f64>, params: SolverParams) -> Result<Self> {
        params.validate()?;
        let u0 = match u0 {
            Some(u) => u,
            None => calibrate_inflow(profile, gas, rho0)?,
        };
        let grid = Grid::new(profile.l0(), profile.l1(), params.n1)?;
        let solver = TransonicSolver::new(profile, gas, rho0, u0, params.delta_sonic * profile.length())?;
        let flow = solver.solve_on_grid(&grid.x)?;
        let bg = mixedpde::background_coeffs(profile, gas, &flow)?;
        let multiplier = mixedpde::find_multiplier(&bg, mixedpde::DEFAULT_KAPPA_MARGIN)?;
        let schedule = Schedule::for_grid(&grid, params.sigma0, params.c_sigma);
        Ok(Self {
            profile: profile.clone(),
            gas: *gas,
            rho0,
            u0,
            params,
            grid,
            basis: Basis::new(params.n_modes),
            bg,
            multiplier,
            schedule,
        })
    }

    /// Same background on a grid with a different `n1`.
    pub fn with_n1(&self, n1: usize) -> Result<Self> {
        Self::new(&self.profile, &self.gas, self.rho0, Some(self.u0), SolverParams { n1, ..self.params })
    }
}
