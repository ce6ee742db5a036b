//! Polytropic gas with pressure `P = rho^gamma`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Densities at or below this are treated as vacuum.
pub const RHO_MIN: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GasModel {
    gamma: f64,
}

impl GasModel {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 1.0) || !gamma.is_finite() {
            return Err(Error::Domain(format!("gamma must exceed 1, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    fn check_rho(rho: f64) -> Result<()> {
        if rho > 0.0 && rho.is_finite() {
            Ok(())
        } else {
            Err(Error::Domain(format!("density must be positive, got {rho}")))
        }
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        Self::check_rho(rho)?;
        Ok(rho.powf(self.gamma))
    }

    /// `c^2 = gamma rho^(gamma-1)`.
    pub fn sound_speed_sq(&self, rho: f64) -> Result<f64> {
        Self::check_rho(rho)?;
        Ok(self.gamma * rho.powf(self.gamma - 1.0))
    }

    /// `|u|^2/2 + gamma/(gamma-1) rho^(gamma-1)`.
    pub fn bernoulli(&self, rho: f64, speed_sq: f64) -> Result<f64> {
        Self::check_rho(rho)?;
        if !(speed_sq >= 0.0) {
            return Err(Error::Domain(format!("speed_sq must be non-negative, got {speed_sq}")));
        }
        let g = self.gamma;
        Ok(0.5 * speed_sq + g / (g - 1.0) * rho.powf(g - 1.0))
    }

    /// Speed at which a flow with Bernoulli constant `b0` is exactly sonic.
    pub fn critical_speed(&self, b0: f64) -> Result<f64> {
        if !(b0 > 0.0) {
            return Err(Error::Domain(format!("B0 must be positive, got {b0}")));
        }
        let g = self.gamma;
        Ok((2.0 * (g - 1.0) * b0 / (g + 1.0)).sqrt())
    }

    /// Inverse of [`GasModel::bernoulli`] at fixed speed.
    pub fn density_from_bernoulli(&self, b: f64, speed_sq: f64) -> Result<f64> {
        let g = self.gamma;
        let enthalpy = b - 0.5 * speed_sq;
        if !(enthalpy > 0.0) {
            return Err(Error::Vacuum(enthalpy));
        }
        let rho = ((g - 1.0) / g * enthalpy).powf(1.0 / (g - 1.0));
        if rho <= RHO_MIN {
            return Err(Error::Vacuum(enthalpy));
        }
        Ok(rho)
    }

    /// `c^2` from the Bernoulli relation, `(gamma-1)(B - |u|^2/2)`.
    pub fn sound_speed_sq_from_bernoulli(&self, b: f64, speed_sq: f64) -> f64 {
        (self.gamma - 1.0) * (b - 0.5 * speed_sq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        while (b - a).abs() > 1e-13 {
            if f(c) > f(d) {
                b = d;
            } else {
                a = c;
            }
            c = b - r * (b - a);
            d = a + r * (b - a);
        }
        0.5 * (a + b)
    }

    #[test]
    fn pressure_values() {
        let g2 = GasModel::new(2.0).unwrap();
        assert_eq!(g2.pressure(1.0).unwrap(), 1.0);
        assert_eq!(g2.pressure(0.5).unwrap(), 0.25);
        let g = GasModel::new(1.4).unwrap();
        let expect = (1.4 * 2f64.ln()).exp();
        assert!((g.pressure(2.0).unwrap() - expect).abs() < 1e-14 * expect);
        assert!(g.pressure(0.0).is_err());
        assert!(g.pressure(-1.0).is_err());
    }

    #[test]
    fn rejects_bad_gamma() {
        assert!(GasModel::new(1.0).is_err());
        assert!(GasModel::new(0.5).is_err());
        assert!(GasModel::new(f64::NAN).is_err());
    }

    #[test]
    fn sound_speed_values() {
        let g2 = GasModel::new(2.0).unwrap();
        assert_eq!(g2.sound_speed_sq(1.0).unwrap(), 2.0);
        assert_eq!(g2.sound_speed_sq(2.0).unwrap(), 4.0);
        let g3 = GasModel::new(3.0).unwrap();
        assert!((g3.sound_speed_sq(0.9).unwrap() - 2.43).abs() < 1e-14);
    }

    #[test]
    fn bernoulli_values() {
        let g2 = GasModel::new(2.0).unwrap();
        assert_eq!(g2.bernoulli(1.0, 1.0).unwrap(), 2.5);
        assert_eq!(g2.bernoulli(1.0, 0.0).unwrap(), 2.0);
        let g = GasModel::new(1.4).unwrap();
        assert!((g.bernoulli(1.0, 2.0).unwrap() - 4.5).abs() < 1e-14);
    }

    #[test]
    fn critical_speed_matches_choking_maximum() {
        // c* maximizes the mass flux rho(B0, t^2) t at fixed B0.
        for (gamma, b0, frozen) in [(2.0, 1.5, 1.0), (2.0, 2.5, 1.290994), (1.4, 1.0, 0.57735)] {
            let g = GasModel::new(gamma).unwrap();
            let cs = g.critical_speed(b0).unwrap();
            let tmax = (2.0 * b0).sqrt();
            let flux = |t: f64| t * g.density_from_bernoulli(b0, t * t).unwrap_or(0.0);
            let t = golden_max(flux, 1e-6, tmax * (1.0 - 1e-9));
            assert!((t - cs).abs() < 1e-6, "{gamma} {b0}: {t} vs {cs}");
            assert!((cs - frozen).abs() < 1e-6);
        }
        let g2 = GasModel::new(2.0).unwrap();
        assert!((g2.critical_speed(2.5).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn density_values() {
        let g2 = GasModel::new(2.0).unwrap();
        assert!((g2.density_from_bernoulli(2.5, 1.0).unwrap() - 1.0).abs() < 1e-15);
        assert!((g2.density_from_bernoulli(2.0, 0.0).unwrap() - 1.0).abs() < 1e-15);
        let g = GasModel::new(1.4).unwrap();
        let rho = g.density_from_bernoulli(4.5, 2.0).unwrap();
        assert!((g.bernoulli(rho, 2.0).unwrap() - 4.5).abs() < 1e-14);
        assert!((rho - 1.0).abs() < 1e-14);
        assert!(matches!(g2.density_from_bernoulli(1.0, 2.0), Err(Error::Vacuum(_))));
    }

    proptest! {
        #[test]
        fn density_round_trip(gamma in 1.05f64..4.0, rho in 1e-3f64..1e3, u2 in 0.0f64..100.0) {
            let g = GasModel::new(gamma).unwrap();
            let b = g.bernoulli(rho, u2).unwrap();
            let back = g.density_from_bernoulli(b, u2).unwrap();
            prop_assert!((back - rho).abs() <= 1e-12 * rho * (1.0 + u2 / (b - 0.5 * u2)));
        }

        #[test]
        fn sonic_consistency(gamma in 1.05f64..4.0, b0 in 1e-3f64..1e3) {
            let g = GasModel::new(gamma).unwrap();
            let cs = g.critical_speed(b0).unwrap();
            let rho = g.density_from_bernoulli(b0, cs * cs).unwrap();
            let c2 = g.sound_speed_sq(rho).unwrap();
            prop_assert!((c2 - cs * cs).abs() <= 1e-12 * cs * cs);
        }

        #[test]
        fn monotonicity(gamma in 1.05f64..4.0, rho in 1e-2f64..10.0, u2 in 0.0f64..10.0, f in 1.001f64..2.0) {
            let g = GasModel::new(gamma).unwrap();
            prop_assert!(g.bernoulli(rho * f, u2).unwrap() > g.bernoulli(rho, u2).unwrap());
            let b = g.bernoulli(rho, u2).unwrap();
            let lo = g.density_from_bernoulli(b, u2).unwrap();
            let hi = g.density_from_bernoulli(b, u2 / f).unwrap();
            prop_assert!(u2 == 0.0 || hi > lo);
        }
    }
}
