//! Nozzle cross-section profiles and throat classification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gas::GasModel;

/// Default number of samples used to check the sign pattern of `a'`.
pub const SIGN_SAMPLES: usize = 4096;
pub const TOL_ZERO: f64 = 1e-10;
/// Highest derivative order the classifier inspects.
pub const MAX_ORDER: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

/// Coefficient block of a profile specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coeffs {
    Flat(Vec<f64>),
    Split { left: Vec<f64>, right: Vec<f64> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Polynomial,
    ThroatPower,
    Piecewise,
}

/// Serializable description of a profile.
///
/// * `polynomial`: `coeffs = [c0, c1, ...]`, `a = sum c_i x^i`.
/// * `throat_power`: `coeffs = [a0, c, k]`, `a = a0 + c x^k`, or `a0 + c |x|^k` when `abs` is set.
/// * `piecewise`: `coeffs = {"left": [...], "right": [...]}`, polynomials about 0 on each side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub kind: ProfileKind,
    #[serde(rename = "L0")]
    pub l0: f64,
    #[serde(rename = "L1")]
    pub l1: f64,
    pub coeffs: Coeffs,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub abs: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThroatClass {
    PositiveAcceleration,
    ZeroAccelCase1(u32),
    ZeroAccelCase2(u32),
    Corner(u32),
}

impl ThroatClass {
    /// Exponent `p` with `u - c* ~ |x|^p` near the throat.
    pub fn exponent(&self) -> f64 {
        match *self {
            ThroatClass::PositiveAcceleration => 1.0,
            ThroatClass::ZeroAccelCase1(m) => 2.0 * m as f64 + 1.0,
            ThroatClass::ZeroAccelCase2(m) => 2.0 * m as f64,
            ThroatClass::Corner(m) => m as f64 + 0.5,
        }
    }

    /// Order of the leading non-vanishing derivative of `a` at the throat.
    pub fn leading_order(&self) -> usize {
        match *self {
            ThroatClass::PositiveAcceleration => 2,
            ThroatClass::ZeroAccelCase1(m) => 4 * m as usize + 2,
            ThroatClass::ZeroAccelCase2(m) => 4 * m as usize,
            ThroatClass::Corner(m) => 2 * m as usize + 1,
        }
    }

    pub fn label(&self) -> String {
        format!("{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NozzleProfile {
    l0: f64,
    l1: f64,
    left: Vec<f64>,
    right: Vec<f64>,
}

fn falling(i: usize, k: usize) -> f64 {
    (i - k + 1..=i).fold(1.0, |p, j| p * j as f64)
}

fn poly_deriv(c: &[f64], k: usize, x: f64) -> f64 {
    let mut acc = 0.0;
    for i in (k..c.len()).rev() {
        acc = acc * x + c[i] * falling(i, k);
    }
    acc
}

impl NozzleProfile {
    /// Builds a profile and checks positivity and the sign pattern of `a'`.
    pub fn new(l0: f64, l1: f64, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        let p = Self::unchecked(l0, l1, left, right)?;
        p.validate(SIGN_SAMPLES)?;
        Ok(p)
    }

    /// Builds a profile checking only the interval and coefficients.
    pub fn unchecked(l0: f64, l1: f64, left: Vec<f64>, right: Vec<f64>) -> Result<Self> {
        if !(l0 < 0.0 && l1 > 0.0) || !l0.is_finite() || !l1.is_finite() {
            return Err(Error::InvalidProfile(format!("need L0 < 0 < L1, got [{l0}, {l1}]")));
        }
        if left.is_empty() || right.is_empty() {
            return Err(Error::InvalidProfile("empty coefficient list".into()));
        }
        if left.iter().chain(&right).any(|c| !c.is_finite()) {
            return Err(Error::InvalidProfile("non-finite coefficient".into()));
        }
        if left[0] != right[0] {
            return Err(Error::InvalidProfile("left and right pieces disagree at 0".into()));
        }
        Ok(Self { l0, l1, left, right })
    }

    pub fn polynomial(l0: f64, l1: f64, coeffs: Vec<f64>) -> Result<Self> {
        Self::new(l0, l1, coeffs.clone(), coeffs)
    }

    /// `a0 + c x^k`, or `a0 + c |x|^k` when `abs` is set.
    pub fn throat_power(l0: f64, l1: f64, a0: f64, c: f64, k: u32, abs: bool) -> Result<Self> {
        let k = k as usize;
        let mut right = vec![0.0; k + 1];
        right[0] = a0;
        right[k] = c;
        let mut left = right.clone();
        if abs && k % 2 == 1 {
            left[k] = -c;
        }
        Self::new(l0, l1, left, right)
    }

    pub fn from_spec(spec: &ProfileSpec) -> Result<Self> {
        match (&spec.kind, &spec.coeffs) {
            (ProfileKind::Polynomial, Coeffs::Flat(c)) => Self::polynomial(spec.l0, spec.l1, c.clone()),
            (ProfileKind::ThroatPower, Coeffs::Flat(c)) if c.len() == 3 => {
                let k = c[2];
                if k < 1.0 || k.fract() != 0.0 || k > 64.0 {
                    return Err(Error::InvalidProfile(format!("throat power must be a positive integer, got {k}")));
                }
                Self::throat_power(spec.l0, spec.l1, c[0], c[1], k as u32, spec.abs)
            }
            (ProfileKind::Piecewise, Coeffs::Split { left, right }) => {
                Self::new(spec.l0, spec.l1, left.clone(), right.clone())
            }
            _ => Err(Error::InvalidProfile(format!("coefficients do not fit kind {:?}", spec.kind))),
        }
    }

    pub fn l0(&self) -> f64 {
        self.l0
    }

    pub fn l1(&self) -> f64 {
        self.l1
    }

    pub fn length(&self) -> f64 {
        self.l1 - self.l0
    }

    fn piece(&self, x: f64) -> &[f64] {
        if x < 0.0 {
            &self.left
        } else {
            &self.right
        }
    }

    pub fn a(&self, x: f64) -> f64 {
        poly_deriv(self.piece(x), 0, x)
    }

    /// `a^(k)(x)`; at `x = 0` the right-sided value.
    pub fn deriv(&self, k: usize, x: f64) -> f64 {
        poly_deriv(self.piece(x), k, x)
    }

    pub fn throat_deriv(&self, k: usize, side: Side) -> f64 {
        let c = match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        };
        c.get(k).map_or(0.0, |v| v * falling(k, k))
    }

    pub fn a0(&self) -> f64 {
        self.right[0]
    }

    /// `a(x) - a(0)` without cancellation.
    pub fn delta_from_throat(&self, x: f64) -> f64 {
        let c = self.piece(x);
        let mut acc = 0.0;
        for i in (1..c.len()).rev() {
            acc = acc * x + c[i];
        }
        acc * x
    }

    /// `b = a'/a`.
    pub fn b(&self, x: f64) -> f64 {
        self.deriv(1, x) / self.a(x)
    }

    /// The same shape multiplied by `lambda`.
    pub fn scaled(&self, lambda: f64) -> Result<Self> {
        let s = |c: &Vec<f64>| c.iter().map(|v| v * lambda).collect();
        Self::new(self.l0, self.l1, s(&self.left), s(&self.right))
    }

    fn validate(&self, samples: usize) -> Result<()> {
        let n = samples.max(2);
        for i in 0..=n {
            let x = self.l0 + (self.l1 - self.l0) * i as f64 / n as f64;
            if !(self.a(x) > 0.0) {
                return Err(Error::InvalidProfile(format!("a({x}) = {} is not positive", self.a(x))));
            }
            let d = self.deriv(1, x);
            if (x < 0.0 && !(d < 0.0)) || (x > 0.0 && !(d > 0.0)) {
                return Err(Error::InvalidProfile(format!("a'({x}) = {d} violates the converging-diverging pattern")));
            }
        }
        let (dl, dr) = (self.throat_deriv(1, Side::Left), self.throat_deriv(1, Side::Right));
        let scale = self.derivative_scale();
        let tiny = TOL_ZERO * scale.max(f64::MIN_POSITIVE);
        let smooth_min = dl.abs() <= tiny && dr.abs() <= tiny;
        if !(smooth_min || (dl < 0.0 && dr > 0.0)) {
            return Err(Error::InvalidProfile(format!("a'(0-) = {dl}, a'(0+) = {dr}: throat is not at 0")));
        }
        Ok(())
    }

    fn derivative_scale(&self) -> f64 {
        (1..=MAX_ORDER)
            .flat_map(|k| [self.throat_deriv(k, Side::Left), self.throat_deriv(k, Side::Right)])
            .fold(0.0, |m: f64, v| m.max(v.abs()))
    }

    /// Scans derivative orders 1..=6 at the throat for the first non-vanishing one.
    pub fn classify_throat(&self, tol_zero: f64) -> Result<ThroatClass> {
        let scale = self.derivative_scale();
        if scale == 0.0 {
            return Err(Error::UnclassifiableThroat);
        }
        let zero = |v: f64| v.abs() <= tol_zero * scale;
        for k in 1..=MAX_ORDER {
            let l = self.throat_deriv(k, Side::Left);
            let r = self.throat_deriv(k, Side::Right);
            if zero(l) && zero(r) {
                continue;
            }
            let same = (l - r).abs() <= tol_zero * scale;
            if same {
                return match k {
                    2 if r > 0.0 => Ok(ThroatClass::PositiveAcceleration),
                    k if k % 4 == 2 && r > 0.0 => Ok(ThroatClass::ZeroAccelCase1(((k - 2) / 4) as u32)),
                    k if k % 4 == 0 && r > 0.0 => Ok(ThroatClass::ZeroAccelCase2((k / 4) as u32)),
                    _ => Err(Error::UnclassifiableThroat),
                };
            }
            if k % 2 == 1 && l < 0.0 && r > 0.0 {
                return Ok(ThroatClass::Corner(((k - 1) / 2) as u32));
            }
            return Err(Error::UnclassifiableThroat);
        }
        Err(Error::UnclassifiableThroat)
    }
}

/// Residual that vanishes exactly when the inflow `(rho0, u0)` makes the throat sonic.
pub fn admissibility_residual(profile: &NozzleProfile, gas: &GasModel, rho0: f64, u0: f64) -> Result<f64> {
    let g = gas.gamma();
    let c2 = gas.sound_speed_sq(rho0)?;
    if !(u0 > 0.0) || u0 * u0 >= c2 {
        return Err(Error::Domain(format!("inflow u0 = {u0} is not subsonic (c^2 = {c2})")));
    }
    let b0 = gas.bernoulli(rho0, u0 * u0)?;
    let cs = gas.critical_speed(b0)?;
    let ratio = profile.a0() / profile.a(profile.l0());
    Ok(ratio.powf(g - 1.0) - g * (rho0 * u0).powf(g - 1.0) / cs.powf(g + 1.0))
}

/// Subsonic inflow speed that places the sonic point at the throat.
pub fn calibrate_inflow(profile: &NozzleProfile, gas: &GasModel, rho0: f64) -> Result<f64> {
    let c = gas.sound_speed_sq(rho0)?.sqrt();
    if !(profile.a0() < profile.a(profile.l0())) {
        return Err(Error::NoSubsonicCalibration);
    }
    let res = |u: f64| admissibility_residual(profile, gas, rho0, u);
    let (mut lo, mut hi) = (c * 1e-300_f64.max(f64::EPSILON * 1e-10), c * (1.0 - f64::EPSILON));
    let (rlo, rhi) = (res(lo)?, res(hi)?);
    if !(rlo > 0.0 && rhi < 0.0) {
        return Err(Error::NoSubsonicCalibration);
    }
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if res(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (rl, rh) = (res(lo)?.abs(), res(hi)?.abs());
    Ok(if rl <= rh { lo } else { hi })
}
