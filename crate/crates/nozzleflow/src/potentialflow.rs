//! Irrotational transonic flow: Picard iteration on the linear mixed problem.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mixedpde::{self, AdmissibilityReport, Background, CoefficientSet};
use crate::problem::Setup;
use crate::spectral::{Basis, NodalField, OddField, SpectralField};

/// Entrance data `u2 = eps h1` and `B = B0 + eps B_in`.
///
/// `h1 = sum_k h1_sin[k-1] sin(k pi x2)`,
/// `B_in = Bin_cos[0]/sqrt(2) + sum_k Bin_cos[k] cos(k pi x2)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BoundaryData {
    pub eps: f64,
    #[serde(default)]
    pub h1_sin: Vec<f64>,
    #[serde(default, rename = "Bin_cos")]
    pub bin_cos: Vec<f64>,
}

impl BoundaryData {
    pub fn h1(&self, x2: f64) -> f64 {
        self.h1_sin.iter().enumerate().map(|(i, b)| b * ((i + 1) as f64 * PI * x2).sin()).sum()
    }

    /// `int_{-1}^{x2} h1`.
    pub fn h1_integral(&self, x2: f64) -> f64 {
        self.h1_sin
            .iter()
            .enumerate()
            .map(|(i, b)| {
                let w = (i + 1) as f64 * PI;
                -b * ((w * x2).cos() - w.cos()) / w
            })
            .sum()
    }

    pub fn b_in(&self, x2: f64) -> f64 {
        self.bin_cos
            .iter()
            .enumerate()
            .map(|(k, g)| if k == 0 { g * FRAC_1_SQRT_2 } else { g * (k as f64 * PI * x2).cos() })
            .sum()
    }

    pub fn db_in(&self, x2: f64) -> f64 {
        self.bin_cos.iter().enumerate().skip(1).map(|(k, g)| -g * k as f64 * PI * (k as f64 * PI * x2).sin()).sum()
    }

    /// `sqrt(sum beta_k^2)`, the `L2(-1, 1)` norm of `h1`.
    pub fn h1_norm(&self) -> f64 {
        self.h1_sin.iter().map(|b| b * b).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, eps: f64) -> Self {
        Self { eps, ..self.clone() }
    }
}

/// Degree-9 smoothstep: `C^4` at both ends.
fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t.powi(5) * (126.0 + t * (-420.0 + t * (540.0 + t * (-315.0 + 70.0 * t))))
}

/// Entrance cut-off: 1 on `[L0, 15 L0/16]`, 0 on `[7 L0/8, L1]`.
pub fn eta0(l0: f64, x1: f64) -> f64 {
    let a = 15.0 * l0 / 16.0;
    let b = 7.0 * l0 / 8.0;
    1.0 - smoothstep((x1 - a) / (b - a))
}

/// `psi0 = eta0(x1) int_{-1}^{x2} h1`.
pub fn lift_boundary(bdata: &BoundaryData, basis: &Basis, grid: &Grid) -> SpectralField {
    let l0 = grid.x[0];
    SpectralField::project(basis, grid, |x1, x2| eta0(l0, x1) * bdata.h1_integral(x2))
}

/// Gradient of a potential perturbation at the nodes.
fn gradient(psi1: &SpectralField, basis: &Basis) -> (NodalField, NodalField) {
    (psi1.nodal_dx1(basis), psi1.nodal_dx2(basis))
}

/// Coefficients of the quasilinear potential equation at perturbation `grad psi1`.
///
/// Returns `(k11, k12, k1, G)` as nodal fields.
pub(crate) fn potential_coeffs(
    bg: &Background,
    p1: &NodalField,
    p2: &NodalField,
) -> Result<(NodalField, NodalField, NodalField, NodalField)> {
    let g = bg.gamma;
    let (n1, nq) = (p1.n1, p1.nq);
    let mut k11 = NodalField::zeros(n1, nq);
    let mut k12 = NodalField::zeros(n1, nq);
    let mut k1 = NodalField::zeros(n1, nq);
    let mut gg = NodalField::zeros(n1, nq);
    for i in 0..n1 {
        let (u, du, b) = (bg.u[i], bg.du[i], bg.b[i]);
        for q in 0..nq {
            let (a, c) = (p1.get(i, q), p2.get(i, q));
            let u1 = u + a;
            let c2 = (g - 1.0) * (bg.b0 - 0.5 * (u1 * u1 + c * c));
            let den = c2 - c * c;
            if !(c2 > 0.0 && den > 0.0 && u1 > 0.0) {
                return Err(Error::TrustRegionExceeded(format!(
                    "degenerate coefficients at x1 = {}, c^2 = {c2:e}, c^2 - u2^2 = {den:e}",
                    bg.grid.x[i]
                )));
            }
            k11.set(i, q, (c2 - u1 * u1) / den);
            k12.set(i, q, -u1 * c / den);
            k1.set(i, q, (b * (c2 - (g - 1.0) * u * u) - (g + 1.0) * u * du) / den);
            let grad2 = a * a + c * c;
            gg.set(i, q, (du * ((g + 1.0) * a * a + (g - 1.0) * c * c) + (g - 1.0) * b * u * grad2) / (2.0 * den));
        }
    }
    Ok((k11, k12, k1, gg))
}

/// Coefficients frozen at `psi_hat + eps psi0`.
///
/// The source is `G(grad(psi_hat + eps psi0))`. The `eps L psi0` part of `G0`
/// enters the solve through [`mixedpde::solve_sigma_lifted`], so the lift is
/// treated by the same discrete operator as the unknown.
pub fn nonlinear_coeffs(psi_hat: &SpectralField, psi0: &SpectralField, eps: f64, bg: &Background, basis: &Basis) -> Result<CoefficientSet> {
    let total = psi_hat.axpy(eps, psi0);
    let (p1, p2) = gradient(&total, basis);
    let (k11, k12, k1, g0) = potential_coeffs(bg, &p1, &p2)?;
    Ok(CoefficientSet { k11, k12, k1, g0 })
}

/// Nodal velocity and state of a 2D solution.
#[derive(Debug, Clone)]
pub struct VelocityField2D {
    pub grid: Grid,
    pub x2: Vec<f64>,
    pub u1: NodalField,
    pub u2: NodalField,
    pub rho: NodalField,
    pub m2: NodalField,
    /// Bernoulli function at the nodes.
    pub b: NodalField,
}

impl VelocityField2D {
    pub fn from_velocity(setup: &Setup, u1: NodalField, u2: NodalField, b: NodalField) -> Result<Self> {
        let gas = setup.gas;
        let (n1, nq) = (u1.n1, u1.nq);
        let mut rho = NodalField::zeros(n1, nq);
        let mut m2 = NodalField::zeros(n1, nq);
        for i in 0..n1 {
            for q in 0..nq {
                let (a, c, bb) = (u1.get(i, q), u2.get(i, q), b.get(i, q));
                if !(a > 0.0) {
                    return Err(Error::TrustRegionExceeded(format!("stagnation: u1 = {a:e} at x1 = {}", setup.grid.x[i])));
                }
                let q2 = a * a + c * c;
                let r = gas.density_from_bernoulli(bb, q2).map_err(|e| Error::TrustRegionExceeded(e.to_string()))?;
                rho.set(i, q, r);
                m2.set(i, q, q2 / gas.sound_speed_sq_from_bernoulli(bb, q2));
            }
        }
        Ok(Self { grid: setup.grid.clone(), x2: setup.basis.quadrature().nodes.clone(), u1, u2, rho, m2, b })
    }

    pub fn pressure(&self, gamma: f64) -> NodalField {
        self.rho.map(|r| r.powf(gamma))
    }
}

/// Velocity of the potential `phi_bar + psi1`.
pub fn velocity_from_potential(setup: &Setup, psi1: &SpectralField) -> Result<VelocityField2D> {
    let (p1, p2) = gradient(psi1, &setup.basis);
    let nq = setup.basis.nq();
    let mut u1 = p1;
    for i in 0..setup.grid.len() {
        for v in u1.row_mut(i) {
            *v += setup.bg.u[i];
        }
    }
    let b = NodalField { n1: setup.grid.len(), nq, data: vec![setup.bg.b0; setup.grid.len() * nq] };
    VelocityField2D::from_velocity(setup, u1, p2, b)
}

/// Convergence record of a fixed-point iteration.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct IterationHistory {
    /// `|psi^{n+1} - psi^n|_{H1,h}` per iterate.
    pub diffs: Vec<f64>,
    /// Ratios of consecutive differences.
    pub factors: Vec<f64>,
    pub iterations: usize,
    /// Worst admissibility margin per iterate.
    pub admissibility: Vec<f64>,
    /// Cauchy differences of the first full continuation.
    pub cauchy: Vec<f64>,
}

impl IterationHistory {
    pub(crate) fn push(&mut self, diff: f64) {
        if let Some(&prev) = self.diffs.last() {
            self.factors.push(if prev > 0.0 { diff / prev } else { 0.0 });
        }
        self.diffs.push(diff);
        self.iterations += 1;
    }

    /// Three consecutive factors at or above one.
    pub(crate) fn stalled(&self) -> bool {
        self.factors.len() >= 3 && self.factors[self.factors.len() - 3..].iter().all(|f| *f >= 1.0)
    }

    pub fn max_factor_after_first(&self) -> Option<f64> {
        self.factors.iter().copied().reduce(f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct PotentialSolution {
    pub field: VelocityField2D,
    /// Homogeneous part `psi` with `psi(L0, x2) = 0`.
    pub psi: SpectralField,
    /// Perturbation potential `psi + eps psi0`.
    pub psi1: SpectralField,
    pub psi0: SpectralField,
    pub eps: f64,
    pub history: IterationHistory,
    /// Trust-region diagnostic `sqrt(eps + |h1|)`.
    pub delta0: f64,
    pub sigma_min: f64,
}

/// One linear step: coefficients frozen at `psi_hat`, solve for the next `psi`.
pub(crate) fn linear_step(
    setup: &Setup,
    coeffs: &CoefficientSet,
    lift: &SpectralField,
    full: bool,
    history: &mut IterationHistory,
) -> Result<SpectralField> {
    let adm: AdmissibilityReport = mixedpde::check_admissibility(coeffs, &setup.basis, &setup.grid, &setup.multiplier);
    history.admissibility.push(adm.worst);
    let sys = mixedpde::assemble_galerkin(coeffs, &setup.basis, &setup.grid);
    if full {
        let r = mixedpde::continuation_solve_lifted(&sys, &setup.basis, &setup.schedule, Some(lift))?;
        if history.cauchy.is_empty() {
            history.cauchy = r.cauchy;
        }
        Ok(r.psi)
    } else {
        Ok(mixedpde::solve_sigma_lifted(&sys, setup.schedule.sigma_min, Some(lift))?.psi)
    }
}

/// Picard iteration `psi^{n+1} = T(psi^n)` from `psi^0 = 0`.
pub fn picard_solve(setup: &Setup, bdata: &BoundaryData) -> Result<PotentialSolution> {
    let basis = &setup.basis;
    let psi0 = lift_boundary(bdata, basis, &setup.grid);
    let lift = psi0.scale(bdata.eps);
    let mut psi = SpectralField::zeros(&setup.grid, basis.n());
    let mut history = IterationHistory::default();
    let mut converged = false;
    for it in 0..setup.params.max_iter {
        let coeffs = nonlinear_coeffs(&psi, &psi0, bdata.eps, &setup.bg, basis)?;
        let full = it == 0 || setup.params.full_continuation;
        let next = linear_step(setup, &coeffs, &lift, full, &mut history)?;
        let diff = next.axpy(-1.0, &psi).h1_norm(basis);
        psi = next;
        history.push(diff);
        if diff <= setup.params.tol_fp {
            converged = true;
            break;
        }
        if history.stalled() {
            return Err(Error::NoContraction(format!("Picard factors {:?}", &history.factors[history.factors.len() - 3..])));
        }
    }
    if !converged {
        return Err(Error::NonConvergent(format!("Picard iteration stopped after {} iterates", history.iterations)));
    }
    let psi1 = psi.axpy(bdata.eps, &psi0);
    let field = velocity_from_potential(setup, &psi1)?;
    Ok(PotentialSolution {
        field,
        psi,
        psi1,
        psi0,
        eps: bdata.eps,
        history,
        delta0: (bdata.eps + bdata.h1_norm()).sqrt(),
        sigma_min: setup.schedule.sigma_min,
    })
}

/// Residual checks of a converged irrotational solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialDiagnostics {
    /// `|d1 u2 - d2 u1|_{L2,h}`
    pub curl: f64,
    /// `|d1(a rho u1) + d2(a rho u2)|` over the PDE nodes.
    pub mass: f64,
    /// `max |B - B0|`
    pub bernoulli: f64,
    /// `|T(psi) - psi|_{H1,h}` for one more linear step.
    pub fixed_point: f64,
}

/// `L2,h` norm of a nodal field: trapezoid in `x1`, quadrature in `x2`.
pub fn nodal_l2(f: &NodalField, grid: &Grid, basis: &Basis) -> f64 {
    let w = &basis.quadrature().weights;
    let line: Vec<f64> = (0..f.n1).map(|i| f.row(i).iter().zip(w).map(|(v, w)| v * v * w).sum()).collect();
    grid.trapezoid(&line).sqrt()
}

/// Nodes at each `x1` end that carry boundary closure rows instead of the PDE.
pub const CLOSURE_NODES: usize = 2;

/// `L2,h` norm over the nodes where the PDE is imposed.
pub fn residual_l2(f: &NodalField, grid: &Grid, basis: &Basis) -> f64 {
    let w = &basis.quadrature().weights;
    let k = CLOSURE_NODES;
    let line: Vec<f64> = (k..f.n1 - k).map(|i| f.row(i).iter().zip(w).map(|(v, w)| v * v * w).sum()).collect();
    let g = Grid { x: grid.x[k..grid.len() - k].to_vec(), h: grid.h, throat: grid.throat - k };
    g.trapezoid(&line).sqrt()
}

/// `d1 f1 + d2 f2` with `f2` vanishing on the walls.
pub(crate) fn divergence(f1: &NodalField, f2: &NodalField, grid: &Grid, basis: &Basis) -> NodalField {
    let d1 = f1.dx1(grid.h);
    let d2 = OddField::from_nodal(basis, grid, f2).dx2(basis).nodal(basis);
    d1.zip(&d2, |a, b| a + b)
}

/// `d2` of a field with vanishing wall slope.
pub(crate) fn dx2_even(f: &NodalField, grid: &Grid, basis: &Basis) -> NodalField {
    SpectralField::from_nodal(basis, grid, f).nodal_dx2(basis)
}

pub fn diagnostics(setup: &Setup, sol: &PotentialSolution, bdata: &BoundaryData) -> Result<PotentialDiagnostics> {
    let (grid, basis) = (&setup.grid, &setup.basis);
    let f = &sol.field;
    let curl = {
        let dx1_u2 = f.u2.dx1(grid.h);
        let dx2_u1 = dx2_even(&f.u1, grid, basis);
        residual_l2(&dx1_u2.zip(&dx2_u1, |a, b| a - b), grid, basis)
    };
    let flux = |u: &NodalField| {
        let mut out = u.zip(&f.rho, |a, b| a * b);
        for i in 0..grid.len() {
            let a = setup.bg.a[i];
            out.row_mut(i).iter_mut().for_each(|v| *v *= a);
        }
        out
    };
    let mass = residual_l2(&divergence(&flux(&f.u1), &flux(&f.u2), grid, basis), grid, basis);
    let gas = setup.gas;
    let mut bernoulli: f64 = 0.0;
    for k in 0..f.u1.data.len() {
        let q2 = f.u1.data[k].powi(2) + f.u2.data[k].powi(2);
        bernoulli = bernoulli.max((gas.bernoulli(f.rho.data[k], q2)? - setup.bg.b0).abs());
    }
    let coeffs = nonlinear_coeffs(&sol.psi, &sol.psi0, bdata.eps, &setup.bg, basis)?;
    let mut scratch = IterationHistory::default();
    let again = linear_step(setup, &coeffs, &sol.psi0.scale(bdata.eps), false, &mut scratch)?;
    let fixed_point = again.axpy(-1.0, &sol.psi).h1_norm(basis);
    Ok(PotentialDiagnostics { curl, mass, bernoulli, fixed_point })
}

/// Sonic curve `x1 = xi(x2)` sampled at the quadrature nodes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SonicCurve {
    pub x2: Vec<f64>,
    pub xi: Vec<f64>,
    /// `-(d1 |M|^2)^{-1} d2 |M|^2` at the root.
    pub dxi: Vec<f64>,
}

impl SonicCurve {
    pub fn sup_xi(&self) -> f64 {
        self.xi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn sup_dxi(&self) -> f64 {
        self.dxi.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Cubic through the four nodes around cell `[x_i, x_{i+1}]`.
fn local_cubic(x: &[f64], f: &[f64], i: usize) -> impl Fn(f64) -> f64 {
    let s = i.saturating_sub(1).min(x.len() - 4);
    let xs = [x[s], x[s + 1], x[s + 2], x[s + 3]];
    let ys = [f[s], f[s + 1], f[s + 2], f[s + 3]];
    move |t| {
        (0..4)
            .map(|k| ys[k] * (0..4).filter(|&m| m != k).map(|m| (t - xs[m]) / (xs[k] - xs[m])).product::<f64>())
            .sum()
    }
}

/// Roots of `|M|^2 = 1` along each `x2` node line.
pub fn sonic_curve(field: &VelocityField2D, basis: &Basis) -> Result<SonicCurve> {
    let grid = &field.grid;
    let x = &grid.x;
    let d1 = field.m2.dx1(grid.h);
    let d2 = dx2_even(&field.m2, grid, basis);
    let nq = field.m2.nq;
    let mut xi = Vec::with_capacity(nq);
    let mut dxi = Vec::with_capacity(nq);
    for q in 0..nq {
        let m = field.m2.column(q);
        if let Some(k) = m.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotoneMach(x[k]));
        }
        let i = m.partition_point(|v| *v < 1.0);
        if i == 0 || i == m.len() {
            return Err(Error::NonMonotoneMach(x[i.min(m.len() - 1)]));
        }
        // Root in [x_{i-1}, x_i].
        let cell = i - 1;
        let f = local_cubic(x, &m, cell);
        let (mut lo, mut hi) = (x[cell], x[cell + 1]);
        let root = if m[i] == 1.0 {
            x[i]
        } else {
            let (flo, fhi) = (f(lo) - 1.0, f(hi) - 1.0);
            if flo * fhi > 0.0 {
                // The interpolant is not bracketed; fall back to linear.
                x[cell] + (1.0 - m[cell]) / (m[i] - m[cell]) * grid.h
            } else {
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if (f(mid) - 1.0) * flo > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                    if hi - lo <= 1e-15 * grid.h {
                        break;
                    }
                }
                0.5 * (lo + hi)
            }
        };
        xi.push(root);
        let g1 = local_cubic(x, &d1.column(q), cell)(root);
        let g2 = local_cubic(x, &d2.column(q), cell)(root);
        dxi.push(-g2 / g1);
    }
    Ok(SonicCurve { x2: basis.quadrature().nodes.clone(), xi, dxi })
}

/// `|u1 - u_bar|_{H1,h}` of the irrotational solution.
pub fn u1_perturbation_h1(sol: &PotentialSolution, basis: &Basis) -> f64 {
    sol.psi1.dx1().h1_norm(basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::GasModel;
    use crate::nozzle::NozzleProfile;
    use crate::problem::SolverParams;

    pub(crate) fn setup(n1: usize, n: usize) -> Setup {
        let p = NozzleProfile::polynomial(-1.0, 1.0, vec![1.0, 0.0, 1.0]).unwrap();
        let g = GasModel::new(2.0).unwrap();
        Setup::new(&p, &g, 1.0, None, SolverParams { n1, n_modes: n, ..Default::default() }).unwrap()
    }

    #[test]
    fn cutoff_shape() {
        assert_eq!(eta0(-1.0, -1.0), 1.0);
        assert_eq!(eta0(-1.0, -0.9375), 1.0);
        assert_eq!(eta0(-1.0, -0.875), 0.0);
        assert_eq!(eta0(-1.0, 0.5), 0.0);
        let mut prev = 1.0;
        for k in 0..=1000 {
            let v = eta0(-1.0, -0.95 + 1e-4 * k as f64);
            assert!(v <= prev);
            prev = v;
        }
    }

    #[test]
    fn cutoff_fourth_difference_bounded() {
        // FD oracle: the fourth difference quotient stays bounded under refinement.
        let d4 = |h: f64| {
            (0..=2000)
                .map(|k| -1.0 + 0.25 * k as f64 / 2000.0)
                .map(|x| {
                    let f = |t: f64| eta0(-1.0, t);
                    (f(x - 2.0 * h) - 4.0 * f(x - h) + 6.0 * f(x) - 4.0 * f(x + h) + f(x + 2.0 * h)) / h.powi(4)
                })
                .fold(0.0f64, |m, v| m.max(v.abs()))
        };
        let (a, b, c) = (d4(2e-3), d4(1e-3), d4(5e-4));
        assert!(b < 1.2 * a && c < 1.2 * b, "{a} {b} {c}");
    }

    #[test]
    fn lift_examples() {
        let s = setup(101, 6);
        let zero = lift_boundary(&BoundaryData::default(), &s.basis, &s.grid);
        assert!(zero.coeffs.iter().all(|v| *v == 0.0));
        let bd = BoundaryData { eps: 1.0, h1_sin: vec![1.0], bin_cos: vec![] };
        for x in [-1.0, -0.3, 0.2, 1.0] {
            assert!((bd.h1_integral(x) + (1.0 + (PI * x).cos()) / PI).abs() < 1e-15);
        }
        let psi0 = lift_boundary(&bd, &s.basis, &s.grid);
        for &x2 in s.basis.quadrature().nodes.iter().step_by(13) {
            assert!((s.basis.eval_dx2(psi0.at(0), x2) - (PI * x2).sin()).abs() < 1e-12);
        }
        let k = s.grid.x.iter().position(|&x| x >= -0.875).unwrap();
        assert!(psi0.coeffs[k * 6..].iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unperturbed_coefficients_reduce_to_background() {
        let s = setup(101, 4);
        let z = SpectralField::zeros(&s.grid, 4);
        let c = nonlinear_coeffs(&z, &z, 0.0, &s.bg, &s.basis).unwrap();
        for i in 0..101 {
            for q in (0..s.basis.nq()).step_by(31) {
                assert!((c.k11.get(i, q) - s.bg.k11[i]).abs() < 1e-12);
                assert_eq!(c.k12.get(i, q), 0.0);
                assert!((c.k1.get(i, q) - s.bg.k1[i]).abs() < 1e-11 * (1.0 + s.bg.k1[i].abs()));
                assert_eq!(c.g0.get(i, q), 0.0);
            }
        }
    }

    #[test]
    fn source_is_quadratic_at_origin() {
        let s = setup(101, 4);
        let z = SpectralField::zeros(&s.grid, 4);
        let dir = SpectralField::project(&s.basis, &s.grid, |x, y| (x + 1.0).powi(2) * (1.0 + 0.5 * (PI * y).cos()));
        let mut ratios = vec![];
        for t in [1e-2, 1e-3, 1e-4] {
            let c = nonlinear_coeffs(&dir.scale(t), &z, 0.0, &s.bg, &s.basis).unwrap();
            ratios.push(c.g0.max_abs() / (t * t));
        }
        assert!(ratios.iter().all(|r| r.is_finite() && *r > 0.0));
        assert!((ratios[2] / ratios[1] - 1.0).abs() < 0.05 && (ratios[1] / ratios[0] - 1.0).abs() < 0.5);
    }

    #[test]
    fn coefficient_compatibility() {
        let s = setup(101, 8);
        let bd = BoundaryData { eps: 1e-3, h1_sin: vec![1.0], bin_cos: vec![] };
        let psi0 = lift_boundary(&bd, &s.basis, &s.grid);
        let psi_hat = SpectralField::project(&s.basis, &s.grid, |x, y| 1e-3 * (x + 1.0) * (PI * y).cos());
        let c = nonlinear_coeffs(&psi_hat, &psi0, bd.eps, &s.bg, &s.basis).unwrap();
        assert!(c.compatibility_residual(&s.basis) < 1e-8, "{}", c.compatibility_residual(&s.basis));
    }

    #[test]
    fn trust_region_violation() {
        let s = setup(101, 4);
        let z = SpectralField::zeros(&s.grid, 4);
        let huge = SpectralField::project(&s.basis, &s.grid, |x, _| -10.0 * (x + 1.0));
        assert!(matches!(nonlinear_coeffs(&huge, &z, 0.0, &s.bg, &s.basis), Err(Error::TrustRegionExceeded(_))));
    }

    #[test]
    fn zero_eps_is_background() {
        let s = setup(101, 4);
        let bd = BoundaryData { eps: 0.0, h1_sin: vec![1.0], bin_cos: vec![] };
        let sol = picard_solve(&s, &bd).unwrap();
        assert_eq!(sol.history.iterations, 1);
        assert!(sol.psi.coeffs.iter().all(|v| *v == 0.0));
        let curve = sonic_curve(&sol.field, &s.basis).unwrap();
        assert!(curve.sup_xi() < 1e-12, "{}", curve.sup_xi());
        for i in 0..101 {
            assert!((sol.field.u1.get(i, 5) - s.bg.u[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn small_eps_converges_and_contracts() {
        let s = setup(101, 8);
        let bd = BoundaryData { eps: 1e-3, h1_sin: vec![1.0], bin_cos: vec![] };
        let sol = picard_solve(&s, &bd).unwrap();
        assert!(sol.history.factors.iter().all(|f| *f < 1.0), "{:?}", sol.history);
        assert!(!sol.history.cauchy.is_empty());
        let d = diagnostics(&s, &sol, &bd).unwrap();
        assert!(d.curl < 1e-3 * bd.eps, "{d:?}");
        assert!(d.bernoulli < 1e-11);
        assert!(d.fixed_point <= 10.0 * s.params.tol_fp, "{d:?}");
        // Walls: u2 vanishes.
        for i in 0..101 {
            let w = s.basis.eval_dx2(sol.psi1.at(i), 1.0).abs() + s.basis.eval_dx2(sol.psi1.at(i), -1.0).abs();
            assert!(w < 1e-10);
        }
        let curve = sonic_curve(&sol.field, &s.basis).unwrap();
        assert!(curve.sup_xi() > 0.0 && curve.sup_xi() < 0.1);
    }
}
