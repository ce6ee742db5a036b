//! Linear mixed-type equation `sum k_ij d_ij psi + k1 d_1 psi = G0`.
//!
//! Galerkin truncation in `x2` on the Neumann basis turns the problem into a
//! coupled system of third-order (regularized) two-point BVPs in `x1`, solved
//! as one block-banded finite-difference system.

use serde::Serialize;

use crate::banded::{self, BandMatrix};
use crate::error::{Error, Result};
use crate::gas::GasModel;
use crate::grid::Grid;
use crate::nozzle::{NozzleProfile, Side, ThroatClass, TOL_ZERO};
use crate::par;
use crate::quasi1d::Flow1D;
use crate::spectral::{Basis, NodalField, OddField, SpectralField};

pub const SIGMA0: f64 = 1e-2;
pub const SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_KAPPA_MARGIN: f64 = 1e-3;
/// Bound on the relative residual of every banded solve.
pub const RESIDUAL_TOL: f64 = 1e-10;

/// Background state and the reference coefficients on the `x1` grid.
#[derive(Debug, Clone)]
pub struct Background {
    pub grid: Grid,
    pub gamma: f64,
    pub b0: f64,
    pub j: f64,
    pub a: Vec<f64>,
    /// `a'/a`
    pub b: Vec<f64>,
    pub u: Vec<f64>,
    pub du: Vec<f64>,
    pub rho: Vec<f64>,
    pub c2: Vec<f64>,
    pub m2: Vec<f64>,
    pub k11: Vec<f64>,
    pub k1: Vec<f64>,
    /// Exact derivative of `k11`.
    pub dk11: Vec<f64>,
}

/// Reference coefficients `1 - M^2` and `k1` of a positive-acceleration background.
///
/// At the sonic node `b/(1 - M^2)` is replaced by its limit
/// `-sqrt(a''(0)/((gamma+1) a(0)))`.
pub fn background_coeffs(profile: &NozzleProfile, gas: &GasModel, flow: &Flow1D) -> Result<Background> {
    let class = profile.classify_throat(TOL_ZERO)?;
    if class != ThroatClass::PositiveAcceleration {
        return Err(Error::WrongThroatClass { expected: "PositiveAcceleration".into(), found: class.label() });
    }
    let n = flow.len();
    let grid = Grid::new(profile.l0(), profile.l1(), n)?;
    let tol = 1e-12 * profile.length();
    if flow.x1.iter().zip(&grid.x).any(|(p, q)| (p - q).abs() > tol) {
        return Err(Error::Domain("background flow is not sampled on a uniform grid through the throat".into()));
    }
    if flow.sonic_index != Some(grid.throat) {
        return Err(Error::Domain("background flow has no sonic node at the throat".into()));
    }
    let g = gas.gamma();
    let ell = (profile.throat_deriv(2, Side::Right) / ((g + 1.0) * profile.a0())).sqrt();
    let b: Vec<f64> = grid.x.iter().map(|&x| profile.b(x)).collect();
    let m2 = flow.m2.clone();
    let r: Vec<f64> = (0..n).map(|i| if i == grid.throat { -ell } else { b[i] / (1.0 - m2[i]) }).collect();
    let mut m2 = m2;
    m2[grid.throat] = 1.0;
    let k11 = m2.iter().map(|m| 1.0 - m).collect();
    let k1 = (0..n).map(|i| (1.0 + m2[i] + (g - 1.0) * m2[i] * m2[i]) * r[i]).collect();
    let dk11 = (0..n).map(|i| m2[i] * (2.0 + (g - 1.0) * m2[i]) * r[i]).collect();
    let du = (0..n).map(|i| -flow.u[i] * r[i]).collect();
    let c2 = flow.rho.iter().map(|&rho| gas.sound_speed_sq(rho)).collect::<Result<Vec<f64>>>()?;
    Ok(Background {
        grid,
        gamma: g,
        b0: flow.b0,
        j: flow.j,
        a: flow.a.clone(),
        b,
        u: flow.u.clone(),
        du,
        rho: flow.rho.clone(),
        c2,
        m2,
        k11,
        k1,
        dk11,
    })
}

/// Offset of the multiplier `d(x1) = 6 (x1 - d0)` and the margin `kappa*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MultiplierData {
    pub d0: f64,
    pub kappa_star: f64,
}

impl MultiplierData {
    pub fn d(&self, x: f64) -> f64 {
        6.0 * (x - self.d0)
    }
}

/// Worst value of `2 k1 + (2j-1) k11'` over the grid and `j = 0..3`.
fn apos1_max(bg: &Background) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for i in 0..bg.grid.len() {
        for j in 0..4 {
            worst = worst.max(2.0 * bg.k1[i] + (2 * j) as f64 * bg.dk11[i] - bg.dk11[i]);
        }
    }
    worst
}

fn apos2_min(bg: &Background, d0: f64) -> f64 {
    let mut worst = f64::INFINITY;
    for (i, &x) in bg.grid.x.iter().enumerate() {
        let d = 6.0 * (x - d0);
        for j in 0..4 {
            let v = (bg.k1[i] + j as f64 * bg.dk11[i]) * d - 0.5 * (bg.dk11[i] * d + 6.0 * bg.k11[i]);
            worst = worst.min(v);
        }
    }
    worst
}

/// Smallest `d0 > L1` with the multiplier inequalities on the grid.
///
/// `d0` is scanned over `L1 + k (L1 - L0)/8`, `k >= 1`, and bisected against
/// the last failing lattice point when there is one.
pub fn find_multiplier(bg: &Background, margin: f64) -> Result<MultiplierData> {
    let kappa_star = -apos1_max(bg);
    if !(kappa_star >= margin) {
        return Err(Error::NoMultiplier);
    }
    let l1 = *bg.grid.x.last().unwrap();
    let step = 0.125 * (l1 - bg.grid.x[0]);
    let ok = |d0: f64| apos2_min(bg, d0) >= 3.0;
    // Lattice points L1 + k step; the bracket needs a failing point above L1.
    let mut failing = None;
    let mut hi = l1 + step;
    let mut k = 0;
    while !ok(hi) {
        failing = Some(hi);
        hi += step;
        k += 1;
        if k > 100_000 {
            return Err(Error::NoMultiplier);
        }
    }
    if let Some(mut lo) = failing {
        while hi - lo > 1e-12 * hi.abs().max(1.0) {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                hi = mid;
            } else {
                lo = mid;
            }
        }
    }
    Ok(MultiplierData { d0: hi, kappa_star })
}

/// Coefficients and source of the linear problem as nodal fields.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub k11: NodalField,
    pub k12: NodalField,
    pub k1: NodalField,
    pub g0: NodalField,
}

impl CoefficientSet {
    /// `x2`-independent background coefficients with source `g0`.
    pub fn background(bg: &Background, basis: &Basis, g0: NodalField) -> Self {
        let nq = basis.nq();
        let n1 = bg.grid.len();
        let line = |v: &[f64]| NodalField { n1, nq, data: v.iter().flat_map(|&c| std::iter::repeat_n(c, nq)).collect() };
        Self { k11: line(&bg.k11), k12: NodalField::zeros(n1, nq), k1: line(&bg.k1), g0 }
    }

    /// Largest wall violation of the compatibility conditions, relative to field scale.
    ///
    /// Wall values and slopes come from the interpolant through the twelve
    /// quadrature nodes nearest each wall.
    pub fn compatibility_residual(&self, basis: &Basis) -> f64 {
        let nodes = &basis.quadrature().nodes;
        let nq = nodes.len();
        let m = nq.min(12);
        let left: Vec<usize> = (0..m).collect();
        let right: Vec<usize> = (nq - m..nq).collect();
        let mut worst: f64 = 0.0;
        let mut check = |f: &NodalField, deriv: bool| {
            let scale = f.max_abs().max(f64::MIN_POSITIVE);
            for i in 0..f.n1 {
                for (idx, wall) in [(&left, -1.0), (&right, 1.0)] {
                    let xs: Vec<f64> = idx.iter().map(|&q| nodes[q]).collect();
                    let ys: Vec<f64> = idx.iter().map(|&q| f.get(i, q)).collect();
                    let v = if deriv { lagrange_deriv(&xs, &ys, wall) } else { lagrange(&xs, &ys, wall) };
                    worst = worst.max(v.abs() / scale);
                }
            }
        };
        check(&self.k12, false);
        check(&self.k11, true);
        check(&self.k1, true);
        check(&self.g0, true);
        worst
    }
}

fn lagrange(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    (0..xs.len())
        .map(|k| ys[k] * (0..xs.len()).filter(|&m| m != k).map(|m| (x - xs[m]) / (xs[k] - xs[m])).product::<f64>())
        .sum()
}

fn lagrange_deriv(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let n = xs.len();
    let mut s = 0.0;
    for k in 0..n {
        let denom: f64 = (0..n).filter(|&m| m != k).map(|m| xs[k] - xs[m]).product();
        let mut num = 0.0;
        for l in (0..n).filter(|&l| l != k) {
            num += (0..n).filter(|&m| m != k && m != l).map(|m| x - xs[m]).product::<f64>();
        }
        s += ys[k] * num / denom;
    }
    s
}

/// Pointwise multiplier inequalities for perturbed coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AdmissibilityReport {
    /// Minimum over the grid of `(k1 + j d1 k11) d - (k11 d)'/2 - d d2 k12`, per `j`.
    pub worst_by_j: [f64; 4],
    pub worst: f64,
    pub pass: bool,
}

pub fn check_admissibility(coeffs: &CoefficientSet, basis: &Basis, grid: &Grid, multiplier: &MultiplierData) -> AdmissibilityReport {
    let dk11 = coeffs.k11.dx1(grid.h);
    let dk12 = OddField::from_nodal(basis, grid, &coeffs.k12).dx2(basis).nodal(basis);
    let mut worst_by_j = [f64::INFINITY; 4];
    for (i, &x) in grid.x.iter().enumerate() {
        let d = multiplier.d(x);
        for q in 0..basis.nq() {
            let (k11, k1) = (coeffs.k11.get(i, q), coeffs.k1.get(i, q));
            let base = -0.5 * (dk11.get(i, q) * d + 6.0 * k11) - d * dk12.get(i, q);
            for (j, w) in worst_by_j.iter_mut().enumerate() {
                *w = w.min((k1 + j as f64 * dk11.get(i, q)) * d + base);
            }
        }
    }
    let worst = worst_by_j.iter().copied().fold(f64::INFINITY, f64::min);
    AdmissibilityReport { worst_by_j, worst, pass: worst >= 2.0 }
}

/// Per-node Galerkin matrices and projected source.
///
/// `a[(i*n + j)*n + m] = int k11 b_j b_m`,
/// `b[(i*n + j)*n + m] = int (2 k12 b_j' + k1 b_j) b_m`, `g[i*n + m] = int G0 b_m`.
#[derive(Debug, Clone)]
pub struct GalerkinSystem {
    pub grid: Grid,
    pub n: usize,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lambda: Vec<f64>,
    pub g: Vec<f64>,
}

impl GalerkinSystem {
    fn idx(&self, i: usize, j: usize, m: usize) -> usize {
        (i * self.n + j) * self.n + m
    }

    pub fn a(&self, i: usize, j: usize, m: usize) -> f64 {
        self.a[self.idx(i, j, m)]
    }

    pub fn b(&self, i: usize, j: usize, m: usize) -> f64 {
        self.b[self.idx(i, j, m)]
    }

    pub fn g(&self, i: usize, m: usize) -> f64 {
        self.g[i * self.n + m]
    }

    /// Same operator with another source.
    pub fn with_source(&self, g: Vec<f64>) -> Self {
        assert_eq!(g.len(), self.g.len());
        Self { g, ..self.clone() }
    }
}

pub fn assemble_galerkin(coeffs: &CoefficientSet, basis: &Basis, grid: &Grid) -> GalerkinSystem {
    let n = basis.n();
    let nq = basis.nq();
    let w = &basis.quadrature().weights;
    let blocks = par::map(grid.len(), |i| {
        let mut a = vec![0.0; n * n];
        let mut b = vec![0.0; n * n];
        let wk11: Vec<f64> = (0..nq).map(|q| w[q] * coeffs.k11.get(i, q)).collect();
        let mut row = vec![0.0; nq];
        for j in 0..n {
            let (bj, dbj) = (basis.b_row(j), basis.db_row(j));
            for q in 0..nq {
                row[q] = w[q] * (2.0 * coeffs.k12.get(i, q) * dbj[q] + coeffs.k1.get(i, q) * bj[q]);
            }
            for m in 0..n {
                let bm = basis.b_row(m);
                b[j * n + m] = row.iter().zip(bm).map(|(p, q)| p * q).sum();
                if m <= j {
                    let v: f64 = (0..nq).map(|q| wk11[q] * bj[q] * bm[q]).sum();
                    a[j * n + m] = v;
                    a[m * n + j] = v;
                }
            }
        }
        (a, b, basis.project(coeffs.g0.row(i)))
    });
    let mut sys = GalerkinSystem {
        grid: grid.clone(),
        n,
        a: Vec::with_capacity(grid.len() * n * n),
        b: Vec::with_capacity(grid.len() * n * n),
        lambda: (0..n).map(|j| basis.lambda(j)).collect(),
        g: Vec::with_capacity(grid.len() * n),
    };
    for (a, b, g) in blocks {
        sys.a.extend(a);
        sys.b.extend(b);
        sys.g.extend(g);
    }
    sys
}

/// The discrete operator at regularization `sigma`.
///
/// Rows: `A(L0) = 0`, one-sided `A''(L0) = 0`, the ODE at every midpoint
/// `x_{i+1/2}`, `i = 1..n1-3`, and one-sided `A''(L1) = 0`. The boundary rows
/// are scaled by `1/h^2`.
pub fn build_operator(sys: &GalerkinSystem, sigma: f64) -> BandMatrix {
    let n = sys.n;
    let n1 = sys.grid.len();
    let h = sys.grid.h;
    let s2 = 1.0 / (h * h);
    let mut mat = BandMatrix::zeros(n1 * n, 4 * n - 1, 3 * n - 1);
    for m in 0..n {
        mat.add(m, m, s2);
        for (k, c) in [2.0, -5.0, 4.0, -1.0].into_iter().enumerate() {
            mat.add(n + m, k * n + m, c * s2);
        }
        for (k, c) in [-1.0, 4.0, -5.0, 2.0].into_iter().enumerate() {
            mat.add((n1 - 1) * n + m, (n1 - 4 + k) * n + m, c * s2);
        }
    }
    let s3 = sigma / (h * h * h);
    for i in 1..=n1 - 3 {
        for m in 0..n {
            let row = (i + 1) * n + m;
            for j in 0..n {
                let am = 0.5 * (sys.a(i, j, m) + sys.a(i + 1, j, m)) * 0.5 * s2;
                let bm = 0.5 * (sys.b(i, j, m) + sys.b(i + 1, j, m)) / h;
                let mut c = [am, -am - bm, -am + bm, am];
                if j == m {
                    let l = 0.5 * sys.lambda[m];
                    c[0] -= s3;
                    c[1] += 3.0 * s3 - l;
                    c[2] += -3.0 * s3 - l;
                    c[3] += s3;
                }
                for (k, v) in c.into_iter().enumerate() {
                    if v != 0.0 {
                        mat.add(row, (i - 1 + k) * n + j, v);
                    }
                }
            }
        }
    }
    mat
}

/// Right-hand side matching [`build_operator`]: midpoint averages of the source.
pub fn operator_rhs(sys: &GalerkinSystem) -> Vec<f64> {
    let n = sys.n;
    let n1 = sys.grid.len();
    let mut rhs = vec![0.0; n1 * n];
    for i in 1..=n1 - 3 {
        for m in 0..n {
            rhs[(i + 1) * n + m] = 0.5 * (sys.g(i, m) + sys.g(i + 1, m));
        }
    }
    rhs
}

/// Solution of one regularized system with its relative residual.
#[derive(Debug, Clone)]
pub struct SigmaSolution {
    pub psi: SpectralField,
    pub sigma: f64,
    pub residual: f64,
}

pub fn solve_sigma_bvp(sys: &GalerkinSystem, sigma: f64) -> Result<SigmaSolution> {
    solve_sigma_lifted(sys, sigma, None)
}

/// Solves for `psi` with homogeneous boundary rows when the unknown of
/// interest is `psi + lift`: the operator applied to `lift` is moved to the
/// interior rows of the right-hand side.
pub fn solve_sigma_lifted(sys: &GalerkinSystem, sigma: f64, lift: Option<&SpectralField>) -> Result<SigmaSolution> {
    let mut rhs = operator_rhs(sys);
    if let Some(l) = lift {
        let n = sys.n;
        let shifted = build_operator(sys, sigma).mul_vec(&l.coeffs);
        for r in 2 * n..rhs.len() - n {
            rhs[r] -= shifted[r];
        }
    }
    solve_with_rhs(sys, sigma, rhs)
}

/// Solves the regularized system for an explicit right-hand side.
pub fn solve_with_rhs(sys: &GalerkinSystem, sigma: f64, rhs: Vec<f64>) -> Result<SigmaSolution> {
    if !(sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
    }
    let mat = build_operator(sys, sigma);
    let x = mat.clone().solve(rhs.clone())?;
    let residual = banded::relative_residual(&mat, &x, &rhs);
    if !(residual <= RESIDUAL_TOL) {
        return Err(Error::NonConvergent(format!("banded solve residual {residual:e} at sigma = {sigma:e}")));
    }
    Ok(SigmaSolution { psi: SpectralField { grid: sys.grid.clone(), n: sys.n, coeffs: x }, sigma, residual })
}

/// Geometric regularization schedule `sigma0, sigma0/2, ...` ending at `sigma_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Schedule {
    pub sigma0: f64,
    pub sigma_min: f64,
}

impl Schedule {
    /// `sigma_min = max(1e-6, c_sigma h^2)`.
    pub fn for_grid(grid: &Grid, sigma0: f64, c_sigma: f64) -> Self {
        Self { sigma0, sigma_min: SIGMA_FLOOR.max(c_sigma * grid.h * grid.h).min(sigma0) }
    }

    pub fn sigmas(&self) -> Vec<f64> {
        let mut out = vec![self.sigma0];
        let mut s = self.sigma0;
        while s > self.sigma_min {
            s = (0.5 * s).max(self.sigma_min);
            out.push(s);
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct ContinuationResult {
    pub psi: SpectralField,
    pub sigmas: Vec<f64>,
    /// `|psi_sigma - psi_{sigma/2}|_{H1,h}` along the schedule.
    pub cauchy: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl ContinuationResult {
    pub fn sigma_min(&self) -> f64 {
        *self.sigmas.last().unwrap()
    }
}

/// Solves along the schedule and returns the `sigma_min` solution.
///
/// Fails with `NonConvergent` unless the Cauchy differences strictly decrease.
pub fn continuation_solve(sys: &GalerkinSystem, basis: &Basis, schedule: &Schedule) -> Result<ContinuationResult> {
    continuation_solve_lifted(sys, basis, schedule, None)
}

/// [`continuation_solve`] with a lift as in [`solve_sigma_lifted`].
pub fn continuation_solve_lifted(
    sys: &GalerkinSystem,
    basis: &Basis,
    schedule: &Schedule,
    lift: Option<&SpectralField>,
) -> Result<ContinuationResult> {
    let sigmas = schedule.sigmas();
    let mut prev: Option<SpectralField> = None;
    let mut cauchy = Vec::new();
    let mut residuals = Vec::new();
    for &s in &sigmas {
        let sol = solve_sigma_lifted(sys, s, lift)?;
        residuals.push(sol.residual);
        if let Some(p) = &prev {
            cauchy.push(sol.psi.axpy(-1.0, p).h1_norm(basis));
        }
        prev = Some(sol.psi);
    }
    let scale = prev.as_ref().map_or(0.0, |p| p.max_abs());
    for w in cauchy.windows(2) {
        // Exact zeros (zero data) are a fixed sequence, not a failure.
        if !(w[1] < w[0]) && !(w[0] <= 1e-14 * scale && w[1] <= 1e-14 * scale) {
            return Err(Error::NonConvergent(format!("sigma-continuation differences not decreasing: {:e} then {:e}", w[0], w[1])));
        }
    }
    Ok(ContinuationResult { psi: prev.unwrap(), sigmas, cauchy, residuals })
}

/// Multiplier-identity bookkeeping for a discrete solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `h sum d_i delta_i . g_i` over the equation midpoints.
    pub lhs: f64,
    /// Sum of the integrated-by-parts terms.
    pub rhs: f64,
    pub interior: f64,
    pub boundary: f64,
    pub imbalance: f64,
    pub relative_imbalance: f64,
    pub h1_sq: f64,
    pub boundary_sq: f64,
    pub g_sq: f64,
    /// `sqrt((|psi|^2_{H1,h} + boundary terms) / |G0|^2_{L2,h})`
    pub ratio: f64,
    /// Bound on `ratio` implied by the identity.
    pub c_star: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Evaluates the multiplier identity with `d = 6 (x1 - d0)`.
///
/// The midpoint equations are multiplied by `h d_i delta_i`, `delta_i` the
/// forward difference of the coefficients, and summed by parts exactly, so
/// `lhs - rhs` only measures how well `psi` solves the discrete system.
pub fn energy_diagnostic(
    psi: &SpectralField,
    sys: &GalerkinSystem,
    coeffs: &CoefficientSet,
    basis: &Basis,
    sigma: f64,
    multiplier: &MultiplierData,
) -> EnergyReport {
    let n = sys.n;
    let n1 = sys.grid.len();
    let h = sys.grid.h;
    let x = &sys.grid.x;
    let dmid: Vec<f64> = (0..n1 - 1).map(|i| multiplier.d(0.5 * (x[i] + x[i + 1]))).collect();
    let delta: Vec<Vec<f64>> = (0..n1 - 1).map(|i| (0..n).map(|m| (psi.get(i + 1, m) - psi.get(i, m)) / h).collect()).collect();
    let e: Vec<Vec<f64>> = (0..n1 - 2).map(|i| (0..n).map(|m| (delta[i + 1][m] - delta[i][m]) / h).collect()).collect();
    let en: Vec<f64> = (0..n1).map(|i| (0..n).map(|m| sys.lambda[m] * psi.get(i, m).powi(2)).sum()).collect();
    let dot = |u: &[f64], v: &[f64]| u.iter().zip(v).map(|(p, q)| p * q).sum::<f64>();
    // u^T M_i v for the midpoint-averaged a (times d_i) and b matrices.
    let quad_a = |i: usize, u: &[f64], v: &[f64]| {
        let mut s = 0.0;
        for j in 0..n {
            for m in 0..n {
                s += u[m] * 0.5 * (sys.a(i, j, m) + sys.a(i + 1, j, m)) * v[j];
            }
        }
        s * dmid[i]
    };
    let quad_b = |i: usize, u: &[f64]| {
        let mut s = 0.0;
        for j in 0..n {
            for m in 0..n {
                s += u[m] * 0.5 * (sys.b(i, j, m) + sys.b(i + 1, j, m)) * u[j];
            }
        }
        s
    };

    let mut lhs = 0.0;
    for i in 1..=n1 - 3 {
        let g: Vec<f64> = (0..n).map(|m| 0.5 * (sys.g(i, m) + sys.g(i + 1, m))).collect();
        lhs += h * dmid[i] * dot(&delta[i], &g);
    }

    let mut interior = 0.0;
    let mut boundary = 0.0;
    // Second-derivative terms.
    boundary += 0.5 * quad_a(n1 - 3, &delta[n1 - 3], &delta[n1 - 2]) - 0.5 * quad_a(1, &delta[0], &delta[1]);
    for i in 1..=n1 - 4 {
        interior += 0.5 * (quad_a(i, &delta[i], &delta[i + 1]) - quad_a(i + 1, &delta[i], &delta[i + 1]));
    }
    // First-derivative terms.
    for i in 1..=n1 - 3 {
        interior += h * dmid[i] * quad_b(i, &delta[i]);
    }
    // Eigenvalue terms.
    boundary += -0.5 * (dmid[n1 - 3] * en[n1 - 2] - dmid[1] * en[1]);
    for i in 2..=n1 - 3 {
        interior += 0.5 * (dmid[i] - dmid[i - 1]) * en[i];
    }
    // Regularization terms.
    for i in 1..=n1 - 4 {
        interior -= sigma * h * dmid[i + 1] * dot(&e[i], &e[i]);
        interior -= sigma * (dmid[i + 1] - dmid[i]) * dot(&delta[i], &e[i]);
    }
    boundary += sigma * (dmid[n1 - 3] * dot(&delta[n1 - 3], &e[n1 - 3]) - dmid[1] * dot(&delta[1], &e[0]));

    let rhs = interior + boundary;
    let imbalance = (lhs - rhs).abs();
    let scale = lhs.abs().max(rhs.abs());
    let relative_imbalance = if scale == 0.0 { 0.0 } else { imbalance / scale };

    let h1 = psi.h1_norm(basis);
    let dpsi = psi.dx1();
    let bsq = |i: usize| (0..n).map(|m| dpsi.get(i, m).powi(2)).sum::<f64>();
    let boundary_sq = bsq(0) + bsq(n1 - 1) + en[n1 - 1];
    let gf = SpectralField { grid: sys.grid.clone(), n, coeffs: sys.g.clone() };
    let g_sq = gf.l2_norm().powi(2);

    let l0 = x[0];
    let l1 = x[n1 - 1];
    let adm = check_admissibility(coeffs, basis, &sys.grid, multiplier);
    let d_min = 6.0 * (multiplier.d0 - l1);
    let d_max = 6.0 * (multiplier.d0 - l0);
    let alpha = (adm.worst_by_j[0] - 9.0 * sigma / d_min).min(3.0);
    let k11_l0 = coeffs.k11.row(0).iter().fold(f64::INFINITY, |m, v| m.min(*v));
    let k11_l1 = coeffs.k11.row(n1 - 1).iter().fold(f64::INFINITY, |m, v| m.min(-v));
    let beta = (0.5 * k11_l0 * d_max).min(0.5 * k11_l1 * d_min).min(0.5 * d_min);
    let cp = 2.0 * (l1 - l0) / std::f64::consts::PI;
    let c_sq = if alpha > 0.0 && beta > 0.0 {
        (2.0 * (1.0 + cp * cp) / alpha).max(1.0 / beta) * d_max * d_max / (2.0 * alpha)
    } else {
        f64::INFINITY
    };
    let ratio = if g_sq == 0.0 { 0.0 } else { ((h1 * h1 + boundary_sq) / g_sq).sqrt() };
    EnergyReport {
        lhs,
        rhs,
        interior,
        boundary,
        imbalance,
        relative_imbalance,
        h1_sq: h1 * h1,
        boundary_sq,
        g_sq,
        ratio,
        c_star: c_sq.sqrt(),
        alpha,
        beta,
    }
}

/// Fraction of the `H1,h` energy outside mode 0.
pub fn cross_mode_fraction(psi: &SpectralField, basis: &Basis, mode: usize) -> f64 {
    let total = psi.h1_norm(basis).powi(2);
    if total == 0.0 {
        return 0.0;
    }
    let mut only = SpectralField::zeros(&psi.grid, psi.n);
    for i in 0..psi.n1() {
        only.coeffs[i * psi.n + mode] = psi.get(i, mode);
    }
    psi.axpy(-1.0, &only).h1_norm(basis).powi(2) / total
}

/// Dense reference solver for a single decoupled mode.
///
/// `sigma A''' + k11 A'' + k1 A' - lambda A = g` with the same midpoint scheme,
/// assembled as a full matrix and eliminated with partial pivoting.
pub fn scalar_reference_solve(k11: &[f64], k1: &[f64], lambda: f64, g: &[f64], sigma: f64, h: f64) -> Result<Vec<f64>> {
    let n = k11.len();
    let mut mat = vec![vec![0.0; n]; n];
    let mut rhs = vec![0.0; n];
    mat[0][0] = 1.0;
    mat[1][..4].copy_from_slice(&[2.0, -5.0, 4.0, -1.0]);
    mat[n - 1][n - 4..].copy_from_slice(&[-1.0, 4.0, -5.0, 2.0]);
    for i in 1..=n - 3 {
        let a = 0.5 * (k11[i] + k11[i + 1]);
        let b = 0.5 * (k1[i] + k1[i + 1]);
        let r = &mut mat[i + 1];
        let st = [-1.0, 3.0, -3.0, 1.0];
        let sd = [1.0, -1.0, -1.0, 1.0];
        let fd = [0.0, -1.0, 1.0, 0.0];
        let av = [0.0, 0.5, 0.5, 0.0];
        for k in 0..4 {
            r[i - 1 + k] = sigma * st[k] / h.powi(3) + a * sd[k] / (2.0 * h * h) + b * fd[k] / h - lambda * av[k];
        }
        rhs[i + 1] = 0.5 * (g[i] + g[i + 1]);
    }
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| mat[x][k].abs().total_cmp(&mat[y][k].abs())).unwrap();
        if mat[p][k] == 0.0 {
            return Err(Error::SingularSystem(k));
        }
        mat.swap(k, p);
        rhs.swap(k, p);
        let (top, bottom) = mat.split_at_mut(k + 1);
        let pivot_row = &top[k];
        for (off, row) in bottom.iter_mut().enumerate() {
            let f = row[k] / pivot_row[k];
            if f != 0.0 {
                for c in k..n {
                    row[c] -= f * pivot_row[c];
                }
                rhs[k + 1 + off] -= f * rhs[k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| mat[k][c] * x[c]).sum();
        x[k] = (rhs[k] - s) / mat[k][k];
    }
    Ok(x)
}

/// Shooting solution from fundamental solutions, for cross-checks at large `sigma`.
///
/// Integrates `(A, A', A'')` with classical RK4 from `L0`, where `A = A'' = 0`
/// and `A'` is free, then fixes `A'(L0)` from `A''(L1) = 0`.
pub fn solve_sigma_shooting(sys: &GalerkinSystem, sigma: f64) -> Result<SpectralField> {
    let n = sys.n;
    let n1 = sys.grid.len();
    let h = sys.grid.h;
    let coef = |i: usize, t: f64, j: usize, m: usize| {
        let (a0, a1) = (sys.a(i, j, m), sys.a((i + 1).min(n1 - 1), j, m));
        let (b0, b1) = (sys.b(i, j, m), sys.b((i + 1).min(n1 - 1), j, m));
        (a0 + t * (a1 - a0), b0 + t * (b1 - b0))
    };
    let src = |i: usize, t: f64, m: usize| {
        let (g0, g1) = (sys.g(i, m), sys.g((i + 1).min(n1 - 1), m));
        g0 + t * (g1 - g0)
    };
    // y = [A (n), A' (n), A'' (n)]
    let rhs = |i: usize, t: f64, y: &[f64], with_source: bool| {
        let mut f = vec![0.0; 3 * n];
        for m in 0..n {
            f[m] = y[n + m];
            f[n + m] = y[2 * n + m];
            let mut s = if with_source { src(i, t, m) } else { 0.0 } + sys.lambda[m] * y[m];
            for j in 0..n {
                let (a, b) = coef(i, t, j, m);
                s -= a * y[2 * n + j] + b * y[n + j];
            }
            f[2 * n + m] = s / sigma;
        }
        f
    };
    let integrate = |y0: Vec<f64>, with_source: bool| -> Result<Vec<Vec<f64>>> {
        let mut out = vec![y0];
        for i in 0..n1 - 1 {
            let y = out.last().unwrap();
            let add = |u: &[f64], v: &[f64], c: f64| u.iter().zip(v).map(|(p, q)| p + c * q).collect::<Vec<f64>>();
            let k1 = rhs(i, 0.0, y, with_source);
            let k2 = rhs(i, 0.5, &add(y, &k1, 0.5 * h), with_source);
            let k3 = rhs(i, 0.5, &add(y, &k2, 0.5 * h), with_source);
            let k4 = rhs(i, 1.0, &add(y, &k3, h), with_source);
            let next: Vec<f64> = (0..3 * n).map(|k| y[k] + h / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])).collect();
            if next.iter().any(|v| !v.is_finite() || v.abs() > 1e12) {
                return Err(Error::NonConvergent(format!("shooting growth too large at sigma = {sigma:e}")));
            }
            out.push(next);
        }
        Ok(out)
    };
    let particular = integrate(vec![0.0; 3 * n], true)?;
    let mut fundamental = Vec::with_capacity(n);
    for k in 0..n {
        let mut y0 = vec![0.0; 3 * n];
        y0[n + k] = 1.0;
        fundamental.push(integrate(y0, false)?);
    }
    // A''(L1) = 0 for the N free slopes.
    let end = n1 - 1;
    let mut m: Vec<Vec<f64>> = (0..n).map(|r| (0..n).map(|k| fundamental[k][end][2 * n + r]).collect()).collect();
    let mut b: Vec<f64> = (0..n).map(|r| -particular[end][2 * n + r]).collect();
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| m[x][k].abs().total_cmp(&m[y][k].abs())).unwrap();
        if m[p][k] == 0.0 {
            return Err(Error::SingularSystem(k));
        }
        m.swap(k, p);
        b.swap(k, p);
        for r in k + 1..n {
            let f = m[r][k] / m[k][k];
            for c in k..n {
                m[r][c] -= f * m[k][c];
            }
            b[r] -= f * b[k];
        }
    }
    let mut mu = vec![0.0; n];
    for k in (0..n).rev() {
        let s: f64 = (k + 1..n).map(|c| m[k][c] * mu[c]).sum();
        mu[k] = (b[k] - s) / m[k][k];
    }
    let mut coeffs = vec![0.0; n1 * n];
    for i in 0..n1 {
        for j in 0..n {
            coeffs[i * n + j] = particular[i][j] + (0..n).map(|k| mu[k] * fundamental[k][i][j]).sum::<f64>();
        }
    }
    Ok(SpectralField { grid: sys.grid.clone(), n, coeffs })
}
