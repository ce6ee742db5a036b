//! Rotational flow by the deformation-curl split and a two-layer fixed point.

use serde::Serialize;

use crate::banded::BandMatrix;
use crate::error::{Error, Result};
use crate::grid::{self, Grid};
use crate::interp::Pchip;
use crate::mixedpde::{Background, CoefficientSet};
use crate::par;
use crate::potentialflow::{self, dx2_even, lift_boundary, nodal_l2, residual_l2, sonic_curve, BoundaryData, IterationHistory, SonicCurve, VelocityField2D};
use crate::problem::Setup;
use crate::spectral::{Basis, NodalField, OddField, SpectralField};

/// Pointwise perturbation state with the background it sits on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalState {
    pub gamma: f64,
    pub b0: f64,
    /// `a'/a`
    pub b: f64,
    pub ubar: f64,
    pub dubar: f64,
    /// `c^2` of the background.
    pub c2bar: f64,
    pub v1: f64,
    pub v2: f64,
    pub q: f64,
    pub dq1: f64,
    pub dq2: f64,
}

impl LocalState {
    pub fn c2(&self) -> f64 {
        let u1 = self.ubar + self.v1;
        (self.gamma - 1.0) * (self.b0 + self.q - 0.5 * (u1 * u1 + self.v2 * self.v2))
    }

    /// `c^2 - v2^2`
    pub fn denom(&self) -> f64 {
        self.c2() - self.v2 * self.v2
    }

    fn check(&self) -> Result<()> {
        let (c2, d) = (self.c2(), self.denom());
        if !(c2 > 0.0 && d > 0.0 && self.ubar + self.v1 > 0.0) {
            return Err(Error::TrustRegionExceeded(format!(
                "c^2 = {c2:e}, c^2 - v2^2 = {d:e}, u1 = {:e}",
                self.ubar + self.v1
            )));
        }
        Ok(())
    }

    pub fn k11(&self) -> f64 {
        let u1 = self.ubar + self.v1;
        (self.c2() - u1 * u1) / self.denom()
    }

    pub fn k12(&self) -> f64 {
        -(self.ubar + self.v1) * self.v2 / self.denom()
    }

    /// The three printed groups of `F1`: linear in `Q`, quadratic, cross terms,
    /// plus the transport of `Q`.
    pub fn f1_printed(&self) -> f64 {
        let g = self.gamma;
        let (u, du, cb) = (self.ubar, self.dubar, self.c2bar);
        let (v1, v2, q) = (self.v1, self.v2, self.q);
        let d = self.denom();
        let lin_q = -(g - 1.0) * u * u * du * q / (cb * cb);
        let quad = -du / (cb * d) * ((cb - u * u) * v2 * v2 - (g - 1.0) * (self.b0 * v1 * v1 + 0.5 * u * u * v2 * v2));
        let cross = (g - 1.0) * du / (cb * cb * d) * (d - cb) * (u * u * q - (u * u + 2.0 * cb / (g - 1.0)) * u * v1);
        let transport = -((u + v1) * self.dq1 + v2 * self.dq2) / d;
        lin_q + quad + cross + transport
    }

    /// `F1` consistent with the first-order system.
    ///
    /// The printed groups omit `-b u1 v2^2 / (c^2 - v2^2)`, which comes from
    /// `b c^2 u1 / (c^2 - v2^2) - b u1` and is added here.
    pub fn f1(&self) -> f64 {
        self.f1_printed() - self.b * (self.ubar + self.v1) * self.v2 * self.v2 / self.denom()
    }

    pub fn f2(&self) -> f64 {
        -self.dq2 / (self.ubar + self.v1)
    }
}

/// Right-hand sides of the first-order system.
#[derive(Debug, Clone)]
pub struct SourceTerms {
    pub f1: NodalField,
    pub f2: NodalField,
    pub k11: NodalField,
    pub k12: NodalField,
}

/// Node-wise state for [`source_terms`].
#[derive(Debug, Clone)]
pub struct PerturbationNodal {
    pub v1: NodalField,
    pub v2: NodalField,
    pub q: NodalField,
    pub dq1: NodalField,
    pub dq2: NodalField,
}

impl PerturbationNodal {
    pub fn new(v1: &SpectralField, v2: &OddField, q: &NodalField, basis: &Basis) -> Self {
        let grid = &v1.grid;
        Self { v1: v1.nodal(basis), v2: v2.nodal(basis), q: q.clone(), dq1: q.dx1(grid.h), dq2: dx2_even(q, grid, basis) }
    }

    fn local(&self, bg: &Background, i: usize, q: usize) -> LocalState {
        LocalState {
            gamma: bg.gamma,
            b0: bg.b0,
            b: bg.b[i],
            ubar: bg.u[i],
            dubar: bg.du[i],
            c2bar: bg.c2[i],
            v1: self.v1.get(i, q),
            v2: self.v2.get(i, q),
            q: self.q.get(i, q),
            dq1: self.dq1.get(i, q),
            dq2: self.dq2.get(i, q),
        }
    }
}

/// `F1`, `F2` and the frozen `k11`, `k12` at every node.
pub fn source_terms(state: &PerturbationNodal, bg: &Background) -> Result<SourceTerms> {
    let (n1, nq) = (state.v1.n1, state.v1.nq);
    let mut out = SourceTerms {
        f1: NodalField::zeros(n1, nq),
        f2: NodalField::zeros(n1, nq),
        k11: NodalField::zeros(n1, nq),
        k12: NodalField::zeros(n1, nq),
    };
    for i in 0..n1 {
        for q in 0..nq {
            let s = state.local(bg, i, q);
            s.check().map_err(|e| match e {
                Error::TrustRegionExceeded(m) => Error::TrustRegionExceeded(format!("{m} at x1 = {}", bg.grid.x[i])),
                e => e,
            })?;
            out.f1.set(i, q, s.f1());
            out.f2.set(i, q, s.f2());
            out.k11.set(i, q, s.k11());
            out.k12.set(i, q, s.k12());
        }
    }
    Ok(out)
}

/// Solves `psi'' - mu psi = f` with `psi'(L0) = psi'(L1) = 0`.
///
/// Interior rows are the three-point Laplacian; end rows are the second-order
/// one-sided derivative, so [`grid::d1`] of the result vanishes at both ends.
pub fn neumann_mode_solve(f: &[f64], mu: f64, h: f64) -> Result<Vec<f64>> {
    let n = f.len();
    let h2 = h * h;
    let mut m = BandMatrix::zeros(n, 2, 2);
    let mut rhs = f.to_vec();
    for (k, c) in [-3.0, 4.0, -1.0].into_iter().enumerate() {
        m.add(0, k, c / (2.0 * h2));
        m.add(n - 1, n - 1 - k, -c / (2.0 * h2));
    }
    rhs[0] = 0.0;
    rhs[n - 1] = 0.0;
    for i in 1..n - 1 {
        m.add(i, i - 1, 1.0 / h2);
        m.add(i, i, -2.0 / h2 - mu);
        m.add(i, i + 1, 1.0 / h2);
    }
    m.solve(rhs)
}

/// `Delta psi1 = F2` with Neumann ends and zero wall values, on the odd family.
pub fn poisson_solve(f2: &NodalField, grid: &Grid, basis: &Basis) -> Result<OddField> {
    let fhat = OddField::from_nodal(basis, grid, f2);
    let n = basis.n();
    let cols = par::map(n, |j| neumann_mode_solve(&fhat.mode(j), basis.lambda(j + 1), grid.h));
    let mut out = OddField::zeros(grid, n);
    for (j, col) in cols.into_iter().enumerate() {
        for (i, v) in col?.into_iter().enumerate() {
            out.coeffs[i * n + j] = v;
        }
    }
    Ok(out)
}

/// `Delta psi1` with the same stencils as the solve, sampled at the nodes.
pub fn laplacian_odd(psi1: &OddField, basis: &Basis) -> NodalField {
    psi1.dx11().axpy(1.0, &psi1.dx22(basis)).nodal(basis)
}

/// `F3 = F1 + (k11 - 1) d12 psi1 - k12 (d11 psi1 - d22 psi1) + kbar1 d2 psi1`.
pub fn f3_source(src: &SourceTerms, psi1: &OddField, bg: &Background, basis: &Basis) -> NodalField {
    let d12 = psi1.dx1().dx2(basis).nodal(basis);
    let d11 = psi1.dx11().nodal(basis);
    let d22 = psi1.dx22(basis).nodal(basis);
    let d2 = psi1.dx2(basis).nodal(basis);
    let mut out = NodalField::zeros(src.f1.n1, src.f1.nq);
    for i in 0..out.n1 {
        for q in 0..out.nq {
            let (k11, k12) = (src.k11.get(i, q), src.k12.get(i, q));
            let v = src.f1.get(i, q) + (k11 - 1.0) * d12.get(i, q) - k12 * (d11.get(i, q) - d22.get(i, q)) + bg.k1[i] * d2.get(i, q);
            out.set(i, q, v);
        }
    }
    out
}

/// Frozen coefficient set of the `psi2` problem.
pub fn psi2_coefficients(src: &SourceTerms, psi1: &OddField, bg: &Background, basis: &Basis) -> CoefficientSet {
    let nq = basis.nq();
    let k1 = NodalField { n1: bg.grid.len(), nq, data: bg.k1.iter().flat_map(|&c| std::iter::repeat_n(c, nq)).collect() };
    CoefficientSet { k11: src.k11.clone(), k12: src.k12.clone(), k1, g0: f3_source(src, psi1, bg, basis) }
}

/// `v1 = d1 psi2 - d2 psi1`, `v2 = d2 psi2 + d1 psi1`.
pub fn reassemble(psi1: &OddField, psi2: &SpectralField, basis: &Basis) -> (SpectralField, OddField) {
    let v1 = psi2.dx1().axpy(-1.0, &psi1.dx2(basis));
    let v2 = psi2.diff_x2(basis).axpy(1.0, &psi1.dx1());
    (v1, v2)
}

/// Output of one inner step.
#[derive(Debug, Clone)]
pub struct InnerStep {
    pub v1: SpectralField,
    pub v2: OddField,
    pub psi1: OddField,
    /// Homogeneous part of `psi2`.
    pub psi2_hom: SpectralField,
    pub psi2: SpectralField,
}

/// `psi2 = psi + eps psi0` with `psi` from the mixed solver.
pub fn mixed_solve_psi2(
    setup: &Setup,
    coeffs: &CoefficientSet,
    psi0: &SpectralField,
    eps: f64,
    full: bool,
    history: &mut IterationHistory,
) -> Result<(SpectralField, SpectralField)> {
    let lift = psi0.scale(eps);
    let psi = potentialflow::linear_step(setup, coeffs, &lift, full, history)?;
    let psi2 = psi.axpy(1.0, &lift);
    Ok((psi, psi2))
}

/// The inner map `T^Q`.
pub fn inner_step(
    setup: &Setup,
    v1: &SpectralField,
    v2: &OddField,
    q: &NodalField,
    psi0: &SpectralField,
    eps: f64,
    full: bool,
    history: &mut IterationHistory,
) -> Result<InnerStep> {
    let basis = &setup.basis;
    let nodal = PerturbationNodal::new(v1, v2, q, basis);
    let src = source_terms(&nodal, &setup.bg)?;
    let psi1 = poisson_solve(&src.f2, &setup.grid, basis)?;
    let coeffs = psi2_coefficients(&src, &psi1, &setup.bg, basis);
    let (psi2_hom, psi2) = mixed_solve_psi2(setup, &coeffs, psi0, eps, full, history)?;
    let (v1, v2) = reassemble(&psi1, &psi2, basis);
    Ok(InnerStep { v1, v2, psi1, psi2_hom, psi2 })
}

/// `L2,h` distance between two velocity perturbations.
fn velocity_distance(a: (&SpectralField, &OddField), b: (&SpectralField, &OddField)) -> f64 {
    let d1 = a.0.axpy(-1.0, b.0).l2_norm();
    let d2 = a.1.axpy(-1.0, b.1).l2_norm();
    d1.hypot(d2)
}

/// `H1,h` norm of a nodal field with vanishing wall slope.
pub fn nodal_h1(f: &NodalField, grid: &Grid, basis: &Basis) -> f64 {
    let l2 = nodal_l2(f, grid, basis);
    let d1 = nodal_l2(&f.dx1(grid.h), grid, basis);
    let d2 = nodal_l2(&dx2_even(f, grid, basis), grid, basis);
    (l2 * l2 + d1 * d1 + d2 * d2).sqrt()
}

/// Density with Bernoulli function `B0 + Q`.
fn density(setup: &Setup, v1: &NodalField, v2: &NodalField, q: &NodalField) -> Result<NodalField> {
    let bg = &setup.bg;
    let mut rho = NodalField::zeros(v1.n1, v1.nq);
    for i in 0..v1.n1 {
        for k in 0..v1.nq {
            let u1 = bg.u[i] + v1.get(i, k);
            let s2 = u1 * u1 + v2.get(i, k).powi(2);
            let r = setup.gas.density_from_bernoulli(bg.b0 + q.get(i, k), s2).map_err(|e| Error::TrustRegionExceeded(e.to_string()))?;
            rho.set(i, k, r);
        }
    }
    Ok(rho)
}

/// Stream function on the nodes and on both walls.
#[derive(Debug, Clone)]
pub struct StreamFunction {
    pub nodal: NodalField,
    /// `phi(x1, -1)`
    pub lower: Vec<f64>,
    /// `phi(x1, 1)`
    pub upper: Vec<f64>,
}

impl StreamFunction {
    /// Entrance profile including both walls, as `(x2, phi)` knots.
    pub fn entrance(&self, basis: &Basis) -> (Vec<f64>, Vec<f64>) {
        let nodes = &basis.quadrature().nodes;
        let mut x2 = Vec::with_capacity(nodes.len() + 2);
        let mut phi = Vec::with_capacity(nodes.len() + 2);
        x2.push(-1.0);
        phi.push(self.lower[0]);
        x2.extend_from_slice(nodes);
        phi.extend_from_slice(self.nodal.row(0));
        x2.push(1.0);
        phi.push(self.upper[0]);
        (x2, phi)
    }
}

/// `phi = int_{-1}^{x2} a rho u1 (L0, .) - int_{L0}^{x1} a rho v2`.
///
/// The entrance integral uses the Neumann expansion of the entrance flux;
/// the `x1` integral is composite Simpson on the grid.
pub fn stream_function(setup: &Setup, v1: &SpectralField, v2: &OddField, q: &NodalField) -> Result<StreamFunction> {
    let (grid, basis, bg) = (&setup.grid, &setup.basis, &setup.bg);
    let v1n = v1.nodal(basis);
    let v2n = v2.nodal(basis);
    let rho = density(setup, &v1n, &v2n, q)?;
    let nq = basis.nq();
    let n1 = grid.len();
    let flux_in: Vec<f64> = (0..nq).map(|k| bg.a[0] * rho.get(0, k) * (bg.u[0] + v1n.get(0, k))).collect();
    let coeffs = basis.project(&flux_in);
    let nodes = &basis.quadrature().nodes;
    let entrance: Vec<f64> = nodes.iter().map(|&x2| basis.eval_integral(&coeffs, x2)).collect();
    let top = basis.eval_integral(&coeffs, 1.0);
    let mut nodal = NodalField::zeros(n1, nq);
    for k in 0..nq {
        let cross: Vec<f64> = (0..n1).map(|i| bg.a[i] * rho.get(i, k) * v2n.get(i, k)).collect();
        for (i, c) in grid::cumulative_simpson(&cross, grid.h).into_iter().enumerate() {
            nodal.set(i, k, entrance[k] - c);
        }
    }
    // Wall flux a rho v2 with v2 from the odd expansion and rho from the nearest node.
    let wall = |x2: f64, edge: usize| -> Vec<f64> {
        let cross: Vec<f64> = (0..n1).map(|i| bg.a[i] * rho.get(i, edge) * basis.eval_odd(v2.at(i), x2)).collect();
        grid::cumulative_simpson(&cross, grid.h)
    };
    let lower: Vec<f64> = wall(-1.0, 0).into_iter().map(|c| -c).collect();
    let upper: Vec<f64> = wall(1.0, nq - 1).into_iter().map(|c| top - c).collect();
    Ok(StreamFunction { nodal, lower, upper })
}

/// `Q = eps B_in(phi_{L0}^{-1}(phi))` at the nodes.
pub fn transport_q(phi: &StreamFunction, bdata: &BoundaryData, basis: &Basis) -> Result<NodalField> {
    let (x2, prof) = phi.entrance(basis);
    if prof.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::NonMonotoneEntrance);
    }
    let (lo, hi) = (prof[0], prof[prof.len() - 1]);
    let inverse = Pchip::new(prof, x2)?;
    let clamp_tol = 1e-12 * (hi - lo).abs().max(1.0);
    let mut out = phi.nodal.clone();
    for v in out.data.iter_mut() {
        let p = if *v < lo && *v > lo - clamp_tol {
            lo
        } else if *v > hi && *v < hi + clamp_tol {
            hi
        } else {
            *v
        };
        *v = bdata.eps * bdata.b_in(inverse.eval(p));
    }
    Ok(out)
}

/// Converged rotational state.
#[derive(Debug, Clone)]
pub struct EulerState2D {
    pub v1: SpectralField,
    pub v2: OddField,
    pub q: NodalField,
    pub phi: StreamFunction,
    pub psi1: OddField,
    pub psi2: SpectralField,
    pub field: VelocityField2D,
    /// `d1 u2 - d2 u1`
    pub omega: NodalField,
    pub outer: IterationHistory,
    pub inner: Vec<IterationHistory>,
    pub eps: f64,
}

fn broadcast(basis: &Basis, n1: usize, f: impl Fn(f64) -> f64) -> NodalField {
    let nq = basis.nq();
    let row: Vec<f64> = basis.quadrature().nodes.iter().map(|&x| f(x)).collect();
    NodalField { n1, nq, data: (0..n1).flat_map(|_| row.iter().copied()).collect() }
}

/// Two-layer iteration: inner Picard on `v` for frozen `Q`, outer transport of `Q`.
pub fn two_layer_solve(setup: &Setup, bdata: &BoundaryData) -> Result<EulerState2D> {
    let (grid, basis) = (&setup.grid, &setup.basis);
    let n1 = grid.len();
    let psi0 = lift_boundary(bdata, basis, grid);
    let mut v1 = SpectralField::zeros(grid, basis.n());
    let mut v2 = OddField::zeros(grid, basis.n());
    let mut q = broadcast(basis, n1, |x2| bdata.eps * bdata.b_in(x2));
    let mut outer = IterationHistory::default();
    let mut inners = Vec::new();
    let mut first = true;
    let mut last: Option<InnerStep> = None;
    for _ in 0..setup.params.max_iter {
        let mut inner = IterationHistory::default();
        let mut converged = false;
        for _ in 0..setup.params.max_iter {
            let full = first || setup.params.full_continuation;
            first = false;
            let step = inner_step(setup, &v1, &v2, &q, &psi0, bdata.eps, full, &mut inner)?;
            let diff = velocity_distance((&step.v1, &step.v2), (&v1, &v2));
            v1 = step.v1.clone();
            v2 = step.v2.clone();
            last = Some(step);
            inner.push(diff);
            if diff <= setup.params.tol_inner {
                converged = true;
                break;
            }
            if inner.stalled() {
                return Err(Error::NoContraction(format!("inner factors {:?}", &inner.factors[inner.factors.len() - 3..])));
            }
        }
        if !converged {
            return Err(Error::NonConvergent(format!("inner iteration stopped after {} iterates", inner.iterations)));
        }
        inners.push(inner);
        let phi = stream_function(setup, &v1, &v2, &q)?;
        let q_next = transport_q(&phi, bdata, basis)?;
        let diff = nodal_h1(&q_next.zip(&q, |a, b| a - b), grid, basis);
        q = q_next;
        outer.push(diff);
        if diff <= setup.params.tol_outer {
            let step = last.expect("at least one inner step");
            return finish(setup, bdata, v1, v2, q, step, outer, inners);
        }
        if outer.stalled() {
            return Err(Error::NoContraction(format!("outer factors {:?}", &outer.factors[outer.factors.len() - 3..])));
        }
    }
    Err(Error::NonConvergent(format!("outer iteration stopped after {} iterates", outer.iterations)))
}

#[allow(clippy::too_many_arguments)]
fn finish(
    setup: &Setup,
    bdata: &BoundaryData,
    v1: SpectralField,
    v2: OddField,
    q: NodalField,
    step: InnerStep,
    outer: IterationHistory,
    inner: Vec<IterationHistory>,
) -> Result<EulerState2D> {
    let (grid, basis, bg) = (&setup.grid, &setup.basis, &setup.bg);
    let mut u1 = v1.nodal(basis);
    for i in 0..grid.len() {
        u1.row_mut(i).iter_mut().for_each(|v| *v += bg.u[i]);
    }
    let u2 = v2.nodal(basis);
    let b = q.map(|v| bg.b0 + v);
    let field = VelocityField2D::from_velocity(setup, u1, u2, b)?;
    let omega = field.u2.dx1(grid.h).zip(&v1.nodal_dx2(basis), |a, b| a - b);
    let phi = stream_function(setup, &v1, &v2, &q)?;
    Ok(EulerState2D { v1, v2, q, phi, psi1: step.psi1, psi2: step.psi2, field, omega, outer, inner, eps: bdata.eps })
}

/// Residuals of a converged rotational state in `L2,h` over the PDE nodes
/// (see [`potentialflow::residual_l2`]), unless stated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RotationalDiagnostics {
    /// `max |Q - eps B_in(phi_{L0}^{-1}(phi))|`
    pub collapse: f64,
    pub mass: f64,
    /// `d1 u2 - d2 u1 + d2 B / u1`
    pub vorticity: f64,
    pub momentum1: f64,
    pub momentum2: f64,
    /// `u1 d1 Q + u2 d2 Q`
    pub transport: f64,
    pub omega: f64,
    /// `max |phi(x1, -1)|` and `max |phi(x1, 1) - phi(L0, 1)|`.
    pub wall_stream: f64,
}

pub fn diagnostics(setup: &Setup, state: &EulerState2D, bdata: &BoundaryData) -> Result<RotationalDiagnostics> {
    let (grid, basis, bg) = (&setup.grid, &setup.basis, &setup.bg);
    let f = &state.field;
    let q_again = transport_q(&state.phi, bdata, basis)?;
    let collapse = q_again.zip(&state.q, |a, b| (a - b).abs()).max_abs();
    let with_area = |u: &NodalField| {
        let mut out = u.zip(&f.rho, |a, b| a * b);
        for i in 0..grid.len() {
            out.row_mut(i).iter_mut().for_each(|v| *v *= bg.a[i]);
        }
        out
    };
    let mass = residual_l2(&potentialflow::divergence(&with_area(&f.u1), &with_area(&f.u2), grid, basis), grid, basis);
    let db2 = dx2_even(&f.b, grid, basis);
    let vort = state.omega.zip(&db2.zip(&f.u1, |a, b| a / b), |a, b| a + b);
    let vorticity = residual_l2(&vort, grid, basis);
    let p = f.pressure(setup.gas.gamma());
    let (d1u1, d2u1) = (f.u1.dx1(grid.h), dx2_even(&f.u1, grid, basis));
    let (d1u2, d2u2) = (f.u2.dx1(grid.h), state.v2.dx2(basis).nodal(basis));
    let (d1p, d2p) = (p.dx1(grid.h), dx2_even(&p, grid, basis));
    let mut m1 = NodalField::zeros(f.u1.n1, f.u1.nq);
    let mut m2 = m1.clone();
    for k in 0..m1.data.len() {
        let (r, a, c) = (f.rho.data[k], f.u1.data[k], f.u2.data[k]);
        m1.data[k] = r * (a * d1u1.data[k] + c * d2u1.data[k]) + d1p.data[k];
        m2.data[k] = r * (a * d1u2.data[k] + c * d2u2.data[k]) + d2p.data[k];
    }
    let (d1q, d2q) = (state.q.dx1(grid.h), dx2_even(&state.q, grid, basis));
    let mut tr = NodalField::zeros(f.u1.n1, f.u1.nq);
    for k in 0..tr.data.len() {
        tr.data[k] = f.u1.data[k] * d1q.data[k] + f.u2.data[k] * d2q.data[k];
    }
    let phi = &state.phi;
    let wall_stream = phi.lower.iter().map(|v| v.abs()).chain(phi.upper.iter().map(|v| (v - phi.upper[0]).abs())).fold(0.0, f64::max);
    Ok(RotationalDiagnostics {
        collapse,
        mass,
        vorticity,
        momentum1: residual_l2(&m1, grid, basis),
        momentum2: residual_l2(&m2, grid, basis),
        transport: residual_l2(&tr, grid, basis),
        omega: nodal_l2(&state.omega, grid, basis),
        wall_stream,
    })
}

/// `|(u1 - u_bar, u2, B - B0)|_{H1,h}`.
pub fn perturbation_h1(setup: &Setup, state: &EulerState2D) -> f64 {
    let basis = &setup.basis;
    let a = state.v1.h1_norm(basis);
    let b = state.v2.h1_norm(basis);
    let c = nodal_h1(&state.q, &setup.grid, basis);
    (a * a + b * b + c * c).sqrt()
}

pub fn state_sonic_curve(setup: &Setup, state: &EulerState2D) -> Result<SonicCurve> {
    sonic_curve(&state.field, &setup.basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gas::GasModel;
    use crate::nozzle::NozzleProfile;
    use crate::problem::SolverParams;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn setup(n1: usize, n: usize) -> Setup {
        let p = NozzleProfile::polynomial(-1.0, 1.0, vec![1.0, 0.0, 1.0]).unwrap();
        let g = GasModel::new(2.0).unwrap();
        Setup::new(&p, &g, 1.0, None, SolverParams { n1, n_modes: n, ..Default::default() }).unwrap()
    }

    fn local(s: &Setup, i: usize) -> LocalState {
        let bg = &s.bg;
        LocalState { gamma: bg.gamma, b0: bg.b0, b: bg.b[i], ubar: bg.u[i], dubar: bg.du[i], c2bar: bg.c2[i], v1: 0.0, v2: 0.0, q: 0.0, dq1: 0.0, dq2: 0.0 }
    }

    #[test]
    fn zero_perturbation_has_zero_sources() {
        let s = setup(101, 4);
        for i in 0..101 {
            let l = local(&s, i);
            assert_eq!(l.f1(), 0.0);
            assert_eq!(l.f2(), 0.0);
            assert!((l.k11() - s.bg.k11[i]).abs() < 1e-13);
        }
    }

    #[test]
    fn x1_only_bernoulli_linear_part() {
        // Linear part in Q: -(g-1) u^2 u' Q / c^4 - u dQ1 / c^2.
        let s = setup(101, 4);
        for i in [3, 30, 50, 77] {
            let base = LocalState { q: 0.3, dq1: -0.7, ..local(&s, i) };
            let (u, du, c2, g) = (base.ubar, base.dubar, base.c2bar, base.gamma);
            let lin = |t: f64| -(g - 1.0) * u * u * du * t * 0.3 / (c2 * c2) + u * t * 0.7 / c2;
            let err = |t: f64| {
                let l = LocalState { q: 0.3 * t, dq1: -0.7 * t, ..base };
                assert_eq!(l.f2(), 0.0);
                (l.f1() - lin(t)).abs()
            };
            let (e1, e2) = (err(1e-3), err(5e-4));
            assert!((e1 / e2 - 4.0).abs() < 0.05, "{e1} {e2}");
        }
    }

    #[test]
    fn velocity_part_is_quadratic() {
        let s = setup(101, 4);
        for i in [3, 50, 90] {
            let f = |t: f64| LocalState { v1: 0.4 * t, v2: -0.9 * t, ..local(&s, i) }.f1();
            let (a, b) = (f(1e-3), f(5e-4));
            assert!((a / b - 4.0).abs() < 0.02, "{a} {b}");
        }
    }

    proptest! {
        // Oracle: the first equation rewritten with u = u_bar + v gives
        // F1 = kbar1 v1 - k11 u_bar' - b c^2 u1 / D - (u1 d1Q + u2 d2Q) / D.
        #[test]
        fn f1_matches_direct_rearrangement(
            i in 0usize..201, v1 in -0.05f64..0.05, v2 in -0.05f64..0.05,
            q in -0.05f64..0.05, dq1 in -1.0f64..1.0, dq2 in -1.0f64..1.0,
        ) {
            let s = setup(201, 2);
            let l = LocalState { v1, v2, q, dq1, dq2, ..local(&s, i) };
            let d = l.denom();
            let u1 = l.ubar + v1;
            let direct = s.bg.k1[i] * v1 - l.k11() * l.dubar - l.b * l.c2() * u1 / d - (u1 * dq1 + v2 * dq2) / d;
            prop_assert!((l.f1() - direct).abs() < 1e-11 * (1.0 + direct.abs()), "{} {}", l.f1(), direct);
        }
    }

    #[test]
    fn printed_groups_differ_by_the_wall_normal_term() {
        let s = setup(201, 2);
        for i in [0, 60, 100, 180] {
            let l = LocalState { v1: 0.01, v2: 0.02, q: 0.003, dq1: 0.1, dq2: -0.2, ..local(&s, i) };
            let gap = l.f1_printed() - l.f1();
            assert!((gap - l.b * (l.ubar + 0.01) * 4e-4 / l.denom()).abs() < 1e-16);
        }
    }

    #[test]
    fn neumann_solve_manufactured() {
        let err = |n: usize| {
            let g = Grid::new(-1.0, 1.0, n).unwrap();
            let mu = 2.0;
            let exact: Vec<f64> = g.x.iter().map(|&x| (PI * (x + 1.0) / 2.0).cos()).collect();
            let f: Vec<f64> = exact.iter().map(|e| -(PI * PI / 4.0 + mu) * e).collect();
            let psi = neumann_mode_solve(&f, mu, g.h).unwrap();
            let d = grid::d1(&psi, g.h);
            assert!(d[0].abs() < 1e-10 && d[n - 1].abs() < 1e-10);
            psi.iter().zip(&exact).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let order = (err(201) / err(401)).log2();
        assert!((order - 2.0).abs() < 0.1, "{order}");
    }

    #[test]
    fn poisson_zero_and_manufactured() {
        let errs: Vec<f64> = [101, 201, 401]
            .iter()
            .map(|&n1| {
                let s = setup(n1, 4);
                let (grid, basis) = (&s.grid, &s.basis);
                let z = poisson_solve(&NodalField::zeros(n1, basis.nq()), grid, basis).unwrap();
                assert!(z.coeffs.iter().all(|v| *v == 0.0));
                let shape = |x1: f64, x2: f64| (PI * (x1 + 1.0) / 2.0).cos() * (PI * (x2 + 1.0) / 2.0).sin();
                let k = -(PI * PI / 4.0 + PI * PI / 4.0);
                let f2 = NodalField::from_fn(grid, basis, |x, y| k * shape(x, y));
                let psi = poisson_solve(&f2, grid, basis).unwrap();
                let res = laplacian_odd(&psi, basis).zip(&f2, |a, b| a - b);
                let e = psi.nodal(basis).zip(&NodalField::from_fn(grid, basis, shape), |a, b| a - b);
                let d1 = psi.dx1();
                for j in 0..4 {
                    let m = d1.mode(j);
                    assert!(m[0].abs() < 1e-10 && m[n1 - 1].abs() < 1e-10);
                }
                let _ = res;
                e.max_abs()
            })
            .collect();
        for w in errs.windows(2) {
            assert!((w[0] / w[1]).log2() > 1.8, "{errs:?}");
        }
    }

    #[test]
    fn poisson_residual_is_second_order() {
        let res: Vec<f64> = [101, 201, 401]
            .iter()
            .map(|&n1| {
                let s = setup(n1, 6);
                let shape = |x1: f64, x2: f64| (PI * (x1 + 1.0) / 2.0).cos() * (PI * (x2 + 1.0) / 2.0).sin() * (1.0 + 0.3 * x1);
                let f2 = NodalField::from_fn(&s.grid, &s.basis, |x, y| {
                    let h = 1e-4;
                    (shape(x + h, y) + shape(x - h, y) + shape(x, y + h) + shape(x, y - h) - 4.0 * shape(x, y)) / (h * h)
                });
                let psi = poisson_solve(&f2, &s.grid, &s.basis).unwrap();
                let r = laplacian_odd(&psi, &s.basis).zip(&f2, |a, b| a - b);
                // Interior rows reproduce the projected source.
                let proj = OddField::from_nodal(&s.basis, &s.grid, &f2).nodal(&s.basis);
                let inner = laplacian_odd(&psi, &s.basis).zip(&proj, |a, b| a - b);
                let inner_max = (1..n1 - 1).flat_map(|i| inner.row(i).to_vec()).fold(0.0f64, |m, v| m.max(v.abs()));
                assert!(inner_max < 1e-7, "{inner_max}");
                nodal_l2(&r, &s.grid, &s.basis)
            })
            .collect();
        assert!(res[2] < res[0], "{res:?}");
    }

    #[test]
    fn transport_examples() {
        let s = setup(101, 6);
        let bd = BoundaryData { eps: 1e-3, h1_sin: vec![], bin_cos: vec![0.0, 1.0] };
        let z1 = SpectralField::zeros(&s.grid, 6);
        let z2 = OddField::zeros(&s.grid, 6);
        let q0 = NodalField::zeros(101, s.basis.nq());
        let phi = stream_function(&s, &z1, &z2, &q0).unwrap();
        let j = s.bg.a[0] * s.bg.rho[0] * s.bg.u[0];
        for i in (0..101).step_by(10) {
            for (k, &x2) in s.basis.quadrature().nodes.iter().enumerate().step_by(17) {
                assert!((phi.nodal.get(i, k) - j * (x2 + 1.0)).abs() < 1e-12 * j);
            }
        }
        assert!(phi.lower.iter().all(|v| v.abs() < 1e-14));
        let q = transport_q(&phi, &bd, &s.basis).unwrap();
        for (k, &x2) in s.basis.quadrature().nodes.iter().enumerate() {
            assert!((q.get(50, k) - 1e-3 * (PI * x2).cos()).abs() < 1e-13);
        }
        let zero = transport_q(&phi, &bd.scaled(0.0), &s.basis).unwrap();
        assert!(zero.data.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn potential_branch_consistency() {
        // Q = 0: the two-layer fixed point and the potential solution solve the same equation.
        let s = setup(201, 8);
        let bd = BoundaryData { eps: 1e-3, h1_sin: vec![1.0], bin_cos: vec![] };
        let rot = two_layer_solve(&s, &bd).unwrap();
        let pot = potentialflow::picard_solve(&s, &bd).unwrap();
        assert!(rot.psi1.max_abs() == 0.0);
        assert_eq!(rot.outer.iterations, 1);
        let du = rot.field.u1.zip(&pot.field.u1, |a, b| a - b);
        let scale = potentialflow::u1_perturbation_h1(&pot, &s.basis);
        assert!(nodal_l2(&du, &s.grid, &s.basis) < 1e-2 * scale, "{} {}", nodal_l2(&du, &s.grid, &s.basis), scale);
    }

    #[test]
    fn zero_eps_gives_background() {
        let s = setup(101, 4);
        let bd = BoundaryData { eps: 0.0, h1_sin: vec![1.0], bin_cos: vec![0.0, 1.0] };
        let st = two_layer_solve(&s, &bd).unwrap();
        assert_eq!(st.outer.iterations, 1);
        assert!(st.v1.max_abs() == 0.0 && st.v2.max_abs() == 0.0 && st.q.max_abs() == 0.0);
    }

    #[test]
    fn rotational_identities() {
        let s = setup(201, 8);
        let bd = BoundaryData { eps: 1e-3, h1_sin: vec![1.0], bin_cos: vec![0.0, 1.0] };
        let st = two_layer_solve(&s, &bd).unwrap();
        let d = diagnostics(&s, &st, &bd).unwrap();
        assert!(d.collapse <= 1e-8 * bd.eps, "{d:?}");
        assert!(d.wall_stream < 1e-12, "{d:?}");
        assert!(d.omega > 1e-4, "{d:?}");
        assert!(st.outer.factors.iter().all(|f| *f < 1.0));
        for h in &st.inner {
            assert!(h.factors.iter().all(|f| *f < 1.0), "{h:?}");
        }
        // Walls: v2 vanishes.
        for i in 0..201 {
            assert!(s.basis.eval_odd(st.v2.at(i), 1.0).abs() < 1e-14);
        }
    }
}
