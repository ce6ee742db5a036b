//! Cross-stream Neumann eigenbasis, quadrature and spectral fields.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::grid::{self, Grid};

/// Default number of Gauss–Legendre panels on `[-1, 1]`.
pub const DEFAULT_PANELS: usize = 64;

/// Kind of a Neumann eigenfunction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModeKind {
    Constant,
    /// `cos(k pi x2)`
    Cos(usize),
    /// `sin((2k+1) pi x2 / 2)`
    Sin(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub kind: ModeKind,
    pub lambda: f64,
}

impl Mode {
    /// Mode `j` in order of increasing eigenvalue.
    pub fn nth(j: usize) -> Self {
        let kind = match j {
            0 => ModeKind::Constant,
            j if j % 2 == 1 => ModeKind::Sin((j - 1) / 2),
            j => ModeKind::Cos(j / 2),
        };
        let w = 0.5 * PI * j as f64;
        Self { kind, lambda: w * w }
    }

    fn freq(&self) -> f64 {
        match self.kind {
            ModeKind::Constant => 0.0,
            ModeKind::Cos(k) => k as f64 * PI,
            ModeKind::Sin(k) => (2 * k + 1) as f64 * 0.5 * PI,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let w = self.freq();
        match self.kind {
            ModeKind::Constant => FRAC_1_SQRT_2,
            ModeKind::Cos(_) => (w * x).cos(),
            ModeKind::Sin(_) => (w * x).sin(),
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        let w = self.freq();
        match self.kind {
            ModeKind::Constant => 0.0,
            ModeKind::Cos(_) => -w * (w * x).sin(),
            ModeKind::Sin(_) => w * (w * x).cos(),
        }
    }

    /// Normalized derivative `-b'(x)/sqrt(lambda)`, which vanishes at the walls.
    pub fn odd_value(&self, x: f64) -> f64 {
        if self.lambda == 0.0 {
            0.0
        } else {
            -self.deriv(x) / self.lambda.sqrt()
        }
    }
}

/// Composite Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadrature {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Quadrature {
    pub fn composite(panels: usize) -> Self {
        let s = (6.0f64 / 5.0).sqrt();
        let inner = (3.0 / 7.0 - 2.0 / 7.0 * s).sqrt();
        let outer = (3.0 / 7.0 + 2.0 / 7.0 * s).sqrt();
        let wi = (18.0 + 30f64.sqrt()) / 36.0;
        let wo = (18.0 - 30f64.sqrt()) / 36.0;
        let ref_nodes = [-outer, -inner, inner, outer];
        let ref_weights = [wo, wi, wi, wo];
        let hw = 1.0 / panels as f64;
        let mut nodes = Vec::with_capacity(4 * panels);
        let mut weights = Vec::with_capacity(4 * panels);
        for p in 0..panels {
            let mid = -1.0 + (2 * p + 1) as f64 * hw;
            for (t, w) in ref_nodes.iter().zip(&ref_weights) {
                nodes.push(mid + hw * t);
                weights.push(hw * w);
            }
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.weights).map(|(a, b)| a * b).sum()
    }
}

/// Truncated Neumann eigenbasis with tabulated values at the quadrature nodes.
///
/// The odd family `d_j = -b_j'/sqrt(lambda_j)`, `j = 1..=N`, spans the
/// wall-vanishing fields (`u2`, `k12`).
#[derive(Debug, Clone)]
pub struct Basis {
    n: usize,
    modes: Vec<Mode>,
    quad: Quadrature,
    even: Vec<f64>,
    even_d: Vec<f64>,
    odd: Vec<f64>,
}

impl Basis {
    pub fn new(n: usize) -> Self {
        Self::with_panels(n, DEFAULT_PANELS)
    }

    pub fn with_panels(n: usize, panels: usize) -> Self {
        assert!(n >= 1, "basis needs at least one mode");
        let modes: Vec<Mode> = (0..=n).map(Mode::nth).collect();
        let quad = Quadrature::composite(panels);
        let nq = quad.len();
        let mut even = vec![0.0; n * nq];
        let mut even_d = vec![0.0; n * nq];
        let mut odd = vec![0.0; n * nq];
        for j in 0..n {
            for (q, &x) in quad.nodes.iter().enumerate() {
                even[j * nq + q] = modes[j].value(x);
                even_d[j * nq + q] = modes[j].deriv(x);
                odd[j * nq + q] = modes[j + 1].odd_value(x);
            }
        }
        Self { n, modes, quad, even, even_d, odd }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nq(&self) -> usize {
        self.quad.len()
    }

    pub fn quadrature(&self) -> &Quadrature {
        &self.quad
    }

    pub fn mode(&self, j: usize) -> Mode {
        self.modes[j]
    }

    pub fn lambda(&self, j: usize) -> f64 {
        self.modes[j].lambda
    }

    /// `b_j` at quadrature node `q`.
    pub fn b(&self, j: usize, q: usize) -> f64 {
        self.even[j * self.nq() + q]
    }

    /// `b_j'` at quadrature node `q`.
    pub fn db(&self, j: usize, q: usize) -> f64 {
        self.even_d[j * self.nq() + q]
    }

    pub fn b_row(&self, j: usize) -> &[f64] {
        let nq = self.nq();
        &self.even[j * nq..(j + 1) * nq]
    }

    pub fn db_row(&self, j: usize) -> &[f64] {
        let nq = self.nq();
        &self.even_d[j * nq..(j + 1) * nq]
    }

    /// Coefficients of nodal values on the Neumann family.
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        self.project_with(&self.even, values)
    }

    /// Coefficients of nodal values on the odd family.
    pub fn project_odd(&self, values: &[f64]) -> Vec<f64> {
        self.project_with(&self.odd, values)
    }

    fn project_with(&self, table: &[f64], values: &[f64]) -> Vec<f64> {
        let nq = self.nq();
        assert_eq!(values.len(), nq);
        let wv: Vec<f64> = values.iter().zip(&self.quad.weights).map(|(v, w)| v * w).collect();
        (0..self.n).map(|j| table[j * nq..(j + 1) * nq].iter().zip(&wv).map(|(a, b)| a * b).sum()).collect()
    }

    fn synth_with(&self, table: &[f64], coeffs: &[f64], out: &mut [f64]) {
        let nq = self.nq();
        out.iter_mut().for_each(|v| *v = 0.0);
        for (j, &c) in coeffs.iter().enumerate().take(self.n) {
            if c != 0.0 {
                for (o, t) in out.iter_mut().zip(&table[j * nq..(j + 1) * nq]) {
                    *o += c * t;
                }
            }
        }
    }

    pub fn synth(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nq()];
        self.synth_with(&self.even, coeffs, &mut out);
        out
    }

    pub fn synth_dx2(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nq()];
        self.synth_with(&self.even_d, coeffs, &mut out);
        out
    }

    pub fn synth_odd(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nq()];
        self.synth_with(&self.odd, coeffs, &mut out);
        out
    }

    /// `sum A_j b_j(x)` at an arbitrary point.
    pub fn eval(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().enumerate().map(|(j, c)| c * self.modes[j].value(x)).sum()
    }

    pub fn eval_dx2(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().enumerate().map(|(j, c)| c * self.modes[j].deriv(x)).sum()
    }

    pub fn eval_odd(&self, coeffs: &[f64], x: f64) -> f64 {
        coeffs.iter().enumerate().map(|(j, c)| c * self.modes[j + 1].odd_value(x)).sum()
    }

    /// `d/dx2` of an odd-family expansion, as Neumann coefficients.
    pub fn odd_dx2_coeffs(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (j, c) in coeffs.iter().enumerate() {
            if j + 1 < self.n {
                out[j + 1] = c * self.lambda(j + 1).sqrt();
            }
        }
        out
    }

    /// `int_{-1}^{x} sum A_j b_j` at an arbitrary point.
    pub fn eval_integral(&self, coeffs: &[f64], x: f64) -> f64 {
        let mut s = coeffs[0] * FRAC_1_SQRT_2 * (x + 1.0);
        for (j, c) in coeffs.iter().enumerate().skip(1) {
            s -= c * self.modes[j].deriv(x) / self.modes[j].lambda;
        }
        s
    }
}

/// Nodal samples on the `x1 grid x quadrature nodes` lattice, `x1`-major.
#[derive(Debug, Clone, PartialEq)]
pub struct NodalField {
    pub n1: usize,
    pub nq: usize,
    pub data: Vec<f64>,
}

impl NodalField {
    pub fn zeros(n1: usize, nq: usize) -> Self {
        Self { n1, nq, data: vec![0.0; n1 * nq] }
    }

    pub fn from_fn(grid: &Grid, basis: &Basis, f: impl Fn(f64, f64) -> f64) -> Self {
        let nq = basis.nq();
        let nodes = &basis.quadrature().nodes;
        let data = grid.x.iter().flat_map(|&x1| nodes.iter().map(move |&x2| (x1, x2))).map(|(a, b)| f(a, b)).collect();
        Self { n1: grid.len(), nq, data }
    }

    pub fn get(&self, i: usize, q: usize) -> f64 {
        self.data[i * self.nq + q]
    }

    pub fn set(&mut self, i: usize, q: usize, v: f64) {
        self.data[i * self.nq + q] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.nq..(i + 1) * self.nq]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.nq..(i + 1) * self.nq]
    }

    /// Values along the `x1` line through node `q`.
    pub fn column(&self, q: usize) -> Vec<f64> {
        (0..self.n1).map(|i| self.get(i, q)).collect()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { n1: self.n1, nq: self.nq, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.data.len(), other.data.len());
        Self { n1: self.n1, nq: self.nq, data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Second-order `x1` derivative along every quadrature line.
    pub fn dx1(&self, h: f64) -> Self {
        let mut out = Self::zeros(self.n1, self.nq);
        for q in 0..self.nq {
            for (i, v) in grid::d1(&self.column(q), h).into_iter().enumerate() {
                out.set(i, q, v);
            }
        }
        out
    }
}

/// A field stored as `A_j(x1_i)` over the Neumann basis, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    pub grid: Grid,
    pub n: usize,
    pub coeffs: Vec<f64>,
}

impl SpectralField {
    pub fn zeros(grid: &Grid, n: usize) -> Self {
        Self { grid: grid.clone(), n, coeffs: vec![0.0; grid.len() * n] }
    }

    /// Projection of a closure over `(x1, x2)`.
    pub fn project(basis: &Basis, grid: &Grid, f: impl Fn(f64, f64) -> f64) -> Self {
        Self::from_nodal(basis, grid, &NodalField::from_fn(grid, basis, f))
    }

    pub fn from_nodal(basis: &Basis, grid: &Grid, nodal: &NodalField) -> Self {
        let n = basis.n();
        let mut coeffs = Vec::with_capacity(grid.len() * n);
        for i in 0..grid.len() {
            coeffs.extend(basis.project(nodal.row(i)));
        }
        Self { grid: grid.clone(), n, coeffs }
    }

    pub fn n1(&self) -> usize {
        self.grid.len()
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.n..(i + 1) * self.n]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coeffs[i * self.n + j]
    }

    /// `A_j` along the `x1` grid.
    pub fn mode(&self, j: usize) -> Vec<f64> {
        (0..self.n1()).map(|i| self.get(i, j)).collect()
    }

    pub fn nodal(&self, basis: &Basis) -> NodalField {
        self.nodal_with(basis, Basis::synth)
    }

    pub fn nodal_dx2(&self, basis: &Basis) -> NodalField {
        self.nodal_with(basis, Basis::synth_dx2)
    }

    /// `x1` derivative sampled at the nodes.
    pub fn nodal_dx1(&self, basis: &Basis) -> NodalField {
        self.dx1().nodal(basis)
    }

    fn nodal_with(&self, basis: &Basis, f: impl Fn(&Basis, &[f64]) -> Vec<f64>) -> NodalField {
        let nq = basis.nq();
        let mut out = NodalField::zeros(self.n1(), nq);
        for i in 0..self.n1() {
            out.row_mut(i).copy_from_slice(&f(basis, self.at(i)));
        }
        out
    }

    /// Second-order `x1` derivative of every coefficient curve.
    pub fn dx1(&self) -> Self {
        self.map_modes(|m| grid::d1(m, self.grid.h))
    }

    pub fn dx11(&self) -> Self {
        self.map_modes(|m| grid::d2(m, self.grid.h))
    }

    fn map_modes(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(&self.grid, self.n);
        for j in 0..self.n {
            for (i, v) in f(&self.mode(j)).into_iter().enumerate() {
                out.coeffs[i * self.n + j] = v;
            }
        }
        out
    }

    pub fn diff_x2(&self, basis: &Basis) -> OddField {
        let mut coeffs = vec![0.0; self.coeffs.len()];
        for i in 0..self.n1() {
            for j in 1..self.n {
                coeffs[i * self.n + j - 1] = -basis.lambda(j).sqrt() * self.get(i, j);
            }
        }
        OddField { grid: self.grid.clone(), n: self.n, coeffs }
    }

    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect();
        Self { grid: self.grid.clone(), n: self.n, coeffs }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self { grid: self.grid.clone(), n: self.n, coeffs: self.coeffs.iter().map(|a| alpha * a).collect() }
    }

    /// Trapezoid in `x1` of the Parseval sum.
    pub fn l2_norm(&self) -> f64 {
        let f: Vec<f64> = (0..self.n1()).map(|i| self.at(i).iter().map(|a| a * a).sum()).collect();
        self.grid.trapezoid(&f).sqrt()
    }

    pub fn h1_norm(&self, basis: &Basis) -> f64 {
        let d = self.dx1();
        let f: Vec<f64> = (0..self.n1())
            .map(|i| (0..self.n).map(|j| (1.0 + basis.lambda(j)) * self.get(i, j).powi(2) + d.get(i, j).powi(2)).sum())
            .collect();
        self.grid.trapezoid(&f).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// A field on the odd family `d_{j+1}`, as produced by [`SpectralField::diff_x2`].
#[derive(Debug, Clone, PartialEq)]
pub struct OddField {
    pub grid: Grid,
    pub n: usize,
    pub coeffs: Vec<f64>,
}

impl OddField {
    pub fn zeros(grid: &Grid, n: usize) -> Self {
        Self { grid: grid.clone(), n, coeffs: vec![0.0; grid.len() * n] }
    }

    pub fn from_nodal(basis: &Basis, grid: &Grid, nodal: &NodalField) -> Self {
        let n = basis.n();
        let mut coeffs = Vec::with_capacity(grid.len() * n);
        for i in 0..grid.len() {
            coeffs.extend(basis.project_odd(nodal.row(i)));
        }
        Self { grid: grid.clone(), n, coeffs }
    }

    pub fn at(&self, i: usize) -> &[f64] {
        &self.coeffs[i * self.n..(i + 1) * self.n]
    }

    pub fn nodal(&self, basis: &Basis) -> NodalField {
        let mut out = NodalField::zeros(self.grid.len(), basis.nq());
        for i in 0..self.grid.len() {
            out.row_mut(i).copy_from_slice(&basis.synth_odd(self.at(i)));
        }
        out
    }

    pub fn l2_norm(&self) -> f64 {
        let f: Vec<f64> = (0..self.grid.len()).map(|i| self.at(i).iter().map(|a| a * a).sum()).collect();
        self.grid.trapezoid(&f).sqrt()
    }

    pub fn h1_norm(&self, basis: &Basis) -> f64 {
        let n1 = self.grid.len();
        let d: Vec<Vec<f64>> = (0..self.n).map(|j| grid::d1(&(0..n1).map(|i| self.at(i)[j]).collect::<Vec<_>>(), self.grid.h)).collect();
        let f: Vec<f64> = (0..n1)
            .map(|i| (0..self.n).map(|j| (1.0 + basis.lambda(j + 1)) * self.at(i)[j].powi(2) + d[j][i].powi(2)).sum())
            .collect();
        self.grid.trapezoid(&f).sqrt()
    }

    pub fn mode(&self, j: usize) -> Vec<f64> {
        (0..self.grid.len()).map(|i| self.coeffs[i * self.n + j]).collect()
    }

    fn map_modes(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = Self::zeros(&self.grid, self.n);
        for j in 0..self.n {
            for (i, v) in f(&self.mode(j)).into_iter().enumerate() {
                out.coeffs[i * self.n + j] = v;
            }
        }
        out
    }

    pub fn dx1(&self) -> Self {
        self.map_modes(|m| grid::d1(m, self.grid.h))
    }

    pub fn dx11(&self) -> Self {
        self.map_modes(|m| grid::d2(m, self.grid.h))
    }

    /// `d2^2`: every odd mode is an eigenfunction with eigenvalue `-lambda_{j+1}`.
    pub fn dx22(&self, basis: &Basis) -> Self {
        let mut out = self.clone();
        for (k, c) in out.coeffs.iter_mut().enumerate() {
            *c *= -basis.lambda(k % self.n + 1);
        }
        out
    }

    pub fn axpy(&self, alpha: f64, other: &Self) -> Self {
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + alpha * b).collect();
        Self { grid: self.grid.clone(), n: self.n, coeffs }
    }

    pub fn scale(&self, alpha: f64) -> Self {
        Self { grid: self.grid.clone(), n: self.n, coeffs: self.coeffs.iter().map(|a| alpha * a).collect() }
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `d/dx2` as a Neumann field (the top odd mode is dropped).
    pub fn dx2(&self, basis: &Basis) -> SpectralField {
        let mut coeffs = Vec::with_capacity(self.coeffs.len());
        for i in 0..self.grid.len() {
            coeffs.extend(basis.odd_dx2_coeffs(self.at(i)));
        }
        SpectralField { grid: self.grid.clone(), n: self.n, coeffs }
    }
}
