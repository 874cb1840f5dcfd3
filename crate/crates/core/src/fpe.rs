//! The variance-driven Fokker-Planck equation d_t v = (1/2) V'(t) d_xx v:
//! a Crank-Nicolson solver, its heat-kernel oracle through the time change
//! tau = V/2, and residual checks for the generalized equation, mild
//! solutions, the weak maximum principle and uniqueness on cylinders.

use crate::bernstein::BernsteinSpec;
use crate::caputo::caputo_phi_derivative;
use crate::error::{contract, domain, Error, Result};
use crate::fou_stats::{gaussian, VarianceEvaluator, VarianceTable};
use crate::quadrature::{gauss_legendre, QuadratureConfig};
use crate::subordination::{laplace_of, subordinate, weighted_laplace_lh, weighted_subordinate, Subordinated};
use crate::timefn::{Tail, TimeFunction, TimeGridFunction};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

pub type SpaceFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Lateral condition of a space-time field.
#[derive(Clone)]
pub enum Boundary {
    /// Prescribed values at the left and right ends as functions of t.
    Dirichlet { left: SpaceFn, right: SpaceFn },
    /// Zero Dirichlet on a domain padded by six stationary standard deviations.
    Decay,
}

impl std::fmt::Debug for Boundary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Boundary::Dirichlet { .. } => f.write_str("Dirichlet"),
            Boundary::Decay => f.write_str("Decay"),
        }
    }
}

impl Boundary {
    pub fn dirichlet(left: impl Fn(f64) -> f64 + Send + Sync + 'static, right: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Boundary::Dirichlet { left: Arc::new(left), right: Arc::new(right) }
    }
}

/// Values on a uniform x grid times a strictly increasing t grid from 0,
/// stored row-major by time.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    x_grid: Vec<f64>,
    t_grid: Vec<f64>,
    values: Vec<f64>,
    boundary: Boundary,
    stationary: Option<Vec<f64>>,
}

fn check_uniform(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return contract("spatial grids need at least three points");
    }
    let dx = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    if !(dx > 0.0) || x.windows(2).any(|w| ((w[1] - w[0]) - dx).abs() > 1e-9 * dx) {
        return contract("spatial grid must be uniform and increasing");
    }
    Ok(dx)
}

fn check_time_grid(t: &[f64]) -> Result<()> {
    if t.is_empty() || t[0] != 0.0 || t.windows(2).any(|w| !(w[1] > w[0])) {
        return contract("time grid must start at 0 and increase strictly");
    }
    Ok(())
}

/// x_k = a + k (b - a) / (n - 1).
pub fn uniform_points(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

impl SpaceTimeField {
    pub fn new(x_grid: Vec<f64>, t_grid: Vec<f64>, values: Vec<f64>, boundary: Boundary) -> Result<Self> {
        check_uniform(&x_grid)?;
        check_time_grid(&t_grid)?;
        if values.len() != x_grid.len() * t_grid.len() {
            return contract(format!(
                "field has {} values for a {}x{} grid",
                values.len(),
                t_grid.len(),
                x_grid.len()
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return contract("field values must be finite");
        }
        Ok(SpaceTimeField { x_grid, t_grid, values, boundary, stationary: None })
    }

    /// Declares the large-time profile; it must match the last row to `tol`.
    pub fn with_stationary(mut self, profile: Vec<f64>, tol: f64) -> Result<Self> {
        if profile.len() != self.n_x() {
            return contract("stationary profile length differs from the x grid");
        }
        let last = self.row(self.n_t() - 1);
        let gap = last.iter().zip(&profile).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if gap > tol {
            return contract(format!("last time section differs from the stationary profile by {gap:e}"));
        }
        self.stationary = Some(profile);
        Ok(self)
    }

    pub fn x_grid(&self) -> &[f64] {
        &self.x_grid
    }

    pub fn t_grid(&self) -> &[f64] {
        &self.t_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn boundary(&self) -> &Boundary {
        &self.boundary
    }

    pub fn n_x(&self) -> usize {
        self.x_grid.len()
    }

    pub fn n_t(&self) -> usize {
        self.t_grid.len()
    }

    pub fn dx(&self) -> f64 {
        self.x_grid[1] - self.x_grid[0]
    }

    pub fn at(&self, j_t: usize, i_x: usize) -> f64 {
        self.values[j_t * self.n_x() + i_x]
    }

    pub fn row(&self, j_t: usize) -> &[f64] {
        let n = self.n_x();
        &self.values[j_t * n..(j_t + 1) * n]
    }

    /// Trapezoid x-mass of the section at t_grid[j_t].
    pub fn mass(&self, j_t: usize) -> f64 {
        let r = self.row(j_t);
        self.dx() * (r.iter().sum::<f64>() - 0.5 * (r[0] + r[r.len() - 1]))
    }

    /// Checks nonnegativity and a trapezoid mass in [1 - eps_mass, 1] per row.
    pub fn check_density(&self, eps_mass: f64) -> Result<()> {
        if self.values.iter().any(|&v| v < 0.0) {
            return contract("density field has negative values");
        }
        for j in 0..self.n_t() {
            let m = self.mass(j);
            if !(m >= 1.0 - eps_mass && m <= 1.0 + 1e-12) {
                return contract(format!("mass {m} at t = {} is outside [1 - {eps_mass:e}, 1]", self.t_grid[j]));
            }
        }
        Ok(())
    }

    /// Returns a copy with f(x, t) added at every node.
    pub fn add(&self, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = self.values.clone();
        for (j, &t) in self.t_grid.iter().enumerate() {
            for (i, &x) in self.x_grid.iter().enumerate() {
                values[j * self.n_x() + i] += f(x, t);
            }
        }
        SpaceTimeField::new(self.x_grid.clone(), self.t_grid.clone(), values, self.boundary.clone())
    }

    fn bracket(grid: &[f64], s: f64) -> (usize, f64) {
        let i = grid.partition_point(|&g| g <= s).clamp(1, grid.len() - 1) - 1;
        (i, (s - grid[i]) / (grid[i + 1] - grid[i]))
    }

    /// Bilinear interpolation; NaN outside the grid box.
    pub fn interpolate(&self, x: f64, t: f64) -> f64 {
        let (x0, x1) = (self.x_grid[0], self.x_grid[self.n_x() - 1]);
        let t1 = self.t_grid[self.n_t() - 1];
        if !(x >= x0 && x <= x1 && t >= 0.0 && t <= t1) {
            return f64::NAN;
        }
        let (i, wx) = Self::bracket(&self.x_grid, x);
        if self.n_t() == 1 {
            return self.at(0, i) * (1.0 - wx) + self.at(0, i + 1) * wx;
        }
        let (j, wt) = Self::bracket(&self.t_grid, t);
        let lo = self.at(j, i) * (1.0 - wx) + self.at(j, i + 1) * wx;
        let hi = self.at(j + 1, i) * (1.0 - wx) + self.at(j + 1, i + 1) * wx;
        lo * (1.0 - wt) + hi * wt
    }

    fn time_slope(&self, x: f64, t: f64) -> f64 {
        if self.n_t() < 2 {
            return 0.0;
        }
        let (j, _) = Self::bracket(&self.t_grid, t);
        let dt = self.t_grid[j + 1] - self.t_grid[j];
        (self.interpolate(x, self.t_grid[j + 1]) - self.interpolate(x, self.t_grid[j])) / dt
    }
}

/// A real function of (x, t) whose time sections feed the subordination and
/// Caputo operators.
pub trait SpaceTimeFn: Sync {
    fn value(&self, x: f64, t: f64) -> f64;

    fn time_derivative(&self, x: f64, t: f64) -> f64;

    fn x_range(&self) -> (f64, f64) {
        (f64::NEG_INFINITY, f64::INFINITY)
    }

    /// Large-time limit of the section at x, when it settles.
    fn stationary(&self, _x: f64) -> Option<f64> {
        None
    }

    /// Last time with data.
    fn t_end(&self) -> f64 {
        f64::INFINITY
    }
}

impl SpaceTimeFn for SpaceTimeField {
    fn value(&self, x: f64, t: f64) -> f64 {
        self.interpolate(x, t)
    }

    fn time_derivative(&self, x: f64, t: f64) -> f64 {
        self.time_slope(x, t)
    }

    fn x_range(&self) -> (f64, f64) {
        (self.x_grid[0], self.x_grid[self.n_x() - 1])
    }

    fn stationary(&self, x: f64) -> Option<f64> {
        let p = self.stationary.as_ref()?;
        let (i, w) = Self::bracket(&self.x_grid, x);
        Some(p[i] * (1.0 - w) + p[i + 1] * w)
    }

    fn t_end(&self) -> f64 {
        self.t_grid[self.n_t() - 1]
    }
}

/// The time section s -> v(x, s), extended by the stationary level past the
/// data when one is declared.
pub struct Section<'a> {
    v: &'a dyn SpaceTimeFn,
    x: f64,
    level: Option<f64>,
}

impl<'a> Section<'a> {
    pub fn new(v: &'a dyn SpaceTimeFn, x: f64) -> Self {
        Section { v, x, level: v.stationary(x) }
    }
}

impl TimeFunction for Section<'_> {
    fn value(&self, s: f64) -> f64 {
        if s > self.v.t_end() {
            return self.level.unwrap_or(f64::NAN);
        }
        self.v.value(self.x, s)
    }

    fn derivative(&self, s: f64) -> Option<f64> {
        if s > self.v.t_end() {
            return Some(if self.level.is_some() { 0.0 } else { f64::NAN });
        }
        Some(self.v.time_derivative(self.x, s))
    }

    fn has_derivative(&self) -> bool {
        true
    }

    fn tail(&self) -> Tail {
        match self.level {
            Some(l) => Tail::Constant(l),
            None if self.v.t_end().is_finite() => Tail::Forbidden,
            None => Tail::Power(0.0),
        }
    }

    fn support_end(&self) -> f64 {
        if self.level.is_some() {
            f64::INFINITY
        } else {
            self.v.t_end()
        }
    }
}

/// Centered Gaussian density with variance v0 + V(t): p_H when v0 = 0, and
/// the exact solution from a Gaussian initial profile otherwise.
#[derive(Debug, Clone)]
pub struct PhDensity {
    table: Arc<VarianceTable>,
    v0: f64,
}

impl PhDensity {
    pub fn new(hurst: f64, theta: f64) -> Result<Self> {
        Self::with_initial_variance(hurst, theta, 0.0)
    }

    pub fn with_initial_variance(hurst: f64, theta: f64, v0: f64) -> Result<Self> {
        if !(v0 >= 0.0) {
            return domain(format!("initial variance must be nonnegative, got {v0}"));
        }
        Ok(PhDensity { table: Arc::new(VarianceTable::new(hurst, theta)?), v0 })
    }

    pub fn variance(&self, t: f64) -> f64 {
        self.v0 + self.table.both(t).0
    }
}

impl SpaceTimeFn for PhDensity {
    fn value(&self, x: f64, t: f64) -> f64 {
        let var = self.variance(t);
        if var == 0.0 {
            return if x == 0.0 { f64::INFINITY } else { 0.0 };
        }
        gaussian(x, var)
    }

    /// (1/2) V'(t) d_xx p, with d_xx p = p (x^2 / var^2 - 1 / var).
    fn time_derivative(&self, x: f64, t: f64) -> f64 {
        let (v, dv) = self.table.both(t);
        let var = self.v0 + v;
        if var == 0.0 {
            return 0.0;
        }
        0.5 * dv * gaussian(x, var) * (x * x / (var * var) - 1.0 / var)
    }

    fn stationary(&self, x: f64) -> Option<f64> {
        Some(gaussian(x, self.v0 + self.table.stationary()))
    }
}

/// How the diffusion coefficient enters each Crank-Nicolson step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum CoefficientRule {
    /// (1/2) V'(t_{n+1/2}) dt.
    #[default]
    Midpoint,
    /// (1/2) (V(t_{n+1}) - V(t_n)), the exact increment of tau.
    ExactIncrement,
}

/// Crank-Nicolson solution of d_t v = (1/2) V'(t) d_xx v.
pub fn solve_fp(
    hurst: f64,
    theta: f64,
    init: &dyn Fn(f64) -> f64,
    boundary: &Boundary,
    x_grid: &[f64],
    t_grid: &[f64],
) -> Result<SpaceTimeField> {
    solve_fp_with(hurst, theta, init, boundary, x_grid, t_grid, CoefficientRule::default())
}

pub fn solve_fp_with(
    hurst: f64,
    theta: f64,
    init: &dyn Fn(f64) -> f64,
    boundary: &Boundary,
    x_grid: &[f64],
    t_grid: &[f64],
    rule: CoefficientRule,
) -> Result<SpaceTimeField> {
    let dx = check_uniform(x_grid)?;
    check_time_grid(t_grid)?;
    let ev = VarianceEvaluator::shared(hurst, theta)?;
    let nx = x_grid.len();
    let pad = match boundary {
        Boundary::Decay => (6.0 * ev.stationary().sqrt() / dx).ceil() as usize,
        Boundary::Dirichlet { .. } => 0,
    };
    let n = nx + 2 * pad;
    let x_at = |k: usize| x_grid[0] + (k as f64 - pad as f64) * dx;
    let mut u: Vec<f64> = (0..n).map(|k| init(x_at(k))).collect();
    if pad > 0 {
        u[0] = 0.0;
        u[n - 1] = 0.0;
    }
    if u.iter().any(|v| !v.is_finite()) {
        return contract("initial profile must be finite on the grid");
    }
    let ends = |t: f64| -> (f64, f64) {
        match boundary {
            Boundary::Dirichlet { left, right } => (left(t), right(t)),
            Boundary::Decay => (0.0, 0.0),
        }
    };
    let mut values = Vec::with_capacity(nx * t_grid.len());
    values.extend_from_slice(&u[pad..pad + nx]);
    let m = n - 2;
    let mut rhs = vec![0.0; m];
    let mut cp = vec![0.0; m];
    for w in t_grid.windows(2) {
        let (t0, t1) = (w[0], w[1]);
        let dtau = match rule {
            CoefficientRule::Midpoint => 0.5 * ev.v_prime(0.5 * (t0 + t1)) * (t1 - t0),
            CoefficientRule::ExactIncrement => 0.5 * (ev.v(t1) - ev.v(t0)),
        };
        let r = dtau / (dx * dx);
        let (l1, r1) = if pad > 0 { (0.0, 0.0) } else { ends(t1) };
        for i in 0..m {
            let k = i + 1;
            rhs[i] = (1.0 - r) * u[k] + 0.5 * r * (u[k - 1] + u[k + 1]);
        }
        rhs[0] += 0.5 * r * l1;
        rhs[m - 1] += 0.5 * r * r1;
        // Thomas sweep for the constant tridiagonal (-r/2, 1 + r, -r/2)
        let (a, b) = (-0.5 * r, 1.0 + r);
        let mut piv = b;
        cp[0] = a / piv;
        rhs[0] /= piv;
        for i in 1..m {
            piv = b - a * cp[i - 1];
            if !(piv.abs() > 1e-300) {
                return Err(Error::Numeric { msg: "tridiagonal solve hit a zero pivot".into(), estimate: piv });
            }
            cp[i] = a / piv;
            rhs[i] = (rhs[i] - a * rhs[i - 1]) / piv;
        }
        for i in (0..m - 1).rev() {
            rhs[i] -= cp[i] * rhs[i + 1];
        }
        u[0] = l1;
        u[n - 1] = r1;
        u[1..n - 1].copy_from_slice(&rhs);
        values.extend_from_slice(&u[pad..pad + nx]);
    }
    SpaceTimeField::new(x_grid.to_vec(), t_grid.to_vec(), values, boundary.clone())
}

/// The heat-kernel solution through tau = V/2: init convolved with a
/// centered Gaussian of variance V(t), by Gauss-Legendre panels over
/// +-12 standard deviations intersected with `support`.
pub fn tau_transform_solution(
    hurst: f64,
    theta: f64,
    init: &dyn Fn(f64) -> f64,
    support: (f64, f64),
    x: f64,
    t: f64,
) -> Result<f64> {
    let var = VarianceEvaluator::shared(hurst, theta)?.v(t);
    if var == 0.0 {
        return Ok(init(x));
    }
    let sd = var.sqrt();
    let (a, b) = ((x - 12.0 * sd).max(support.0), (x + 12.0 * sd).min(support.1));
    if !(b > a) {
        return Ok(0.0);
    }
    let gl = gauss_legendre(16);
    let n = 512;
    let h = (b - a) / n as f64;
    Ok((0..n)
        .map(|k| {
            let (c, hh) = (a + (k as f64 + 0.5) * h, 0.5 * h);
            hh * gl.apply(|u| {
                let y = c + hh * u;
                init(y) * gaussian(x - y, var)
            })
        })
        .sum())
}

/// Fourth-order central second difference.
fn second_difference(f: impl Fn(f64) -> Result<f64>, x: f64, h: f64) -> Result<f64> {
    let v = [f(x - 2.0 * h)?, f(x - h)?, f(x)?, f(x + h)?, f(x + 2.0 * h)?];
    Ok((-v[0] + 16.0 * v[1] - 30.0 * v[2] + 16.0 * v[3] - v[4]) / (12.0 * h * h))
}

fn check_stencil(v: &dyn SpaceTimeFn, x: f64, h: f64) -> Result<()> {
    let (lo, hi) = v.x_range();
    if x - 2.0 * h < lo || x + 2.0 * h > hi {
        return contract(format!("probe x = {x} needs [{}, {}] inside [{lo}, {hi}]", x - 2.0 * h, x + 2.0 * h));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeResidual {
    pub x: f64,
    pub t: f64,
    /// d^Phi_t S_Phi v(x, .)(t).
    pub caputo: f64,
    /// (1/2) d_xx S_{Phi,H} v(., x)(t).
    pub diffusion: f64,
    pub residual: f64,
}

/// Discretization of one refinement level of the generalized residual.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualLevel {
    pub n_nodes: usize,
    /// Difference step as a fraction of max(|x|, 0.05).
    pub step_fraction: f64,
}

impl ResidualLevel {
    /// Level k doubles the difference resolution and adds 8 nodes per panel.
    pub fn refined(k: usize) -> Self {
        ResidualLevel { n_nodes: 16 + 8 * k, step_fraction: 0.2 / (1 << k) as f64 }
    }
}

/// R(x, t) = d^Phi_t [S_Phi v(x, .)](t) - (1/2) d_xx [S_{Phi,H} v(., x)](t)
/// at each probe.
pub fn generalized_fp_residual(
    v: &dyn SpaceTimeFn,
    spec: &BernsteinSpec,
    hurst: f64,
    theta: f64,
    probes: &[(f64, f64)],
    level: ResidualLevel,
) -> Result<Vec<ProbeResidual>> {
    let quad = QuadratureConfig { n_nodes: level.n_nodes, ..QuadratureConfig::default() };
    quad.validate()?;
    probes
        .par_iter()
        .map(|&(x, t)| {
            if !(t > 0.0) {
                return domain(format!("probe time must be positive, got {t}"));
            }
            let h = level.step_fraction * x.abs().max(0.05);
            check_stencil(v, x, h)?;
            let section = Section::new(v, x);
            let sub = Subordinated::new(&section, spec, &quad)?;
            let caputo = caputo_phi_derivative(&sub, spec, t, &quad);
            let caputo = sub.finish(caputo)??;
            let d2 = second_difference(
                |y| weighted_subordinate(&Section::new(v, y), spec, hurst, theta, t, &quad),
                x,
                h,
            )?;
            let diffusion = 0.5 * d2;
            Ok(ProbeResidual { x, t, caputo, diffusion, residual: caputo - diffusion })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MildResidual {
    pub x: f64,
    pub lambda: f64,
    pub residual: f64,
}

/// | lambda vbar(x, lambda) - v(x, 0) - (1/2) d_xx L_H v(x, lambda) |.
pub fn mild_solution_residual(
    v: &dyn SpaceTimeFn,
    hurst: f64,
    theta: f64,
    lambdas: &[f64],
    x_probes: &[f64],
    quad: &QuadratureConfig,
) -> Result<Vec<MildResidual>> {
    let mut pairs = Vec::new();
    for &x in x_probes {
        for &l in lambdas {
            pairs.push((x, l));
        }
    }
    pairs
        .par_iter()
        .map(|&(x, lambda)| {
            let h = (0.1 * x.abs()).clamp(0.005, 0.05);
            check_stencil(v, x, h)?;
            let section = Section::new(v, x);
            let vbar = laplace_of(&section, lambda, quad)?;
            let d2 = second_difference(|y| weighted_laplace_lh(&Section::new(v, y), hurst, theta, lambda, quad), x, h)?;
            let residual = (lambda * vbar - v.value(x, 0.0) - 0.5 * d2).abs();
            Ok(MildResidual { x, lambda, residual })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxPrincipleReport {
    pub interior_max: f64,
    pub boundary_max: f64,
    pub pass: bool,
}

/// Compares the maximum over the parabolic boundary of [a, b] x [0, T]
/// (bottom row and both lateral columns) with the maximum elsewhere.
pub fn max_principle_check(field: &SpaceTimeField, a: f64, b: f64, t_max: f64) -> MaxPrincipleReport {
    let slack = 1e-12 * (b - a).abs().max(1.0);
    let xs: Vec<usize> = (0..field.n_x()).filter(|&i| field.x_grid[i] >= a - slack && field.x_grid[i] <= b + slack).collect();
    let ts: Vec<usize> = (0..field.n_t()).filter(|&j| field.t_grid[j] <= t_max * (1.0 + 1e-12)).collect();
    let (mut interior, mut edge) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    if let (Some(&i0), Some(&i1)) = (xs.first(), xs.last()) {
        for &j in &ts {
            for &i in &xs {
                let v = field.at(j, i);
                if j == 0 || i == i0 || i == i1 {
                    edge = edge.max(v);
                } else {
                    interior = interior.max(v);
                }
            }
        }
    }
    let scale = edge.abs().max(interior.abs()).max(1.0);
    let pass = !(interior > edge + 1e-9 * scale);
    MaxPrincipleReport { interior_max: interior, boundary_max: edge, pass }
}

/// S_Phi v on a grid. The result carries the subordinated edge columns as
/// its lateral data and, when v settles, its stationary profile.
pub fn subordinate_field(
    v: &dyn SpaceTimeFn,
    spec: &BernsteinSpec,
    x_grid: &[f64],
    t_grid: &[f64],
    quad: &QuadratureConfig,
) -> Result<SpaceTimeField> {
    check_uniform(x_grid)?;
    check_time_grid(t_grid)?;
    let nx = x_grid.len();
    let rows: Vec<Vec<f64>> = t_grid
        .par_iter()
        .map(|&t| x_grid.iter().map(|&x| subordinate(&Section::new(v, x), spec, t, quad)).collect::<Result<Vec<f64>>>())
        .collect::<Result<_>>()?;
    let values: Vec<f64> = rows.concat();
    let column = |i: usize| -> Result<TimeGridFunction> {
        let vals: Vec<f64> = (0..t_grid.len()).map(|j| values[j * nx + i]).collect();
        let tail = match v.stationary(x_grid[i]) {
            Some(l) if t_grid.len() > 1 => Tail::Constant(l),
            _ => Tail::Power(0.0),
        };
        TimeGridFunction::with_tail_tolerance(t_grid.to_vec(), vals, tail, f64::INFINITY)
    };
    let (left, right) = (column(0)?, column(nx - 1)?);
    let boundary = Boundary::dirichlet(move |t| left.value(t), move |t| right.value(t));
    let mut field = SpaceTimeField::new(x_grid.to_vec(), t_grid.to_vec(), values, boundary)?;
    let profile: Option<Vec<f64>> = x_grid.iter().map(|&x| v.stationary(x)).collect();
    if let Some(p) = profile {
        field.stationary = Some(p);
    }
    Ok(field)
}

/// Data of a Dirichlet problem on [a, b] x [0, t_end].
#[derive(Clone)]
pub struct CylinderData {
    pub hurst: f64,
    pub theta: f64,
    pub a: f64,
    pub b: f64,
    pub t_end: f64,
    pub init: SpaceFn,
    pub left: SpaceFn,
    pub right: SpaceFn,
}

/// Grid for one solve of a cylinder problem; `t_grid` ends at t_end.
#[derive(Debug, Clone, PartialEq)]
pub struct Discretization {
    pub n_x: usize,
    pub t_grid: Vec<f64>,
}

impl CylinderData {
    /// Solves the problem; the last row doubles as the stationary profile,
    /// which requires t_end to be many relaxation times.
    pub fn solve(&self, disc: &Discretization) -> Result<SpaceTimeField> {
        if (disc.t_grid.last().copied() != Some(self.t_end)) || disc.n_x < 3 {
            return contract("discretization must end at t_end and have at least three x points");
        }
        let x = uniform_points(self.a, self.b, disc.n_x);
        let bd = Boundary::Dirichlet { left: self.left.clone(), right: self.right.clone() };
        let field = solve_fp(self.hurst, self.theta, &*self.init, &bd, &x, &disc.t_grid)?;
        let last = field.row(field.n_t() - 1).to_vec();
        field.with_stationary(last, 0.0)
    }
}

/// |S_Phi v - S_Phi w| at one probe of a uniqueness comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeGap {
    pub x: f64,
    pub t: f64,
    pub gap: f64,
}

/// |S_Phi v - S_Phi w| for the two solves at every (x, t) of the probe grid.
pub fn uniqueness_gaps(
    first: (&CylinderData, &Discretization),
    second: (&CylinderData, &Discretization),
    spec: &BernsteinSpec,
    probe_x: &[f64],
    probe_t: &[f64],
    quad: &QuadratureConfig,
) -> Result<Vec<ProbeGap>> {
    let v = first.0.solve(first.1)?;
    let w = second.0.solve(second.1)?;
    let mut out = Vec::with_capacity(probe_x.len() * probe_t.len());
    for &t in probe_t {
        for &x in probe_x {
            let a = subordinate(&Section::new(&v, x), spec, t, quad)?;
            let b = subordinate(&Section::new(&w, x), spec, t, quad)?;
            out.push(ProbeGap { x, t, gap: (a - b).abs() });
        }
    }
    Ok(out)
}

/// Max of `uniqueness_gaps` over the probe grid.
pub fn uniqueness_gap(
    first: (&CylinderData, &Discretization),
    second: (&CylinderData, &Discretization),
    spec: &BernsteinSpec,
    probe_x: &[f64],
    probe_t: &[f64],
    quad: &QuadratureConfig,
) -> Result<f64> {
    Ok(uniqueness_gaps(first, second, spec, probe_x, probe_t, quad)?.iter().fold(0.0, |m, p| m.max(p.gap)))
}

/// As `uniqueness_gaps`, after confirming both problems share parameters,
/// initial values and lateral values (sampled at the probes and on 65
/// uniform points of each face).
pub fn uniqueness_probe(
    first: (&CylinderData, &Discretization),
    second: (&CylinderData, &Discretization),
    spec: &BernsteinSpec,
    probe_x: &[f64],
    probe_t: &[f64],
    quad: &QuadratureConfig,
) -> Result<Vec<ProbeGap>> {
    let (p, q) = (first.0, second.0);
    if p.hurst != q.hurst || p.theta != q.theta || p.a != q.a || p.b != q.b || p.t_end != q.t_end {
        return contract("the two problems live on different cylinders or parameters");
    }
    let same = |f: &SpaceFn, g: &SpaceFn, pts: &[f64]| pts.iter().all(|&s| (f(s) - g(s)).abs() <= 1e-12 * f(s).abs().max(1.0));
    let mut xs = uniform_points(p.a, p.b, 65);
    xs.extend_from_slice(probe_x);
    let mut ts = uniform_points(0.0, p.t_end, 65);
    ts.extend_from_slice(probe_t);
    if !same(&p.init, &q.init, &xs) {
        return contract("initial data differ between the two problems");
    }
    if !same(&p.left, &q.left, &ts) || !same(&p.right, &q.right, &ts) {
        return contract("lateral boundary data differ between the two problems");
    }
    uniqueness_gaps(first, second, spec, probe_x, probe_t, quad)
}

/// g(s) = (T - s)^+ / T from the maximum-principle argument; its
/// subordination satisfies d^Phi S_Phi g(t) = -(1/T) P(E(t) <= T).
pub fn max_principle_auxiliary(t_max: f64) -> Result<crate::timefn::AnalyticFunction> {
    if !(t_max > 0.0) {
        return domain(format!("T must be positive, got {t_max}"));
    }
    Ok(crate::timefn::AnalyticFunction::new(move |s| (t_max - s).max(0.0) / t_max, Tail::Constant(0.0))
        .with_derivative(move |s| if s < t_max { -1.0 / t_max } else { 0.0 })
        .with_breakpoints(vec![t_max]))
}
