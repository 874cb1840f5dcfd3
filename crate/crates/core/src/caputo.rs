//! Caputo-type derivative d^Phi u(t) = int_0^t nubar(t - tau) u'(tau) dtau
//! and its Laplace rule.

use crate::bernstein::{BernsteinKind, BernsteinSpec};
use crate::error::{contract, domain, ErrSlot, Error, Result};
use crate::quadrature::{gauss_jacobi, gauss_legendre, graded_points, jacobi_left_integrate, jacobi_right_integrate, laplace_transform, QuadratureConfig};
use crate::special::{rgamma, upper_gamma};
use crate::timefn::TimeFunction;
use serde::Serialize;

const GRADING_LEVELS: usize = 30;

/// Levy tail nubar(r) in closed form.
#[derive(Debug, Clone, Copy)]
pub struct LevyTailKernel {
    alpha: f64,
    mu: f64,
    c: f64,
}

impl LevyTailKernel {
    pub fn new(spec: &BernsteinSpec) -> Self {
        let a = spec.alpha();
        match spec.kind() {
            BernsteinKind::Stable => LevyTailKernel { alpha: a, mu: 0.0, c: rgamma(1.0 - a) },
            BernsteinKind::TemperedStable { mu } => LevyTailKernel { alpha: a, mu, c: a * rgamma(1.0 - a) },
        }
    }

    pub fn eval(&self, r: f64) -> f64 {
        if self.mu == 0.0 {
            return self.c * r.powf(-self.alpha);
        }
        self.c * self.mu.powf(self.alpha) * upper_gamma(-self.alpha, self.mu * r)
    }

    /// nubar(r) r^alpha, bounded at r = 0.
    pub fn regular_part(&self, r: f64) -> f64 {
        if self.mu == 0.0 {
            return self.c;
        }
        if r == 0.0 {
            return self.c / self.alpha;
        }
        self.eval(r) * r.powf(self.alpha)
    }
}

fn caputo_core(u: &dyn TimeFunction, kernel: &LevyTailKernel, t: f64, order: usize) -> f64 {
    let du = |tau: f64| u.derivative(tau).unwrap_or(f64::NAN);
    let mut ends = vec![0.0];
    let mut bps: Vec<f64> = u.breakpoints().into_iter().filter(|&b| b > 0.0 && b < t).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    ends.extend(bps);
    ends.push(t);
    let gl = gauss_legendre(order);
    let nseg = ends.len() - 1;
    let mut total = 0.0;
    for (i, seg) in ends.windows(2).enumerate() {
        let (a, b) = (seg[0], seg[1]);
        let pts = graded_points(a, b, GRADING_LEVELS, true, true, 0.25 * (b - a));
        let npan = pts.len() - 1;
        for (k, p) in pts.windows(2).enumerate() {
            let (lo, hi) = (p[0], p[1]);
            if i + 1 == nseg && k + 1 == npan {
                total += jacobi_right_integrate(order, lo, hi, -kernel.alpha, |tau| kernel.regular_part(t - tau) * du(tau));
            } else if i == 0 && k == 0 {
                // subordinated inputs have u'(tau) ~ tau^{alpha-1} at the origin
                let p = kernel.alpha - 1.0;
                total += jacobi_left_integrate(order, lo, hi, p, |tau| kernel.eval(t - tau) * du(tau) * tau.powf(-p));
            } else {
                let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                total += h * gl.apply(|x| {
                    let tau = c + h * x;
                    kernel.eval(t - tau) * du(tau)
                });
            }
        }
    }
    total
}

/// d^Phi u(t) via the C^1 form.
pub fn caputo_phi_derivative(u: &dyn TimeFunction, spec: &BernsteinSpec, t: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !u.has_derivative() {
        return contract("the Caputo derivative needs derivative samples");
    }
    if !(t > 0.0 && t <= u.support_end()) {
        return domain(format!("t = {t} lies outside (0, {}]", u.support_end()));
    }
    quad.validate()?;
    let v = caputo_core(u, &LevyTailKernel::new(spec), t, quad.n_nodes);
    if !v.is_finite() {
        return Err(Error::Numeric { msg: "Caputo quadrature produced a non-finite value".into(), estimate: v });
    }
    Ok(v)
}

/// | L[d^Phi u](lambda) - Phi(lambda) L[u](lambda) + Phi(lambda)/lambda u(0+) |.
pub fn laplace_caputo_residual(u: &dyn TimeFunction, spec: &BernsteinSpec, lambda: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("Laplace rule needs lambda > 0, got {lambda}"));
    }
    if !u.has_derivative() {
        return contract("the Caputo derivative needs derivative samples");
    }
    if u.support_end().is_finite() && !matches!(u.tail(), crate::timefn::Tail::Constant(_) | crate::timefn::Tail::Power(_)) {
        return contract("Laplace rule needs u on all of [0, inf)");
    }
    let phi = spec.phi(lambda)?;
    let kernel = LevyTailKernel::new(spec);
    let bps = u.breakpoints();
    let opts = quad.laplace_options();
    let slot = ErrSlot::default();
    let lhs = laplace_transform(
        &|t| if t == 0.0 { 0.0 } else { slot.take(Ok(caputo_core(u, &kernel, t, quad.n_nodes))) },
        lambda,
        &bps,
        opts,
    );
    let lu = laplace_transform(&|t| u.value(t), lambda, &bps, opts);
    let rhs = phi * lu - phi / lambda * u.value(0.0);
    slot.finish((lhs - rhs).abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExtremalReport {
    pub value: f64,
    pub pass: bool,
}

pub const EXTREMAL_TOLERANCE: f64 = 1e-6;

/// Evaluates d^Phi u(t0) at a certified maximum point t0 of u on [0, horizon].
/// Certification samples u on its breakpoints and a uniform grid of 4001 points.
pub fn extremal_point_check(
    u: &dyn TimeFunction,
    spec: &BernsteinSpec,
    t0: f64,
    horizon: f64,
    quad: &QuadratureConfig,
) -> Result<ExtremalReport> {
    if !(t0 > 0.0 && t0 <= horizon) {
        return domain(format!("t0 = {t0} must lie in (0, {horizon}]"));
    }
    let mut samples: Vec<f64> = (0..=4000).map(|k| horizon * k as f64 / 4000.0).collect();
    samples.extend(u.breakpoints().into_iter().filter(|&b| b <= horizon));
    let umax = samples.iter().map(|&s| u.value(s)).fold(f64::NEG_INFINITY, f64::max);
    let u0 = u.value(t0);
    if u0 < umax - 1e-9 * umax.abs().max(1.0) {
        return contract(format!("t0 = {t0} is not a maximum: u(t0) = {u0} < max u = {umax}"));
    }
    let value = caputo_phi_derivative(u, spec, t0, quad)?;
    Ok(ExtremalReport { value, pass: value >= -EXTREMAL_TOLERANCE })
}

/// Product-integration Caputo derivative on a uniform grid t_k = k step.
/// Invariant: kernel_nodes[k - 1] = nubar(k step) is positive and decreasing.
#[derive(Debug, Clone)]
pub struct CaputoWorkspace {
    spec: BernsteinSpec,
    step: f64,
    kernel_nodes: Vec<f64>,
    /// m0[m] = int over [m step, (m+1) step] of nubar(r) dr
    m0: Vec<f64>,
    /// m1[m] = same with the weight (r - m step) / step
    m1: Vec<f64>,
}

impl CaputoWorkspace {
    pub fn new(spec: &BernsteinSpec, step: f64, n: usize) -> Result<Self> {
        if !(step > 0.0) || n == 0 {
            return domain("workspace needs step > 0 and n >= 1");
        }
        let kernel = LevyTailKernel::new(spec);
        let a = spec.alpha();
        let kernel_nodes: Vec<f64> = (1..=n).map(|k| kernel.eval(k as f64 * step)).collect();
        let (mut m0, mut m1) = (Vec::with_capacity(n), Vec::with_capacity(n));
        if spec.is_stable() {
            let c = rgamma(1.0 - a);
            for m in 0..n {
                let (lo, hi) = (m as f64 * step, (m + 1) as f64 * step);
                let i0 = (hi.powf(1.0 - a) - lo.powf(1.0 - a)) / (1.0 - a);
                let i1 = (hi.powf(2.0 - a) - lo.powf(2.0 - a)) / (2.0 - a);
                m0.push(c * i0);
                m1.push(c * (i1 - lo * i0) / step);
            }
        } else {
            let gj = gauss_jacobi(24, 0.0, -a);
            let gl = gauss_legendre(16);
            for m in 0..n {
                let (lo, hi) = (m as f64 * step, (m + 1) as f64 * step);
                let (s0, s1) = if m == 0 {
                    // nubar r^alpha still carries an r^alpha term: grade toward 0
                    let pts = graded_points(0.0, hi, GRADING_LEVELS, true, false, hi);
                    let (mut s0, mut s1) = (0.0, 0.0);
                    for (q, p) in pts.windows(2).enumerate() {
                        let (pc, ph) = (0.5 * (p[0] + p[1]), 0.5 * (p[1] - p[0]));
                        if q == 0 {
                            let hb = ph.powf(1.0 - a);
                            s0 += hb * gj.apply(|x| kernel.regular_part(pc + ph * x));
                            s1 += hb * gj.apply(|x| kernel.regular_part(pc + ph * x) * (pc + ph * x) / step);
                        } else {
                            s0 += ph * gl.apply(|x| kernel.eval(pc + ph * x));
                            s1 += ph * gl.apply(|x| kernel.eval(pc + ph * x) * (pc + ph * x) / step);
                        }
                    }
                    (s0, s1)
                } else {
                    let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
                    let s0 = h * gl.apply(|x| kernel.eval(c + h * x));
                    let s1 = h * gl.apply(|x| kernel.eval(c + h * x) * (c + h * x - lo) / step);
                    (s0, s1)
                };
                m0.push(s0);
                m1.push(s1);
            }
        }
        Ok(CaputoWorkspace { spec: *spec, step, kernel_nodes, m0, m1 })
    }

    pub fn spec(&self) -> &BernsteinSpec {
        &self.spec
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn kernel_nodes(&self) -> &[f64] {
        &self.kernel_nodes
    }

    /// d^Phi u(j step) from derivative samples u'(k step), k = 0..=j, with u'
    /// linear between samples.
    pub fn derivative_at(&self, du: &[f64], j: usize) -> Result<f64> {
        if j >= du.len() || j > self.m0.len() {
            return domain(format!("grid index {j} outside the workspace"));
        }
        let mut acc = 0.0;
        for i in 0..j {
            let m = j - i - 1;
            acc += du[i] * self.m1[m] + du[i + 1] * (self.m0[m] - self.m1[m]);
        }
        Ok(acc)
    }
}
