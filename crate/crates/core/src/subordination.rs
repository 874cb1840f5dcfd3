//! Subordination operators S_Phi and S_{Phi,H}, the stable derivative
//! formula, and Laplace-transform identities.
//!
//! For the stable family f(s, t) ds = M(z) dz with z = s / t^alpha, so both
//! quadrature forms reduce to unit-time rules that are rescaled per t:
//! f-form nodes s = t^alpha z, and g-form nodes s = t^alpha e^{-alpha y}
//! with weights g(e^y) e^y dy.

use crate::bernstein::BernsteinSpec;
use crate::error::{contract, domain, ErrSlot, Error, Result};
use crate::fou_stats::VarianceEvaluator;
use crate::quadrature::{gauss_jacobi, gauss_legendre, laplace_transform, laplace_transform_weighted, QuadratureConfig};
use crate::stable::{stable_cdf, StableDensityTable};
pub use crate::timefn::{AnalyticFunction, Tail, TimeFunction, TimeGridFunction};
use parking_lot::Mutex;
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

/// Unit-time probability below which the density is truncated.
const TRUNCATION_MASS: f64 = 1e-17;
const MIN_ORDER: usize = 4;

/// Quadrature rule for s -> E v(E(t)) at a fixed t.
#[derive(Debug, Clone, Default)]
pub struct SubRule {
    pub s: Vec<f64>,
    pub w: Vec<f64>,
    /// Mass of E(t) beyond the last node, carried by the tail level.
    pub far_mass: f64,
    pub far_start: f64,
}

impl SubRule {
    pub fn apply(&self, v: &dyn TimeFunction) -> f64 {
        let end = v.support_end();
        let mut acc = 0.0;
        for (&s, &w) in self.s.iter().zip(&self.w) {
            if s > end && matches!(v.tail(), Tail::Forbidden) {
                continue;
            }
            acc += w * v.value(s);
        }
        acc + match v.tail() {
            Tail::Constant(level) => level * self.far_mass,
            Tail::Power(_) => self.far_mass * v.value(self.far_start),
            Tail::Forbidden => 0.0,
        }
    }

    pub fn apply_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.s.iter().zip(&self.w).map(|(&s, &w)| w * f(s)).sum()
    }
}

/// Panels with Gauss order proportional to their share of the parent panel.
fn panels_with_breaks(base: &[f64], breaks: &[f64], order: usize) -> Vec<(f64, f64, usize)> {
    let mut out = Vec::new();
    let lo = base[0];
    let hi = *base.last().unwrap();
    let mut inner: Vec<f64> = breaks.iter().copied().filter(|&b| b > lo && b < hi).collect();
    inner.sort_by(f64::total_cmp);
    let mut bi = 0;
    for w in base.windows(2) {
        let (a, b) = (w[0], w[1]);
        let mut cuts = vec![a];
        while bi < inner.len() && inner[bi] < b {
            if inner[bi] > *cuts.last().unwrap() {
                cuts.push(inner[bi]);
            }
            bi += 1;
        }
        cuts.push(b);
        for c in cuts.windows(2) {
            if c[1] > c[0] {
                let share = (c[1] - c[0]) / (b - a);
                let n = ((order as f64 * share).ceil() as usize).clamp(MIN_ORDER, order);
                out.push((c[0], c[1], n));
            }
        }
    }
    out
}

/// Precomputed unit-time rules for one stable index.
#[derive(Debug)]
pub struct StableSubordinator {
    alpha: f64,
    quad: QuadratureConfig,
    table: StableDensityTable,
    z_panels: Vec<f64>,
    z_end: f64,
    z_far_mass: f64,
    unit_f: SubRule,
    y_panels: Vec<f64>,
    y_tail_mass: f64,
    unit_g: SubRule,
}

impl StableSubordinator {
    pub fn new(alpha: f64, quad: &QuadratureConfig) -> Result<Self> {
        quad.validate()?;
        let table = StableDensityTable::new(alpha)?;
        // P(E(1) > z) = G(z^{-1/alpha})
        let survival = |z: f64| stable_cdf(alpha, z.powf(-1.0 / alpha));
        let mut z_hi = 1.0;
        while survival(z_hi)? > TRUNCATION_MASS && z_hi < quad.s_max {
            z_hi *= 2.0;
        }
        let z_end = if z_hi >= quad.s_max {
            quad.s_max
        } else {
            let mut lo = 0.5 * z_hi;
            for _ in 0..40 {
                let mid = 0.5 * (lo + z_hi);
                if survival(mid)? > TRUNCATION_MASS {
                    lo = mid;
                } else {
                    z_hi = mid;
                }
            }
            z_hi
        };
        let z_far_mass = survival(z_end)?;
        let mut z_panels = vec![0.0];
        let mut width = 0.25f64;
        let mut z = 0.0;
        while z < z_end {
            z = (z + width).min(z_end);
            z_panels.push(z);
            if z >= 2.0 {
                width *= 1.25;
            }
        }
        let (ln_lo, ln_hi) = {
            let (a, b) = table.range();
            (a.ln(), b.ln())
        };
        let mut y_panels = vec![ln_lo];
        let mut y = ln_lo;
        let y_mid = ln_hi + 2.0;
        let y_hi = (y_mid + 2.0).max(36.0 / alpha);
        while y < y_hi {
            y = (y + if y < y_mid { 0.5 } else { 2.0 }).min(y_hi);
            y_panels.push(y);
        }
        let y_tail_mass = table.survival_tail(y_hi.exp());
        let mut sub = StableSubordinator {
            alpha,
            quad: *quad,
            table,
            z_panels,
            z_end,
            z_far_mass,
            unit_f: SubRule::default(),
            y_panels,
            y_tail_mass,
            unit_g: SubRule::default(),
        };
        sub.unit_f = sub.build_f(1.0, &[]);
        sub.unit_g = sub.build_g(1.0, &[]);
        Ok(sub)
    }

    /// Process-wide instance for (alpha, quad).
    pub fn shared(alpha: f64, quad: &QuadratureConfig) -> Result<Arc<Self>> {
        type Key = (u64, u64, usize, u64);
        static POOL: OnceLock<Mutex<HashMap<Key, Arc<StableSubordinator>>>> = OnceLock::new();
        let key = (alpha.to_bits(), quad.s_max.to_bits(), quad.n_nodes, quad.tail_bound_budget.to_bits());
        let pool = POOL.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(s) = pool.lock().get(&key) {
            return Ok(s.clone());
        }
        let built = Arc::new(StableSubordinator::new(alpha, quad)?);
        Ok(pool.lock().entry(key).or_insert(built).clone())
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn table(&self) -> &StableDensityTable {
        &self.table
    }

    /// Unit-time truncation point z_end of the f-form.
    pub fn unit_truncation(&self) -> f64 {
        self.z_end
    }

    fn build_f(&self, t: f64, s_breaks: &[f64]) -> SubRule {
        let scale = t.powf(self.alpha);
        let zb: Vec<f64> = s_breaks.iter().map(|s| s / scale).collect();
        let mut rule = SubRule { far_mass: self.z_far_mass, far_start: self.z_end * scale, ..Default::default() };
        for (a, b, n) in panels_with_breaks(&self.z_panels, &zb, self.quad.n_nodes) {
            let gl = gauss_legendre(n);
            let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let z = c + h * x;
                rule.s.push(z * scale);
                rule.w.push(h * w * self.table.unit_inverse_density(z));
            }
        }
        rule
    }

    fn build_g(&self, t: f64, s_breaks: &[f64]) -> SubRule {
        let a = self.alpha;
        let scale = t.powf(a);
        let yb: Vec<f64> = s_breaks.iter().filter(|&&s| s > 0.0).map(|&s| -(s / scale).ln() / a).collect();
        let mut rule = SubRule::default();
        for (lo, hi, n) in panels_with_breaks(&self.y_panels, &yb, self.quad.n_nodes) {
            let gl = gauss_legendre(n);
            let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let y = c + h * x;
                let ww = y.exp();
                rule.s.push(scale * (-a * y).exp());
                rule.w.push(h * w * self.table.g(ww) * ww);
            }
        }
        // E(t) below the smallest node is represented by s = 0
        rule.s.push(0.0);
        rule.w.push(self.y_tail_mass);
        rule
    }

    pub fn f_rule(&self, t: f64, s_breaks: &[f64]) -> SubRule {
        if s_breaks.is_empty() {
            let scale = t.powf(self.alpha);
            let mut r = self.unit_f.clone();
            r.s.iter_mut().for_each(|s| *s *= scale);
            r.far_start *= scale;
            r
        } else {
            self.build_f(t, s_breaks)
        }
    }

    pub fn g_rule(&self, t: f64, s_breaks: &[f64]) -> SubRule {
        if s_breaks.is_empty() {
            let scale = t.powf(self.alpha);
            let mut r = self.unit_g.clone();
            r.s.iter_mut().for_each(|s| *s *= scale);
            r
        } else {
            self.build_g(t, s_breaks)
        }
    }

    /// f-form rule for S(V' v): the first panel carries the Jacobi weight
    /// z^{2H-1} and V'(s)/z^{2H-1} is folded into the weights.
    pub fn weighted_rule(&self, t: f64, ev: &VarianceEvaluator, s_breaks: &[f64]) -> SubRule {
        let scale = t.powf(self.alpha);
        let b = 2.0 * ev.hurst() - 1.0;
        let zb: Vec<f64> = s_breaks.iter().map(|s| s / scale).collect();
        let mut rule = SubRule { far_mass: 0.0, far_start: self.z_end * scale, ..Default::default() };
        for (k, (lo, hi, n)) in panels_with_breaks(&self.z_panels, &zb, self.quad.n_nodes).into_iter().enumerate() {
            let (c, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
            if k == 0 {
                let gj = gauss_jacobi(self.quad.n_nodes, 0.0, b);
                let hb = h.powf(b + 1.0);
                for (x, w) in gj.nodes.iter().zip(&gj.weights) {
                    let z = c + h * x;
                    let s = z * scale;
                    rule.s.push(s);
                    rule.w.push(hb * w * self.table.unit_inverse_density(z) * ev.v_prime(s) / z.powf(b));
                }
                continue;
            }
            let gl = gauss_legendre(n);
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let z = c + h * x;
                let s = z * scale;
                rule.s.push(s);
                rule.w.push(h * w * self.table.unit_inverse_density(z) * ev.v_prime(s));
            }
        }
        rule
    }

    /// Checks the Forbidden-tail budget: P(E(t) > support end).
    fn check_support(&self, v: &dyn TimeFunction, t: f64) -> Result<()> {
        if matches!(v.tail(), Tail::Forbidden) {
            let end = v.support_end();
            if end.is_finite() {
                let mass = stable_cdf(self.alpha, t * end.powf(-1.0 / self.alpha))?;
                if mass > self.quad.tail_bound_budget {
                    return contract(format!(
                        "mass {mass:e} of E({t}) lies beyond the grid end {end} with a forbidden tail (budget {:e})",
                        self.quad.tail_bound_budget
                    ));
                }
            }
        }
        Ok(())
    }

    fn relevant_breaks(&self, v: &dyn TimeFunction) -> Vec<f64> {
        v.breakpoints()
    }

    pub fn subordinate_f(&self, v: &dyn TimeFunction, t: f64) -> Result<f64> {
        self.check_support(v, t)?;
        Ok(self.f_rule(t, &self.relevant_breaks(v)).apply(v))
    }

    pub fn subordinate_g(&self, v: &dyn TimeFunction, t: f64) -> Result<f64> {
        self.check_support(v, t)?;
        Ok(self.g_rule(t, &self.relevant_breaks(v)).apply(v))
    }

    /// g-form for constant tails, f-form otherwise.
    pub fn subordinate(&self, v: &dyn TimeFunction, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(v.value(0.0));
        }
        if !(t > 0.0) {
            return domain(format!("subordination needs t >= 0, got {t}"));
        }
        match v.tail() {
            Tail::Constant(_) => self.subordinate_g(v, t),
            _ => self.subordinate_f(v, t),
        }
    }
}

fn stable_sub(spec: &BernsteinSpec, quad: &QuadratureConfig) -> Result<Arc<StableSubordinator>> {
    if !spec.is_stable() {
        return Err(Error::Unsupported(
            "density quadrature needs a stable spec; use subordinate_monte_carlo for tempered subordinators".into(),
        ));
    }
    StableSubordinator::shared(spec.alpha(), quad)
}

/// S_Phi v(t) = E v(E(t)).
pub fn subordinate(v: &dyn TimeFunction, spec: &BernsteinSpec, t: f64, quad: &QuadratureConfig) -> Result<f64> {
    stable_sub(spec, quad)?.subordinate(v, t)
}

/// S_Phi (V' v)(t).
pub fn weighted_subordinate(
    v: &dyn TimeFunction,
    spec: &BernsteinSpec,
    hurst: f64,
    theta: f64,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let sub = stable_sub(spec, quad)?;
    let ev = VarianceEvaluator::shared(hurst, theta)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if !(t > 0.0) {
        return domain(format!("subordination needs t >= 0, got {t}"));
    }
    sub.check_support(v, t)?;
    let rule = sub.weighted_rule(t, &ev, &v.breakpoints());
    let end = v.support_end();
    let forbidden = matches!(v.tail(), Tail::Forbidden);
    Ok(rule.apply_fn(|s| if forbidden && s > end { 0.0 } else { v.value(s) }))
}

/// d/dt S_alpha v(t) = alpha t^{-1} S_alpha(z v'(z))(t).
pub fn subordinate_derivative(v: &dyn TimeFunction, alpha: f64, t: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !v.has_derivative() {
        return contract("the derivative formula needs derivative samples");
    }
    if !(t > 0.0) {
        return domain(format!("derivative needs t > 0, got {t}"));
    }
    let sub = StableSubordinator::shared(alpha, quad)?;
    sub.check_support(v, t)?;
    let bps = v.breakpoints();
    let rule = match v.tail() {
        Tail::Constant(_) => sub.g_rule(t, &bps),
        _ => sub.f_rule(t, &bps),
    };
    let end = v.support_end();
    let forbidden = matches!(v.tail(), Tail::Forbidden);
    let h = |z: f64| {
        if z == 0.0 || (forbidden && z > end) {
            return 0.0;
        }
        z * v.derivative(z).unwrap_or(f64::NAN)
    };
    Ok(alpha / t * rule.apply_fn(h))
}

/// L_H v(lambda) = int_0^inf e^{-lambda t} V'(t) v(t) dt.
pub fn weighted_laplace_lh(v: &dyn TimeFunction, hurst: f64, theta: f64, lambda: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("Laplace transforms need lambda > 0, got {lambda}"));
    }
    let ev = VarianceEvaluator::shared(hurst, theta)?;
    let b = 2.0 * hurst - 1.0;
    if matches!(v.tail(), Tail::Forbidden) && v.support_end().is_finite() {
        return contract("Laplace transforms need v on all of [0, inf)");
    }
    let f = |t: f64| if t == 0.0 { 0.0 } else { ev.v_prime(t) / t.powf(b) * v.value(t) };
    let out = laplace_transform_weighted(&f, lambda, &v.breakpoints(), quad.laplace_options(), b);
    if !out.is_finite() {
        return Err(Error::Numeric { msg: "weighted Laplace transform is not finite".into(), estimate: out });
    }
    Ok(out)
}

/// Plain Laplace transform of a time function.
pub fn laplace_of(v: &dyn TimeFunction, lambda: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !(lambda > 0.0) {
        return domain(format!("Laplace transforms need lambda > 0, got {lambda}"));
    }
    if matches!(v.tail(), Tail::Forbidden) && v.support_end().is_finite() {
        return contract("Laplace transforms need v on all of [0, inf)");
    }
    Ok(laplace_transform(&|t| v.value(t), lambda, &v.breakpoints(), quad.laplace_options()))
}

/// | L[S_Phi v](lambda) - Phi(lambda)/lambda L[v](Phi(lambda)) |.
pub fn laplace_subordination_residual(v: &dyn TimeFunction, spec: &BernsteinSpec, lambda: f64, quad: &QuadratureConfig) -> Result<f64> {
    let sub = stable_sub(spec, quad)?;
    let phi = spec.phi(lambda)?;
    let rhs = phi / lambda * laplace_of(v, phi, quad)?;
    let slot = ErrSlot::default();
    let lhs = laplace_transform(&|t| slot.take(sub.subordinate(v, t)), lambda, &[], quad.laplace_options());
    slot.finish((lhs - rhs).abs())
}

/// | L[S_{Phi,H} v](lambda) - Phi(lambda)/lambda L_H v(Phi(lambda)) |.
pub fn laplace_weighted_subordination_residual(
    v: &dyn TimeFunction,
    spec: &BernsteinSpec,
    hurst: f64,
    theta: f64,
    lambda: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    let phi = spec.phi(lambda)?;
    let rhs = phi / lambda * weighted_laplace_lh(v, hurst, theta, phi, quad)?;
    let slot = ErrSlot::default();
    let lhs = laplace_transform(
        &|t| slot.take(weighted_subordinate(v, spec, hurst, theta, t, quad)),
        lambda,
        &[],
        quad.laplace_options(),
    );
    slot.finish((lhs - rhs).abs())
}

/// t -> S_alpha v(t) as a time function, with the derivative formula
/// supplying d/dt. Failures inside evaluations are kept and reported by
/// `finish`, since the trait methods are infallible.
pub struct Subordinated<'a> {
    v: &'a dyn TimeFunction,
    sub: Arc<StableSubordinator>,
    quad: QuadratureConfig,
    level: Option<f64>,
    error: Mutex<Option<Error>>,
}

impl<'a> Subordinated<'a> {
    /// `level` is the large-time limit of v, if it has one.
    pub fn new(v: &'a dyn TimeFunction, spec: &BernsteinSpec, quad: &QuadratureConfig) -> Result<Self> {
        let level = match v.tail() {
            Tail::Constant(l) => Some(l),
            _ => None,
        };
        Ok(Subordinated { v, sub: stable_sub(spec, quad)?, quad: *quad, level, error: Mutex::new(None) })
    }

    fn keep(&self, r: Result<f64>) -> f64 {
        r.unwrap_or_else(|e| {
            self.error.lock().get_or_insert(e);
            f64::NAN
        })
    }

    pub fn finish<T>(self, value: T) -> Result<T> {
        match self.error.into_inner() {
            Some(e) => Err(e),
            None => Ok(value),
        }
    }
}

impl TimeFunction for Subordinated<'_> {
    fn value(&self, t: f64) -> f64 {
        self.keep(self.sub.subordinate(self.v, t))
    }

    fn derivative(&self, t: f64) -> Option<f64> {
        if !self.v.has_derivative() {
            return None;
        }
        Some(self.keep(subordinate_derivative(self.v, self.sub.alpha(), t, &self.quad)))
    }

    fn has_derivative(&self) -> bool {
        self.v.has_derivative()
    }

    fn tail(&self) -> Tail {
        match self.level {
            Some(l) => Tail::Constant(l),
            None => Tail::Power(0.0),
        }
    }
}

/// Ensemble mean of v(E(t)) and its standard error.
pub fn subordinate_monte_carlo(v: &dyn TimeFunction, samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let vals: Vec<f64> = samples.iter().map(|&e| v.value(e)).collect();
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}
