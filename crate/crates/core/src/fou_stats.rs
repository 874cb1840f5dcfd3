//! Variance of the fractional OU process, its Gaussian density, and
//! subordinated moments.
//!
//! With a = 2H - 1 the variance reduces to a single integral over the
//! diagonal band |u - v| = w:
//!   V(t)  = H(2H-1) theta int_0^t w^{2H-2} (e^{-w/theta} - e^{(w-2t)/theta}) dw
//!   V'(t) = 2H(2H-1) int_0^t w^{2H-2} e^{(w-2t)/theta} dw

use crate::bernstein::BernsteinSpec;
use crate::error::{domain, Error, Result};
use crate::quadrature::{gauss_legendre, jacobi_left_integrate, ChebPanels, QuadratureConfig};
use crate::special::{gamma, odd_double_factorial};
use crate::subordination::{subordinate, StableSubordinator};
use crate::timefn::{AnalyticFunction, Tail};
use parking_lot::{Mutex, RwLock};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

const JACOBI_ORDER: usize = 24;
const PANEL_ORDER: usize = 16;
/// Beyond this many relaxation times the neglected pieces are below e^{-40}.
const FAR_FIELD: f64 = 40.0;

fn check_params(hurst: f64, theta: f64) -> Result<()> {
    if !(hurst > 0.5 && hurst < 1.0) {
        return domain(format!("Hurst index must lie in (1/2, 1), got {hurst}"));
    }
    if !(theta > 0.0 && theta.is_finite()) {
        return domain(format!("theta must be positive, got {theta}"));
    }
    Ok(())
}

/// Memoized evaluator of (V, V'). Invariant: cached entries are pure
/// functions of the key, so fill order cannot change any value.
#[derive(Debug)]
pub struct VarianceEvaluator {
    hurst: f64,
    theta: f64,
    cache: RwLock<HashMap<u64, (f64, f64)>>,
}

impl VarianceEvaluator {
    pub fn new(hurst: f64, theta: f64) -> Result<Self> {
        check_params(hurst, theta)?;
        Ok(VarianceEvaluator { hurst, theta, cache: RwLock::new(HashMap::new()) })
    }

    /// Process-wide evaluator for (H, theta).
    pub fn shared(hurst: f64, theta: f64) -> Result<Arc<Self>> {
        check_params(hurst, theta)?;
        static POOL: OnceLock<Mutex<HashMap<(u64, u64), Arc<VarianceEvaluator>>>> = OnceLock::new();
        let pool = POOL.get_or_init(|| Mutex::new(HashMap::new()));
        let mut guard = pool.lock();
        let ev = guard
            .entry((hurst.to_bits(), theta.to_bits()))
            .or_insert_with(|| Arc::new(VarianceEvaluator::new(hurst, theta).expect("checked")));
        Ok(ev.clone())
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Stationary variance theta^{2H} H Gamma(2H).
    pub fn stationary(&self) -> f64 {
        self.theta.powf(2.0 * self.hurst) * self.hurst * gamma(2.0 * self.hurst)
    }

    pub fn cache_len(&self) -> usize {
        self.cache.read().len()
    }

    /// (V(t), V'(t)) for t >= 0, memoized.
    pub fn both(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (0.0, if t == 0.0 { 0.0 } else { f64::NAN });
        }
        let key = t.to_bits();
        if let Some(v) = self.cache.read().get(&key) {
            return *v;
        }
        let v = self.compute(t);
        *self.cache.write().entry(key).or_insert(v)
    }

    pub fn v(&self, t: f64) -> f64 {
        self.both(t).0
    }

    pub fn v_prime(&self, t: f64) -> f64 {
        self.both(t).1
    }

    /// Uncached evaluation.
    pub fn compute(&self, t: f64) -> (f64, f64) {
        let h = self.hurst;
        let th = self.theta;
        let p = 2.0 * h - 2.0;
        let c = h * (2.0 * h - 1.0);
        // band integrand of V without cancellation: e^{-w/th} (1 - e^{2(w-t)/th})
        let fv = |w: f64| -(-w / th).exp() * (2.0 * (w - t) / th).exp_m1();
        let fd = |w: f64| ((w - 2.0 * t) / th).exp();
        if t > FAR_FIELD * th {
            let lo = t - FAR_FIELD * th;
            let b = self.panels(lo, t, |w| w.powf(p) * fd(w));
            let a_inf = th.powf(2.0 * h - 1.0) * gamma(2.0 * h - 1.0);
            return (c * th * (a_inf - b), 2.0 * c * b);
        }
        let near = t.min(2.0 * th);
        let mut iv = jacobi_left_integrate(JACOBI_ORDER, 0.0, near, p, fv);
        let mut id = jacobi_left_integrate(JACOBI_ORDER, 0.0, near, p, fd);
        if t > near {
            iv += self.panels(near, t, |w| w.powf(p) * fv(w));
            id += self.panels(near, t, |w| w.powf(p) * fd(w));
        }
        (c * th * iv, 2.0 * c * id)
    }

    fn panels(&self, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
        let n = ((b - a) / self.theta).ceil().max(1.0) as usize;
        let gl = gauss_legendre(PANEL_ORDER);
        let h = (b - a) / n as f64;
        (0..n)
            .map(|k| {
                let lo = a + k as f64 * h;
                let (cc, hh) = (lo + 0.5 * h, 0.5 * h);
                hh * gl.apply(|x| f(cc + hh * x))
            })
            .sum()
    }

    /// V'(t) by fourth-order central differences of V with one Richardson
    /// step. Independent of the band formula for V'; loses relative accuracy
    /// once V' drops below ~1e-10 V.
    pub fn v_prime_fd(&self, t: f64) -> f64 {
        let mut h = 1e-4f64.max(1e-3 * t);
        if t < 4.0 * h {
            h = t / 4.0;
        }
        let d = |h: f64| {
            let f = |x: f64| self.compute(x).0;
            (-f(t + 2.0 * h) + 8.0 * f(t + h) - 8.0 * f(t - h) + f(t - 2.0 * h)) / (12.0 * h)
        };
        let (d1, d2) = (d(h), d(0.5 * h));
        d2 + (d2 - d1) / 15.0
    }
}

/// Interpolated (V, V') for bulk evaluation at many distinct times, where
/// memoization would only grow the cache. ln V and ln V' are tabulated in
/// ln t on [1e-6 theta, 60 theta]; outside that window the exact evaluator
/// is called. Relative accuracy is about 1e-13.
#[derive(Debug, Clone)]
pub struct VarianceTable {
    hurst: f64,
    theta: f64,
    stationary: f64,
    ln_v: ChebPanels,
    ln_dv: ChebPanels,
    exact: Arc<VarianceEvaluator>,
}

impl VarianceTable {
    pub fn new(hurst: f64, theta: f64) -> Result<Self> {
        let ev = Arc::new(VarianceEvaluator::new(hurst, theta)?);
        let (lo, hi) = ((1e-6 * theta).ln(), (60.0 * theta).ln());
        let mut dv = Vec::new();
        let ln_v = ChebPanels::new(lo, hi, 0.25, PANEL_ORDER, |u| {
            let (v, d) = ev.compute(u.exp());
            dv.push(d.ln());
            Ok(v.ln())
        })?;
        let mut it = dv.into_iter();
        let ln_dv = ChebPanels::new(lo, hi, 0.25, PANEL_ORDER, |_| Ok(it.next().expect("same node layout")))?;
        Ok(VarianceTable { hurst, theta, stationary: ev.stationary(), ln_v, ln_dv, exact: ev })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn stationary(&self) -> f64 {
        self.stationary
    }

    pub fn both(&self, t: f64) -> (f64, f64) {
        if t <= 0.0 {
            return (0.0, if t == 0.0 { 0.0 } else { f64::NAN });
        }
        let u = t.ln();
        if u < self.ln_v_lo() || u > self.ln_v_hi() {
            return self.exact.compute(t);
        }
        (self.ln_v.eval(u).exp(), self.ln_dv.eval(u).exp())
    }

    fn ln_v_lo(&self) -> f64 {
        self.ln_v.nodes()[0]
    }

    fn ln_v_hi(&self) -> f64 {
        *self.ln_v.nodes().last().unwrap()
    }
}

pub fn variance_v2(hurst: f64, theta: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return domain(format!("variance needs t >= 0, got {t}"));
    }
    Ok(VarianceEvaluator::shared(hurst, theta)?.v(t))
}

pub fn variance_v2_prime(hurst: f64, theta: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("variance derivative needs t > 0, got {t}"));
    }
    Ok(VarianceEvaluator::shared(hurst, theta)?.v_prime(t))
}

/// Finite-difference route for V', kept as an independent cross-check.
pub fn variance_v2_prime_fd(hurst: f64, theta: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("variance derivative needs t > 0, got {t}"));
    }
    Ok(VarianceEvaluator::shared(hurst, theta)?.v_prime_fd(t))
}

pub(crate) fn gaussian(x: f64, var: f64) -> f64 {
    (-0.5 * x * x / var).exp() / (2.0 * PI * var).sqrt()
}

/// Centered Gaussian density with variance V(t).
pub fn gaussian_density_ph(hurst: f64, theta: f64, x: f64, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return domain(format!("p_H needs t > 0, got {t}"));
    }
    Ok(gaussian(x, VarianceEvaluator::shared(hurst, theta)?.v(t)))
}

/// S_alpha[(2n-1)!! V^n](t).
pub fn moments_subordinated(
    n: u32,
    hurst: f64,
    theta: f64,
    spec: &BernsteinSpec,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if n == 0 {
        return domain("moment order must be positive");
    }
    if !(t >= 0.0) {
        return domain(format!("moments need t >= 0, got {t}"));
    }
    let ev = VarianceEvaluator::shared(hurst, theta)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    if !spec.is_stable() {
        return Err(Error::Unsupported(
            "density path needs a stable spec; estimate tempered moments with moments_monte_carlo".into(),
        ));
    }
    let k = odd_double_factorial(n);
    let level = k * ev.stationary().powi(n as i32);
    let ev2 = ev.clone();
    let v = AnalyticFunction::new(move |s| k * ev2.v(s).powi(n as i32), Tail::Constant(level));
    subordinate(&v, spec, t, quad)
}

/// Large-time limit (2 theta^{2H} H Gamma(2H))^n Gamma((2n+1)/2) / sqrt(pi).
pub fn moment_limit(n: u32, hurst: f64, theta: f64) -> f64 {
    let base = 2.0 * theta.powf(2.0 * hurst) * hurst * gamma(2.0 * hurst);
    base.powi(n as i32) * gamma((2 * n + 1) as f64 / 2.0) / PI.sqrt()
}

/// Sample estimate of E[U^{2n}] and its standard error from path values.
pub fn moments_monte_carlo(n: u32, values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let pw: Vec<f64> = values.iter().map(|v| v.powi(2 * n as i32)).collect();
    let mean = pw.iter().sum::<f64>() / m;
    let var = pw.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / (m - 1.0);
    (mean, (var / m).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InverseMoment {
    pub cutoff: f64,
    /// int_eps^inf s^{-H} f(s, t) ds
    pub i: f64,
    /// int_eps^inf s^{-2H} f(s, t) ds
    pub j: f64,
}

/// Partial inverse moments of E_alpha(t) for each cutoff. H = 0 is allowed.
pub fn inverse_moment_diagnostic(alpha: f64, hurst: f64, t: f64, cutoffs: &[f64]) -> Result<Vec<InverseMoment>> {
    if !(0.0..1.0).contains(&hurst) || !(t > 0.0) {
        return domain("inverse moments need 0 <= H < 1 and t > 0");
    }
    if cutoffs.iter().any(|&c| !(c > 0.0)) || cutoffs.windows(2).any(|w| w[1] >= w[0]) {
        return domain("cutoffs must be positive and strictly decreasing");
    }
    let spec = BernsteinSpec::stable(alpha)?;
    let sub = StableSubordinator::shared(spec.alpha(), &QuadratureConfig::default())?;
    let scale = t.powf(alpha);
    let f = |s: f64| sub.table().unit_inverse_density(s / scale) / scale;
    let s_end = sub.unit_truncation() * scale;
    let gl = gauss_legendre(PANEL_ORDER);
    let panel = |a: f64, b: f64, p: f64| {
        let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
        h * gl.apply(|x| {
            let s = c + h * x;
            s.powf(-p) * f(s)
        })
    };
    // bulk: [scale, s_end] in uniform panels; then geometric panels down to each cutoff
    let bulk = |p: f64| {
        let n = ((s_end - scale) / (0.25 * scale)).ceil().max(1.0) as usize;
        let h = (s_end - scale) / n as f64;
        (0..n).map(|k| panel(scale + k as f64 * h, scale + (k + 1) as f64 * h, p)).sum::<f64>()
    };
    let (bi, bj) = (bulk(hurst), bulk(2.0 * hurst));
    let mut out = Vec::with_capacity(cutoffs.len());
    for &eps in cutoffs {
        let (mut i, mut j) = (bi, bj);
        let (mut hi, mut lo) = (scale, 0.5 * scale);
        loop {
            let a = lo.max(eps);
            i += panel(a, hi, hurst);
            j += panel(a, hi, 2.0 * hurst);
            if a <= eps {
                break;
            }
            hi = lo;
            lo *= 0.5;
        }
        if eps > scale {
            // cutoff inside the bulk: recompute directly
            let n = ((s_end - eps) / (0.25 * scale)).ceil().max(1.0) as usize;
            let h = (s_end - eps) / n as f64;
            i = (0..n).map(|k| panel(eps + k as f64 * h, eps + (k + 1) as f64 * h, hurst)).sum();
            j = (0..n).map(|k| panel(eps + k as f64 * h, eps + (k + 1) as f64 * h, 2.0 * hurst)).sum();
        }
        out.push(InverseMoment { cutoff: eps, i, j });
    }
    Ok(out)
}
