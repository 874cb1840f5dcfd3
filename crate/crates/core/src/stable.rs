//! One-sided stable densities and the inverse stable subordinator density.
//!
//! The density and CDF of the standard one-sided alpha-stable law
//! (Laplace exponent lambda^alpha) are computed from Zolotarev's integral
//! representation over phi in (0, pi). Integrands are scaled by exp(z K0) so
//! that log-densities keep full relative accuracy deep in the left tail.

use crate::bernstein::BernsteinSpec;
use crate::error::{domain, Error, Result};
use crate::quadrature::{integrate_adaptive, laplace_transform, ChebPanels, QuadratureConfig, Tolerance};
use crate::special::{gamma, ln_gamma, rgamma};
use std::cell::RefCell;
use std::f64::consts::PI;

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

/// Zolotarev kernel: increasing on (0, pi) from K0 to infinity.
#[derive(Debug, Clone, Copy)]
struct Kernel {
    alpha: f64,
    p: f64,
    q: f64,
    k0: f64,
}

impl Kernel {
    fn new(alpha: f64) -> Self {
        let p = alpha / (1.0 - alpha);
        let q = 1.0 / (1.0 - alpha);
        Kernel { alpha, p, q, k0: alpha.powf(p) * (1.0 - alpha) }
    }

    fn eval(&self, phi: f64) -> f64 {
        if phi <= 0.0 {
            return self.k0;
        }
        if phi >= PI {
            return f64::INFINITY;
        }
        let a = self.alpha;
        let ln = self.p * (a * phi).sin().ln() + ((1.0 - a) * phi).sin().ln() - self.q * phi.sin().ln();
        ln.exp()
    }

    /// phi in (0, pi) with K(phi) = target; target > K0.
    fn solve(&self, target: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, PI);
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            if self.eval(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-15 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    /// Integration breakpoints adapted to exp(-z (K - K0)).
    fn breakpoints(&self, z: f64) -> Vec<f64> {
        let mut pts = vec![0.0];
        for target in [self.k0 + 1.0 / z, 1.0 / z, self.k0 + 8.0 / z] {
            if target > self.k0 && target.is_finite() {
                let phi = self.solve(target);
                if phi > 0.0 && phi < PI {
                    pts.push(phi);
                }
            }
        }
        let end = if (self.k0 + 60.0 / z).is_finite() { self.solve(self.k0 + 60.0 / z) } else { PI };
        pts.retain(|&p| p < end);
        pts.push(end);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

/// Rounding in K(phi) is amplified by z in the exponent; the relative
/// tolerance tracks that floor.
fn zolotarev_tolerance(z: f64, k0: f64) -> Tolerance {
    Tolerance { abs: 1e-300, rel: 1e-13f64.max(4e-15 * z * k0), max_intervals: 2000 }
}

/// ln g_alpha(x) for x > 0.
pub fn stable_log_density(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(x > 0.0) {
        return domain(format!("stable density needs x > 0, got {x}"));
    }
    if x.is_infinite() {
        return Ok(f64::NEG_INFINITY);
    }
    let k = Kernel::new(alpha);
    let z = x.powf(-k.p);
    if z * k.k0 > 1e8 {
        // g < exp(-1e8); the integral cannot be resolved and does not matter
        return Ok(f64::NEG_INFINITY);
    }
    let h = |phi: f64| {
        let kv = k.eval(phi);
        if kv.is_infinite() {
            return 0.0;
        }
        kv * (-z * (kv - k.k0)).exp()
    };
    let integral = integrate_adaptive(&h, &k.breakpoints(z), zolotarev_tolerance(z, k.k0))?;
    Ok((k.p).ln() - PI.ln() - k.q * x.ln() - z * k.k0 + integral.ln())
}

/// Density g_alpha(x) of the one-sided stable law with E e^{-lambda S} = e^{-lambda^alpha}.
pub fn stable_density_g(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if x <= 0.0 {
        if x.is_nan() {
            return domain("stable density at NaN");
        }
        return Ok(0.0);
    }
    Ok(stable_log_density(alpha, x)?.exp())
}

/// P(S <= x).
pub fn stable_cdf(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    if x.is_infinite() {
        return Ok(1.0);
    }
    let k = Kernel::new(alpha);
    let z = x.powf(-k.p);
    if z * k.k0 > 1e8 {
        return Ok(0.0);
    }
    let h = |phi: f64| {
        let kv = k.eval(phi);
        if kv.is_infinite() {
            0.0
        } else {
            (-z * (kv - k.k0)).exp()
        }
    };
    let integral = integrate_adaptive(&h, &k.breakpoints(z), zolotarev_tolerance(z, k.k0))?;
    Ok(((-z * k.k0).exp() * integral / PI).min(1.0))
}

/// P(S > x), computed without cancellation for large x.
pub fn stable_survival(alpha: f64, x: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    let k = Kernel::new(alpha);
    let z = x.powf(-k.p);
    if z * k.k0 > 2.0 {
        return Ok(1.0 - stable_cdf(alpha, x)?);
    }
    let h = |phi: f64| {
        let kv = k.eval(phi);
        if kv.is_infinite() {
            1.0
        } else {
            -(-z * kv).exp_m1()
        }
    };
    let mut pts = k.breakpoints(z);
    if *pts.last().unwrap() < PI {
        pts.push(PI);
    }
    Ok(integrate_adaptive(&h, &pts, zolotarev_tolerance(z, k.k0))? / PI)
}

/// Density of the inverse stable subordinator E(t) at s >= 0, t > 0:
/// f(s, t) = (t / alpha) s^{-1-1/alpha} g(t s^{-1/alpha}).
pub fn inverse_stable_density_f(alpha: f64, s: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(t > 0.0) || !(s >= 0.0) {
        return domain(format!("inverse stable density needs s >= 0, t > 0 (s = {s}, t = {t})"));
    }
    if s == 0.0 {
        return Ok(t.powf(-alpha) * rgamma(1.0 - alpha));
    }
    let x = t * s.powf(-1.0 / alpha);
    let lg = stable_log_density(alpha, x)?;
    Ok((lg + (t / alpha).ln() - (1.0 + 1.0 / alpha) * s.ln()).exp())
}

/// P(E(t) > s) = P(S <= t s^{-1/alpha}).
pub fn inverse_stable_survival(alpha: f64, s: f64, t: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if s <= 0.0 {
        return Ok(1.0);
    }
    stable_cdf(alpha, t * s.powf(-1.0 / alpha))
}

/// | int_0^inf e^{-lambda t} f(s, t) dt - (Phi(lambda)/lambda) e^{-s Phi(lambda)} |.
pub fn laplace_identity_residual(spec: &BernsteinSpec, s: f64, lambda: f64, quad: &QuadratureConfig) -> Result<f64> {
    if !spec.is_stable() {
        return Err(Error::Unsupported(
            "no evaluable density for tempered subordinators; use the empirical residual".into(),
        ));
    }
    if !(lambda > 0.0 && s >= 0.0) {
        return domain(format!("Laplace identity needs s >= 0 and lambda > 0 (s = {s}, lambda = {lambda})"));
    }
    quad.validate()?;
    let alpha = spec.alpha();
    let phi = spec.phi(lambda)?;
    let rhs = phi / lambda * (-s * phi).exp();
    if s == 0.0 {
        // f(0, t) = t^{-alpha} / Gamma(1 - alpha) is integrated in closed form
        return Ok((lambda.powf(alpha - 1.0) - rhs).abs());
    }
    let split = s.powf(1.0 / alpha);
    let failure = RefCell::new(None);
    let f = |t: f64| match inverse_stable_density_f(alpha, s, t) {
        Ok(v) => v,
        Err(e) => {
            failure.borrow_mut().get_or_insert(e.to_string());
            0.0
        }
    };
    let lhs = laplace_transform(&f, lambda, &[split], quad.laplace_options());
    if let Some(msg) = failure.into_inner() {
        return Err(Error::Numeric { msg, estimate: lhs });
    }
    Ok((lhs - rhs).abs())
}

/// Empirical version of the Laplace identity for any Bernstein function:
/// estimates int e^{-lambda t} f(s, t) dt with a Gaussian kernel in s applied
/// to sampled inverse-subordinator paths on a uniform time grid.
pub fn empirical_laplace_identity_residual(
    spec: &BernsteinSpec,
    time_grid: &[f64],
    paths: &[f64],
    s: f64,
    lambda: f64,
    bandwidth: f64,
) -> Result<f64> {
    let n_t = time_grid.len();
    if n_t < 2 || paths.len() % n_t != 0 || paths.is_empty() {
        return domain("ensemble shape does not match its time grid");
    }
    let n_paths = paths.len() / n_t;
    let norm = 1.0 / (bandwidth * (2.0 * PI).sqrt());
    let mut lhs = 0.0;
    for j in 1..n_t {
        let dt = time_grid[j] - time_grid[j - 1];
        let dens = |col: usize| {
            let mut acc = 0.0;
            for p in 0..n_paths {
                let e = paths[p * n_t + col];
                let u = (e - s) / bandwidth;
                // reflection keeps the estimator unbiased at the boundary s = 0
                let r = (e + s) / bandwidth;
                acc += (-0.5 * u * u).exp() + if s < 4.0 * bandwidth { (-0.5 * r * r).exp() } else { 0.0 };
            }
            norm * acc / n_paths as f64
        };
        let (t0, t1) = (time_grid[j - 1], time_grid[j]);
        let d0 = if j == 1 { dens(0) } else { dens(j - 1) };
        lhs += 0.5 * dt * ((-lambda * t0).exp() * d0 + (-lambda * t1).exp() * dens(j));
    }
    let phi = spec.phi(lambda)?;
    Ok((lhs - phi / lambda * (-s * phi).exp()).abs())
}

const TABLE_ORDER: usize = 16;
const TABLE_PANEL: f64 = 0.5;
const SERIES_TERMS: usize = 40;

/// Tabulated stable density: piecewise Chebyshev interpolation of ln g in
/// ln x, a convergent power series beyond `x_hi`, and zero below `x_lo`
/// where g < e^{-700}.
#[derive(Debug, Clone)]
pub struct StableDensityTable {
    alpha: f64,
    ln_x_lo: f64,
    ln_x_hi: f64,
    /// ln g as a function of ln x.
    ln_g: ChebPanels,
    series: Vec<(f64, f64)>,
}

impl StableDensityTable {
    pub fn new(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        let k = Kernel::new(alpha);
        let z_lo = 720.0 / k.k0;
        let ln_x_lo = -z_lo.ln() / k.p;
        let ln_x_hi = (20f64.ln() / alpha).max(ln_x_lo + 4.0);
        let ln_g = ChebPanels::new(ln_x_lo, ln_x_hi, TABLE_PANEL, TABLE_ORDER, |u| stable_log_density(alpha, u.exp()))?;
        let series = (1..=SERIES_TERMS)
            .map(|kk| {
                let kf = kk as f64;
                let sign = if kk % 2 == 1 { 1.0 } else { -1.0 };
                let c = sign * (ln_gamma(kf * alpha + 1.0) - ln_gamma(kf + 1.0)).exp() * (kf * PI * alpha).sin() / PI;
                (c, kf * alpha)
            })
            .collect();
        Ok(StableDensityTable { alpha, ln_x_lo, ln_x_hi, ln_g, series })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Table abscissae x (not logarithms).
    pub fn nodes(&self) -> Vec<f64> {
        self.ln_g.nodes().iter().map(|u| u.exp()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.ln_g.values().iter().map(|v| v.exp()).collect()
    }

    /// (x_lo, x_hi): zero below, series above.
    pub fn range(&self) -> (f64, f64) {
        (self.ln_x_lo.exp(), self.ln_x_hi.exp())
    }

    fn series_density(&self, x: f64) -> f64 {
        self.series.iter().map(|&(c, e)| c * x.powf(-e - 1.0)).sum()
    }

    /// P(S > x) from the series; accurate for x >= x_hi.
    pub fn survival_tail(&self, x: f64) -> f64 {
        self.series.iter().map(|&(c, e)| c / e * x.powf(-e)).sum()
    }

    pub fn g(&self, x: f64) -> f64 {
        if !(x > 0.0) {
            return 0.0;
        }
        let u = x.ln();
        if u < self.ln_x_lo {
            return 0.0;
        }
        if u >= self.ln_x_hi {
            return self.series_density(x);
        }
        self.ln_g.eval(u).exp()
    }

    /// Trapezoid mass over the table nodes plus the series tail beyond x_hi.
    pub fn trapezoid_mass(&self) -> f64 {
        let mut m = 0.0;
        for w in self.ln_g.nodes().windows(2).zip(self.ln_g.values().windows(2)) {
            let (u, v) = w;
            if u[1] > u[0] {
                // integrand in ln x is g(x) x
                m += 0.5 * (u[1] - u[0]) * ((v[0] + u[0]).exp() + (v[1] + u[1]).exp());
            }
        }
        m + self.survival_tail(self.ln_x_hi.exp())
    }

    /// Inverse subordinator density at unit time, M(z) = f(z, 1).
    pub fn unit_inverse_density(&self, z: f64) -> f64 {
        if z <= 0.0 {
            return if z == 0.0 { 1.0 / gamma(1.0 - self.alpha) } else { 0.0 };
        }
        let a = self.alpha;
        let x = z.powf(-1.0 / a);
        self.g(x) / a * z.powf(-1.0 - 1.0 / a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn levy_density(x: f64) -> f64 {
        (-1.0 / (4.0 * x)).exp() / (2.0 * PI.sqrt() * x.powf(1.5))
    }

    #[test]
    fn half_stable_matches_levy() {
        for &x in &[1e-3, 0.01, 0.1, 0.5, 1.0, 3.0, 50.0, 1e4] {
            let g = stable_density_g(0.5, x).unwrap();
            let e = levy_density(x);
            assert!((g - e).abs() <= 1e-12 * e.max(1e-300) + 1e-300, "x={x}: {g} vs {e}");
        }
    }

    #[test]
    fn cdf_and_survival_are_complementary() {
        for &a in &[0.3, 0.5, 0.8] {
            for &x in &[0.05, 0.5, 2.0, 100.0] {
                let c = stable_cdf(a, x).unwrap();
                let s = stable_survival(a, x).unwrap();
                assert!((c + s - 1.0).abs() < 1e-12, "a={a} x={x}");
            }
        }
    }

    #[test]
    fn table_mass_and_half_stable_accuracy() {
        for &a in &[0.3, 0.5, 0.8] {
            let t = StableDensityTable::new(a).unwrap();
            let m = t.trapezoid_mass();
            assert!((0.999..=1.001).contains(&m), "alpha={a} mass {m}");
        }
        let t = StableDensityTable::new(0.5).unwrap();
        for (x, g) in t.nodes().iter().zip(t.values()) {
            let e = levy_density(*x);
            assert!((g - e).abs() <= 1e-8 * e, "node {x}");
        }
        // between nodes and in the series region
        for &x in &[2e-3, 0.0371, 0.77, 13.3, 399.0, 1e6] {
            let e = levy_density(x);
            assert!((t.g(x) - e).abs() <= 1e-10 * e, "x={x}: {} vs {e}", t.g(x));
        }
    }
}
