//! Bernstein functions of the stable and tempered-stable families.

use crate::error::{contract, domain, Error, Result};
use crate::quadrature::{integrate_adaptive, Tolerance};
use crate::special::{gamma, rgamma};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum BernsteinKind {
    Stable,
    TemperedStable { mu: f64 },
}

/// Phi(lambda) = lambda^alpha, or (lambda + mu)^alpha - mu^alpha when tempered.
/// Invariant: 0 < alpha < 1 and mu >= 0, enforced by the constructors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernsteinSpec {
    alpha: f64,
    kind: BernsteinKind,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("alpha must lie in (0, 1), got {alpha}"));
    }
    Ok(())
}

impl BernsteinSpec {
    pub fn stable(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(BernsteinSpec { alpha, kind: BernsteinKind::Stable })
    }

    pub fn tempered(alpha: f64, mu: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(mu >= 0.0 && mu.is_finite()) {
            return domain(format!("tempering mu must be finite and >= 0, got {mu}"));
        }
        Ok(BernsteinSpec { alpha, kind: BernsteinKind::TemperedStable { mu } })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> BernsteinKind {
        self.kind
    }

    pub fn is_stable(&self) -> bool {
        matches!(self.kind, BernsteinKind::Stable)
    }

    /// Tempering rate; zero for the stable family.
    pub fn mu(&self) -> f64 {
        match self.kind {
            BernsteinKind::Stable => 0.0,
            BernsteinKind::TemperedStable { mu } => mu,
        }
    }

    pub fn phi(&self, lambda: f64) -> Result<f64> {
        if !(lambda >= 0.0) {
            return domain(format!("Phi is evaluated on lambda >= 0, got {lambda}"));
        }
        Ok(self.phi_unchecked(lambda))
    }

    pub(crate) fn phi_unchecked(&self, lambda: f64) -> f64 {
        let a = self.alpha;
        match self.kind {
            BernsteinKind::Stable => lambda.powf(a),
            BernsteinKind::TemperedStable { mu } => (lambda + mu).powf(a) - mu.powf(a),
        }
    }

    /// Levy measure tail nu((t, inf)), t > 0.
    pub fn levy_tail(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return domain(format!("Levy tail needs t > 0, got {t}"));
        }
        let a = self.alpha;
        let mu = self.mu();
        if mu == 0.0 {
            return Ok(t.powf(-a) * rgamma(1.0 - a));
        }
        let c = a * rgamma(1.0 - a);
        let density = move |s: f64| c * (-mu * s).exp() * s.powf(-1.0 - a);
        // geometric breakpoints resolve the s^{-1-a} decay near t
        let end = t + 40.0 / mu;
        let mut pts = vec![t];
        let mut x = t;
        while x * 2.0 < end {
            x *= 2.0;
            pts.push(x);
        }
        pts.push(end);
        let tol = Tolerance { abs: 1e-10, rel: 1e-12, max_intervals: 2000 };
        integrate_adaptive(&density, &pts, tol)
    }

    /// Solves Phi(lambda) = eta for lambda >= 0.
    pub fn phi_inverse(&self, eta: f64) -> Result<f64> {
        if !(eta >= 0.0 && eta.is_finite()) {
            return domain(format!("Phi^(-1) needs finite eta >= 0, got {eta}"));
        }
        if eta == 0.0 {
            return Ok(0.0);
        }
        if self.is_stable() {
            return Ok(eta.powf(1.0 / self.alpha));
        }
        let mut hi = 1.0;
        while self.phi_unchecked(hi) < eta {
            hi *= 2.0;
            if !hi.is_finite() {
                return contract("Phi^(-1) bracket overflow");
            }
        }
        let mut lo = 0.0;
        for _ in 0..2000 {
            let mid = 0.5 * (lo + hi);
            if self.phi_unchecked(mid) < eta {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-12 * hi {
                return Ok(0.5 * (lo + hi));
            }
        }
        Err(Error::Numeric { msg: "Phi^(-1) bisection stalled".into(), estimate: 0.5 * (lo + hi) })
    }

    /// Stable Levy tail constant 1/Gamma(1 - alpha) paired with its exponent.
    pub fn karamata_constant(&self) -> f64 {
        1.0 / gamma(1.0 - self.alpha)
    }
}

impl fmt::Display for BernsteinSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            BernsteinKind::Stable => write!(f, "stable:{}", self.alpha),
            BernsteinKind::TemperedStable { mu } => write!(f, "tempered:{}:{}", self.alpha, mu),
        }
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Domain(format!("not a number: {s:?}")))
}

impl FromStr for BernsteinSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["stable", a] => BernsteinSpec::stable(parse_num(a)?),
            ["tempered", a, mu] => BernsteinSpec::tempered(parse_num(a)?, parse_num(mu)?),
            _ => domain(format!("unrecognized Bernstein token {s:?}; expected stable:<alpha> or tempered:<alpha>:<mu>")),
        }
    }
}
