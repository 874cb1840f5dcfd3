//! Gaussian rules, adaptive Gauss-Kronrod and composite panel builders.

use crate::error::{Error, Result};
use crate::special::gamma;
use nalgebra::{DMatrix, SymmetricEigen};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadRule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn apply(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}

/// Nodes and weights from the three-term recurrence of monic orthogonal
/// polynomials (alpha_k, beta_k for k >= 1) and total weight mass `mu0`.
fn golub_welsch(alpha: &[f64], beta: &[f64], mu0: f64) -> QuadRule {
    let n = alpha.len();
    let mut j = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        j[(i, i)] = alpha[i];
        if i + 1 < n {
            let b = beta[i].sqrt();
            j[(i, i + 1)] = b;
            j[(i + 1, i)] = b;
        }
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|k| {
            let v0 = eig.eigenvectors[(0, k)];
            (eig.eigenvalues[k], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    QuadRule {
        nodes: pairs.iter().map(|p| p.0).collect(),
        weights: pairs.iter().map(|p| p.1).collect(),
    }
}

type RuleKey = (u8, usize, u64, u64);

fn rule_cache() -> &'static Mutex<HashMap<RuleKey, Arc<QuadRule>>> {
    static CACHE: OnceLock<Mutex<HashMap<RuleKey, Arc<QuadRule>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

fn cached(key: RuleKey, build: impl FnOnce() -> QuadRule) -> Arc<QuadRule> {
    if let Some(r) = rule_cache().lock().get(&key) {
        return r.clone();
    }
    let rule = Arc::new(build());
    rule_cache().lock().entry(key).or_insert(rule).clone()
}

/// Gauss-Jacobi rule on [-1, 1] for the weight (1-x)^a (1+x)^b, a, b > -1.
pub fn gauss_jacobi(n: usize, a: f64, b: f64) -> Arc<QuadRule> {
    assert!(n >= 1 && a > -1.0 && b > -1.0);
    cached((0, n, a.to_bits(), b.to_bits()), || {
        let ab = a + b;
        let mut alpha = Vec::with_capacity(n);
        let mut beta = Vec::with_capacity(n);
        for k in 0..n {
            let kf = k as f64;
            let s = 2.0 * kf + ab;
            alpha.push(if k == 0 {
                (b - a) / (ab + 2.0)
            } else {
                (b * b - a * a) / (s * (s + 2.0))
            });
            let k1 = kf + 1.0;
            let s1 = 2.0 * k1 + ab;
            let bk = if k == 0 && (ab + 1.0).abs() < 1e-14 {
                // limit of the generic formula at a + b = -1
                4.0 * (1.0 + a) * (1.0 + b) / ((2.0 + ab) * (2.0 + ab) * (3.0 + ab))
            } else {
                4.0 * k1 * (k1 + a) * (k1 + b) * (k1 + ab) / (s1 * s1 * (s1 + 1.0) * (s1 - 1.0))
            };
            beta.push(bk);
        }
        let mu0 = 2f64.powf(ab + 1.0) * gamma(a + 1.0) * gamma(b + 1.0) / gamma(ab + 2.0);
        golub_welsch(&alpha, &beta, mu0)
    })
}

pub fn gauss_legendre(n: usize) -> Arc<QuadRule> {
    gauss_jacobi(n, 0.0, 0.0)
}

/// Generalized Gauss-Laguerre rule on [0, inf) for the weight x^a e^{-x}.
pub fn gauss_laguerre(n: usize, a: f64) -> Arc<QuadRule> {
    assert!(n >= 1 && a > -1.0);
    cached((1, n, a.to_bits(), 0), || {
        let alpha: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + a + 1.0).collect();
        let beta: Vec<f64> = (1..=n).map(|k| k as f64 * (k as f64 + a)).collect();
        golub_welsch(&alpha, &beta, gamma(a + 1.0))
    })
}

/// Gauss-Legendre integral of `f` over [a, b].
pub fn gl_integrate(n: usize, a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = gauss_legendre(n);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h * r.apply(|x| f(c + h * x))
}

/// Integral over [a, b] of (x - a)^p f(x) using a Jacobi rule; p > -1.
pub fn jacobi_left_integrate(n: usize, a: f64, b: f64, p: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = gauss_jacobi(n, 0.0, p);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h.powf(p + 1.0) * r.apply(|x| f(c + h * x))
}

/// Integral over [a, b] of (b - x)^p f(x); p > -1.
pub fn jacobi_right_integrate(n: usize, a: f64, b: f64, p: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = gauss_jacobi(n, p, 0.0);
    let (c, h) = (0.5 * (a + b), 0.5 * (b - a));
    h.powf(p + 1.0) * r.apply(|x| f(c + h * x))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

#[derive(Debug, Clone, Copy)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_intervals: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance { abs: 1e-13, rel: 1e-12, max_intervals: 4000 }
    }
}

/// Globally adaptive G7-K15 over the segments defined by `points` (sorted).
pub fn integrate_adaptive(f: &dyn Fn(f64) -> f64, points: &[f64], tol: Tolerance) -> Result<f64> {
    let mut segs: Vec<(f64, f64, f64, f64)> = Vec::new();
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (v, e) = gk15(f, w[0], w[1]);
            segs.push((w[0], w[1], v, e));
        }
    }
    loop {
        let total: f64 = segs.iter().map(|s| s.2).sum();
        let err: f64 = segs.iter().map(|s| s.3).sum();
        if !total.is_finite() {
            return Err(Error::Numeric { msg: "non-finite integrand".into(), estimate: total });
        }
        if err <= tol.abs.max(tol.rel * total.abs()) {
            return Ok(total);
        }
        if segs.len() >= tol.max_intervals {
            return Err(Error::Numeric { msg: "adaptive quadrature did not converge".into(), estimate: total });
        }
        let (idx, _) = segs
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .expect("non-empty");
        let (a, b, _, _) = segs.swap_remove(idx);
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            // interval exhausted at machine resolution
            return Ok(total);
        }
        let (v1, e1) = gk15(f, a, m);
        let (v2, e2) = gk15(f, m, b);
        segs.push((a, m, v1, e1));
        segs.push((m, b, v2, e2));
    }
}

/// Panel endpoints for [a, b]: geometric grading with ratio 1/2 and `levels`
/// steps toward each graded end, then uniform panels no wider than `max_width`.
pub fn graded_points(a: f64, b: f64, levels: usize, left: bool, right: bool, max_width: f64) -> Vec<f64> {
    let len = b - a;
    if len <= 0.0 {
        return vec![a];
    }
    let mut pts = vec![a, b];
    let q = if left && right { 0.25 * len } else { 0.5 * len };
    let (mut lo, mut hi) = (a, b);
    if left {
        let mut d = q;
        for _ in 0..levels {
            pts.push(a + d);
            d *= 0.5;
        }
        lo = a + q;
    }
    if right {
        let mut d = q;
        for _ in 0..levels {
            pts.push(b - d);
            d *= 0.5;
        }
        hi = b - q;
    }
    if hi > lo && max_width > 0.0 {
        let m = ((hi - lo) / max_width).ceil() as usize;
        for i in 1..m {
            pts.push(lo + (hi - lo) * i as f64 / m as f64);
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    pts
}


/// Resolution knobs shared by the subordination, Caputo and Laplace routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    /// Truncation of unit-scale density integrals (E(1) > s_max is dropped
    /// or folded into a tail level).
    pub s_max: f64,
    /// Gauss order per composite panel.
    pub n_nodes: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Largest probability mass allowed outside a function's grid.
    pub tail_bound_budget: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig { s_max: 60.0, n_nodes: 16, abs_tol: 1e-13, rel_tol: 1e-12, tail_bound_budget: 1e-10 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_max > 0.0) {
            return Err(Error::Domain("s_max must be positive".into()));
        }
        if self.n_nodes < 16 {
            return Err(Error::Domain(format!("n_nodes must be >= 16, got {}", self.n_nodes)));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0 && self.tail_bound_budget > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        Ok(())
    }

    pub fn tolerance(&self) -> Tolerance {
        Tolerance { abs: self.abs_tol, rel: self.rel_tol, max_intervals: 4000 }
    }

    pub fn laplace_options(&self) -> LaplaceOptions {
        LaplaceOptions { order: self.n_nodes, ..LaplaceOptions::default() }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LaplaceOptions {
    /// Gauss-Legendre order per panel.
    pub order: usize,
    /// Geometric grading levels at every segment end.
    pub levels: usize,
    /// Gauss-Laguerre order of the tail.
    pub tail_order: usize,
    /// The tail starts this many decay lengths 1/lambda past the last breakpoint.
    pub tail_offset: f64,
}

impl Default for LaplaceOptions {
    fn default() -> Self {
        LaplaceOptions { order: 10, levels: 24, tail_order: 40, tail_offset: 25.0 }
    }
}

/// Integral over [0, inf) of e^{-lambda t} f(t). `breakpoints` mark
/// non-smooth points of f; every segment end is graded.
pub fn laplace_transform(f: &dyn Fn(f64) -> f64, lambda: f64, breakpoints: &[f64], opts: LaplaceOptions) -> f64 {
    laplace_transform_weighted(f, lambda, breakpoints, opts, 0.0)
}

/// Integral over [0, inf) of e^{-lambda t} t^p f(t), p > -1, with a Jacobi
/// rule on the innermost panel at 0.
pub fn laplace_transform_weighted(
    f: &dyn Fn(f64) -> f64,
    lambda: f64,
    breakpoints: &[f64],
    opts: LaplaceOptions,
    p: f64,
) -> f64 {
    let mut bps: Vec<f64> = breakpoints.iter().copied().filter(|&b| b > 0.0 && b.is_finite()).collect();
    bps.sort_by(f64::total_cmp);
    bps.dedup();
    let last = bps.last().copied().unwrap_or(0.0);
    let t_split = last + opts.tail_offset / lambda;
    let mut ends = vec![0.0];
    ends.extend(bps);
    ends.push(t_split);
    let gl = gauss_legendre(opts.order);
    let mut total = 0.0;
    let nseg = ends.len() - 1;
    for (i, w) in ends.windows(2).enumerate() {
        let graded_right = i + 1 < nseg;
        let pts = graded_points(w[0], w[1], opts.levels, true, graded_right, 1.0 / lambda);
        for (k, q) in pts.windows(2).enumerate() {
            if i == 0 && k == 0 && p != 0.0 {
                total += jacobi_left_integrate(opts.order, q[0], q[1], p, |t| (-lambda * t).exp() * f(t));
                continue;
            }
            let (c, h) = (0.5 * (q[0] + q[1]), 0.5 * (q[1] - q[0]));
            total += h * gl.apply(|x| {
                let t = c + h * x;
                (-lambda * t).exp() * t.powf(p) * f(t)
            });
        }
    }
    let lag = gauss_laguerre(opts.tail_order, 0.0);
    let tail = lag.apply(|x| {
        let t = t_split + x / lambda;
        t.powf(p) * f(t)
    });
    total + (-lambda * t_split).exp() / lambda * tail
}


/// Piecewise Chebyshev-Lobatto interpolant on equal panels of [lo, hi].
#[derive(Debug, Clone)]
pub(crate) struct ChebPanels {
    lo: f64,
    hi: f64,
    order: usize,
    n_panels: usize,
    /// Panel-major nodes, order + 1 per panel; shared endpoints are repeated.
    nodes: Vec<f64>,
    values: Vec<f64>,
}

impl ChebPanels {
    pub(crate) fn new(lo: f64, hi: f64, max_width: f64, order: usize, mut f: impl FnMut(f64) -> Result<f64>) -> Result<Self> {
        let n_panels = ((hi - lo) / max_width).ceil().max(1.0) as usize;
        let width = (hi - lo) / n_panels as f64;
        let mut nodes = Vec::with_capacity(n_panels * (order + 1));
        let mut values = Vec::with_capacity(nodes.capacity());
        for p in 0..n_panels {
            let a = lo + p as f64 * width;
            for j in 0..=order {
                let c = (std::f64::consts::PI * j as f64 / order as f64).cos();
                let u = a + 0.5 * width * (1.0 - c);
                nodes.push(u);
                values.push(f(u)?);
            }
        }
        Ok(ChebPanels { lo, hi, order, n_panels, nodes, values })
    }

    pub(crate) fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub(crate) fn values(&self) -> &[f64] {
        &self.values
    }

    /// Barycentric interpolation; u is clamped to the owning panel index.
    pub(crate) fn eval(&self, u: f64) -> f64 {
        let width = (self.hi - self.lo) / self.n_panels as f64;
        let p = (((u - self.lo) / width).max(0.0) as usize).min(self.n_panels - 1);
        let base = p * (self.order + 1);
        let xs = &self.nodes[base..=base + self.order];
        let ys = &self.values[base..=base + self.order];
        let (mut num, mut den) = (0.0, 0.0);
        for j in 0..=self.order {
            let d = u - xs[j];
            if d == 0.0 {
                return ys[j];
            }
            let mut w = if j % 2 == 0 { 1.0 } else { -1.0 };
            if j == 0 || j == self.order {
                w *= 0.5;
            }
            num += w / d * ys[j];
            den += w / d;
        }
        num / den
    }
}
