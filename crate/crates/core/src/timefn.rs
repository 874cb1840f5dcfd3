//! Scalar functions of time consumed by the subordination and Caputo
//! operators.

use crate::error::{contract, domain, Result};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Declared behaviour beyond the last sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tail {
    /// v(s) = level for s past the grid.
    Constant(f64),
    /// v(s) = v_end (s / s_end)^exponent.
    Power(f64),
    /// No extrapolation; probability mass past the grid must stay within budget.
    Forbidden,
}

pub trait TimeFunction: Sync {
    fn value(&self, s: f64) -> f64;

    /// v'(s), when derivative information is available.
    fn derivative(&self, _s: f64) -> Option<f64> {
        None
    }

    fn has_derivative(&self) -> bool {
        false
    }

    /// Points where v or v' may fail to be smooth.
    fn breakpoints(&self) -> Vec<f64> {
        Vec::new()
    }

    fn tail(&self) -> Tail;

    /// Last point where v is known from data; infinite for closed forms.
    fn support_end(&self) -> f64 {
        f64::INFINITY
    }
}

/// Piecewise-linear interpolant of samples on a strictly increasing grid
/// starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGridFunction {
    grid: Vec<f64>,
    values: Vec<f64>,
    derivatives: Option<Vec<f64>>,
    tail: Tail,
}

pub const DEFAULT_TAIL_TOLERANCE: f64 = 1e-8;

impl TimeGridFunction {
    pub fn new(grid: Vec<f64>, values: Vec<f64>, tail: Tail) -> Result<Self> {
        Self::with_tail_tolerance(grid, values, tail, DEFAULT_TAIL_TOLERANCE)
    }

    pub fn with_tail_tolerance(grid: Vec<f64>, values: Vec<f64>, tail: Tail, tol: f64) -> Result<Self> {
        if grid.len() < 2 || grid.len() != values.len() {
            return contract("grid and values need equal length >= 2");
        }
        if grid[0] != 0.0 {
            return contract(format!("time grids start at 0, got {}", grid[0]));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return contract("time grid must be strictly increasing");
        }
        if values.iter().any(|v| !v.is_finite()) {
            return domain("samples must be finite");
        }
        if let Tail::Constant(level) = tail {
            let end = *values.last().unwrap();
            if (end - level).abs() > tol {
                return contract(format!("constant tail level {level} differs from last sample {end} by more than {tol}"));
            }
        }
        Ok(TimeGridFunction { grid, values, derivatives: None, tail })
    }

    /// Attaches derivative samples at the grid nodes.
    pub fn with_derivatives(mut self, derivatives: Vec<f64>) -> Result<Self> {
        if derivatives.len() != self.grid.len() {
            return contract("derivative samples must match the grid");
        }
        self.derivatives = Some(derivatives);
        Ok(self)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn locate(&self, s: f64) -> (usize, f64) {
        let i = self.grid.partition_point(|&g| g <= s).clamp(1, self.grid.len() - 1) - 1;
        let w = (s - self.grid[i]) / (self.grid[i + 1] - self.grid[i]);
        (i, w)
    }

    fn end(&self) -> (f64, f64) {
        (*self.grid.last().unwrap(), *self.values.last().unwrap())
    }
}

impl TimeFunction for TimeGridFunction {
    fn value(&self, s: f64) -> f64 {
        let (s_end, v_end) = self.end();
        if s > s_end {
            return match self.tail {
                Tail::Constant(level) => level,
                Tail::Power(p) => v_end * (s / s_end).powf(p),
                Tail::Forbidden => f64::NAN,
            };
        }
        if s <= 0.0 {
            return self.values[0];
        }
        let (i, w) = self.locate(s);
        self.values[i] * (1.0 - w) + self.values[i + 1] * w
    }

    fn derivative(&self, s: f64) -> Option<f64> {
        let d = self.derivatives.as_ref()?;
        let (s_end, v_end) = self.end();
        if s > s_end {
            return Some(match self.tail {
                Tail::Constant(_) => 0.0,
                Tail::Power(p) => p * v_end * (s / s_end).powf(p) / s,
                Tail::Forbidden => f64::NAN,
            });
        }
        if s <= 0.0 {
            return Some(d[0]);
        }
        let (i, w) = self.locate(s);
        Some(d[i] * (1.0 - w) + d[i + 1] * w)
    }

    fn has_derivative(&self) -> bool {
        self.derivatives.is_some()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.grid[1..].to_vec()
    }

    fn tail(&self) -> Tail {
        self.tail
    }

    fn support_end(&self) -> f64 {
        self.end().0
    }
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Closed-form time function.
#[derive(Clone)]
pub struct AnalyticFunction {
    f: ScalarFn,
    df: Option<ScalarFn>,
    tail: Tail,
    breakpoints: Vec<f64>,
}

impl std::fmt::Debug for AnalyticFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnalyticFunction")
            .field("tail", &self.tail)
            .field("breakpoints", &self.breakpoints)
            .field("has_derivative", &self.df.is_some())
            .finish()
    }
}

impl AnalyticFunction {
    pub fn new(f: impl Fn(f64) -> f64 + Send + Sync + 'static, tail: Tail) -> Self {
        AnalyticFunction { f: Arc::new(f), df: None, tail, breakpoints: Vec::new() }
    }

    pub fn with_derivative(mut self, df: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.df = Some(Arc::new(df));
        self
    }

    pub fn with_breakpoints(mut self, bps: Vec<f64>) -> Self {
        self.breakpoints = bps;
        self
    }
}

impl TimeFunction for AnalyticFunction {
    fn value(&self, s: f64) -> f64 {
        (self.f)(s)
    }

    fn derivative(&self, s: f64) -> Option<f64> {
        self.df.as_ref().map(|d| d(s))
    }

    fn has_derivative(&self) -> bool {
        self.df.is_some()
    }

    fn breakpoints(&self) -> Vec<f64> {
        self.breakpoints.clone()
    }

    fn tail(&self) -> Tail {
        self.tail
    }
}
