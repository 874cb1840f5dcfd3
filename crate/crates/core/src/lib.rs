//! Numerical machinery for the time-changed fractional Ornstein-Uhlenbeck
//! process: inverse stable subordinators, subordination operators,
//! Caputo-type derivatives and generalized Fokker-Planck checkers.

// negated comparisons such as !(x > 0.0) are how NaN inputs get rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bernstein;
pub mod caputo;
pub mod error;
pub mod fou_stats;
pub mod fpe;
pub mod quadrature;
pub mod simulate;
pub mod special;
pub mod stable;
pub mod subordination;
pub mod timefn;

pub use bernstein::{BernsteinKind, BernsteinSpec};
pub use error::{Error, Result};
pub use quadrature::QuadratureConfig;
