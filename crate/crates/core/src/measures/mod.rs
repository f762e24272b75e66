//! Impact measures: distribution-shape penalties in [`state`], utility and
//! detectability penalties in [`info`].

pub mod info;
pub mod state;

use std::fmt;

pub use info::{
    detect_between, detectability, importance_between, importance_penalty, DetectionConfig,
    DetectionResult, FactSet, RhoEstimate, Utility, UtilitySet,
};
pub use state::{coarse_penalty, divergence_penalty, DivergenceKind, KlDirection, Norm};

/// A penalty value; `Unbounded` is a result, not an error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Penalty {
    Finite(f64),
    Unbounded,
}

impl Penalty {
    /// The value as a float, `+inf` when unbounded.
    pub fn value(&self) -> f64 {
        match self {
            Penalty::Finite(v) => *v,
            Penalty::Unbounded => f64::INFINITY,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        matches!(self, Penalty::Unbounded)
    }

    /// `mu * R`, with `0 * Unbounded = 0`.
    pub fn scaled(&self, mu: f64) -> f64 {
        match self {
            Penalty::Finite(v) => mu * v,
            Penalty::Unbounded if mu == 0.0 => 0.0,
            Penalty::Unbounded => f64::INFINITY,
        }
    }
}

impl From<f64> for Penalty {
    fn from(v: f64) -> Self {
        if v.is_infinite() {
            Penalty::Unbounded
        } else {
            Penalty::Finite(v)
        }
    }
}

impl fmt::Display for Penalty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Penalty::Finite(v) => write!(f, "{v}"),
            Penalty::Unbounded => f.write_str("inf"),
        }
    }
}
