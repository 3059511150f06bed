//! Small shared report types.

use serde::{Deserialize, Serialize};

/// One asserted inequality, with both sides kept for audit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Check {
    /// `lhs <= rhs`.
    pub fn le(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs <= rhs,
        }
    }

    /// `lhs >= rhs`.
    pub fn ge(name: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: lhs >= rhs,
        }
    }

    /// `|lhs - rhs| <= tol`.
    pub fn close(name: impl Into<String>, lhs: f64, rhs: f64, tol: f64) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds: (lhs - rhs).abs() <= tol,
        }
    }

    pub fn with(name: impl Into<String>, lhs: f64, rhs: f64, holds: bool) -> Self {
        Self {
            name: name.into(),
            lhs,
            rhs,
            holds,
        }
    }
}

pub fn all_hold(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.holds)
}

/// Wall-clock seconds since `start`, for the `timing` field kept apart from results.
pub fn elapsed_s(start: std::time::Instant) -> f64 {
    start.elapsed().as_secs_f64()
}
