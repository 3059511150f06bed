//! Score-matching and maximum-likelihood estimators, their objectives, and
//! convergence studies over sample size.

mod mle;
mod sm;
mod study;

use serde::{Deserialize, Serialize};

pub use mle::{fit_mle, mle_loss_and_grad, MleOptions, MLE_MAX_ITER, MLE_TOL};
pub use sm::{fit_score_matching, sm_loss, sm_normal_equations, NormalEquations};
pub use study::{convergence_study, log_log_slope, StudyOptions, StudyRow, StudySummary, StudyTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    Sm,
    Mle,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Sm => "sm",
            Estimator::Mle => "mle",
        }
    }
}

impl std::str::FromStr for Estimator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "sm" => Ok(Estimator::Sm),
            "mle" => Ok(Estimator::Mle),
            other => Err(format!("unknown estimator '{other}' (expected sm or mle)")),
        }
    }
}

/// Wall-clock measurements, kept apart so the rest of a report is reproducible.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub estimator: Estimator,
    pub n: usize,
    pub d: u32,
    pub theta_hat: Vec<f64>,
    /// `sm_loss` for score matching, the average log-likelihood for MLE.
    pub loss: f64,
    /// Condition number of the Gram matrix (SM) or of the Fisher matrix at the estimate (MLE).
    pub gram_condition: f64,
    #[serde(rename = "N")]
    pub samples: usize,
    pub iterations: usize,
    pub notes: Vec<String>,
    pub timing: Timing,
}

/// Largest over smallest eigenvalue of a symmetric PSD matrix; `f64::MAX` when singular.
pub(crate) fn condition_number(m: &nalgebra::DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 1.0;
    }
    let eig = m.clone().symmetric_eigen();
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    if lo <= 0.0 || !hi.is_finite() {
        f64::MAX
    } else {
        (hi / lo).max(1.0)
    }
}
