//! One-dimensional integral inequalities for `f(x) = x^8 + beta (1 - x^2)^2`.

use serde::{Deserialize, Serialize};

use super::univariate::{log_integral, weighted_rule, Univariate};
use crate::error::{Error, Result};
use crate::report::Check;

/// Absolute accuracy allowed on a difference of two log-integrals; the two sides
/// of the explicit bound are both below this once `beta r^2` is large.
pub const LOG_INTEGRAL_SLACK: f64 = 1e-10;

/// `-f(x) = -x^8 - beta (1 - x^2)^2`.
fn neg_f(beta: f64) -> Univariate {
    Univariate::new(vec![-beta, 0.0, 2.0 * beta, 0.0, -beta, 0.0, 0.0, 0.0, -1.0])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntConcentrationReport {
    pub beta: f64,
    pub r: f64,
    pub m: u32,
    /// `int_0^inf e^-f <= (1 + 1/m) int_{1-r}^{1+r} e^-f`.
    pub concentration: Check,
    /// The same integral against the explicit constant
    /// `1/(1 - exp(-beta r^2/8)) + 2 exp(-beta r/40)/r`.
    pub explicit: Check,
}

/// Checks both conclusions of the concentration lemma, with integrals in log space.
pub fn verify_int_concentration(beta: f64, r: f64, m: u32) -> Result<IntConcentrationReport> {
    if !(beta > 150.0) {
        return Err(Error::Precondition(format!("beta must exceed 150, got {beta}")));
    }
    if !(r > 6.0 / beta && r < 0.04) {
        return Err(Error::Precondition(format!("r = {r} outside (6/beta, 0.04)")));
    }
    if m == 0 {
        return Err(Error::Precondition("m must be a positive integer".into()));
    }
    let need = 40.0 / (r * r) * (4.0 * f64::from(m) / r).ln();
    if beta < need {
        return Err(Error::Precondition(format!(
            "beta = {beta} below 40 r^-2 log(4m/r) = {need}"
        )));
    }
    let p = neg_f(beta);
    let whole = log_integral(&p, 0.0, f64::INFINITY);
    let near = log_integral(&p, 1.0 - r, 1.0 + r);
    let factor = 1.0 + 1.0 / f64::from(m);
    // 1/(1 - e^-a) = 1 + e^-a / (1 - e^-a); kept in ln_1p form since both sides
    // sit near zero for large beta
    let a = beta * r * r / 8.0;
    let explicit_ln = ((-a).exp() / -(-a).exp_m1() + 2.0 * (-beta * r / 40.0).exp() / r).ln_1p();
    let lhs = whole - near;
    let check = |name: &str, rhs: f64| Check::with(name, lhs, rhs, lhs <= rhs + LOG_INTEGRAL_SLACK);
    Ok(IntConcentrationReport {
        beta,
        r,
        m,
        concentration: check("int_concentration", factor.ln()),
        explicit: check("int_concentration_explicit", explicit_ln),
    })
}

/// `int_0^inf x^k e^-f <= 2^k int_0^inf e^-f` for `k = 1..=8`, requiring `beta >= 160 log 8`.
pub fn check_1d_moment_bound(beta: f64) -> Result<Vec<Check>> {
    let min_beta = 160.0 * 8f64.ln();
    if beta < min_beta {
        return Err(Error::Precondition(format!(
            "beta = {beta} below 160 log 8 = {min_beta}"
        )));
    }
    let rule = weighted_rule(&neg_f(beta), 0.0, f64::INFINITY);
    Ok((1..=8)
        .map(|k| {
            let moment = rule.mean_of(|x| x.powi(k));
            Check::le(format!("1d_moment_k{k}"), moment, 2f64.powi(k))
        })
        .collect())
}
