//! Automatic grid radius from a separable envelope of the density.
//!
//! Cross monomials are bounded by weighted AM-GM,
//! `|x^d| <= sum_i (d_i/|d|) |x_i|^|d|`, which sandwiches the density between
//! products of one-dimensional densities `exp(u_i -+ g_i)`. The tail mass
//! outside `[-R, R]^n` is then at most
//! `sum_i tail_i(R) prod_{j != i} U_j / prod_j L_j`, all one-dimensional integrals.

use super::univariate::{log_integral, Univariate};
use super::{tail_radius, ParamVector};

/// Tail mass the automatic radius guarantees not to exceed.
pub const TAIL_MASS_TARGET: f64 = 1e-12;

struct AxisEnvelope {
    /// Upper envelope on `t >= 0` and on `t <= 0` (reflected to `s = -t >= 0`).
    upper: [Univariate; 2],
    log_upper: f64,
    log_lower: f64,
}

fn log_add(a: f64, b: f64) -> f64 {
    let m = a.max(b);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + ((a - m).exp() + (b - m).exp()).ln()
}

fn envelopes(p: &ParamVector) -> Vec<AxisEnvelope> {
    let n = p.n();
    let top = (p.d() + 1) as usize;
    let mut own = vec![vec![0.0; top + 1]; n];
    let mut cross = vec![vec![0.0; top + 1]; n];
    for (idx, c) in p.log_density_poly().terms() {
        let total = idx.total() as usize;
        if total == 0 {
            continue;
        }
        if idx.support_len() == 1 {
            let i = idx.degrees().iter().position(|&e| e > 0).unwrap();
            own[i][total] += c;
        } else {
            for (i, &e) in idx.degrees().iter().enumerate() {
                if e > 0 {
                    cross[i][total] += c.abs() * f64::from(e) / total as f64;
                }
            }
        }
    }
    (0..n)
        .map(|i| {
            let u = Univariate::new(own[i].clone());
            let g = Univariate::new(cross[i].clone());
            let ur = u.reflected();
            let upper = [u.add(&g), ur.add(&g)];
            let lower = [u.add(&g.scaled(-1.0)), ur.add(&g.scaled(-1.0))];
            let half_mass = |q: &Univariate| log_integral(q, 0.0, f64::INFINITY);
            AxisEnvelope {
                log_upper: log_add(half_mass(&upper[0]), half_mass(&upper[1])),
                log_lower: log_add(half_mass(&lower[0]), half_mass(&lower[1])),
                upper,
            }
        })
        .collect()
}

fn log_tail_bound(env: &[AxisEnvelope], r: f64) -> f64 {
    let sum_upper: f64 = env.iter().map(|e| e.log_upper).sum();
    let sum_lower: f64 = env.iter().map(|e| e.log_lower).sum();
    let mut acc = f64::NEG_INFINITY;
    for e in env {
        let tail = log_add(
            log_integral(&e.upper[0], r, f64::INFINITY),
            log_integral(&e.upper[1], r, f64::INFINITY),
        );
        acc = log_add(acc, tail + sum_upper - e.log_upper);
    }
    acc - sum_lower
}

/// Smallest radius (to bisection precision) whose certified tail mass is below
/// [`TAIL_MASS_TARGET`], capped at [`tail_radius`].
pub fn auto_radius(p: &ParamVector) -> f64 {
    let cap = tail_radius(p.n(), p.d(), p.bound());
    let env = envelopes(p);
    let target = TAIL_MASS_TARGET.ln();
    let mut lo = 0.0;
    let mut hi = 1.0;
    while log_tail_bound(&env, hi) >= target {
        lo = hi;
        hi *= 2.0;
        if hi >= cap {
            return cap;
        }
    }
    for _ in 0..40 {
        let mid = 0.5 * (lo + hi);
        if log_tail_bound(&env, mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-4 * hi {
            break;
        }
    }
    hi.min(cap)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::enumerate_basis;
    use std::sync::Arc;

    #[test]
    fn gaussian_radius() {
        // 2 * int_R^inf exp(-t^2) / sqrt(pi) = erfc(R) = 1e-12 near R = 5.06
        let p = ParamVector::zeros(Arc::new(enumerate_basis(1, 1).unwrap()), 1.0).unwrap();
        let r = auto_radius(&p);
        assert!(r > 5.0 && r < 5.1, "r = {r}");
    }

    #[test]
    fn coupled_radius_is_finite_and_capped() {
        let basis = Arc::new(enumerate_basis(2, 3).unwrap());
        let p = ParamVector::new(basis, vec![1.0; 9], 1.0).unwrap();
        let r = auto_radius(&p);
        assert!(r > 1.0 && r < tail_radius(2, 3, 1.0));
    }
}
