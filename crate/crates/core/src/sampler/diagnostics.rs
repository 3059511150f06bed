use serde::{Deserialize, Serialize};

use super::{Provenance, SampleSet};
use crate::error::{Error, Result};
use crate::expfam::{MomentTable, ParamVector, QuadratureGrid};

/// Standardized gaps between sample and quadrature moments of `T`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub samples: usize,
    /// Sample count for exact draws, the smallest per-coordinate ESS for chains.
    pub effective_samples: f64,
    /// `z` for each `E[T_j]`, in basis order.
    pub mean_z: Vec<f64>,
    /// `z` for each `E[T_i T_j]`, `i <= j`, row-major upper triangle.
    pub second_z: Vec<f64>,
    pub max_abs_z: f64,
    /// Which statistic attains `max_abs_z`, e.g. `T[x1^2]` or `T[x1] T[x2]`.
    pub worst: String,
}

fn effective_samples(s: &SampleSet) -> f64 {
    match s.provenance() {
        Provenance::Mcmc(m) => m.ess.iter().copied().fold(f64::INFINITY, f64::min).min(s.len() as f64),
        _ => s.len() as f64,
    }
}

fn z_score(sample_mean: f64, mean: f64, second: f64, n_eff: f64) -> f64 {
    let var = (second - mean * mean).max(0.0);
    let diff = sample_mean - mean;
    if var == 0.0 {
        return if diff == 0.0 { 0.0 } else { f64::INFINITY };
    }
    diff / (var / n_eff).sqrt()
}

/// Compares the sample against quadrature moments of `p` on `grid`.
pub fn diagnostics(s: &SampleSet, p: &ParamVector, grid: &QuadratureGrid) -> Result<DiagnosticsReport> {
    if s.is_empty() {
        return Err(Error::EmptySamples);
    }
    if s.n() != p.n() || grid.n() != p.n() {
        return Err(Error::DimensionMismatch {
            expected: p.n(),
            got: if s.n() != p.n() { s.n() } else { grid.n() },
        });
    }
    let basis = p.basis();
    let idx = basis.indices();
    let m = idx.len();
    // variances of T_i T_j need powers up to 4d
    let table = MomentTable::build(p, grid, 4 * p.d() as usize)?;

    let mut sum_t = vec![0.0; m];
    let mut sum_tt = vec![0.0; m * (m + 1) / 2];
    let mut pow = basis.power_table();
    let mut t = vec![0.0; m];
    for row in s.rows() {
        pow.fill(row);
        basis.suffstats_into(&pow, &mut t);
        let mut k = 0;
        for i in 0..m {
            sum_t[i] += t[i];
            for j in i..m {
                sum_tt[k] += t[i] * t[j];
                k += 1;
            }
        }
    }
    let count = s.len() as f64;
    let n_eff = effective_samples(s);

    let mut worst = (0.0f64, String::new());
    let mut note = |z: f64, label: String| {
        if z.abs() > worst.0 || worst.1.is_empty() {
            worst = (z.abs(), label);
        }
    };
    let mut mean_z = Vec::with_capacity(m);
    for (i, a) in idx.iter().enumerate() {
        let mean = table.moment(a.degrees());
        let second = table.moment(a.plus(a).degrees());
        let z = z_score(sum_t[i] / count, mean, second, n_eff);
        note(z, format!("T[{a}]"));
        mean_z.push(z);
    }
    let mut second_z = Vec::with_capacity(sum_tt.len());
    let mut k = 0;
    for i in 0..m {
        for j in i..m {
            let ab = idx[i].plus(&idx[j]);
            let mean = table.moment(ab.degrees());
            let second = table.moment(ab.plus(&ab).degrees());
            let z = z_score(sum_tt[k] / count, mean, second, n_eff);
            note(z, format!("T[{}] T[{}]", idx[i], idx[j]));
            second_z.push(z);
            k += 1;
        }
    }
    Ok(DiagnosticsReport {
        samples: s.len(),
        effective_samples: n_eff,
        mean_z,
        second_z,
        max_abs_z: worst.0,
        worst: worst.1,
    })
}
