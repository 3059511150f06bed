use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_mle, fit_score_matching, Estimator, MleOptions};
use crate::error::{Error, Result};
use crate::expfam::ParamVector;
use crate::report::elapsed_s;
use crate::sampler::{sample_exact_separable, sample_mala, McmcConfig, SampleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    #[serde(rename = "Ns")]
    pub sizes: Vec<usize>,
    pub trials: usize,
    pub estimators: Vec<Estimator>,
    pub seed: u64,
    pub mle: MleOptions,
    /// Used only when `theta*` couples coordinates.
    pub mcmc: McmcConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub estimator: Estimator,
    pub n: usize,
    pub d: u32,
    #[serde(rename = "B")]
    pub bound: f64,
    #[serde(rename = "N")]
    pub samples: usize,
    pub trial: usize,
    pub error_sq: f64,
    pub theta_hat: Vec<f64>,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub estimator: Estimator,
    #[serde(rename = "Ns")]
    pub sizes: Vec<usize>,
    /// Median of `||theta_hat - theta*||^2` over trials, per sample size.
    pub median_error_sq: Vec<f64>,
    /// Least-squares slope of `log median` against `log N`.
    pub slope: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyTable {
    pub rows: Vec<StudyRow>,
    pub summaries: Vec<StudySummary>,
    /// SM over MLE median error per sample size, when both were run.
    pub sm_mle_ratio: Option<Vec<f64>>,
    pub notes: Vec<String>,
}

impl StudyTable {
    /// One line per fit: `estimator,n,d,B,N,trial,error_sq,wall_time_s`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("estimator,n,d,B,N,trial,error_sq,wall_time_s\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.17e},{:.6}",
                r.estimator.name(),
                r.n,
                r.d,
                r.bound,
                r.samples,
                r.trial,
                r.error_sq,
                r.wall_time_s
            );
        }
        out
    }

    /// The rows of one estimator at one sample size, in trial order.
    pub fn cell(&self, est: Estimator, samples: usize) -> impl Iterator<Item = &StudyRow> {
        self.rows
            .iter()
            .filter(move |r| r.estimator == est && r.samples == samples)
    }

    /// Zeroes every wall-clock field, leaving only reproducible content.
    pub fn without_timing(&self) -> Self {
        let mut t = self.clone();
        for r in &mut t.rows {
            r.wall_time_s = 0.0;
        }
        t
    }
}

/// Least-squares slope of `log y` on `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 || y.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn trial_seed(seed: u64, size_index: usize, trial: usize) -> u64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(((size_index as u64) << 32) | trial as u64);
    rng.next_u64()
}

fn draw(theta_star: &ParamVector, count: usize, seed: u64, mcmc: &McmcConfig) -> Result<SampleSet> {
    if theta_star.first_coupling().is_none() {
        sample_exact_separable(theta_star, count, seed)
    } else {
        sample_mala(theta_star, count, mcmc, seed)
    }
}

/// Squared estimation error against sample size. Every `(N, trial)` cell draws
/// its own sample from a seed derived from `(seed, N index, trial)`; all
/// requested estimators are fitted to that same sample.
pub fn convergence_study(theta_star: &ParamVector, opts: &StudyOptions) -> Result<StudyTable> {
    if opts.trials == 0 {
        return Err(Error::Precondition("trials must be at least 1".into()));
    }
    if opts.sizes.is_empty() || opts.sizes.windows(2).any(|w| w[0] >= w[1]) || opts.sizes[0] == 0 {
        return Err(Error::Precondition(
            "sample sizes must be positive and strictly increasing".into(),
        ));
    }
    if opts.estimators.is_empty() {
        return Err(Error::Precondition("no estimator selected".into()));
    }
    let basis: &Arc<_> = theta_star.basis();
    let cells: Vec<(usize, usize)> = (0..opts.sizes.len())
        .flat_map(|i| (0..opts.trials).map(move |t| (i, t)))
        .collect();
    let results: Vec<Result<Vec<StudyRow>>> = cells
        .par_iter()
        .map(|&(si, trial)| {
            let count = opts.sizes[si];
            let s = draw(theta_star, count, trial_seed(opts.seed, si, trial), &opts.mcmc)?;
            let mut rows = Vec::with_capacity(opts.estimators.len());
            for &est in &opts.estimators {
                let start = Instant::now();
                let fit = match est {
                    Estimator::Sm => fit_score_matching(&s, basis)?,
                    Estimator::Mle => fit_mle(&s, basis, &opts.mle)?,
                };
                let error_sq = fit
                    .theta_hat
                    .iter()
                    .zip(theta_star.theta())
                    .map(|(a, b)| (a - b).powi(2))
                    .sum();
                rows.push(StudyRow {
                    estimator: est,
                    n: theta_star.n(),
                    d: theta_star.d(),
                    bound: theta_star.bound(),
                    samples: count,
                    trial,
                    error_sq,
                    theta_hat: fit.theta_hat,
                    wall_time_s: elapsed_s(start),
                });
            }
            Ok(rows)
        })
        .collect();
    let mut rows = Vec::with_capacity(cells.len() * opts.estimators.len());
    for r in results {
        rows.extend(r?);
    }
    rows.sort_by_key(|r| {
        (
            opts.estimators.iter().position(|e| *e == r.estimator),
            r.samples,
            r.trial,
        )
    });

    let mut notes = Vec::new();
    if opts.trials < 5 {
        notes.push(format!(
            "only {} trial(s) per size: slope confidence interval is wide",
            opts.trials
        ));
    }
    let xs: Vec<f64> = opts.sizes.iter().map(|&v| v as f64).collect();
    let mut table = StudyTable {
        rows,
        summaries: Vec::new(),
        sm_mle_ratio: None,
        notes,
    };
    for &est in &opts.estimators {
        let medians: Vec<f64> = opts
            .sizes
            .iter()
            .map(|&size| {
                let mut v: Vec<f64> = table.cell(est, size).map(|r| r.error_sq).collect();
                median(&mut v)
            })
            .collect();
        let slope = log_log_slope(&xs, &medians);
        if slope.is_none() {
            table.notes.push(format!(
                "{}: slope undefined (need two sizes and positive errors)",
                est.name()
            ));
        }
        table.summaries.push(StudySummary {
            estimator: est,
            sizes: opts.sizes.clone(),
            median_error_sq: medians,
            slope,
        });
    }
    let find = |e: Estimator| table.summaries.iter().find(|s| s.estimator == e);
    if let (Some(sm), Some(mle)) = (find(Estimator::Sm), find(Estimator::Mle)) {
        table.sm_mle_ratio = Some(
            sm.median_error_sq
                .iter()
                .zip(&mle.median_error_sq)
                .map(|(a, b)| a / b)
                .collect(),
        );
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::enumerate_basis;

    fn gaussian() -> ParamVector {
        ParamVector::new(Arc::new(enumerate_basis(1, 1).unwrap()), vec![1.0], 1.0).unwrap()
    }

    fn options(sizes: Vec<usize>, trials: usize, estimators: Vec<Estimator>) -> StudyOptions {
        StudyOptions {
            sizes,
            trials,
            estimators,
            seed: 1,
            mle: MleOptions::default(),
            mcmc: McmcConfig::default(),
        }
    }

    #[test]
    fn slope_of_power_law() {
        let x = [1.0, 10.0, 100.0];
        let y = [3.0, 0.3, 0.03];
        assert!((log_log_slope(&x, &y).unwrap() + 1.0).abs() < 1e-12);
        assert!(log_log_slope(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn rejects_bad_options() {
        let p = gaussian();
        assert!(convergence_study(&p, &options(vec![10], 0, vec![Estimator::Sm])).is_err());
        assert!(convergence_study(&p, &options(vec![100, 10], 2, vec![Estimator::Sm])).is_err());
    }

    #[test]
    fn gaussian_rate_and_csv() {
        let p = gaussian();
        let t = convergence_study(
            &p,
            &options(vec![100, 1000, 10_000], 12, vec![Estimator::Sm, Estimator::Mle]),
        )
        .unwrap();
        assert_eq!(t.rows.len(), 2 * 3 * 12);
        for s in &t.summaries {
            let slope = s.slope.unwrap();
            assert!((-1.5..=-0.5).contains(&slope), "{slope}");
        }
        // both estimators are 2 * mean here, so they agree to optimizer tolerance
        for r in t.sm_mle_ratio.as_ref().unwrap() {
            assert!((r - 1.0).abs() < 0.01, "{r}");
        }
        let csv = t.to_csv();
        assert!(csv.starts_with("estimator,n,d,B,N,trial,error_sq,wall_time_s\n"));
        assert_eq!(csv.lines().count(), 1 + t.rows.len());
        let again = convergence_study(
            &p,
            &options(vec![100, 1000, 10_000], 12, vec![Estimator::Sm, Estimator::Mle]),
        )
        .unwrap();
        assert_eq!(t.without_timing(), again.without_timing());
    }

    #[test]
    fn single_trial_is_flagged() {
        let t = convergence_study(&gaussian(), &options(vec![50, 500], 1, vec![Estimator::Sm])).unwrap();
        assert!(t.notes.iter().any(|n| n.contains("wide")));
        assert!(t.summaries[0].slope.is_some());
    }
}
