use std::sync::Arc;
use std::time::Instant;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::{condition_number, fit_score_matching, Estimator, FitReport, Timing};
use crate::error::{Error, Result};
use crate::expfam::{
    auto_radius, build_grid, checked_log_partition, log_partition, moments, GridSpec, ParamVector, QuadratureGrid,
};
use crate::polybasis::{MonomialBasis, PowerTable};
use crate::report::elapsed_s;
use crate::sampler::SampleSet;

pub const MLE_TOL: f64 = 1e-6;
pub const MLE_MAX_ITER: usize = 10_000;
const ARMIJO: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MIN_STEP: f64 = 1e-12;
/// Grid rebuilds allowed when the estimate outgrows the radius or fails the gate.
const MAX_REGRIDS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    /// Stop once `||grad||_inf <= tol`.
    pub tol: f64,
    pub max_iter: usize,
    /// Unset radius: the larger of the automatic radius and `max |x| + 1`.
    pub grid: GridSpec,
    /// Starting point; the score-matching estimate when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            tol: MLE_TOL,
            max_iter: MLE_MAX_ITER,
            grid: GridSpec::default(),
            init: None,
        }
    }
}

/// `E^[T]` and `E^[log h]` of a sample.
struct Empirical {
    mean_t: DVector<f64>,
    mean_log_h: f64,
    max_abs: f64,
}

impl Empirical {
    fn new(s: &SampleSet, basis: &MonomialBasis) -> Result<Self> {
        if s.is_empty() {
            return Err(Error::EmptySamples);
        }
        if s.n() != basis.n() {
            return Err(Error::DimensionMismatch {
                expected: basis.n(),
                got: s.n(),
            });
        }
        let m = basis.len();
        let top = basis.d() as u8 + 1;
        let mut pow = PowerTable::new(top as usize);
        let mut t = vec![0.0; m];
        let mut mean_t = DVector::zeros(m);
        let mut log_h = 0.0;
        for x in s.rows() {
            pow.fill(x);
            basis.suffstats_into(&pow, &mut t);
            for (a, v) in mean_t.iter_mut().zip(&t) {
                *a += v;
            }
            log_h -= (0..x.len()).map(|i| pow.get(i, top)).sum::<f64>();
        }
        let count = s.len() as f64;
        Ok(Self {
            mean_t: mean_t / count,
            mean_log_h: log_h / count,
            max_abs: s.data().iter().fold(0.0f64, |a, v| a.max(v.abs())),
        })
    }

    fn loss(&self, theta: &[f64], log_z: f64) -> f64 {
        self.mean_log_h + self.mean_t.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() - log_z
    }
}

/// Average log-likelihood `E^[log h] + <theta, E^[T]> - log Z` and its gradient
/// `E^[T] - E_theta[T]`, with the grid convergence gate applied.
pub fn mle_loss_and_grad(p: &ParamVector, s: &SampleSet, grid: &QuadratureGrid) -> Result<(f64, Vec<f64>)> {
    let emp = Empirical::new(s, p.basis())?;
    checked_log_partition(p, grid)?.require_converged()?;
    let mom = moments(p, grid)?;
    let grad = (&emp.mean_t - &mom.mean_t).iter().copied().collect();
    Ok((emp.loss(p.theta(), mom.log_z), grad))
}

struct NewtonResult {
    theta: Vec<f64>,
    iterations: usize,
    loss: f64,
    fisher_condition: f64,
}

/// Fisher-preconditioned ascent with Armijo backtracking on a fixed grid.
fn ascend(
    emp: &Empirical,
    basis: &Arc<MonomialBasis>,
    grid: &QuadratureGrid,
    init: Vec<f64>,
    opts: &MleOptions,
) -> Result<NewtonResult> {
    let mut theta = init;
    let mut last_grad = f64::INFINITY;
    for it in 0..opts.max_iter {
        let p = ParamVector::relaxed(basis.clone(), theta.clone())?;
        let mom = moments(&p, grid)?;
        let grad = &emp.mean_t - &mom.mean_t;
        last_grad = grad.amax();
        let loss = emp.loss(&theta, mom.log_z);
        let fisher = mom.covariance();
        if last_grad <= opts.tol {
            return Ok(NewtonResult {
                theta,
                iterations: it,
                loss,
                fisher_condition: condition_number(&fisher),
            });
        }
        let mut dir = match fisher.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => grad.clone(),
        };
        let mut slope = grad.dot(&dir);
        if !(slope > 0.0 && slope.is_finite()) {
            dir = grad.clone();
            slope = grad.norm_squared();
        }
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = theta.iter().zip(dir.iter()).map(|(a, b)| a + t * b).collect();
            let value = ParamVector::relaxed(basis.clone(), cand.clone())
                .and_then(|q| log_partition(&q, grid))
                .map(|lz| emp.loss(&cand, lz));
            if let Ok(v) = value {
                if v >= loss + ARMIJO * t * slope {
                    theta = cand;
                    break;
                }
            }
            t *= SHRINK;
            if t < MIN_STEP {
                return Err(Error::NonConvergence {
                    iterations: it,
                    grad_norm: last_grad,
                });
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iter,
        grad_norm: last_grad,
    })
}

/// Maximum-likelihood fit with `log Z` and `E_theta[T]` from quadrature (`n <= 3`).
///
/// The grid is rebuilt if the estimate needs a larger radius than the grid
/// it was found on, or if the grid fails the convergence gate at the estimate.
pub fn fit_mle(s: &SampleSet, basis: &Arc<MonomialBasis>, opts: &MleOptions) -> Result<FitReport> {
    let start = Instant::now();
    let emp = Empirical::new(s, basis)?;
    let mut notes = Vec::new();
    let mut theta = match &opts.init {
        Some(v) if v.len() != basis.len() => {
            return Err(Error::DimensionMismatch {
                expected: basis.len(),
                got: v.len(),
            })
        }
        Some(v) => v.clone(),
        None => match fit_score_matching(s, basis) {
            Ok(fit) => fit.theta_hat,
            Err(_) => {
                notes.push("score-matching start unavailable; started at 0".into());
                vec![0.0; basis.len()]
            }
        },
    };
    let auto =
        |theta: &[f64]| -> Result<f64> { Ok(auto_radius(&ParamVector::relaxed(basis.clone(), theta.to_vec())?)) };
    let mut radius = match opts.grid.radius {
        Some(r) => r,
        None => auto(&theta)?.max(emp.max_abs + 1.0),
    };
    let mut points = opts.grid.points_per_axis;
    let mut iterations = 0;
    for _ in 0..MAX_REGRIDS {
        let grid = build_grid(basis.n(), radius, points, opts.grid.refine.as_ref())?;
        let res = ascend(&emp, basis, &grid, theta, opts)?;
        iterations += res.iterations;
        theta = res.theta;
        if opts.grid.radius.is_none() {
            let need = auto(&theta)?;
            if need > radius {
                notes.push(format!("grid radius raised from {radius} to {need}"));
                radius = need;
                continue;
            }
        }
        let gate = checked_log_partition(&ParamVector::relaxed(basis.clone(), theta.clone())?, &grid)?;
        if !gate.converged {
            let next = 2 * grid.points_per_axis();
            notes.push(format!(
                "grid gate failed (delta {:e}); points per axis raised to {next}",
                gate.delta
            ));
            points = Some(next);
            continue;
        }
        return Ok(FitReport {
            estimator: Estimator::Mle,
            n: basis.n(),
            d: basis.d(),
            theta_hat: theta,
            loss: res.loss,
            gram_condition: res.fisher_condition,
            samples: s.len(),
            iterations,
            notes,
            timing: Timing {
                wall_time_s: elapsed_s(start),
            },
        });
    }
    Err(Error::GridNotConverged {
        delta: f64::NAN,
        tol: crate::expfam::GRID_TOLERANCE,
    })
}
