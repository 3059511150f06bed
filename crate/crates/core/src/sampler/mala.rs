use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Provenance, SampleSet};
use crate::error::{Error, Result};
use crate::expfam::{score_into, ParamVector};
use crate::polybasis::CompiledPoly;

/// Streams at or above this offset drive the pilot runs that pick the thinning.
const PILOT_STREAM: u64 = 1 << 32;
const PILOT_STEPS: usize = 4000;
const MAX_THINNING: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcConfig {
    /// Initial step size; adapted during burn-in.
    pub step_size: f64,
    pub burn_in: usize,
    /// `None` picks the smallest lag with lag autocorrelation of `x_1` below 0.5.
    pub thinning: Option<usize>,
    pub target_accept: f64,
    pub chains: usize,
    /// Starting point of every chain; the origin when absent.
    pub init: Option<Vec<f64>>,
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self {
            step_size: 0.5,
            burn_in: 10_000,
            thinning: None,
            target_accept: 0.574,
            chains: 1,
            init: None,
        }
    }
}

/// What the chains did; stored as the sample provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McmcSummary {
    pub config: McmcConfig,
    pub step_size: Vec<f64>,
    pub thinning: usize,
    pub acceptance_rate: f64,
    /// Per-coordinate effective sample size, summed over chains.
    pub ess: Vec<f64>,
    /// Steps, burn-in included, at which the sign pattern of the state changed.
    pub orthant_changes: usize,
}

struct Chain<'a> {
    p: &'a ParamVector,
    logp: CompiledPoly,
    n: usize,
}

struct State {
    x: Vec<f64>,
    logp: f64,
    grad: Vec<f64>,
}

impl Chain<'_> {
    fn state(&self, x: Vec<f64>) -> State {
        let logp = self.logp.eval(&x);
        let mut grad = vec![0.0; self.n];
        score_into(self.p, &x, &mut grad);
        State { x, logp, grad }
    }

    /// One MALA transition; returns the acceptance probability and whether it moved.
    fn step(&self, cur: &mut State, h: f64, rng: &mut ChaCha20Rng) -> std::result::Result<(f64, bool), String> {
        let tau = 0.5 * h * h;
        let y: Vec<f64> = (0..self.n)
            .map(|i| cur.x[i] + tau * cur.grad[i] + h * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let u: f64 = rng.random();
        if y.iter().any(|v| !v.is_finite()) {
            return Err("proposal left the representable range".into());
        }
        let prop = self.state(y);
        if prop.logp.is_nan() || prop.logp == f64::INFINITY || prop.grad.iter().any(|g| g.is_nan()) {
            return Err(format!("log-density {} at proposal", prop.logp));
        }
        let fwd: f64 = (0..self.n)
            .map(|i| (prop.x[i] - cur.x[i] - tau * cur.grad[i]).powi(2))
            .sum();
        let bwd: f64 = (0..self.n)
            .map(|i| (cur.x[i] - prop.x[i] - tau * prop.grad[i]).powi(2))
            .sum();
        let log_ratio = prop.logp - cur.logp - (bwd - fwd) / (2.0 * h * h);
        let accept = if log_ratio.is_nan() {
            0.0
        } else {
            log_ratio.min(0.0).exp()
        };
        if u < accept {
            *cur = prop;
            Ok((accept, true))
        } else {
            Ok((accept, false))
        }
    }
}

fn signs(x: &[f64]) -> u64 {
    x.iter()
        .enumerate()
        .fold(0u64, |m, (i, &v)| m | (u64::from(v < 0.0) << (i % 64)))
}

struct ChainRun {
    draws: Vec<f64>,
    accepted: usize,
    steps: usize,
    step_size: f64,
    orthant_changes: usize,
}

/// Burn-in with Robbins-Monro adaptation of `log h` towards the target acceptance.
fn burn_in(chain: &Chain, cfg: &McmcConfig, rng: &mut ChaCha20Rng, cur: &mut State) -> Result<(f64, usize)> {
    let mut log_h = cfg.step_size.ln();
    let mut changes = 0;
    for t in 0..cfg.burn_in {
        let before = signs(&cur.x);
        let gain = 1.0 / (t as f64 + 10.0).powf(0.6);
        match chain.step(cur, log_h.exp(), rng) {
            Ok((a, _)) => log_h += gain * (a - cfg.target_accept),
            // overshooting proposals during adaptation only shrink the step
            Err(_) => log_h += gain * (0.0 - cfg.target_accept),
        }
        log_h = log_h.clamp(-30.0, 10.0);
        if signs(&cur.x) != before {
            changes += 1;
        }
    }
    if !cur.logp.is_finite() {
        return Err(Error::Diverged {
            step: cfg.burn_in,
            reason: "non-finite log-density after burn-in".into(),
        });
    }
    Ok((log_h.exp(), changes))
}

fn run_chain(
    chain: &Chain,
    cfg: &McmcConfig,
    h: f64,
    thin: usize,
    count: usize,
    rng: &mut ChaCha20Rng,
    cur: &mut State,
) -> Result<ChainRun> {
    let mut draws = Vec::with_capacity(count * chain.n);
    let mut accepted = 0;
    let mut changes = 0;
    let steps = count * thin;
    for s in 0..steps {
        let before = signs(&cur.x);
        let (_, moved) = chain.step(cur, h, rng).map_err(|reason| Error::Diverged {
            step: cfg.burn_in + s,
            reason,
        })?;
        accepted += usize::from(moved);
        if signs(&cur.x) != before {
            changes += 1;
        }
        if (s + 1) % thin == 0 {
            draws.extend_from_slice(&cur.x);
        }
    }
    Ok(ChainRun {
        draws,
        accepted,
        steps,
        step_size: h,
        orthant_changes: changes,
    })
}

fn autocorrelation(x: &[f64], lag: usize) -> f64 {
    let n = x.len();
    if lag >= n {
        return 0.0;
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let var: f64 = x.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = (0..n - lag).map(|i| (x[i] - mean) * (x[i + lag] - mean)).sum();
    cov / var
}

/// Effective sample size by Geyer's initial positive sequence.
pub fn effective_sample_size(x: &[f64]) -> f64 {
    let n = x.len();
    if n < 4 {
        return n as f64;
    }
    let mut sum = 0.0;
    let mut k = 0;
    while 2 * k + 1 < n {
        let pair = autocorrelation(x, 2 * k) + autocorrelation(x, 2 * k + 1);
        if pair <= 0.0 {
            break;
        }
        sum += pair;
        k += 1;
    }
    // sum over pairs counts rho_0 = 1 once: tau = -1 + 2 sum
    let tau = (2.0 * sum - 1.0).max(1.0 / n as f64);
    (n as f64 / tau).min(n as f64)
}

/// Metropolis-adjusted Langevin draws. Chain `c` uses ChaCha20 stream `c` of `seed`.
pub fn sample_mala(p: &ParamVector, count: usize, cfg: &McmcConfig, seed: u64) -> Result<SampleSet> {
    let n = p.n();
    if cfg.chains == 0 {
        return Err(Error::Precondition("need at least one chain".into()));
    }
    if !(cfg.step_size > 0.0) || !(cfg.target_accept > 0.0 && cfg.target_accept < 1.0) {
        return Err(Error::Precondition(
            "step size must be positive and target acceptance in (0, 1)".into(),
        ));
    }
    if cfg.thinning == Some(0) {
        return Err(Error::Precondition("thinning must be at least 1".into()));
    }
    let init = match &cfg.init {
        Some(v) if v.len() != n => {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            })
        }
        Some(v) => v.clone(),
        None => vec![0.0; n],
    };
    let chain = Chain {
        p,
        logp: p.compiled(),
        n,
    };
    let chains = cfg.chains;
    let per_chain: Vec<usize> = (0..chains)
        .map(|c| count / chains + usize::from(c < count % chains))
        .collect();

    let runs: Vec<Result<(ChainRun, usize)>> = (0..chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut cur = chain.state(init.clone());
            let (h, burn_changes) = burn_in(&chain, cfg, &mut rng, &mut cur)?;
            let thin = match cfg.thinning {
                Some(t) => t,
                None => {
                    let mut pilot_rng = ChaCha20Rng::seed_from_u64(seed);
                    pilot_rng.set_stream(PILOT_STREAM + c as u64);
                    let mut pilot_state = chain.state(cur.x.clone());
                    let pilot = run_chain(&chain, cfg, h, 1, PILOT_STEPS, &mut pilot_rng, &mut pilot_state)?;
                    let x1: Vec<f64> = pilot.draws.iter().step_by(n).copied().collect();
                    (1..=MAX_THINNING)
                        .find(|&k| autocorrelation(&x1, k) < 0.5)
                        .unwrap_or(MAX_THINNING)
                }
            };
            let mut run = run_chain(&chain, cfg, h, thin, per_chain[c], &mut rng, &mut cur)?;
            run.orthant_changes += burn_changes;
            Ok((run, thin))
        })
        .collect();

    let mut data = Vec::with_capacity(count * n);
    let mut accepted = 0;
    let mut steps = 0;
    let mut ess = vec![0.0; n];
    let mut step_sizes = Vec::with_capacity(chains);
    let mut thin_max = 1;
    let mut orthant_changes = 0;
    for r in runs {
        let (run, thin) = r?;
        accepted += run.accepted;
        steps += run.steps;
        for (i, e) in ess.iter_mut().enumerate() {
            let col: Vec<f64> = run.draws.iter().skip(i).step_by(n).copied().collect();
            *e += effective_sample_size(&col);
        }
        step_sizes.push(run.step_size);
        thin_max = thin_max.max(thin);
        orthant_changes += run.orthant_changes;
        data.extend_from_slice(&run.draws);
    }
    let summary = McmcSummary {
        config: cfg.clone(),
        step_size: step_sizes,
        thinning: thin_max,
        acceptance_rate: if steps > 0 { accepted as f64 / steps as f64 } else { 0.0 },
        ess,
        orthant_changes,
    };
    SampleSet::new(n, data, seed, Provenance::Mcmc(summary))
}
