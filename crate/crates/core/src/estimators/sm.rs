use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::{condition_number, Estimator, FitReport, Timing};
use crate::error::{Error, Result};
use crate::expfam::ParamVector;
use crate::polybasis::{MonomialBasis, PowerTable};
use crate::report::elapsed_s;
use crate::sampler::SampleSet;

/// Empirical quadratic form of the score-matching loss,
/// `loss(theta) = c + b^T theta + theta^T G theta / 2`.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    /// `E[(JT)(JT)^T]`.
    pub gram: DMatrix<f64>,
    /// `E[Delta T + (JT) grad log h]`.
    pub linear: DVector<f64>,
    /// `E[Delta log h + |grad log h|^2 / 2]`.
    pub constant: f64,
}

fn check_samples(s: &SampleSet, basis: &MonomialBasis) -> Result<()> {
    if s.is_empty() {
        return Err(Error::EmptySamples);
    }
    if s.n() != basis.n() {
        return Err(Error::DimensionMismatch {
            expected: basis.n(),
            got: s.n(),
        });
    }
    Ok(())
}

pub fn sm_normal_equations(s: &SampleSet, basis: &MonomialBasis) -> Result<NormalEquations> {
    check_samples(s, basis)?;
    let n = basis.n();
    let m = basis.len();
    let d = basis.d() as i32;
    let top = f64::from(d + 1);
    let mut gram = DMatrix::zeros(m, m);
    let mut linear = DVector::zeros(m);
    let mut constant = 0.0;
    let mut pow = PowerTable::new(d as usize);
    let mut jt = vec![0.0; m * n];
    let mut lap = vec![0.0; m];
    let mut grad_h = vec![0.0; n];
    for x in s.rows() {
        pow.fill(x);
        basis.jacobian_into(&pow, &mut jt);
        basis.laplacian_into(&pow, &mut lap);
        let mut lap_h = 0.0;
        for (i, g) in grad_h.iter_mut().enumerate() {
            *g = -top * pow.get(i, d as u8);
            if d >= 1 {
                lap_h -= top * f64::from(d) * pow.get(i, (d - 1) as u8);
            }
        }
        constant += lap_h + 0.5 * grad_h.iter().map(|g| g * g).sum::<f64>();
        for a in 0..m {
            let ra = &jt[a * n..(a + 1) * n];
            linear[a] += lap[a] + ra.iter().zip(&grad_h).map(|(u, v)| u * v).sum::<f64>();
            for b in a..m {
                let rb = &jt[b * n..(b + 1) * n];
                gram[(a, b)] += ra.iter().zip(rb).map(|(u, v)| u * v).sum::<f64>();
            }
        }
    }
    let count = s.len() as f64;
    for a in 0..m {
        for b in a..m {
            gram[(a, b)] /= count;
            gram[(b, a)] = gram[(a, b)];
        }
    }
    linear /= count;
    Ok(NormalEquations {
        gram,
        linear,
        constant: constant / count,
    })
}

impl NormalEquations {
    pub fn loss(&self, theta: &[f64]) -> f64 {
        let t = DVector::from_column_slice(theta);
        self.constant + self.linear.dot(&t) + 0.5 * t.dot(&(&self.gram * &t))
    }

    /// `G theta + b`, zero at the minimizer.
    pub fn residual(&self, theta: &[f64]) -> DVector<f64> {
        let t = DVector::from_column_slice(theta);
        &self.gram * t + &self.linear
    }
}

/// `E[tr grad^2 log p_theta + |grad log p_theta|^2 / 2]` over the sample; free of `Z`.
pub fn sm_loss(p: &ParamVector, s: &SampleSet) -> Result<f64> {
    Ok(sm_normal_equations(s, p.basis())?.loss(p.theta()))
}

/// Names of the monomials dominating the eigenvectors of `gram` with negligible eigenvalue.
fn null_monomials(gram: &DMatrix<f64>, basis: &MonomialBasis) -> Vec<String> {
    let eig = gram.clone().symmetric_eigen();
    let top = eig.eigenvalues.amax().max(f64::MIN_POSITIVE);
    let mut names = Vec::new();
    for (k, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam <= 1e-12 * top || !lam.is_finite() {
            let v = eig.eigenvectors.column(k);
            let j = v.iamax();
            let name = basis.indices()[j].to_string();
            if !names.contains(&name) {
                names.push(name);
            }
        }
    }
    names
}

/// Cholesky factor, rejected when a pivot is negligible against the diagonal.
fn definite_cholesky(g: &DMatrix<f64>) -> Option<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let ch = g.clone().cholesky()?;
    let scale = g.diagonal().amax();
    let l = ch.l_dirty();
    let smallest = (0..g.nrows())
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold(f64::INFINITY, f64::min);
    (smallest > 1e-14 * scale).then_some(ch)
}

/// Closed-form minimizer of [`sm_loss`]: `theta = -G^-1 E[Delta T + (JT) grad log h]`.
///
/// When `G` is not numerically positive definite it is solved with a ridge of
/// `1e-10 tr(G) / (M-1)`; the reported condition number then includes the ridge.
pub fn fit_score_matching(s: &SampleSet, basis: &MonomialBasis) -> Result<FitReport> {
    let start = Instant::now();
    let eq = sm_normal_equations(s, basis)?;
    let m = basis.len();
    let mut notes = Vec::new();
    let rhs = -&eq.linear;
    let (theta, cond) = match definite_cholesky(&eq.gram) {
        Some(ch) => (ch.solve(&rhs), condition_number(&eq.gram)),
        None => {
            let ridge = 1e-10 * eq.gram.trace() / m as f64;
            let shifted = &eq.gram + DMatrix::identity(m, m) * ridge;
            match definite_cholesky(&shifted) {
                Some(ch) if ridge > 0.0 => {
                    notes.push(format!("Gram matrix not positive definite; ridge {ridge:e} added"));
                    (ch.solve(&rhs), condition_number(&shifted))
                }
                _ => return Err(Error::SingularGram(null_monomials(&eq.gram, basis))),
            }
        }
    };
    if theta.iter().any(|t| !t.is_finite()) {
        return Err(Error::SingularGram(null_monomials(&eq.gram, basis)));
    }
    let theta_hat: Vec<f64> = theta.iter().copied().collect();
    Ok(FitReport {
        estimator: Estimator::Sm,
        n: basis.n(),
        d: basis.d(),
        loss: eq.loss(&theta_hat),
        theta_hat,
        gram_condition: cond,
        samples: s.len(),
        iterations: 0,
        notes,
        timing: Timing {
            wall_time_s: elapsed_s(start),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polybasis::enumerate_basis;
    use crate::sampler::{sample_exact_separable, Provenance};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use std::sync::Arc;

    fn rows(v: &[f64]) -> SampleSet {
        SampleSet::new(1, v.to_vec(), 0, Provenance::Manual).unwrap()
    }

    #[test]
    fn hand_evaluated_fits() {
        let b = enumerate_basis(1, 1).unwrap();
        let r = fit_score_matching(&rows(&[-0.7, 0.7]), &b).unwrap();
        assert!(r.theta_hat[0].abs() < 1e-15);
        let r = fit_score_matching(&rows(&[0.5, 1.0, 1.5]), &b).unwrap();
        assert!((r.theta_hat[0] - 2.0).abs() < 1e-14);
        assert_eq!(r.gram_condition, 1.0);
    }

    #[test]
    fn loss_at_origin() {
        let b = Arc::new(enumerate_basis(1, 1).unwrap());
        let p = ParamVector::zeros(b, 1.0).unwrap();
        assert_eq!(sm_loss(&p, &rows(&[0.0])).unwrap(), -2.0);
    }

    #[test]
    fn loss_matches_pointwise_definition() {
        // tr grad^2 log p + |grad log p|^2 / 2 evaluated directly from the score
        let b = Arc::new(enumerate_basis(2, 3).unwrap());
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let theta: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let p = ParamVector::new(b, theta, 1.0).unwrap();
        let data: Vec<f64> = (0..40).map(|_| rng.random_range(-1.5..1.5)).collect();
        let s = SampleSet::new(2, data, 0, Provenance::Manual).unwrap();
        let h = 1e-4;
        let mut direct = 0.0;
        for x in s.rows() {
            let g = crate::expfam::score(&p, x).unwrap();
            let mut tr = 0.0;
            for i in 0..2 {
                let mut up = x.to_vec();
                let mut dn = x.to_vec();
                up[i] += h;
                dn[i] -= h;
                let gu = crate::expfam::score(&p, &up).unwrap();
                let gd = crate::expfam::score(&p, &dn).unwrap();
                tr += (gu[i] - gd[i]) / (2.0 * h);
            }
            direct += tr + 0.5 * g.iter().map(|v| v * v).sum::<f64>();
        }
        direct /= s.len() as f64;
        let loss = sm_loss(&p, &s).unwrap();
        assert!(
            (loss - direct).abs() < 1e-6 * (1.0 + direct.abs()),
            "{loss} vs {direct}"
        );
    }

    #[test]
    fn minimizer_and_residual() {
        let b = Arc::new(enumerate_basis(2, 3).unwrap());
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for _ in 0..10 {
            let data: Vec<f64> = (0..400).map(|_| rng.random_range(-2.0..2.0)).collect();
            let s = SampleSet::new(2, data, 0, Provenance::Manual).unwrap();
            let fit = fit_score_matching(&s, &b).unwrap();
            let eq = sm_normal_equations(&s, &b).unwrap();
            let norm = fit.theta_hat.iter().map(|t| t * t).sum::<f64>().sqrt();
            assert!(eq.residual(&fit.theta_hat).norm() <= 1e-8 * (1.0 + norm));
            for _ in 0..20 {
                let probe: Vec<f64> = (0..b.len()).map(|_| rng.random_range(-3.0..3.0)).collect();
                let p = ParamVector::relaxed(b.clone(), probe).unwrap();
                assert!(fit.loss <= sm_loss(&p, &s).unwrap() + 1e-9);
            }
        }
    }

    #[test]
    fn loss_is_quadratic_along_segments() {
        let b = Arc::new(enumerate_basis(1, 3).unwrap());
        let s = rows(&[0.1, -0.4, 0.9, 1.3]);
        let t0 = [0.2, -0.1, 0.5];
        let dir = [1.0, 0.5, -0.3];
        let at = |t: f64| {
            let th: Vec<f64> = t0.iter().zip(&dir).map(|(a, b)| a + t * b).collect();
            sm_loss(&ParamVector::relaxed(b.clone(), th).unwrap(), &s).unwrap()
        };
        // the third difference of a quadratic vanishes
        let third = at(3.0) - 3.0 * at(2.0) + 3.0 * at(1.0) - at(0.0);
        assert!(third.abs() < 1e-9, "{third}");
    }

    #[test]
    fn gaussian_fixture_recovers_theta() {
        let b = Arc::new(enumerate_basis(1, 1).unwrap());
        let p = ParamVector::new(b.clone(), vec![1.0], 1.0).unwrap();
        let s = sample_exact_separable(&p, 100_000, 17).unwrap();
        let fit = fit_score_matching(&s, &b).unwrap();
        assert!((fit.theta_hat[0] - 1.0).abs() <= 0.05);
        // the Gaussian identity theta = 2 mean
        assert!((fit.theta_hat[0] - 2.0 * s.column_mean(0)).abs() < 1e-12);
    }

    #[test]
    fn too_few_samples_uses_the_ridge() {
        // one point cannot identify nine parameters
        let b = enumerate_basis(2, 3).unwrap();
        let s = SampleSet::new(2, vec![0.3, -0.2], 0, Provenance::Manual).unwrap();
        match fit_score_matching(&s, &b) {
            Ok(fit) => assert!(!fit.notes.is_empty()),
            Err(Error::SingularGram(names)) => assert!(!names.is_empty()),
            Err(e) => panic!("{e}"),
        }
        let empty = SampleSet::new(2, vec![], 0, Provenance::Manual).unwrap();
        assert!(matches!(fit_score_matching(&empty, &b), Err(Error::EmptySamples)));
    }
}
