//! Fisher information `Cov(T)`, the restricted Poincare constant of the pencil
//! `(I, E[(JT)(JT)^T])`, the score-matching covariance bound, and a battery of
//! explicit family-wide inequalities checked by quadrature.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::{
    checked_log_partition, expectation, tail_radius, GridSummary, MomentTable, ParamVector, QuadratureGrid,
};
use crate::polybasis::{family_size, MonomialBasis, PowerTable};
use crate::report::Check;
use crate::sampler::SampleSet;

/// Eigenvalues this far below zero are treated as roundoff and clipped.
pub const CLIP_TOLERANCE: f64 = 1e-10;
const RANDOM_PROBES: usize = 100;

/// Where the expectations come from.
#[derive(Clone, Copy, Debug)]
pub enum Source<'a> {
    Grid(&'a QuadratureGrid),
    Samples(&'a SampleSet),
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// `I(theta) = E[T T^T] - E[T] E[T]^T`, symmetrized. The grid path applies the
/// convergence gate; the sample path divides by `N`.
pub fn fisher_info(p: &ParamVector, source: Source<'_>) -> Result<DMatrix<f64>> {
    match source {
        Source::Grid(grid) => {
            checked_log_partition(p, grid)?.require_converged()?;
            Ok(crate::expfam::moments(p, grid)?.covariance())
        }
        Source::Samples(s) => {
            if s.is_empty() {
                return Err(Error::EmptySamples);
            }
            let basis = p.basis();
            if s.n() != basis.n() {
                return Err(Error::DimensionMismatch {
                    expected: basis.n(),
                    got: s.n(),
                });
            }
            let m = basis.len();
            let mut pow = basis.power_table();
            let mut t = vec![0.0; m];
            let mut mean = DVector::zeros(m);
            let mut second = DMatrix::zeros(m, m);
            for x in s.rows() {
                pow.fill(x);
                basis.suffstats_into(&pow, &mut t);
                let tv = DVector::from_column_slice(&t);
                mean += &tv;
                second.ger(1.0, &tv, &tv, 1.0);
            }
            let count = s.len() as f64;
            mean /= count;
            let second = second / count;
            Ok(symmetrize(second - &mean * mean.transpose()))
        }
    }
}

/// `E[(JT)(JT)^T]` from a moment table with powers up to `2d`.
pub fn gradient_gram(p: &ParamVector, grid: &QuadratureGrid) -> Result<DMatrix<f64>> {
    let table = MomentTable::build(p, grid, 2 * p.d() as usize)?;
    Ok(gradient_gram_from(p.basis(), &table))
}

fn gradient_gram_from(basis: &MonomialBasis, table: &MomentTable) -> DMatrix<f64> {
    let idx = basis.indices();
    let m = idx.len();
    let mut g = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in a..m {
            let mut v = 0.0;
            for i in 0..basis.n() {
                let (da, db) = (idx[a].degree(i), idx[b].degree(i));
                if da == 0 || db == 0 {
                    continue;
                }
                let mut gamma = idx[a].plus(&idx[b]).degrees().to_vec();
                gamma[i] -= 2;
                v += f64::from(da) * f64::from(db) * table.moment(&gamma);
            }
            g[(a, b)] = v;
            g[(b, a)] = v;
        }
    }
    g
}

/// The maximal generalized eigenvalue of `(I, G)` with its eigenvector.
#[derive(Clone, Debug, PartialEq)]
pub struct Poincare {
    pub constant: f64,
    /// Maximizer of `w^T I w / w^T G w`, normalized so `w^T G w = 1`.
    pub witness: DVector<f64>,
}

/// `max_w (w^T I w) / (w^T G w)` through `G = L L^T` and the symmetric
/// eigenproblem of `L^-1 I L^-T`.
pub fn poincare_pencil(i: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<Poincare> {
    if i.shape() != g.shape() || i.nrows() != i.ncols() {
        return Err(Error::DimensionMismatch {
            expected: g.nrows(),
            got: i.nrows(),
        });
    }
    let chol = g.clone().cholesky().ok_or_else(|| {
        let eig = g.clone().symmetric_eigen();
        let top = eig.eigenvalues.amax();
        let null = eig
            .eigenvalues
            .iter()
            .enumerate()
            .filter(|(_, &l)| l <= 1e-12 * top)
            .map(|(k, _)| format!("direction {}", eig.eigenvectors.column(k).iamax()))
            .collect();
        Error::SingularGram(null)
    })?;
    let l = chol.l();
    let l_inv = l
        .clone()
        .solve_lower_triangular(&DMatrix::identity(g.nrows(), g.nrows()))
        .ok_or_else(|| Error::SingularGram(vec!["cholesky factor".into()]))?;
    let pencil = symmetrize(&l_inv * i * l_inv.transpose());
    let eig = pencil.symmetric_eigen();
    let k = eig.eigenvalues.imax();
    let v = eig.eigenvectors.column(k).into_owned();
    let witness = l_inv.transpose() * v;
    Ok(Poincare {
        constant: eig.eigenvalues[k].max(0.0),
        witness,
    })
}

pub fn restricted_poincare(i: &DMatrix<f64>, g: &DMatrix<f64>) -> Result<f64> {
    Ok(poincare_pencil(i, g)?.constant)
}

/// Expectations entering the covariance bound and the regularity preflight.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundMoments {
    /// `E ||(JT)_x||_op^4`.
    pub e_op_jt4: f64,
    /// `E ||Delta T(x)||^2`.
    pub e_dt2: f64,
    /// `E ||grad log h(x)||^4`.
    pub e_grad_h4: f64,
}

pub fn bound_moments(p: &ParamVector, grid: &QuadratureGrid, log_z: f64) -> Result<BoundMoments> {
    let basis = p.basis().clone();
    let n = basis.n();
    let m = basis.len();
    let d = p.d();
    let v = expectation(p, grid, log_z, 3, |x, out| {
        let mut pow = PowerTable::new(d as usize);
        pow.fill(x);
        let mut jt = vec![0.0; m * n];
        let mut lap = vec![0.0; m];
        basis.jacobian_into(&pow, &mut jt);
        basis.laplacian_into(&pow, &mut lap);
        // ||J||_op^2 is the top eigenvalue of the n x n matrix J^T J
        let j = DMatrix::from_row_slice(m, n, &jt);
        let jtj = j.transpose() * &j;
        let op2 = jtj.symmetric_eigen().eigenvalues.max().max(0.0);
        out[0] = op2 * op2;
        out[1] = lap.iter().map(|v| v * v).sum();
        let gh2: f64 = (0..n).map(|i| (f64::from(d + 1) * pow.get(i, d as u8)).powi(2)).sum();
        out[2] = gh2 * gh2;
    })?;
    Ok(BoundMoments {
        e_op_jt4: v[0],
        e_dt2: v[1],
        e_grad_h4: v[2],
    })
}

/// `2 C_P^2 (||theta||^2 E||JT||_op^4 + E||Delta T||^2) / lambda_min^2`.
pub fn gamma_bound(p: &ParamVector, c_p: f64, lambda_min: f64, mom: &BoundMoments) -> Result<f64> {
    if !(lambda_min > 0.0) {
        return Err(Error::Precondition(format!(
            "lambda_min must be positive, got {lambda_min}"
        )));
    }
    let theta_sq: f64 = p.theta().iter().map(|t| t * t).sum();
    Ok(2.0 * c_p * c_p * (theta_sq * mom.e_op_jt4 + mom.e_dt2) / (lambda_min * lambda_min))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Fault injection: negate the largest eigenvalue of `I` before checking.
    pub corrupt_fisher: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub lambda_min: f64,
    pub lambda_max: f64,
    #[serde(rename = "C_P")]
    pub c_p: f64,
    /// Absent when `lambda_min <= 0`.
    pub gamma_bound: Option<f64>,
    pub moments: BoundMoments,
    pub checks: Vec<Check>,
    /// Finiteness of the expectations the covariance bound relies on.
    pub regularity: Vec<Check>,
    pub grid: GridSummary,
    pub notes: Vec<String>,
}

impl SpectralReport {
    pub fn all_hold(&self) -> bool {
        crate::report::all_hold(&self.checks) && crate::report::all_hold(&self.regularity)
    }
}

/// Eigenvalues of a symmetric matrix with roundoff-level negatives clipped.
fn clipped_eigenvalues(i: &DMatrix<f64>, notes: &mut Vec<String>) -> DVector<f64> {
    let mut ev = i.clone().symmetric_eigen().eigenvalues;
    for v in ev.iter_mut() {
        if *v < 0.0 && *v >= -CLIP_TOLERANCE {
            notes.push(format!("eigenvalue {v:e} clipped to 0"));
            *v = 0.0;
        } else if *v < -CLIP_TOLERANCE {
            notes.push(format!("eigenvalue {v:e} is negative beyond roundoff"));
        }
    }
    ev
}

/// Runs the seven explicit inequalities on `p` by quadrature (`n <= 3`).
pub fn verify_bounds(p: &ParamVector, grid: &QuadratureGrid, opts: &VerifyOptions) -> Result<SpectralReport> {
    let gate = checked_log_partition(p, grid)?;
    gate.require_converged()?;
    let basis = p.basis();
    let n = p.n();
    let d = p.d();
    let m = basis.len();
    let b = p.bound();
    let big_m = family_size(n, d) as f64;
    let table = MomentTable::build(p, grid, 2 * d as usize)?;
    let idx = basis.indices();
    let mean = DVector::from_iterator(m, idx.iter().map(|a| table.moment(a.degrees())));
    let mut second = DMatrix::zeros(m, m);
    for a in 0..m {
        for c in a..m {
            let v = table.moment(idx[a].plus(&idx[c]).degrees());
            second[(a, c)] = v;
            second[(c, a)] = v;
        }
    }
    let mut fisher = symmetrize(&second - &mean * mean.transpose());
    let mut notes = Vec::new();
    if opts.corrupt_fisher {
        let eig = fisher.clone().symmetric_eigen();
        let k = eig.eigenvalues.imax();
        let v = eig.eigenvectors.column(k);
        fisher -= v * v.transpose() * (2.0 * eig.eigenvalues[k]);
        notes.push("fault injection: largest Fisher eigenvalue negated".into());
    }
    let ev = clipped_eigenvalues(&fisher, &mut notes);
    let lambda_min = ev.min();
    let lambda_max = ev.max();
    let gram = gradient_gram_from(basis, &table);
    let pencil = poincare_pencil(&fisher, &gram)?;
    let mom = bound_moments(p, grid, table.log_partition())?;
    let mean_sq = mean.norm_squared();

    let base = |extra_m: i32| {
        b.powi(2 * d as i32) * big_m.powi(2 * d as i32 + extra_m) * 2f64.powi(2 * (d * (d + 1)) as i32 + 1)
    };
    let mut checks = vec![
        Check::le("max_eigenvalue", lambda_max, base(1)),
        Check::le("mean_norm_sq", mean_sq, base(2)),
        Check::le("laplacian_second_moment", mom.e_dt2, f64::from(d).powi(4) * base(1)),
        Check::with("min_eigenvalue_positive", lambda_min, 0.0, lambda_min > 0.0),
    ];

    // (v) variance lower bound for random constant-free polynomials, in log space
    let r = tail_radius(n, d, b);
    let df = f64::from(d);
    let log_denom = 2.0 * df * 2f64.ln()
        + 2.0 * df * (df + 1.0).ln()
        + (df + 1.0) * (4.0 * std::f64::consts::E).ln()
        + (2.0 * df + 3.0) * big_m.ln()
        + (2.0 * df * df + 2.0 * df) * r.ln()
        + 2.0 * df * (n as f64 + b).ln();
    let mut rng = ChaCha20Rng::seed_from_u64(opts.seed);
    let mut worst = f64::INFINITY;
    for _ in 0..RANDOM_PROBES {
        let w = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
        let ef = w.dot(&mean);
        let ef2 = w.dot(&(&second * &w));
        let ratio = (ef2 - ef * ef) / w.norm_squared();
        worst = worst.min(ratio);
    }
    checks.push(Check::ge("variance_lower_bound", worst, (-log_denom).exp()));

    // (vi) Var<w, T> by direct node evaluation against w^T I w
    let mut max_dev: f64 = 0.0;
    let log_z = table.log_partition();
    for _ in 0..RANDOM_PROBES.min(10) {
        let w: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let basis_c = basis.clone();
        let wc = w.clone();
        let e = expectation(p, grid, log_z, 2, move |x, out| {
            let mut pow = basis_c.power_table();
            pow.fill(x);
            let mut t = vec![0.0; wc.len()];
            basis_c.suffstats_into(&pow, &mut t);
            let f: f64 = t.iter().zip(&wc).map(|(a, c)| a * c).sum();
            out[0] = f;
            out[1] = f * f;
        })?;
        let direct = e[1] - e[0] * e[0];
        let wv = DVector::from_vec(w);
        let quad = wv.dot(&(&fisher * &wv));
        max_dev = max_dev.max((direct - quad).abs() / quad.abs().max(1.0));
    }
    checks.push(Check::le("variance_identity", max_dev, 1e-8));

    // (vii) Poincare constant against the condition-number bound
    let rhs = (4.0 + 4.0 * mean_sq) * lambda_max / lambda_min.min(1.0);
    checks.push(if lambda_min > 0.0 {
        Check::le("poincare_condition_bound", pencil.constant, rhs)
    } else {
        Check::with("poincare_condition_bound", pencil.constant, f64::INFINITY, false)
    });

    let regularity = vec![
        Check::with(
            "finite_grad_log_h_4",
            mom.e_grad_h4,
            f64::INFINITY,
            mom.e_grad_h4.is_finite(),
        ),
        Check::with("finite_laplacian_T_2", mom.e_dt2, f64::INFINITY, mom.e_dt2.is_finite()),
        Check::with(
            "finite_jacobian_op_4",
            mom.e_op_jt4,
            f64::INFINITY,
            mom.e_op_jt4.is_finite(),
        ),
    ];
    let gamma = gamma_bound(p, pencil.constant, lambda_min, &mom).ok();
    Ok(SpectralReport {
        lambda_min,
        lambda_max,
        c_p: pencil.constant,
        gamma_bound: gamma,
        moments: mom,
        checks,
        regularity,
        grid: grid.summary(),
        notes,
    })
}
