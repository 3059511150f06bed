//! Acceptance criteria 1-9. Each criterion prints one PASS/FAIL line with its
//! measured quantities and runtime; the test fails if any criterion fails.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::{json, Value};

use polyscore_core::estimators::{
    convergence_study, fit_score_matching, sm_normal_equations, Estimator, MleOptions, StudyOptions,
};
use polyscore_core::expfam::{check_1d_moment_bound, grid_for, verify_int_concentration, GridSpec, ParamVector};
use polyscore_core::fisher::{fisher_info, gradient_gram, restricted_poincare, verify_bounds, Source, VerifyOptions};
use polyscore_core::hardness::{
    default_params, encode, mean_sign_experiment, orthant_mass, parse_dimacs, random_formula, verify_roots,
    zgap_experiment, CnfFormula, ParamMode, Prescription,
};
use polyscore_core::polybasis::{check_mon_l2_bound, enumerate_basis, multi_indices, to_legendre, PolyCoeffs};
use polyscore_core::sampler::{sample_exact_separable, sample_mala, McmcConfig, SampleSet};

struct Outcome {
    pass: bool,
    summary: String,
    /// Everything the criterion computed, without wall-clock fields.
    report: Value,
}

fn random_theta(rng: &mut ChaCha20Rng, n: usize, d: u32, bound: f64) -> ParamVector {
    let basis = Arc::new(enumerate_basis(n, d).unwrap());
    let theta = (0..basis.len()).map(|_| rng.random_range(-bound..=bound)).collect();
    ParamVector::new(basis, theta, bound).unwrap()
}

fn draw(p: &ParamVector, count: usize, seed: u64) -> SampleSet {
    if p.first_coupling().is_none() {
        sample_exact_separable(p, count, seed).unwrap()
    } else {
        sample_mala(p, count, &McmcConfig::default(), seed).unwrap()
    }
}

fn gaussian_star() -> ParamVector {
    let basis = Arc::new(enumerate_basis(1, 1).unwrap());
    ParamVector::new(basis, vec![1.0], 1.0).unwrap()
}

fn testdata(name: &str) -> CnfFormula {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("testdata").join(name);
    parse_dimacs(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// SM closed form beats random probes and solves its normal equations.
fn criterion_1() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(101);
    let (mut worst_residual, mut probe_failures) = (0.0f64, 0usize);
    let mut thetas = Vec::new();
    for k in 0..50 {
        let n = 1 + k % 2;
        let star = random_theta(&mut rng, n, 3, 1.0);
        let s = draw(&star, 1000, 1000 + k as u64);
        let fit = fit_score_matching(&s, star.basis()).unwrap();
        let eq = sm_normal_equations(&s, star.basis()).unwrap();
        let best = eq.loss(&fit.theta_hat);
        let norm = fit.theta_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
        worst_residual = worst_residual.max(eq.residual(&fit.theta_hat).norm() / (1.0 + norm));
        for j in 0..100 {
            let probe: Vec<f64> = if j % 2 == 0 {
                fit.theta_hat.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect()
            } else {
                (0..fit.theta_hat.len()).map(|_| rng.random_range(-2.0..2.0)).collect()
            };
            if eq.loss(&probe) < best {
                probe_failures += 1;
            }
        }
        thetas.push(fit.theta_hat);
    }
    Outcome {
        pass: worst_residual <= 1e-8 && probe_failures == 0,
        summary: format!("worst relative residual {worst_residual:.2e}, probes beating the fit {probe_failures}/5000"),
        report: json!({"residual": worst_residual, "probe_failures": probe_failures, "theta_hat": thetas}),
    }
}

/// 1/N law for both estimators on the Gaussian subfamily.
fn criterion_2() -> Outcome {
    let opts = StudyOptions {
        sizes: vec![100, 1000, 10_000, 100_000],
        trials: 20,
        estimators: vec![Estimator::Sm, Estimator::Mle],
        seed: 202,
        mle: MleOptions::default(),
        mcmc: McmcConfig::default(),
    };
    let table = convergence_study(&gaussian_star(), &opts).unwrap();
    let slopes: Vec<f64> = table.summaries.iter().map(|s| s.slope.unwrap_or(f64::NAN)).collect();
    let ratio = table.sm_mle_ratio.clone().unwrap_or_default();
    let slopes_ok = slopes.len() == 2 && slopes.iter().all(|s| (-1.3..=-0.7).contains(s));
    let ratio_ok = ratio.len() == 4 && ratio.iter().all(|r| *r <= 10.0);
    Outcome {
        pass: slopes_ok && ratio_ok,
        summary: format!(
            "slopes sm {:.3} mle {:.3}, max SM/MLE ratio {:.3}",
            slopes[0],
            slopes[1],
            ratio.iter().cloned().fold(f64::NAN, f64::max)
        ),
        report: serde_json::to_value(table.without_timing()).unwrap(),
    }
}

/// Gaussian Fisher information and Poincare constant; the Poincare-conditioning
/// inequality over random quartic members.
fn criterion_3() -> Outcome {
    let basis = Arc::new(enumerate_basis(1, 1).unwrap());
    let p = ParamVector::zeros(basis, 1.0).unwrap();
    let grid = grid_for(&p, &GridSpec::default()).unwrap();
    let i = fisher_info(&p, Source::Grid(&grid)).unwrap();
    let g = gradient_gram(&p, &grid).unwrap();
    let c_p = restricted_poincare(&i, &g).unwrap();
    let gaussian_ok = (i[(0, 0)] - 0.5).abs() <= 1e-6 && (c_p - 0.5).abs() <= 1e-6;

    let mut rng = ChaCha20Rng::seed_from_u64(303);
    let mut failures = 0;
    let mut ratios = Vec::new();
    for k in 0..20 {
        let p = random_theta(&mut rng, 1, 3, 1.0);
        let grid = grid_for(&p, &GridSpec::default()).unwrap();
        let rep = verify_bounds(
            &p,
            &grid,
            &VerifyOptions {
                seed: k,
                corrupt_fisher: false,
            },
        )
        .unwrap();
        let c = rep
            .checks
            .iter()
            .find(|c| c.name == "poincare_condition_bound")
            .unwrap();
        failures += usize::from(!c.holds);
        ratios.push(c.lhs / c.rhs);
    }
    Outcome {
        pass: gaussian_ok && failures == 0,
        summary: format!(
            "I = {:.9}, C_P = {:.9}, poincare condition failures {failures}/20",
            i[(0, 0)],
            c_p
        ),
        report: json!({"fisher": i[(0, 0)], "c_p": c_p, "ratios": ratios}),
    }
}

/// N Cov(theta_SM) against the covariance bound.
fn criterion_4() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(404);
    let star = random_theta(&mut rng, 1, 3, 1.0);
    let grid = grid_for(&star, &GridSpec::default()).unwrap();
    let rep = verify_bounds(&star, &grid, &VerifyOptions::default()).unwrap();
    let gamma = rep.gamma_bound.unwrap_or(f64::NAN);
    let (trials, count) = (200usize, 10_000usize);
    let m = star.basis().len();
    let fits: Vec<DVector<f64>> = (0..trials)
        .map(|t| {
            let s = sample_exact_separable(&star, count, 40_000 + t as u64).unwrap();
            DVector::from_vec(fit_score_matching(&s, star.basis()).unwrap().theta_hat)
        })
        .collect();
    let mean = fits.iter().fold(DVector::zeros(m), |a, f| a + f) / trials as f64;
    let mut cov = DMatrix::zeros(m, m);
    for f in &fits {
        let c = f - &mean;
        cov += &c * c.transpose();
    }
    cov *= count as f64 / (trials - 1) as f64;
    let op = cov.symmetric_eigen().eigenvalues.amax();
    Outcome {
        pass: op.is_finite() && op <= gamma,
        summary: format!("||N Cov|| = {op:.4e}, bound = {gamma:.4e}"),
        report: json!({"theta_star": star.theta(), "op_norm": op, "gamma_bound": gamma}),
    }
}

/// All seven explicit inequalities on ten random members.
fn criterion_5() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(505);
    let mut failed = Vec::new();
    let mut reports = Vec::new();
    for k in 0..10usize {
        let n = 1 + k % 2;
        let d = [1, 3][(k / 2) % 2];
        let bound = [1.0, 2.0][(k / 4) % 2];
        let p = random_theta(&mut rng, n, d, bound);
        let grid = grid_for(&p, &GridSpec::default()).unwrap();
        let rep = verify_bounds(
            &p,
            &grid,
            &VerifyOptions {
                seed: k as u64,
                corrupt_fisher: false,
            },
        )
        .unwrap();
        if !rep.all_hold() {
            let names: Vec<&str> = rep
                .checks
                .iter()
                .chain(&rep.regularity)
                .filter(|c| !c.holds)
                .map(|c| c.name.as_str())
                .collect();
            failed.push(format!("member {k} (n={n} d={d} B={bound}): {}", names.join(",")));
        }
        reports.push(rep);
    }
    Outcome {
        pass: failed.is_empty(),
        summary: if failed.is_empty() {
            "10/10 members satisfy all checks".into()
        } else {
            failed.join("; ")
        },
        report: serde_json::to_value(reports).unwrap(),
    }
}

/// Monomial versus L2 norm, and the Legendre round trip.
fn criterion_6() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(606);
    let (mut worst_ratio, mut worst_trip, mut failures) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..1000 {
        let n = rng.random_range(1..=3usize);
        let d = rng.random_range(1..=5u32);
        let terms = multi_indices(n, 0, d)
            .into_iter()
            .map(|i| (i, rng.random_range(-1.0..1.0)));
        let f = PolyCoeffs::from_terms(n, terms).unwrap();
        let c = check_mon_l2_bound(&f, n, d).unwrap();
        failures += usize::from(!c.holds);
        worst_ratio = worst_ratio.max(c.lhs / c.rhs);
        let back = to_legendre(&f, d).unwrap().to_monomial().add(&f.scaled(-1.0));
        worst_trip = back.terms().fold(worst_trip, |m, (_, v)| m.max(v.abs()));
    }
    Outcome {
        pass: failures == 0 && worst_trip <= 1e-9,
        summary: format!("bound failures {failures}/1000, worst ratio {worst_ratio:.3e}, round trip {worst_trip:.2e}"),
        report: json!({"worst_ratio": worst_ratio, "round_trip": worst_trip}),
    }
}

/// The 3-SAT encoding: roots, coefficient bounds and the three quadrature experiments
/// at the prescribed parameters.
fn criterion_7() -> Outcome {
    let mut rng = ChaCha20Rng::seed_from_u64(707);
    let (mut root_failures, mut coef_failures) = (0usize, 0usize);
    for _ in 0..100 {
        let n = rng.random_range(3..=12usize);
        let m = rng.random_range(1..=4 * n);
        let f = random_formula(n, m, &mut rng);
        let (alpha, beta) = default_params(n, m, ParamMode::from_base(Prescription::Zeroth)).unwrap();
        let inst = encode(&f, alpha, beta).unwrap();
        root_failures += usize::from(!verify_roots(&inst, 20, &mut rng).unwrap().all_hold());
        let max = inst.theta.theta().iter().fold(0.0f64, |a, c| a.max(c.abs()));
        coef_failures += usize::from(max > 64.0 * m as f64 * alpha + 2.0 * beta);
    }

    let (uniq, unsat, single) = (testdata("uniq3.cnf"), testdata("unsat3.cnf"), testdata("single3.cnf"));
    let spec = GridSpec::default();
    let (a, b) = default_params(3, unsat.m(), ParamMode::from_base(Prescription::Zeroth)).unwrap();
    let zgap = zgap_experiment(&uniq, &unsat, a, b, &spec).unwrap();
    let (a, b) = default_params(3, uniq.m(), ParamMode::from_base(Prescription::First)).unwrap();
    let sign = mean_sign_experiment(&uniq, a, b, &spec).unwrap();
    let (a, b) = default_params(3, single.m(), ParamMode::from_base(Prescription::Sampling)).unwrap();
    let orth = orthant_mass(&single, a, b, &spec).unwrap();

    let zgap_ok = zgap.converged && zgap.separated.holds;
    let sign_ok = sign.converged && sign.recovered == sign.solution && sign.margin >= 1.0 / 20.0;
    let orth_ok = orth.converged && orth.mass_on_sat >= 0.5;
    Outcome {
        pass: root_failures == 0 && coef_failures == 0 && zgap_ok && sign_ok && orth_ok,
        summary: format!(
            "roots failures {root_failures}/100, coefficient failures {coef_failures}/100, \
             gap {:.3} vs {:.3}, mean-sign margin {:.4}, orthant mass {:.4}",
            zgap.gap, zgap.threshold, sign.margin, orth.mass_on_sat
        ),
        report: json!({"zgap": zgap, "mean_sign": sign, "orthant": orth}),
    }
}

/// One-dimensional concentration and moment lemmas.
fn criterion_8() -> Outcome {
    let mut reports = Vec::new();
    let mut ok = true;
    for (r, m, slack) in [(0.03, 1u32, 1.0), (0.035, 2, 1.5), (0.02, 4, 1.2)] {
        let beta = slack * 40.0 / (r * r) * (4.0 * f64::from(m) / r).ln();
        let rep = verify_int_concentration(beta, r, m).unwrap();
        ok &= rep.concentration.holds && rep.explicit.holds;
        reports.push(rep);
    }
    let moments = check_1d_moment_bound(160.0 * 8f64.ln()).unwrap();
    let moments_ok = moments.iter().all(|c| c.holds);
    Outcome {
        pass: ok && moments_ok,
        summary: format!(
            "concentration at 3 triples {}, moment bound k<=8 {}",
            if ok { "holds" } else { "fails" },
            if moments_ok { "holds" } else { "fails" }
        ),
        report: json!({"concentration": reports, "moments": moments}),
    }
}

type Criterion = (u32, fn() -> Outcome, Duration);

const CRITERIA: [Criterion; 8] = [
    (1, criterion_1, Duration::from_secs(60)),
    (2, criterion_2, Duration::from_secs(300)),
    (3, criterion_3, Duration::from_secs(120)),
    (4, criterion_4, Duration::from_secs(600)),
    (5, criterion_5, Duration::from_secs(300)),
    (6, criterion_6, Duration::from_secs(60)),
    (7, criterion_7, Duration::from_secs(900)),
    (8, criterion_8, Duration::from_secs(60)),
];

fn main() {
    let mut all = true;
    let mut first_reports = Vec::new();
    for (id, f, budget) in CRITERIA {
        let start = Instant::now();
        let out = f();
        let took = start.elapsed();
        let pass = out.pass && took <= budget;
        all &= pass;
        println!(
            "criterion {id}: {} ({}; {:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            out.summary,
            took.as_secs_f64(),
            budget.as_secs()
        );
        first_reports.push(serde_json::to_string(&out.report).unwrap());
    }

    let mut differing = Vec::new();
    for ((id, f, _), first) in CRITERIA.iter().zip(&first_reports) {
        if serde_json::to_string(&f().report).unwrap() != *first {
            differing.push(id.to_string());
        }
    }
    let pass = differing.is_empty();
    all &= pass;
    println!(
        "criterion 9: {} ({})",
        if pass { "PASS" } else { "FAIL" },
        if pass {
            "criteria 1-8 reproduce byte for byte".to_string()
        } else {
            format!("reports differ for {}", differing.join(", "))
        }
    );
    if !all {
        eprintln!("some acceptance criteria failed");
        std::process::exit(1);
    }
}
