//! Quadrature experiments on encoded instances with `n <= 3`.

use serde::{Deserialize, Serialize};

use super::{encode, CnfFormula, EncodedInstance};
use crate::error::{Error, Result};
use crate::expfam::{
    auto_radius, build_grid, log_partition, GridSpec, GridSummary, MomentTable, QuadratureGrid, Refinement,
    GRID_TOLERANCE, MAX_GRID_DIM,
};
use crate::report::Check;

/// Radius beyond which the encoded density is negligible.
///
/// Outside `[-r, r]` in any coordinate the log-integrand is at most
/// `-(r^8 + beta (r^2 - 1)^2)`, while a box of side `1/(2 sqrt(beta + 1))` at any
/// vertex keeps it above `-(250 m alpha + 27 n)`; `r` is chosen so the ratio of the
/// two, with the box volume and a `1e-13` margin, is below one.
pub fn hardness_radius(n: usize, m: usize, alpha: f64, beta: f64) -> f64 {
    let nf = n as f64;
    let need = 250.0 * m as f64 * alpha + nf * (28.0 + 2f64.ln() + 0.5 * (beta + 1.0).ln()) + 30.0 + nf.ln();
    let drop = |r: f64| r.powi(8) + beta * (r * r - 1.0).powi(2);
    let (mut lo, mut hi) = (1.0, 2.0);
    while drop(hi) < need {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if drop(mid) < need {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// One grid for all `instances`: the smaller of the automatic and the
/// construction-specific radius, refined around `+-1` at width `1/sqrt(beta)`.
pub fn hardness_grid(instances: &[&EncodedInstance], spec: &GridSpec) -> Result<QuadratureGrid> {
    let first = instances
        .first()
        .ok_or_else(|| Error::Precondition("no instance to build a grid for".into()))?;
    let n = first.formula.n();
    if n > MAX_GRID_DIM {
        return Err(Error::Precondition(format!(
            "quadrature experiments need n <= {MAX_GRID_DIM}, got {n}"
        )));
    }
    let radius = match spec.radius {
        Some(r) => r,
        None => instances
            .iter()
            .map(|i| auto_radius(&i.theta).min(hardness_radius(n, i.formula.m(), i.alpha, i.beta)))
            .fold(0.0, f64::max),
    };
    let beta = instances.iter().map(|i| i.beta).fold(0.0, f64::max);
    let refine = spec
        .refine
        .clone()
        .unwrap_or_else(|| Refinement::for_beta(vec![-1.0, 1.0], beta));
    build_grid(n, radius, spec.points_per_axis, Some(&refine))
}

/// A moment table with the grid gate evaluated alongside.
struct Gated {
    table: MomentTable,
    delta: f64,
}

impl Gated {
    fn new(inst: &EncodedInstance, grid: &QuadratureGrid, k: usize) -> Result<Self> {
        let table = MomentTable::build(&inst.theta, grid, k)?;
        let fine = log_partition(&inst.theta, &grid.doubled()?)?;
        Ok(Self {
            delta: (fine - table.log_partition()).abs(),
            table,
        })
    }

    fn converged(&self) -> bool {
        self.delta < GRID_TOLERANCE
    }
}

fn not_converged_note(name: &str, delta: f64) -> String {
    format!("{name}: grid gate failed (|delta log Z| = {delta:e}); assertion not made")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZGapReport {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    /// `log int h exp(-alpha H_C - beta G)`, the dropped constant restored.
    pub log_z_sat: f64,
    pub log_z_unsat: f64,
    pub gap: f64,
    /// `2 n log 1.16`.
    pub threshold: f64,
    pub converged: bool,
    pub grid: GridSummary,
    pub separated: Check,
    pub notes: Vec<String>,
}

/// `log Z` of two formulas on one shared grid, and whether the gap exceeds `2 n log 1.16`.
pub fn zgap_experiment(
    sat: &CnfFormula,
    unsat: &CnfFormula,
    alpha: f64,
    beta: f64,
    spec: &GridSpec,
) -> Result<ZGapReport> {
    if sat.n() != unsat.n() {
        return Err(Error::Precondition(format!(
            "formulas must share n (got {} and {})",
            sat.n(),
            unsat.n()
        )));
    }
    let a = encode(sat, alpha, beta)?;
    let b = encode(unsat, alpha, beta)?;
    let grid = hardness_grid(&[&a, &b], spec)?;
    let ga = Gated::new(&a, &grid, 0)?;
    let gb = Gated::new(&b, &grid, 0)?;
    let log_z_sat = ga.table.log_partition() + a.dropped_constant;
    let log_z_unsat = gb.table.log_partition() + b.dropped_constant;
    let gap = log_z_sat - log_z_unsat;
    let threshold = 2.0 * sat.n() as f64 * 1.16f64.ln();
    let converged = ga.converged() && gb.converged();
    let mut notes = Vec::new();
    if !ga.converged() {
        notes.push(not_converged_note("first formula", ga.delta));
    }
    if !gb.converged() {
        notes.push(not_converged_note("second formula", gb.delta));
    }
    Ok(ZGapReport {
        n: sat.n(),
        alpha,
        beta,
        log_z_sat,
        log_z_unsat,
        gap,
        threshold,
        converged,
        grid: grid.summary(),
        separated: Check::with("zgap_separation", gap, threshold, converged && gap > threshold),
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanSignReport {
    pub solution: Vec<i8>,
    pub mean: Vec<f64>,
    pub recovered: Vec<i8>,
    /// `min_i v*_i E[x_i]`.
    pub margin: f64,
    pub converged: bool,
    pub grid: GridSummary,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
}

impl MeanSignReport {
    pub fn all_hold(&self) -> bool {
        crate::report::all_hold(&self.checks)
    }
}

/// `sign(E[x])` for a formula with a unique satisfying assignment.
pub fn mean_sign_experiment(f: &CnfFormula, alpha: f64, beta: f64, spec: &GridSpec) -> Result<MeanSignReport> {
    let sols = f.satisfying_assignments()?;
    if sols.len() != 1 {
        return Err(Error::Precondition(format!(
            "formula needs exactly one satisfying assignment, found {}",
            sols.len()
        )));
    }
    let solution = sols.into_iter().next().unwrap();
    let inst = encode(f, alpha, beta)?;
    let grid = hardness_grid(&[&inst], spec)?;
    let g = Gated::new(&inst, &grid, 1)?;
    let n = f.n();
    let mean: Vec<f64> = (0..n)
        .map(|i| {
            let mut e = vec![0u8; n];
            e[i] = 1;
            g.table.moment(&e)
        })
        .collect();
    let recovered: Vec<i8> = mean.iter().map(|&m| if m >= 0.0 { 1 } else { -1 }).collect();
    let margin = mean
        .iter()
        .zip(&solution)
        .map(|(m, &v)| m * f64::from(v))
        .fold(f64::INFINITY, f64::min);
    let converged = g.converged();
    let matches = recovered == solution;
    let mut notes = Vec::new();
    if !converged {
        notes.push(not_converged_note("mean", g.delta));
    }
    Ok(MeanSignReport {
        checks: vec![
            Check::with(
                "sign_recovers_solution",
                f64::from(u8::from(matches)),
                1.0,
                converged && matches,
            ),
            Check::with("mean_margin", margin, 0.05, converged && margin >= 0.05),
        ],
        solution,
        mean,
        recovered,
        margin,
        converged,
        grid: grid.summary(),
        notes,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrthantReport {
    pub satisfying: Vec<Vec<i8>>,
    pub mass_on_sat: f64,
    pub converged: bool,
    pub grid: GridSummary,
    /// `mass_on_sat >= 1/2`; absent for unsatisfiable formulas.
    pub check: Option<Check>,
    pub notes: Vec<String>,
}

/// Probability of the union of orthants `{x : x_i v_i >= 0}` over satisfying `v`.
pub fn orthant_mass(f: &CnfFormula, alpha: f64, beta: f64, spec: &GridSpec) -> Result<OrthantReport> {
    let satisfying = f.satisfying_assignments()?;
    let inst = encode(f, alpha, beta)?;
    let grid = hardness_grid(&[&inst], spec)?;
    let g = Gated::new(&inst, &grid, 0)?;
    let mass_on_sat: f64 = satisfying
        .iter()
        .map(|v| {
            let signs: Vec<bool> = v.iter().map(|&s| s > 0).collect();
            g.table.orthant_mass(&signs)
        })
        .sum();
    let converged = g.converged();
    let mut notes = Vec::new();
    if !converged {
        notes.push(not_converged_note("orthant", g.delta));
    }
    let check = if satisfying.is_empty() {
        notes.push("formula unsatisfiable: no orthant assertion".into());
        None
    } else {
        Some(Check::with(
            "orthant_mass",
            mass_on_sat,
            0.5,
            converged && mass_on_sat >= 0.5,
        ))
    };
    Ok(OrthantReport {
        satisfying,
        mass_on_sat,
        converged,
        grid: grid.summary(),
        check,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hardness::{default_params, parse_dimacs, ParamMode, Prescription};

    fn complete() -> CnfFormula {
        let mut text = String::from("p cnf 3 8\n");
        for k in 0..8 {
            let s = |b: i32, v: i32| if k >> b & 1 == 1 { -v } else { v };
            text.push_str(&format!("{} {} {} 0\n", s(2, 1), s(1, 2), s(0, 3)));
        }
        parse_dimacs(&text).unwrap()
    }

    fn unique() -> CnfFormula {
        let c = complete();
        let clauses = c.clauses().iter().copied().filter(|cl| *cl != [-1, -2, -3]).collect();
        CnfFormula::new(3, clauses).unwrap()
    }

    // the full prescriptions run in the acceptance suite; scaled copies keep these quick
    fn mode(base: Prescription) -> ParamMode {
        ParamMode { base, factor: 0.01 }
    }

    #[test]
    fn fixtures() {
        assert!(complete().satisfying_assignments().unwrap().is_empty());
        assert_eq!(unique().satisfying_assignments().unwrap(), vec![vec![1, 1, 1]]);
    }

    #[test]
    fn radius_is_modest_for_sharp_instances() {
        let r = hardness_radius(3, 8, 8.0, 1e6);
        assert!(r > 1.0 && r < 1.1, "{r}");
        let r = hardness_radius(3, 8, 8.0, 1.0);
        assert!(r > 1.5 && r < 4.0, "{r}");
    }

    #[test]
    fn identical_formulas_have_zero_gap() {
        let f = unique();
        let rep = zgap_experiment(&f, &f, 1.0, 20.0, &GridSpec::default()).unwrap();
        assert_eq!(rep.gap, 0.0);
    }

    #[test]
    fn scaled_zero_order_gap() {
        let (a, b) = default_params(3, 8, mode(Prescription::Zeroth)).unwrap();
        let rep = zgap_experiment(&unique(), &complete(), a, b, &GridSpec::default()).unwrap();
        assert!(rep.converged, "{rep:?}");
        assert!(rep.separated.holds, "{rep:?}");
    }

    #[test]
    fn scaled_mean_sign() {
        let (a, b) = default_params(3, 7, mode(Prescription::First)).unwrap();
        let rep = mean_sign_experiment(&unique(), a, b, &GridSpec::default()).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
        let neg = mean_sign_experiment(&unique().negated(), a, b, &GridSpec::default()).unwrap();
        assert_eq!(neg.recovered, vec![-1, -1, -1]);
        assert!(mean_sign_experiment(&complete(), a, b, &GridSpec::default()).is_err());
    }

    #[test]
    fn orthant_masses() {
        let single = parse_dimacs("p cnf 3 1\n1 2 -3 0\n").unwrap();
        let (a, b) = default_params(3, 1, mode(Prescription::Sampling)).unwrap();
        let rep = orthant_mass(&single, a, b, &GridSpec::default()).unwrap();
        assert!(rep.check.as_ref().unwrap().holds, "{rep:?}");
        let rep = orthant_mass(&complete(), 1.0, 10.0, &GridSpec::default()).unwrap();
        assert!(rep.check.is_none());
        assert_eq!(rep.mass_on_sat, 0.0);
    }
}
