//! Encoding 3-CNF formulas as members of the family: clause and hypercube
//! polynomials, the parameter prescriptions, and exact root verification.

mod experiments;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::expfam::ParamVector;
use crate::polybasis::{enumerate_basis, MultiIndex, PolyCoeffs, PolyJson};
use crate::report::Check;

pub use experiments::{
    hardness_grid, mean_sign_experiment, orthant_mass, zgap_experiment, MeanSignReport, OrthantReport, ZGapReport,
};

/// Degree of every encoded instance.
pub const ENCODED_DEGREE: u32 = 7;
/// Largest `n` for the exhaustive vertex scan.
pub const MAX_SCAN_VARS: usize = 20;

/// A 3-CNF formula; literal `+i` is `x_i`, `-i` its negation (1-based).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CnfFormula {
    n: usize,
    clauses: Vec<[i32; 3]>,
}

impl CnfFormula {
    pub fn new(n: usize, clauses: Vec<[i32; 3]>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("formula needs at least one variable".into()));
        }
        for (k, c) in clauses.iter().enumerate() {
            validate_clause(c, n).map_err(|msg| Error::Precondition(format!("clause {}: {msg}", k + 1)))?;
        }
        Ok(Self { n, clauses })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.clauses.len()
    }

    pub fn clauses(&self) -> &[[i32; 3]] {
        &self.clauses
    }

    /// Truth value at a `+-1` assignment (`+1` is true).
    pub fn satisfied_by(&self, v: &[i8]) -> bool {
        self.clauses.iter().all(|c| c.iter().any(|&l| lit_true(l, v)))
    }

    /// All satisfying `+-1` assignments, in binary counting order with `x_1` as the high bit.
    pub fn satisfying_assignments(&self) -> Result<Vec<Vec<i8>>> {
        if self.n > MAX_SCAN_VARS {
            return Err(Error::Precondition(format!(
                "exhaustive scan limited to n <= {MAX_SCAN_VARS}"
            )));
        }
        Ok((0..1u64 << self.n)
            .map(|k| vertex(self.n, k))
            .filter(|v| self.satisfied_by(v))
            .collect())
    }

    /// Every literal negated; maps each solution `v` to `-v`.
    pub fn negated(&self) -> Self {
        Self {
            n: self.n,
            clauses: self.clauses.iter().map(|c| [-c[0], -c[1], -c[2]]).collect(),
        }
    }

    pub fn to_dimacs(&self) -> String {
        let mut s = format!("p cnf {} {}\n", self.n, self.m());
        for c in &self.clauses {
            s.push_str(&format!("{} {} {} 0\n", c[0], c[1], c[2]));
        }
        s
    }
}

fn lit_true(l: i32, v: &[i8]) -> bool {
    let x = v[l.unsigned_abs() as usize - 1];
    if l > 0 {
        x > 0
    } else {
        x < 0
    }
}

/// The `k`-th vertex of `{-1, 1}^n`, bit `n - 1 - i` giving coordinate `i`.
pub(crate) fn vertex(n: usize, k: u64) -> Vec<i8> {
    (0..n)
        .map(|i| if (k >> (n - 1 - i)) & 1 == 1 { 1 } else { -1 })
        .collect()
}

fn validate_clause(c: &[i32], n: usize) -> std::result::Result<(), String> {
    if c.len() != 3 {
        return Err(format!("expected 3 literals, found {}", c.len()));
    }
    for &l in c {
        if l == 0 || l.unsigned_abs() as usize > n {
            return Err(format!("literal {l} out of range 1..={n}"));
        }
    }
    let v: Vec<u32> = c.iter().map(|l| l.unsigned_abs()).collect();
    if v[0] == v[1] || v[0] == v[2] || v[1] == v[2] {
        return Err(format!("repeated variable in clause {c:?}"));
    }
    Ok(())
}

/// Parses DIMACS CNF: `c` comment lines, one `p cnf n m` header, clauses ending in `0`.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    let mut current_line = 0;
    for (k, raw) in text.lines().enumerate() {
        let line_no = k + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('c') || line.starts_with('%') {
            continue;
        }
        let err = |msg: String| Error::Dimacs { line: line_no, msg };
        if line.starts_with('p') {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if header.is_some() {
                return Err(err("second header".into()));
            }
            if parts.len() != 4 || parts[1] != "cnf" {
                return Err(err(format!("malformed header '{line}'")));
            }
            let n = parts[2]
                .parse()
                .map_err(|_| err(format!("bad variable count '{}'", parts[2])))?;
            let m = parts[3]
                .parse()
                .map_err(|_| err(format!("bad clause count '{}'", parts[3])))?;
            header = Some((n, m));
            continue;
        }
        let (n, _) = header.ok_or_else(|| err("clause before 'p cnf' header".into()))?;
        for tok in line.split_whitespace() {
            let l: i32 = tok.parse().map_err(|_| err(format!("bad literal '{tok}'")))?;
            if current.is_empty() {
                current_line = line_no;
            }
            if l == 0 {
                validate_clause(&current, n).map_err(|msg| Error::Dimacs {
                    line: current_line,
                    msg,
                })?;
                clauses.push([current[0], current[1], current[2]]);
                current.clear();
            } else {
                current.push(l);
            }
        }
    }
    let (n, m) = header.ok_or(Error::Dimacs {
        line: 0,
        msg: "missing 'p cnf' header".into(),
    })?;
    if !current.is_empty() {
        return Err(Error::Dimacs {
            line: current_line,
            msg: "clause not terminated by 0".into(),
        });
    }
    if clauses.len() != m {
        return Err(Error::Dimacs {
            line: 0,
            msg: format!("header declares {m} clauses, found {}", clauses.len()),
        });
    }
    CnfFormula::new(n, clauses)
}

/// `prod_{literals} (x_i - s_i)^2` with `s_i = +1` for `x_i` and `-1` for its negation;
/// zero on a `+-1` vertex exactly when the vertex satisfies the clause.
pub fn clause_poly(clause: &[i32; 3], n: usize) -> PolyCoeffs {
    let mut h = PolyCoeffs::constant(n, 1.0);
    for &l in clause {
        let i = l.unsigned_abs() as usize - 1;
        let s = f64::from(l.signum());
        // (x_i - s)^2 = x_i^2 - 2 s x_i + 1
        let f = PolyCoeffs::from_terms(
            n,
            [
                (MultiIndex::power(n, i, 2), 1.0),
                (MultiIndex::unit(n, i), -2.0 * s),
                (MultiIndex::zero(n), 1.0),
            ],
        )
        .expect("indices match n");
        h = h.mul(&f);
    }
    h
}

/// `sum_i (1 - x_i^2)^2`.
pub fn hypercube_poly(n: usize) -> PolyCoeffs {
    let mut g = PolyCoeffs::constant(n, n as f64);
    for i in 0..n {
        g.add_term(MultiIndex::power(n, i, 2), -2.0);
        g.add_term(MultiIndex::power(n, i, 4), 1.0);
    }
    g
}

/// `H_C = sum over clauses of clause_poly`.
pub fn formula_poly(f: &CnfFormula) -> PolyCoeffs {
    f.clauses
        .iter()
        .fold(PolyCoeffs::zero(f.n), |acc, c| acc.add(&clause_poly(c, f.n)))
}

/// The parameter prescriptions from the hardness reductions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Prescription {
    /// `alpha = 2(n+1)`, `beta = 64800 n log(13 n sqrt(10 n))`.
    Zeroth,
    /// `alpha = 4n`, `beta = 129600 n^2 log(102 n^2 sqrt 5)`.
    First,
    /// `alpha = 2(n+1)`, `beta = 32400 n log(13 n sqrt(5 n))`.
    Sampling,
}

/// A prescription, optionally scaled down by `factor` in `(0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamMode {
    pub base: Prescription,
    pub factor: f64,
}

impl ParamMode {
    /// The unscaled prescription.
    pub fn from_base(base: Prescription) -> Self {
        Self { base, factor: 1.0 }
    }
}

impl FromStr for ParamMode {
    type Err = Error;

    /// `zeroth`, `first`, `sampling`, `scaled(f)` (zeroth scaled by `f`),
    /// or `<base>:scaled(f)`.
    fn from_str(s: &str) -> Result<Self> {
        let (base_str, scale_str) = match s.split_once(':') {
            Some((b, rest)) => (b, Some(rest)),
            None if s.starts_with("scaled(") => ("zeroth", Some(s)),
            None => (s, None),
        };
        let base = match base_str {
            "zeroth" => Prescription::Zeroth,
            "first" => Prescription::First,
            "sampling" => Prescription::Sampling,
            other => return Err(Error::Precondition(format!("unknown mode '{other}'"))),
        };
        let factor = match scale_str {
            None => 1.0,
            Some(t) => t
                .strip_prefix("scaled(")
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| Error::Precondition(format!("bad scaling '{t}', expected scaled(<factor>)")))?,
        };
        if !(factor > 0.0 && factor <= 1.0) {
            return Err(Error::Precondition(format!("scale factor {factor} not in (0, 1]")));
        }
        Ok(Self { base, factor })
    }
}

impl fmt::Display for ParamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.base {
            Prescription::Zeroth => "zeroth",
            Prescription::First => "first",
            Prescription::Sampling => "sampling",
        };
        if self.factor == 1.0 {
            write!(f, "{base}")
        } else {
            write!(f, "{base}:scaled({})", self.factor)
        }
    }
}

/// `(alpha, beta)` for `n` variables and `m` clauses; `m <= 10 n` is required.
pub fn default_params(n: usize, m: usize, mode: ParamMode) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Precondition("n must be positive".into()));
    }
    if m > 10 * n {
        return Err(Error::Precondition(format!(
            "prescriptions assume m <= 10n, got m={m}, n={n}"
        )));
    }
    let nf = n as f64;
    let (alpha, beta) = match mode.base {
        Prescription::Zeroth => (2.0 * (nf + 1.0), 64800.0 * nf * (13.0 * nf * (10.0 * nf).sqrt()).ln()),
        Prescription::First => (4.0 * nf, 129600.0 * nf * nf * (102.0 * nf * nf * 5f64.sqrt()).ln()),
        Prescription::Sampling => (2.0 * (nf + 1.0), 32400.0 * nf * (13.0 * nf * (5.0 * nf).sqrt()).ln()),
    };
    Ok((alpha * mode.factor, beta * mode.factor))
}

/// `theta(C, alpha, beta)` with its provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedInstance {
    pub theta: ParamVector,
    pub alpha: f64,
    pub beta: f64,
    /// `64 m alpha + 2 beta`.
    pub bound: f64,
    pub formula: CnfFormula,
    /// Constant term of `-alpha H_C - beta G`, absorbed into the normalizer.
    pub dropped_constant: f64,
}

/// Serialized form: the polynomial of `theta` plus the construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedJson {
    pub alpha: f64,
    pub beta: f64,
    #[serde(rename = "B")]
    pub bound: f64,
    pub m: usize,
    pub n: usize,
    pub dropped_constant: f64,
    pub theta: PolyJson,
}

impl EncodedInstance {
    pub fn to_json(&self) -> EncodedJson {
        EncodedJson {
            alpha: self.alpha,
            beta: self.beta,
            bound: self.bound,
            m: self.formula.m(),
            n: self.formula.n(),
            dropped_constant: self.dropped_constant,
            theta: self.theta.theta_poly().to_json(ENCODED_DEGREE),
        }
    }

    /// `F_C = alpha H_C + beta G`, constant included.
    pub fn energy(&self) -> PolyCoeffs {
        formula_poly(&self.formula)
            .scaled(self.alpha)
            .add(&hypercube_poly(self.formula.n).scaled(self.beta))
    }
}

/// Coefficients of `-alpha H_C - beta G` on all monomials of degree `1..=7`.
pub fn encode(f: &CnfFormula, alpha: f64, beta: f64) -> Result<EncodedInstance> {
    if !(alpha >= 0.0 && beta >= 0.0 && alpha.is_finite() && beta.is_finite()) || alpha + beta == 0.0 {
        return Err(Error::Precondition(format!(
            "alpha, beta must be nonnegative, finite and not both zero (got {alpha}, {beta})"
        )));
    }
    let n = f.n;
    let basis = Arc::new(enumerate_basis(n, ENCODED_DEGREE)?);
    let neg = formula_poly(f).scaled(-alpha).add(&hypercube_poly(n).scaled(-beta));
    let mut theta = vec![0.0; basis.len()];
    for (idx, c) in neg.terms() {
        if idx.is_constant() {
            continue;
        }
        let k = basis.index_of(idx).ok_or_else(|| Error::DegreeOverflow {
            degree: idx.total(),
            max: ENCODED_DEGREE,
        })?;
        theta[k] = c;
    }
    let bound = 64.0 * f.m() as f64 * alpha + 2.0 * beta;
    let theta = ParamVector::new(basis, theta, bound.max(1.0))?;
    Ok(EncodedInstance {
        theta,
        alpha,
        beta,
        bound,
        formula: f.clone(),
        dropped_constant: neg.constant_term(),
    })
}

/// Integer value of a polynomial with integer coefficients at a `+-1` vertex.
fn eval_at_vertex(p: &PolyCoeffs, v: &[i8]) -> Result<i64> {
    let mut total: i64 = 0;
    for (idx, c) in p.terms() {
        if c != c.round() || c.abs() > 2f64.powi(52) {
            return Err(Error::Precondition(format!("coefficient {c} is not an integer")));
        }
        let sign = idx
            .degrees()
            .iter()
            .zip(v)
            .fold(1i64, |s, (&e, &x)| if e % 2 == 1 && x < 0 { -s } else { s });
        total += sign * c as i64;
    }
    Ok(total)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootsReport {
    pub n: usize,
    pub m: usize,
    pub vertices: u64,
    pub satisfying: u64,
    /// Vertices where `F = 0` and the formula is false, or `F > 0` and it is true.
    pub mismatches: u64,
    /// Smallest `F` over the random non-vertex points.
    pub min_off_vertex: f64,
    pub checks: Vec<Check>,
}

impl RootsReport {
    pub fn all_hold(&self) -> bool {
        crate::report::all_hold(&self.checks)
    }
}

/// Exhaustive check that `F_C = alpha H_C + beta G` vanishes on a vertex exactly when
/// the vertex satisfies `C` (integer arithmetic on `H_C` and `G`), plus `F > 0` at
/// random points off the hypercube.
pub fn verify_roots<R: Rng>(inst: &EncodedInstance, off_vertex: usize, rng: &mut R) -> Result<RootsReport> {
    let f = &inst.formula;
    let n = f.n;
    if n > MAX_SCAN_VARS {
        return Err(Error::Precondition(format!(
            "exhaustive scan limited to n <= {MAX_SCAN_VARS}"
        )));
    }
    let clause_polys: Vec<PolyCoeffs> = f.clauses.iter().map(|c| clause_poly(c, n)).collect();
    let g = hypercube_poly(n);
    let (alpha, beta) = (inst.alpha, inst.beta);
    let counts: Vec<Result<(u64, u64)>> = (0..1u64 << n)
        .into_par_iter()
        .map(|k| {
            let v = vertex(n, k);
            let mut h = 0i64;
            for cp in &clause_polys {
                h += eval_at_vertex(cp, &v)?;
            }
            let gv = eval_at_vertex(&g, &v)?;
            // alpha, beta > 0 and H, G >= 0, so F(v) = 0 iff both integers vanish
            let zero = (alpha == 0.0 || h == 0) && (beta == 0.0 || gv == 0) && h >= 0 && gv >= 0;
            let sat = f.satisfied_by(&v);
            Ok((u64::from(sat), u64::from(zero != sat)))
        })
        .collect();
    let mut satisfying = 0;
    let mut mismatches = 0;
    for c in counts {
        let (s, mm) = c?;
        satisfying += s;
        mismatches += mm;
    }
    let energy = inst.energy();
    let mut min_off = f64::INFINITY;
    for _ in 0..off_vertex {
        let x: Vec<f64> = (0..n)
            .map(|_| loop {
                let t: f64 = rng.random_range(-2.0..2.0);
                if t.abs() != 1.0 {
                    break t;
                }
            })
            .collect();
        min_off = min_off.min(energy.eval(&x));
    }
    let checks = vec![
        Check::with("vertex_roots_match_satisfying", mismatches as f64, 0.0, mismatches == 0),
        Check::with("positive_off_vertex", min_off, 0.0, off_vertex == 0 || min_off > 0.0),
    ];
    Ok(RootsReport {
        n,
        m: f.m(),
        vertices: 1 << n,
        satisfying,
        mismatches,
        min_off_vertex: min_off,
        checks,
    })
}

/// A uniformly random 3-CNF with `m` clauses on `n >= 3` variables.
pub fn random_formula<R: Rng>(n: usize, m: usize, rng: &mut R) -> CnfFormula {
    assert!(n >= 3, "3-CNF needs three distinct variables");
    let clauses = (0..m)
        .map(|_| {
            let mut vars = [0i32; 3];
            let mut k = 0;
            while k < 3 {
                let v = rng.random_range(1..=n as i32);
                if !vars[..k].contains(&v) {
                    vars[k] = v;
                    k += 1;
                }
            }
            vars.map(|v| if rng.random_bool(0.5) { v } else { -v })
        })
        .collect();
    CnfFormula { n, clauses }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn single() -> CnfFormula {
        parse_dimacs("p cnf 3 1\n1 2 -3 0\n").unwrap()
    }

    #[test]
    fn dimacs_parsing() {
        let f = single();
        assert_eq!(f.n(), 3);
        assert_eq!(f.clauses(), &[[1, 2, -3]]);
        let f = parse_dimacs("c hello\np cnf 4 2\n1 -2\n 3 0 -4 2 1 0\n").unwrap();
        assert_eq!(f.clauses(), &[[1, -2, 3], [-4, 2, 1]]);
        for bad in [
            "p cnf 3 1\n1 1 2 0\n",
            "p cnf 2 1\n1 -2 0\n",
            "p cnf 3 1\n1 2 4 0\n",
            "1 2 3 0\n",
            "p cnf 3 2\n1 2 3 0\n",
            "p cnf 3 1\n1 2 3\n",
            "p cnf 3 1\n1 2 x 0\n",
        ] {
            assert!(matches!(parse_dimacs(bad), Err(Error::Dimacs { .. })), "{bad:?}");
        }
        assert_eq!(parse_dimacs(&f.to_dimacs()).unwrap(), f);
    }

    #[test]
    fn clause_expansion() {
        let h = clause_poly(&[1, 2, -3], 3);
        let expect = |v: &[f64]| (v[0] - 1.0).powi(2) * (v[1] - 1.0).powi(2) * (v[2] + 1.0).powi(2);
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for _ in 0..50 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            assert!((h.eval(&x) - expect(&x)).abs() < 1e-12 * expect(&x).max(1.0));
            assert!(h.eval(&x) >= 0.0);
        }
        assert_eq!(h.coefficient(&MultiIndex::new(vec![2, 2, 2])), 1.0);
        assert_eq!(h.coefficient(&MultiIndex::new(vec![1, 0, 0])), -2.0);
        assert_eq!(h.degree(), 6);
        assert!(h.terms().all(|(_, c)| c.abs() <= 64.0));
        assert_eq!(h.len(), 27);
    }

    #[test]
    fn hypercube_polynomial() {
        let g = hypercube_poly(2);
        assert_eq!(g.eval(&[1.0, -1.0]), 0.0);
        assert_eq!(g.eval(&[0.0, 0.0]), 2.0);
        assert!(g.terms().all(|(_, c)| c.abs() <= 2.0));
    }

    #[test]
    fn prescribed_parameters() {
        let m = |b| ParamMode { base: b, factor: 1.0 };
        let (a, b) = default_params(2, 1, m(Prescription::Zeroth)).unwrap();
        assert_eq!(a, 6.0);
        assert!((b - 64800.0 * 2.0 * (26.0 * 20f64.sqrt()).ln()).abs() < 1e-9 * b);
        let (a, b) = default_params(2, 1, m(Prescription::Sampling)).unwrap();
        assert_eq!(a, 6.0);
        assert!((b - 32400.0 * 2.0 * (26.0 * 10f64.sqrt()).ln()).abs() < 1e-9 * b);
        let (a, _) = default_params(3, 1, m(Prescription::First)).unwrap();
        assert_eq!(a, 12.0);
        let scaled: ParamMode = "scaled(0.001)".parse().unwrap();
        let (sa, sb) = default_params(2, 1, scaled).unwrap();
        let (za, zb) = default_params(2, 1, m(Prescription::Zeroth)).unwrap();
        assert!((sa - 0.001 * za).abs() < 1e-15 && (sb - 0.001 * zb).abs() < 1e-9);
        assert_eq!(
            "first:scaled(0.5)".parse::<ParamMode>().unwrap().to_string(),
            "first:scaled(0.5)"
        );
        assert!("median".parse::<ParamMode>().is_err());
        assert!("scaled(2)".parse::<ParamMode>().is_err());
        assert!(default_params(3, 31, m(Prescription::Zeroth)).is_err());
    }

    #[test]
    fn encoding_coefficients() {
        let inst = encode(&single(), 1.0, 0.0).unwrap();
        let idx = |d: Vec<u8>| inst.theta.basis().index_of(&MultiIndex::new(d)).unwrap();
        assert_eq!(inst.theta.theta()[idx(vec![2, 2, 2])], -1.0);
        assert_eq!(inst.theta.theta()[idx(vec![1, 0, 0])], 2.0);
        assert_eq!(inst.bound, 64.0);
        assert_eq!(inst.dropped_constant, -1.0);

        let inst = encode(&single(), 1e-9, 1.0).unwrap();
        for i in 0..3 {
            let sq = idx(MultiIndex::power(3, i, 2).degrees().to_vec());
            let qu = idx(MultiIndex::power(3, i, 4).degrees().to_vec());
            assert!((inst.theta.theta()[sq] - 2.0).abs() < 1e-8);
            assert!((inst.theta.theta()[qu] + 1.0).abs() < 1e-8);
        }
        assert!(encode(&single(), -1.0, 1.0).is_err());
    }

    #[test]
    fn encoded_density_matches_construction() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        for _ in 0..5 {
            let f = random_formula(4, 6, &mut rng);
            let (alpha, beta) = (rng.random_range(0.5..3.0), rng.random_range(0.5..3.0));
            let inst = encode(&f, alpha, beta).unwrap();
            assert!(crate::expfam::sup_norm(inst.theta.theta()) <= inst.bound);
            let energy = inst.energy();
            let mut diffs = Vec::new();
            for _ in 0..100 {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let log_h: f64 = -x.iter().map(|v| v.powi(8)).sum::<f64>();
                let lhs = crate::expfam::log_unnormalized_density(&inst.theta, &x).unwrap();
                diffs.push(lhs - (log_h - energy.eval(&x)));
            }
            let lo = diffs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert!(hi - lo <= 1e-8, "spread {}", hi - lo);
            assert!((lo + inst.dropped_constant).abs() < 1e-8);
        }
    }

    #[test]
    fn roots_are_exactly_the_satisfying_vertices() {
        let inst = encode(&single(), 2.0, 3.0).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let rep = verify_roots(&inst, 1000, &mut rng).unwrap();
        assert!(rep.all_hold(), "{rep:?}");
        assert_eq!(rep.satisfying, 7);
        // a falsifying vertex has H = 2^2 2^2 2^2
        let v = vertex(3, 0b001); // (-1, -1, 1)
        assert!(!single().satisfied_by(&v));
        assert_eq!(eval_at_vertex(&clause_poly(&[1, 2, -3], 3), &v).unwrap(), 64);
        let x = [0.5, 0.0, 0.0];
        assert!(inst.energy().eval(&x) >= 3.0 * hypercube_poly(3).eval(&x));
        for seed in 0..5 {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let f = random_formula(8, 40, &mut rng);
            let inst = encode(&f, 1.0, 1.0).unwrap();
            assert!(verify_roots(&inst, 100, &mut rng).unwrap().all_hold());
        }
    }

    #[test]
    fn negation_maps_solutions() {
        let f = single();
        let sols = f.satisfying_assignments().unwrap();
        let neg: Vec<Vec<i8>> = f.negated().satisfying_assignments().unwrap();
        assert_eq!(sols.len(), neg.len());
        for v in &sols {
            let w: Vec<i8> = v.iter().map(|x| -x).collect();
            assert!(neg.contains(&w));
        }
    }
}
