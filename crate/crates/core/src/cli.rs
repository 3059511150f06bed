//! The `polyscore` command-line front end.
//!
//! Every command writes one report. JSON reports carry the command name, the
//! fully resolved configuration and the result; wall-clock fields are moved
//! into a top-level `timing` object so everything else is reproducible byte for
//! byte. Exit codes: 0 success, 1 I/O or input format, 2 usage, 3 numerical
//! failure or a failed check, 4 non-convergence.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::{Error, Result};
use crate::estimators::{
    convergence_study, fit_mle, fit_score_matching, Estimator, MleOptions, StudyOptions, MLE_MAX_ITER, MLE_TOL,
};
use crate::expfam::{
    check_1d_moment_bound, checked_log_partition, grid_for, moments, verify_int_concentration, GridSpec, ParamJson,
    ParamVector, Refinement, DEFAULT_POINTS_PER_PANEL, GRID_TOLERANCE, TAIL_MASS_TARGET,
};
use crate::fisher::{verify_bounds, VerifyOptions};
use crate::hardness::{
    default_params, encode, mean_sign_experiment, orthant_mass, parse_dimacs, verify_roots, zgap_experiment,
    CnfFormula, ParamMode, Prescription,
};
use crate::polybasis::{check_mon_l2_bound, enumerate_basis, multi_indices, to_legendre, PolyCoeffs};
use crate::report::{elapsed_s, Check};
use crate::sampler::{sample_exact_separable, sample_mala, McmcConfig, SampleSet};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "POLYSCORE_THREADS";

/// Failed checks share the numerical exit code.
const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Parser, Debug)]
#[command(
    name = "polyscore",
    version,
    about = "Score matching and MLE for polynomial exponential families"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// List the monomial basis of degree 1..=d in n variables.
    Basis(BasisArgs),
    /// Fit theta by score matching or maximum likelihood.
    Fit(FitArgs),
    /// Encode a 3-CNF formula as a parameter vector.
    Encode(EncodeArgs),
    /// Run a verification suite.
    Verify(VerifyArgs),
    /// Error-versus-N study for the estimators.
    Study(StudyArgs),
    /// Draw samples from p_theta.
    Sample(SampleArgs),
    /// log Z and the mean of T by quadrature.
    Partition(PartitionArgs),
}

#[derive(Args, Debug, Clone, Serialize)]
struct FamilyArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<u32>,
    /// Box radius B of the parameter set.
    #[arg(long = "B")]
    #[serde(rename = "B")]
    bound: Option<f64>,
    /// Parameter file in the `{"n","d","B","terms"}` format.
    #[arg(long)]
    theta_file: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct GridArgs {
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    points_per_axis: Option<usize>,
    /// Comma-separated abscissae to refine the grid around.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    refine_near: Vec<f64>,
    /// Width of the refined panels; `min(1, 1/sqrt(beta))` when a beta is known, else 0.1.
    #[arg(long)]
    refine_width: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize)]
struct OutputArgs {
    #[arg(long, value_enum)]
    format: Option<Format>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum EstimatorArg {
    Sm,
    Mle,
    Both,
}

impl EstimatorArg {
    fn list(self) -> Vec<Estimator> {
        match self {
            EstimatorArg::Sm => vec![Estimator::Sm],
            EstimatorArg::Mle => vec![Estimator::Mle],
            EstimatorArg::Both => vec![Estimator::Sm, Estimator::Mle],
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Suite {
    Polybasis,
    Bounds,
    Integrals,
    Hardness,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Corrupt {
    Fisher,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Auto,
    Exact,
    Mala,
}

#[derive(Args, Debug, Serialize)]
struct BasisArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: u32,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct FitArgs {
    #[arg(long, value_enum)]
    estimator: EstimatorArg,
    /// Sample file in the v1 text format.
    #[arg(long)]
    samples: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = MLE_TOL)]
    tol: f64,
    #[arg(long, default_value_t = MLE_MAX_ITER)]
    max_iter: usize,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
struct HardnessParams {
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Prescription: zeroth, first, sampling, scaled(f) or <base>:scaled(f).
    #[arg(long, conflicts_with_all = ["alpha", "beta"])]
    mode: Option<String>,
}

#[derive(Args, Debug, Serialize)]
struct EncodeArgs {
    #[arg(long)]
    cnf: PathBuf,
    #[command(flatten)]
    #[serde(flatten)]
    params: HardnessParams,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = Suite::All)]
    suite: Suite,
    #[command(flatten)]
    #[serde(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long)]
    cnf: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    params: HardnessParams,
    /// Multiplier in (0, 1] applied to each experiment's default prescription.
    #[arg(long, conflicts_with_all = ["alpha", "beta", "mode"])]
    scale: Option<f64>,
    /// Random polynomials per (n, d) in the polybasis suite.
    #[arg(long, default_value_t = 100)]
    polys: usize,
    /// Random family members in the bounds suite (ignored with --theta-file).
    #[arg(long, default_value_t = 1)]
    members: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fault injection.
    #[arg(long, value_enum)]
    corrupt: Option<Corrupt>,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct StudyArgs {
    #[arg(long, value_enum, default_value_t = EstimatorArg::Both)]
    estimator: EstimatorArg,
    #[command(flatten)]
    #[serde(flatten)]
    family: FamilyArgs,
    /// True parameter file; an alias of --theta-file.
    #[arg(long, conflicts_with = "theta_file")]
    theta_star: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[arg(long = "Ns", value_delimiter = ',', required = true)]
    #[serde(rename = "Ns")]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

#[derive(Args, Debug, Serialize)]
struct SampleArgs {
    #[command(flatten)]
    #[serde(flatten)]
    family: FamilyArgs,
    /// Number of draws.
    #[arg(long)]
    count: usize,
    #[arg(long, value_enum, default_value_t = Method::Auto)]
    method: Method,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PartitionArgs {
    #[command(flatten)]
    #[serde(flatten)]
    family: FamilyArgs,
    #[command(flatten)]
    #[serde(flatten)]
    grid: GridArgs,
    #[command(flatten)]
    #[serde(flatten)]
    output: OutputArgs,
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match thread_pool() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match pool.install(|| dispatch(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let k: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&k| k > 0)
            .ok_or_else(|| Error::Precondition(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
        b = b.num_threads(k);
    }
    b.build().map_err(|e| Error::Precondition(format!("thread pool: {e}")))
}

fn dispatch(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Basis(a) => cmd_basis(&a),
        Command::Fit(a) => cmd_fit(&a),
        Command::Encode(a) => cmd_encode(&a),
        Command::Verify(a) => cmd_verify(&a),
        Command::Study(a) => cmd_study(&a),
        Command::Sample(a) => cmd_sample(&a),
        Command::Partition(a) => cmd_partition(&a),
    }
}

// ---- output plumbing ----

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes())?;
            stdout.flush()?;
        }
    }
    Ok(())
}

fn require_format(given: Option<Format>, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = given.unwrap_or(default);
    if allowed.contains(&f) {
        Ok(f)
    } else {
        Err(Error::Precondition(
            format!("format {f:?} is not available for this command").to_lowercase(),
        ))
    }
}

/// Removes every `timing` and `wall_time_s` entry from `v`, recording it in
/// `sink` under its JSON path.
fn split_timing(v: &mut Value, path: &str, sink: &mut Map<String, Value>) {
    match v {
        Value::Object(map) => {
            for key in ["timing", "wall_time_s"] {
                if let Some(t) = map.shift_remove(key) {
                    let name = if path.is_empty() {
                        key.to_string()
                    } else {
                        format!("{path}.{key}")
                    };
                    sink.insert(name, t);
                }
            }
            for (k, child) in map.iter_mut() {
                let p = if path.is_empty() {
                    k.clone()
                } else {
                    format!("{path}.{k}")
                };
                split_timing(child, &p, sink);
            }
        }
        Value::Array(items) => {
            for (i, child) in items.iter_mut().enumerate() {
                split_timing(child, &format!("{path}[{i}]"), sink);
            }
        }
        _ => {}
    }
}

/// `{"command", "config", ...result fields, "timing"}` as pretty JSON.
fn envelope(command: &str, config: Value, result: &impl Serialize, start: Instant) -> Result<String> {
    let mut result = serde_json::to_value(result)?;
    let mut timing = Map::new();
    split_timing(&mut result, "", &mut timing);
    timing.insert("total_s".into(), json!(elapsed_s(start)));
    let mut top = Map::new();
    top.insert("command".into(), json!(command));
    top.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    top.insert("config".into(), config);
    match result {
        Value::Object(fields) => top.extend(fields),
        other => {
            top.insert("result".into(), other);
        }
    }
    top.insert("timing".into(), Value::Object(timing));
    let mut s = serde_json::to_string_pretty(&Value::Object(top))?;
    s.push('\n');
    Ok(s)
}

/// Parsed flags plus the values the command resolved on its own.
fn config_of(args: &impl Serialize, resolved: Value) -> Result<Value> {
    let mut cfg = serde_json::to_value(args)?;
    if let (Value::Object(map), Value::Object(extra)) = (&mut cfg, resolved) {
        map.insert("resolved".into(), Value::Object(extra));
    }
    Ok(cfg)
}

fn grid_defaults() -> Value {
    json!({
        "points_per_panel": DEFAULT_POINTS_PER_PANEL,
        "grid_tolerance": GRID_TOLERANCE,
        "tail_mass_target": TAIL_MASS_TARGET,
    })
}

// ---- argument resolution ----

fn load_param_file(path: &Path) -> Result<ParamJson> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// The family from `--theta-file`, or `(n, d)` flags with `theta` from `fill`.
fn resolve_family(
    f: &FamilyArgs,
    theta_file: Option<&Path>,
    fill: impl FnOnce(usize, f64) -> Vec<f64>,
) -> Result<ParamVector> {
    if let Some(path) = theta_file.or(f.theta_file.as_deref()) {
        let mut json = load_param_file(path)?;
        if let Some(n) = f.n.filter(|&n| n != json.n) {
            return Err(Error::DimensionMismatch {
                expected: json.n,
                got: n,
            });
        }
        if let Some(d) = f.d.filter(|&d| d != json.d) {
            return Err(Error::InvalidFamily(format!(
                "--d {d} disagrees with the parameter file (d={})",
                json.d
            )));
        }
        if f.bound.is_some() {
            json.bound = f.bound;
        }
        return ParamVector::from_json(&json);
    }
    let (n, d) = match (f.n, f.d) {
        (Some(n), Some(d)) => (n, d),
        _ => return Err(Error::Precondition("need --theta-file or both --n and --d".into())),
    };
    let basis = Arc::new(enumerate_basis(n, d)?);
    let bound = f.bound.unwrap_or(1.0);
    let theta = fill(basis.len(), bound);
    ParamVector::new(basis, theta, bound)
}

fn grid_spec(g: &GridArgs, beta: Option<f64>) -> GridSpec {
    let refine = if g.refine_near.is_empty() {
        None
    } else {
        let mut r = Refinement::for_beta(g.refine_near.clone(), beta.unwrap_or(100.0));
        if let Some(w) = g.refine_width {
            r.width = w;
        }
        Some(r)
    };
    GridSpec {
        radius: g.radius,
        points_per_axis: g.points_per_axis,
        refine,
    }
}

fn load_cnf(path: &Path) -> Result<CnfFormula> {
    parse_dimacs(&std::fs::read_to_string(path)?)
}

/// `(alpha, beta, description)` from explicit values, a mode string, or `fallback`.
fn hardness_params(p: &HardnessParams, f: &CnfFormula, fallback: ParamMode) -> Result<(f64, f64, String)> {
    match (p.alpha, p.beta, &p.mode) {
        (Some(a), Some(b), None) => Ok((a, b, "explicit".into())),
        (None, None, Some(m)) => {
            let mode: ParamMode = m.parse()?;
            let (a, b) = default_params(f.n(), f.m(), mode)?;
            Ok((a, b, mode.to_string()))
        }
        (None, None, None) => {
            let (a, b) = default_params(f.n(), f.m(), fallback)?;
            Ok((a, b, fallback.to_string()))
        }
        _ => Err(Error::Precondition("give both --alpha and --beta, or --mode".into())),
    }
}

// ---- commands ----

fn cmd_basis(a: &BasisArgs) -> Result<i32> {
    let start = Instant::now();
    let fmt = require_format(a.output.format, Format::Text, &[Format::Text, Format::Json])?;
    let basis = enumerate_basis(a.n, a.d)?;
    let text = match fmt {
        Format::Text => {
            let mut s = String::new();
            for idx in basis.indices() {
                s.push_str(&format!("{}\t{idx}\n", idx.key()));
            }
            s.push_str(&format!("M={}\n", basis.family_size()));
            s
        }
        _ => {
            let indices: Vec<&[u8]> = basis.indices().iter().map(|i| i.degrees()).collect();
            let result = json!({"n": a.n, "d": a.d, "M": basis.family_size(), "indices": indices});
            envelope("basis", config_of(a, json!({}))?, &result, start)?
        }
    };
    write_output(a.output.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_fit(a: &FitArgs) -> Result<i32> {
    let start = Instant::now();
    require_format(a.output.format, Format::Json, &[Format::Json])?;
    let samples = SampleSet::load(&a.samples)?;
    if let Some(n) = a.family.n.filter(|&n| n != samples.n()) {
        return Err(Error::DimensionMismatch {
            expected: samples.n(),
            got: n,
        });
    }
    let init = match &a.family.theta_file {
        Some(path) => Some(ParamVector::from_json(&load_param_file(path)?)?),
        None => None,
    };
    let d = match (a.family.d, &init) {
        (Some(d), _) => d,
        (None, Some(p)) => p.d(),
        (None, None) => return Err(Error::Precondition("fit needs --d (or --theta-file)".into())),
    };
    let basis = Arc::new(enumerate_basis(samples.n(), d)?);
    if let Some(p) = &init {
        if p.basis().indices() != basis.indices() {
            return Err(Error::InvalidFamily(
                "initial parameter file does not match (n, d)".into(),
            ));
        }
    }
    let opts = MleOptions {
        tol: a.tol,
        max_iter: a.max_iter,
        grid: grid_spec(&a.grid, None),
        init: init.map(|p| p.theta().to_vec()),
    };
    let (report, resolved) = match a.estimator {
        EstimatorArg::Sm => (fit_score_matching(&samples, &basis)?, json!({"d": d, "n": samples.n()})),
        EstimatorArg::Mle => (
            fit_mle(&samples, &basis, &opts)?,
            json!({"d": d, "n": samples.n(), "mle": &opts, "grid_defaults": grid_defaults()}),
        ),
        EstimatorArg::Both => return Err(Error::Precondition("fit takes --estimator sm or mle".into())),
    };
    let text = envelope("fit", config_of(a, resolved)?, &report, start)?;
    write_output(a.output.out.as_deref(), &text)?;
    Ok(0)
}

fn cmd_encode(a: &EncodeArgs) -> Result<i32> {
    let start = Instant::now();
    require_format(a.output.format, Format::Json, &[Format::Json])?;
    let f = load_cnf(&a.cnf)?;
    if a.params.alpha.is_none() && a.params.beta.is_none() && a.params.mode.is_none() {
        return Err(Error::Precondition("encode needs --alpha and --beta, or --mode".into()));
    }
    let (alpha, beta, how) = hardness_params(&a.params, &f, ParamMode::from_base(Prescription::Zeroth))?;
    let inst = encode(&f, alpha, beta)?;
    let resolved = json!({"alpha": alpha, "beta": beta, "params": how});
    let text = envelope("encode", config_of(a, resolved)?, &inst.to_json(), start)?;
    write_output(a.output.out.as_deref(), &text)?;
    Ok(0)
}

#[derive(Serialize)]
struct Section {
    name: String,
    all_hold: bool,
    detail: Value,
}

impl Section {
    fn new(name: impl Into<String>, all_hold: bool, detail: impl Serialize) -> Result<Self> {
        Ok(Self {
            name: name.into(),
            all_hold,
            detail: serde_json::to_value(detail)?,
        })
    }
}

#[derive(Serialize)]
struct VerifyReport {
    all_hold: bool,
    sections: Vec<Section>,
    notes: Vec<String>,
}

fn random_poly(rng: &mut ChaCha20Rng, n: usize, d: u32) -> Result<PolyCoeffs> {
    let terms = multi_indices(n, 0, d)
        .into_iter()
        .map(|idx| (idx, rng.random_range(-1.0..1.0)));
    PolyCoeffs::from_terms(n, terms)
}

/// Largest coefficient difference of `f` after a trip through the Legendre basis.
pub(crate) fn legendre_round_trip_error(f: &PolyCoeffs, d: u32) -> Result<f64> {
    let back = to_legendre(f, d)?.to_monomial();
    let diff = back.add(&f.scaled(-1.0));
    Ok(diff.terms().fold(0.0f64, |m, (_, c)| m.max(c.abs())))
}

fn suite_polybasis(a: &VerifyArgs, sections: &mut Vec<Section>) -> Result<()> {
    let pairs: Vec<(usize, u32)> = match (a.family.n, a.family.d) {
        (Some(n), Some(d)) => vec![(n, d)],
        (Some(n), None) => (1..=5).map(|d| (n, d)).collect(),
        (None, Some(d)) => (1..=3).map(|n| (n, d)).collect(),
        (None, None) => (1..=3).flat_map(|n| (1..=5).map(move |d| (n, d))).collect(),
    };
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    for (n, d) in pairs {
        let mut worst_ratio = 0.0f64;
        let mut worst_trip = 0.0f64;
        let mut failures = 0usize;
        for _ in 0..a.polys {
            let f = random_poly(&mut rng, n, d)?;
            let c = check_mon_l2_bound(&f, n, d)?;
            worst_ratio = worst_ratio.max(c.lhs / c.rhs);
            failures += usize::from(!c.holds);
            worst_trip = worst_trip.max(legendre_round_trip_error(&f, d)?);
        }
        let checks = vec![
            Check::le("mon_l2_worst_ratio", worst_ratio, 1.0),
            Check::with("mon_l2_failures", failures as f64, 0.0, failures == 0),
            Check::le("legendre_round_trip", worst_trip, 1e-9),
        ];
        let ok = crate::report::all_hold(&checks);
        sections.push(Section::new(
            format!("polybasis n={n} d={d}"),
            ok,
            json!({"polynomials": a.polys, "checks": checks}),
        )?);
    }
    Ok(())
}

fn suite_bounds(a: &VerifyArgs, sections: &mut Vec<Section>) -> Result<()> {
    let (n_def, d_def) = (a.family.n.unwrap_or(1), a.family.d.unwrap_or(3));
    let family = FamilyArgs {
        n: Some(n_def),
        d: Some(d_def),
        ..a.family.clone()
    };
    let members = if a.family.theta_file.is_some() {
        1
    } else {
        a.members.max(1)
    };
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    for k in 0..members {
        let p = resolve_family(&family, None, |m, b| (0..m).map(|_| rng.random_range(-b..=b)).collect())?;
        let grid = grid_for(&p, &grid_spec(&a.grid, None))?;
        let opts = VerifyOptions {
            seed: a.seed.wrapping_add(k as u64),
            corrupt_fisher: a.corrupt == Some(Corrupt::Fisher),
        };
        let rep = verify_bounds(&p, &grid, &opts)?;
        sections.push(Section::new(
            format!("bounds member {k}"),
            rep.all_hold(),
            json!({"theta": p.to_json(), "report": rep}),
        )?);
    }
    Ok(())
}

/// Three `(beta, r, m)` triples inside the lemma's preconditions.
pub(crate) fn integral_triples() -> Vec<(f64, f64, u32)> {
    [(0.03, 1u32, 1.0), (0.035, 2, 1.5), (0.02, 4, 1.2)]
        .into_iter()
        .map(|(r, m, slack)| {
            let need = 40.0 / (r * r) * (4.0 * f64::from(m) / r).ln();
            (need * slack, r, m)
        })
        .collect()
}

fn suite_integrals(sections: &mut Vec<Section>) -> Result<()> {
    for (beta, r, m) in integral_triples() {
        let rep = verify_int_concentration(beta, r, m)?;
        let ok = rep.concentration.holds && rep.explicit.holds;
        sections.push(Section::new(format!("int_concentration r={r} m={m}"), ok, rep)?);
    }
    for beta in [160.0 * 8f64.ln(), 1e4] {
        let checks = check_1d_moment_bound(beta)?;
        sections.push(Section::new(
            format!("1d_moment_bound beta={beta}"),
            crate::report::all_hold(&checks),
            checks,
        )?);
    }
    Ok(())
}

/// The unsatisfiable 8-clause CNF on three variables.
pub(crate) fn complete_cnf3() -> CnfFormula {
    let clauses = (0..8)
        .map(|k: i32| {
            let s = |b: i32, v: i32| if k >> b & 1 == 1 { -v } else { v };
            [s(2, 1), s(1, 2), s(0, 3)]
        })
        .collect();
    CnfFormula::new(3, clauses).expect("valid clauses")
}

fn suite_hardness(a: &VerifyArgs, sections: &mut Vec<Section>, notes: &mut Vec<String>) -> Result<()> {
    let Some(path) = &a.cnf else {
        return Err(Error::Precondition("the hardness suite needs --cnf".into()));
    };
    let f = load_cnf(path)?;
    let spec = grid_spec(&a.grid, None);
    let params = |base: Prescription| -> Result<(f64, f64, String)> {
        let mut fallback = ParamMode::from_base(base);
        if let Some(s) = a.scale {
            fallback.factor = s;
            if !(s > 0.0 && s <= 1.0) {
                return Err(Error::Precondition(format!("--scale {s} not in (0, 1]")));
            }
        }
        hardness_params(&a.params, &f, fallback)
    };

    let (alpha, beta, how) = params(Prescription::Zeroth)?;
    let inst = encode(&f, alpha, beta)?;
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    let roots = verify_roots(&inst, 100, &mut rng)?;
    let max_coef = inst.theta.theta().iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let coef = Check::le("coefficient_bound", max_coef, inst.bound);
    sections.push(Section::new(
        "roots",
        roots.all_hold() && coef.holds,
        json!({"alpha": alpha, "beta": beta, "params": how, "report": roots, "coefficient_bound": coef}),
    )?);

    if f.n() > 3 {
        notes.push(format!("n = {} > 3: quadrature experiments skipped", f.n()));
        return Ok(());
    }
    let solutions = f.satisfying_assignments()?;
    if solutions.len() == 1 {
        let (alpha, beta, how) = params(Prescription::First)?;
        let rep = mean_sign_experiment(&f, alpha, beta, &spec)?;
        let ok = rep.converged && rep.all_hold();
        sections.push(Section::new("mean_sign", ok, json!({"params": how, "report": rep}))?);
    } else {
        notes.push(format!(
            "{} satisfying assignments: mean-sign experiment skipped",
            solutions.len()
        ));
    }
    if solutions.is_empty() {
        notes.push("unsatisfiable formula: orthant and gap experiments skipped".into());
        return Ok(());
    }
    let (alpha, beta, how) = params(Prescription::Sampling)?;
    let rep = orthant_mass(&f, alpha, beta, &spec)?;
    let ok = rep.converged && rep.check.as_ref().is_some_and(|c| c.holds);
    sections.push(Section::new("orthant_mass", ok, json!({"params": how, "report": rep}))?);

    if f.n() == 3 {
        let unsat = complete_cnf3();
        let (alpha, beta, how) = params(Prescription::Zeroth)?;
        let rep = zgap_experiment(&f, &unsat, alpha, beta, &spec)?;
        let ok = rep.converged && rep.separated.holds;
        sections.push(Section::new(
            "zgap_vs_complete_cnf",
            ok,
            json!({"params": how, "report": rep}),
        )?);
    } else {
        notes.push("gap experiment needs n = 3 to pair with the complete CNF".into());
    }
    Ok(())
}

fn cmd_verify(a: &VerifyArgs) -> Result<i32> {
    let start = Instant::now();
    require_format(a.output.format, Format::Json, &[Format::Json])?;
    let mut sections = Vec::new();
    let mut notes = Vec::new();
    let run_all = a.suite == Suite::All;
    if run_all || a.suite == Suite::Polybasis {
        suite_polybasis(a, &mut sections)?;
    }
    if run_all || a.suite == Suite::Bounds {
        suite_bounds(a, &mut sections)?;
    }
    if run_all || a.suite == Suite::Integrals {
        suite_integrals(&mut sections)?;
    }
    if a.suite == Suite::Hardness || (run_all && a.cnf.is_some()) {
        suite_hardness(a, &mut sections, &mut notes)?;
    } else if run_all {
        notes.push("no --cnf given: hardness suite skipped".into());
    }
    let all_hold = sections.iter().all(|s| s.all_hold);
    let report = VerifyReport {
        all_hold,
        sections,
        notes,
    };
    let text = envelope(
        "verify",
        config_of(a, json!({"grid_defaults": grid_defaults()}))?,
        &report,
        start,
    )?;
    write_output(a.output.out.as_deref(), &text)?;
    Ok(if all_hold { 0 } else { EXIT_CHECK_FAILED })
}

fn cmd_study(a: &StudyArgs) -> Result<i32> {
    let start = Instant::now();
    let fmt = require_format(a.output.format, Format::Csv, &[Format::Csv, Format::Json])?;
    let theta_star = resolve_family(&a.family, a.theta_star.as_deref(), |m, _| vec![0.0; m])?;
    let opts = StudyOptions {
        sizes: a.sizes.clone(),
        trials: a.trials,
        estimators: a.estimator.list(),
        seed: a.seed,
        mle: MleOptions {
            grid: grid_spec(&a.grid, None),
            ..MleOptions::default()
        },
        mcmc: McmcConfig::default(),
    };
    let table = convergence_study(&theta_star, &opts)?;
    let resolved = json!({"theta_star": theta_star.to_json(), "study": &opts, "grid_defaults": grid_defaults()});
    let config = config_of(a, resolved)?;
    match fmt {
        Format::Json => {
            let text = envelope("study", config, &table, start)?;
            write_output(a.output.out.as_deref(), &text)?;
        }
        _ => {
            let summary = json!({
                "summaries": table.summaries,
                "sm_mle_ratio": table.sm_mle_ratio,
                "notes": table.notes,
            });
            let text = envelope("study", config, &summary, start)?;
            write_output(a.output.out.as_deref(), &table.to_csv())?;
            // the summary goes to stdout unless stdout already carries the table
            if a.output.out.is_some() {
                write_output(None, &text)?;
            } else {
                eprint!("{text}");
            }
        }
    }
    Ok(0)
}

fn cmd_sample(a: &SampleArgs) -> Result<i32> {
    let start = Instant::now();
    let p = resolve_family(&a.family, None, |m, _| vec![0.0; m])?;
    let separable = p.first_coupling().is_none();
    let s = match (a.method, separable) {
        (Method::Exact, _) | (Method::Auto, true) => sample_exact_separable(&p, a.count, a.seed)?,
        (Method::Mala, _) | (Method::Auto, false) => sample_mala(&p, a.count, &McmcConfig::default(), a.seed)?,
    };
    write_output(a.out.as_deref(), &s.to_text())?;
    let resolved = json!({"theta": p.to_json(), "provenance": s.provenance()});
    let text = envelope("sample", config_of(a, resolved)?, &json!({"samples": s.len()}), start)?;
    // stdout may hold the samples themselves, so the report goes to stderr
    eprint!("{text}");
    Ok(0)
}

fn cmd_partition(a: &PartitionArgs) -> Result<i32> {
    let start = Instant::now();
    require_format(a.output.format, Format::Json, &[Format::Json])?;
    let p = resolve_family(&a.family, None, |m, _| vec![0.0; m])?;
    let grid = grid_for(&p, &grid_spec(&a.grid, None))?;
    let gate = checked_log_partition(&p, &grid)?;
    let mom = moments(&p, &grid)?;
    let result = json!({"log_partition": gate, "mean_t": mom.mean_t.as_slice()});
    let resolved = json!({"theta": p.to_json(), "grid_defaults": grid_defaults()});
    let text = envelope("partition", config_of(a, resolved)?, &result, start)?;
    write_output(a.output.out.as_deref(), &text)?;
    Ok(if gate.converged { 0 } else { EXIT_CHECK_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timing_fields_are_split_out() {
        let mut v = json!({"a": 1, "timing": {"wall_time_s": 2.0}, "rows": [{"x": 1, "wall_time_s": 3.0}]});
        let mut sink = Map::new();
        split_timing(&mut v, "", &mut sink);
        assert_eq!(v, json!({"a": 1, "rows": [{"x": 1}]}));
        assert_eq!(sink.get("timing"), Some(&json!({"wall_time_s": 2.0})));
        assert_eq!(sink.get("rows[0].wall_time_s"), Some(&json!(3.0)));
    }

    #[test]
    fn integral_triples_meet_preconditions() {
        for (beta, r, m) in integral_triples() {
            assert!(beta > 150.0 && r > 6.0 / beta && r < 0.04 && m > 0);
        }
    }

    #[test]
    fn complete_cnf_is_unsatisfiable() {
        let f = complete_cnf3();
        assert_eq!(f.m(), 8);
        assert!(f.satisfying_assignments().unwrap().is_empty());
    }

    #[test]
    fn round_trip_error_is_roundoff() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let f = random_poly(&mut rng, 2, 4).unwrap();
        assert!(legendre_round_trip_error(&f, 4).unwrap() < 1e-9);
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["polyscore", "basis", "--n", "2"]), 2);
        assert_eq!(run(["polyscore", "basis", "--n", "2", "--d", "3", "--bogus"]), 2);
        assert_eq!(run(["polyscore", "basis", "--n", "2", "--d", "2"]), 2);
        assert_eq!(run(["polyscore", "nope"]), 2);
    }
}
