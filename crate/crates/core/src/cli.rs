//! Batch front-end: JSON configs in, JSON reports, CSV traces and JSONL paths out.
//!
//! ```text
//! cadlag-kit <verb> --config run.json [--out DIR] [--seed N] [--threads N] [--tolerance-scale X]
//! ```
//!
//! Verbs: `check-consistency`, `check-regularity`, `simulate`, `verify-fdd`,
//! `reconstruct`, `hitting` and `validate`. Exit status is 0 on pass, 1 on
//! fail, 2 on inconclusive and 3 on a usage or input error.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::cadlag::{default_jump_budget, reconstruct_from_dense, CadlagPath, DenseSampleTable};
use crate::error::{Error, Result};
use crate::fdd::{rate_matrix_diagnostics, FddFamily, RateMatrix, Truncation, STRUCTURE_TOL};
use crate::grid::{dense_countable_subset, dyadic_grid, dyadic_refinement, State, TimeDomain, TimeGrid};
use crate::regularity::{check_consistency, check_regularity, RegularityParams};
use crate::report::{overall, CheckReport, Trace, Verdict, Witness};
use crate::sampling::{empirical_fdd, hitting_probability, sample_paths, tv_distance, JUMP_TIME_PRECISION};
use crate::time::Time;

pub const EXIT_USAGE: i32 = 3;

/// A family as written in a config file, tagged by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FamilySpec {
    Poisson { rate: f64 },
    Ctmc { initial: Vec<f64>, generator: Vec<Vec<f64>> },
    Iid { marginal: Vec<f64> },
    Perturbed { base: Box<FamilySpec>, epsilon: f64, defect_time: Time },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub field: String,
    pub message: String,
}

impl Diagnostic {
    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic { field: field.into(), message: message.into() }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn distribution_diagnostics(field: &str, p: &[f64], out: &mut Vec<Diagnostic>) {
    if p.is_empty() {
        out.push(Diagnostic::new(field, "must not be empty"));
        return;
    }
    if let Some(i) = p.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
        out.push(Diagnostic::new(format!("{field}[{i}]"), "must be finite and nonnegative"));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STRUCTURE_TOL {
        out.push(Diagnostic::new(field, format!("sums to {sum}, not 1")));
    }
}

impl FamilySpec {
    pub fn diagnostics(&self, prefix: &str) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let f = |name: &str| format!("{prefix}.{name}");
        match self {
            FamilySpec::Poisson { rate } => {
                if !(rate.is_finite() && *rate >= 0.0) {
                    out.push(Diagnostic::new(f("rate"), format!("{rate} must be finite and nonnegative")));
                }
            }
            FamilySpec::Ctmc { initial, generator } => {
                distribution_diagnostics(&f("initial"), initial, &mut out);
                let n = generator.len();
                if n == 0 || generator.iter().any(|row| row.len() != n) {
                    out.push(Diagnostic::new(f("generator"), "must be a nonempty square matrix"));
                } else {
                    let m = nalgebra::DMatrix::from_fn(n, n, |i, j| generator[i][j]);
                    for (row, msg) in rate_matrix_diagnostics(&m) {
                        out.push(Diagnostic::new(format!("{}[{row}]", f("generator")), msg));
                    }
                    if !initial.is_empty() && initial.len() != n {
                        out.push(Diagnostic::new(f("initial"), format!("has {} entries for {n} states", initial.len())));
                    }
                }
            }
            FamilySpec::Iid { marginal } => distribution_diagnostics(&f("marginal"), marginal, &mut out),
            FamilySpec::Perturbed { base, epsilon, defect_time } => {
                out.extend(base.diagnostics(&f("base")));
                if !(*epsilon > 0.0 && *epsilon <= 1.0) {
                    out.push(Diagnostic::new(f("epsilon"), format!("{epsilon} must lie in (0, 1]")));
                }
                if *defect_time < Time::ZERO {
                    out.push(Diagnostic::new(f("defect_time"), "must be nonnegative"));
                }
            }
        }
        if out.is_empty() {
            if let Err(e) = self.build() {
                out.push(Diagnostic::new(prefix, e.to_string()));
            }
        }
        out
    }

    pub fn build(&self) -> Result<FddFamily> {
        match self {
            FamilySpec::Poisson { rate } => FddFamily::poisson(*rate),
            FamilySpec::Ctmc { initial, generator } => FddFamily::ctmc(initial.clone(), RateMatrix::from_rows(generator)?),
            FamilySpec::Iid { marginal } => FddFamily::iid(marginal.clone()),
            FamilySpec::Perturbed { base, epsilon, defect_time } => {
                FddFamily::perturbed(base.build()?, *epsilon, *defect_time)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    CheckConsistency,
    CheckRegularity,
    Simulate,
    VerifyFdd,
    Reconstruct,
    Hitting,
}

impl Operation {
    pub fn name(self) -> &'static str {
        match self {
            Operation::CheckConsistency => "check-consistency",
            Operation::CheckRegularity => "check-regularity",
            Operation::Simulate => "simulate",
            Operation::VerifyFdd => "verify-fdd",
            Operation::Reconstruct => "reconstruct",
            Operation::Hitting => "hitting",
        }
    }
}

/// Grids to check: every window at every depth, plus explicit grids.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub windows: Vec<(Time, Time)>,
    pub depths: Vec<u32>,
    pub grids: Vec<TimeGrid>,
}

impl CorpusSpec {
    pub fn is_empty(&self) -> bool {
        self.grids.is_empty() && (self.windows.is_empty() || self.depths.is_empty())
    }

    pub fn build(&self, domain: &TimeDomain) -> Result<Vec<TimeGrid>> {
        let mut out: Vec<TimeGrid> = Vec::new();
        for &window in &self.windows {
            for &d in &self.depths {
                let g = dyadic_grid(domain, window, d)?;
                if !out.contains(&g) {
                    out.push(g);
                }
            }
        }
        for g in &self.grids {
            if !out.contains(g) {
                out.push(g.clone());
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSpec {
    pub paths: usize,
    pub horizon: Time,
}

impl Default for SimulationSpec {
    fn default() -> Self {
        SimulationSpec { paths: 1000, horizon: Time::from_int(1) }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HittingSpec {
    pub state: State,
    pub horizon: Time,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReconstructSpec {
    /// JSONL file of paths, e.g. the output of `simulate`.
    pub paths_file: PathBuf,
    #[serde(default = "default_reconstruct_depth")]
    pub depth: u32,
    /// Allowed changes per unit window; derived from the family when absent.
    #[serde(default)]
    pub budget: Option<usize>,
}

fn default_reconstruct_depth() -> u32 {
    10
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub operation: Option<Operation>,
    pub family: Option<FamilySpec>,
    pub family_file: Option<PathBuf>,
    pub params: RegularityParams,
    pub corpus: CorpusSpec,
    /// Probe times for R1 and the rate probes.
    pub times: Vec<Time>,
    pub seed: u64,
    pub simulation: SimulationSpec,
    pub hitting: Option<HittingSpec>,
    pub reconstruct: Option<ReconstructSpec>,
    /// Statistical tolerance for `verify-fdd` and `hitting`.
    pub tolerance: Option<f64>,
    pub output: Option<PathBuf>,
}

/// Command-line overrides.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub tolerance_scale: Option<f64>,
}

fn config_err(field: &str, message: impl Into<String>) -> Error {
    Error::Config { field: field.to_string(), message: message.into() }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    fn resolve(base: &Path, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    }

    fn family_spec(&self, base: &Path) -> Result<Option<FamilySpec>> {
        match (&self.family, &self.family_file) {
            (Some(_), Some(_)) => Err(config_err("family_file", "give either family or family_file, not both")),
            (Some(spec), None) => Ok(Some(spec.clone())),
            (None, Some(file)) => {
                let text = fs::read_to_string(Self::resolve(base, file))
                    .map_err(|e| config_err("family_file", format!("{}: {e}", file.display())))?;
                Ok(Some(serde_json::from_str(&text).map_err(|e| config_err("family_file", e.to_string()))?))
            }
            (None, None) => Ok(None),
        }
    }

    /// Every violated invariant, for operation `op` when one is given.
    pub fn diagnostics(&self, base: &Path, op: Option<Operation>) -> Vec<Diagnostic> {
        let mut out = Vec::new();
        let op = op.or(self.operation);
        match self.family_spec(base) {
            Ok(Some(spec)) => out.extend(spec.diagnostics("family")),
            Ok(None) if op != Some(Operation::Reconstruct) => out.push(Diagnostic::new("family", "is required")),
            Ok(None) => {}
            Err(Error::Config { field, message }) => out.push(Diagnostic::new(field, message)),
            Err(e) => out.push(Diagnostic::new("family", e.to_string())),
        }
        for (field, msg) in self.params.diagnostics() {
            out.push(Diagnostic::new(format!("params.{field}"), msg));
        }
        for (i, (lo, hi)) in self.corpus.windows.iter().enumerate() {
            if lo > hi {
                out.push(Diagnostic::new(format!("corpus.windows[{i}]"), "is reversed"));
            }
        }
        if self.simulation.paths == 0 {
            out.push(Diagnostic::new("simulation.paths", "must be at least 1"));
        }
        if self.simulation.horizon <= Time::ZERO {
            out.push(Diagnostic::new("simulation.horizon", "must be positive"));
        }
        if let Some(tol) = self.tolerance {
            if !(tol > 0.0) {
                out.push(Diagnostic::new("tolerance", "must be positive"));
            }
        }
        if let Some(h) = &self.hitting {
            if h.horizon <= Time::ZERO {
                out.push(Diagnostic::new("hitting.horizon", "must be positive"));
            }
        } else if op == Some(Operation::Hitting) {
            out.push(Diagnostic::new("hitting", "is required for the hitting operation"));
        }
        if let Some(r) = &self.reconstruct {
            if !Self::resolve(base, &r.paths_file).is_file() {
                out.push(Diagnostic::new("reconstruct.paths_file", format!("{} does not exist", r.paths_file.display())));
            }
        } else if op == Some(Operation::Reconstruct) {
            out.push(Diagnostic::new("reconstruct", "is required for the reconstruct operation"));
        }
        out
    }
}

/// One line of a path file: `{anchor, horizon, jumps: [[t, state], ...]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathRecord {
    pub anchor: State,
    pub horizon: Time,
    pub jumps: Vec<(Time, State)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<TimeDomain>,
}

impl PathRecord {
    pub fn from_path(path: &CadlagPath) -> Self {
        let domain = (path.domain() != &TimeDomain::nonnegative_reals()).then(|| path.domain().clone());
        PathRecord { anchor: path.anchor(), horizon: path.horizon(), jumps: path.jumps().to_vec(), domain }
    }

    pub fn to_path(&self) -> Result<CadlagPath> {
        let domain = self.domain.clone().unwrap_or_else(TimeDomain::nonnegative_reals);
        CadlagPath::new(domain, self.anchor, self.jumps.clone(), Some(self.horizon))
    }
}

pub fn write_paths_jsonl(file: &Path, paths: &[CadlagPath]) -> Result<()> {
    let mut w = std::io::BufWriter::new(fs::File::create(file)?);
    for p in paths {
        serde_json::to_writer(&mut w, &PathRecord::from_path(p))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_paths_jsonl(file: &Path) -> Result<Vec<CadlagPath>> {
    let reader = BufReader::new(fs::File::open(file)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: PathRecord =
            serde_json::from_str(&line).map_err(|e| config_err("paths_file", format!("line {}: {e}", i + 1)))?;
        out.push(record.to_path()?);
    }
    Ok(out)
}

pub fn write_trace_csv(file: &Path, trace: &Trace) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(file)?;
    w.write_record(&trace.columns)?;
    for row in &trace.rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct ReportFile<'a> {
    operation: &'a str,
    verdict: Verdict,
    reports: &'a [CheckReport],
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub verdict: Verdict,
    pub reports: Vec<CheckReport>,
    pub out_dir: PathBuf,
}

fn require_family(family: &Option<FddFamily>) -> Result<&FddFamily> {
    family.as_ref().ok_or_else(|| config_err("family", "is required"))
}

fn default_times(family: &FddFamily, params: &RegularityParams) -> Result<Vec<Time>> {
    let n = Time::from_int(params.window as i64);
    let set = family.domain().restricted().clip(-n, n).ok_or(Error::EmptyWindow)?;
    dense_countable_subset(&TimeDomain::new(set), 2)
}

fn statistical_tolerance(config: &RunConfig, scale: f64, fallback: f64) -> f64 {
    config.tolerance.unwrap_or(fallback) * scale
}

/// Runs `op` and writes `report.json` plus traces and path files under the output directory.
pub fn run(op: Operation, config: &RunConfig, base: &Path, overrides: &Overrides) -> Result<RunOutcome> {
    if let Some(declared) = config.operation {
        if declared != op {
            return Err(config_err("operation", format!("config declares {}, command is {}", declared.name(), op.name())));
        }
    }
    if let Some(d) = config.diagnostics(base, Some(op)).into_iter().next() {
        return Err(config_err(&d.field, d.message));
    }
    let scale = overrides.tolerance_scale.unwrap_or(1.0);
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(config_err("tolerance-scale", "must be positive"));
    }
    let mut params = config.params.clone();
    params.scale_tolerances(scale);
    let seed = overrides.seed.unwrap_or(config.seed);
    let out_dir = overrides
        .out
        .clone()
        .or_else(|| config.output.as_ref().map(|p| RunConfig::resolve(base, p)))
        .unwrap_or_else(|| PathBuf::from("out"));
    fs::create_dir_all(&out_dir)?;
    let family = config.family_spec(base)?.map(|s| s.build()).transpose()?;
    log::info!("running {} with seed {seed}", op.name());

    let truncation = Truncation::first(params.truncation);
    let reports = match op {
        Operation::CheckConsistency => {
            let family = require_family(&family)?;
            let corpus = if config.corpus.is_empty() {
                dyadic_refinement(family.domain(), (Time::ZERO, Time::from_int(1)), 2)?
            } else {
                config.corpus.build(family.domain())?
            };
            vec![check_consistency(family, &corpus, truncation, params.eps_consistency)?]
        }
        Operation::CheckRegularity => {
            let family = require_family(&family)?;
            let times = if config.times.is_empty() { default_times(family, &params)? } else { config.times.clone() };
            let n = Time::from_int(params.window as i64);
            let corpus = if config.corpus.is_empty() {
                dyadic_refinement(family.domain(), (-n, n), params.depth.min(12))?
            } else {
                config.corpus.build(family.domain())?
            };
            check_regularity(family, &times, &params, &corpus)?
        }
        Operation::Simulate => {
            let family = require_family(&family)?;
            let sim = &config.simulation;
            let paths = sample_paths(family, sim.horizon, seed, sim.paths)?;
            write_paths_jsonl(&out_dir.join("paths.jsonl"), &paths)?;
            let mut report = CheckReport::new("simulate");
            let mut trace = Trace::new("jump_counts", &["path", "jumps"]);
            for (i, p) in paths.iter().enumerate() {
                trace.push(vec![i as f64, p.jumps().len() as f64]);
            }
            let mean = paths.iter().map(|p| p.jumps().len() as f64).sum::<f64>() / paths.len() as f64;
            report
                .estimate("paths", paths.len() as f64, 0.0)
                .estimate("mean_jumps", mean, 0.0)
                .tolerance("seed", seed as f64)
                .note(format!("family: {}", family.describe()))
                .trace(trace);
            vec![report]
        }
        Operation::VerifyFdd => {
            let family = require_family(&family)?;
            let corpus = if config.corpus.is_empty() {
                vec![TimeGrid::from_decimals(&[0.0, 0.5, 1.0])?]
            } else {
                config.corpus.build(family.domain())?
            };
            let horizon = corpus.iter().map(TimeGrid::last).max().unwrap_or(Time::ZERO).max(config.simulation.horizon);
            let n = config.simulation.paths;
            let paths = sample_paths(family, horizon, seed, n)?;
            let mut report = CheckReport::new("verify_fdd");
            let mut trace = Trace::new("tv_distance", &["grid", "points", "support", "tv", "tolerance"]);
            let mut witness = None;
            for (i, u) in corpus.iter().enumerate() {
                let emp = empirical_fdd(&paths, u)?;
                let tv = tv_distance(&emp, family, u, truncation)?;
                let mut support = 0usize;
                family.for_each_atom(u, truncation, |_, _| support += 1)?;
                let tol = statistical_tolerance(config, scale, 3.0 * (support as f64 / n as f64).sqrt());
                trace.push(vec![i as f64, u.len() as f64, support as f64, tv, tol]);
                report.estimate(&format!("tv_grid{i}"), tv, tol);
                if tv > tol && witness.is_none() {
                    witness = Some(Witness::new(format!("total variation {tv} exceeds {tol}")).grid(u).gap(tv));
                }
            }
            report.tolerance("paths", n as f64).tolerance("seed", seed as f64).trace(trace);
            if let Some(w) = witness {
                report.fail(w);
            }
            vec![report]
        }
        Operation::Reconstruct => {
            let spec = config.reconstruct.as_ref().ok_or_else(|| config_err("reconstruct", "is required"))?;
            let paths = read_paths_jsonl(&RunConfig::resolve(base, &spec.paths_file))?;
            let budget = spec
                .budget
                .or_else(|| family.as_ref().and_then(FddFamily::rate_bound).map(default_jump_budget))
                .ok_or_else(|| config_err("reconstruct.budget", "needed when the family has no rate bound"))?;
            let mut report = CheckReport::new("reconstruct");
            let mut rebuilt = Vec::with_capacity(paths.len());
            let mut matched = 0usize;
            let mut max_bracket = 0.0f64;
            for (i, p) in paths.iter().enumerate() {
                let table = DenseSampleTable::refined_from_path(p, spec.depth, JUMP_TIME_PRECISION)?;
                let rec = reconstruct_from_dense(&table, budget)?;
                if rec.path.anchor() == p.anchor() && rec.path.jumps() == p.jumps() {
                    matched += 1;
                } else if report.witnesses.is_empty() {
                    report.fail(Witness::new(format!("path {i} differs from its reconstruction")));
                }
                for (lo, hi) in &rec.brackets {
                    max_bracket = max_bracket.max((*hi - *lo).to_f64());
                }
                rebuilt.push(rec.path);
            }
            write_paths_jsonl(&out_dir.join("reconstructed.jsonl"), &rebuilt)?;
            report
                .estimate("paths", paths.len() as f64, 0.0)
                .estimate("exact_matches", matched as f64, 0.0)
                .estimate("max_bracket_width", max_bracket, 0.0)
                .tolerance("depth", spec.depth as f64)
                .tolerance("budget_per_unit_window", budget as f64);
            vec![report]
        }
        Operation::Hitting => {
            let family = require_family(&family)?;
            let spec = config.hitting.as_ref().ok_or_else(|| config_err("hitting", "is required"))?;
            let n = config.simulation.paths;
            let est = hitting_probability(family, spec.state, spec.horizon, seed, n)?;
            let mut report = CheckReport::new("hitting");
            report.estimate("monte_carlo", est.estimate, 0.0).estimate("hits", est.hits as f64, 0.0);
            match est.exact {
                Some(p) => {
                    let tol = statistical_tolerance(config, scale, 4.0 * (p * (1.0 - p) / n as f64).sqrt()).max(1e-12);
                    report.estimate("exact", p, tol).estimate("abs_error", (est.estimate - p).abs(), tol);
                    if (est.estimate - p).abs() > tol {
                        report.fail(
                            Witness::new(format!("estimate {} misses the exact value {p}", est.estimate))
                                .time(spec.horizon)
                                .gap((est.estimate - p).abs()),
                        );
                    }
                }
                None => {
                    report.inconclusive("no closed form for this family; only the estimate is reported");
                }
            }
            vec![report]
        }
    };

    let verdict = overall(&reports);
    write_outputs(&out_dir, op, verdict, &reports)?;
    Ok(RunOutcome { verdict, reports, out_dir })
}

fn write_outputs(out_dir: &Path, op: Operation, verdict: Verdict, reports: &[CheckReport]) -> Result<()> {
    let mut json = serde_json::to_string_pretty(&ReportFile { operation: op.name(), verdict, reports })?;
    json.push('\n');
    fs::write(out_dir.join("report.json"), json)?;
    for (i, report) in reports.iter().enumerate() {
        for trace in &report.traces {
            write_trace_csv(&out_dir.join(format!("{i:02}_{}_{}.csv", report.check, trace.name)), trace)?;
        }
    }
    Ok(())
}

#[derive(Debug, Parser)]
#[command(name = "cadlag-kit", version, about = "Consistency, regularity and path checks for fdd families")]
pub struct Cli {
    #[command(subcommand)]
    pub verb: Verb,
}

#[derive(Debug, Subcommand)]
pub enum Verb {
    CheckConsistency(RunArgs),
    CheckRegularity(RunArgs),
    Simulate(RunArgs),
    VerifyFdd(RunArgs),
    Reconstruct(RunArgs),
    Hitting(RunArgs),
    /// Parse and cross-check a config without running it.
    Validate(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub tolerance_scale: Option<f64>,
}

pub fn init_logging() {
    let env = env_logger::Env::new().filter("CADLAG_KIT_LOG");
    let _ = env_logger::Builder::from_env(env).try_init();
}

fn validate(args: &RunArgs) -> i32 {
    let config = match RunConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let base = args.config.parent().unwrap_or(Path::new("."));
    let diagnostics = config.diagnostics(base, None);
    for d in &diagnostics {
        println!("{d}");
    }
    if diagnostics.is_empty() {
        0
    } else {
        EXIT_USAGE
    }
}

/// Parses `args` (including the program name) and runs; returns the exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let (op, args) = match &cli.verb {
        Verb::CheckConsistency(a) => (Operation::CheckConsistency, a),
        Verb::CheckRegularity(a) => (Operation::CheckRegularity, a),
        Verb::Simulate(a) => (Operation::Simulate, a),
        Verb::VerifyFdd(a) => (Operation::VerifyFdd, a),
        Verb::Reconstruct(a) => (Operation::Reconstruct, a),
        Verb::Hitting(a) => (Operation::Hitting, a),
        Verb::Validate(a) => return validate(a),
    };
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = args.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let overrides = Overrides { out: args.out.clone(), seed: args.seed, tolerance_scale: args.tolerance_scale };
    let base = args.config.parent().unwrap_or(Path::new(".")).to_path_buf();
    let outcome = pool.install(|| RunConfig::load(&args.config).and_then(|c| run(op, &c, &base, &overrides)));
    match outcome {
        Ok(o) => {
            println!("{}: {:?} ({})", op.name(), o.verdict, o.out_dir.join("report.json").display());
            o.verdict.exit_code()
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_USAGE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_specs_parse_and_build() {
        let spec: FamilySpec = serde_json::from_str(r#"{"kind":"poisson","rate":1.5}"#).unwrap();
        assert!(spec.diagnostics("family").is_empty());
        assert!(matches!(spec.build().unwrap().kind(), crate::fdd::FamilyKind::Poisson { .. }));
        let nested: FamilySpec = serde_json::from_str(
            r#"{"kind":"perturbed","epsilon":0.1,"defect_time":0.5,
                "base":{"kind":"ctmc","initial":[1,0],"generator":[[-1,1],[1,-1]]}}"#,
        )
        .unwrap();
        assert!(nested.build().is_ok());
    }

    #[test]
    fn diagnostics_name_fields() {
        let bad = FamilySpec::Poisson { rate: -1.0 };
        let d = bad.diagnostics("family");
        assert_eq!(d.len(), 1);
        assert!(d[0].field.ends_with("rate"));
        let skewed = FamilySpec::Ctmc { initial: vec![0.5, 0.5], generator: vec![vec![-1.0, 1.0], vec![1.0, -1.0 + 1e-6]] };
        let d = skewed.diagnostics("family");
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].field, "family.generator[1]");
    }

    #[test]
    fn config_requires_a_family() {
        let c = RunConfig::from_json("{}").unwrap();
        let d = c.diagnostics(Path::new("."), Some(Operation::CheckRegularity));
        assert_eq!(d[0].field, "family");
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn path_records_round_trip() {
        let p = CadlagPath::new(TimeDomain::nonnegative_reals(), 0, vec![(Time::dyadic(3, 4).unwrap(), 2)], Some(Time::from_int(1)))
            .unwrap();
        let json = serde_json::to_string(&PathRecord::from_path(&p)).unwrap();
        assert!(json.contains("\"dyadic\":[3,-4]"));
        let back: PathRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(back.to_path().unwrap(), p);
    }

    #[test]
    fn corpus_expands_windows_and_depths() {
        let spec = CorpusSpec {
            windows: vec![(Time::ZERO, Time::from_int(1))],
            depths: vec![0, 1, 1],
            grids: vec![TimeGrid::from_decimals(&[0.5]).unwrap()],
        };
        let grids = spec.build(&TimeDomain::nonnegative_reals()).unwrap();
        assert_eq!(grids.len(), 3);
        assert_eq!(grids[2], TimeGrid::singleton(Time::dyadic(1, 1).unwrap()));
    }
}
