//! Config-driven commands: `check`, `solve`, `audit` and `convergence`.
//!
//! Exit codes: 0 pass, 1 check failure (or an unsolved audit level), 2 error.
//! Errors are reported as JSON on stderr.

mod config;

pub use config::{load_config, parse_config, validate_levels, ConfigError, ConfigKind, JobConfig, DEFAULT_LEVELS};

use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

use crate::auditor::{
    format_f64, h1_seminorm, manufactured_convergence, refinement_study, sup_norms, AuditError, AuditReport,
    StudyOptions,
};
use crate::femgrid::{build_mesh, solve, DiscreteSolution, FemError};
use crate::hypocheck::full_report;
use crate::krylov::SolveStats;
use crate::sysmodel::ModelError;

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("convergence needs audit.exact in the config")]
    MissingExact,
    #[error("--levels: {0}")]
    Levels(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) | CliError::MissingExact | CliError::Levels(_) => "config",
            CliError::Model(_) => "model",
            CliError::Fem(_) => "fem",
            CliError::Audit(_) => "audit",
            CliError::Io { .. } => "io",
        }
    }

    /// `{"error": {"kind", "message", "path"}}`.
    pub fn to_json(&self) -> String {
        let path = match self {
            CliError::Config(e) => e.path().map(str::to_string),
            CliError::Io { path, .. } => Some(path.display().to_string()),
            _ => None,
        };
        let body = serde_json::json!({
            "error": { "kind": self.kind(), "message": self.to_string(), "path": path }
        });
        to_json_string(&body)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Solve,
    Audit,
    Convergence,
}

/// Pretty JSON with every float written as `{:.16e}` (17 significant
/// digits), so identical inputs give byte-identical reports.
pub struct FixedPrecision<'a>(PrettyFormatter<'a>);

impl Default for FixedPrecision<'_> {
    fn default() -> Self {
        Self(PrettyFormatter::new())
    }
}

impl Formatter for FixedPrecision<'_> {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        writer.write_all(format_f64(value).as_bytes())
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_array(writer)
    }

    fn end_array<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object(writer)
    }

    fn end_object<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + Write>(&mut self, writer: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.0.end_object_value(writer)
    }
}

/// Serializes with [`FixedPrecision`] and a trailing newline.
pub fn to_json_string<T: Serialize + ?Sized>(value: &T) -> String {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FixedPrecision::default());
    value.serialize(&mut ser).expect("report types serialize infallibly");
    buf.push(b'\n');
    String::from_utf8(buf).expect("serde_json emits UTF-8")
}

/// Summary written by `solve`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionSummary {
    pub name: Option<String>,
    pub n: usize,
    pub cells: Vec<usize>,
    pub nodes: usize,
    pub sup_interior: f64,
    pub sup_boundary: f64,
    pub argmax: Vec<f64>,
    pub h1_seminorm: f64,
    pub solver: SolveStats,
}

impl SolutionSummary {
    pub fn new(name: Option<String>, sol: &DiscreteSolution) -> Self {
        let sup = sup_norms(sol);
        Self {
            name,
            n: sol.n,
            cells: sol.mesh.cells().to_vec(),
            nodes: sol.mesh.node_count(),
            sup_interior: sup.sup_interior,
            sup_boundary: sup.sup_boundary,
            argmax: sup.argmax,
            h1_seminorm: h1_seminorm(sol),
            solver: sol.stats,
        }
    }
}

/// Nodal values with columns `x1..xm, y1..yn`.
pub fn nodal_csv(sol: &DiscreteSolution) -> String {
    let m = sol.mesh.dim();
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> =
        (1..=m).map(|k| format!("x{k}")).chain((1..=sol.n).map(|i| format!("y{i}"))).collect();
    w.write_record(&header).expect("in-memory write");
    for p in 0..sol.mesh.node_count() {
        let row: Vec<String> =
            sol.mesh.node(p).iter().copied().chain(sol.node_vector(p)).map(format_f64).collect();
        w.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub stdout: String,
    pub artifacts: Vec<PathBuf>,
}

fn write_artifact(dir: &Path, file: &str, contents: &str, out: &mut Vec<PathBuf>) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let path = dir.join(file);
    std::fs::write(&path, contents).map_err(|source| CliError::Io { path: path.clone(), source })?;
    out.push(path);
    Ok(())
}

fn study_options(job: &JobConfig) -> StudyOptions {
    StudyOptions { quad_order: job.quad_order, solver: job.solver }
}

fn study_outcome(report: &AuditReport, stem: &str, out_dir: &Path) -> Result<RunOutcome, CliError> {
    let mut artifacts = Vec::new();
    let json = to_json_string(report);
    write_artifact(out_dir, &format!("{stem}.json"), &json, &mut artifacts)?;
    write_artifact(out_dir, &format!("{stem}.csv"), &report.to_csv(), &mut artifacts)?;
    let exit_code = if report.all_solved() { EXIT_PASS } else { EXIT_CHECK_FAILED };
    Ok(RunOutcome { exit_code, stdout: json, artifacts })
}

/// Runs one command and writes its artifacts into `out_dir`.
pub fn run_command(cmd: Command, job: &JobConfig, out_dir: &Path) -> Result<RunOutcome, CliError> {
    match cmd {
        Command::Check => {
            let report = full_report(&job.spec, &job.checks);
            let json = to_json_string(&report);
            let mut artifacts = Vec::new();
            write_artifact(out_dir, "report.json", &json, &mut artifacts)?;
            let exit_code = if report.overall { EXIT_PASS } else { EXIT_CHECK_FAILED };
            Ok(RunOutcome { exit_code, stdout: json, artifacts })
        }
        Command::Solve => {
            let mesh = build_mesh(job.spec.domain(), &job.cells)?;
            let sol = solve(&job.spec, &mesh, job.quad_order, &job.solver)?;
            let json = to_json_string(&SolutionSummary::new(job.name.clone(), &sol));
            let mut artifacts = Vec::new();
            write_artifact(out_dir, "solution.json", &json, &mut artifacts)?;
            write_artifact(out_dir, "solution.csv", &nodal_csv(&sol), &mut artifacts)?;
            Ok(RunOutcome { exit_code: EXIT_PASS, stdout: json, artifacts })
        }
        Command::Audit => {
            let report = refinement_study(&job.spec, &job.levels, &study_options(job))?;
            study_outcome(&report, "audit", out_dir)
        }
        Command::Convergence => {
            let exact = job.exact.as_ref().ok_or(CliError::MissingExact)?;
            let report = manufactured_convergence(&job.spec, exact, &job.levels, &study_options(job))?;
            let mut outcome = study_outcome(&report, "convergence", out_dir)?;
            outcome.stdout = report.to_csv();
            Ok(outcome)
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "coupled-wmp", version, about = "Hypothesis checks and Galerkin audits for coupled elliptic systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Evaluate every hypothesis on the configured system
    Check(JobArgs),
    /// Solve once on the configured mesh
    Solve(JobArgs),
    /// Refinement study of the sup norm
    Audit(JobArgs),
    /// Manufactured-solution convergence rates
    Convergence(JobArgs),
}

#[derive(Debug, Clone, Args)]
pub struct JobArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "./out")]
    pub out: PathBuf,
    #[arg(long)]
    pub margin: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    /// Comma-separated cells per axis, e.g. 16,32,64
    #[arg(long, value_delimiter = ',')]
    pub levels: Option<Vec<usize>>,
}

impl CliCommand {
    fn split(&self) -> (Command, &JobArgs) {
        match self {
            CliCommand::Check(a) => (Command::Check, a),
            CliCommand::Solve(a) => (Command::Solve, a),
            CliCommand::Audit(a) => (Command::Audit, a),
            CliCommand::Convergence(a) => (Command::Convergence, a),
        }
    }
}

fn prepare(args: &JobArgs) -> Result<JobConfig, CliError> {
    let mut job = load_config(&args.config)?;
    if let Some(margin) = args.margin {
        job = job.with_margin(margin);
    }
    if let Some(nu) = args.nu {
        job = job.with_nu(nu)?;
    }
    if let Some(levels) = &args.levels {
        validate_levels(levels).map_err(CliError::Levels)?;
        job = job.with_levels(levels.clone());
    }
    Ok(job)
}

/// Parses `args` (program name first), runs, and returns the exit code.
pub fn run_cli<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{}", e.render());
                return EXIT_ERROR;
            }
            let _ = write!(stdout, "{}", e.render());
            return EXIT_PASS;
        }
    };
    let (cmd, args) = cli.command.split();
    match prepare(args).and_then(|job| run_command(cmd, &job, &args.out)) {
        Ok(outcome) => {
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            outcome.exit_code
        }
        Err(e) => {
            let _ = stderr.write_all(e.to_json().as_bytes());
            EXIT_ERROR
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_use_seventeen_digits() {
        let s = to_json_string(&serde_json::json!({"a": 0.75, "b": [1.0, -0.5], "c": 3}));
        assert!(s.contains("7.5000000000000000e-1"));
        assert!(s.contains("1.0000000000000000e0"));
        assert!(s.contains("-5.0000000000000000e-1"));
        assert!(s.contains("\"c\": 3"));
        let back: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"], 0.75);
    }

    #[test]
    fn non_finite_floats_become_null() {
        assert_eq!(to_json_string(&f64::NAN), "null\n");
    }

    #[test]
    fn check_and_audit_on_laplace() {
        let dir = tempfile::tempdir().unwrap();
        let job = parse_config(r#"{"kind": "isotropic", "n": 1, "m": 2, "a": [["1"]], "g": ["x1"]}"#)
            .unwrap()
            .with_levels(vec![4, 8]);
        let out = run_command(Command::Check, &job, dir.path()).unwrap();
        assert_eq!(out.exit_code, EXIT_PASS);
        assert!(dir.path().join("report.json").exists());
        let out = run_command(Command::Audit, &job, dir.path()).unwrap();
        assert_eq!(out.exit_code, EXIT_PASS);
        let csv = std::fs::read_to_string(dir.path().join("audit.csv")).unwrap();
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').nth(3), Some("1.0000000000000000e0"));
        }
        assert!(matches!(run_command(Command::Convergence, &job, dir.path()), Err(CliError::MissingExact)));
    }

    #[test]
    fn usage_errors_exit_two() {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        assert_eq!(run_cli(["coupled-wmp", "check"], &mut out, &mut err), EXIT_ERROR);
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = run_cli(["coupled-wmp", "check", "--config", "/nonexistent/job.json"], &mut out, &mut err);
        assert_eq!(code, EXIT_ERROR);
        let body: serde_json::Value = serde_json::from_slice(&err).unwrap();
        assert_eq!(body["error"]["kind"], "config");
    }
}
