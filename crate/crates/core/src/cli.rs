//! The `um-skeleton` command line: `gen`, `skeleton`, `nearly`, `verify`.
//!
//! Exit status is 0 when every check passes, 1 when a check fails (the first
//! failing check is named on stderr) and 2 on bad input.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::instances::{generate, GridMetric, InstanceKind, InstanceSpec, MeasureSpec};
use crate::io::{digest, parse_space, write_space, RunOutputs, RunParameters, RunReport, TreeDocument, TreeKind};
use crate::metric::{FiniteMetricSpace, PointMeasure};
use crate::nearly::{
    build_nearly_um_skeleton, default_max_level, doubling_profile, rescale_to_half, schedule_from_epsilon,
};
use crate::report::CheckReport;
use crate::skeleton::{build_skeleton, distortion, dyadic_radii, frostman_fit};
use crate::verify::{leaf_entries, nu_entries, verify_document, verify_nearly_tree, verify_skeleton_tree};

#[derive(Debug, Parser)]
#[command(name = "um-skeleton", version, about = "Ultrametric skeletons of finite metric-measure spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a test instance as a space file.
    Gen(GenArgs),
    /// Build a fixed-t skeleton and verify it.
    Skeleton(SkeletonArgs),
    /// Build a scale-scheduled skeleton and verify it.
    Nearly(NearlyArgs),
    /// Re-verify a stored tree against its input.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    Cantor,
    Grid,
    RandomDoubling,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    #[default]
    Structured,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Instance family (omit when using --spec).
    #[arg(required_unless_present = "spec")]
    pub kind: Option<GenKind>,
    /// JSON instance spec instead of flags.
    #[arg(long, conflicts_with = "kind")]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub level: u32,
    /// Contraction ratio, as a decimal or `1/q`.
    #[arg(long, value_parser = parse_ratio)]
    pub ratio: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub dim: u32,
    #[arg(long, default_value_t = 16)]
    pub side: usize,
    /// Use the max metric on grids instead of the Euclidean one.
    #[arg(long)]
    pub max_metric: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub depth: u32,
    #[arg(long, default_value_t = 3)]
    pub branching: usize,
    /// Apply `d -> d^theta` to the generated instance.
    #[arg(long)]
    pub snowflake: Option<f64>,
    /// Cantor only: mass of the left branch at every level.
    #[arg(long)]
    pub self_similar: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Where to write the run report (default: standard output).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Structured)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SkeletonArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub t: usize,
    /// Where to write the tree document.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct NearlyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.9)]
    pub beta: f64,
    /// Finest scheduled level (default: one past the smallest distance).
    #[arg(long)]
    pub max_level: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub tree: PathBuf,
    /// Where to write the report (default: standard output).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Structured)]
    pub format: Format,
}

fn parse_ratio(s: &str) -> std::result::Result<f64, String> {
    let value = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| format!("bad numerator in {s:?}"))?;
            let b: f64 = b.trim().parse().map_err(|_| format!("bad denominator in {s:?}"))?;
            a / b
        }
        None => s.trim().parse().map_err(|_| format!("bad ratio {s:?}"))?,
    };
    if value.is_finite() {
        Ok(value)
    } else {
        Err(format!("bad ratio {s:?}"))
    }
}

/// What a command produced: text for stdout and the verdict.
#[derive(Debug)]
pub struct Outcome {
    pub stdout: String,
    pub failed_check: Option<String>,
}

fn emit(text: String, path: Option<&Path>) -> Result<String> {
    match path {
        Some(p) => {
            std::fs::write(p, text)?;
            Ok(String::new())
        }
        None => Ok(text),
    }
}

fn render(report: &RunReport, format: Format) -> Result<String> {
    match format {
        Format::Structured => report.to_json(),
        Format::Text => Ok(report.to_text()),
    }
}

fn load_input(path: &Path) -> Result<(Vec<u8>, FiniteMetricSpace, PointMeasure)> {
    let bytes = std::fs::read(path)?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::Parse { line: 0, field: 0, message: "input is not UTF-8".into() })?;
    let (space, mu) = parse_space(&text)?;
    let mu = mu.unwrap_or_else(|| PointMeasure::uniform(space.len()));
    Ok((bytes, space, mu))
}

fn finish(command: &str, input: &[u8], parameters: RunParameters, outputs: RunOutputs, checks: &CheckReport, started: Instant) -> RunReport {
    RunReport {
        command: command.into(),
        input_digest: digest(input),
        parameters,
        outputs,
        checks: checks.canonical(),
        all_pass: checks.all_pass(),
        timing_ms: started.elapsed().as_secs_f64() * 1e3,
    }
}

fn verdict(checks: &CheckReport) -> Option<String> {
    checks.first_failure().map(|c| c.name.clone())
}

pub fn instance_from_args(args: &GenArgs) -> Result<InstanceSpec> {
    if let Some(path) = &args.spec {
        return Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?);
    }
    let kind = match args.kind.expect("clap enforces kind or spec") {
        GenKind::Cantor => InstanceKind::Cantor {
            level: args.level,
            ratio: args.ratio.unwrap_or(1.0 / 3.0),
        },
        GenKind::Grid => InstanceKind::Grid {
            dim: args.dim,
            side: args.side,
            metric: if args.max_metric { GridMetric::Max } else { GridMetric::Euclidean },
        },
        GenKind::RandomDoubling => InstanceKind::RandomDoubling {
            seed: args.seed,
            depth: args.depth,
            branching: args.branching,
            dim: args.dim.max(1) as usize,
            ratio: args.ratio.unwrap_or(0.25),
        },
    };
    let mut spec = InstanceSpec::new(kind);
    if let Some(a) = args.self_similar {
        spec = spec.with_measure(MeasureSpec::SelfSimilar { branch: [a, 1.0 - a] });
    }
    if let Some(theta) = args.snowflake {
        spec = InstanceSpec::snowflake(theta, spec);
    }
    Ok(spec)
}

pub fn cmd_gen(args: &GenArgs) -> Result<Outcome> {
    let spec = instance_from_args(args)?;
    let (space, mu) = generate(&spec)?;
    let text = format!("# instance: {}\n{}", serde_json::to_string(&spec)?, write_space(&space, Some(&mu)));
    Ok(Outcome {
        stdout: emit(text, args.out.as_deref())?,
        failed_check: None,
    })
}

pub fn cmd_skeleton(args: &SkeletonArgs) -> Result<Outcome> {
    let started = Instant::now();
    let (input, space, mu) = load_input(&args.input)?;
    let tree = build_skeleton(&space, &mu, args.t)?;
    let v = verify_skeleton_tree(&space, &mu, &tree)?;
    let frostman = match (space.min_positive_distance(), space.max_distance()) {
        (Some(lo), hi) => frostman_fit(&space, &v.nu, &dyadic_radii(lo, hi)).ok().map(|f| f.exponent),
        _ => None,
    };
    let doc = TreeDocument {
        kind: TreeKind::Skeleton,
        input_digest: digest(&input),
        t: Some(args.t),
        epsilon: None,
        beta: None,
        alpha: None,
        schedule: None,
        leaf_table: leaf_entries(&tree),
        nu: nu_entries(&tree, &v.nu),
        tree,
    };
    if let Some(out) = &args.out {
        std::fs::write(out, doc.to_json()?)?;
    }
    let skeleton = doc.tree.skeleton_points();
    let outputs = RunOutputs {
        n_points: space.len(),
        skeleton_size: skeleton.len(),
        distortion: v.distortion,
        mass_retained: mu.mass(&skeleton),
        lambda_hat: Some(v.lambda_hat.count),
        frostman_exponent: frostman,
        ..RunOutputs::default()
    };
    let parameters = RunParameters {
        t: Some(args.t),
        ..RunParameters::default()
    };
    let report = finish("skeleton", &input, parameters, outputs, &v.report, started);
    Ok(Outcome {
        stdout: emit(render(&report, args.report.format)?, args.report.report.as_deref())?,
        failed_check: verdict(&v.report),
    })
}

pub fn cmd_nearly(args: &NearlyArgs) -> Result<Outcome> {
    let started = Instant::now();
    let (input, space, mu) = load_input(&args.input)?;
    let (scaled, alpha) = rescale_to_half(&space)?;
    let max_level = args.max_level.unwrap_or_else(|| default_max_level(&scaled));
    let schedule = schedule_from_epsilon(&doubling_profile(&scaled, max_level), args.epsilon)?;
    let tree = build_nearly_um_skeleton(&scaled, &mu, &schedule)?;
    let v = verify_nearly_tree(&scaled, &mu, &tree, &schedule, args.beta)?;
    let doc = TreeDocument {
        kind: TreeKind::Nearly,
        input_digest: digest(&input),
        t: None,
        epsilon: Some(args.epsilon),
        beta: Some(args.beta),
        alpha: Some(alpha),
        leaf_table: leaf_entries(&tree),
        nu: nu_entries(&tree, &v.nu),
        schedule: Some(schedule.clone()),
        tree,
    };
    if let Some(out) = &args.out {
        std::fs::write(out, doc.to_json()?)?;
    }
    let outputs = RunOutputs {
        n_points: space.len(),
        skeleton_size: doc.tree.skeleton_points().len(),
        distortion: distortion(&scaled, &doc.tree).ok(),
        mass_retained: v.retention.mass_retained,
        alpha: Some(alpha),
        nearly_lipschitz_constant: v.scalewise.nearly_lipschitz_constant,
        ..RunOutputs::default()
    };
    let parameters = RunParameters {
        epsilon: Some(args.epsilon),
        beta: Some(args.beta),
        schedule: Some(schedule.t_of.clone()),
        ..RunParameters::default()
    };
    let report = finish("nearly", &input, parameters, outputs, &v.report, started);
    Ok(Outcome {
        stdout: emit(render(&report, args.report.format)?, args.report.report.as_deref())?,
        failed_check: verdict(&v.report),
    })
}

pub fn cmd_verify(args: &VerifyArgs) -> Result<Outcome> {
    let started = Instant::now();
    let (input, space, mu) = load_input(&args.input)?;
    let doc = TreeDocument::from_json(&std::fs::read_to_string(&args.tree)?)?;
    let checks = verify_document(&space, &mu, &input, &doc)?;
    let skeleton = doc.tree.skeleton_points();
    let outputs = RunOutputs {
        n_points: space.len(),
        skeleton_size: skeleton.len(),
        distortion: match (checks.all_pass(), doc.kind) {
            (false, _) => None,
            (true, TreeKind::Skeleton) => distortion(&space, &doc.tree).ok(),
            (true, TreeKind::Nearly) => distortion(&rescale_to_half(&space)?.0, &doc.tree).ok(),
        },
        mass_retained: mu.mass(&skeleton),
        alpha: doc.alpha,
        ..RunOutputs::default()
    };
    let parameters = RunParameters {
        t: doc.t,
        epsilon: doc.epsilon,
        beta: doc.beta,
        schedule: doc.schedule.as_ref().map(|s| s.t_of.clone()),
    };
    let report = finish("verify", &input, parameters, outputs, &checks, started);
    Ok(Outcome {
        stdout: emit(render(&report, args.format)?, args.out.as_deref())?,
        failed_check: verdict(&checks),
    })
}

pub fn execute(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Skeleton(a) => cmd_skeleton(a),
        Command::Nearly(a) => cmd_nearly(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

/// Parses `args` (including the program name) and runs the command,
/// returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return 2;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    match execute(&cli) {
        Ok(outcome) => {
            let _ = stdout.write_all(outcome.stdout.as_bytes());
            match outcome.failed_check {
                None => 0,
                Some(name) => {
                    let _ = writeln!(stderr, "check failed: {name}");
                    1
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            2
        }
    }
}
