//! The `fsep` command line.
//!
//! Exit codes: 0 on success, 1 on data or computation errors, 2 on usage
//! errors. JSON goes to standard output, human-readable messages to standard
//! error.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::bundle::{read_bundle, validate_bundle, Manifest, MANIFEST_FILE};
use crate::error::Error;
use crate::eval::{run_benchmark, score_bundle, BenchmarkOptions, ReferenceStats, ScoringContext};
use crate::score::{LabelSource, ScoreKind};
use crate::synth::{generate_suite, SyntheticConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DATA: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "fsep",
    version,
    about = "Estimate classifier error under distribution shift"
)]
pub struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = "FSEP_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute one score for one bundle.
    Score(ScoreArgs),
    /// Fit score-to-error regressions over a manifest.
    Fit(FitArgs),
    /// Generate a synthetic shift suite.
    Synth(SynthArgs),
    /// Write the per-bundle score table as CSV.
    Report(ReportArgs),
    /// Check a bundle directory.
    Validate(ValidateArgs),
}

fn parse_metric(s: &str) -> Result<ScoreKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_labels(s: &str) -> Result<LabelSource, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub bundle: PathBuf,
    #[arg(long, value_parser = parse_metric)]
    pub metric: ScoreKind,
    /// Labeled in-distribution bundle; required for atc, frechet and mmd.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_parser = parse_labels, default_value = "pseudo")]
    pub labels: LabelSource,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long = "metric", value_parser = parse_metric, required = true)]
    pub metrics: Vec<ScoreKind>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_labels, default_value = "pseudo")]
    pub labels: LabelSource,
    /// Also write the per-bundle table here.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, default_value_t = 64)]
    pub d: usize,
    #[arg(long = "train-n", default_value_t = 200)]
    pub train_n: usize,
    #[arg(long = "test-m", default_value_t = 2000)]
    pub test_m: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long = "mean-scale", default_value_t = 4.0)]
    pub mean_scale: f64,
    #[arg(long, default_value_t = 5)]
    pub families: usize,
    #[arg(long, default_value_t = 5)]
    pub severities: u32,
    #[arg(long, default_value_t = 0.6)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.4)]
    pub drift: f64,
    #[arg(long, default_value_t = 1.0)]
    pub imbalance: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SynthArgs {
    pub fn config(&self) -> SyntheticConfig {
        SyntheticConfig {
            k: self.k,
            d: self.d,
            train_per_class: self.train_n,
            test_m: self.test_m,
            sigma: self.sigma,
            mean_scale: self.mean_scale,
            families: self.families,
            severities: self.severities,
            noise_scale: self.noise,
            drift_scale: self.drift,
            imbalance: self.imbalance,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated or repeated metric names.
    #[arg(long, value_parser = parse_metric, value_delimiter = ',', required = true)]
    pub metrics: Vec<ScoreKind>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_parser = parse_labels, default_value = "pseudo")]
    pub labels: LabelSource,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub bundle: PathBuf,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(Error::Io(e))
    }
}

type Outcome = std::result::Result<i32, Failure>;

fn print_json(out: &mut dyn Write, value: &serde_json::Value) -> std::io::Result<()> {
    writeln!(
        out,
        "{}",
        serde_json::to_string_pretty(value).expect("valid JSON")
    )
}

fn cmd_score(args: &ScoreArgs, out: &mut dyn Write) -> Outcome {
    if args.metric.needs_reference() && args.reference.is_none() {
        return Err(Failure::Usage(format!(
            "--metric {} requires --reference",
            args.metric
        )));
    }
    let bundle = read_bundle(&args.bundle)?;
    let stats = match &args.reference {
        Some(p) if args.metric.needs_reference() => {
            Some(ReferenceStats::from_bundle(&read_bundle(p)?)?)
        }
        _ => None,
    };
    let ctx = ScoringContext {
        reference: stats.as_ref(),
        labels: args.labels,
        seed: args.seed,
    };
    let start = Instant::now();
    let result = score_bundle(&bundle, args.metric, &ctx)?;
    let seconds = start.elapsed().as_secs_f64();
    print_json(
        out,
        &json!({
            "metric": args.metric.name(),
            "value": result.value,
            "degenerate": result.degenerate,
            "seconds": seconds,
        }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_fit(args: &FitArgs, out: &mut dyn Write) -> Outcome {
    let manifest = Manifest::load(&args.manifest)?;
    let opts = BenchmarkOptions {
        labels: args.labels,
        seed: args.seed,
    };
    let report = run_benchmark(&manifest, &args.metrics, &opts)?;
    if let Some(csv) = &args.csv {
        report.save_csv(csv)?;
    }
    print_json(out, &json!({ "fits": report.fits_json() }))?;
    Ok(EXIT_OK)
}

fn cmd_synth(args: &SynthArgs, out: &mut dyn Write) -> Outcome {
    let cfg = args.config();
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let suite = generate_suite(&cfg)?;
    suite.write(&args.out)?;
    print_json(
        out,
        &json!({
            "manifest": args.out.join(MANIFEST_FILE),
            "bundles": suite.tests.len() + 1,
        }),
    )?;
    Ok(EXIT_OK)
}

fn cmd_report(args: &ReportArgs) -> Outcome {
    let manifest = Manifest::load(&args.manifest)?;
    let opts = BenchmarkOptions {
        labels: args.labels,
        seed: args.seed,
    };
    run_benchmark(&manifest, &args.metrics, &opts)?.save_csv(&args.out)?;
    Ok(EXIT_OK)
}

fn cmd_validate(args: &ValidateArgs, err: &mut dyn Write) -> Outcome {
    let violations = validate_bundle(&args.bundle);
    for v in &violations {
        writeln!(err, "{v}")?;
    }
    Ok(if violations.is_empty() {
        EXIT_OK
    } else {
        EXIT_DATA
    })
}

fn configure_threads(threads: Option<usize>) {
    if let Some(n) = threads.filter(|&n| n > 0) {
        // A pool may already exist when called more than once in-process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}

/// Parses `argv` (program name first) and runs the subcommand, returning the
/// exit code.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                write!(err, "{rendered}")
            } else {
                write!(out, "{rendered}")
            };
            return code;
        }
    };
    configure_threads(cli.threads);
    let outcome = match &cli.command {
        Command::Score(a) => cmd_score(a, out),
        Command::Fit(a) => cmd_fit(a, out),
        Command::Synth(a) => cmd_synth(a, out),
        Command::Report(a) => cmd_report(a),
        Command::Validate(a) => cmd_validate(a, err),
    };
    match outcome {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}
