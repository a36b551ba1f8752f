use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};
use dermaudit::triage::{Thresholds, DEFAULT_GREEN_THRESHOLD, DEFAULT_RED_THRESHOLD};
use dermaudit_cli::commands::{
    cmd_evaluate, cmd_followup, cmd_metrics, cmd_saliency, cmd_triage, EvaluateOptions,
    MetricsOptions, SaliencyOptions, TriageOptions,
};
use dermaudit_cli::config::DEFAULT_CONFIDENCE;
use dermaudit_cli::fixtures::{write_iou_fixture, write_validation_fixture, FixtureArch};
use dermaudit_cli::{CommandReport, RunConfig};

#[derive(Parser)]
#[command(
    name = "dermaudit",
    version,
    about = "Saliency relevance, triage routing and diagnostic statistics"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Case manifest (JSON array).
    #[arg(long)]
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Saliency binarization threshold.
    #[arg(long, default_value_t = dermaudit::relevance::DEFAULT_TAU)]
    tau: f64,
    #[arg(long, default_value_t = DEFAULT_GREEN_THRESHOLD)]
    green_threshold: f64,
    #[arg(long, default_value_t = DEFAULT_RED_THRESHOLD)]
    red_threshold: f64,
    /// Confidence level for binomial intervals.
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    confidence: f64,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut c = RunConfig::new(&self.manifest, &self.out).with_jobs(self.jobs);
        c.tau = self.tau;
        c.thresholds = Thresholds::new(self.green_threshold, self.red_threshold)?;
        c.confidence = self.confidence;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum FixtureKind {
    Validation,
    Iou,
}

#[derive(Subcommand)]
enum Command {
    /// Write one normalized saliency map per case.
    Saliency {
        #[command(flatten)]
        common: Common,
        /// Restrict to these case ids.
        #[arg(long = "case")]
        cases: Vec<String>,
        /// Also write P5 graymaps.
        #[arg(long)]
        pgm: bool,
    },
    /// Score maps against expert annotations and summarize IoU.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Output directory of an earlier saliency run.
        #[arg(long)]
        maps: Option<PathBuf>,
    },
    /// Route cases to zones and update the referral registry.
    Triage {
        #[command(flatten)]
        common: Common,
        /// Decision date (YYYY-MM-DD); defaults to today.
        #[arg(long)]
        date: Option<NaiveDate>,
        /// Registry log; defaults to registry.jsonl in the output directory.
        #[arg(long)]
        registry: Option<PathBuf>,
    },
    /// Confusion matrix, metrics with exact intervals, optional McNemar test.
    Metrics {
        #[command(flatten)]
        common: Common,
        /// Paired assessments without/with the system.
        #[arg(long)]
        paired: Option<PathBuf>,
    },
    /// List registry cases overdue for attendance confirmation.
    Followup {
        #[arg(long)]
        registry: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference date (YYYY-MM-DD); defaults to today.
        #[arg(long)]
        date: Option<NaiveDate>,
    },
    /// Generate a bundled fixture.
    Fixture {
        #[arg(value_enum)]
        kind: FixtureKind,
        #[arg(long)]
        out: PathBuf,
        /// IoU fixture architectures (default: all four).
        #[arg(long = "arch")]
        archs: Vec<String>,
    },
}

fn today() -> NaiveDate {
    chrono::Local::now().date_naive()
}

fn finish(name: &str, report: CommandReport) -> ExitCode {
    eprintln!(
        "{name}: {} cases, {} errors",
        report.processed,
        report.errors.len()
    );
    for e in &report.errors {
        eprintln!("  {} [{}]: {}", e.case_id, e.stage, e.message);
    }
    if report.success() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    Ok(match cli.command {
        Command::Saliency { common, cases, pgm } => finish(
            "saliency",
            cmd_saliency(&common.config()?, &SaliencyOptions { cases, pgm })?,
        ),
        Command::Evaluate { common, maps } => finish(
            "evaluate",
            cmd_evaluate(&common.config()?, &EvaluateOptions { maps })?,
        ),
        Command::Triage {
            common,
            date,
            registry,
        } => {
            let options = TriageOptions {
                date: date.unwrap_or_else(today),
                registry,
            };
            finish("triage", cmd_triage(&common.config()?, &options)?)
        }
        Command::Metrics { common, paired } => finish(
            "metrics",
            cmd_metrics(&common.config()?, &MetricsOptions { paired })?,
        ),
        Command::Followup {
            registry,
            out,
            date,
        } => {
            let due = cmd_followup(&registry, date.unwrap_or_else(today), &out)?;
            eprintln!("followup: {due} cases due");
            ExitCode::SUCCESS
        }
        Command::Fixture { kind, out, archs } => {
            let manifest = match kind {
                FixtureKind::Validation => write_validation_fixture(&out)?,
                FixtureKind::Iou => {
                    let mut selected = Vec::new();
                    for a in &archs {
                        match FixtureArch::parse(a) {
                            Some(arch) => selected.push(arch),
                            None => bail!("unknown architecture {a}"),
                        }
                    }
                    if selected.is_empty() {
                        selected = FixtureArch::ALL.to_vec();
                    }
                    write_iou_fixture(&out, &selected)?
                }
            };
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
