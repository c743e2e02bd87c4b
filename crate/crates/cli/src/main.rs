//! `postselect-lab`: batch CLI for post-selection and cross-validation
//! audit experiments.
//!
//! Exit codes: 0 success, 1 configuration/validation/IO error, 2 verdict
//! failure (only with `--fail-on-verdict`). Errors are written to stderr as
//! one-line JSON.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use postselect_cli::config::{ExperimentConfig, Protocol};
use postselect_cli::run;

#[derive(Parser)]
#[command(
    name = "postselect-lab",
    version,
    about = "Audit post-selection, cross-validation, and Super Learner protocols on synthetic data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config; a per-protocol default is used when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Override the config's output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    /// Also write CSV reports.
    #[arg(long, global = true)]
    csv: bool,

    /// Exit nonzero when the run's verdict fails.
    #[arg(long, global = true)]
    fail_on_verdict: bool,

    /// Print the luckiest-only view next to the full report, clearly
    /// labeled. The files always contain the full report.
    #[arg(long, global = true)]
    show_misconduct_view: bool,

    /// Worker threads (never affects results). Flag wins over the
    /// POSTSELECT_LAB_THREADS environment variable, which wins over the
    /// config file.
    #[arg(long, global = true, env = "POSTSELECT_LAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (CSV plus JSON manifest).
    GenData,
    /// Fit many seeded learners, post-select the luckiest on validation,
    /// and test whether its luck transfers to the withheld test set.
    LostLuck,
    /// Cross-validate honest and misconduct families, then evaluate every
    /// fold model on a withheld test set.
    CvAudit,
    /// The same audit over a nested input-output fold plan.
    NestedCvAudit,
    /// Inject a misconduct candidate into the Super Learner's exhaustive
    /// weight search and measure the captured ensemble.
    Superlearner,
    /// Train a k-architectures-by-n-seeds grid and report the full error
    /// distribution with per-architecture sub-reports.
    Report,
}

impl Command {
    fn protocol(&self) -> Protocol {
        match self {
            Command::GenData => Protocol::GenData,
            Command::LostLuck => Protocol::LostLuck,
            Command::CvAudit => Protocol::CvAudit,
            Command::NestedCvAudit => Protocol::NestedCvAudit,
            Command::Superlearner => Protocol::Superlearner,
            Command::Report => Protocol::Report,
        }
    }
}

fn fail(kind: &str, message: String) -> ExitCode {
    let line = serde_json::to_string(&json!({ "error": message, "kind": kind }))
        .expect("error line serializes");
    eprintln!("{line}");
    if kind == "verdict" {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn load_config(cli: &Cli, protocol: Protocol) -> postselect_core::Result<ExperimentConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            let config = ExperimentConfig::from_json(&text)?;
            if config.protocol != protocol {
                return Err(postselect_core::Error::InvalidConfig(format!(
                    "config is for protocol `{}` but the `{}` subcommand was invoked",
                    config.protocol, protocol
                )));
            }
            config
        }
        None => ExperimentConfig::default_for(protocol),
    };
    if let Some(seed) = cli.seed {
        config.master_seed = seed;
    }
    if let Some(out) = &cli.out {
        config.output.dir = out.clone();
    }
    if cli.csv {
        config.output.csv = true;
    }
    if cli.threads.is_some() {
        config.threads = cli.threads;
    }
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let protocol = cli.command.protocol();

    let config = match load_config(&cli, protocol) {
        Ok(c) => c,
        Err(e) => return fail("validation", e.to_string()),
    };

    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => return fail("validation", format!("cannot build thread pool: {e}")),
    };

    let outcome = match pool.install(|| run::run(&config, cli.show_misconduct_view)) {
        Ok(o) => o,
        Err(e) => return fail("validation", e.to_string()),
    };

    print!("{}", outcome.summary);
    for file in &outcome.files {
        println!("wrote {}", file.display());
    }

    if cli.fail_on_verdict {
        if let Some(false) = outcome.verdict_pass {
            return fail("verdict", format!("{protocol} verdict failed"));
        }
    }
    ExitCode::SUCCESS
}
