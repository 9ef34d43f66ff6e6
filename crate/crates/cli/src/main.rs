//! `qlab <experiment> --config <file> --out <dir> [--threads N] [--seed S]`
//!
//! Exit status: 0 when every assertion group passes (documented expected
//! failures included), 1 on an assertion or computation failure, 2 on a bad
//! command line or config. Config errors leave no output behind.

mod config;
mod experiments;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::Parser;
use serde::Serialize;
use serde_json::json;

use config::{ConfigError, Experiment};
use experiments::Outcome;

#[derive(Debug, Parser)]
#[command(name = "qlab", version, about = "Batch experiments for constant Q-curvature metrics")]
struct Args {
    #[arg(value_enum)]
    experiment: Experiment,
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Worker threads for the data-parallel kernels.
    #[arg(long, value_parser = clap::value_parser!(u16).range(1..))]
    threads: Option<u16>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
}

/// A validated config together with its runner.
struct Job {
    echo: serde_json::Value,
    run: Box<dyn FnOnce() -> anyhow::Result<Outcome>>,
}

fn job<C: Serialize + 'static>(
    cfg: C,
    validate: impl FnOnce(&C) -> Result<(), ConfigError>,
    run: fn(&C) -> anyhow::Result<Outcome>,
) -> Result<Job, ConfigError> {
    validate(&cfg)?;
    let echo = serde_json::to_value(&cfg).map_err(|e| ConfigError(e.to_string()))?;
    Ok(Job { echo, run: Box::new(move || run(&cfg)) })
}

fn prepare(args: &Args) -> Result<Job, ConfigError> {
    let path = &args.config;
    match args.experiment {
        Experiment::BubbleCheck => job(config::load::<config::BubbleCheckConfig>(path)?, |c| c.validate(), experiments::bubble_check),
        Experiment::QAudit => job(config::load::<config::QAuditConfig>(path)?, |c| c.validate(), experiments::q_audit),
        Experiment::RadialBlowup => job(config::load::<config::RadialBlowupConfig>(path)?, |c| c.validate(), experiments::radial_blowup),
        Experiment::Poincare => job(config::load::<config::PoincareConfig>(path)?, |c| c.validate(), experiments::poincare),
        Experiment::OrbitIntegral => {
            let mut c = config::load::<config::OrbitIntegralConfig>(path)?;
            c.seed = args.seed.or(c.seed);
            job(c, |c| c.validate(), experiments::orbit)
        }
        Experiment::MovingPlane => {
            let mut c = config::load::<config::MovingPlaneConfig>(path)?;
            c.seed = args.seed.or(c.seed);
            job(c, |c| c.validate(), experiments::moving_plane)
        }
        Experiment::Blowup => {
            let mut c = config::load::<config::BlowupConfig>(path)?;
            c.seed = args.seed.or(c.seed);
            job(c, |c| c.validate(), experiments::blowup)
        }
        Experiment::PaneitzFunctional => {
            job(config::load::<config::PaneitzConfig>(path)?, |c| c.validate(), experiments::paneitz)
        }
    }
}

fn write_outputs(out: &Path, experiment: Experiment, echo: serde_json::Value, outcome: &Outcome) -> anyhow::Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let report = json!({
        "experiment": experiment.name(),
        "config": echo,
        "assertions": outcome.assertions,
        "result": outcome.result,
    });
    let text = serde_json::to_string_pretty(&report)? + "\n";
    let mut files = vec![("report.json".to_string(), text)];
    files.extend(outcome.files.iter().cloned());
    for (name, contents) in files {
        let path = out.join(&name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    let job = match prepare(&args) {
        Ok(j) => j,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(t) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(t as usize).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let outcome = match (job.run)() {
        Ok(o) => o,
        Err(e) => {
            eprintln!("FAIL {}: {e:#}", args.experiment.name());
            return ExitCode::from(1);
        }
    };
    for a in &outcome.assertions {
        println!("{}", a.summary());
    }
    if let Err(e) = write_outputs(&args.out, args.experiment, job.echo, &outcome) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    if outcome.assertions.iter().any(|a| a.is_failure()) {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
