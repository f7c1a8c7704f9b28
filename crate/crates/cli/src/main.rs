//! `crod` command-line front end for the experiment suites.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use crod_core::harness::{self, Suite};
use crod_core::Error;

#[derive(Parser)]
#[command(name = "crod", version, about = "Debiased complex LASSO detection experiments")]
struct Cli {
    #[command(subcommand)]
    suite: SuiteCmd,
}

#[derive(Subcommand)]
enum SuiteCmd {
    /// KS tests and ECDF curves of the debiased error under two coefficients.
    Gaussianity(Args),
    /// Relative error of the three variance estimators over a sweep.
    VarianceError(Args),
    /// False-alarm and detection rates of the four detectors over a sweep.
    Detection(Args),
    /// Per-trial check of the exact debiasing identities and test ordering.
    Dominance(Args),
}

#[derive(clap::Args)]
struct Args {
    /// Experiment configuration (key=value lines).
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output CSV path; companion tables get a suffix before the extension.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads. Defaults to the config, then to all cores.
    #[arg(long, env = "CROD_WORKERS")]
    workers: Option<usize>,
}

fn run(suite: Suite, args: Args) -> Result<(), Error> {
    let mut cfg = harness::parse_config(&args.config, Some(suite))?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(o) = args.out {
        cfg.output = Some(o);
    }
    if args.workers.is_some() {
        cfg.workers = args.workers;
    }
    cfg.validate()?;
    let out = harness::run(&cfg)?;
    for path in harness::write_outputs(&cfg, &out, &harness::default_output(&cfg))? {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (suite, args) = match cli.suite {
        SuiteCmd::Gaussianity(a) => (Suite::Gaussianity, a),
        SuiteCmd::VarianceError(a) => (Suite::VarianceError, a),
        SuiteCmd::Detection(a) => (Suite::Detection, a),
        SuiteCmd::Dominance(a) => (Suite::Dominance, a),
    };
    match run(suite, args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crod: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}
