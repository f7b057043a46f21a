use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rmt_lab::report::{
    emit_plot_data, run_experiment, write_error_record, ExperimentConfig, ExperimentKind, Overrides, PlotKind,
};
use rmt_lab::{Error, Result};

#[derive(Parser)]
#[command(name = "rmt", version, about = "Random-matrix spectral experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// JSON config, or a run-manifest.json from an earlier run.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// Output directory (default rmt-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Moments, kappa-control check and phase search for one entry law.
    DistCheck(RunArgs),
    /// Singular values of a shift, optionally with noise added.
    Spectrum(RunArgs),
    /// Tail probabilities of the least singular value of M + N.
    Tails(RunArgs),
    /// Gaussian tail against the closed-form bound.
    Edelman(RunArgs),
    /// Condition-number tail under the polynomial norm hypothesis.
    MainTheorem(RunArgs),
    /// Adversarial shift scaling sweep over L.
    Construction(RunArgs),
    /// Small-ball probability of one weight vector.
    Smallball(RunArgs),
    /// Operator and Frobenius norm survey.
    Norms(RunArgs),
    /// Turn a report.json into a plotting table.
    Plot {
        #[arg(long)]
        report: PathBuf,
        /// tail, histogram, norms or scaling.
        #[arg(long)]
        kind: String,
    },
}

fn run(kind: ExperimentKind, args: RunArgs) -> (Result<()>, PathBuf) {
    let overrides = Overrides {
        experiment: Some(kind),
        seed: args.seed,
        trials: args.trials,
        out: args.out.clone(),
    };
    let fallback_out = args.out.clone().unwrap_or_else(|| PathBuf::from(rmt_lab::report::DEFAULT_OUT_DIR));
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
    .and_then(|c| c.with_overrides(&overrides))
    .map(|mut c| {
        if args.workers.is_some() {
            c.workers = args.workers;
        }
        c
    });
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => return (Err(e), fallback_out),
    };
    let out = cfg.out_dir();
    match run_experiment(&cfg) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            let failed: Vec<_> = outcome.report.verdicts.iter().filter(|v| v.informative && !v.holds).collect();
            for v in failed {
                eprintln!("verdict {} does not hold: {} {} {}", v.name, v.value, v.relation, v.reference);
            }
            (Ok(()), out)
        }
        Err(e) => (Err(e), out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (result, out) = match cli.command {
        Command::DistCheck(a) => run(ExperimentKind::DistCheck, a),
        Command::Spectrum(a) => run(ExperimentKind::Spectrum, a),
        Command::Tails(a) => run(ExperimentKind::Tails, a),
        Command::Edelman(a) => run(ExperimentKind::Edelman, a),
        Command::MainTheorem(a) => run(ExperimentKind::MainTheorem, a),
        Command::Construction(a) => run(ExperimentKind::Construction, a),
        Command::Smallball(a) => run(ExperimentKind::Smallball, a),
        Command::Norms(a) => run(ExperimentKind::Norms, a),
        Command::Plot { report, kind } => {
            let r = kind.parse::<PlotKind>().and_then(|k| emit_plot_data(&report, k)).map(|p| {
                println!("{}", p.display());
            });
            if let Err(e) = &r {
                eprintln!("error: {e}");
                return ExitCode::from(e.exit_code() as u8);
            }
            return ExitCode::SUCCESS;
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report_failure(&e, &out),
    }
}

fn report_failure(e: &Error, out: &std::path::Path) -> ExitCode {
    eprintln!("error: {e}");
    if let Error::Validation(items) = e {
        for item in items {
            eprintln!("  - {item}");
        }
    }
    if let Err(w) = write_error_record(out, e) {
        eprintln!("could not write error.json: {w}");
    }
    ExitCode::from(e.exit_code() as u8)
}
