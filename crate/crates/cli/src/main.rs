use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use phasednn_cli::{
    cmd_baseline, cmd_detect, cmd_eval, cmd_probe, cmd_train, default_out, with_workers, CliError,
    WORKERS_ENV,
};

/// Phase-shift DNN experiments: train, evaluate, compare against a single
/// network, probe the frequency principle, and detect frequency bands.
#[derive(Parser)]
#[command(name = "phasednn", version)]
struct Cli {
    /// Worker threads for band extraction and training (default: all cores).
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,

    /// Override the config's master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run PhaseDNN and write the model bundle and report.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
    },
    /// Evaluate a model bundle at the points of a CSV file.
    Eval {
        bundle: PathBuf,
        input: PathBuf,
        /// Predictions CSV.
        #[arg(long, default_value = "predictions.csv")]
        out: PathBuf,
    },
    /// Train one monolithic network on the same data for comparison.
    Baseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
    },
    /// Record per-epoch spectral errors at the config's probe frequencies.
    Probe {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_os_t = default_out())]
        out: PathBuf,
    },
    /// Suggest frequency bands for the samples in a CSV file.
    Detect {
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        clusters: usize,
        /// Config whose [detect] section overrides the default settings.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Band table file (default: standard output).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    let seed = cli.seed;
    match cli.command {
        Command::Train { config, out } => {
            let doc = with_workers(cli.workers, || cmd_train(&config, &out, seed))??;
            print!("{}", doc.report.to_table());
            println!("wrote {}", out.display());
        }
        Command::Baseline { config, out } => {
            let doc = with_workers(cli.workers, || cmd_baseline(&config, &out, seed))??;
            for n in &doc.notes {
                println!("note: {n}");
            }
            print!("{}", doc.report.to_table());
            println!("wrote {}", out.display());
        }
        Command::Eval { bundle, input, out } => {
            let s = with_workers(cli.workers, || cmd_eval(&bundle, &input, &out))??;
            println!("points: {}", s.count);
            if let Some(m) = s.metrics {
                println!("relative L2: {:?}", m.rel_l2);
                println!("MSE: {:?}", m.mse);
            }
            println!("wrote {}", out.display());
        }
        Command::Probe { config, out } => {
            let table = with_workers(cli.workers, || cmd_probe(&config, &out, seed))??;
            for (i, k) in table.probes.iter().enumerate() {
                match table.halving_epoch(i) {
                    Some(e) => println!("|D({k})| halves at epoch {e}"),
                    None => println!("|D({k})| does not halve in {} epochs", table.rows.len()),
                }
            }
            println!("wrote {}", out.join("probe.csv").display());
        }
        Command::Detect {
            input,
            clusters,
            config,
            out,
        } => {
            let (report, text) = with_workers(cli.workers, || {
                cmd_detect(&input, clusters, config.as_deref(), out.as_deref())
            })??;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            match out {
                Some(p) => println!("wrote {}", p.display()),
                None => print!("{text}"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
