use clap::{Args, Parser, Subcommand};
use coulomb_gas::sampler::RejectionStats;
use coulomb_gas_cli::{run_path, scan_dt, ExperimentConfig, RunError, RunOptions};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "cgas", version, about = "Constrained HMC sampler for conditioned Coulomb and log gases")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV files.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Measure the Metropolis rejection fraction for several step sizes.
    ScanDt {
        config: PathBuf,
        /// Comma-separated step sizes, at least three.
        #[arg(long, value_delimiter = ',', required = true)]
        dt: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Override the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the configured output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Independent chains, merged into one set of files.
    #[arg(long, default_value_t = 1)]
    chains: usize,
    /// Worker threads for multi-chain runs.
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn options(&self) -> RunOptions {
        RunOptions { seed: self.seed, out: self.out.clone(), chains: self.chains.max(1), threads: self.threads }
    }
}

fn print_stats(stats: &RejectionStats) {
    println!(
        "steps {}  accepted {}  newton_forward_fail {}  newton_backward_fail {}  reversibility_fail {}  metropolis_reject {}",
        stats.total(),
        stats.accepted,
        stats.newton_forward_fail,
        stats.newton_backward_fail,
        stats.reversibility_fail,
        stats.metropolis_reject
    );
    println!("acceptance fraction {:.6}", stats.acceptance_fraction());
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { config, common } => {
            let summary = run_path(&config, &common.options())?;
            print_stats(&summary.stats);
            println!("max constraint residual {:.3e}", summary.max_constraint_residual());
            for f in &summary.files {
                println!("wrote {}", f.display());
            }
        }
        Command::ScanDt { config, dt, common } => {
            let cfg = ExperimentConfig::load(&config)?;
            let scan = scan_dt(&cfg, &dt, &common.options())?;
            for (dt, f) in &scan.rows {
                println!("dt {dt}  metropolis_reject_fraction {f}");
            }
            for (dt, f) in &scan.excluded {
                eprintln!("warning: dt {dt} left out of the fit (rejection fraction {f})");
            }
            match scan.fit {
                Some((slope, intercept)) => println!("log-log slope {slope:.6}  intercept {intercept:.6}"),
                None => eprintln!("warning: fewer than two usable points, no slope"),
            }
            println!("wrote {}", scan.file.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
