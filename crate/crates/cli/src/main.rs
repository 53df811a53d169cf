use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use wbfo_cli::{execute, ConfigError, ExperimentConfig, Report};
use wbfo_core::Algorithm;

/// Spline-basis sampling trajectory optimization benchmarks.
#[derive(Parser, Debug)]
#[command(name = "wbfo", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the battery described by a config (or manifest) file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the same seeded battery for several algorithms.
    Compare {
        config: PathBuf,
        /// Algorithms to compare, e.g. wbfo,avwbfo,mppi
        #[arg(long, value_delimiter = ',', required = true)]
        algorithms: Vec<Algorithm>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the battery over a list of sample counts.
    Sweep {
        config: PathBuf,
        /// Sample counts, e.g. 5,10,20,50,100
        #[arg(long, value_delimiter = ',', required = true)]
        samples: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// Base seed; trials use consecutive seeds from here
    #[arg(long)]
    seed: Option<u64>,
    /// Maximum concurrent trials (0 = one per core)
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output directory (overrides `output_dir` in the config)
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

fn prepare(config: &Path, common: &Common) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::from_path(config)?;
    if let Some(seed) = common.seed {
        cfg.set_base_seed(seed)?;
    }
    if let Some(dir) = &common.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn summarize(report: &Report) {
    for a in &report.aggregates {
        let win = a.win_rate.map(|w| format!(", win rate {:.0}%", 100.0 * w)).unwrap_or_default();
        println!(
            "{} {} N={}: cost {:.4} ± {:.4}, success {:.0}%, steps {:.1}{}{}",
            a.experiment,
            a.algorithm,
            a.n_samples,
            a.mean_cost,
            a.std_cost,
            100.0 * a.success_rate,
            a.mean_steps,
            win,
            if a.faults > 0 { format!(", {} faulted", a.faults) } else { String::new() },
        );
    }
    println!("wrote {} rows to {}", report.rows.len(), report.output_dir.display());
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let (cfg, workers) = match &cli.command {
        Command::Run { config, common } => (prepare(config, common)?, common.workers),
        Command::Compare { config, algorithms, common } => {
            let mut cfg = prepare(config, common)?;
            cfg.set_algorithms(algorithms.clone())?;
            (cfg, common.workers)
        }
        Command::Sweep { config, samples, common } => {
            let mut cfg = prepare(config, common)?;
            cfg.set_sample_sweep(samples.clone())?;
            (cfg, common.workers)
        }
    };
    let report = execute(&cfg, workers)?;
    summarize(&report);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<ConfigError>().is_some() => {
            eprintln!("invalid config: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
