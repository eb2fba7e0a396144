use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use kvbench_cli::commands::{cmd_compare, cmd_preload, cmd_report, cmd_sweep, CmdError};
use kvbench_cli::config::BenchmarkConfig;
use kvbench_core::stats::ComparisonMetric;

/// Benchmark driver for Redis-protocol key-value stores: Zipfian load
/// generation, concurrency sweeps, tail-latency metrics, and statistical
/// comparison against a baseline system.
#[derive(Parser)]
#[command(name = "kvbench", version, about)]
struct Cli {
    /// Path to the benchmark configuration (JSON).
    #[arg(long, global = true, env = "KVBENCH_CONFIG")]
    config: Option<PathBuf>,

    /// Override the workload's base seed.
    #[arg(long, global = true, env = "KVBENCH_SEED")]
    seed: Option<u64>,

    /// Override the configured output directory.
    #[arg(long, global = true, env = "KVBENCH_OUTPUT")]
    output: Option<PathBuf>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Load the key space onto one target at the configured memory fill.
    Preload {
        /// System identifier from the config's target list.
        #[arg(long)]
        target: String,
    },
    /// Run the concurrency sweep against one target, resuming missing cells.
    Sweep {
        #[arg(long)]
        target: String,
        /// Builtin workload name overriding the configured workload.
        #[arg(long)]
        workload: Option<String>,
    },
    /// Welch-test every (workload, concurrency) cell against the baseline.
    Compare {
        #[arg(long, value_enum, default_value_t = MetricArg::Throughput)]
        metric: MetricArg,
    },
    /// Write the normalized summary table and plot-ready series.
    Report,
}

#[derive(Copy, Clone, ValueEnum)]
enum MetricArg {
    Throughput,
    P99,
    P999,
}

impl From<MetricArg> for ComparisonMetric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Throughput => ComparisonMetric::Throughput,
            MetricArg::P99 => ComparisonMetric::P99,
            MetricArg::P999 => ComparisonMetric::P999,
        }
    }
}

fn load_config(cli: &Cli) -> Result<BenchmarkConfig, CmdError> {
    let Some(path) = &cli.config else {
        return Err(CmdError::Usage(
            "missing --config <path> (or KVBENCH_CONFIG)".to_string(),
        ));
    };
    let config = BenchmarkConfig::load(path).map_err(|e| CmdError::Usage(format!("{e:#}")))?;
    Ok(config.with_overrides(cli.seed, cli.output.clone()))
}

fn real_main(cli: Cli) -> Result<(), CmdError> {
    let config = load_config(&cli)?;
    match &cli.command {
        Cmd::Preload { target } => cmd_preload(&config, target),
        Cmd::Sweep { target, workload } => cmd_sweep(&config, target, workload.as_deref()),
        Cmd::Compare { metric } => cmd_compare(&config, (*metric).into()),
        Cmd::Report => cmd_report(&config),
    }
}

fn main() {
    let cli = Cli::parse();
    match real_main(cli) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("kvbench: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
