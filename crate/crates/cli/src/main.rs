//! `symreg` — symbolic regression by self-learning tree search.

mod config;
mod drivers;
mod error;
mod report;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Config;
use drivers::{bench_report, solve, BenchOpts};
use error::CliError;
use report::trace_csv;

#[derive(Parser)]
#[command(name = "symreg", version, about = "Symbolic regression by self-learning tree search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config file; omitted fields use documented defaults.
    #[arg(long)]
    config: Option<String>,
    /// Root seed; all randomness derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report output path.
    #[arg(long, default_value = "report.json")]
    out: String,
    /// Record wall-clock times (makes report bytes nondeterministic).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Search a CSV dataset (header x1,...,xm,y) for an expression.
    Solve {
        data: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a benchmark suite from the registry.
    Bench {
        #[arg(long)]
        suite: String,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Benchmark under uniform target noise at each level.
    Noise {
        #[arg(long)]
        suite: String,
        /// Comma-separated noise levels in [0, 0.1].
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<f64>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Benchmark with components disabled, side by side with baseline.
    Ablate {
        #[arg(long)]
        suite: String,
        /// Comma-separated subset of: entropy, constraints, snrmse.
        #[arg(long, value_delimiter = ',', required = true)]
        disable: Vec<String>,
        #[arg(long, default_value_t = 1)]
        runs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Registry inspection.
    Registry {
        #[command(subcommand)]
        action: RegistryAction,
    },
}

#[derive(Subcommand)]
enum RegistryAction {
    /// List shipped benchmarks and suites.
    List,
}

fn load_config(common: &Common) -> Result<Config, CliError> {
    match &common.config {
        Some(p) => Config::load(p),
        None => Ok(Config::default()),
    }
}

fn trace_path(out: &str) -> String {
    match out.strip_suffix(".json") {
        Some(stem) => format!("{stem}.trace.csv"),
        None => format!("{out}.trace.csv"),
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve { data, common } => {
            let cfg = load_config(&common)?;
            let outcome = solve(&data, &cfg, common.seed, common.timing)?;
            outcome.report.write(&common.out)?;
            let tp = trace_path(&common.out);
            std::fs::write(&tp, trace_csv(&outcome.trace))
                .map_err(|e| CliError::Data(format!("cannot write {tp}: {e}")))?;
            println!(
                "best: {}  (reward {:.6}, {} episodes)",
                outcome.report.rows[0].best_infix.as_deref().unwrap_or("<none>"),
                outcome.best_reward,
                outcome.report.rows[0].episodes
            );
            if !outcome.solved {
                return Err(CliError::BudgetExhausted(outcome.best_reward));
            }
            Ok(())
        }
        Command::Bench { suite, runs, common } => {
            let cfg = load_config(&common)?;
            let opts = BenchOpts {
                suite,
                runs,
                seed: common.seed,
                levels: vec![0.0],
                disabled: vec![],
                timing: common.timing,
            };
            let report = bench_report(&cfg, &opts, "bench")?;
            report.write(&common.out)?;
            summarize(&report);
            Ok(())
        }
        Command::Noise { suite, levels, runs, common } => {
            let cfg = load_config(&common)?;
            let opts = BenchOpts {
                suite,
                runs,
                seed: common.seed,
                levels,
                disabled: vec![],
                timing: common.timing,
            };
            let report = bench_report(&cfg, &opts, "noise")?;
            report.write(&common.out)?;
            summarize(&report);
            Ok(())
        }
        Command::Ablate { suite, disable, runs, common } => {
            let cfg = load_config(&common)?;
            let opts = BenchOpts {
                suite,
                runs,
                seed: common.seed,
                levels: vec![0.0],
                disabled: disable,
                timing: common.timing,
            };
            let report = bench_report(&cfg, &opts, "ablate")?;
            report.write(&common.out)?;
            summarize(&report);
            Ok(())
        }
        Command::Registry { action: RegistryAction::List } => {
            let reg = symreg_core::bench::registry();
            println!("suites: {}", reg.suites().join(", "));
            for b in reg.all() {
                let tag = if b.supported() { "" } else { "  [unsupported]" };
                println!("{}  =  {}{}", b.name, b.infix, tag);
            }
            Ok(())
        }
    }
}

fn summarize(report: &report::Report) {
    for a in &report.aggregates {
        let r2 = a
            .mean_r_squared
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{} level={} runs={} recovery={:.2} mean_r2={}",
            a.variant, a.noise_level, a.runs, a.recovery_rate, r2
        );
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            // help/version are successes; everything else is a usage error
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
