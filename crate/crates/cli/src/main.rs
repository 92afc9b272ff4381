//! `wiserx` command-line front end.
//!
//! Exit codes: 0 success, 1 usage, 2 config error, 3 runtime error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use wiserx_core::engine::{batch, run};
use wiserx_core::experiments::{run_experiment, Experiment, DEFAULT_TRIALS};
use wiserx_core::metrics::{aggregate, aggregate_csv, series_csv, summarize_run, write_csv, TrialSummary};
use wiserx_core::world::{load_scenario, SCHEMA_VERSION};
use wiserx_core::{Error, ScenarioConfig};

#[derive(Parser)]
#[command(name = "wiserx", about = "Multi-robot frontier exploration simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write its output bundle.
    Run {
        scenario: PathBuf,
        /// Overrides the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "WISERX_OUT", default_value = "wiserx-out")]
        out: PathBuf,
    },
    /// Run `trials` copies of a scenario with seeds `seed + k`.
    Batch {
        scenario: PathBuf,
        #[arg(long)]
        trials: usize,
        /// Base seed; defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, env = "WISERX_OUT", default_value = "wiserx-out")]
        out: PathBuf,
    },
    /// Run a canned experiment and write its summary tables.
    Experiment {
        #[arg(value_parser = parse_experiment)]
        name: Experiment,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, env = "WISERX_OUT", default_value = "wiserx-out")]
        out: PathBuf,
    },
    /// Check a scenario and print it with defaults filled in.
    Validate { scenario: PathBuf },
}

fn parse_experiment(s: &str) -> Result<Experiment, String> {
    s.parse().map_err(|_| {
        let names: Vec<&str> = Experiment::ALL.iter().map(|e| e.as_str()).collect();
        format!("expected one of {}", names.join(", "))
    })
}

enum Failure {
    Config(Error),
    Runtime(Error),
}

impl Failure {
    fn report(&self) -> ExitCode {
        match self {
            Failure::Config(e) => {
                eprintln!("wiserx: config error: {e}");
                ExitCode::from(2)
            }
            Failure::Runtime(e) => {
                eprintln!("wiserx: {e}");
                ExitCode::from(3)
            }
        }
    }
}

fn load(path: &Path) -> Result<ScenarioConfig, Failure> {
    load_scenario(path).map_err(Failure::Config)
}

fn rt<T>(r: wiserx_core::Result<T>) -> Result<T, Failure> {
    r.map_err(Failure::Runtime)
}

fn write_tables(dir: &Path, summaries: &[TrialSummary], series: &str) -> Result<(), Failure> {
    rt(write_csv(summaries, &dir.join("summary.csv")))?;
    let agg = aggregate_csv(&rt(aggregate(summaries))?);
    for (name, body) in [("aggregate.csv", agg.as_str()), ("series.csv", series)] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Failure::Runtime(Error::Io { path, source: e }))?;
    }
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Validate { scenario } => {
            let cfg = load(&scenario)?;
            print!("{}", cfg.to_toml());
        }
        Command::Run { scenario, seed, out } => {
            let mut cfg = load(&scenario)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let r = rt(run(cfg))?;
            rt(r.write_bundle(&out))?;
            println!(
                "seed {} ticks {} coverage {:.2}%{} -> {}",
                r.seed,
                r.ticks,
                r.final_coverage(),
                if r.budget_exceeded { " (budget exceeded)" } else { "" },
                out.display()
            );
        }
        Command::Batch { scenario, trials, seed, out } => {
            let cfg = load(&scenario)?;
            if trials == 0 {
                return Err(Failure::Config(Error::InvalidConfig("--trials must be >= 1".into())));
            }
            let base = seed.unwrap_or(cfg.seed);
            let label = cfg.strategy.as_str();
            let runs = rt(batch(&cfg, trials, base))?;
            let mut summaries = Vec::with_capacity(runs.len());
            for r in &runs {
                rt(r.write_bundle(&out.join(format!("trial{}", r.trial))))?;
                summaries.push(rt(summarize_run(r, label))?);
            }
            let series: Vec<(&str, _)> = runs.iter().map(|r| (label, r)).collect();
            write_tables(&out, &summaries, &series_csv(&series))?;
            let cov: Vec<f64> = summaries.iter().map(|s| s.coverage_pct).collect();
            println!(
                "{trials} trials, mean coverage {:.2}% -> {}",
                cov.iter().sum::<f64>() / cov.len() as f64,
                out.display()
            );
        }
        Command::Experiment { name, trials, seed, out } => {
            if trials == 0 {
                return Err(Failure::Config(Error::InvalidConfig("--trials must be >= 1".into())));
            }
            let result = rt(run_experiment(name, trials, seed))?;
            rt(result.write(&out))?;
            for a in rt(aggregate(&result.summaries))? {
                println!(
                    "{:<28} coverage {:6.2}% (std {:.2})  overlap {:6.2}%  last termination {:.1}",
                    a.strategy, a.coverage.mean, a.coverage.std, a.overlap.mean, a.term_tick.mean
                );
            }
            println!("-> {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let version = format!("{} (scenario schema {SCHEMA_VERSION})", env!("CARGO_PKG_VERSION"));
    let parsed = Cli::command()
        .version(version)
        .try_get_matches()
        .and_then(|m| Cli::from_arg_matches(&m));
    let cli = match parsed {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => f.report(),
    }
}
