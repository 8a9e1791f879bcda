use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pogorelov::harness::{configure_threads, run_experiment, ExperimentConfig, Mode, Problem};
use pogorelov::oracle::{pogorelov_solve, ORACLE_TOL};
use pogorelov::Error;

/// Semi-discrete optimal transport onto the unit disk by a monotone
/// Monge-Ampère scheme, with an exact geometric reference solver.
#[derive(Parser)]
#[command(name = "pogorelov", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Solve the config's problem with the exact reference solver only.
    Oracle {
        #[arg(long)]
        config: PathBuf,
    },
    /// Error table and fitted order over several grid sizes.
    Convergence {
        /// one_dirac, two_dirac, three_dirac, five_dirac, ten_dirac,
        /// random_k:<count>:<seed> or custom:<file>
        #[arg(long)]
        problem: String,
        #[arg(long, value_delimiter = ',', default_value = "33,65,129,257")]
        sizes: Vec<usize>,
        #[arg(long, default_value = "aleksandrov")]
        mode: String,
        /// Directory for CSV/JSON artifacts.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Both schemes on one grid, side by side.
    Compare {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        size: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Exit status for configuration mistakes.
const EXIT_CONFIG: u8 = 1;
/// Exit status when some solves failed.
const EXIT_PARTIAL: u8 = 2;

fn exit_for(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    match e {
        Error::Config(_) | Error::Contract(_) | Error::Io(_) | Error::Json(_) | Error::OffGrid { .. } => {
            ExitCode::from(EXIT_CONFIG)
        }
        _ => ExitCode::from(EXIT_PARTIAL),
    }
}

fn experiments(configs: &[ExperimentConfig]) -> ExitCode {
    let mut failures = 0;
    for config in configs {
        match run_experiment(config) {
            Ok(outcome) => {
                print!("{}", outcome.table.render());
                failures += outcome.table.failures();
            }
            Err(e) => return exit_for(&e),
        }
    }
    if failures > 0 {
        ExitCode::from(EXIT_PARTIAL)
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    configure_threads()?;
    Ok(match cli.command {
        Command::Solve { config } => experiments(&[ExperimentConfig::load(&config)?]),
        Command::Oracle { config } => {
            let config = ExperimentConfig::load(&config)?;
            let diracs = config.problem.measure()?;
            let result = pogorelov_solve(&diracs, ORACLE_TOL);
            match result {
                Ok(r) => {
                    let json = serde_json::to_string_pretty(&r)?;
                    println!("{json}");
                    if let Some(dir) = &config.output {
                        std::fs::create_dir_all(dir)?;
                        std::fs::write(dir.join("oracle.json"), json)?;
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => exit_for(&e),
            }
        }
        Command::Convergence {
            problem,
            sizes,
            mode,
            output,
        } => {
            let mut config = ExperimentConfig::new(problem.parse::<Problem>()?, sizes, mode.parse::<Mode>()?);
            config.output = output;
            experiments(&[config])
        }
        Command::Compare { problem, size, output } => {
            let problem: Problem = problem.parse()?;
            let configs: Vec<ExperimentConfig> = [Mode::Aleksandrov, Mode::ViscosityBaseline]
                .into_iter()
                .map(|mode| {
                    let mut c = ExperimentConfig::new(problem.clone(), vec![size], mode);
                    c.output = output.as_ref().map(|d| d.join(mode.label()));
                    c
                })
                .collect();
            experiments(&configs)
        }
    })
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => exit_for(&e),
    }
}
