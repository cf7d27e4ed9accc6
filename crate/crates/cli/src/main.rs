use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use crowdvote_cli::commands::{self, AuditedMechanism, EpsilonChoice, EquilibriumOptions, RunOptions};
use crowdvote_cli::output::write_csv;
use crowdvote_cli::{CliError, ResultsRow, ScenarioConfig, EXIT_OK};
use crowdvote_core::engine::EnumerationMode;
use crowdvote_core::equilibrium::DEFAULT_BUDGET;

#[derive(Parser)]
#[command(name = "crowdvote", version, about = "Wisdom-of-the-crowd voting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario config.
    Validate { config: PathBuf },
    /// Monte Carlo run of the truthful profile.
    Simulate {
        config: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact outcome probabilities by enumeration.
    Exact {
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Auto)]
        enumeration: Mode,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive coalition deviation search over a report grid.
    Equilibrium {
        config: PathBuf,
        /// Extra grid values; 0, 1 and the truthful values are always included.
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
        #[arg(long)]
        max_coalition: Option<usize>,
        /// `auto` or a number.
        #[arg(long, default_value = "auto")]
        epsilon: String,
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        /// Also check dominance for every F and U agent.
        #[arg(long)]
        dominance: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Impossibility numerics and counterexample audit.
    Impossibility {
        #[arg(long = "t")]
        t: usize,
        #[arg(long, value_enum, default_value_t = Audited::Map)]
        mechanism: Audited,
    },
    /// Simulations over several population sizes.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        t_values: Vec<usize>,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mechanism: Option<String>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
}

impl From<RunArgs> for RunOptions {
    fn from(a: RunArgs) -> Self {
        RunOptions {
            trials: a.trials,
            seed: a.seed,
            mechanism: a.mechanism,
            tau: a.tau,
            threads: a.threads,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Auto,
    Full,
    Counts,
}

#[derive(Clone, Copy, ValueEnum)]
enum Audited {
    Map,
    ConstantAccept,
    ConstantReject,
}

fn emit(rows: &[ResultsRow], out: Option<PathBuf>) -> Result<u8, CliError> {
    match out {
        Some(path) => {
            let f = File::create(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            write_csv(rows, BufWriter::new(f))?;
        }
        None => write_csv(rows, io::stdout().lock())?,
    }
    Ok(EXIT_OK)
}

fn run(cli: Cli) -> Result<u8, CliError> {
    match cli.command {
        Command::Validate { config } => {
            let text = commands::validate(&ScenarioConfig::load(&config)?)?;
            print!("{text}");
            Ok(EXIT_OK)
        }
        Command::Simulate { config, run, out } => {
            let rows = commands::simulate(&ScenarioConfig::load(&config)?, &run.into())?;
            emit(&rows, out)
        }
        Command::Exact {
            config,
            enumeration,
            run,
            out,
        } => {
            let mode = match enumeration {
                Mode::Auto => EnumerationMode::Auto,
                Mode::Full => EnumerationMode::Full,
                Mode::Counts => EnumerationMode::Counts,
            };
            let rows = commands::exact(&ScenarioConfig::load(&config)?, &run.into(), mode)?;
            emit(&rows, out)
        }
        Command::Equilibrium {
            config,
            grid,
            max_coalition,
            epsilon,
            budget,
            dominance,
            run,
        } => {
            let epsilon = match epsilon.as_str() {
                "auto" => EpsilonChoice::Auto,
                v => EpsilonChoice::Value(
                    v.parse()
                        .map_err(|_| CliError::Parse(format!("--epsilon expects `auto` or a number, got `{v}`")))?,
                ),
            };
            let opts = EquilibriumOptions {
                run: run.into(),
                grid,
                max_coalition,
                epsilon,
                budget,
                dominance,
            };
            let outcome = commands::equilibrium(&ScenarioConfig::load(&config)?, &opts)?;
            print!("{}", outcome.report);
            Ok(outcome.exit_code())
        }
        Command::Impossibility { t, mechanism } => {
            let audited = match mechanism {
                Audited::Map => AuditedMechanism::Map,
                Audited::ConstantAccept => AuditedMechanism::ConstantAccept,
                Audited::ConstantReject => AuditedMechanism::ConstantReject,
            };
            let (code, text) = commands::impossibility(t, audited)?;
            print!("{text}");
            Ok(code)
        }
        Command::Sweep {
            config,
            t_values,
            run,
            out,
        } => {
            let rows = commands::sweep(&ScenarioConfig::load(&config)?, &t_values, &run.into())?;
            emit(&rows, out)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() {
                crowdvote_cli::EXIT_PARSE
            } else {
                EXIT_OK
            });
        }
    };
    match run(cli) {
        Ok(code) => {
            let _ = io::stdout().flush();
            ExitCode::from(code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
