use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use fairmac_cli::config::{load_config, ConfigError, RunConfig};
use fairmac_cli::{runner, scenarios};
use fairmac_core::environment::solve_p2_reference;

#[derive(Parser)]
#[command(name = "fairmac", version, about = "Fair multi-channel scheduling simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every scheduler x seed in a config and write CSV output.
    Run { config: PathBuf },
    /// Print the offline optimum for each segment of a config.
    Oracle { config: PathBuf },
    /// Shipped change-point presets.
    Scenarios {
        #[command(subcommand)]
        action: ScenariosCommand,
    },
}

#[derive(Subcommand)]
enum ScenariosCommand {
    /// List the presets and where their configs live.
    List,
}

enum AppError {
    Config(ConfigError),
    Runtime(anyhow::Error),
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e)
    }
}

impl From<anyhow::Error> for AppError {
    fn from(e: anyhow::Error) -> Self {
        AppError::Runtime(e)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            eprint!("{e}");
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(AppError::Config(e)) => {
            eprintln!("config error: {e}");
            ExitCode::from(1)
        }
        Err(AppError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Run { config } => run(&load_config(&config)?),
        Command::Oracle { config } => oracle(&load_config(&config)?),
        Command::Scenarios { action: ScenariosCommand::List } => {
            for scenario in &scenarios::SCENARIOS {
                println!(
                    "scenario {} ({}): {} [configs/scenario{}.conf]",
                    scenario.number, scenario.name, scenario.summary, scenario.number
                );
            }
            Ok(())
        }
    }
}

fn run(config: &RunConfig) -> Result<(), AppError> {
    let output = runner::run_experiment(config)?;
    for row in output.rows.iter().filter(|row| row.seed.is_none()) {
        println!(
            "{} segment {}: phi_star = {:.6}, mean final utility = {:.6}, gap = {:.6}",
            row.scheduler, row.segment, row.phi_star, row.utility_final, row.gap
        );
    }
    println!(
        "wrote {} trace file(s) and {}",
        output.trace_paths.len(),
        output.summary_path.display()
    );
    Ok(())
}

fn oracle(config: &RunConfig) -> Result<(), AppError> {
    for (k, segment) in config.schedule.segments().iter().enumerate() {
        let solution = solve_p2_reference(&segment.q, &config.utility)
            .map_err(|e| AppError::Runtime(e.into()))?;
        let (lo, hi) = config.schedule.segment_bounds(k);
        println!("segment {} (slots {lo}..={hi})", k + 1);
        println!("  phi_star = {:.9}", solution.phi_star);
        let gamma: Vec<String> =
            solution.gamma_star.iter().map(|g| format!("{g:.9}")).collect();
        println!("  gamma_star = [{}]", gamma.join(", "));
        println!("  p_star (padded to {0}x{0}):", config.s());
        for i in 0..solution.p_star.rows() {
            let row: Vec<String> =
                solution.p_star.row(i).iter().map(|p| format!("{p:.6}")).collect();
            println!("    {}", row.join(" "));
        }
    }
    Ok(())
}
