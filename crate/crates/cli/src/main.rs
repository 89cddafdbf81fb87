use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use vtube_cli::commands::{cmd_check, cmd_plot, cmd_simulate, SimulateOptions};
use vtube_cli::scenario::LogicName;

#[derive(Parser)]
#[command(name = "vtube", version, about = "Swarm passage through virtual tubes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum LogicArg {
    Direct,
    Modified,
    SingleV1,
    SingleV2,
}

impl From<LogicArg> for LogicName {
    fn from(l: LogicArg) -> Self {
        match l {
            LogicArg::Direct => LogicName::Direct,
            LogicArg::Modified => LogicName::Modified,
            LogicArg::SingleV1 => LogicName::SingleV1,
            LogicArg::SingleV2 => LogicName::SingleV2,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write trajectory, metrics, summary and snapshots.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        /// Replace the scenario's step, in seconds.
        #[arg(long)]
        dt_override: Option<f64>,
        #[arg(long, value_enum)]
        logic_override: Option<LogicArg>,
        /// Comma-separated simulated times in seconds.
        #[arg(long, value_delimiter = ',')]
        snapshot_times: Option<Vec<f64>>,
        /// Worker threads for command evaluation (0 = one per core).
        #[arg(long, default_value_t = 0)]
        threads: usize,
    },
    /// Validate a scenario and run the oracles on its geometry.
    Check {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Draw the distance curves and paths of a trace directory.
    Plot {
        /// Directory written by `simulate`.
        #[arg(long)]
        trace: PathBuf,
        /// SVG file for the distance plot; paths go to `<stem>_trajectories.svg`.
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout();
    let result = match cli.command {
        Command::Simulate {
            scenario,
            out,
            dt_override,
            logic_override,
            snapshot_times,
            threads,
        } => cmd_simulate(
            &SimulateOptions {
                scenario,
                out,
                dt_override,
                logic_override: logic_override.map(Into::into),
                snapshot_times,
                threads,
            },
            &mut stdout,
        ),
        Command::Check { scenario } => cmd_check(&scenario, &mut stdout),
        Command::Plot { trace, out } => cmd_plot(&trace, &out, &mut stdout),
    };
    match result {
        Ok(exit) => ExitCode::from(exit.code()),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
