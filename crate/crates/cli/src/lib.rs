//! Command-line front end: evaluation, labeling, preference pairs, the toy
//! SFT/TPO experiment, completion parsing and synthetic fixtures.
//!
//! Exit codes are shared by every command: 0 on success, 1 when an input
//! file cannot be read or parsed or a computation fails, 2 when arguments,
//! configs or records fail validation.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;

use clap::{ArgAction, Args, Parser, Subcommand, ValueEnum};

pub use output::Record;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub const INPUT: i32 = 1;
    pub const VALIDATION: i32 = 2;

    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: Self::INPUT,
            message: message.into(),
        }
    }

    pub fn validation(message: impl Into<String>) -> Self {
        Self {
            code: Self::VALIDATION,
            message: message.into(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

#[derive(Debug, Parser)]
#[command(name = "trajplan", version, about = "Trajectory planning evaluation and toy preference optimization")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Evaluation protocol.
    #[arg(long, global = true, value_enum, default_value_t = ProtocolArg::All)]
    pub protocol: ProtocolArg,
    /// Seed for every random choice; commands default to 0.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Output file (output directory for `train`); stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Progress on stderr; repeat for more.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

impl GlobalArgs {
    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub(crate) fn log(&self, level: u8, msg: impl FnOnce() -> String) {
        if self.verbose >= level {
            eprintln!("{}", msg());
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Stp3,
    Uniad,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Records,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormulationArg {
    Local,
    Cumulative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScoringArg {
    PerSecond,
    AllSteps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    Sft,
    Tpo,
    #[value(name = "sft+tpo")]
    SftTpo,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// L2 and collision metrics of predictions against a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// JSON lines `{"sample_id": ..., "trajectory": [[x, y], ...]}`.
        #[arg(long)]
        predictions: PathBuf,
    },
    /// Rule-based meta-action labels for every record.
    Label {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = FormulationArg::Local)]
        formulation: FormulationArg,
        /// Estimate poses from the ground-truth trajectory for records that
        /// carry none.
        #[arg(long)]
        derive_from_trajectory: bool,
    },
    /// Samples K responses per record from a policy and builds preference
    /// pairs.
    Pairs {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(short = 'k', long, default_value_t = 16)]
        k: usize,
        #[arg(long, default_value_t = 1.5)]
        temperature: f64,
        #[arg(long, value_enum, default_value_t = ScoringArg::PerSecond)]
        scoring: ScoringArg,
    },
    /// Runs the toy SFT / TPO experiment described by a JSON config.
    Train {
        #[arg(long, value_enum)]
        mode: TrainMode,
        #[arg(long)]
        config: PathBuf,
    },
    /// Parses a model completion and prints it in normalized form.
    Parse { file: PathBuf },
    /// Writes a synthetic dataset with occupancy files.
    GenSynthetic {
        #[arg(long)]
        n: usize,
    },
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { CliError::VALIDATION } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), CliError> {
    match cli.global.jobs {
        Some(0) => Err(CliError::validation("--jobs must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::input(format!("cannot start worker pool: {e}")))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    let g = &cli.global;
    match &cli.command {
        Command::Eval { dataset, predictions } => commands::eval(g, dataset, predictions),
        Command::Label {
            dataset,
            formulation,
            derive_from_trajectory,
        } => commands::label(g, dataset, *formulation, *derive_from_trajectory),
        Command::Pairs {
            dataset,
            policy,
            k,
            temperature,
            scoring,
        } => commands::pairs(g, dataset, policy, *k, *temperature, *scoring),
        Command::Train { mode, config } => commands::train(g, *mode, config),
        Command::Parse { file } => commands::parse(g, file),
        Command::GenSynthetic { n } => commands::gen_synthetic(g, *n),
    }
}
