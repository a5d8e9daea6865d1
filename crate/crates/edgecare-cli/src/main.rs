//! `edgecare` — command-line front end for the home activity pipeline:
//! synthetic stream generation, cloud pre-training, edge fine-tuning under
//! freeze policies, parameter-budget reports, the home/cloud/caregiver
//! discrete-event simulation, and stream evaluation.
//!
//! Errors leave as one JSON line on stderr and a classed exit code:
//! 2 for configuration problems, 3 for bad input data, 4 for violated
//! internal invariants. Set `EDGECARE_LOG=info` (or `debug`) for progress
//! logging; the default is `error`.

mod manifest;
mod ops;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn to_json_line(&self) -> String {
        let (kind, msg) = match self {
            CliError::Config(m) => ("config", m),
            CliError::Data(m) => ("data", m),
            CliError::Internal(m) => ("internal", m),
        };
        serde_json::json!({ "error": kind, "message": msg }).to_string()
    }
}

/// Sorts a core error into the CLI's three exit classes. Anything that a
/// different flag, config document, or policy name would fix is `Config`;
/// anything a different input file would fix is `Data`; the rest means a
/// broken invariant inside the pipeline itself.
pub fn classify(err: edgecare_core::Error) -> CliError {
    use edgecare_core::Error as E;
    let msg = err.to_string();
    match err {
        E::InvalidGeneratorSpec(_)
        | E::InvalidScenario(_)
        | E::BadSplitFraction(_)
        | E::ZeroWindowParam
        | E::StrideExceedsWindow { .. }
        | E::UnknownLayer(_)
        | E::UnknownBlock(_)
        | E::FrozenClassHead(_)
        | E::TooFewClasses(_)
        | E::InvalidClassIndex { .. } => CliError::Config(msg),
        E::StreamFile(_)
        | E::Checkpoint(_)
        | E::Io(_)
        | E::EmptyDataset
        | E::DegenerateStream
        | E::SplitClassEmpty(_)
        | E::StreamShorterThanWindow { .. }
        | E::LabelOutOfRange { .. }
        | E::ClassCountMismatch { .. }
        | E::EvalLengthMismatch { .. } => CliError::Data(msg),
        _ => CliError::Internal(msg),
    }
}

/// Global flags shared by every subcommand.
pub struct Common {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Preset {
    Source,
    Target,
}

#[derive(Parser)]
#[command(name = "edgecare", version, about = "Privacy-preserving home activity recognition pipeline", propagate_version = true)]
struct Cli {
    /// JSON settings document; its shape depends on the subcommand
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Root seed; required for any run that draws random numbers
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    /// Output directory; created if needed, refused if it holds a different run
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled frame stream
    Datagen {
        /// Built-in generator spec when no --config is given
        #[arg(long, value_enum, default_value_t = Preset::Source)]
        preset: Preset,
        /// Sliding windows of activity per class in the schedule
        #[arg(long, default_value_t = 24)]
        windows_per_class: usize,
        /// Window length the schedule is sized for
        #[arg(long, default_value_t = 8)]
        window_len: usize,
    },
    /// Pre-train a model from scratch on a labeled stream
    Train {
        /// Labeled stream file to train on
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Override the configured epoch count; 0 saves the bare initialization
        #[arg(long)]
        epochs: Option<usize>,
        /// JSON array of class names
        #[arg(long, value_name = "FILE")]
        classes: Option<PathBuf>,
    },
    /// Adapt a checkpoint to a new label space under a freeze policy
    Finetune {
        /// Pre-trained checkpoint to start from
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Labeled stream file to adapt to
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Freeze policy: case1, case2, case3, or a policy JSON file
        #[arg(long)]
        policy: Option<String>,
        /// Override the configured epoch count
        #[arg(long)]
        epochs: Option<usize>,
        /// JSON array of class names
        #[arg(long, value_name = "FILE")]
        classes: Option<PathBuf>,
    },
    /// Report trainable/frozen parameter counts per freeze policy
    Budget {
        /// Report a single policy instead of all three
        #[arg(long)]
        policy: Option<String>,
        /// Count an existing checkpoint instead of the reference architecture
        #[arg(long, value_name = "FILE", alias = "model")]
        checkpoint: Option<PathBuf>,
        /// Class-head width of the reference architecture
        #[arg(long, default_value_t = 5)]
        classes: usize,
    },
    /// Run the home/cloud/caregiver discrete-event simulation
    Simulate {
        /// Scenario document; equivalent to --config, and wins if both are given
        #[arg(long, value_name = "FILE")]
        scenario: Option<PathBuf>,
        /// Stream raw frames to the cloud instead of inferring on-device
        #[arg(long)]
        baseline: bool,
    },
    /// Score a checkpoint against a labeled stream
    Evaluate {
        /// Checkpoint to evaluate
        #[arg(long, value_name = "FILE")]
        model: PathBuf,
        /// Labeled stream file with ground truth
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Sliding-window length in frames
        #[arg(long, default_value_t = 8)]
        window_len: usize,
        /// Sliding-window stride in frames
        #[arg(long, default_value_t = 4)]
        stride: usize,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("EDGECARE_LOG", "error"))
        .format_timestamp(None)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                _ => {
                    let err = CliError::Config(e.to_string());
                    eprintln!("{}", err.to_json_line());
                    ExitCode::from(err.exit_code())
                }
            };
        }
    };

    let Cli {
        config,
        seed,
        out,
        command,
    } = cli;
    let common = Common { config, seed, out };

    let result = match command {
        Command::Datagen {
            preset,
            windows_per_class,
            window_len,
        } => ops::datagen(&common, preset, windows_per_class, window_len),
        Command::Train {
            data,
            epochs,
            classes,
        } => ops::train(&common, &data, epochs, classes.as_deref()),
        Command::Finetune {
            model,
            data,
            policy,
            epochs,
            classes,
        } => ops::finetune(&common, &model, &data, policy, epochs, classes.as_deref()),
        Command::Budget {
            policy,
            checkpoint,
            classes,
        } => ops::budget(&common, policy, checkpoint.as_deref(), classes),
        Command::Simulate { scenario, baseline } => {
            ops::simulate(&common, scenario.as_deref(), baseline)
        }
        Command::Evaluate {
            model,
            data,
            window_len,
            stride,
        } => ops::evaluate_cmd(&common, &model, &data, window_len, stride),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code())
        }
    }
}
