mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use advar::vae::Interpolation;
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::EvalMode;
use config::ExperimentConfig;
use error::CliResult;

#[derive(Parser)]
#[command(name = "advar", version, about = "Split-inference interception and latent-space attack lab")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed; every stage derives its randomness from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> CliResult<ExperimentConfig> {
        ExperimentConfig::load(&self.config, self.seed, self.out.as_deref())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpolationArg {
    Lerp,
    Slerp,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Train the victim classifier and record its held-out accuracy.
    TrainModel(Common),
    /// Stream traffic through the split model behind a passive tap.
    Capture {
        #[command(flatten)]
        common: Common,
        /// Also write the true labels next to the capture, for class-tagged studies.
        #[arg(long)]
        by_class: bool,
    },
    /// Train the attacker VAE on the capture and encode its latent pool.
    TrainVae(Common),
    /// Sweep the attack strength and score the server's predictions.
    AttackEval {
        #[command(flatten)]
        common: Common,
        /// Interpolation operator; `both` runs a paired comparison.
        #[arg(long, value_enum)]
        interpolation: Option<InterpolationArg>,
        /// Capture budgets for a budget study, e.g. `200,2000,4000`.
        #[arg(long, value_delimiter = ',', conflicts_with = "interpolation")]
        budget: Option<Vec<usize>>,
    },
    /// Cluster captures and report how separable their sources are.
    Feasibility {
        #[command(flatten)]
        common: Common,
        /// Capture files to compare (overrides the config list).
        #[arg(long, num_args = 1..)]
        captures: Vec<PathBuf>,
        /// Cluster one labelled capture by output class instead.
        #[arg(long)]
        by_class: bool,
    },
    /// Write a synthetic CIFAR-10-format train/test pair.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 4000)]
        train: usize,
        #[arg(long, default_value_t = 500)]
        test: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn run(command: Command) -> CliResult<serde_json::Value> {
    match command {
        Command::TrainModel(c) => commands::train(&c.load()?),
        Command::Capture { common, by_class } => commands::capture(&common.load()?, by_class),
        Command::TrainVae(c) => commands::train_vae_cmd(&c.load()?),
        Command::AttackEval { common, interpolation, budget } => {
            let config = common.load()?;
            let mode = match (budget, interpolation) {
                (Some(b), _) => EvalMode::Budget(b),
                (None, Some(InterpolationArg::Both)) => EvalMode::Both,
                (None, Some(InterpolationArg::Lerp)) => EvalMode::Single(Interpolation::Lerp),
                (None, Some(InterpolationArg::Slerp)) => EvalMode::Single(Interpolation::Slerp),
                (None, None) => EvalMode::Single(config.attack.interpolation),
            };
            commands::attack_eval(&config, mode)
        }
        Command::Feasibility { common, captures, by_class } => {
            commands::feasibility(&common.load()?, &captures, by_class)
        }
        Command::SynthData { out, train, test, seed } => commands::synth_data(&out, train, test, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::FAILURE
        }
    }
}
