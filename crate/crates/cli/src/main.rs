use std::path::PathBuf;
use std::process::ExitCode;

use advspeech::defense::Variant;
use advspeech_cli::{CliError, ExperimentConfig, Runner};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(
    name = "advspeech",
    version,
    about = "Adversarial attacks and defenses on a toy speech recognizer"
)]
struct Cli {
    /// Experiment config (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-utterance stages.
    #[arg(long, global = true, env = "ADVSPEECH_WORKERS")]
    workers: Option<usize>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Redo stages whose outputs already exist.
    #[arg(long, global = true)]
    overwrite: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize the corpus.
    SynthCorpus,
    /// Train the baseline recognizer on clean data.
    TrainAsr,
    /// Generate offline attack datasets (training and held-out).
    GenAttacks,
    /// Train the denoiser on offline attacks.
    TrainDenoiser,
    /// Adversarial fine-tuning.
    Finetune {
        #[arg(long, value_enum, default_value = "all")]
        variant: VariantArg,
    },
    /// Run the evaluation grid and write the result tables.
    Evaluate,
    /// Every stage, in order.
    Pipeline,
    /// Print the resolved configuration and exit.
    ShowConfig,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VariantArg {
    AsrOnly,
    Joint,
    JointFrozen,
    All,
}

impl VariantArg {
    fn variants(self) -> Vec<Variant> {
        match self {
            VariantArg::AsrOnly => vec![Variant::AsrOnly],
            VariantArg::Joint => vec![Variant::Joint],
            VariantArg::JointFrozen => vec![Variant::JointFrozen],
            VariantArg::All => vec![Variant::AsrOnly, Variant::Joint, Variant::JointFrozen],
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    if let Command::ShowConfig = cli.command {
        cfg.validate()?;
        print!("{}", cfg.to_toml()?);
        return Ok(());
    }
    let mut runner = Runner::new(cfg, cli.overwrite)?;
    match cli.command {
        Command::SynthCorpus => runner.synth_corpus(),
        Command::TrainAsr => runner.train_asr(),
        Command::GenAttacks => runner.gen_attacks(),
        Command::TrainDenoiser => runner.train_denoiser(),
        Command::Finetune { variant } => variant
            .variants()
            .into_iter()
            .try_for_each(|v| runner.finetune(v)),
        Command::Evaluate => runner.evaluate().map(|_| ()),
        Command::Pipeline => runner.pipeline().map(|_| ()),
        Command::ShowConfig => unreachable!(),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
