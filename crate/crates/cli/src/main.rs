use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eeg2image_cli::ablate::{cmd_ablate, AblationRegime};
use eeg2image_cli::commands::{self, Inputs};
use eeg2image_cli::config::{Regime, RunConfig};
use eeg2image_cli::{configure_threads, exit_code, UsageError};

#[derive(Parser)]
#[command(name = "eeg2image", version, about = "EEG-conditioned image synthesis experiments")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic paired EEG/image dataset.
    SynthData(SynthArgs),
    /// Train the EEG encoder (triplet or softmax regime).
    TrainEncoder(EncoderArgs),
    /// Train the conditional GAN on top of a trained encoder.
    TrainGan(GanArgs),
    /// Run the mode-seeking × augmentation ablation grid.
    Ablate(AblateArgs),
    /// Score a trained generator.
    Evaluate(EvalArgs),
    /// Write a grid of generated images, one row per class.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    per_class: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    timesteps: Option<usize>,
    #[arg(long)]
    image_size: Option<usize>,
}

/// Dataset directory; without one the configured synthetic dataset is used.
#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct CheckpointArgs {
    /// Encoder checkpoint directory [default: <out>/encoder].
    #[arg(long)]
    encoder: Option<PathBuf>,
    /// Surrogate classifier directory, trained if absent [default: <out>/surrogate].
    #[arg(long)]
    classifier: Option<PathBuf>,
}

#[derive(Args)]
struct EncoderArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    regime: Option<Regime>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct GanFlags {
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    #[arg(long)]
    eval_every: Option<usize>,
    #[arg(long)]
    sample_every: Option<usize>,
    #[arg(long)]
    checkpoint_every: Option<usize>,
}

#[derive(Args)]
struct GanArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    ckpt: CheckpointArgs,
    #[command(flatten)]
    gan: GanFlags,
    /// Mode-seeking regularization.
    #[arg(long)]
    use_ms: Option<bool>,
    /// Differentiable augmentation.
    #[arg(long)]
    use_aug: Option<bool>,
}

#[derive(Args)]
struct AblateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    ckpt: CheckpointArgs,
    #[command(flatten)]
    gan: GanFlags,
    /// Comma-separated subset of none, ms_only, aug_only, both.
    #[arg(long, value_delimiter = ',')]
    regimes: Option<Vec<AblationRegime>>,
}

#[derive(Args)]
struct EvalArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    ckpt: CheckpointArgs,
    /// Generator checkpoint directory [default: <out>/checkpoints/generator].
    #[arg(long)]
    generator: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    encoder: Option<PathBuf>,
    #[arg(long)]
    generator: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    per_class: usize,
    /// PNG path [default: <out>/generated.png].
    #[arg(long)]
    output: Option<PathBuf>,
}

fn set<T>(field: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *field = v;
    }
}

impl DataArgs {
    fn apply(self, cfg: &mut RunConfig) {
        if self.data.is_some() {
            cfg.data.path = self.data;
        }
    }
}

impl GanFlags {
    fn apply(self, cfg: &mut RunConfig) {
        let g = &mut cfg.gan;
        set(&mut g.steps, self.steps);
        set(&mut g.batch_size, self.batch_size);
        set(&mut g.base_channels, self.base_channels);
        set(&mut g.eval_every, self.eval_every);
        set(&mut g.sample_every, self.sample_every);
        set(&mut g.checkpoint_every, self.checkpoint_every);
    }
}

fn inputs(ckpt: CheckpointArgs, generator: Option<PathBuf>) -> Inputs {
    Inputs { encoder: ckpt.encoder, classifier: ckpt.classifier, generator }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    set(&mut cfg.seed, cli.seed);
    set(&mut cfg.out, cli.out);
    match cli.command {
        Command::SynthData(a) => {
            let s = &mut cfg.data.synth;
            set(&mut s.classes, a.classes);
            set(&mut s.per_class, a.per_class);
            set(&mut s.channels, a.channels);
            set(&mut s.timesteps, a.timesteps);
            set(&mut s.image_size, a.image_size);
            // the dataset seed follows --seed directly here
            if cli.seed.is_some() {
                s.seed = cli.seed;
            }
            commands::cmd_synth_data(&cfg)?;
        }
        Command::TrainEncoder(a) => {
            a.data.apply(&mut cfg);
            set(&mut cfg.encoder.regime, a.regime);
            set(&mut cfg.encoder.epochs, a.epochs);
            commands::cmd_train_encoder(&cfg)?;
        }
        Command::TrainGan(a) => {
            a.data.apply(&mut cfg);
            a.gan.apply(&mut cfg);
            set(&mut cfg.gan.use_ms, a.use_ms);
            set(&mut cfg.gan.use_aug, a.use_aug);
            commands::cmd_train_gan(&cfg, &inputs(a.ckpt, None))?;
        }
        Command::Ablate(a) => {
            a.data.apply(&mut cfg);
            a.gan.apply(&mut cfg);
            let regimes = a.regimes.unwrap_or_else(|| AblationRegime::ALL.to_vec());
            let summary = cmd_ablate(&cfg, &inputs(a.ckpt, None), &regimes)?;
            if summary.failures() > 0 {
                anyhow::bail!("{} of {} ablation regimes failed", summary.failures(), summary.rows.len());
            }
        }
        Command::Evaluate(a) => {
            a.data.apply(&mut cfg);
            commands::cmd_evaluate(&cfg, &inputs(a.ckpt, a.generator))?;
        }
        Command::Generate(a) => {
            a.data.apply(&mut cfg);
            let output = a.output.unwrap_or_else(|| cfg.out.join("generated.png"));
            let inputs = Inputs { encoder: a.encoder, classifier: None, generator: a.generator };
            commands::cmd_generate(&cfg, &inputs, a.per_class, &output)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // clap exits with status 2 on usage errors
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            if e.downcast_ref::<UsageError>().is_some() {
                eprintln!("usage error: {e:#}");
            } else {
                eprintln!("error: {e:#}");
            }
            ExitCode::from(code as u8)
        }
    }
}
