use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use weavenet_core::data::{load_archive, split_dataset, TRAIN_FRACTION};
use weavenet_core::model::save_weights;
use weavenet_core::train::{loss_csv, EpochStats};
use weavenet_core::{DeinterlaceNet, NetConfig, Padding, TrainConfig, Trainer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PaddingArg {
    /// Out-of-range taps read the nearest edge pixel
    Replicate,
    /// Out-of-range taps read zero
    Zero,
}

impl From<PaddingArg> for Padding {
    fn from(p: PaddingArg) -> Self {
        match p {
            PaddingArg::Replicate => Padding::ReplicateSame,
            PaddingArg::Zero => Padding::ZeroSame,
        }
    }
}

fn defaults() -> (TrainConfig, NetConfig) {
    (TrainConfig::default(), NetConfig::default())
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
pub struct TrainArgs {
    /// Patch archive written by `synth --patches`
    pub archive: PathBuf,
    /// Final weights file
    #[arg(long, short, default_value = "weights.dinw")]
    pub out: PathBuf,
    /// ADAM learning rate
    #[arg(long, default_value_t = defaults().0.learning_rate)]
    pub lr: f64,
    /// ADAM first-moment decay
    #[arg(long, default_value_t = defaults().0.beta1)]
    pub beta1: f64,
    /// ADAM second-moment decay
    #[arg(long, default_value_t = defaults().0.beta2)]
    pub beta2: f64,
    /// ADAM epsilon
    #[arg(long, default_value_t = defaults().0.epsilon)]
    pub epsilon: f64,
    /// Weight of the total-variation term
    #[arg(long, default_value_t = defaults().0.tv_weight)]
    pub lambda_tv: f64,
    /// Total number of epochs
    #[arg(long, default_value_t = defaults().0.epochs)]
    pub epochs: u32,
    /// Minibatch size
    #[arg(long, default_value_t = defaults().0.batch_size)]
    pub batch: usize,
    /// Seed for initialization, the train/validation split and shuffling
    #[arg(long, default_value_t = defaults().0.seed)]
    pub seed: u64,
    /// Checkpoint file; training resumes from it when it exists
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Write the checkpoint every N epochs (0 disables periodic writes)
    #[arg(long, default_value_t = defaults().0.checkpoint_every)]
    pub checkpoint_every: u32,
    /// CSV of per-epoch training and validation loss
    #[arg(long)]
    pub loss_log: Option<PathBuf>,
    /// Convolution border handling
    #[arg(long, value_enum, default_value_t = PaddingArg::Replicate)]
    pub padding: PaddingArg,
    /// Channels of the shared layers
    #[arg(long, default_value_t = defaults().1.trunk_channels)]
    pub trunk_channels: usize,
    /// Channels of the first layer of each pathway
    #[arg(long, default_value_t = defaults().1.branch_channels)]
    pub branch_channels: usize,
    /// Fraction of patches used for training; the rest validate
    #[arg(long, default_value_t = TRAIN_FRACTION)]
    pub train_fraction: f64,
    /// key=value file of option defaults; command-line flags win
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl TrainArgs {
    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
            tv_weight: self.lambda_tv,
            epochs: self.epochs,
            batch_size: self.batch,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        }
    }

    fn net_config(&self) -> NetConfig {
        NetConfig {
            trunk_channels: self.trunk_channels,
            branch_channels: self.branch_channels,
            padding: self.padding.into(),
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction <= 1.0) {
            bail!("--train-fraction must be in (0, 1], got {}", self.train_fraction);
        }
        if self.batch == 0 {
            bail!("--batch must be positive");
        }
        if self.trunk_channels == 0 || self.branch_channels == 0 {
            bail!("channel counts must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            bail!("--lr must be positive, got {}", self.lr);
        }
        Ok(())
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).with_context(|| format!("cannot write {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("cannot write {}", path.display()))
}

fn resume_or_start(args: &TrainArgs) -> Result<Trainer> {
    if let Some(path) = args.checkpoint.as_ref().filter(|p| p.exists()) {
        let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
        let mut trainer =
            Trainer::from_checkpoint(&bytes).with_context(|| format!("cannot resume from {}", path.display()))?;
        trainer.config.epochs = args.epochs;
        trainer.config.checkpoint_every = args.checkpoint_every;
        println!(
            "train: resuming from {} after epoch {}",
            path.display(),
            trainer.epochs_completed()
        );
        return Ok(trainer);
    }
    let config = args.train_config();
    Ok(Trainer::new(
        DeinterlaceNet::init(args.net_config(), config.seed),
        config,
    ))
}

fn report(stats: &EpochStats, total: u32) {
    let val = stats.val_loss.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
    println!(
        "epoch {:>4}/{total}  train {:.6}  val {val}  {:.2}s",
        stats.epoch, stats.train_loss, stats.seconds
    );
}

pub fn run(args: &TrainArgs) -> Result<bool> {
    args.validate()?;
    let patches = load_archive(&args.archive).with_context(|| format!("cannot load {}", args.archive.display()))?;
    let mut trainer = resume_or_start(args)?;
    let c = trainer.config;
    let (train, val) = split_dataset(&patches, args.train_fraction, c.seed);
    if train.is_empty() {
        bail!(
            "{} holds {} patches; none left for training",
            args.archive.display(),
            patches.len()
        );
    }
    let net = trainer.net.config();
    println!(
        "train: lr={} beta1={} beta2={} eps={:e} lambda_tv={:e} epochs={} batch={} seed={} padding={} trunk={} branch={}",
        c.learning_rate,
        c.beta1,
        c.beta2,
        c.epsilon,
        c.tv_weight,
        c.epochs,
        c.batch_size,
        c.seed,
        match net.padding {
            Padding::ReplicateSame => "replicate",
            Padding::ZeroSame => "zero",
        },
        net.trunk_channels,
        net.branch_channels,
    );
    println!(
        "train: {} patches -> {} train / {} validation, {} parameters",
        patches.len(),
        train.len(),
        val.len(),
        trainer.net.param_count()
    );

    trainer.fit(&train, &val, |t, stats| -> Result<()> {
        report(stats, t.config.epochs);
        if let Some(path) = &args.checkpoint {
            if t.checkpoint_due() || t.epochs_completed() == t.config.epochs {
                write_atomic(path, &t.checkpoint())?;
            }
        }
        if let Some(path) = &args.loss_log {
            write_atomic(path, loss_csv(&t.history).as_bytes())?;
        }
        Ok(())
    })?;

    save_weights(&trainer.net, &args.out).with_context(|| format!("cannot write {}", args.out.display()))?;
    if let Some(path) = &args.loss_log {
        write_atomic(path, loss_csv(&trainer.history).as_bytes())?;
    }
    println!(
        "train: {} epochs, final train loss {:.6} -> {}",
        trainer.epochs_completed(),
        trainer.net.meta.final_loss,
        args.out.display()
    );
    Ok(true)
}
