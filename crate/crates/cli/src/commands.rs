//! One function per subcommand. Each takes a resolved [`RunConfig`] and
//! writes its outputs, plus the config echo, under `cfg.out`.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use eeg2image::cgan::{evaluate_generator, sample_grid, train_gan, GanEval, GanRun, GanRunOptions, Generator};
use eeg2image::dataio::{
    load_dataset, normalize_dataset, save_dataset, synthesize_dataset, PairedDataset, SplitKind, MANIFEST_FILE,
};
use eeg2image::encoder::{train_classifier_baseline, train_encoder, write_encoder_log, EncoderModel, TrainedEncoder};
use eeg2image::metrics::{
    export_embedding_2d, kmeans_accuracy, train_surrogate_classifier, ClassScore, Classifier, KMeansConfig,
    ScoreReport, SurrogateClassifier,
};
use eeg2image::seed;

use crate::config::{Regime, RunConfig};
use crate::UsageError;

pub const ENCODER_DIR: &str = "encoder";
pub const CLASSIFIER_DIR: &str = "surrogate";
pub const GENERATOR_DIR: &str = "checkpoints/generator";
pub const SCORE_REPORT: &str = "score_report.json";
pub const PER_CLASS_IS: &str = "per_class_is.csv";
pub const EMBEDDING_CSV: &str = "embedding_2d.csv";

/// Checkpoint locations; unset entries default to directories under `out`.
#[derive(Clone, Debug, Default)]
pub struct Inputs {
    pub encoder: Option<PathBuf>,
    pub classifier: Option<PathBuf>,
    pub generator: Option<PathBuf>,
}

impl Inputs {
    pub fn encoder(&self, out: &Path) -> PathBuf {
        self.encoder.clone().unwrap_or_else(|| out.join(ENCODER_DIR))
    }

    pub fn classifier(&self, out: &Path) -> PathBuf {
        self.classifier.clone().unwrap_or_else(|| out.join(CLASSIFIER_DIR))
    }

    pub fn generator(&self, out: &Path) -> PathBuf {
        self.generator.clone().unwrap_or_else(|| out.join(GENERATOR_DIR))
    }
}

fn training_echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config is serializable")
}

/// The configured dataset, stored or synthetic, optionally normalized.
pub fn dataset(cfg: &RunConfig) -> anyhow::Result<PairedDataset> {
    let ds = match &cfg.data.path {
        Some(path) => load_dataset(path).with_context(|| format!("loading dataset {}", path.display()))?,
        None => synthesize_dataset(&cfg.data.synth.spec(cfg.seed))?,
    };
    Ok(if cfg.data.normalize { normalize_dataset(&ds)? } else { ds })
}

pub fn cmd_synth_data(cfg: &RunConfig) -> anyhow::Result<PairedDataset> {
    let ds = synthesize_dataset(&cfg.data.synth.spec(cfg.seed))?;
    save_dataset(&ds, &cfg.out)?;
    cfg.write_echo(&cfg.out)?;
    log::info!(
        "wrote {} EEG windows ({} train, {} test) and {} images to {}",
        ds.eeg.len(),
        ds.eeg.train.len(),
        ds.eeg.test.len(),
        ds.images.len(),
        cfg.out.display()
    );
    Ok(ds)
}

pub fn cmd_train_encoder(cfg: &RunConfig) -> anyhow::Result<TrainedEncoder> {
    let ds = dataset(cfg)?;
    cfg.write_echo(&cfg.out)?;
    let train_cfg = cfg.encoder_train();
    let trained = match cfg.encoder.regime {
        Regime::Triplet => train_encoder(&ds, &train_cfg, cfg.seed)?,
        Regime::Softmax => train_classifier_baseline(&ds, &train_cfg, cfg.seed)?,
    };
    trained.model.save(&cfg.out.join(ENCODER_DIR), &training_echo(cfg))?;
    write_encoder_log(&cfg.out.join("encoder_log.csv"), &trained.log, cfg.encoder.regime == Regime::Softmax)?;
    if let Some(last) = trained.log.last() {
        log::info!(
            "encoder ({:?}) epoch {}: loss {:.4}, test k-means accuracy {:.3}",
            cfg.encoder.regime,
            last.epoch,
            last.loss,
            last.test_kmeans_acc
        );
    }
    Ok(trained)
}

pub fn load_encoder(path: &Path) -> anyhow::Result<EncoderModel> {
    EncoderModel::load(path).with_context(|| format!("loading encoder checkpoint {}", path.display()))
}

pub fn load_generator(path: &Path) -> anyhow::Result<Generator> {
    Generator::load(path).with_context(|| format!("loading generator checkpoint {}", path.display()))
}

/// Loads the surrogate classifier at `path`, or trains and saves one there.
pub fn classifier(cfg: &RunConfig, ds: &PairedDataset, path: &Path) -> anyhow::Result<SurrogateClassifier> {
    if path.join(MANIFEST_FILE).exists() {
        return SurrogateClassifier::load(path).with_context(|| format!("loading classifier {}", path.display()));
    }
    let clf = train_surrogate_classifier(ds, &cfg.metrics.surrogate, cfg.seed)?;
    log::info!("surrogate classifier test accuracy {:.3}", clf.test_accuracy.unwrap_or(f64::NAN));
    clf.save(path)?;
    Ok(clf)
}

pub fn cmd_train_gan(cfg: &RunConfig, inputs: &Inputs) -> anyhow::Result<GanRun> {
    let ds = dataset(cfg)?;
    let encoder = load_encoder(&inputs.encoder(&cfg.out))?;
    cfg.write_echo(&cfg.out)?;
    let clf = classifier(cfg, &ds, &inputs.classifier(&cfg.out))?;
    train_gan_run(cfg, &ds, &encoder, &clf, &cfg.out)
}

/// GAN training into `out_dir` with periodic evaluation under `clf`.
pub fn train_gan_run(
    cfg: &RunConfig,
    ds: &PairedDataset,
    encoder: &EncoderModel,
    clf: &dyn Classifier,
    out_dir: &Path,
) -> anyhow::Result<GanRun> {
    let opts = GanRunOptions {
        out_dir: Some(out_dir.to_path_buf()),
        classifier: Some(clf),
        config_echo: training_echo(cfg),
    };
    let run = train_gan(ds, encoder, &cfg.gan_train(), cfg.seed, &opts)?;
    Ok(run)
}

/// Test-split k-means accuracy of the encoder, when there are enough
/// held-out windows to form one cluster per class.
pub fn encoder_kmeans(cfg: &RunConfig, ds: &PairedDataset, encoder: &EncoderModel) -> anyhow::Result<Option<f64>> {
    let test: Vec<_> = ds.eeg.get(SplitKind::Test).iter().collect();
    if test.len() < ds.num_classes {
        log::warn!("{} held-out windows for {} classes; skipping k-means accuracy", test.len(), ds.num_classes);
        return Ok(None);
    }
    let emb = encoder.embed(&test)?;
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    let kcfg = KMeansConfig { restarts: cfg.metrics.kmeans_restarts, ..KMeansConfig::default() };
    let (acc, _) = kmeans_accuracy(&emb, &labels, ds.num_classes, kcfg, seed::sub_seed(cfg.seed, "metrics"))?;
    Ok(Some(acc))
}

pub struct Evaluation {
    pub report: ScoreReport,
    pub per_class: Vec<ClassScore>,
}

/// Scores a generator and writes the report, per-class table and embedding
/// projection into `dir`.
pub fn evaluate_into(
    cfg: &RunConfig,
    ds: &PairedDataset,
    encoder: &EncoderModel,
    generator: &Generator,
    clf: &dyn Classifier,
    dir: &Path,
) -> anyhow::Result<Evaluation> {
    let eval_cfg = cfg.gan_train().eval;
    let GanEval { is_mean, is_std, class_consistency, diversity, per_class } =
        evaluate_generator(generator, ds, encoder, clf, &eval_cfg, seed::sub_seed(cfg.seed, "metrics"))?;
    let report = ScoreReport {
        is_mean,
        is_std,
        kmeans_acc: encoder_kmeans(cfg, ds, encoder)?,
        class_consistency,
        diversity,
        classifier: clf.describe(),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    report.write_json(&dir.join(SCORE_REPORT))?;
    let mut w = csv::Writer::from_path(dir.join(PER_CLASS_IS))?;
    w.write_record(["class", "is_mean", "is_sd"])?;
    for c in &per_class {
        w.write_record([c.class.clone(), c.is_mean.to_string(), c.is_std.to_string()])?;
    }
    w.flush()?;
    let test: Vec<_> = ds.eeg.test.iter().collect();
    let labels: Vec<usize> = test.iter().map(|s| s.label).collect();
    match export_embedding_2d(&encoder.embed(&test)?, &labels) {
        Ok(p) => p.write_csv(&dir.join(EMBEDDING_CSV))?,
        Err(e) => log::warn!("no embedding projection: {e}"),
    }
    Ok(Evaluation { report, per_class })
}

/// Per-class table with mean and SD columns.
pub fn print_per_class(out: &mut impl std::io::Write, per_class: &[ClassScore]) -> std::io::Result<()> {
    writeln!(out, "{:<16} {:>8} {:>8}", "class", "mean", "SD")?;
    for c in per_class {
        writeln!(out, "{:<16} {:>8.3} {:>8.3}", c.class, c.is_mean, c.is_std)?;
    }
    Ok(())
}

pub fn cmd_evaluate(cfg: &RunConfig, inputs: &Inputs) -> anyhow::Result<Evaluation> {
    let ds = dataset(cfg)?;
    let encoder = load_encoder(&inputs.encoder(&cfg.out))?;
    let generator = load_generator(&inputs.generator(&cfg.out))?;
    cfg.write_echo(&cfg.out)?;
    let clf = classifier(cfg, &ds, &inputs.classifier(&cfg.out))?;
    let eval = evaluate_into(cfg, &ds, &encoder, &generator, &clf, &cfg.out)?;
    let r = &eval.report;
    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "IS {:.3} ± {:.3}  consistency {:.3}  diversity {:.4}  k-means {}",
        r.is_mean,
        r.is_std,
        r.class_consistency,
        r.diversity,
        r.kmeans_acc.map_or("n/a".into(), |a| format!("{a:.3}"))
    )?;
    print_per_class(&mut stdout, &eval.per_class)?;
    Ok(eval)
}

/// Writes a grid with one row of `per_class` samples per class to `output`.
pub fn cmd_generate(cfg: &RunConfig, inputs: &Inputs, per_class: usize, output: &Path) -> anyhow::Result<()> {
    if per_class == 0 {
        return Err(UsageError("--per-class must be at least 1".into()).into());
    }
    let ds = dataset(cfg)?;
    let encoder = load_encoder(&inputs.encoder(&cfg.out))?;
    let generator = load_generator(&inputs.generator(&cfg.out))?;
    sample_grid(&generator, &ds, &encoder, per_class, seed::sub_seed(cfg.seed, "generate"), output)?;
    log::info!("wrote {}", output.display());
    Ok(())
}
