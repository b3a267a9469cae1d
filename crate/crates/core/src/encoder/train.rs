use std::path::Path;

use eeg2image_tensor::{Adam, AdamConfig, Graph, Mode};
use rand::seq::{IndexedRandom, SliceRandom};
use serde::{Deserialize, Serialize};

use super::model::{EncoderModel, EncoderSpec};
use super::triplet::{mine, triplet_loss_var, TripletConfig};
use crate::dataio::{stack_time_major, EegSample, PairedDataset, SplitKind};
use crate::error::{Error, Result};
use crate::metrics::{kmeans_accuracy, KMeansConfig};
use crate::seed;

/// Settings shared by both encoder training regimes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncoderTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub hidden: usize,
    pub output_norm: bool,
    pub triplet: TripletConfig,
    pub kmeans_restarts: usize,
}

impl Default for EncoderTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            lr: 1e-3,
            hidden: 128,
            output_norm: true,
            triplet: TripletConfig::default(),
            kmeans_restarts: KMeansConfig::default().restarts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub train_kmeans_acc: f64,
    pub test_kmeans_acc: f64,
    pub cls_acc: Option<f64>,
}

pub struct TrainedEncoder {
    pub model: EncoderModel,
    pub log: Vec<EpochRecord>,
}

/// Writes `epoch,loss,train_kmeans_acc,test_kmeans_acc[,cls_acc]`.
pub fn write_encoder_log(path: &Path, log: &[EpochRecord], with_cls: bool) -> Result<()> {
    let mut out = String::from("epoch,loss,train_kmeans_acc,test_kmeans_acc");
    out.push_str(if with_cls { ",cls_acc\n" } else { "\n" });
    for r in log {
        out.push_str(&format!("{},{},{},{}", r.epoch, r.loss, r.train_kmeans_acc, r.test_kmeans_acc));
        if with_cls {
            out.push_str(&format!(",{}", r.cls_acc.unwrap_or(f64::NAN)));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(Error::write(path))
}

/// Draws class-balanced batches: `classes` distinct classes with at least two
/// samples each, `per_class` samples from each (both clamped to what exists).
pub(crate) fn balanced_batch(
    pools: &[Vec<usize>],
    classes: usize,
    per_class: usize,
    rng: &mut seed::Rng,
) -> Vec<usize> {
    let eligible: Vec<usize> = (0..pools.len()).filter(|&k| pools[k].len() >= 2).collect();
    let mut chosen: Vec<usize> = eligible.choose_multiple(rng, classes.min(eligible.len())).copied().collect();
    chosen.sort_unstable();
    let mut batch = Vec::new();
    for k in chosen {
        batch.extend(pools[k].choose_multiple(rng, per_class.min(pools[k].len())).copied());
    }
    batch
}

fn split_refs(ds: &PairedDataset, kind: SplitKind) -> (Vec<&EegSample>, Vec<usize>) {
    let samples: Vec<&EegSample> = ds.eeg.get(kind).iter().collect();
    let labels = samples.iter().map(|s| s.label).collect();
    (samples, labels)
}

fn kmeans_acc(model: &EncoderModel, samples: &[&EegSample], labels: &[usize], k: usize, restarts: usize, seed: u64) -> Result<f64> {
    if samples.len() < k {
        return Ok(f64::NAN);
    }
    let emb = model.embed(samples)?;
    let cfg = KMeansConfig { restarts, ..KMeansConfig::default() };
    Ok(kmeans_accuracy(&emb, labels, k, cfg, seed)?.0)
}

fn check_finite(step: usize, term: &str, value: f64) -> Result<()> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(Error::Training { step, term: term.into(), value })
    }
}

fn validate(ds: &PairedDataset, cfg: &EncoderTrainConfig) -> Result<()> {
    if ds.eeg.train.is_empty() {
        return Err(Error::Config("encoder training needs training samples".into()));
    }
    if cfg.hidden == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("encoder needs hidden > 0 and lr > 0".into()));
    }
    Ok(())
}

/// Trains with online-mined triplets on class-balanced batches and records
/// train/test k-means accuracy after every epoch.
pub fn train_encoder(ds: &PairedDataset, cfg: &EncoderTrainConfig, seed: u64) -> Result<TrainedEncoder> {
    validate(ds, cfg)?;
    cfg.triplet.validate()?;
    let pools = ds.eeg_by_class(SplitKind::Train);
    if pools.iter().filter(|p| p.len() >= 2).count() < 2 {
        return Err(Error::Config("triplet batches need two classes with at least two training samples".into()));
    }
    let mut rng = seed::stream(seed, "encoder");
    let spec = EncoderSpec { hidden: cfg.hidden, output_norm: cfg.output_norm, ..EncoderSpec::new(ds.channels()) };
    let mut model = EncoderModel::new(spec, &mut rng)?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let batch_size = cfg.triplet.batch_classes * cfg.triplet.batch_per_class;
    let batches_per_epoch = ds.eeg.train.len().div_ceil(batch_size);
    let (train, train_labels) = split_refs(ds, SplitKind::Train);
    let (test, test_labels) = split_refs(ds, SplitKind::Test);
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..batches_per_epoch {
            let idx = balanced_batch(&pools, cfg.triplet.batch_classes, cfg.triplet.batch_per_class, &mut rng);
            let samples: Vec<&EegSample> = idx.iter().map(|&i| train[i]).collect();
            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
            let g = Graph::new();
            let b = model.params().bind(&g, Mode::Train);
            let f = model.forward(&b, g.constant(stack_time_major(&samples)));
            let triplets = mine(&g.value(f.embedding), &labels, &cfg.triplet)?;
            let loss = triplet_loss_var(&g, f.embedding, &triplets, cfg.triplet.margin);
            let value = g.value(loss).item() as f64;
            check_finite(step, "triplet_loss", value)?;
            loss_sum += value;
            let grads = b.param_grads(&g.backward(loss));
            drop(b);
            adam.step(model.params_mut(), &grads);
            step += 1;
        }
        let k = ds.num_classes;
        let restarts = cfg.kmeans_restarts;
        let km_seed = seed::sub_seed(seed, &format!("encoder-kmeans-{epoch}"));
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / batches_per_epoch as f64,
            train_kmeans_acc: kmeans_acc(&model, &train, &train_labels, k, restarts, km_seed)?,
            test_kmeans_acc: kmeans_acc(&model, &test, &test_labels, k, restarts, km_seed)?,
            cls_acc: None,
        };
        log::info!(
            "encoder epoch {epoch}: loss {:.4} train k-means {:.3} test k-means {:.3}",
            rec.loss,
            rec.train_kmeans_acc,
            rec.test_kmeans_acc
        );
        log.push(rec);
    }
    Ok(TrainedEncoder { model, log })
}

/// Classification baseline: softmax cross-entropy through a K-way head on the
/// 128-d projection, whose unnormalized output is the feature scored by
/// k-means.
pub fn train_classifier_baseline(ds: &PairedDataset, cfg: &EncoderTrainConfig, seed: u64) -> Result<TrainedEncoder> {
    validate(ds, cfg)?;
    if ds.num_classes < 2 {
        return Err(Error::Config(format!("softmax baseline needs >= 2 classes, got {}", ds.num_classes)));
    }
    let mut rng = seed::stream(seed, "encoder-baseline");
    let spec = EncoderSpec {
        hidden: cfg.hidden,
        output_norm: false,
        head_classes: Some(ds.num_classes),
        ..EncoderSpec::new(ds.channels())
    };
    let mut model = EncoderModel::new(spec, &mut rng)?;
    let mut adam = Adam::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() });
    let batch_size = (cfg.triplet.batch_classes * cfg.triplet.batch_per_class).max(1);
    let (train, train_labels) = split_refs(ds, SplitKind::Train);
    let (test, test_labels) = split_refs(ds, SplitKind::Test);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut step = 0;
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let chunks: Vec<&[usize]> = order.chunks(batch_size).collect();
        for chunk in &chunks {
            let samples: Vec<&EegSample> = chunk.iter().map(|&i| train[i]).collect();
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let g = Graph::new();
            let b = model.params().bind(&g, Mode::Train);
            let f = model.forward(&b, g.constant(stack_time_major(&samples)));
            let loss = g.softmax_cross_entropy(f.logits.expect("baseline has a head"), &labels);
            let value = g.value(loss).item() as f64;
            check_finite(step, "cross_entropy", value)?;
            loss_sum += value;
            let grads = b.param_grads(&g.backward(loss));
            drop(b);
            adam.step(model.params_mut(), &grads);
            step += 1;
        }
        let cls_acc = if test.is_empty() {
            f64::NAN
        } else {
            let pred = model.classify(&test)?.expect("baseline has a head");
            pred.iter().zip(&test_labels).filter(|(p, y)| p == y).count() as f64 / test.len() as f64
        };
        let k = ds.num_classes;
        let restarts = cfg.kmeans_restarts;
        let km_seed = seed::sub_seed(seed, &format!("encoder-kmeans-{epoch}"));
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / chunks.len() as f64,
            train_kmeans_acc: kmeans_acc(&model, &train, &train_labels, k, restarts, km_seed)?,
            test_kmeans_acc: kmeans_acc(&model, &test, &test_labels, k, restarts, km_seed)?,
            cls_acc: Some(cls_acc),
        };
        log::info!(
            "baseline epoch {epoch}: loss {:.4} test acc {:.3} test k-means {:.3}",
            rec.loss,
            cls_acc,
            rec.test_kmeans_acc
        );
        log.push(rec);
    }
    Ok(TrainedEncoder { model, log })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_batch_clamps_to_availability() {
        let pools = vec![vec![0, 1, 2], vec![3], vec![4, 5]];
        let mut rng = seed::stream(0, "t");
        let b = balanced_batch(&pools, 10, 8, &mut rng);
        let mut sorted = b.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2, 4, 5]);
    }
}
