//! The training loop: sample and augment each batch video, encode,
//! evaluate the objective against the memory bank, update parameters by
//! SGD with momentum, then refresh the bank rows out of graph.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::checkpoint::Checkpoint;
use crate::config::TrainConfig;
use crate::embedding::{
    draw_subset, Embedding, EmbeddingError, MemoryBank, SoftmaxParams, BANK_CHECKPOINT_KEY,
};
use crate::encoders::{encode, EncoderError, ParamStore};
use crate::losses::{
    regularizer, sample_loss, LossConfig, LossError, LossKind, PartitionMode,
};
use crate::neighbors::{
    background_neighbors, close_neighbors, kmeans_fit, ClusterAssignment, NeighborError,
    NeighborSets,
};
use crate::sampling::{augment, sample_frames, AugmentationParams, SampleError};
use crate::synth::{LabeledDataset, Split};
use crate::tape::Tape;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error("train: dataset has no training videos")]
    EmptyTrainSplit,
    #[error("train: non-finite loss at epoch {epoch}, batch {batch}; offending batch:\n{dump}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        dump: String,
    },
    #[error("train: {0}")]
    Bad(String),
}

/// Seed-stream derivation: one ChaCha stream per (purpose, index), all
/// rooted at the run seed, so results are independent of batch
/// scheduling.
fn stream_rng(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((purpose << 48) ^ index);
    rng
}

const STREAM_INIT_BANK: u64 = 1;
const STREAM_EPOCH_ORDER: u64 = 2;
const STREAM_VIDEO_DRAW: u64 = 3;
const STREAM_CLUSTER: u64 = 4;

/// Everything a finished run produces.
#[derive(Debug)]
pub struct TrainOutcome {
    pub params: ParamStore,
    pub bank: MemoryBank,
    /// Mean objective per epoch.
    pub epoch_losses: Vec<f64>,
    /// Learning rate in effect per epoch.
    pub learning_rates: Vec<f64>,
    /// Steps where the LA intersection fell back to the self term.
    pub degenerate_steps: usize,
    /// Sample audit lines (video, frame indices, augmentation) when
    /// requested.
    pub audit_log: Vec<String>,
    /// Final cluster labels (LA only), one per training video.
    pub cluster_labels: Option<Vec<usize>>,
}

impl TrainOutcome {
    /// Parameters plus the bank as one checkpoint. The bank is a named
    /// tensor entry, never a gradient-carrying parameter.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut entries = self.params.entries().to_vec();
        entries.push((BANK_CHECKPOINT_KEY.to_string(), self.bank.to_tensor()));
        Checkpoint::new(entries)
    }
}

/// Splits a checkpoint back into encoder parameters and the bank.
pub fn model_from_checkpoint(
    checkpoint: &Checkpoint,
    bank_momentum: f64,
) -> Result<(ParamStore, MemoryBank), TrainError> {
    let mut params = Vec::new();
    let mut bank = None;
    for (name, tensor) in &checkpoint.entries {
        if name == BANK_CHECKPOINT_KEY {
            bank = Some(MemoryBank::from_tensor(tensor, bank_momentum)?);
        } else {
            params.push((name.clone(), tensor.clone()));
        }
    }
    let bank = bank.ok_or_else(|| TrainError::Bad("checkpoint has no memory bank".into()))?;
    Ok((ParamStore::from_entries(params), bank))
}

struct NeighborTable {
    sets: Vec<NeighborSets>,
    labels: Vec<usize>,
}

fn rebuild_neighbors(
    bank: &MemoryBank,
    cfg: &TrainConfig,
    epoch: usize,
) -> Result<(ClusterAssignment, NeighborTable), TrainError> {
    let n = bank.count();
    let m = cfg.resolve_cluster_count(n);
    let k = cfg.resolve_knn(n);
    let cluster_seed = stream_rng(cfg.seed, STREAM_CLUSTER, epoch as u64)
        .random_range(0..u64::MAX);
    let assign = kmeans_fit(bank, m, cluster_seed, 50)?;
    let mut sets = Vec::with_capacity(n);
    for i in 0..n {
        sets.push(NeighborSets {
            close: close_neighbors(&assign, i)?,
            background: background_neighbors(bank, i, k)?,
        });
    }
    let labels = assign.labels.clone();
    Ok((assign, NeighborTable { sets, labels }))
}

use rand::Rng;

/// Runs one full training job. Deterministic per (config, dataset).
pub fn train(cfg: &TrainConfig, dataset: &LabeledDataset) -> Result<TrainOutcome, TrainError> {
    train_with_audit(cfg, dataset, false)
}

pub fn train_with_audit(
    cfg: &TrainConfig,
    dataset: &LabeledDataset,
    audit: bool,
) -> Result<TrainOutcome, TrainError> {
    let train_rows: Vec<usize> = dataset.indices_of(Split::Train);
    let n = train_rows.len();
    if n == 0 {
        return Err(TrainError::EmptyTrainSplit);
    }
    let channels = dataset.videos[0].channels();
    let spec = cfg.encoder_spec(channels);
    spec.validate()?;
    let strategy = cfg.strategy()?;
    let aug_cfg = cfg.aug_config();
    let softmax = SoftmaxParams::new(cfg.temperature, cfg.resolve_subset_size(n))
        .map_err(TrainError::Embedding)?;

    let mut params = spec.init_params(cfg.seed)?;
    let mut bank = MemoryBank::init(
        n,
        cfg.embed_dim,
        cfg.bank_momentum,
        stream_rng(cfg.seed, STREAM_INIT_BANK, 0).random_range(0..u64::MAX),
    )?;

    let mut velocity: Vec<Tensor> = params
        .entries()
        .iter()
        .map(|(_, t)| Tensor::zeros(t.shape().to_vec()))
        .collect();

    let mut neighbor_table: Option<NeighborTable> = None;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut learning_rates = Vec::with_capacity(cfg.epochs);
    let mut degenerate_steps = 0usize;
    let mut audit_log = Vec::new();

    let mut lr = cfg.learning_rate;
    let mut best_loss = f64::INFINITY;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.epochs {
        if cfg.loss == LossKind::LocalAggregation
            && (neighbor_table.is_none()
                || cfg.recluster_every == 0
                || epoch % cfg.recluster_every.max(1) == 0)
        {
            let (_, table) = rebuild_neighbors(&bank, cfg, epoch)?;
            neighbor_table = Some(table);
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream_rng(cfg.seed, STREAM_EPOCH_ORDER, epoch as u64));

        let mut epoch_loss = 0.0f64;
        let mut seen = 0usize;
        for (batch_no, batch) in order.chunks(cfg.batch_size.max(1)).enumerate() {
            let mut tape = Tape::new();
            let bound = params.bind(&mut tape);
            let reg = regularizer(&mut tape, &bound.all_ids())?;

            let mut data_terms = Vec::with_capacity(batch.len());
            let mut fresh_embeddings: Vec<(usize, Embedding)> = Vec::with_capacity(batch.len());
            let mut batch_records = Vec::with_capacity(batch.len());
            for &row in batch {
                let video = &dataset.videos[train_rows[row]];
                let mut rng =
                    stream_rng(cfg.seed, STREAM_VIDEO_DRAW, (epoch as u64) << 24 | row as u64);
                let raw = sample_frames(&strategy, video, &mut rng)?;
                let aug_params = AugmentationParams::draw(
                    &aug_cfg,
                    video.height(),
                    video.width(),
                    channels,
                    &mut rng,
                )?;
                let prepared = augment(&raw, &aug_params)?;
                batch_records.push(format!(
                    "video {} indices {:?} aug {:?}",
                    video.index,
                    prepared.parts.iter().map(|p| p.indices.clone()).collect::<Vec<_>>(),
                    aug_params
                ));
                if audit {
                    audit_log.push(format!(
                        "epoch {epoch} video {} indices {:?} crop {:?}+{:?} flip {} shift {:?}",
                        video.index,
                        prepared
                            .parts
                            .iter()
                            .map(|p| p.indices.clone())
                            .collect::<Vec<_>>(),
                        aug_params.crop_offset,
                        aug_params.crop_size,
                        aug_params.flip,
                        aug_params.channel_shift,
                    ));
                }

                let encoded = encode(&mut tape, &bound, &spec, &prepared)?;
                let subset = if cfg.partition == PartitionMode::Sampled {
                    Some(draw_subset(n, softmax.subset_size, &mut rng)?)
                } else {
                    None
                };
                let loss_cfg = LossConfig {
                    kind: cfg.loss,
                    lambda: 0.0,
                    softmax,
                    partition: cfg.partition,
                    la_neighbors: neighbor_table.as_ref().map(|t| t.sets[row].clone()),
                };
                let term = sample_loss(
                    &mut tape,
                    row,
                    encoded.embedding,
                    &bank,
                    &loss_cfg,
                    subset.as_deref(),
                    None,
                )?;
                if term.degenerate {
                    degenerate_steps += 1;
                }
                data_terms.push(term.value);
                let e = Embedding::from_unit(tape.value(encoded.embedding).data().to_vec())?;
                fresh_embeddings.push((row, e));
            }

            let mut total = data_terms[0];
            for &t in &data_terms[1..] {
                total = tape.add(total, t)?;
            }
            let mean_data = tape.scalar_mul(1.0 / data_terms.len() as f64, total)?;
            let reg_term = tape.scalar_mul(cfg.lambda, reg)?;
            let batch_loss = tape.add(mean_data, reg_term)?;

            let loss_value = tape.value(batch_loss).item();
            if !loss_value.is_finite() {
                return Err(TrainError::NonFiniteLoss {
                    epoch,
                    batch: batch_no,
                    dump: batch_records.join("\n"),
                });
            }

            let grads = tape.backward(batch_loss)?;
            for (slot, (name, value)) in velocity.iter_mut().zip(params.entries_mut()) {
                let grad = grads
                    .by_name(name)
                    .expect("every parameter is registered on the tape");
                for (v, g) in slot.data_mut().iter_mut().zip(grad.data()) {
                    *v = cfg.sgd_momentum * *v + g;
                }
                for (p, v) in value.data_mut().iter_mut().zip(slot.data()) {
                    *p -= lr * v;
                }
            }

            for (row, e) in fresh_embeddings {
                bank.update(row, &e)?;
            }

            epoch_loss += loss_value * batch.len() as f64;
            seen += batch.len();
        }

        let epoch_loss = epoch_loss / seen as f64;
        epoch_losses.push(epoch_loss);
        learning_rates.push(lr);

        // Step decay on plateau of the epoch objective.
        if epoch_loss < best_loss - 1e-4 * best_loss.abs().max(1e-12) {
            best_loss = epoch_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.lr_patience.max(1) {
                lr *= cfg.lr_decay_factor;
                stale_epochs = 0;
            }
        }
    }

    let cluster_labels = neighbor_table.map(|t| t.labels);
    Ok(TrainOutcome {
        params,
        bank,
        epoch_losses,
        learning_rates,
        degenerate_steps,
        audit_log,
        cluster_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, LabelMode, SynthSpec};

    fn tiny_dataset(mode: LabelMode, classes: usize, per_class: usize) -> LabeledDataset {
        generate(&SynthSpec {
            class_count: classes,
            videos_per_class: per_class,
            val_per_class: 2,
            frame_count: 16,
            height: 8,
            width: 8,
            channels: 1,
            label_mode: mode,
            noise_level: 0.02,
            seed: 3,
        })
        .unwrap()
    }

    fn tiny_config() -> TrainConfig {
        TrainConfig {
            epochs: 2,
            batch_size: 4,
            hidden1: 8,
            hidden2: 8,
            embed_dim: 8,
            crop_height: 8,
            crop_width: 8,
            frames_per_sample: 4,
            stride: 4,
            conv_kernel: 2,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_freezes_parameters_but_not_bank() {
        let ds = tiny_dataset(LabelMode::Mixed, 2, 6);
        let mut cfg = tiny_config();
        cfg.learning_rate = 0.0;
        cfg.epochs = 1;
        let spec = cfg.encoder_spec(1);
        let initial = spec.init_params(cfg.seed).unwrap();
        let initial_bank = MemoryBank::init(
            12,
            cfg.embed_dim,
            cfg.bank_momentum,
            stream_rng(cfg.seed, STREAM_INIT_BANK, 0).random_range(0..u64::MAX),
        )
        .unwrap();

        let out = train(&cfg, &ds).unwrap();
        for ((n1, t1), (n2, t2)) in initial.entries().iter().zip(out.params.entries()) {
            assert_eq!(n1, n2);
            assert!(t1
                .data()
                .iter()
                .zip(t2.data())
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
        let moved = (0..12).any(|i| {
            initial_bank
                .row(i)
                .unwrap()
                .iter()
                .zip(out.bank.row(i).unwrap())
                .any(|(a, b)| a != b)
        });
        assert!(moved, "bank rows should keep moving at zero learning rate");
    }

    #[test]
    fn single_video_ir_loss_is_pure_regularization() {
        let ds = generate(&SynthSpec {
            class_count: 1,
            videos_per_class: 1,
            val_per_class: 0,
            frame_count: 16,
            height: 8,
            width: 8,
            channels: 1,
            label_mode: LabelMode::Mixed,
            noise_level: 0.0,
            seed: 5,
        })
        .unwrap();
        let mut cfg = tiny_config();
        cfg.loss = LossKind::InstanceRecognition;
        cfg.partition = PartitionMode::Exact;
        cfg.epochs = 1;
        cfg.batch_size = 1;
        cfg.learning_rate = 0.0;
        let out = train(&cfg, &ds).unwrap();
        // With one row the probability is exactly 1, so the objective is
        // lambda * |theta|^2 for the (frozen) initial parameters.
        let spec = cfg.encoder_spec(1);
        let params = spec.init_params(cfg.seed).unwrap();
        let reg: f64 = params
            .entries()
            .iter()
            .map(|(_, t)| t.data().iter().map(|v| v * v).sum::<f64>())
            .sum();
        let want = cfg.lambda * reg;
        let got = out.epoch_losses[0];
        assert!((got - want).abs() <= 1e-12 * want.max(1.0), "{got} vs {want}");
    }

    #[test]
    fn training_is_deterministic() {
        let ds = tiny_dataset(LabelMode::Mixed, 2, 5);
        let cfg = tiny_config();
        let a = train(&cfg, &ds).unwrap().to_checkpoint().to_bytes();
        let b = train(&cfg, &ds).unwrap().to_checkpoint().to_bytes();
        assert_eq!(a, b, "identical config and dataset must give identical bytes");
    }

    #[test]
    fn checkpoint_roundtrip_preserves_model() {
        let ds = tiny_dataset(LabelMode::Mixed, 2, 5);
        let cfg = tiny_config();
        let out = train(&cfg, &ds).unwrap();
        let ck = out.to_checkpoint();
        let bytes = ck.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        let (params, bank) = model_from_checkpoint(&back, cfg.bank_momentum).unwrap();
        assert_eq!(params.entries(), out.params.entries());
        assert_eq!(bank, out.bank);
    }

    #[test]
    fn la_training_runs_and_reclusters() {
        let ds = tiny_dataset(LabelMode::Mixed, 3, 8);
        let mut cfg = tiny_config();
        cfg.loss = LossKind::LocalAggregation;
        cfg.cluster_count = 3;
        cfg.knn = 6;
        cfg.epochs = 3;
        let out = train(&cfg, &ds).unwrap();
        assert_eq!(out.epoch_losses.len(), 3);
        let labels = out.cluster_labels.expect("LA keeps cluster labels");
        assert_eq!(labels.len(), 24);
        assert!(labels.iter().all(|&l| l < 3));
    }

    #[test]
    fn audit_log_records_samples() {
        let ds = tiny_dataset(LabelMode::Mixed, 2, 3);
        let mut cfg = tiny_config();
        cfg.epochs = 1;
        let out = train_with_audit(&cfg, &ds, true).unwrap();
        assert_eq!(out.audit_log.len(), 6);
        assert!(out.audit_log[0].contains("indices"));
    }
}
