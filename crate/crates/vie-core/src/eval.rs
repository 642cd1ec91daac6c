//! Evaluation battery: linear probes on frozen features, embedding
//! retrieval, and clustering quality against the hidden labels.

use thiserror::Error;

use crate::config::TrainConfig;
use crate::embedding::{log_sum_exp, Embedding, MemoryBank, SoftmaxParams};
use crate::encoders::{
    encode_features, mean_embedding, EncoderError, EncoderSpec, ParamStore, TAP_NAMES,
};
use crate::neighbors::{background_neighbors, kmeans_fit, NeighborError};
use crate::sampling::{test_time_clips, AugmentConfig, SampleError, SamplingStrategy, Video};
use crate::synth::{LabeledDataset, Split};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Neighbor(#[from] NeighborError),
    #[error("eval: unknown tap '{tap}' (expected one of {expected:?})")]
    UnknownTap {
        tap: String,
        expected: [&'static str; 3],
    },
    #[error("eval: {0}")]
    Bad(String),
    #[error("nmi: label vectors differ in length ({a} vs {b})")]
    LengthMismatch { a: usize, b: usize },
}

/// Deterministic video-level embedding for evaluation: the renormalized
/// mean over the five test-time clips.
pub fn eval_embedding(
    store: &ParamStore,
    spec: &EncoderSpec,
    strategy: &SamplingStrategy,
    aug: &AugmentConfig,
    video: &Video,
) -> Result<Embedding, EvalError> {
    let clips = test_time_clips(video, strategy, aug)?;
    let mut embeddings = Vec::with_capacity(clips.len());
    for clip in &clips {
        embeddings.push(encode_features(store, spec, clip)?.embedding);
    }
    Ok(mean_embedding(&embeddings)?)
}

/// Tap features of the five test-time clips of one video, one feature
/// vector per clip (taps with a time axis arrive already averaged).
pub fn clip_tap_features(
    store: &ParamStore,
    spec: &EncoderSpec,
    strategy: &SamplingStrategy,
    aug: &AugmentConfig,
    video: &Video,
    tap: &str,
) -> Result<Vec<Vec<f64>>, EvalError> {
    if !TAP_NAMES.contains(&tap) {
        return Err(EvalError::UnknownTap {
            tap: tap.to_string(),
            expected: TAP_NAMES,
        });
    }
    let clips = test_time_clips(video, strategy, aug)?;
    let mut rows = Vec::with_capacity(clips.len());
    for clip in &clips {
        let encoded = encode_features(store, spec, clip)?;
        let (_, features) = encoded
            .taps
            .into_iter()
            .find(|(name, _)| name == tap)
            .expect("tap names are fixed");
        rows.push(features);
    }
    Ok(rows)
}

/// An affine-plus-softmax readout on standardized features.
#[derive(Debug, Clone)]
pub struct ProbeModel {
    pub class_count: usize,
    feature_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl ProbeModel {
    /// Class log-odds for one raw feature vector.
    pub fn logits(&self, features: &[f64]) -> Vec<f64> {
        let k = self.class_count;
        let mut out = self.bias.clone();
        for (j, (&x, (&m, &s))) in features
            .iter()
            .zip(self.mean.iter().zip(&self.scale))
            .enumerate()
        {
            let z = (x - m) / s;
            let row = &self.weights[j * k..(j + 1) * k];
            for (o, w) in out.iter_mut().zip(row) {
                *o += z * w;
            }
        }
        out
    }

    pub fn probabilities(&self, features: &[f64]) -> Vec<f64> {
        let logits = self.logits(features);
        let lse = log_sum_exp(&logits);
        logits.iter().map(|l| (l - lse).exp()).collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }
}

/// Probe training knobs (full-batch gradient descent).
#[derive(Debug, Clone, Copy)]
pub struct ProbeTrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
}

impl From<&TrainConfig> for ProbeTrainConfig {
    fn from(cfg: &TrainConfig) -> Self {
        Self {
            epochs: cfg.probe_epochs,
            learning_rate: cfg.probe_learning_rate,
            l2: cfg.probe_l2,
        }
    }
}

/// Trains the linear-softmax readout by deterministic full-batch
/// gradient descent on standardized features.
pub fn train_probe(
    features: &[Vec<f64>],
    labels: &[usize],
    class_count: usize,
    cfg: &ProbeTrainConfig,
) -> Result<ProbeModel, EvalError> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(EvalError::Bad(format!(
            "probe needs matching non-empty features/labels, got {}/{}",
            features.len(),
            labels.len()
        )));
    }
    let dim = features[0].len();
    let count = features.len() as f64;

    let mut mean = vec![0.0f64; dim];
    for row in features {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut scale = vec![0.0f64; dim];
    for row in features {
        for (s, (x, m)) in scale.iter_mut().zip(row.iter().zip(&mean)) {
            *s += (x - m) * (x - m);
        }
    }
    for s in scale.iter_mut() {
        *s = (*s / count).sqrt().max(1e-8);
    }
    let standardized: Vec<Vec<f64>> = features
        .iter()
        .map(|row| {
            row.iter()
                .zip(mean.iter().zip(&scale))
                .map(|(x, (m, s))| (x - m) / s)
                .collect()
        })
        .collect();

    let k = class_count;
    let mut weights = vec![0.0f64; dim * k];
    let mut bias = vec![0.0f64; k];
    let mut probs = vec![0.0f64; k];
    let mut grad_w = vec![0.0f64; dim * k];
    let mut grad_b = vec![0.0f64; k];
    for _ in 0..cfg.epochs {
        grad_w.iter_mut().for_each(|g| *g = 0.0);
        grad_b.iter_mut().for_each(|g| *g = 0.0);
        for (row, &label) in standardized.iter().zip(labels) {
            for (c, p) in probs.iter_mut().enumerate() {
                *p = bias[c];
            }
            for (j, &x) in row.iter().enumerate() {
                let wrow = &weights[j * k..(j + 1) * k];
                for (p, w) in probs.iter_mut().zip(wrow) {
                    *p += x * w;
                }
            }
            let lse = log_sum_exp(&probs);
            for p in probs.iter_mut() {
                *p = (*p - lse).exp();
            }
            probs[label] -= 1.0;
            for (j, &x) in row.iter().enumerate() {
                let grow = &mut grad_w[j * k..(j + 1) * k];
                for (g, p) in grow.iter_mut().zip(&probs) {
                    *g += x * p;
                }
            }
            for (g, p) in grad_b.iter_mut().zip(&probs) {
                *g += p;
            }
        }
        let inv = 1.0 / count;
        for (w, g) in weights.iter_mut().zip(&grad_w) {
            *w -= cfg.learning_rate * (g * inv + 2.0 * cfg.l2 * *w);
        }
        for (b, g) in bias.iter_mut().zip(&grad_b) {
            *b -= cfg.learning_rate * g * inv;
        }
    }

    Ok(ProbeModel {
        class_count: k,
        feature_dim: dim,
        weights,
        bias,
        mean,
        scale,
    })
}

/// A probe run: accuracies plus the chance level that makes them
/// interpretable at desk scale.
#[derive(Debug, Clone, Copy)]
pub struct ProbeReport {
    pub train_accuracy: f64,
    pub val_accuracy: f64,
    pub chance: f64,
}

/// Trains a readout on frozen tap features of the training split and
/// scores the validation split, averaging the softmax outputs of the
/// five test-time clips per video.
pub fn linear_probe(
    store: &ParamStore,
    spec: &EncoderSpec,
    strategy: &SamplingStrategy,
    aug: &AugmentConfig,
    dataset: &LabeledDataset,
    tap: &str,
    cfg: &ProbeTrainConfig,
) -> Result<ProbeReport, EvalError> {
    let train_idx = dataset.indices_of(Split::Train);
    let val_idx = dataset.indices_of(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(EvalError::Bad("probe needs both train and val splits".into()));
    }

    let mut rows = Vec::new();
    let mut row_labels = Vec::new();
    for &i in &train_idx {
        for row in clip_tap_features(store, spec, strategy, aug, &dataset.videos[i], tap)? {
            rows.push(row);
            row_labels.push(dataset.labels[i]);
        }
    }
    let model = train_probe(&rows, &row_labels, dataset.class_count, cfg)?;

    let score_split = |indices: &[usize]| -> Result<f64, EvalError> {
        let mut hits = 0usize;
        for &i in indices {
            let clips = clip_tap_features(store, spec, strategy, aug, &dataset.videos[i], tap)?;
            let mut mean_probs = vec![0.0f64; dataset.class_count];
            for clip in &clips {
                for (m, p) in mean_probs.iter_mut().zip(model.probabilities(clip)) {
                    *m += p;
                }
            }
            let best = argmax(&mean_probs);
            if best == dataset.labels[i] {
                hits += 1;
            }
        }
        Ok(hits as f64 / indices.len() as f64)
    };

    Ok(ProbeReport {
        train_accuracy: score_split(&train_idx)?,
        val_accuracy: score_split(&val_idx)?,
        chance: 1.0 / dataset.class_count as f64,
    })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

/// Top-`k` gallery videos by embedding dot product, ties toward the
/// lower id. Gallery embeddings come from the same deterministic
/// test-time pipeline as the query.
pub fn retrieve(
    store: &ParamStore,
    spec: &EncoderSpec,
    strategy: &SamplingStrategy,
    aug: &AugmentConfig,
    query: &Video,
    gallery: &[Video],
    k: usize,
) -> Result<Vec<usize>, EvalError> {
    if gallery.is_empty() {
        return Err(EvalError::Bad("retrieval needs a non-empty gallery".into()));
    }
    let q = eval_embedding(store, spec, strategy, aug, query)?;
    let mut scored: Vec<(usize, f64)> = Vec::with_capacity(gallery.len());
    for video in gallery {
        let e = eval_embedding(store, spec, strategy, aug, video)?;
        scored.push((video.index, q.dot(&e)));
    }
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    Ok(scored.iter().take(k.min(scored.len())).map(|(i, _)| *i).collect())
}

/// Mean fraction of same-class videos among the top-`k` training
/// gallery entries of each validation query.
pub fn retrieval_precision(
    store: &ParamStore,
    spec: &EncoderSpec,
    strategy: &SamplingStrategy,
    aug: &AugmentConfig,
    dataset: &LabeledDataset,
    k: usize,
) -> Result<f64, EvalError> {
    let train_idx = dataset.indices_of(Split::Train);
    let val_idx = dataset.indices_of(Split::Val);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(EvalError::Bad("retrieval needs both splits".into()));
    }
    let mut gallery_embeddings = Vec::with_capacity(train_idx.len());
    for &i in &train_idx {
        gallery_embeddings.push((
            dataset.labels[i],
            eval_embedding(store, spec, strategy, aug, &dataset.videos[i])?,
        ));
    }
    let mut precision = 0.0f64;
    for &i in &val_idx {
        let q = eval_embedding(store, spec, strategy, aug, &dataset.videos[i])?;
        let mut scored: Vec<(usize, f64)> = gallery_embeddings
            .iter()
            .enumerate()
            .map(|(j, (_, e))| (j, q.dot(e)))
            .collect();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let same = scored
            .iter()
            .take(k)
            .filter(|(j, _)| gallery_embeddings[*j].0 == dataset.labels[i])
            .count();
        precision += same as f64 / k as f64;
    }
    Ok(precision / val_idx.len() as f64)
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Degenerate zero-entropy cases: identical trivial partitions score 1,
/// otherwise a single-cluster partition scores 0.
pub fn nmi(predicted: &[usize], truth: &[usize]) -> Result<f64, EvalError> {
    if predicted.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            a: predicted.len(),
            b: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(EvalError::Bad("nmi on empty labelings".into()));
    }
    let n = predicted.len() as f64;
    let kp = predicted.iter().max().unwrap() + 1;
    let kt = truth.iter().max().unwrap() + 1;
    let mut joint = vec![0.0f64; kp * kt];
    let mut pa = vec![0.0f64; kp];
    let mut pb = vec![0.0f64; kt];
    for (&a, &b) in predicted.iter().zip(truth) {
        joint[a * kt + b] += 1.0;
        pa[a] += 1.0;
        pb[b] += 1.0;
    }
    let entropy = |p: &[f64]| -> f64 {
        p.iter()
            .filter(|&&c| c > 0.0)
            .map(|&c| {
                let q = c / n;
                -q * q.ln()
            })
            .sum()
    };
    let (ha, hb) = (entropy(&pa), entropy(&pb));
    let mut mi = 0.0f64;
    for a in 0..kp {
        for b in 0..kt {
            let c = joint[a * kt + b];
            if c > 0.0 {
                let q = c / n;
                mi += q * (q * n * n / (pa[a] * pb[b])).ln();
            }
        }
    }
    let denom = 0.5 * (ha + hb);
    if denom <= 0.0 {
        // Both partitions trivial: identical by definition.
        return Ok(if ha == 0.0 && hb == 0.0 { 1.0 } else { 0.0 });
    }
    Ok((mi / denom).clamp(0.0, 1.0))
}

/// Clusters the bank and scores the labels against the hidden classes.
pub fn bank_cluster_nmi(
    bank: &MemoryBank,
    truth: &[usize],
    cluster_count: usize,
    seed: u64,
) -> Result<f64, EvalError> {
    let assign = kmeans_fit(bank, cluster_count, seed, 50)?;
    nmi(&assign.labels, truth)
}

/// Sanity helper used by analysis output: nearest-bank-row retrieval.
pub fn bank_neighbors(bank: &MemoryBank, i: usize, k: usize) -> Result<Vec<usize>, EvalError> {
    Ok(background_neighbors(bank, i, k)?)
}
