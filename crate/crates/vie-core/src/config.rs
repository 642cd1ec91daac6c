//! Flat key=value configuration for training runs and dataset
//! generation. A run is reproducible from (config, dataset file): every
//! knob serializes, and parsing an emitted config restores the struct
//! exactly.

use std::fmt::Write as _;

use thiserror::Error;

use crate::encoders::EncoderSpec;
use crate::losses::{LossKind, PartitionMode};
use crate::sampling::{AugmentConfig, SamplingFamily, SamplingStrategy};
use crate::synth::{LabelMode, SynthSpec};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}: expected key=value, got '{content}'")]
    BadLine { line: usize, content: String },
    #[error("config: unknown key '{key}'")]
    UnknownKey { key: String },
    #[error("config: key '{key}': cannot parse '{value}' as {expected}")]
    BadValue {
        key: String,
        value: String,
        expected: &'static str,
    },
    #[error("config io: {0}")]
    Io(#[from] std::io::Error),
}

/// Splits flat `key=value` text into pairs. Blank lines and `#` comments
/// are skipped.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::BadLine {
                line: no + 1,
                content: raw.to_string(),
            });
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

macro_rules! parse_as {
    ($key:expr, $value:expr, $ty:ty, $expected:literal) => {
        $value
            .parse::<$ty>()
            .map_err(|_| ConfigError::BadValue {
                key: $key.to_string(),
                value: $value.to_string(),
                expected: $expected,
            })?
    };
}

/// Every knob of one training-and-evaluation run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub partition: PartitionMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Multiplied into the learning rate when the epoch loss plateaus.
    pub lr_decay_factor: f64,
    /// Epochs without relative improvement before a decay step.
    pub lr_patience: usize,
    pub sgd_momentum: f64,
    pub lambda: f64,
    pub temperature: f64,
    /// Denominator subset size Q; 0 resolves to min(N-1, 512).
    pub subset_size: usize,
    pub bank_momentum: f64,
    /// k-means cluster count m; 0 resolves to max(2, N/30).
    pub cluster_count: usize,
    /// Background neighbor count k; 0 resolves to max(1, N/8).
    pub knn: usize,
    /// Recluster every this many epochs (LA only).
    pub recluster_every: usize,
    pub family: SamplingFamily,
    pub frames_per_sample: usize,
    pub bin_frames: usize,
    pub stride: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub conv_kernel: usize,
    pub embed_dim: usize,
    pub crop_height: usize,
    pub crop_width: usize,
    pub noise_scale: f64,
    pub flip: bool,
    pub probe_epochs: usize,
    pub probe_learning_rate: f64,
    pub probe_l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::LocalAggregation,
            partition: PartitionMode::Exact,
            epochs: 30,
            batch_size: 16,
            learning_rate: 0.3,
            lr_decay_factor: 0.1,
            lr_patience: 8,
            sgd_momentum: 0.9,
            lambda: 1e-4,
            temperature: 0.07,
            subset_size: 0,
            bank_momentum: 0.5,
            cluster_count: 0,
            knn: 0,
            recluster_every: 1,
            family: SamplingFamily::SparseEqual,
            frames_per_sample: 4,
            bin_frames: 4,
            stride: 4,
            hidden1: 64,
            hidden2: 64,
            conv_kernel: 3,
            embed_dim: 32,
            crop_height: 14,
            crop_width: 14,
            noise_scale: 0.1,
            flip: true,
            probe_epochs: 300,
            probe_learning_rate: 0.5,
            probe_l2: 1e-4,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        match key {
            "loss" => {
                self.loss = match value {
                    "ir" => LossKind::InstanceRecognition,
                    "la" => LossKind::LocalAggregation,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            expected: "ir|la",
                        })
                    }
                }
            }
            "partition" => {
                self.partition = match value {
                    "exact" => PartitionMode::Exact,
                    "sampled" => PartitionMode::Sampled,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: value.into(),
                            expected: "exact|sampled",
                        })
                    }
                }
            }
            "epochs" => self.epochs = parse_as!(key, value, usize, "integer"),
            "batch_size" => self.batch_size = parse_as!(key, value, usize, "integer"),
            "learning_rate" => self.learning_rate = parse_as!(key, value, f64, "real"),
            "lr_decay_factor" => self.lr_decay_factor = parse_as!(key, value, f64, "real"),
            "lr_patience" => self.lr_patience = parse_as!(key, value, usize, "integer"),
            "sgd_momentum" => self.sgd_momentum = parse_as!(key, value, f64, "real"),
            "lambda" => self.lambda = parse_as!(key, value, f64, "real"),
            "temperature" => self.temperature = parse_as!(key, value, f64, "real"),
            "subset_size" => self.subset_size = parse_as!(key, value, usize, "integer"),
            "bank_momentum" => self.bank_momentum = parse_as!(key, value, f64, "real"),
            "cluster_count" => self.cluster_count = parse_as!(key, value, usize, "integer"),
            "knn" => self.knn = parse_as!(key, value, usize, "integer"),
            "recluster_every" => self.recluster_every = parse_as!(key, value, usize, "integer"),
            "family" => {
                self.family = SamplingFamily::parse(value).map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    expected: "single|dense_equal|sparse_unequal|sparse_equal|two_pathway",
                })?
            }
            "frames_per_sample" => {
                self.frames_per_sample = parse_as!(key, value, usize, "integer")
            }
            "bin_frames" => self.bin_frames = parse_as!(key, value, usize, "integer"),
            "stride" => self.stride = parse_as!(key, value, usize, "integer"),
            "hidden1" => self.hidden1 = parse_as!(key, value, usize, "integer"),
            "hidden2" => self.hidden2 = parse_as!(key, value, usize, "integer"),
            "conv_kernel" => self.conv_kernel = parse_as!(key, value, usize, "integer"),
            "embed_dim" => self.embed_dim = parse_as!(key, value, usize, "integer"),
            "crop_height" => self.crop_height = parse_as!(key, value, usize, "integer"),
            "crop_width" => self.crop_width = parse_as!(key, value, usize, "integer"),
            "noise_scale" => self.noise_scale = parse_as!(key, value, f64, "real"),
            "flip" => self.flip = parse_as!(key, value, bool, "true|false"),
            "probe_epochs" => self.probe_epochs = parse_as!(key, value, usize, "integer"),
            "probe_learning_rate" => {
                self.probe_learning_rate = parse_as!(key, value, f64, "real")
            }
            "probe_l2" => self.probe_l2 = parse_as!(key, value, f64, "real"),
            "seed" => self.seed = parse_as!(key, value, u64, "integer"),
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Result<(), ConfigError> {
        for (k, v) in pairs {
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn from_kv_text(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply(&parse_kv(text)?)?;
        Ok(cfg)
    }

    pub fn to_kv_text(&self) -> String {
        let mut s = String::new();
        let loss = match self.loss {
            LossKind::InstanceRecognition => "ir",
            LossKind::LocalAggregation => "la",
        };
        let partition = match self.partition {
            PartitionMode::Exact => "exact",
            PartitionMode::Sampled => "sampled",
        };
        let _ = writeln!(s, "loss={loss}");
        let _ = writeln!(s, "partition={partition}");
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "batch_size={}", self.batch_size);
        let _ = writeln!(s, "learning_rate={}", self.learning_rate);
        let _ = writeln!(s, "lr_decay_factor={}", self.lr_decay_factor);
        let _ = writeln!(s, "lr_patience={}", self.lr_patience);
        let _ = writeln!(s, "sgd_momentum={}", self.sgd_momentum);
        let _ = writeln!(s, "lambda={}", self.lambda);
        let _ = writeln!(s, "temperature={}", self.temperature);
        let _ = writeln!(s, "subset_size={}", self.subset_size);
        let _ = writeln!(s, "bank_momentum={}", self.bank_momentum);
        let _ = writeln!(s, "cluster_count={}", self.cluster_count);
        let _ = writeln!(s, "knn={}", self.knn);
        let _ = writeln!(s, "recluster_every={}", self.recluster_every);
        let _ = writeln!(s, "family={}", self.family.name());
        let _ = writeln!(s, "frames_per_sample={}", self.frames_per_sample);
        let _ = writeln!(s, "bin_frames={}", self.bin_frames);
        let _ = writeln!(s, "stride={}", self.stride);
        let _ = writeln!(s, "hidden1={}", self.hidden1);
        let _ = writeln!(s, "hidden2={}", self.hidden2);
        let _ = writeln!(s, "conv_kernel={}", self.conv_kernel);
        let _ = writeln!(s, "embed_dim={}", self.embed_dim);
        let _ = writeln!(s, "crop_height={}", self.crop_height);
        let _ = writeln!(s, "crop_width={}", self.crop_width);
        let _ = writeln!(s, "noise_scale={}", self.noise_scale);
        let _ = writeln!(s, "flip={}", self.flip);
        let _ = writeln!(s, "probe_epochs={}", self.probe_epochs);
        let _ = writeln!(s, "probe_learning_rate={}", self.probe_learning_rate);
        let _ = writeln!(s, "probe_l2={}", self.probe_l2);
        let _ = writeln!(s, "seed={}", self.seed);
        s
    }

    pub fn strategy(&self) -> Result<SamplingStrategy, crate::sampling::SampleError> {
        SamplingStrategy::new(
            self.family,
            self.frames_per_sample,
            self.bin_frames,
            self.stride,
        )
    }

    pub fn encoder_spec(&self, channels: usize) -> EncoderSpec {
        EncoderSpec {
            family: self.family,
            input_height: self.crop_height,
            input_width: self.crop_width,
            input_channels: channels,
            frames_per_sample: self.frames_per_sample,
            hidden1: self.hidden1,
            hidden2: self.hidden2,
            conv_kernel: self.conv_kernel,
            embed_dim: self.embed_dim,
        }
    }

    pub fn aug_config(&self) -> AugmentConfig {
        AugmentConfig {
            crop_height: self.crop_height,
            crop_width: self.crop_width,
            noise_scale: self.noise_scale,
            flip_enabled: self.flip,
        }
    }

    /// Q resolved against the bank size.
    pub fn resolve_subset_size(&self, n: usize) -> usize {
        if self.subset_size == 0 {
            n.saturating_sub(1).clamp(1, 512)
        } else {
            self.subset_size.min(n)
        }
    }

    /// Cluster count m resolved against the bank size.
    pub fn resolve_cluster_count(&self, n: usize) -> usize {
        if self.cluster_count == 0 {
            (n / 30).max(2).min(n)
        } else {
            self.cluster_count.min(n)
        }
    }

    /// Background neighbor count k resolved against the bank size.
    pub fn resolve_knn(&self, n: usize) -> usize {
        if self.knn == 0 {
            (n / 8).max(1).min(n)
        } else {
            self.knn.min(n)
        }
    }
}

/// key=value mapping for dataset generation.
pub fn synth_spec_from_pairs(pairs: &[(String, String)]) -> Result<SynthSpec, ConfigError> {
    let mut spec = SynthSpec::default();
    for (key, value) in pairs {
        let key = key.as_str();
        let value = value.as_str();
        match key {
            "classes" => spec.class_count = parse_as!(key, value, usize, "integer"),
            "per_class" => spec.videos_per_class = parse_as!(key, value, usize, "integer"),
            "val_per_class" => spec.val_per_class = parse_as!(key, value, usize, "integer"),
            "frames" => spec.frame_count = parse_as!(key, value, usize, "integer"),
            "height" => spec.height = parse_as!(key, value, usize, "integer"),
            "width" => spec.width = parse_as!(key, value, usize, "integer"),
            "channels" => spec.channels = parse_as!(key, value, usize, "integer"),
            "mode" => {
                spec.label_mode = LabelMode::parse(value).map_err(|_| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    expected: "appearance|dynamics|mixed",
                })?
            }
            "noise" => spec.noise_level = parse_as!(key, value, f64, "real"),
            "seed" => spec.seed = parse_as!(key, value, u64, "integer"),
            other => {
                return Err(ConfigError::UnknownKey {
                    key: other.to_string(),
                })
            }
        }
    }
    Ok(spec)
}
