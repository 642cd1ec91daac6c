//! The five frame-sample encoder families.
//!
//! Every family maps a frame sample to a unit embedding through a small
//! perceptron stack recorded on a tape:
//!
//! - `single`: flatten one frame, two hidden layers, linear head.
//! - `dense_equal`: shared per-frame layer, temporal 1-d convolution
//!   over the feature sequence, mean pool, linear head.
//! - `sparse_unequal`: shared per-frame layer, features concatenated in
//!   temporal order, perceptron head.
//! - `sparse_equal`: shared per-frame layer, temporal mean, perceptron.
//! - `two_pathway`: a static (single-frame) and a dynamic (sparse-equal)
//!   sub-encoder; their pre-normalization features are concatenated and
//!   then normalized, so each pathway owns half the embedding.
//!
//! Each encoder exposes three probe taps: `tap1` and `tap2` are
//! intermediate features (with a time axis where the family keeps one)
//! and `tap3` is the pre-normalization embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::embedding::{normalize, Embedding, EmbeddingError};
use crate::sampling::{
    augment, sample_frames, AugmentConfig, AugmentationParams, FrameSample, SampleError,
    SamplingFamily, SamplingStrategy, Video,
};
use crate::tape::{Tape, TensorId};
use crate::tensor::{Tensor, TensorError};

pub const TAP_NAMES: [&str; 3] = ["tap1", "tap2", "tap3"];

#[derive(Debug, Error)]
pub enum EncoderError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("encoder: spec family {spec} does not match sample family {sample}")]
    FamilyMismatch {
        spec: &'static str,
        sample: &'static str,
    },
    #[error("encoder: {0}")]
    BadSpec(String),
    #[error("encoder: missing parameter '{name}'")]
    MissingParam { name: String },
    #[error("embedding mean: sample embeddings cancel (antipodal collapse)")]
    AntipodalCollapse,
}

/// Shape of one encoder: family, input geometry after augmentation,
/// layer widths, and the embedding dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncoderSpec {
    pub family: SamplingFamily,
    pub input_height: usize,
    pub input_width: usize,
    pub input_channels: usize,
    /// Frames per sample; must match the sampling strategy.
    pub frames_per_sample: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    /// Temporal kernel width (dense-equal family).
    pub conv_kernel: usize,
    /// Output dimension (the embedding lives on the unit sphere in
    /// this many coordinates).
    pub embed_dim: usize,
}

impl EncoderSpec {
    pub fn frame_dim(&self) -> usize {
        self.input_height * self.input_width * self.input_channels
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.frame_dim() == 0 || self.hidden1 == 0 || self.hidden2 == 0 || self.embed_dim < 2 {
            return Err(EncoderError::BadSpec(
                "layer widths must be positive and embed_dim >= 2".into(),
            ));
        }
        if self.frames_per_sample == 0 {
            return Err(EncoderError::BadSpec("frames_per_sample must be >= 1".into()));
        }
        match self.family {
            SamplingFamily::DenseEqual => {
                if self.conv_kernel == 0 || self.conv_kernel > self.frames_per_sample {
                    return Err(EncoderError::BadSpec(format!(
                        "conv_kernel {} must lie in [1, frames_per_sample {}]",
                        self.conv_kernel, self.frames_per_sample
                    )));
                }
            }
            SamplingFamily::TwoPathway => {
                if self.embed_dim % 2 != 0 {
                    return Err(EncoderError::BadSpec(
                        "two_pathway needs an even embed_dim (one half per pathway)".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Parameter names and shapes in registration order.
    ///
    /// Weight matrices are `[in, out]`; biases match the activation
    /// layout (`[1, out]` on per-frame rows, `[out]` after pooling).
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let f = self.frame_dim();
        let (h1, h2, d) = (self.hidden1, self.hidden2, self.embed_dim);
        let l = self.frames_per_sample;
        let p = |s: &str| format!("{}.{}", self.family.name(), s);
        match self.family {
            SamplingFamily::Single => vec![
                (p("fc1.w"), vec![f, h1]),
                (p("fc1.b"), vec![1, h1]),
                (p("fc2.w"), vec![h1, h2]),
                (p("fc2.b"), vec![1, h2]),
                (p("head.w"), vec![h2, d]),
                (p("head.b"), vec![1, d]),
            ],
            SamplingFamily::DenseEqual => vec![
                (p("frame.w"), vec![f, h1]),
                (p("frame.b"), vec![1, h1]),
                (p("conv.k"), vec![self.conv_kernel, h1, h2]),
                (p("head.w"), vec![h2, d]),
                (p("head.b"), vec![d]),
            ],
            SamplingFamily::SparseUnequal => vec![
                (p("frame.w"), vec![f, h1]),
                (p("frame.b"), vec![1, h1]),
                (p("fc2.w"), vec![l * h1, h2]),
                (p("fc2.b"), vec![1, h2]),
                (p("head.w"), vec![h2, d]),
                (p("head.b"), vec![1, d]),
            ],
            SamplingFamily::SparseEqual => vec![
                (p("frame.w"), vec![f, h1]),
                (p("frame.b"), vec![1, h1]),
                (p("fc2.w"), vec![h1, h2]),
                (p("fc2.b"), vec![h2]),
                (p("head.w"), vec![h2, d]),
                (p("head.b"), vec![d]),
            ],
            SamplingFamily::TwoPathway => {
                let half = d / 2;
                vec![
                    (p("static.fc1.w"), vec![f, h1]),
                    (p("static.fc1.b"), vec![1, h1]),
                    (p("static.fc2.w"), vec![h1, h2]),
                    (p("static.fc2.b"), vec![1, h2]),
                    (p("static.head.w"), vec![h2, half]),
                    (p("static.head.b"), vec![1, half]),
                    (p("dynamic.frame.w"), vec![f, h1]),
                    (p("dynamic.frame.b"), vec![1, h1]),
                    (p("dynamic.fc2.w"), vec![h1, h2]),
                    (p("dynamic.fc2.b"), vec![h2]),
                    (p("dynamic.head.w"), vec![h2, half]),
                    (p("dynamic.head.b"), vec![half]),
                ]
            }
        }
    }

    /// Fresh parameters: He-scaled normal weights for layers feeding a
    /// relu, inverse-fan-in scale for linear heads, zero biases.
    /// Deterministic per seed.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore, EncoderError> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::new();
        for (name, shape) in self.param_shapes() {
            let numel: usize = shape.iter().product();
            let tensor = if name.ends_with(".b") {
                Tensor::zeros(shape)
            } else {
                let fan_in: usize = shape[..shape.len() - 1].iter().product();
                let gain = if name.contains("head") { 1.0 } else { 2.0 };
                let sd = (gain / fan_in as f64).sqrt();
                let data = (0..numel)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * sd
                    })
                    .collect();
                Tensor::new(shape, data)?
            };
            entries.push((name, tensor));
        }
        Ok(ParamStore { entries })
    }
}

/// Named trainable tensors, owned by one training loop at a time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore {
    entries: Vec<(String, Tensor)>,
}

impl ParamStore {
    pub fn from_entries(entries: Vec<(String, Tensor)>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut Vec<(String, Tensor)> {
        &mut self.entries
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn set(&mut self, name: &str, tensor: Tensor) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some((_, t)) => *t = tensor,
            None => self.entries.push((name.to_string(), tensor)),
        }
    }

    /// Registers every entry as a named parameter on the tape.
    pub fn bind(&self, tape: &mut Tape) -> BoundParams {
        let pairs = self
            .entries
            .iter()
            .map(|(name, tensor)| (name.clone(), tape.param(name.clone(), tensor.clone())))
            .collect();
        BoundParams { pairs }
    }
}

/// Tape ids of one bound parameter store.
#[derive(Debug, Clone)]
pub struct BoundParams {
    pairs: Vec<(String, TensorId)>,
}

impl BoundParams {
    pub fn id(&self, name: &str) -> Result<TensorId, EncoderError> {
        self.pairs
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, id)| *id)
            .ok_or_else(|| EncoderError::MissingParam {
                name: name.to_string(),
            })
    }

    pub fn all_ids(&self) -> Vec<TensorId> {
        self.pairs.iter().map(|(_, id)| *id).collect()
    }
}

/// A probe point inside an encoder.
#[derive(Debug, Clone, Copy)]
pub struct Tap {
    pub name: &'static str,
    pub id: TensorId,
    /// True when axis 0 of the tap value is time; probes average it out.
    pub has_time_axis: bool,
}

/// The embedding (a unit rank-1 tensor on the tape), its
/// pre-normalization features, and the probe taps.
#[derive(Debug, Clone)]
pub struct EncodeResult {
    pub embedding: TensorId,
    pub prenorm: TensorId,
    pub taps: Vec<Tap>,
}

fn affine(tape: &mut Tape, x: TensorId, w: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
    let prod = tape.matmul(x, w)?;
    tape.add(prod, b)
}

/// Drops a leading length-1 axis (mean over one row is the row itself).
fn squeeze_row(tape: &mut Tape, x: TensorId) -> Result<TensorId, TensorError> {
    tape.mean_axis(x, 0)
}

/// Shared per-frame layer: each frame as a `[1, F]` row through one
/// affine + relu, yielding `[1, H1]` feature rows in temporal order.
fn frame_feature_rows(
    tape: &mut Tape,
    spec: &EncoderSpec,
    prefix: &str,
    bound: &BoundParams,
    part_frames: &[f64],
    frame_count: usize,
) -> Result<Vec<TensorId>, EncoderError> {
    let f = spec.frame_dim();
    let w = bound.id(&format!("{prefix}.frame.w"))?;
    let b = bound.id(&format!("{prefix}.frame.b"))?;
    let mut rows = Vec::with_capacity(frame_count);
    for t in 0..frame_count {
        let frame = Tensor::matrix(1, f, part_frames[t * f..(t + 1) * f].to_vec())?;
        let x = tape.constant(frame);
        let h = affine(tape, x, w, b)?;
        rows.push(tape.relu(h)?);
    }
    Ok(rows)
}

/// Static (single-frame) perceptron chain used by the `single` family
/// and the static pathway of `two_pathway`. Returns (tap1, tap2,
/// prenorm) where prenorm is a rank-1 vector.
fn single_chain(
    tape: &mut Tape,
    spec: &EncoderSpec,
    prefix: &str,
    bound: &BoundParams,
    frame: &[f64],
) -> Result<(TensorId, TensorId, TensorId), EncoderError> {
    let f = spec.frame_dim();
    let x = tape.constant(Tensor::matrix(1, f, frame.to_vec())?);
    let w1 = bound.id(&format!("{prefix}.fc1.w"))?;
    let b1 = bound.id(&format!("{prefix}.fc1.b"))?;
    let h1 = affine(tape, x, w1, b1)?;
    let h1 = tape.relu(h1)?;
    let w2 = bound.id(&format!("{prefix}.fc2.w"))?;
    let b2 = bound.id(&format!("{prefix}.fc2.b"))?;
    let h2 = affine(tape, h1, w2, b2)?;
    let h2 = tape.relu(h2)?;
    let wh = bound.id(&format!("{prefix}.head.w"))?;
    let bh = bound.id(&format!("{prefix}.head.b"))?;
    let out = affine(tape, h2, wh, bh)?;
    let tap1 = squeeze_row(tape, h1)?;
    let tap2 = squeeze_row(tape, h2)?;
    let prenorm = squeeze_row(tape, out)?;
    Ok((tap1, tap2, prenorm))
}

/// Dynamic chain used by the `sparse_equal` family and the dynamic
/// pathway of `two_pathway`: per-frame features, temporal mean, then a
/// perceptron head. Returns (tap1 `[L, H1]`, tap2 `[H2]`, prenorm).
fn sparse_equal_chain(
    tape: &mut Tape,
    spec: &EncoderSpec,
    prefix: &str,
    bound: &BoundParams,
    part_frames: &[f64],
    frame_count: usize,
) -> Result<(TensorId, TensorId, TensorId), EncoderError> {
    let rows = frame_feature_rows(tape, spec, prefix, bound, part_frames, frame_count)?;
    let stacked = tape.concat(&rows, 0)?;
    let pooled = tape.mean_axis(stacked, 0)?;
    let w2 = bound.id(&format!("{prefix}.fc2.w"))?;
    let b2 = bound.id(&format!("{prefix}.fc2.b"))?;
    let h2 = affine(tape, pooled, w2, b2)?;
    let h2 = tape.relu(h2)?;
    let wh = bound.id(&format!("{prefix}.head.w"))?;
    let bh = bound.id(&format!("{prefix}.head.b"))?;
    let prenorm = affine(tape, h2, wh, bh)?;
    Ok((stacked, h2, prenorm))
}

/// Runs the encoder on one frame sample, recording onto `tape`.
pub fn encode(
    tape: &mut Tape,
    bound: &BoundParams,
    spec: &EncoderSpec,
    sample: &FrameSample,
) -> Result<EncodeResult, EncoderError> {
    spec.validate()?;
    if sample.family != spec.family {
        return Err(EncoderError::FamilyMismatch {
            spec: spec.family.name(),
            sample: sample.family.name(),
        });
    }
    if sample.height != spec.input_height
        || sample.width != spec.input_width
        || sample.channels != spec.input_channels
    {
        return Err(EncoderError::BadSpec(format!(
            "sample geometry {}x{}x{} does not match encoder input {}x{}x{}",
            sample.height,
            sample.width,
            sample.channels,
            spec.input_height,
            spec.input_width,
            spec.input_channels
        )));
    }
    let fam = spec.family.name();
    let l = spec.frames_per_sample;
    let expect_frames = |part: &crate::sampling::SamplePart, want: usize| {
        if part.indices.len() != want {
            Err(EncoderError::BadSpec(format!(
                "{fam}: sample has {} frames, encoder expects {want}",
                part.indices.len()
            )))
        } else {
            Ok(())
        }
    };

    let (tap1, tap2, prenorm, t1_time, t2_time) = match spec.family {
        SamplingFamily::Single => {
            expect_frames(&sample.parts[0], 1)?;
            let (t1, t2, pre) = single_chain(tape, spec, fam, bound, &sample.parts[0].frames)?;
            (t1, t2, pre, false, false)
        }
        SamplingFamily::DenseEqual => {
            expect_frames(&sample.parts[0], l)?;
            let rows = frame_feature_rows(tape, spec, fam, bound, &sample.parts[0].frames, l)?;
            let stacked = tape.concat(&rows, 0)?;
            let kernel = bound.id(&format!("{fam}.conv.k"))?;
            let conv = tape.temporal_conv1d(stacked, kernel)?;
            let conv = tape.relu(conv)?;
            let pooled = tape.mean_axis(conv, 0)?;
            let wh = bound.id(&format!("{fam}.head.w"))?;
            let bh = bound.id(&format!("{fam}.head.b"))?;
            let prenorm = affine(tape, pooled, wh, bh)?;
            (stacked, conv, prenorm, true, true)
        }
        SamplingFamily::SparseUnequal => {
            expect_frames(&sample.parts[0], l)?;
            let rows = frame_feature_rows(tape, spec, fam, bound, &sample.parts[0].frames, l)?;
            let stacked = tape.concat(&rows, 0)?;
            let ordered = tape.concat(&rows, 1)?;
            let w2 = bound.id(&format!("{fam}.fc2.w"))?;
            let b2 = bound.id(&format!("{fam}.fc2.b"))?;
            let h2 = affine(tape, ordered, w2, b2)?;
            let h2 = tape.relu(h2)?;
            let wh = bound.id(&format!("{fam}.head.w"))?;
            let bh = bound.id(&format!("{fam}.head.b"))?;
            let out = affine(tape, h2, wh, bh)?;
            let tap2 = squeeze_row(tape, h2)?;
            let prenorm = squeeze_row(tape, out)?;
            (stacked, tap2, prenorm, true, false)
        }
        SamplingFamily::SparseEqual => {
            expect_frames(&sample.parts[0], l)?;
            let (t1, t2, pre) =
                sparse_equal_chain(tape, spec, fam, bound, &sample.parts[0].frames, l)?;
            (t1, t2, pre, true, false)
        }
        SamplingFamily::TwoPathway => {
            if sample.parts.len() != 2 {
                return Err(EncoderError::BadSpec(
                    "two_pathway sample needs a static and a dynamic part".into(),
                ));
            }
            expect_frames(&sample.parts[0], 1)?;
            expect_frames(&sample.parts[1], l)?;
            let static_prefix = format!("{fam}.static");
            let (_, _, static_pre) =
                single_chain(tape, spec, &static_prefix, bound, &sample.parts[0].frames)?;
            let dynamic_prefix = format!("{fam}.dynamic");
            let (_, _, dynamic_pre) = sparse_equal_chain(
                tape,
                spec,
                &dynamic_prefix,
                bound,
                &sample.parts[1].frames,
                l,
            )?;
            let prenorm = tape.concat(&[static_pre, dynamic_pre], 0)?;
            (static_pre, dynamic_pre, prenorm, false, false)
        }
    };

    let embedding = tape.l2_normalize(prenorm)?;
    Ok(EncodeResult {
        embedding,
        prenorm,
        taps: vec![
            Tap {
                name: TAP_NAMES[0],
                id: tap1,
                has_time_axis: t1_time,
            },
            Tap {
                name: TAP_NAMES[1],
                id: tap2,
                has_time_axis: t2_time,
            },
            Tap {
                name: TAP_NAMES[2],
                id: prenorm,
                has_time_axis: false,
            },
        ],
    })
}

/// One encoded sample outside any gradient context: the unit embedding
/// plus time-averaged tap features.
#[derive(Debug, Clone)]
pub struct EncodedSample {
    pub embedding: Embedding,
    pub taps: Vec<(String, Vec<f64>)>,
}

/// Value-only encode: runs the forward pass and extracts plain vectors.
/// Taps with a time axis are averaged along it.
pub fn encode_features(
    store: &ParamStore,
    spec: &EncoderSpec,
    sample: &FrameSample,
) -> Result<EncodedSample, EncoderError> {
    let mut tape = Tape::new();
    let bound = store.bind(&mut tape);
    let result = encode(&mut tape, &bound, spec, sample)?;
    let embedding = Embedding::from_unit(tape.value(result.embedding).data().to_vec())?;
    let taps = result
        .taps
        .iter()
        .map(|tap| {
            let value = tape.value(tap.id);
            let features = if tap.has_time_axis {
                let [t, f] = value.shape() else {
                    unreachable!("time taps are rank 2");
                };
                let mut mean = vec![0.0; *f];
                for row in value.data().chunks_exact(*f) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                mean.iter_mut().for_each(|m| *m /= *t as f64);
                mean
            } else {
                value.data().to_vec()
            };
            (tap.name.to_string(), features)
        })
        .collect();
    Ok(EncodedSample { embedding, taps })
}

/// Renormalized mean of sample embeddings. Errors distinctly when the
/// mean vector vanishes (antipodal collapse).
pub fn mean_embedding(samples: &[Embedding]) -> Result<Embedding, EncoderError> {
    let first = samples
        .first()
        .ok_or_else(|| EncoderError::BadSpec("mean over zero embeddings".into()))?;
    let mut acc = vec![0.0; first.dim()];
    for e in samples {
        for (a, c) in acc.iter_mut().zip(e.coords()) {
            *a += c;
        }
    }
    let inv = 1.0 / samples.len() as f64;
    acc.iter_mut().for_each(|a| *a *= inv);
    normalize(&acc).map_err(|_| EncoderError::AntipodalCollapse)
}

/// The video-level embedding: draw `sample_count` frame samples, encode
/// each, average on the sphere, renormalize.
///
/// With `randomize_augmentation` the crop/noise/flip draw is refreshed
/// per sample; otherwise every sample gets the deterministic center
/// crop.
#[allow(clippy::too_many_arguments)]
pub fn vie_embedding(
    store: &ParamStore,
    spec: &EncoderSpec,
    strategy: &SamplingStrategy,
    video: &Video,
    sample_count: usize,
    aug: &AugmentConfig,
    randomize_augmentation: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Embedding, EncoderError> {
    if sample_count == 0 {
        return Err(EncoderError::BadSpec("sample_count must be >= 1".into()));
    }
    let mut embeddings = Vec::with_capacity(sample_count);
    for _ in 0..sample_count {
        let raw = sample_frames(strategy, video, rng)?;
        let params = if randomize_augmentation {
            AugmentationParams::draw(aug, video.height(), video.width(), video.channels(), rng)?
        } else {
            AugmentationParams::center(aug, video.height(), video.width(), video.channels())?
        };
        let prepared = augment(&raw, &params)?;
        embeddings.push(encode_features(store, spec, &prepared)?.embedding);
    }
    mean_embedding(&embeddings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grad_check::finite_diff_check;
    use rand::Rng;

    fn spec_for(family: SamplingFamily) -> EncoderSpec {
        EncoderSpec {
            family,
            input_height: 4,
            input_width: 4,
            input_channels: 1,
            frames_per_sample: 3,
            hidden1: 6,
            hidden2: 5,
            conv_kernel: 2,
            embed_dim: 4,
        }
    }

    fn strategy_for(family: SamplingFamily) -> SamplingStrategy {
        SamplingStrategy::new(family, 3, 2, 2).unwrap()
    }

    fn noisy_video(seed: u64, frames: usize) -> Video {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pixels: Vec<f32> = (0..frames * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
        Video::new(0, frames, 4, 4, 1, 25.0, pixels).unwrap()
    }

    fn all_families() -> [SamplingFamily; 5] {
        [
            SamplingFamily::Single,
            SamplingFamily::DenseEqual,
            SamplingFamily::SparseUnequal,
            SamplingFamily::SparseEqual,
            SamplingFamily::TwoPathway,
        ]
    }

    #[test]
    fn output_is_unit_norm_for_every_family() {
        let video = noisy_video(1, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for family in all_families() {
            let spec = spec_for(family);
            let store = spec.init_params(33).unwrap();
            let sample = sample_frames(&strategy_for(family), &video, &mut rng).unwrap();
            let out = encode_features(&store, &spec, &sample).unwrap();
            let norm: f64 = out.embedding.coords().iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-6, "{family:?}: norm {norm}");
            assert_eq!(out.taps.len(), 3);
        }
    }

    #[test]
    fn encode_is_deterministic() {
        let video = noisy_video(3, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let spec = spec_for(SamplingFamily::SparseEqual);
        let store = spec.init_params(5).unwrap();
        let sample = sample_frames(&strategy_for(spec.family), &video, &mut rng).unwrap();
        let a = encode_features(&store, &spec, &sample).unwrap();
        let b = encode_features(&store, &spec, &sample).unwrap();
        assert!(a
            .embedding
            .coords()
            .iter()
            .zip(b.embedding.coords())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn family_mismatch_is_an_error() {
        let video = noisy_video(5, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let sample = sample_frames(&strategy_for(SamplingFamily::Single), &video, &mut rng).unwrap();
        let spec = spec_for(SamplingFamily::SparseEqual);
        let store = spec.init_params(1).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape);
        assert!(matches!(
            encode(&mut tape, &bound, &spec, &sample),
            Err(EncoderError::FamilyMismatch { .. })
        ));
    }

    #[test]
    fn tied_weights_match_single_frame_features() {
        // The same frame tiled through the sparse_equal per-frame layer
        // with weights copied from the single encoder must reproduce the
        // single encoder's first-layer features in every row.
        let single_spec = spec_for(SamplingFamily::Single);
        let single_store = single_spec.init_params(7).unwrap();
        let sparse_spec = spec_for(SamplingFamily::SparseEqual);
        let mut sparse_store = sparse_spec.init_params(8).unwrap();
        sparse_store.set(
            "sparse_equal.frame.w",
            single_store.get("single.fc1.w").unwrap().clone(),
        );
        sparse_store.set(
            "sparse_equal.frame.b",
            single_store.get("single.fc1.b").unwrap().clone(),
        );

        let frame: Vec<f32> = (0..16).map(|i| (i as f32) / 7.5 - 1.0).collect();
        let still = Video::from_still(0, &frame, 4, 4, 1, 8, 25.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let single_sample =
            sample_frames(&strategy_for(SamplingFamily::Single), &still, &mut rng).unwrap();
        let sparse_sample =
            sample_frames(&strategy_for(SamplingFamily::SparseEqual), &still, &mut rng).unwrap();

        let single_out = encode_features(&single_store, &single_spec, &single_sample).unwrap();
        let sparse_out = encode_features(&sparse_store, &sparse_spec, &sparse_sample).unwrap();

        // sparse tap1 is time-averaged over identical rows, so it equals
        // the single encoder's tap1 exactly.
        let single_tap1 = &single_out.taps[0].1;
        let sparse_tap1 = &sparse_out.taps[0].1;
        for (a, b) in single_tap1.iter().zip(sparse_tap1) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn encoder_gradients_match_finite_differences() {
        let video = noisy_video(11, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for family in all_families() {
            let spec = spec_for(family);
            let store = spec.init_params(21).unwrap();
            let sample = sample_frames(&strategy_for(family), &video, &mut rng).unwrap();
            let target: Vec<f64> = (0..spec.embed_dim)
                .map(|i| if i % 2 == 0 { 0.6 } else { -0.4 })
                .collect();
            let err = finite_diff_check(store.entries(), 1e-5, |tape, _ids| {
                // Rebuild bindings through the tape's own param table so
                // the perturbed values flow into the encoder.
                let bound = BoundParams {
                    pairs: tape
                        .params()
                        .iter()
                        .map(|(n, id)| (n.clone(), *id))
                        .collect(),
                };
                let out = encode(tape, &bound, &spec, &sample).map_err(|e| match e {
                    EncoderError::Tensor(t) => t,
                    other => TensorError::Domain {
                        op: "encode",
                        detail: other.to_string(),
                    },
                })?;
                let t = tape.constant(Tensor::vector(target.clone()));
                tape.dot(out.embedding, t)
            })
            .unwrap();
            assert!(err <= 1e-4, "{family:?}: error {err}");
        }
    }

    #[test]
    fn mean_embedding_bisects_perpendicular_pair() {
        let a = normalize(&[1.0, 0.0]).unwrap();
        let b = normalize(&[0.0, 1.0]).unwrap();
        let mean = mean_embedding(&[a, b]).unwrap();
        assert!((mean.coords()[0] - 0.7071067811865475).abs() < 1e-9);
        assert!((mean.coords()[1] - 0.7071067811865475).abs() < 1e-9);
    }

    #[test]
    fn mean_embedding_detects_antipodal_collapse() {
        let a = normalize(&[1.0, 0.0]).unwrap();
        let b = normalize(&[-1.0, 0.0]).unwrap();
        assert!(matches!(
            mean_embedding(&[a, b]),
            Err(EncoderError::AntipodalCollapse)
        ));
    }

    fn full_frame_aug() -> AugmentConfig {
        AugmentConfig {
            crop_height: 4,
            crop_width: 4,
            noise_scale: 0.0,
            flip_enabled: false,
        }
    }

    #[test]
    fn vie_embedding_single_sample_equals_plain_encode() {
        let video = noisy_video(13, 12);
        let spec = spec_for(SamplingFamily::SparseEqual);
        let store = spec.init_params(14).unwrap();
        let strategy = strategy_for(spec.family);

        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let via_expectation = vie_embedding(
            &store,
            &spec,
            &strategy,
            &video,
            1,
            &full_frame_aug(),
            false,
            &mut rng,
        )
        .unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let sample = sample_frames(&strategy, &video, &mut rng).unwrap();
        let direct = encode_features(&store, &spec, &sample).unwrap().embedding;
        for (a, b) in via_expectation.coords().iter().zip(direct.coords()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vie_embedding_on_constant_video_is_draw_independent() {
        let frame: Vec<f32> = (0..16).map(|i| (i as f32) * 0.1).collect();
        let video = Video::from_still(0, &frame, 4, 4, 1, 16, 25.0).unwrap();
        let spec = spec_for(SamplingFamily::SparseEqual);
        let store = spec.init_params(16).unwrap();
        let strategy = strategy_for(spec.family);

        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let one = vie_embedding(
            &store,
            &spec,
            &strategy,
            &video,
            1,
            &full_frame_aug(),
            false,
            &mut rng,
        )
        .unwrap();
        let many = vie_embedding(
            &store,
            &spec,
            &strategy,
            &video,
            64,
            &full_frame_aug(),
            false,
            &mut rng,
        )
        .unwrap();
        let dist: f64 = one
            .coords()
            .iter()
            .zip(many.coords())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!(dist <= 1e-6, "distance {dist}");
    }

    #[test]
    fn vie_embedding_spread_shrinks_with_sample_count() {
        // Standard error of the mean: the spread of repeated
        // vie_embedding draws shrinks roughly like 1/sqrt(S).
        let video = noisy_video(18, 24);
        let spec = spec_for(SamplingFamily::SparseEqual);
        let store = spec.init_params(19).unwrap();
        let strategy = strategy_for(spec.family);

        let spread = |s: usize, seed: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let runs: Vec<Embedding> = (0..24)
                .map(|_| {
                    vie_embedding(
                        &store,
                        &spec,
                        &strategy,
                        &video,
                        s,
                        &full_frame_aug(),
                        false,
                        &mut rng,
                    )
                    .unwrap()
                })
                .collect();
            let mean = mean_embedding(&runs).unwrap();
            runs.iter()
                .map(|e| {
                    e.coords()
                        .iter()
                        .zip(mean.coords())
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                })
                .sum::<f64>()
                / runs.len() as f64
        };
        let coarse = spread(2, 100);
        let fine = spread(32, 101);
        // Variance ratio should be near 16; accept a broad band.
        let ratio = coarse / fine;
        assert!(ratio > 4.0, "variance ratio {ratio}");
    }
}
