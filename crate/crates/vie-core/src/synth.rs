//! Synthetic labeled video generator: one moving Gaussian blob per
//! video on a torus, with pixel noise.
//!
//! The label mode controls where the class signal lives:
//!
//! - `appearance`: the class fixes the blob's size and intensity; the
//!   motion (direction, speed, start) is drawn from one shared
//!   distribution for every class.
//! - `dynamics`: the class fixes the motion axis and speed; the blob's
//!   appearance is drawn from one shared distribution, so a single
//!   frame carries no class information.
//! - `mixed`: the class fixes both.
//!
//! Everything is deterministic per seed, with one ChaCha stream per
//! video so generation order never matters.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::embedding::draw_subset;
use crate::sampling::{SampleError, Video};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("synth: {0}")]
    BadSpec(String),
    #[error("bin cut: {n_bins} bins exceed the {frame_count}-frame videos")]
    BinCount { n_bins: usize, frame_count: usize },
    #[error("subsample: fraction {0} outside (0, 1]")]
    BadFraction(f64),
    #[error("subsample: fraction {fraction} leaves class {class} empty")]
    EmptyClass { class: usize, fraction: f64 },
    #[error(transparent)]
    Sample(#[from] SampleError),
}

/// Where the class signal lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelMode {
    Appearance,
    Dynamics,
    Mixed,
}

impl LabelMode {
    pub fn name(self) -> &'static str {
        match self {
            LabelMode::Appearance => "appearance",
            LabelMode::Dynamics => "dynamics",
            LabelMode::Mixed => "mixed",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SynthError> {
        match s {
            "appearance" => Ok(LabelMode::Appearance),
            "dynamics" => Ok(LabelMode::Dynamics),
            "mixed" => Ok(LabelMode::Mixed),
            other => Err(SynthError::BadSpec(format!("unknown label mode '{other}'"))),
        }
    }
}

/// Generator parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    pub class_count: usize,
    /// Training videos per class.
    pub videos_per_class: usize,
    /// Validation videos per class.
    pub val_per_class: usize,
    pub frame_count: usize,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub label_mode: LabelMode,
    /// Standard deviation of the additive per-pixel noise.
    pub noise_level: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_count: 8,
            videos_per_class: 60,
            val_per_class: 15,
            frame_count: 16,
            height: 16,
            width: 16,
            channels: 1,
            label_mode: LabelMode::Mixed,
            noise_level: 0.02,
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.class_count == 0
            || self.videos_per_class == 0
            || self.frame_count == 0
            || self.height == 0
            || self.width == 0
            || self.channels == 0
        {
            return Err(SynthError::BadSpec(
                "class_count, videos_per_class, frame_count, and geometry must be positive".into(),
            ));
        }
        if self.noise_level < 0.0 {
            return Err(SynthError::BadSpec("noise_level must be >= 0".into()));
        }
        Ok(())
    }
}

/// Train/validation membership of one video.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
}

/// Videos with hidden class labels. The unsupervised trainer sees only
/// the videos; labels are used by evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub videos: Vec<Video>,
    pub labels: Vec<usize>,
    pub splits: Vec<Split>,
    pub class_count: usize,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.videos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.videos.is_empty()
    }

    pub fn indices_of(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    /// Re-numbers video ids to match their position. Every operation
    /// that builds a dataset goes through this, so `videos[i].index == i`
    /// always holds and bank rows correspond to positions.
    fn renumbered(mut self) -> Self {
        for (i, v) in self.videos.iter_mut().enumerate() {
            v.index = i;
        }
        self
    }

    /// Human-readable statistics block.
    pub fn summary(&self) -> String {
        let mut per_class_train = vec![0usize; self.class_count];
        let mut per_class_val = vec![0usize; self.class_count];
        for i in 0..self.len() {
            match self.splits[i] {
                Split::Train => per_class_train[self.labels[i]] += 1,
                Split::Val => per_class_val[self.labels[i]] += 1,
            }
        }
        let v0 = &self.videos[0];
        let mut mean = 0.0f64;
        let mut count = 0usize;
        for v in &self.videos {
            for &p in v.pixels() {
                mean += p as f64;
                count += 1;
            }
        }
        mean /= count.max(1) as f64;
        let mut sq = 0.0f64;
        for v in &self.videos {
            for &p in v.pixels() {
                sq += (p as f64 - mean).powi(2);
            }
        }
        let sd = (sq / count.max(1) as f64).sqrt();
        let mut out = String::new();
        out.push_str(&format!(
            "videos: {} ({} train, {} val)\n",
            self.len(),
            self.indices_of(Split::Train).len(),
            self.indices_of(Split::Val).len()
        ));
        out.push_str(&format!(
            "geometry: {} frames of {}x{}x{} at {} fps\n",
            v0.frame_count(),
            v0.height(),
            v0.width(),
            v0.channels(),
            v0.frames_per_second
        ));
        out.push_str(&format!("classes: {}\n", self.class_count));
        for k in 0..self.class_count {
            out.push_str(&format!(
                "  class {k}: {} train, {} val\n",
                per_class_train[k], per_class_val[k]
            ));
        }
        out.push_str(&format!("pixel mean {mean:.4}, sd {sd:.4}\n"));
        out
    }
}

/// Blob shape: standard deviation and peak intensity.
#[derive(Debug, Clone, Copy)]
struct Appearance {
    sigma: f64,
    amplitude: f64,
}

/// Straight-line torus motion: direction angle and speed in px/frame.
#[derive(Debug, Clone, Copy)]
struct Motion {
    angle: f64,
    speed: f64,
}

const SIGMA_RANGE: (f64, f64) = (1.0, 2.8);
const AMPLITUDE_LOW: f64 = 0.75;
const AMPLITUDE_HIGH: f64 = 1.2;
const SPEED_SLOW: f64 = 0.8;
const SPEED_FAST: f64 = 2.2;

/// Class-coded appearance: sigma sweeps the range within each half of
/// the classes, the halves differ by peak intensity.
fn class_appearance(class: usize, class_count: usize) -> Appearance {
    let half = class_count.div_ceil(2).max(1);
    let idx = class % half;
    let sigma = if half > 1 {
        SIGMA_RANGE.0 + (SIGMA_RANGE.1 - SIGMA_RANGE.0) * idx as f64 / (half - 1) as f64
    } else {
        0.5 * (SIGMA_RANGE.0 + SIGMA_RANGE.1)
    };
    let amplitude = if class < half {
        AMPLITUDE_LOW
    } else {
        AMPLITUDE_HIGH
    };
    Appearance { sigma, amplitude }
}

/// Class-coded motion: the class picks an axis in `[0, pi)` and a
/// speed tier. Signed direction stays random per video, so the class
/// signal is the axis-and-speed pattern, not a raw displacement.
fn class_motion(class: usize, class_count: usize) -> Motion {
    let axes = class_count.div_ceil(2).max(1);
    let tier = class / axes;
    let angle = PI * (class % axes) as f64 / axes as f64;
    let speed = if tier == 0 { SPEED_SLOW } else { SPEED_FAST };
    Motion { angle, speed }
}

/// Class-independent draws use the same ranges as the class tables.
fn random_appearance(rng: &mut ChaCha8Rng) -> Appearance {
    Appearance {
        sigma: rng.random_range(SIGMA_RANGE.0..=SIGMA_RANGE.1),
        amplitude: rng.random_range(AMPLITUDE_LOW..=AMPLITUDE_HIGH),
    }
}

fn random_motion(rng: &mut ChaCha8Rng) -> Motion {
    Motion {
        angle: rng.random_range(0.0..2.0 * PI),
        speed: rng.random_range(SPEED_SLOW..=SPEED_FAST),
    }
}

fn torus_delta(a: f64, b: f64, n: f64) -> f64 {
    let mut d = (a - b).rem_euclid(n);
    if d > n / 2.0 {
        d -= n;
    }
    d
}

fn render_video(spec: &SynthSpec, label: usize, index: usize, rng: &mut ChaCha8Rng) -> Video {
    let appearance = match spec.label_mode {
        LabelMode::Appearance | LabelMode::Mixed => class_appearance(label, spec.class_count),
        LabelMode::Dynamics => random_appearance(rng),
    };
    let motion = match spec.label_mode {
        LabelMode::Dynamics | LabelMode::Mixed => class_motion(label, spec.class_count),
        LabelMode::Appearance => random_motion(rng),
    };
    let (h, w, c, t_len) = (spec.height, spec.width, spec.channels, spec.frame_count);

    let start_y: f64 = rng.random_range(0.0..h as f64);
    let start_x: f64 = rng.random_range(0.0..w as f64);
    let sign = if rng.random_range(0..2) == 0 { 1.0 } else { -1.0 };
    let vy = sign * motion.speed * motion.angle.sin();
    let vx = sign * motion.speed * motion.angle.cos();

    let mut pixels = Vec::with_capacity(t_len * h * w * c);
    let two_sq = 2.0 * appearance.sigma * appearance.sigma;
    for t in 0..t_len {
        let py = (start_y + vy * t as f64).rem_euclid(h as f64);
        let px = (start_x + vx * t as f64).rem_euclid(w as f64);
        for y in 0..h {
            let dy = torus_delta(y as f64, py, h as f64);
            for x in 0..w {
                let dx = torus_delta(x as f64, px, w as f64);
                let value = appearance.amplitude * (-(dy * dy + dx * dx) / two_sq).exp();
                for _ in 0..c {
                    let noise: f64 = if spec.noise_level > 0.0 {
                        let z: f64 = StandardNormal.sample(rng);
                        z * spec.noise_level
                    } else {
                        0.0
                    };
                    pixels.push((value + noise) as f32);
                }
            }
        }
    }
    Video::new(index, t_len, h, w, c, 25.0, pixels).expect("consistent geometry")
}

/// Generates the dataset: class-balanced, deterministic per seed, train
/// videos first (class-major), then the validation split.
pub fn generate(spec: &SynthSpec) -> Result<LabeledDataset, SynthError> {
    spec.validate()?;
    let mut videos = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    let mut stream = 0u64;
    for (split, per_class) in [
        (Split::Train, spec.videos_per_class),
        (Split::Val, spec.val_per_class),
    ] {
        for class in 0..spec.class_count {
            for _ in 0..per_class {
                let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                rng.set_stream(stream + 1);
                stream += 1;
                videos.push(render_video(spec, class, videos.len(), &mut rng));
                labels.push(class);
                splits.push(split);
            }
        }
    }
    Ok(LabeledDataset {
        videos,
        labels,
        splits,
        class_count: spec.class_count,
    })
}

/// Result of cutting videos into bins; `truncated_frames` counts frames
/// dropped per video when the length is not divisible by the bin count.
#[derive(Debug)]
pub struct BinCut {
    pub dataset: LabeledDataset,
    pub truncated_frames: usize,
}

/// Replaces each video by `n_bins` equal-length clips, each a new
/// instance inheriting the source label and split.
pub fn cut_into_bins(dataset: &LabeledDataset, n_bins: usize) -> Result<BinCut, SynthError> {
    if n_bins == 0 {
        return Err(SynthError::BadSpec("n_bins must be >= 1".into()));
    }
    let mut truncated_frames = 0usize;
    let mut videos = Vec::with_capacity(dataset.len() * n_bins);
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for (i, video) in dataset.videos.iter().enumerate() {
        let t = video.frame_count();
        if n_bins > t {
            return Err(SynthError::BinCount {
                n_bins,
                frame_count: t,
            });
        }
        let clip_len = t / n_bins;
        truncated_frames += t - clip_len * n_bins;
        let frame_size = video.height() * video.width() * video.channels();
        for b in 0..n_bins {
            let start = b * clip_len;
            let mut pixels = Vec::with_capacity(clip_len * frame_size);
            for f in start..start + clip_len {
                pixels.extend_from_slice(video.frame(f));
            }
            videos.push(Video::new(
                videos.len(),
                clip_len,
                video.height(),
                video.width(),
                video.channels(),
                video.frames_per_second,
                pixels,
            )?);
            labels.push(dataset.labels[i]);
            splits.push(dataset.splits[i]);
        }
    }
    Ok(BinCut {
        dataset: LabeledDataset {
            videos,
            labels,
            splits,
            class_count: dataset.class_count,
        }
        .renumbered(),
        truncated_frames,
    })
}

/// Per-class stratified uniform subsample of the training split; the
/// validation split is kept intact. Deterministic per seed.
pub fn subsample_fraction(
    dataset: &LabeledDataset,
    fraction: f64,
    seed: u64,
) -> Result<LabeledDataset, SynthError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(SynthError::BadFraction(fraction));
    }
    let mut keep = vec![false; dataset.len()];
    for (i, &split) in dataset.splits.iter().enumerate() {
        if split == Split::Val {
            keep[i] = true;
        }
    }
    for class in 0..dataset.class_count {
        let members: Vec<usize> = (0..dataset.len())
            .filter(|&i| dataset.splits[i] == Split::Train && dataset.labels[i] == class)
            .collect();
        if members.is_empty() {
            continue;
        }
        let target = ((fraction * members.len() as f64).round() as usize).min(members.len());
        if target == 0 {
            return Err(SynthError::EmptyClass { class, fraction });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(class as u64 + 1);
        let picked = draw_subset(members.len(), target, &mut rng)
            .expect("target within [1, members]");
        for p in picked {
            keep[members[p]] = true;
        }
    }
    let mut videos = Vec::new();
    let mut labels = Vec::new();
    let mut splits = Vec::new();
    for i in 0..dataset.len() {
        if keep[i] {
            videos.push(dataset.videos[i].clone());
            labels.push(dataset.labels[i]);
            splits.push(dataset.splits[i]);
        }
    }
    Ok(LabeledDataset {
        videos,
        labels,
        splits,
        class_count: dataset.class_count,
    }
    .renumbered())
}
