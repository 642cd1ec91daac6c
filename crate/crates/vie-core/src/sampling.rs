//! Videos, frame-sampling strategies, and consistent augmentation.
//!
//! A sampling strategy draws an ordered subset of a video's frames for
//! one encoder pass. Augmentation parameters are drawn once per sample
//! and applied identically to every frame of that sample, so frame-to-
//! frame differences carry only the video's own dynamics.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error("sampling: video has no frames")]
    EmptyVideo,
    #[error("sampling: {0}")]
    BadStrategy(String),
    #[error("video: frame buffer length {len} does not match {frames} x {height}x{width}x{channels}")]
    BadFrameBuffer {
        len: usize,
        frames: usize,
        height: usize,
        width: usize,
        channels: usize,
    },
    #[error(
        "augment: crop offset {offset:?} size {size:?} outside {height}x{width} frame bounds"
    )]
    CropOutOfBounds {
        offset: [usize; 2],
        size: [usize; 2],
        height: usize,
        width: usize,
    },
    #[error("augment: expected {expected} channel shifts, got {got}")]
    BadChannelShift { expected: usize, got: usize },
}

/// An ordered sequence of frames with one shared geometry.
/// Pixels are stored as `f32`, matching the on-disk dataset format.
#[derive(Debug, Clone, PartialEq)]
pub struct Video {
    pub index: usize,
    pub frames_per_second: f64,
    frame_count: usize,
    height: usize,
    width: usize,
    channels: usize,
    pixels: Vec<f32>,
}

impl Video {
    pub fn new(
        index: usize,
        frame_count: usize,
        height: usize,
        width: usize,
        channels: usize,
        frames_per_second: f64,
        pixels: Vec<f32>,
    ) -> Result<Self, SampleError> {
        if frame_count == 0 {
            return Err(SampleError::EmptyVideo);
        }
        if pixels.len() != frame_count * height * width * channels {
            return Err(SampleError::BadFrameBuffer {
                len: pixels.len(),
                frames: frame_count,
                height,
                width,
                channels,
            });
        }
        Ok(Self {
            index,
            frames_per_second,
            frame_count,
            height,
            width,
            channels,
            pixels,
        })
    }

    /// A "static video": one still frame tiled `length` times.
    pub fn from_still(
        index: usize,
        frame: &[f32],
        height: usize,
        width: usize,
        channels: usize,
        length: usize,
        frames_per_second: f64,
    ) -> Result<Self, SampleError> {
        let mut pixels = Vec::with_capacity(frame.len() * length);
        for _ in 0..length {
            pixels.extend_from_slice(frame);
        }
        Self::new(
            index,
            length,
            height,
            width,
            channels,
            frames_per_second,
            pixels,
        )
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn frame(&self, t: usize) -> &[f32] {
        let size = self.height * self.width * self.channels;
        &self.pixels[t * size..(t + 1) * size]
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }
}

/// The five frame-sampling encoder families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SamplingFamily {
    /// One random frame.
    Single,
    /// `L` consecutive frames from a random start.
    DenseEqual,
    /// `L` consecutive bins, one random frame per bin.
    SparseUnequal,
    /// `L` frames at a fixed stride from a random start.
    SparseEqual,
    /// A paired (single, sparse-equal) draw sharing one seed stream.
    TwoPathway,
}

impl SamplingFamily {
    pub fn name(self) -> &'static str {
        match self {
            SamplingFamily::Single => "single",
            SamplingFamily::DenseEqual => "dense_equal",
            SamplingFamily::SparseUnequal => "sparse_unequal",
            SamplingFamily::SparseEqual => "sparse_equal",
            SamplingFamily::TwoPathway => "two_pathway",
        }
    }

    pub fn parse(s: &str) -> Result<Self, SampleError> {
        match s {
            "single" => Ok(SamplingFamily::Single),
            "dense_equal" => Ok(SamplingFamily::DenseEqual),
            "sparse_unequal" => Ok(SamplingFamily::SparseUnequal),
            "sparse_equal" => Ok(SamplingFamily::SparseEqual),
            "two_pathway" => Ok(SamplingFamily::TwoPathway),
            other => Err(SampleError::BadStrategy(format!(
                "unknown family '{other}'"
            ))),
        }
    }
}

/// How a sample's frame indices are drawn from a video.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingStrategy {
    pub family: SamplingFamily,
    /// Frames per sample for the multi-frame families.
    pub frames_per_sample: usize,
    /// Frames per bin (sparse-unequal only).
    pub bin_frames: usize,
    /// Index stride (sparse-equal and the dynamic pathway).
    pub stride: usize,
}

impl SamplingStrategy {
    pub fn new(
        family: SamplingFamily,
        frames_per_sample: usize,
        bin_frames: usize,
        stride: usize,
    ) -> Result<Self, SampleError> {
        if frames_per_sample == 0 {
            return Err(SampleError::BadStrategy("frames_per_sample must be >= 1".into()));
        }
        if bin_frames == 0 || stride == 0 {
            return Err(SampleError::BadStrategy(
                "bin_frames and stride must be >= 1".into(),
            ));
        }
        Ok(Self {
            family,
            frames_per_sample,
            bin_frames,
            stride,
        })
    }

    /// Frame span one draw covers (before wrap-around).
    fn span(&self, family: SamplingFamily) -> usize {
        match family {
            SamplingFamily::Single => 1,
            SamplingFamily::DenseEqual => self.frames_per_sample,
            SamplingFamily::SparseUnequal => self.frames_per_sample * self.bin_frames,
            SamplingFamily::SparseEqual | SamplingFamily::TwoPathway => {
                (self.frames_per_sample - 1) * self.stride + 1
            }
        }
    }
}

/// One drawn pathway: frame indices plus the gathered pixel data
/// (converted to `f64`, ready to enter a tape).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePart {
    pub indices: Vec<usize>,
    pub frames: Vec<f64>,
}

/// A drawn frame sample. Single-pathway families have one part; the
/// two-pathway family has a static part followed by a dynamic part.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSample {
    pub video_index: usize,
    pub family: SamplingFamily,
    pub parts: Vec<SamplePart>,
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    /// Set when the video was shorter than the required span and
    /// wrap-around (loop) indexing was used.
    pub wrapped: bool,
}

impl FrameSample {
    pub fn frame_dim(&self) -> usize {
        self.height * self.width * self.channels
    }
}

fn gather(video: &Video, indices: &[usize]) -> SamplePart {
    let mut frames = Vec::with_capacity(indices.len() * video.frame(0).len());
    for &t in indices {
        frames.extend(video.frame(t).iter().map(|&p| p as f64));
    }
    SamplePart {
        indices: indices.to_vec(),
        frames,
    }
}

/// Draws index lists for one pathway family. Returns (indices, wrapped).
fn draw_indices(
    strategy: &SamplingStrategy,
    family: SamplingFamily,
    frame_count: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<usize>, bool) {
    let m = frame_count;
    let l = strategy.frames_per_sample;
    match family {
        SamplingFamily::Single => (vec![rng.random_range(0..m)], false),
        SamplingFamily::DenseEqual => {
            if m >= l {
                let start = rng.random_range(0..=m - l);
                ((start..start + l).collect(), false)
            } else {
                let start = rng.random_range(0..m);
                ((0..l).map(|j| (start + j) % m).collect(), true)
            }
        }
        SamplingFamily::SparseUnequal => {
            let bin = strategy.bin_frames;
            let span = l * bin;
            if m >= span {
                let start = rng.random_range(0..=m - span);
                (
                    (0..l)
                        .map(|j| start + j * bin + rng.random_range(0..bin))
                        .collect(),
                    false,
                )
            } else {
                let start = rng.random_range(0..m);
                (
                    (0..l)
                        .map(|j| (start + j * bin + rng.random_range(0..bin)) % m)
                        .collect(),
                    true,
                )
            }
        }
        SamplingFamily::SparseEqual => {
            let stride = strategy.stride;
            let span = (l - 1) * stride + 1;
            if m >= span {
                let start = rng.random_range(0..=m - span);
                ((0..l).map(|j| start + j * stride).collect(), false)
            } else {
                let start = rng.random_range(0..m);
                ((0..l).map(|j| (start + j * stride) % m).collect(), true)
            }
        }
        SamplingFamily::TwoPathway => unreachable!("handled by sample_frames"),
    }
}

/// Draws one frame sample from `video` according to `strategy`.
///
/// Videos shorter than the strategy's span are handled by wrap-around
/// indexing and flagged in the returned sample.
pub fn sample_frames(
    strategy: &SamplingStrategy,
    video: &Video,
    rng: &mut ChaCha8Rng,
) -> Result<FrameSample, SampleError> {
    if video.frame_count() == 0 {
        return Err(SampleError::EmptyVideo);
    }
    let mut parts = Vec::new();
    let wrapped;
    match strategy.family {
        SamplingFamily::TwoPathway => {
            let (static_idx, w1) =
                draw_indices(strategy, SamplingFamily::Single, video.frame_count(), rng);
            let (dyn_idx, w2) = draw_indices(
                strategy,
                SamplingFamily::SparseEqual,
                video.frame_count(),
                rng,
            );
            wrapped = w1 || w2;
            parts.push(gather(video, &static_idx));
            parts.push(gather(video, &dyn_idx));
        }
        family => {
            let (indices, w) = draw_indices(strategy, family, video.frame_count(), rng);
            wrapped = w;
            parts.push(gather(video, &indices));
        }
    }
    Ok(FrameSample {
        video_index: video.index,
        family: strategy.family,
        parts,
        height: video.height(),
        width: video.width(),
        channels: video.channels(),
        wrapped,
    })
}

/// Crop geometry and jitter scales for the augmentation pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub crop_height: usize,
    pub crop_width: usize,
    pub noise_scale: f64,
    pub flip_enabled: bool,
}

/// One concrete augmentation draw: a crop window, a per-channel
/// additive shift, and a horizontal flip. Applied identically to every
/// frame of a sample, so application is deterministic given the params.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationParams {
    pub crop_offset: [usize; 2],
    pub crop_size: [usize; 2],
    pub channel_shift: Vec<f64>,
    pub flip: bool,
}

impl AugmentationParams {
    /// Identity: full-frame crop, zero shift, no flip.
    pub fn identity(height: usize, width: usize, channels: usize) -> Self {
        Self {
            crop_offset: [0, 0],
            crop_size: [height, width],
            channel_shift: vec![0.0; channels],
            flip: false,
        }
    }

    /// Random draw: uniform crop offset, per-channel shift uniform in
    /// `[-noise_scale, noise_scale]`, fair-coin flip when enabled.
    pub fn draw(
        cfg: &AugmentConfig,
        height: usize,
        width: usize,
        channels: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self, SampleError> {
        if cfg.crop_height > height || cfg.crop_width > width {
            return Err(SampleError::CropOutOfBounds {
                offset: [0, 0],
                size: [cfg.crop_height, cfg.crop_width],
                height,
                width,
            });
        }
        let dy = rng.random_range(0..=height - cfg.crop_height);
        let dx = rng.random_range(0..=width - cfg.crop_width);
        let channel_shift = (0..channels)
            .map(|_| {
                if cfg.noise_scale > 0.0 {
                    rng.random_range(-cfg.noise_scale..=cfg.noise_scale)
                } else {
                    0.0
                }
            })
            .collect();
        let flip = cfg.flip_enabled && rng.random_range(0..2) == 1;
        Ok(Self {
            crop_offset: [dy, dx],
            crop_size: [cfg.crop_height, cfg.crop_width],
            channel_shift,
            flip,
        })
    }

    /// Deterministic test-time draw: centered crop, zero shift, no flip.
    pub fn center(
        cfg: &AugmentConfig,
        height: usize,
        width: usize,
        channels: usize,
    ) -> Result<Self, SampleError> {
        if cfg.crop_height > height || cfg.crop_width > width {
            return Err(SampleError::CropOutOfBounds {
                offset: [0, 0],
                size: [cfg.crop_height, cfg.crop_width],
                height,
                width,
            });
        }
        Ok(Self {
            crop_offset: [(height - cfg.crop_height) / 2, (width - cfg.crop_width) / 2],
            crop_size: [cfg.crop_height, cfg.crop_width],
            channel_shift: vec![0.0; channels],
            flip: false,
        })
    }
}

/// Applies one augmentation draw to every frame of every part of the
/// sample: crop, then horizontal flip, then the shared additive shift.
pub fn augment(
    sample: &FrameSample,
    params: &AugmentationParams,
) -> Result<FrameSample, SampleError> {
    let [off_y, off_x] = params.crop_offset;
    let [crop_h, crop_w] = params.crop_size;
    if off_y + crop_h > sample.height || off_x + crop_w > sample.width {
        return Err(SampleError::CropOutOfBounds {
            offset: params.crop_offset,
            size: params.crop_size,
            height: sample.height,
            width: sample.width,
        });
    }
    let c = sample.channels;
    if params.channel_shift.len() != c {
        return Err(SampleError::BadChannelShift {
            expected: c,
            got: params.channel_shift.len(),
        });
    }
    let frame_dim = sample.frame_dim();
    let parts = sample
        .parts
        .iter()
        .map(|part| {
            let mut frames = Vec::with_capacity(part.indices.len() * crop_h * crop_w * c);
            for f in 0..part.indices.len() {
                let src = &part.frames[f * frame_dim..(f + 1) * frame_dim];
                for y in 0..crop_h {
                    for x in 0..crop_w {
                        let sx = if params.flip {
                            off_x + (crop_w - 1 - x)
                        } else {
                            off_x + x
                        };
                        let base = ((off_y + y) * sample.width + sx) * c;
                        for ch in 0..c {
                            frames.push(src[base + ch] + params.channel_shift[ch]);
                        }
                    }
                }
            }
            SamplePart {
                indices: part.indices.clone(),
                frames,
            }
        })
        .collect();
    Ok(FrameSample {
        video_index: sample.video_index,
        family: sample.family,
        parts,
        height: crop_h,
        width: crop_w,
        channels: c,
        wrapped: sample.wrapped,
    })
}

/// Five deterministic evaluation samples: window start points equally
/// spaced across the valid range, center crop, no noise, no flip.
pub fn test_time_clips(
    video: &Video,
    strategy: &SamplingStrategy,
    aug: &AugmentConfig,
) -> Result<Vec<FrameSample>, SampleError> {
    if video.frame_count() == 0 {
        return Err(SampleError::EmptyVideo);
    }
    let center = AugmentationParams::center(aug, video.height(), video.width(), video.channels())?;
    let m = video.frame_count();
    let span = strategy.span(match strategy.family {
        SamplingFamily::TwoPathway => SamplingFamily::SparseEqual,
        f => f,
    });
    let slack = m.saturating_sub(span);
    let mut clips = Vec::with_capacity(5);
    for i in 0..5 {
        let start = (i * slack + 2) / 4; // round(i * slack / 4)
        let wrapped = m < span;
        let index_of = |offset: usize| (start + offset) % m;
        let mut parts = Vec::new();
        match strategy.family {
            SamplingFamily::Single => {
                // Window of one frame; spread starts over the whole video.
                let pos = if m == 1 { 0 } else { (i * (m - 1) + 2) / 4 };
                parts.push(gather(video, &[pos]));
            }
            SamplingFamily::DenseEqual => {
                let idx: Vec<usize> = (0..strategy.frames_per_sample).map(index_of).collect();
                parts.push(gather(video, &idx));
            }
            SamplingFamily::SparseUnequal => {
                // Deterministic in-bin pick: the bin midpoint.
                let bin = strategy.bin_frames;
                let idx: Vec<usize> = (0..strategy.frames_per_sample)
                    .map(|j| index_of(j * bin + bin / 2))
                    .collect();
                parts.push(gather(video, &idx));
            }
            SamplingFamily::SparseEqual => {
                let idx: Vec<usize> = (0..strategy.frames_per_sample)
                    .map(|j| index_of(j * strategy.stride))
                    .collect();
                parts.push(gather(video, &idx));
            }
            SamplingFamily::TwoPathway => {
                parts.push(gather(video, &[index_of(span / 2)]));
                let idx: Vec<usize> = (0..strategy.frames_per_sample)
                    .map(|j| index_of(j * strategy.stride))
                    .collect();
                parts.push(gather(video, &idx));
            }
        }
        let sample = FrameSample {
            video_index: video.index,
            family: strategy.family,
            parts,
            height: video.height(),
            width: video.width(),
            channels: video.channels(),
            wrapped,
        };
        clips.push(augment(&sample, &center)?);
    }
    Ok(clips)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ramp_video(index: usize, frames: usize, h: usize, w: usize) -> Video {
        let pixels: Vec<f32> = (0..frames * h * w).map(|i| i as f32).collect();
        Video::new(index, frames, h, w, 1, 25.0, pixels).unwrap()
    }

    #[test]
    fn dense_equal_with_no_slack_starts_at_zero() {
        let video = ramp_video(0, 16, 2, 2);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 16, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let s = sample_frames(&strategy, &video, &mut rng).unwrap();
            assert_eq!(s.parts[0].indices, (0..16).collect::<Vec<_>>());
            assert!(!s.wrapped);
        }
    }

    #[test]
    fn sparse_equal_stride_grid() {
        let video = ramp_video(0, 16, 2, 2);
        let strategy = SamplingStrategy::new(SamplingFamily::SparseEqual, 4, 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut saw_zero_start = false;
        for _ in 0..200 {
            let s = sample_frames(&strategy, &video, &mut rng).unwrap();
            let idx = &s.parts[0].indices;
            let start = idx[0];
            assert!(start <= 3);
            assert_eq!(idx, &[start, start + 4, start + 8, start + 12]);
            if start == 0 {
                saw_zero_start = true;
                assert_eq!(idx, &[0, 4, 8, 12]);
            }
        }
        assert!(saw_zero_start);
    }

    #[test]
    fn sparse_unequal_bins_contain_their_draws() {
        // Length 8, 4 bins of 2: index j must lie in {2j, 2j+1}.
        let video = ramp_video(0, 8, 2, 2);
        let strategy = SamplingStrategy::new(SamplingFamily::SparseUnequal, 4, 2, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let s = sample_frames(&strategy, &video, &mut rng).unwrap();
            assert!(!s.wrapped);
            for (j, &idx) in s.parts[0].indices.iter().enumerate() {
                assert!(idx == 2 * j || idx == 2 * j + 1, "bin {j} drew {idx}");
            }
        }
    }

    #[test]
    fn short_video_wraps_and_flags() {
        let video = ramp_video(0, 3, 2, 2);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 8, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_frames(&strategy, &video, &mut rng).unwrap();
        assert!(s.wrapped);
        assert_eq!(s.parts[0].indices.len(), 8);
        assert!(s.parts[0].indices.iter().all(|&i| i < 3));
    }

    #[test]
    fn indices_strictly_increase_for_all_families() {
        let video = ramp_video(0, 32, 2, 2);
        let strategies = [
            SamplingStrategy::new(SamplingFamily::Single, 1, 1, 1).unwrap(),
            SamplingStrategy::new(SamplingFamily::DenseEqual, 8, 1, 1).unwrap(),
            SamplingStrategy::new(SamplingFamily::SparseUnequal, 4, 4, 1).unwrap(),
            SamplingStrategy::new(SamplingFamily::SparseEqual, 4, 1, 4).unwrap(),
            SamplingStrategy::new(SamplingFamily::TwoPathway, 4, 1, 4).unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for strategy in &strategies {
            for _ in 0..200 {
                let s = sample_frames(strategy, &video, &mut rng).unwrap();
                assert!(!s.wrapped);
                for part in &s.parts {
                    assert!(
                        part.indices.windows(2).all(|w| w[0] < w[1]),
                        "{:?}: {:?}",
                        strategy.family,
                        part.indices
                    );
                }
            }
        }
    }

    #[test]
    fn two_pathway_has_static_then_dynamic_part() {
        let video = ramp_video(0, 16, 2, 2);
        let strategy = SamplingStrategy::new(SamplingFamily::TwoPathway, 4, 1, 4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let s = sample_frames(&strategy, &video, &mut rng).unwrap();
        assert_eq!(s.parts.len(), 2);
        assert_eq!(s.parts[0].indices.len(), 1);
        assert_eq!(s.parts[1].indices.len(), 4);
    }

    #[test]
    fn augment_identity_is_identity() {
        let video = ramp_video(0, 4, 3, 3);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 4, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let s = sample_frames(&strategy, &video, &mut rng).unwrap();
        let id = AugmentationParams::identity(3, 3, 1);
        let out = augment(&s, &id).unwrap();
        assert_eq!(out, s);
    }

    #[test]
    fn flip_is_an_involution() {
        let video = ramp_video(0, 2, 3, 4);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s = sample_frames(&strategy, &video, &mut rng).unwrap();
        let mut params = AugmentationParams::identity(3, 4, 1);
        params.flip = true;
        let once = augment(&s, &params).unwrap();
        assert_ne!(once, s);
        let twice = augment(&once, &params).unwrap();
        assert_eq!(twice, s);
    }

    #[test]
    fn shared_noise_cancels_in_frame_differences() {
        let video = ramp_video(0, 4, 3, 3);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 4, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let s = sample_frames(&strategy, &video, &mut rng).unwrap();
        let mut params = AugmentationParams::identity(3, 3, 1);
        params.channel_shift = vec![0.37];
        let out = augment(&s, &params).unwrap();
        let dim = 9;
        for f in 0..3 {
            for p in 0..dim {
                let before =
                    s.parts[0].frames[(f + 1) * dim + p] - s.parts[0].frames[f * dim + p];
                let after =
                    out.parts[0].frames[(f + 1) * dim + p] - out.parts[0].frames[f * dim + p];
                assert!((before - after).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn crop_out_of_bounds_is_an_error() {
        let video = ramp_video(0, 2, 4, 4);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 2, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let s = sample_frames(&strategy, &video, &mut rng).unwrap();
        let params = AugmentationParams {
            crop_offset: [2, 2],
            crop_size: [3, 3],
            channel_shift: vec![0.0],
            flip: false,
        };
        assert!(matches!(
            augment(&s, &params),
            Err(SampleError::CropOutOfBounds { .. })
        ));
    }

    fn full_aug(h: usize, w: usize) -> AugmentConfig {
        AugmentConfig {
            crop_height: h,
            crop_width: w,
            noise_scale: 0.0,
            flip_enabled: false,
        }
    }

    #[test]
    fn test_time_clips_single_window_video() {
        let video = ramp_video(0, 16, 2, 2);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 16, 1, 1).unwrap();
        let clips = test_time_clips(&video, &strategy, &full_aug(2, 2)).unwrap();
        assert_eq!(clips.len(), 5);
        for clip in &clips[1..] {
            assert_eq!(clip, &clips[0]);
        }
    }

    #[test]
    fn test_time_clips_spread_starts_over_slack() {
        let video = ramp_video(0, 20, 2, 2);
        let strategy = SamplingStrategy::new(SamplingFamily::DenseEqual, 16, 1, 1).unwrap();
        let clips = test_time_clips(&video, &strategy, &full_aug(2, 2)).unwrap();
        let starts: Vec<usize> = clips.iter().map(|c| c.parts[0].indices[0]).collect();
        assert_eq!(starts, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn test_time_clips_are_deterministic() {
        let video = ramp_video(3, 24, 4, 4);
        let strategy = SamplingStrategy::new(SamplingFamily::TwoPathway, 4, 1, 4).unwrap();
        let aug = AugmentConfig {
            crop_height: 3,
            crop_width: 3,
            noise_scale: 0.5,
            flip_enabled: true,
        };
        let a = test_time_clips(&video, &strategy, &aug).unwrap();
        let b = test_time_clips(&video, &strategy, &aug).unwrap();
        assert_eq!(a, b);
        // Center crop, no noise, no flip regardless of the aug config.
        assert_eq!(a[0].height, 3);
        assert_eq!(a[0].width, 3);
    }

    #[test]
    fn static_video_tiles_one_frame() {
        let frame: Vec<f32> = (0..9).map(|i| i as f32).collect();
        let video = Video::from_still(7, &frame, 3, 3, 1, 5, 25.0).unwrap();
        assert_eq!(video.frame_count(), 5);
        for t in 0..5 {
            assert_eq!(video.frame(t), frame.as_slice());
        }
    }
}
