//! Breadth- and depth-based minimization transforms and their composition.
//!
//! Every transform is a pure function of its inputs. Per-frame work runs on
//! the rayon pool; each output pixel is computed with a fixed summation order
//! so results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frames::{FrameError, FrameSequence, MaskSequence, MinimizedRepresentation};

pub const DEFAULT_BLUR_SIGMA: f64 = 10.0;
pub const DEFAULT_BLUR_RADIUS: usize = 10;
pub const DEFAULT_MASK_FILL: u8 = 0;
pub const DEFAULT_BG_THRESHOLD: u8 = 25;
pub const DEFAULT_BG_FILL: u8 = 0;

/// Fixed-point precision of the blur kernel taps.
const KERNEL_BITS: u32 = 20;
const KERNEL_ONE: u32 = 1 << KERNEL_BITS;

#[derive(Debug, Error)]
pub enum MinimizeError {
    #[error("stride must be at least 1, got {0}")]
    InvalidStride(usize),
    #[error("start index {start} out of range for {t_count} frames")]
    StartOutOfRange { start: usize, t_count: usize },
    #[error("downsample factor must be 2 or 4, got {0}")]
    InvalidFactor(usize),
    #[error("frame of {height}x{width} is smaller than downsample factor {factor}")]
    FrameTooSmall { height: usize, width: usize, factor: usize },
    #[error("blur sigma must be positive and finite, got {0}")]
    InvalidSigma(f64),
    #[error("blur radius must be at least 1, got {0}")]
    InvalidRadius(usize),
    #[error("background threshold must be in 1..=255, got {0}")]
    InvalidThreshold(u8),
    #[error("background removal needs at least 2 frames, got {0}")]
    TooFewFrames(usize),
    #[error("pipeline holds {0} temporal_sample steps; at most one is allowed")]
    RepeatedTemporalSample(usize),
    #[error("step {index} ({op}) requires masks but none were given")]
    MasksRequired { index: usize, op: &'static str },
    #[error("step {index} ({op}) failed: {source}")]
    Step {
        index: usize,
        op: &'static str,
        #[source]
        source: Box<MinimizeError>,
    },
    #[error(transparent)]
    Frames(#[from] FrameError),
    #[error("invalid pipeline document: {0}")]
    Parse(#[from] serde_json::Error),
}

pub type Result<T, E = MinimizeError> = std::result::Result<T, E>;

fn default_start() -> usize {
    0
}
fn default_mask_fill() -> u8 {
    DEFAULT_MASK_FILL
}
fn default_sigma() -> f64 {
    DEFAULT_BLUR_SIGMA
}
fn default_radius() -> usize {
    DEFAULT_BLUR_RADIUS
}
fn default_bg_threshold() -> u8 {
    DEFAULT_BG_THRESHOLD
}
fn default_bg_fill() -> u8 {
    DEFAULT_BG_FILL
}

/// One step of a minimization pipeline. Serialized with an `op` tag;
/// parameters left out of a document take the defaults above, while unknown
/// ops or keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum TransformStep {
    TemporalSample {
        stride: usize,
        #[serde(default = "default_start")]
        start: usize,
    },
    Downsample {
        factor: usize,
    },
    MaskRegions {
        #[serde(default = "default_mask_fill")]
        fill: u8,
    },
    BlurRegions {
        #[serde(default = "default_sigma")]
        sigma: f64,
        #[serde(default = "default_radius")]
        radius: usize,
    },
    BackgroundRemoval {
        #[serde(default = "default_bg_threshold")]
        threshold: u8,
        #[serde(default = "default_bg_fill")]
        fill: u8,
    },
}

impl TransformStep {
    pub fn op_name(&self) -> &'static str {
        match self {
            TransformStep::TemporalSample { .. } => "temporal_sample",
            TransformStep::Downsample { .. } => "downsample",
            TransformStep::MaskRegions { .. } => "mask_regions",
            TransformStep::BlurRegions { .. } => "blur_regions",
            TransformStep::BackgroundRemoval { .. } => "background_removal",
        }
    }

    pub fn needs_masks(&self) -> bool {
        matches!(self, TransformStep::MaskRegions { .. } | TransformStep::BlurRegions { .. })
    }

    /// Checks parameter ranges that do not depend on the input sequence.
    pub fn validate(&self) -> Result<()> {
        match *self {
            TransformStep::TemporalSample { stride, .. } if stride < 1 => Err(MinimizeError::InvalidStride(stride)),
            TransformStep::Downsample { factor } if factor != 2 && factor != 4 => {
                Err(MinimizeError::InvalidFactor(factor))
            }
            TransformStep::BlurRegions { sigma, .. } if !(sigma.is_finite() && sigma > 0.0) => {
                Err(MinimizeError::InvalidSigma(sigma))
            }
            TransformStep::BlurRegions { radius, .. } if radius < 1 => Err(MinimizeError::InvalidRadius(radius)),
            TransformStep::BackgroundRemoval { threshold, .. } if threshold < 1 => {
                Err(MinimizeError::InvalidThreshold(threshold))
            }
            _ => Ok(()),
        }
    }
}

/// The configuration of a minimization pipeline: steps applied in order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineSpec {
    pub steps: Vec<TransformStep>,
}

impl PipelineSpec {
    pub fn new(steps: Vec<TransformStep>) -> Result<Self> {
        let spec = Self { steps };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    /// Canonical JSON with every parameter spelled out.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("pipeline spec serializes")
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let samples = self
            .steps
            .iter()
            .filter(|s| matches!(s, TransformStep::TemporalSample { .. }))
            .count();
        if samples > 1 {
            return Err(MinimizeError::RepeatedTemporalSample(samples));
        }
        for (index, step) in self.steps.iter().enumerate() {
            step.validate().map_err(|e| MinimizeError::Step {
                index,
                op: step.op_name(),
                source: Box::new(e),
            })?;
        }
        Ok(())
    }
}

/// Frame indices `{start + n·stride}` that fall inside `0..t_count`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleIndexSet {
    indices: Vec<usize>,
}

impl SampleIndexSet {
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub fn temporal_sample_indices(t_count: usize, stride: usize, start: usize) -> Result<SampleIndexSet> {
    if stride < 1 {
        return Err(MinimizeError::InvalidStride(stride));
    }
    if start >= t_count {
        return Err(MinimizeError::StartOutOfRange { start, t_count });
    }
    Ok(SampleIndexSet {
        indices: (start..t_count).step_by(stride).collect(),
    })
}

fn select_frames(seq: &FrameSequence, picks: &[usize]) -> Result<FrameSequence> {
    let frames = picks.iter().map(|&i| seq.frame(i).to_vec()).collect();
    let indices = picks.iter().map(|&i| seq.indices()[i]).collect();
    Ok(FrameSequence::with_indices(
        seq.height(),
        seq.width(),
        seq.channels(),
        frames,
        indices,
    )?)
}

/// Keeps the frames (and masks) at [`temporal_sample_indices`].
pub fn temporal_sample(
    seq: &FrameSequence,
    masks: Option<&MaskSequence>,
    stride: usize,
    start: usize,
) -> Result<(FrameSequence, Option<MaskSequence>)> {
    if let Some(m) = masks {
        m.check_matches(seq)?;
    }
    let picks = temporal_sample_indices(seq.t_count(), stride, start)?;
    let frames = select_frames(seq, picks.indices())?;
    let masks = masks.map(|m| {
        MaskSequence::from_binary_unchecked(
            m.height(),
            m.width(),
            picks.indices().iter().map(|&i| m.mask(i).to_vec()).collect(),
        )
    });
    Ok((frames, masks))
}

/// True when `downsample` by `factor` would drop trailing rows or columns.
pub fn downsample_truncates(height: usize, width: usize, factor: usize) -> bool {
    !height.is_multiple_of(factor) || !width.is_multiple_of(factor)
}

fn check_downsample(height: usize, width: usize, factor: usize) -> Result<()> {
    if factor != 2 && factor != 4 {
        return Err(MinimizeError::InvalidFactor(factor));
    }
    if height < factor || width < factor {
        return Err(MinimizeError::FrameTooSmall { height, width, factor });
    }
    Ok(())
}

/// Box-filter downsampling: each output sample is the rounded-half-up mean of
/// a `factor×factor` block. Rows and columns that do not fill a block are
/// dropped.
pub fn downsample(seq: &FrameSequence, factor: usize) -> Result<FrameSequence> {
    let (h, w, c) = (seq.height(), seq.width(), seq.channels());
    check_downsample(h, w, factor)?;
    if downsample_truncates(h, w, factor) {
        log::warn!("downsample x{factor}: {h}x{w} not divisible, trailing rows/columns dropped");
    }
    let (oh, ow) = (h / factor, w / factor);
    let area = (factor * factor) as u32;
    let frames = seq
        .frames()
        .par_iter()
        .map(|frame| {
            let mut out = vec![0u8; oh * ow * c];
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut sum = 0u32;
                        for dy in 0..factor {
                            let row = (oy * factor + dy) * w;
                            for dx in 0..factor {
                                sum += frame[(row + ox * factor + dx) * c + ch] as u32;
                            }
                        }
                        out[(oy * ow + ox) * c + ch] = ((sum + area / 2) / area) as u8;
                    }
                }
            }
            out
        })
        .collect();
    Ok(FrameSequence::with_indices(oh, ow, c, frames, seq.indices().to_vec())?)
}

/// Downsamples masks by per-block majority vote; a tie counts as foreground.
pub fn downsample_masks(masks: &MaskSequence, factor: usize) -> Result<MaskSequence> {
    let (h, w) = (masks.height(), masks.width());
    check_downsample(h, w, factor)?;
    let (oh, ow) = (h / factor, w / factor);
    let area = factor * factor;
    let out = masks
        .masks()
        .par_iter()
        .map(|mask| {
            let mut out = vec![0u8; oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let ones: usize = (0..factor)
                        .flat_map(|dy| (0..factor).map(move |dx| (dy, dx)))
                        .map(|(dy, dx)| mask[(oy * factor + dy) * w + ox * factor + dx] as usize)
                        .sum();
                    out[oy * ow + ox] = u8::from(2 * ones >= area);
                }
            }
            out
        })
        .collect();
    Ok(MaskSequence::from_binary_unchecked(oh, ow, out))
}

/// Sets every masked pixel to `fill` on all channels.
pub fn mask_regions(seq: &FrameSequence, masks: &MaskSequence, fill: u8) -> Result<FrameSequence> {
    masks.check_matches(seq)?;
    let c = seq.channels();
    let frames = seq
        .frames()
        .par_iter()
        .zip(masks.masks().par_iter())
        .map(|(frame, mask)| {
            let mut out = frame.clone();
            for (px, &m) in out.chunks_exact_mut(c).zip(mask) {
                if m == 1 {
                    px.fill(fill);
                }
            }
            out
        })
        .collect();
    Ok(FrameSequence::with_indices(
        seq.height(),
        seq.width(),
        c,
        frames,
        seq.indices().to_vec(),
    )?)
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`.
pub fn gaussian_kernel(sigma: f64, radius: usize) -> Vec<f64> {
    let r = radius as f64;
    let raw: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - r;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Quantizes kernel taps to integers summing exactly to `KERNEL_ONE`.
/// Rounding residue goes to the center tap, which keeps the kernel symmetric.
fn fixed_point_kernel(kernel: &[f64]) -> Vec<u32> {
    let mut taps: Vec<u32> = kernel
        .iter()
        .map(|&w| (w * KERNEL_ONE as f64).round() as u32)
        .collect();
    let total: i64 = taps.iter().map(|&t| t as i64).sum();
    let center = kernel.len() / 2;
    taps[center] = (taps[center] as i64 + KERNEL_ONE as i64 - total) as u32;
    taps
}

/// Mirror index into `0..n` without repeating the edge sample
/// (`...c b | a b c d | c b...`), folding as often as needed.
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// Separable Gaussian blur of a full frame in fixed-point arithmetic.
fn blur_frame(frame: &[u8], height: usize, width: usize, channels: usize, taps: &[u32]) -> Vec<u8> {
    let radius = (taps.len() / 2) as isize;
    let mut horizontal = vec![0u32; frame.len()];
    for y in 0..height {
        let row = y * width;
        for x in 0..width {
            for c in 0..channels {
                let mut acc = 0u32;
                for (k, &tap) in taps.iter().enumerate() {
                    let sx = reflect(x as isize + k as isize - radius, width);
                    acc += tap * frame[(row + sx) * channels + c] as u32;
                }
                horizontal[(row + x) * channels + c] = acc;
            }
        }
    }
    let half = 1u64 << (2 * KERNEL_BITS - 1);
    let mut out = vec![0u8; frame.len()];
    for y in 0..height {
        for x in 0..width {
            for c in 0..channels {
                let mut acc = 0u64;
                for (k, &tap) in taps.iter().enumerate() {
                    let sy = reflect(y as isize + k as isize - radius, height);
                    acc += tap as u64 * horizontal[(sy * width + x) * channels + c] as u64;
                }
                out[(y * width + x) * channels + c] = ((acc + half) >> (2 * KERNEL_BITS)) as u8;
            }
        }
    }
    out
}

/// Blurs each frame with a Gaussian of `sigma` over a `(2·radius+1)²`
/// window, then keeps the blurred value only where the mask is set.
pub fn blur_regions(seq: &FrameSequence, masks: &MaskSequence, sigma: f64, radius: usize) -> Result<FrameSequence> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(MinimizeError::InvalidSigma(sigma));
    }
    if radius < 1 {
        return Err(MinimizeError::InvalidRadius(radius));
    }
    masks.check_matches(seq)?;
    let (h, w, c) = (seq.height(), seq.width(), seq.channels());
    let taps = fixed_point_kernel(&gaussian_kernel(sigma, radius));
    let frames = seq
        .frames()
        .par_iter()
        .zip(masks.masks().par_iter())
        .map(|(frame, mask)| {
            if mask.iter().all(|&m| m == 0) {
                return frame.clone();
            }
            let blurred = blur_frame(frame, h, w, c, &taps);
            let mut out = frame.clone();
            for ((dst, src), &m) in out.chunks_exact_mut(c).zip(blurred.chunks_exact(c)).zip(mask) {
                if m == 1 {
                    dst.copy_from_slice(src);
                }
            }
            out
        })
        .collect();
    Ok(FrameSequence::with_indices(h, w, c, frames, seq.indices().to_vec())?)
}

/// Per-sample temporal median (lower median for an even frame count).
pub fn temporal_median(seq: &FrameSequence) -> Vec<u8> {
    let t = seq.t_count();
    let len = seq.frame(0).len();
    (0..len)
        .into_par_iter()
        .map(|i| {
            let mut column: Vec<u8> = seq.frames().iter().map(|f| f[i]).collect();
            let mid = (t - 1) / 2;
            *column.select_nth_unstable(mid).1
        })
        .collect()
}

/// Keeps pixels whose largest per-channel deviation from the temporal median
/// exceeds `threshold`; every other pixel becomes `fill`.
pub fn background_removal(seq: &FrameSequence, threshold: u8, fill: u8) -> Result<FrameSequence> {
    if seq.t_count() < 2 {
        return Err(MinimizeError::TooFewFrames(seq.t_count()));
    }
    if threshold < 1 {
        return Err(MinimizeError::InvalidThreshold(threshold));
    }
    let c = seq.channels();
    let background = temporal_median(seq);
    let frames = seq
        .frames()
        .par_iter()
        .map(|frame| {
            let mut out = frame.clone();
            for (px, bg) in out.chunks_exact_mut(c).zip(background.chunks_exact(c)) {
                let deviation = px.iter().zip(bg).map(|(&v, &b)| v.abs_diff(b)).max().unwrap_or(0);
                if deviation <= threshold {
                    px.fill(fill);
                }
            }
            out
        })
        .collect();
    Ok(FrameSequence::with_indices(
        seq.height(),
        seq.width(),
        c,
        frames,
        seq.indices().to_vec(),
    )?)
}

/// Applies every step of `spec` in order.
///
/// Masks follow the frames through the pipeline: temporal sampling picks
/// the same indices and downsampling reduces them by majority vote, so later
/// region steps stay aligned.
pub fn apply_pipeline(
    seq: &FrameSequence,
    masks: Option<&MaskSequence>,
    spec: &PipelineSpec,
) -> Result<MinimizedRepresentation> {
    spec.validate()?;
    if let Some(m) = masks {
        m.check_matches(seq)?;
    }
    let mut frames = seq.clone();
    let mut masks = masks.cloned();
    let mut warnings = Vec::new();
    for (index, step) in spec.steps.iter().enumerate() {
        let op = step.op_name();
        if step.needs_masks() && masks.is_none() {
            return Err(MinimizeError::MasksRequired { index, op });
        }
        let wrap = |e: MinimizeError| MinimizeError::Step {
            index,
            op,
            source: Box::new(e),
        };
        match *step {
            TransformStep::TemporalSample { stride, start } => {
                let (f, m) = temporal_sample(&frames, masks.as_ref(), stride, start).map_err(wrap)?;
                frames = f;
                masks = m;
            }
            TransformStep::Downsample { factor } => {
                if downsample_truncates(frames.height(), frames.width(), factor) {
                    warnings.push(format!(
                        "step {index} (downsample x{factor}): {}x{} not divisible, trailing rows/columns dropped",
                        frames.height(),
                        frames.width()
                    ));
                }
                let f = downsample(&frames, factor).map_err(wrap)?;
                masks = masks.map(|m| downsample_masks(&m, factor)).transpose().map_err(wrap)?;
                frames = f;
            }
            TransformStep::MaskRegions { fill } => {
                frames = mask_regions(&frames, masks.as_ref().expect("checked"), fill).map_err(wrap)?;
            }
            TransformStep::BlurRegions { sigma, radius } => {
                frames = blur_regions(&frames, masks.as_ref().expect("checked"), sigma, radius).map_err(wrap)?;
            }
            TransformStep::BackgroundRemoval { threshold, fill } => {
                frames = background_removal(&frames, threshold, fill).map_err(wrap)?;
            }
        }
    }
    Ok(MinimizedRepresentation {
        sequence: frames,
        masks,
        provenance: spec.clone(),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq_from(h: usize, w: usize, c: usize, frames: Vec<Vec<u8>>) -> FrameSequence {
        FrameSequence::new(h, w, c, frames).unwrap()
    }

    fn numbered(t_count: usize) -> FrameSequence {
        seq_from(1, 1, 1, (0..t_count).map(|t| vec![t as u8]).collect())
    }

    #[test]
    fn sample_indices_examples() {
        assert_eq!(temporal_sample_indices(10, 1, 0).unwrap().indices(), (0..10).collect::<Vec<_>>());
        assert_eq!(temporal_sample_indices(25, 10, 0).unwrap().indices(), &[0, 10, 20]);
        assert_eq!(temporal_sample_indices(30, 5, 2).unwrap().indices(), &[2, 7, 12, 17, 22, 27]);
    }

    #[test]
    fn sample_index_errors() {
        assert!(matches!(temporal_sample_indices(10, 0, 0), Err(MinimizeError::InvalidStride(0))));
        assert!(matches!(
            temporal_sample_indices(10, 1, 10),
            Err(MinimizeError::StartOutOfRange { start: 10, t_count: 10 })
        ));
    }

    #[test]
    fn sampling_keeps_source_frames() {
        let seq = numbered(25);
        let (out, _) = temporal_sample(&seq, None, 10, 0).unwrap();
        assert_eq!(out.frames(), &[vec![0], vec![10], vec![20]]);
        assert_eq!(out.indices(), &[0, 10, 20]);
    }

    #[test]
    fn sampling_twice_equals_product_stride() {
        let seq = numbered(60);
        let (a, _) = temporal_sample(&seq, None, 5, 0).unwrap();
        let (a, _) = temporal_sample(&a, None, 2, 0).unwrap();
        let (b, _) = temporal_sample(&seq, None, 10, 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_masks_in_lockstep() {
        let seq = numbered(10);
        let masks = MaskSequence::new(1, 1, (0..10).map(|t| vec![(t % 2) as u8]).collect()).unwrap();
        let (_, m) = temporal_sample(&seq, Some(&masks), 3, 1).unwrap();
        let m = m.unwrap();
        // indices 1, 4, 7
        assert_eq!(m.masks(), &[vec![1], vec![0], vec![1]]);
    }

    #[test]
    fn downsample_constant() {
        let seq = FrameSequence::constant(2, 8, 6, 3, 128).unwrap();
        let out = downsample(&seq, 2).unwrap();
        assert_eq!((out.height(), out.width()), (4, 3));
        assert!(out.frames().iter().flatten().all(|&v| v == 128));
    }

    #[test]
    fn downsample_block_mean() {
        let seq = seq_from(2, 2, 1, vec![vec![0, 0, 0, 4]]);
        assert_eq!(downsample(&seq, 2).unwrap().frames(), &[vec![1]]);
        // 0+0+1+1 = 2 -> 0.5 rounds up
        let seq = seq_from(2, 2, 1, vec![vec![0, 0, 1, 1]]);
        assert_eq!(downsample(&seq, 2).unwrap().frames(), &[vec![1]]);
    }

    #[test]
    fn downsample_truncates_trailing() {
        let seq = FrameSequence::constant(1, 5, 7, 1, 9).unwrap();
        let out = downsample(&seq, 2).unwrap();
        assert_eq!((out.height(), out.width()), (2, 3));
        assert!(matches!(downsample(&seq, 3), Err(MinimizeError::InvalidFactor(3))));
        let tiny = FrameSequence::constant(1, 3, 8, 1, 9).unwrap();
        assert!(matches!(downsample(&tiny, 4), Err(MinimizeError::FrameTooSmall { .. })));
    }

    #[test]
    fn mask_downsample_majority_tie_is_foreground() {
        let masks = MaskSequence::new(2, 4, vec![vec![1, 0, 1, 0, 1, 0, 0, 0]]).unwrap();
        let out = downsample_masks(&masks, 2).unwrap();
        assert_eq!(out.masks(), &[vec![1, 0]]);
    }

    #[test]
    fn mask_regions_cases() {
        let seq = seq_from(1, 2, 3, vec![vec![10, 20, 30, 40, 50, 60]]);
        let none = MaskSequence::empty(1, 1, 2);
        assert_eq!(mask_regions(&seq, &none, 0).unwrap(), seq);
        let all = MaskSequence::full(1, 1, 2);
        assert!(mask_regions(&seq, &all, 0).unwrap().frames()[0].iter().all(|&v| v == 0));
        let half = MaskSequence::new(1, 2, vec![vec![0, 1]]).unwrap();
        let once = mask_regions(&seq, &half, 7).unwrap();
        assert_eq!(once.frame(0), &[10, 20, 30, 7, 7, 7]);
        assert_eq!(mask_regions(&once, &half, 7).unwrap(), once);
        let wrong = MaskSequence::empty(1, 2, 2);
        assert!(mask_regions(&seq, &wrong, 0).is_err());
    }

    #[test]
    fn kernel_normalized_and_symmetric() {
        for (sigma, radius) in [(1.0, 3), (10.0, 10), (0.3, 1), (50.0, 2)] {
            let k = gaussian_kernel(sigma, radius);
            assert_eq!(k.len(), 2 * radius + 1);
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..k.len() {
                assert_eq!(k[i], k[k.len() - 1 - i]);
            }
            let q = fixed_point_kernel(&k);
            assert_eq!(q.iter().sum::<u32>(), KERNEL_ONE);
        }
    }

    #[test]
    fn reflect_indexing() {
        let got: Vec<_> = (-3..7).map(|i| reflect(i, 4)).collect();
        assert_eq!(got, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect(-5, 1), 0);
        assert_eq!(reflect(9, 2), 1);
    }

    #[test]
    fn blur_white_dot_matches_direct_convolution() {
        let (n, sigma, radius) = (7usize, 1.0, 3usize);
        let mut frame = vec![0u8; n * n];
        frame[3 * n + 3] = 255;
        let seq = seq_from(n, n, 1, vec![frame]);
        let out = blur_regions(&seq, &MaskSequence::full(1, n, n), sigma, radius).unwrap();
        // direct 2-D convolution in floating point over an explicitly
        // mirror-padded patch (single fold, radius < n)
        let g: Vec<f64> = (0..=2 * radius)
            .map(|i| (-((i as f64 - 3.0).powi(2)) / 2.0).exp())
            .collect();
        let total: f64 = g.iter().sum();
        let r = radius as isize;
        let nn = n as isize;
        let fold = |i: isize| if i < 0 { -i } else if i >= nn { 2 * nn - 2 - i } else { i };
        let src = |y: isize, x: isize| if fold(y) == 3 && fold(x) == 3 { 255.0 } else { 0.0 };
        for y in 0..nn {
            for x in 0..nn {
                let mut expected = 0.0;
                for dy in -r..=r {
                    for dx in -r..=r {
                        let wgt = g[(dy + r) as usize] / total * g[(dx + r) as usize] / total;
                        expected += wgt * src(y + dy, x + dx);
                    }
                }
                let got = out.pixel(0, y as usize, x as usize, 0) as f64;
                assert!((got - expected).abs() <= 0.5 + 1e-3, "({y},{x}) got {got} want {expected}");
            }
        }
        let center = 255.0 * (g[3] / total).powi(2);
        assert_eq!(out.pixel(0, 3, 3, 0) as f64, center.round());
        for d in 1..=3 {
            let v = out.pixel(0, 3, 3 + d, 0);
            assert_eq!(v, out.pixel(0, 3, 3 - d, 0));
            assert_eq!(v, out.pixel(0, 3 + d, 3, 0));
            assert_eq!(v, out.pixel(0, 3 - d, 3, 0));
        }
    }

    #[test]
    fn blur_constant_and_empty_mask() {
        let seq = FrameSequence::constant(2, 9, 5, 3, 77).unwrap();
        let out = blur_regions(&seq, &MaskSequence::full(2, 9, 5), 10.0, 10).unwrap();
        assert_eq!(out, seq);
        let noisy = seq_from(3, 3, 1, vec![(0..9).map(|v| v * 20).collect()]);
        assert_eq!(blur_regions(&noisy, &MaskSequence::empty(1, 3, 3), 2.0, 2).unwrap(), noisy);
    }

    #[test]
    fn blur_parameter_errors() {
        let seq = FrameSequence::constant(1, 3, 3, 1, 0).unwrap();
        let m = MaskSequence::full(1, 3, 3);
        assert!(matches!(blur_regions(&seq, &m, 0.0, 1), Err(MinimizeError::InvalidSigma(_))));
        assert!(matches!(blur_regions(&seq, &m, -1.0, 1), Err(MinimizeError::InvalidSigma(_))));
        assert!(matches!(blur_regions(&seq, &m, 1.0, 0), Err(MinimizeError::InvalidRadius(0))));
        assert!(blur_regions(&seq, &MaskSequence::full(1, 2, 3), 1.0, 1).is_err());
    }

    #[test]
    fn background_removal_examples() {
        let seq = seq_from(1, 1, 1, vec![vec![10], vec![10], vec![200]]);
        let out = background_removal(&seq, 25, 0).unwrap();
        assert_eq!(out.frames(), &[vec![0], vec![0], vec![200]]);

        let static_seq = FrameSequence::constant(4, 3, 3, 3, 90).unwrap();
        let out = background_removal(&static_seq, 1, 5).unwrap();
        assert!(out.frames().iter().flatten().all(|&v| v == 5));

        let mut frames = vec![vec![50u8; 16]; 4];
        for (y, x) in [(1, 1), (1, 2), (2, 1), (2, 2)] {
            frames[2][y * 4 + x] = 255;
        }
        let out = background_removal(&seq_from(4, 4, 1, frames.clone()), 25, 0).unwrap();
        for t in 0..4 {
            for i in 0..16 {
                let expect = if t == 2 && frames[2][i] == 255 { 255 } else { 0 };
                assert_eq!(out.frame(t)[i], expect);
            }
        }
    }

    #[test]
    fn background_even_count_uses_lower_median() {
        let seq = seq_from(1, 1, 1, vec![vec![0], vec![100], vec![100], vec![0]]);
        assert_eq!(temporal_median(&seq), vec![0]);
        let out = background_removal(&seq, 50, 7).unwrap();
        assert_eq!(out.frames(), &[vec![7], vec![100], vec![100], vec![7]]);
    }

    #[test]
    fn background_channel_max() {
        // only the green channel deviates; the whole pixel is kept
        let seq = seq_from(1, 1, 3, vec![vec![5, 5, 5], vec![5, 5, 5], vec![5, 60, 5]]);
        let out = background_removal(&seq, 25, 0).unwrap();
        assert_eq!(out.frame(2), &[5, 60, 5]);
        assert_eq!(out.frame(0), &[0, 0, 0]);
    }

    #[test]
    fn background_errors() {
        assert!(matches!(background_removal(&numbered(1), 25, 0), Err(MinimizeError::TooFewFrames(1))));
        assert!(matches!(background_removal(&numbered(3), 0, 0), Err(MinimizeError::InvalidThreshold(0))));
    }

    #[test]
    fn pipeline_json_contract() {
        let spec = PipelineSpec::from_json(
            r#"{"steps":[{"op":"temporal_sample","stride":5,"start":0},{"op":"blur_regions","sigma":10,"radius":10}]}"#,
        )
        .unwrap();
        assert_eq!(
            spec.steps,
            vec![
                TransformStep::TemporalSample { stride: 5, start: 0 },
                TransformStep::BlurRegions { sigma: 10.0, radius: 10 }
            ]
        );
        assert_eq!(PipelineSpec::from_json(&spec.to_json()).unwrap(), spec);

        let defaults = PipelineSpec::from_json(r#"{"steps":[{"op":"mask_regions"},{"op":"background_removal"}]}"#).unwrap();
        assert_eq!(
            defaults.steps,
            vec![
                TransformStep::MaskRegions { fill: 0 },
                TransformStep::BackgroundRemoval { threshold: 25, fill: 0 }
            ]
        );

        for bad in [
            r#"{"steps":[{"op":"pixelate","size":4}]}"#,
            r#"{"steps":[{"op":"downsample","factor":2,"mode":"area"}]}"#,
            r#"{"steps":[],"extra":1}"#,
            r#"{"steps":[{"op":"downsample","factor":3}]}"#,
            r#"{"steps":[{"op":"temporal_sample","stride":0}]}"#,
            r#"{"steps":[{"op":"temporal_sample","stride":2},{"op":"temporal_sample","stride":5}]}"#,
            r#"{"steps":[{"op":"blur_regions","sigma":0}]}"#,
            r#"{"steps":[{"op":"background_removal","threshold":0}]}"#,
        ] {
            assert!(PipelineSpec::from_json(bad).is_err(), "accepted {bad}");
        }
    }

    #[test]
    fn pipeline_requires_masks() {
        let seq = numbered(10);
        let spec = PipelineSpec::new(vec![
            TransformStep::TemporalSample { stride: 5, start: 0 },
            TransformStep::BlurRegions { sigma: 1.0, radius: 1 },
        ])
        .unwrap();
        let err = apply_pipeline(&seq, None, &spec).unwrap_err();
        assert!(err.to_string().contains("blur_regions"));
        assert!(matches!(err, MinimizeError::MasksRequired { index: 1, .. }));
    }

    #[test]
    fn pipeline_sample_then_mask() {
        let seq = FrameSequence::constant(10, 4, 4, 3, 200).unwrap();
        let masks = MaskSequence::full(10, 4, 4);
        let spec = PipelineSpec::new(vec![
            TransformStep::TemporalSample { stride: 5, start: 0 },
            TransformStep::MaskRegions { fill: 0 },
        ])
        .unwrap();
        let z = apply_pipeline(&seq, Some(&masks), &spec).unwrap();
        assert_eq!(z.sequence.t_count(), 2);
        assert!(z.sequence.frames().iter().flatten().all(|&v| v == 0));
        assert_eq!(z.provenance, spec);
    }

    #[test]
    fn pipeline_downsample_keeps_masks_aligned() {
        let seq = FrameSequence::constant(1, 6, 4, 1, 100).unwrap();
        let masks = MaskSequence::full(1, 6, 4);
        let spec = PipelineSpec::new(vec![
            TransformStep::Downsample { factor: 4 },
            TransformStep::MaskRegions { fill: 0 },
        ])
        .unwrap();
        let z = apply_pipeline(&seq, Some(&masks), &spec).unwrap();
        assert_eq!((z.sequence.height(), z.sequence.width()), (1, 1));
        assert_eq!(z.sequence.frame(0), &[0]);
        assert_eq!(z.warnings.len(), 1);
    }

    #[test]
    fn step_errors_name_the_step() {
        let seq = numbered(1);
        let spec = PipelineSpec::new(vec![TransformStep::BackgroundRemoval { threshold: 25, fill: 0 }]).unwrap();
        let err = apply_pipeline(&seq, None, &spec).unwrap_err();
        assert!(err.to_string().contains("background_removal"), "{err}");
    }
}
