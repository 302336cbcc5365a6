//! Frame and mask sequences and their on-disk representation.
//!
//! Frames live in a directory as one image per frame, named by a zero-padded
//! decimal index (`000000.png`, `000001.png`, ...). PNG is read and written,
//! binary PGM is read. Lossy formats are rejected so that pixel-exact
//! transforms survive a save/load cycle.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ExtendedColorType, ImageFormat, ImageReader};
use thiserror::Error;

use crate::minimize::PipelineSpec;

/// Default zero-padding width for written frame files.
pub const DEFAULT_INDEX_WIDTH: usize = 6;

/// Mask pixels strictly above this value are foreground.
pub const MASK_THRESHOLD: u8 = 127;

const LOSSY_EXTENSIONS: &[&str] = &["jpg", "jpeg", "jpe", "jfif", "webp", "avif", "heic"];

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("directory not found: {0}")]
    MissingDirectory(PathBuf),
    #[error("no frame files found in {0}")]
    NoMatches(PathBuf),
    #[error("inconsistent dimensions: {path} is {found}, expected {expected}")]
    InconsistentDimensions {
        path: PathBuf,
        found: String,
        expected: String,
    },
    #[error("dimension mismatch: {what} is {found}, expected {expected}")]
    DimensionMismatch {
        what: String,
        found: String,
        expected: String,
    },
    #[error("lossy image format rejected: {0}")]
    LossyFormat(PathBuf),
    #[error("unsupported pixel format in {path}: {format}")]
    UnsupportedPixelFormat { path: PathBuf, format: String },
    #[error("duplicate frame index {index} in {dir}")]
    DuplicateIndex { index: usize, dir: PathBuf },
    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("cannot encode {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid sequence: {0}")]
    Invalid(String),
}

pub type Result<T, E = FrameError> = std::result::Result<T, E>;

/// A clip of `T` frames of identical `H×W×C` geometry, stored as interleaved
/// 8-bit samples in row-major order.
///
/// `indices` carries the source frame number of each frame. Sequences built in
/// memory get `0..T`; sequences loaded from disk keep their file indices, and
/// temporal sampling keeps the indices of the frames it selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    height: usize,
    width: usize,
    channels: usize,
    frames: Vec<Vec<u8>>,
    indices: Vec<usize>,
}

impl FrameSequence {
    pub fn new(height: usize, width: usize, channels: usize, frames: Vec<Vec<u8>>) -> Result<Self> {
        let indices = (0..frames.len()).collect();
        Self::with_indices(height, width, channels, frames, indices)
    }

    pub fn with_indices(
        height: usize,
        width: usize,
        channels: usize,
        frames: Vec<Vec<u8>>,
        indices: Vec<usize>,
    ) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(FrameError::Invalid(format!(
                "frame dimensions must be positive, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(FrameError::Invalid(format!(
                "channel count must be 1 or 3, got {channels}"
            )));
        }
        if frames.is_empty() {
            return Err(FrameError::Invalid("sequence must contain at least one frame".into()));
        }
        if indices.len() != frames.len() {
            return Err(FrameError::Invalid(format!(
                "{} indices for {} frames",
                indices.len(),
                frames.len()
            )));
        }
        let expected = height * width * channels;
        if let Some((t, f)) = frames.iter().enumerate().find(|(_, f)| f.len() != expected) {
            return Err(FrameError::Invalid(format!(
                "frame {t} holds {} samples, expected {expected}",
                f.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            frames,
            indices,
        })
    }

    /// A sequence of `t_count` frames with every sample set to `value`.
    pub fn constant(t_count: usize, height: usize, width: usize, channels: usize, value: u8) -> Result<Self> {
        let frame = vec![value; height * width * channels];
        Self::new(height, width, channels, vec![frame; t_count])
    }

    pub fn t_count(&self) -> usize {
        self.frames.len()
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

    pub fn frames(&self) -> &[Vec<u8>] {
        &self.frames
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        &self.frames[t]
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn pixel(&self, t: usize, y: usize, x: usize, c: usize) -> u8 {
        self.frames[t][(y * self.width + x) * self.channels + c]
    }

    pub fn into_frames(self) -> Vec<Vec<u8>> {
        self.frames
    }
}

/// Per-frame binary masks; `1` marks the region of interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskSequence {
    height: usize,
    width: usize,
    masks: Vec<Vec<u8>>,
}

impl MaskSequence {
    /// Builds a mask sequence, binarizing every value with [`binarize`].
    pub fn new(height: usize, width: usize, masks: Vec<Vec<u8>>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(FrameError::Invalid(format!(
                "mask dimensions must be positive, got {height}x{width}"
            )));
        }
        let expected = height * width;
        if let Some((t, m)) = masks.iter().enumerate().find(|(_, m)| m.len() != expected) {
            return Err(FrameError::Invalid(format!(
                "mask {t} holds {} pixels, expected {expected}",
                m.len()
            )));
        }
        let masks = masks.into_iter().map(|m| binarize(&m)).collect();
        Ok(Self { height, width, masks })
    }

    pub fn empty(t_count: usize, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            masks: vec![vec![0; height * width]; t_count],
        }
    }

    pub fn full(t_count: usize, height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            masks: vec![vec![1; height * width]; t_count],
        }
    }

    pub fn t_count(&self) -> usize {
        self.masks.len()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn masks(&self) -> &[Vec<u8>] {
        &self.masks
    }

    pub fn mask(&self, t: usize) -> &[u8] {
        &self.masks[t]
    }

    pub(crate) fn from_binary_unchecked(height: usize, width: usize, masks: Vec<Vec<u8>>) -> Self {
        Self { height, width, masks }
    }

    /// Checks that this mask sequence annotates `seq` frame for frame.
    pub fn check_matches(&self, seq: &FrameSequence) -> Result<()> {
        if self.height != seq.height() || self.width != seq.width() || self.t_count() != seq.t_count() {
            return Err(FrameError::DimensionMismatch {
                what: "mask sequence".into(),
                found: format!("{}x{}x{}", self.t_count(), self.height, self.width),
                expected: format!("{}x{}x{}", seq.t_count(), seq.height(), seq.width()),
            });
        }
        Ok(())
    }
}

/// Maps 8-bit mask values to `{0,1}` with threshold [`MASK_THRESHOLD`].
/// Values that are already binary are left unchanged.
pub fn binarize(values: &[u8]) -> Vec<u8> {
    values
        .iter()
        .map(|&v| if v == 1 || v > MASK_THRESHOLD { 1 } else { 0 })
        .collect()
}

/// The output `z` of a minimization pipeline together with the spec that
/// produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimizedRepresentation {
    pub sequence: FrameSequence,
    pub masks: Option<MaskSequence>,
    pub provenance: PipelineSpec,
    pub warnings: Vec<String>,
}

/// Which files in a directory count as frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FramePattern {
    /// Required number of digits in the file stem; `None` accepts any width.
    pub digits: Option<usize>,
}

impl FramePattern {
    pub fn with_digits(digits: usize) -> Self {
        Self { digits: Some(digits) }
    }

    fn index_of(&self, stem: &str) -> Option<usize> {
        if stem.is_empty() || !stem.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if let Some(d) = self.digits {
            if stem.len() != d {
                return None;
            }
        }
        stem.parse().ok()
    }
}

/// Lists frame files in `dir`, keyed and ordered by numeric index.
///
/// Files whose stem is not a decimal index are ignored. An indexed file with
/// a lossy extension is an error, as is the same index appearing twice.
pub fn list_frame_files(dir: &Path, pattern: FramePattern) -> Result<Vec<(usize, PathBuf)>> {
    if !dir.is_dir() {
        return Err(FrameError::MissingDirectory(dir.to_path_buf()));
    }
    let entries = fs::read_dir(dir).map_err(|source| FrameError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut found: BTreeMap<usize, PathBuf> = BTreeMap::new();
    for entry in entries {
        let entry = entry.map_err(|source| FrameError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        let Some(index) = pattern.index_of(stem) else {
            continue;
        };
        let ext = ext.to_ascii_lowercase();
        if LOSSY_EXTENSIONS.contains(&ext.as_str()) {
            return Err(FrameError::LossyFormat(path));
        }
        if ext != "png" && ext != "pgm" {
            continue;
        }
        if found.insert(index, path).is_some() {
            return Err(FrameError::DuplicateIndex {
                index,
                dir: dir.to_path_buf(),
            });
        }
    }
    Ok(found.into_iter().collect())
}

struct RawImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<u8>,
}

fn read_image(path: &Path) -> Result<RawImage> {
    let format = match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(e) if e == "pgm" => ImageFormat::Pnm,
        _ => ImageFormat::Png,
    };
    let mut reader = ImageReader::open(path).map_err(|source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    reader.set_format(format);
    let img = reader.decode().map_err(|source| FrameError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let (width, height) = (img.width() as usize, img.height() as usize);
    let (channels, data) = match img {
        DynamicImage::ImageLuma8(buf) => (1, buf.into_raw()),
        DynamicImage::ImageRgb8(buf) => (3, buf.into_raw()),
        other => {
            return Err(FrameError::UnsupportedPixelFormat {
                path: path.to_path_buf(),
                format: format!("{:?}", other.color()),
            })
        }
    };
    Ok(RawImage {
        height,
        width,
        channels,
        data,
    })
}

/// Loads every frame in `dir` matching `pattern`, in ascending index order.
pub fn load_frames(dir: &Path, pattern: FramePattern) -> Result<FrameSequence> {
    let files = list_frame_files(dir, pattern)?;
    if files.is_empty() {
        return Err(FrameError::NoMatches(dir.to_path_buf()));
    }
    let mut frames = Vec::with_capacity(files.len());
    let mut indices = Vec::with_capacity(files.len());
    let mut geometry: Option<(usize, usize, usize)> = None;
    for (index, path) in &files {
        let img = read_image(path)?;
        let dims = (img.height, img.width, img.channels);
        match geometry {
            None => geometry = Some(dims),
            Some(g) if g != dims => {
                return Err(FrameError::InconsistentDimensions {
                    path: path.clone(),
                    found: format!("{}x{}x{}", dims.0, dims.1, dims.2),
                    expected: format!("{}x{}x{}", g.0, g.1, g.2),
                })
            }
            Some(_) => {}
        }
        frames.push(img.data);
        indices.push(*index);
    }
    let (h, w, c) = geometry.expect("at least one frame");
    FrameSequence::with_indices(h, w, c, frames, indices)
}

/// Loads one mask per frame in `expected`, matched by frame index.
///
/// A frame without a mask file gets an all-zero mask; each such case is
/// returned as a warning line and logged.
pub fn load_masks(dir: &Path, pattern: FramePattern, expected: &FrameSequence) -> Result<(MaskSequence, Vec<String>)> {
    let files: BTreeMap<usize, PathBuf> = list_frame_files(dir, pattern)?.into_iter().collect();
    let (h, w) = (expected.height(), expected.width());
    let mut masks = Vec::with_capacity(expected.t_count());
    let mut warnings = Vec::new();
    for &index in expected.indices() {
        match files.get(&index) {
            Some(path) => {
                let img = read_image(path)?;
                if img.channels != 1 {
                    return Err(FrameError::UnsupportedPixelFormat {
                        path: path.clone(),
                        format: format!("{} channels (masks must be single-channel)", img.channels),
                    });
                }
                if img.height != h || img.width != w {
                    return Err(FrameError::DimensionMismatch {
                        what: path.display().to_string(),
                        found: format!("{}x{}", img.height, img.width),
                        expected: format!("{h}x{w}"),
                    });
                }
                masks.push(binarize(&img.data));
            }
            None => {
                let msg = format!("no mask for frame {index} in {}; using an empty mask", dir.display());
                log::warn!("{msg}");
                warnings.push(msg);
                masks.push(vec![0; h * w]);
            }
        }
    }
    Ok((MaskSequence::from_binary_unchecked(h, w, masks), warnings))
}

/// File name for the frame at position `position`.
pub fn frame_file_name(position: usize, width: usize) -> String {
    format!("{position:0width$}.png")
}

/// Writes each frame as PNG named by its position in the sequence, using
/// [`DEFAULT_INDEX_WIDTH`] digits. Returns the number of files written.
pub fn save_frames(seq: &FrameSequence, dir: &Path) -> Result<usize> {
    save_frames_with_width(seq, dir, DEFAULT_INDEX_WIDTH)
}

pub fn save_frames_with_width(seq: &FrameSequence, dir: &Path, width: usize) -> Result<usize> {
    fs::create_dir_all(dir).map_err(|source| FrameError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let color = if seq.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    for (t, frame) in seq.frames().iter().enumerate() {
        let path = dir.join(frame_file_name(t, width));
        image::save_buffer_with_format(
            &path,
            frame,
            seq.width() as u32,
            seq.height() as u32,
            color,
            ImageFormat::Png,
        )
        .map_err(|source| match source {
            image::ImageError::IoError(source) => FrameError::Io {
                path: path.clone(),
                source,
            },
            source => FrameError::Encode {
                path: path.clone(),
                source,
            },
        })?;
    }
    Ok(seq.t_count())
}

/// Writes masks as single-channel PNGs with values 0 and 255.
pub fn save_masks(masks: &MaskSequence, dir: &Path, width: usize) -> Result<usize> {
    let frames = masks
        .masks()
        .iter()
        .map(|m| m.iter().map(|&v| v * 255).collect())
        .collect();
    let seq = FrameSequence::new(masks.height(), masks.width(), 1, frames)?;
    save_frames_with_width(&seq, dir, width)
}
