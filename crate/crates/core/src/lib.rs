//! Data-minimization transforms for video frame sequences and Pareto-based
//! selection of minimization settings from utility/privacy metric tables.
//!
//! - [`frames`]: frame and mask sequences, PNG/PGM I/O
//! - [`minimize`]: temporal sampling, downsampling, region masking and blur,
//!   background removal, and pipelines composing them
//! - [`select`]: dominance, Pareto set, normalization and the selection
//!   strategies
//! - [`report`]: report CSVs and SVG Pareto projections
//! - [`cli`]: the `minsel` command-line tool

pub mod cli;
pub mod frames;
pub mod minimize;
pub mod report;
pub mod select;

pub use frames::{FrameSequence, MaskSequence, MinimizedRepresentation};
pub use minimize::{apply_pipeline, PipelineSpec, TransformStep};
pub use select::{MetricRecord, MetricTable, PrivacyThresholds, Scope, SelectionReport, SelectionWeights};
