//! Command-line front end: `minimize`, `select`, `report` and `pipeline`.
//!
//! Exit status: 0 on success, 1 on a runtime or data error, 2 on a usage
//! error.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::frames::{
    self, FramePattern, FrameSequence, MaskSequence, DEFAULT_INDEX_WIDTH, MASK_THRESHOLD,
};
use crate::minimize::{self, PipelineSpec};
use crate::report;
use crate::select::{MetricTable, PrivacyThresholds, Scope, SelectionReport, SelectionWeights};

pub const THREADS_ENV: &str = "MINSEL_THREADS";
pub const PROVENANCE_FILE: &str = "provenance.json";
pub const DEFAULT_CLIP_LENGTH: usize = 10;

#[derive(Debug, Parser)]
#[command(name = "minsel", version, about = "Video data minimization and Pareto selection of minimization settings")]
pub struct Cli {
    /// Increase diagnostic output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Apply a minimization pipeline to a directory of frames.
    Minimize(MinimizeArgs),
    /// Select operating points from a metric table.
    Select(SelectArgs),
    /// Write the selection report, dominance matrix and Pareto projections.
    Report(SelectArgs),
    /// Validate a pipeline document and print it with all defaults resolved.
    Pipeline(PipelineArgs),
}

#[derive(Debug, Args)]
pub struct MinimizeArgs {
    /// Directory of input frames (zero-padded numeric names, PNG or PGM).
    #[arg(long)]
    pub input: PathBuf,
    /// Directory of per-frame region masks.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    /// Pipeline JSON, or a provenance.json from an earlier run.
    #[arg(long)]
    pub pipeline: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Segment the input into non-overlapping clips of this many sampled frames.
    #[arg(long)]
    pub clip_length: Option<usize>,
    /// Stride used when creating clips.
    #[arg(long, requires = "clip_length")]
    pub stride: Option<usize>,
    /// First frame used when creating clips.
    #[arg(long, requires = "clip_length")]
    pub start: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SelectArgs {
    /// Metric table CSV with header `setting,auc,cmap,f1`.
    #[arg(long)]
    pub metrics: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Weights for AUC, F1 and cMAP, summing to 1.
    #[arg(long, value_name = "A,F,C", default_value = "0.3333333333333333,0.3333333333333333,0.3333333333333334")]
    pub weights: SelectionWeights,
    /// Upper bound on F1 for constrained selection.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub tau_f: f64,
    /// Upper bound on cMAP for constrained selection.
    #[arg(long, default_value_t = f64::INFINITY)]
    pub tau_c: f64,
    /// Normalization range: all settings or only the Pareto set.
    #[arg(long, default_value = "all")]
    pub scope: Scope,
}

#[derive(Debug, Args)]
pub struct PipelineArgs {
    #[arg(long)]
    pub pipeline: PathBuf,
    /// Write the resolved document here instead of standard output.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Clip segmentation settings recorded in provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClipSettings {
    pub clip_length: usize,
    pub stride: usize,
    pub start: usize,
    pub overlap: usize,
}

/// Everything needed to regenerate the output of a `minimize` run from the
/// same inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub pipeline: PipelineSpec,
    pub clips: Option<ClipSettings>,
    pub index_width: usize,
    pub mask_threshold: u8,
    pub masks_given: bool,
    pub frames_in: usize,
    pub frames_out: usize,
    pub input_geometry: [usize; 3],
    pub output_geometry: [usize; 3],
    pub warnings: Vec<String>,
}

enum PipelineSource {
    Spec(PipelineSpec),
    Provenance(Box<Provenance>),
}

fn read_pipeline_source(path: &Path) -> Result<PipelineSource> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read pipeline {}", path.display()))?;
    let value: serde_json::Value =
        serde_json::from_str(&text).with_context(|| format!("invalid JSON in {}", path.display()))?;
    if value.get("pipeline").is_some() && value.get("steps").is_none() {
        let prov: Provenance =
            serde_json::from_value(value).with_context(|| format!("invalid provenance {}", path.display()))?;
        prov.pipeline.validate()?;
        return Ok(PipelineSource::Provenance(Box::new(prov)));
    }
    Ok(PipelineSource::Spec(
        PipelineSpec::from_json(&text).with_context(|| format!("invalid pipeline {}", path.display()))?,
    ))
}

/// A clip of frames with its masks, when masks were given.
pub type Clip = (FrameSequence, Option<MaskSequence>);

/// Splits `seq` into non-overlapping clips of `clip_length` frames sampled
/// with `stride` from `start`. A trailing partial clip is dropped.
pub fn segment_clips(
    seq: &FrameSequence,
    masks: Option<&MaskSequence>,
    clips: &ClipSettings,
) -> Result<(Vec<Clip>, Vec<String>)> {
    if clips.clip_length == 0 {
        bail!("clip length must be at least 1");
    }
    let (sampled, sampled_masks) = minimize::temporal_sample(seq, masks, clips.stride, clips.start)?;
    let n = sampled.t_count() / clips.clip_length;
    if n == 0 {
        bail!(
            "{} frames sampled with stride {} from {} cannot fill one clip of {}",
            sampled.t_count(),
            clips.stride,
            clips.start,
            clips.clip_length
        );
    }
    let mut warnings = Vec::new();
    let leftover = sampled.t_count() % clips.clip_length;
    if leftover > 0 {
        let msg = format!("dropping {leftover} trailing sampled frames that do not fill a clip");
        log::warn!("{msg}");
        warnings.push(msg);
    }
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let range = k * clips.clip_length..(k + 1) * clips.clip_length;
        let frames = FrameSequence::with_indices(
            sampled.height(),
            sampled.width(),
            sampled.channels(),
            sampled.frames()[range.clone()].to_vec(),
            sampled.indices()[range.clone()].to_vec(),
        )?;
        let m = sampled_masks
            .as_ref()
            .map(|m| MaskSequence::new(m.height(), m.width(), m.masks()[range].to_vec()))
            .transpose()?;
        out.push((frames, m));
    }
    Ok((out, warnings))
}

fn geometry(seq: &FrameSequence) -> [usize; 3] {
    [seq.height(), seq.width(), seq.channels()]
}

pub fn cmd_minimize(args: &MinimizeArgs) -> Result<()> {
    let (spec, mut clips) = match read_pipeline_source(&args.pipeline)? {
        PipelineSource::Spec(spec) => (spec, None),
        PipelineSource::Provenance(p) => (p.pipeline, p.clips),
    };
    if let Some(clip_length) = args.clip_length {
        clips = Some(ClipSettings {
            clip_length,
            stride: args.stride.unwrap_or(1),
            start: args.start.unwrap_or(0),
            overlap: 0,
        });
    }

    let pattern = FramePattern::default();
    let seq = frames::load_frames(&args.input, pattern)?;
    let mut warnings = Vec::new();
    let masks = match &args.masks {
        Some(dir) => {
            let (m, w) = frames::load_masks(dir, pattern, &seq)?;
            warnings.extend(w);
            Some(m)
        }
        None => None,
    };
    if masks.is_none() {
        if let Some((index, step)) = spec.steps.iter().enumerate().find(|(_, s)| s.needs_masks()) {
            bail!(minimize::MinimizeError::MasksRequired {
                index,
                op: step.op_name()
            });
        }
    }

    fs::create_dir_all(&args.output).with_context(|| format!("cannot create {}", args.output.display()))?;
    let (frames_out, output_geometry) = match &clips {
        None if spec.is_empty() => copy_identity(&seq, &args.input, &args.output, pattern)?,
        None => {
            let z = minimize::apply_pipeline(&seq, masks.as_ref(), &spec)?;
            warnings.extend(z.warnings.iter().cloned());
            frames::save_frames(&z.sequence, &args.output)?;
            (z.sequence.t_count(), geometry(&z.sequence))
        }
        Some(c) => {
            let (segments, w) = segment_clips(&seq, masks.as_ref(), c)?;
            warnings.extend(w);
            let mut total = 0;
            let mut geom = geometry(&seq);
            for (k, (clip, clip_masks)) in segments.iter().enumerate() {
                let z = minimize::apply_pipeline(clip, clip_masks.as_ref(), &spec)
                    .with_context(|| format!("clip {k}"))?;
                warnings.extend(z.warnings.iter().map(|w| format!("clip {k}: {w}")));
                total += frames::save_frames(&z.sequence, &args.output.join(clip_dir_name(k)))?;
                geom = geometry(&z.sequence);
            }
            (total, geom)
        }
    };
    for w in &warnings {
        log::debug!("{w}");
    }

    let provenance = Provenance {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        pipeline: spec,
        clips,
        index_width: DEFAULT_INDEX_WIDTH,
        mask_threshold: MASK_THRESHOLD,
        masks_given: masks.is_some(),
        frames_in: seq.t_count(),
        frames_out,
        input_geometry: geometry(&seq),
        output_geometry,
        warnings,
    };
    let path = args.output.join(PROVENANCE_FILE);
    let mut json = serde_json::to_string_pretty(&provenance)?;
    json.push('\n');
    fs::write(&path, json).with_context(|| format!("cannot write {}", path.display()))?;
    log::info!("wrote {frames_out} frames to {}", args.output.display());
    Ok(())
}

pub fn clip_dir_name(k: usize) -> String {
    format!("clip_{k:06}")
}

/// Identity pipeline: PNG inputs are copied verbatim under their output
/// names, anything else is re-encoded losslessly.
fn copy_identity(seq: &FrameSequence, input: &Path, output: &Path, pattern: FramePattern) -> Result<(usize, [usize; 3])> {
    let files = frames::list_frame_files(input, pattern)?;
    for (position, (_, src)) in files.iter().enumerate() {
        let dst = output.join(frames::frame_file_name(position, DEFAULT_INDEX_WIDTH));
        let is_png = src
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if is_png {
            fs::copy(src, &dst).with_context(|| format!("cannot copy {} to {}", src.display(), dst.display()))?;
        } else {
            let one = FrameSequence::new(seq.height(), seq.width(), seq.channels(), vec![seq.frame(position).to_vec()])?;
            let tmp = output.join(format!(".{}.tmp", position));
            frames::save_frames(&one, &tmp)?;
            fs::rename(tmp.join(frames::frame_file_name(0, DEFAULT_INDEX_WIDTH)), &dst)?;
            fs::remove_dir(&tmp)?;
        }
    }
    Ok((files.len(), geometry(seq)))
}

fn thresholds(args: &SelectArgs) -> Result<PrivacyThresholds> {
    Ok(PrivacyThresholds::new(args.tau_f, args.tau_c)?)
}

fn build_report(args: &SelectArgs) -> Result<(MetricTable, SelectionReport)> {
    let table = MetricTable::from_csv_path(&args.metrics)?;
    let report = SelectionReport::build(&table, &args.weights, args.scope, &thresholds(args)?);
    Ok((table, report))
}

/// Prints one `strategy=setting_id` line per selection strategy.
pub fn write_selection_lines(report: &SelectionReport, out: &mut dyn Write) -> std::io::Result<()> {
    writeln!(out, "distance={}", report.by_distance)?;
    writeln!(out, "weighted={}", report.by_weight)?;
    writeln!(out, "constrained={}", report.by_constraint.as_deref().unwrap_or("NONE"))?;
    writeln!(out, "combined={}", report.by_combined)
}

pub fn cmd_select(args: &SelectArgs, out: &mut dyn Write) -> Result<()> {
    let (table, report) = build_report(args)?;
    fs::create_dir_all(&args.output).with_context(|| format!("cannot create {}", args.output.display()))?;
    report::write_selection_report(&report, &args.output.join(report::SELECTION_REPORT_FILE))?;
    report::write_dominance_matrix(&table, &args.output.join(report::DOMINANCE_MATRIX_FILE))?;
    write_selection_lines(&report, out)?;
    Ok(())
}

pub fn cmd_report(args: &SelectArgs) -> Result<()> {
    let (table, report) = build_report(args)?;
    for p in report::write_all(&table, &report, &args.output)? {
        log::info!("wrote {}", p.display());
    }
    Ok(())
}

pub fn cmd_pipeline(args: &PipelineArgs, out: &mut dyn Write) -> Result<()> {
    let spec = match read_pipeline_source(&args.pipeline)? {
        PipelineSource::Spec(s) => s,
        PipelineSource::Provenance(p) => p.pipeline,
    };
    let mut json = spec.to_json();
    json.push('\n');
    match &args.output {
        Some(path) => fs::write(path, json).with_context(|| format!("cannot write {}", path.display()))?,
        None => out.write_all(json.as_bytes())?,
    }
    Ok(())
}

/// Reads the worker cap from the environment; 0 or unset means automatic.
pub fn threads_from_env() -> Result<usize> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .with_context(|| format!("{THREADS_ENV} must be a non-negative integer, got {v:?}")),
        Err(_) => Ok(0),
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Minimize(a) => cmd_minimize(a),
        Command::Select(a) => cmd_select(a, out),
        Command::Report(a) => cmd_report(a),
        Command::Pipeline(a) => cmd_pipeline(a, out),
    }
}
