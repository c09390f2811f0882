use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use trackedit_core::augment::{augment_pair, AugmentError};
use trackedit_core::edit::{apply_edit_spec, EditError, EditSpec, EditState};
use trackedit_core::metrics::{epe, epe_visible, track_pixels, MetricError, MetricReport};
use trackedit_core::preview::{render_preview, PreviewError};
use trackedit_core::rng::derive;
use trackedit_core::tracks::io::{encode_png_gray, frame_name, read_camera, read_masks, read_tracks, read_video, to_canonical_json, write_file, write_video};
use trackedit_core::tracks::{load_project, pair_depth_range, project_tracks, sample_tracks, save_project, temporal_downsample, TrackIoError, DEFAULT_FOREGROUND_FRACTION};
use trackedit_core::{ClipPair, ProjectedTracks, VideoClip};
use trackedit_model::checkpoint::{load_checkpoint, save_checkpoint, CheckpointError};
use trackedit_model::denoiser::TrackMode;
use trackedit_model::flow::{patchify, to_model_space};
use trackedit_model::conditioner::TokenGrid;
use trackedit_model::scene::gen_procedural_pair;
use trackedit_model::train::{self, generate_dataset, pair_seed, par_map, split, train_loop, smoothed_loss};
use trackedit_model::ModelError;

use crate::config::RunConfig;
use crate::Mode;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("{}: {source}", path.display())]
    Spec { path: PathBuf, source: EditError },
    #[error(transparent)]
    Project(#[from] TrackIoError),
    #[error(transparent)]
    Edit(#[from] EditError),
    #[error(transparent)]
    Preview(#[from] PreviewError),
    #[error(transparent)]
    Augment(#[from] AugmentError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{0}")]
    Invalid(String),
}

impl CliError {
    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Config { .. } => "config",
            CliError::Spec { .. } | CliError::Edit(_) => "edit",
            CliError::Project(_) => "project",
            CliError::Preview(_) => "preview",
            CliError::Augment(_) => "augment",
            CliError::Model(_) | CliError::Checkpoint(_) => "model",
            CliError::Metric(_) => "metric",
            CliError::Invalid(_) => "invalid",
        }
    }

    fn file_and_field(&self) -> (Option<&Path>, Option<String>) {
        let edit_field = |e: &EditError| Some(e.path()).filter(|p| !p.is_empty());
        match self {
            CliError::Io { path, .. } | CliError::Config { path, .. } => (Some(path), None),
            CliError::Spec { path, source } => (Some(path), edit_field(source)),
            CliError::Edit(e) | CliError::Preview(PreviewError::Edit(e)) => (None, edit_field(e)),
            CliError::Project(e) => match e {
                TrackIoError::MissingFile { path } | TrackIoError::Io { path, .. } => (Some(path), None),
                TrackIoError::SchemaViolation { file, field, .. } | TrackIoError::ShapeMismatch { file, field, .. } => (Some(file), Some(field.clone())),
                TrackIoError::Image { file, .. } => (Some(file), None),
            },
            _ => (None, None),
        }
    }

    /// One machine-parsable line for stderr.
    pub fn to_json_line(&self, command: &str) -> String {
        let (file, field) = self.file_and_field();
        let mut err = json!({ "command": command, "kind": self.kind(), "message": self.to_string() });
        if let Some(f) = file {
            err["file"] = json!(f.display().to_string());
        }
        if let Some(f) = field {
            err["field"] = json!(f);
        }
        json!({ "error": err }).to_string()
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// `path` made absolute, with symlinks resolved for the part that exists.
fn resolved(path: &Path) -> PathBuf {
    let abs = std::path::absolute(path).unwrap_or_else(|_| path.to_path_buf());
    let mut existing = abs.clone();
    let mut rest = Vec::new();
    while !existing.exists() {
        match existing.file_name() {
            Some(name) => rest.push(name.to_owned()),
            None => break,
        }
        existing.pop();
    }
    let mut out = fs::canonicalize(&existing).unwrap_or(existing);
    out.extend(rest.iter().rev());
    out
}

/// Refuses an output directory inside any input, so inputs are never written.
fn output_dir(cfg: &RunConfig, inputs: &[&Path]) -> Result<PathBuf> {
    let out = cfg.out()?;
    let target = resolved(out);
    for input in inputs {
        if target.starts_with(resolved(input)) {
            return Err(CliError::Usage(format!("--out {} lies inside input {}", out.display(), input.display())));
        }
    }
    fs::create_dir_all(out).map_err(|e| CliError::Io { path: out.to_path_buf(), message: e.to_string() })?;
    Ok(out.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    Ok(write_file(path, &to_canonical_json(value))?)
}

fn read_spec(cfg: &RunConfig) -> Result<EditSpec> {
    match &cfg.edit {
        None => Ok(EditSpec::identity()),
        Some(path) => {
            let bytes = fs::read(path).map_err(|e| CliError::Io { path: path.clone(), message: e.to_string() })?;
            EditSpec::from_json(&bytes).map_err(|source| CliError::Spec { path: path.clone(), source })
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(&to_canonical_json(value));
}

#[derive(Serialize)]
struct ProjectSummary {
    frames: usize,
    height: usize,
    width: usize,
    tracks: usize,
    objects: Vec<u32>,
    has_depth: bool,
    has_masks: bool,
    has_target_video: bool,
}

fn summary(pair: &ClipPair) -> ProjectSummary {
    ProjectSummary {
        frames: pair.num_frames(),
        height: pair.height(),
        width: pair.width(),
        tracks: pair.num_tracks(),
        objects: pair.source_tracks.object_ids_present(),
        has_depth: pair.depth.is_some(),
        has_masks: pair.masks.is_some(),
        has_target_video: pair.target_video.is_some(),
    }
}

pub fn ingest(cfg: &RunConfig) -> Result<()> {
    let project = cfg.project()?;
    let pair = load_project(project)?;
    let out = output_dir(cfg, &[project])?;
    save_project(&out, &pair)?;
    print_json(&summary(&pair));
    Ok(())
}

pub fn edit(cfg: &RunConfig) -> Result<()> {
    let project = cfg.project()?;
    let pair = load_project(project)?;
    let spec = read_spec(cfg)?;
    let state = apply_edit_spec(&EditState::from_pair(&pair), &spec)?.state;
    let out = output_dir(cfg, &[project])?;
    let edited = ClipPair {
        source_tracks: state.source_tracks,
        target_tracks: state.target_tracks,
        source_camera: state.source_camera,
        target_camera: state.target_camera,
        target_video: None,
        ..pair
    };
    save_project(&out, &edited)?;
    write_file(&out.join("editspec.json"), &spec.to_canonical_json())?;
    print_json(&json!({ "hash": spec.content_hash(), "tracks": edited.num_tracks(), "frames": edited.num_frames() }));
    Ok(())
}

pub fn preview(cfg: &RunConfig) -> Result<()> {
    let project = cfg.project()?;
    let pair = load_project(project)?;
    let spec = read_spec(cfg)?;
    let preview = render_preview(&pair, &spec)?;
    let out = output_dir(cfg, &[project])?;
    let (h, w) = (pair.height(), pair.width());
    write_video(&out.join("frames"), &preview.video)?;
    for f in 0..preview.video.frames {
        write_file(&out.join("coverage").join(frame_name(f, "png")), &encode_png_gray(w, h, &preview.coverage_u8(f)))?;
    }
    write_file(&out.join("editspec.json"), &spec.to_canonical_json())?;
    let covered = preview.coverage.data.iter().filter(|&&c| c > 0).count();
    let info = json!({
        "hash": spec.content_hash(),
        "frames": preview.video.frames,
        "coverage": covered as f64 / preview.coverage.data.len() as f64,
    });
    write_json(&out.join("preview.json"), &info)?;
    print_json(&info);
    Ok(())
}

#[derive(Serialize)]
struct TracksOut<'a> {
    frames: usize,
    tracks: usize,
    coords: &'a [[f64; 3]],
    existence: &'a [bool],
}

fn tracks_out(pt: &ProjectedTracks) -> TracksOut<'_> {
    TracksOut { frames: pt.num_frames(), tracks: pt.num_tracks(), coords: pt.coords(), existence: pt.existence() }
}

pub fn augment(cfg: &RunConfig) -> Result<()> {
    let project = cfg.project()?;
    let pair = load_project(project)?;
    let aug = augment_pair(&pair, &cfg.augment())?;
    let out = output_dir(cfg, &[project])?;
    write_video(&out.join("frames"), &aug.source_video)?;
    if let Some(t) = &aug.target_video {
        write_video(&out.join("target").join("frames"), t)?;
    }
    write_json(&out.join("source_tracks.json"), &tracks_out(&aug.source_tracks))?;
    write_json(&out.join("target_tracks.json"), &tracks_out(&aug.target_tracks))?;
    write_json(&out.join("augment.json"), &aug.record)?;
    print_json(&json!({ "seed": aug.record.config.seed, "dropped_frames": aug.record.dropped_frames, "flipped": aug.record.flipped }));
    Ok(())
}

fn train_config(cfg: &RunConfig) -> Result<train::ToyTrainConfig> {
    let mut t = cfg.train();
    if let Some(n) = cfg.tracks {
        t.scene.tracks = n;
    }
    if let Some(s) = cfg.steps {
        t.eval_steps = s;
    }
    t.validate().map_err(CliError::Invalid)?;
    Ok(t)
}

pub fn gen_toy(cfg: &RunConfig) -> Result<()> {
    let t = train_config(cfg)?;
    let out = output_dir(cfg, &[])?;
    let idx: Vec<usize> = (0..t.pairs).collect();
    let threads = if t.threads > 0 { t.threads } else { std::thread::available_parallelism().map_or(1, |n| n.get()) };
    let results = par_map(&idx, threads, |_, &i| -> Result<()> {
        let sample = gen_procedural_pair(pair_seed(t.seed, i), &t.scene);
        let dir = out.join(format!("pair_{i:06}"));
        save_project(&dir, &sample.pair)?;
        write_json(&dir.join("billboards.json"), &sample.billboards)
    });
    results.into_iter().collect::<Result<Vec<()>>>()?;
    write_json(&out.join("dataset.json"), &json!({ "seed": t.seed, "pairs": t.pairs, "held_out": t.held_out, "scene": t.scene }))?;
    print_json(&json!({ "pairs": t.pairs, "seed": t.seed }));
    Ok(())
}

fn track_mode(mode: Mode) -> TrackMode {
    match mode {
        Mode::Full => TrackMode::Full,
        Mode::Zeroed => TrackMode::Zeroed,
    }
}

pub fn train_toy(cfg: &RunConfig, mode: Mode) -> Result<()> {
    let t = train_config(cfg)?;
    let out = output_dir(cfg, &[])?;
    write_json(&out.join("train.json"), &json!({ "mode": track_mode(mode), "config": t }))?;
    let data = generate_dataset(&t);
    let (train_set, held_out) = split(&data, t.held_out);
    let metrics_path = out.join("metrics.jsonl");
    let mut lines = Vec::new();
    let outcome = train_loop(&t, train_set, held_out, track_mode(mode), |m| {
        lines.extend_from_slice(&to_canonical_json(&json!({ "epoch": m.epoch, "loss": m.loss, "val_epe": m.val_epe })));
        let _ = fs::write(&metrics_path, &lines);
    });
    write_file(&metrics_path, &lines)?;
    save_checkpoint(&out.join("checkpoint"), &outcome.config, &outcome.model)?;
    let result = json!({
        "mode": track_mode(mode),
        "final_loss": outcome.final_loss(),
        "smoothed_final_loss": smoothed_loss(&outcome.metrics, outcome.metrics.len()),
        "val_epe": outcome.final_epe(),
    });
    write_json(&out.join("summary.json"), &result)?;
    print_json(&result);
    Ok(())
}

fn model_grid(video: &VideoClip, patch: (usize, usize, usize)) -> Result<TokenGrid> {
    let g = patchify(video, patch)?;
    Ok(TokenGrid::new(g.f, g.h, g.w, to_model_space(&g.data)))
}

pub fn generate(cfg: &RunConfig, checkpoint: &Path, mode: Mode) -> Result<()> {
    let project = cfg.project()?;
    let pair = load_project(project)?;
    let spec = read_spec(cfg)?;
    let (mcfg, model) = load_checkpoint(checkpoint)?;
    let state = apply_edit_spec(&EditState::from_pair(&pair), &spec)?.state;
    let range = pair_depth_range(&state.source_tracks, &state.source_camera, &state.target_tracks, &state.target_camera);
    let mut src = project_tracks(&state.source_tracks, &state.source_camera, &range);
    let mut tgt = project_tracks(&state.target_tracks, &state.target_camera, &range);
    let total = src.num_tracks();
    let n = cfg.tracks.unwrap_or(total);
    if n == 0 || n > total {
        return Err(CliError::Usage(format!("--tracks must be in 1..={total}, got {n}")));
    }
    if n < total {
        let idx = sample_tracks(&state.source_tracks, n, DEFAULT_FOREGROUND_FRACTION, &mut derive(cfg.seed(), "generate/tracks"));
        src = src.subset(&idx);
        tgt = tgt.subset(&idx);
    }
    let source = model_grid(&pair.source_video, mcfg.patch)?;
    let (src, tgt) = (temporal_downsample(&src, source.f), temporal_downsample(&tgt, source.f));
    let steps = cfg.steps.unwrap_or(train::ToyTrainConfig::default().eval_steps);
    if steps == 0 {
        return Err(CliError::Usage("--steps must be positive".into()));
    }
    let video = train::generate(&model, &mcfg, &source, &src, &tgt, track_mode(mode), steps, cfg.seed())?;
    let out = output_dir(cfg, &[project, checkpoint])?;
    let generated = ClipPair {
        source_video: video,
        target_video: None,
        source_camera: state.target_camera.clone(),
        target_camera: state.target_camera,
        source_tracks: state.target_tracks.clone(),
        target_tracks: state.target_tracks,
        depth: None,
        masks: None,
    };
    save_project(&out, &generated)?;
    write_file(&out.join("editspec.json"), &spec.to_canonical_json())?;
    let info = json!({ "hash": spec.content_hash(), "mode": track_mode(mode), "steps": steps, "seed": cfg.seed(), "tracks": n });
    write_json(&out.join("generate.json"), &info)?;
    print_json(&info);
    Ok(())
}

/// A clip directory for `eval`: either a project (frames plus optional
/// tracks and camera) or a bare directory of frames.
struct EvalInput {
    video: VideoClip,
    pixels: Option<(Vec<[f64; 2]>, Vec<bool>)>,
}

fn eval_input(dir: &Path) -> Result<EvalInput> {
    let frames = dir.join("frames");
    let video = read_video(if frames.is_dir() { &frames } else { dir })?;
    let (tracks, camera) = (dir.join("tracks.json"), dir.join("camera.json"));
    let pixels = if tracks.is_file() && camera.is_file() {
        let (ts, cam) = (read_tracks(&tracks)?, read_camera(&camera)?);
        let pt = project_tracks(&ts, &cam, &pair_depth_range(&ts, &cam, &ts, &cam));
        Some((track_pixels(&pt, video.width, video.height), pt.existence().to_vec()))
    } else {
        None
    };
    Ok(EvalInput { video, pixels })
}

pub fn eval(cfg: &RunConfig, a: &Path, b: &Path, mask: Option<&Path>) -> Result<()> {
    let (ea, eb) = (eval_input(a)?, eval_input(b)?);
    let v = &ea.video;
    let labels = mask
        .map(|dir| read_masks(dir, v.frames, v.width, v.height).map(|m| m.data.iter().map(|&l| (l > 0) as u8).collect::<Vec<u8>>()))
        .transpose()?;
    let mut report = MetricReport::for_videos(&ea.video, &eb.video, labels.as_deref())?;
    if let (Some((pa, va)), Some((pb, vb))) = (&ea.pixels, &eb.pixels) {
        if pa.len() == pb.len() {
            let visible: Vec<bool> = va.iter().zip(vb).map(|(x, y)| *x && *y).collect();
            let vis = epe_visible(pa, pb, &visible).ok();
            report = report.with_epe(epe(pa, pb)?, vis, pa.len() / v.frames);
        } else {
            log::warn!("track counts differ ({} vs {}); skipping EPE", pa.len(), pb.len());
        }
    }
    let mut inputs = vec![a, b];
    inputs.extend(mask);
    let out = output_dir(cfg, &inputs)?;
    write_json(&out.join("report.json"), &report)?;
    print!("{}", report.table());
    Ok(())
}

pub fn serve(cfg: &RunConfig) -> Result<()> {
    let project = cfg.project()?;
    let pair = load_project(project)?;
    let mut builder = tokio::runtime::Builder::new_multi_thread();
    if let Some(n) = cfg.threads.filter(|&n| n > 0) {
        builder.worker_threads(n);
    }
    let runtime = builder.enable_all().build().map_err(|e| CliError::Invalid(e.to_string()))?;
    let port = cfg.port.unwrap_or(8080);
    runtime
        .block_on(trackedit_service::serve(pair, port))
        .map_err(|e| CliError::Io { path: PathBuf::from(format!("127.0.0.1:{port}")), message: e.to_string() })
}
