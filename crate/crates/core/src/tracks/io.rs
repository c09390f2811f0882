//! Project directories on disk.
//!
//! ```text
//! project/
//!   frames/000000.png ...    8-bit RGB source frames
//!   camera.json              per-frame source camera records
//!   tracks.json              source tracks
//!   depth/000000.bin|.png    optional source depth (TFDEPTH1 raster or 16-bit mm PNG)
//!   masks/000000.png         optional 8-bit source label maps
//!   target/camera.json       optional target camera (defaults to the source camera)
//!   target/tracks.json       optional target tracks (defaults to the source tracks)
//!   target/frames/           optional target frames
//! ```
//!
//! JSON files are written compactly with a trailing newline. Reals use the
//! shortest representation that parses back to the same double.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::video::quantize_u8;
use super::{ClipPair, DepthMaps, LabelMaps, TrackSet, VideoClip};
use crate::geometry::{CameraPath, CameraRecord};

pub const DEPTH_MAGIC: &[u8; 8] = b"TFDEPTH1";

#[derive(Debug, Error)]
pub enum TrackIoError {
    #[error("missing file: {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("schema violation in {}: field `{field}`: {message}", file.display())]
    SchemaViolation { file: PathBuf, field: String, message: String },
    #[error("shape mismatch in {}: field `{field}`: expected {expected}, found {found}", file.display())]
    ShapeMismatch {
        file: PathBuf,
        field: String,
        expected: usize,
        found: usize,
    },
    #[error("image error in {}: {message}", file.display())]
    Image { file: PathBuf, message: String },
    #[error("io error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl TrackIoError {
    fn schema(file: &Path, field: &str, message: impl Into<String>) -> Self {
        Self::SchemaViolation {
            file: file.to_path_buf(),
            field: field.into(),
            message: message.into(),
        }
    }

    fn shape(file: &Path, field: &str, expected: usize, found: usize) -> Self {
        Self::ShapeMismatch {
            file: file.to_path_buf(),
            field: field.into(),
            expected,
            found,
        }
    }
}

/// On-disk form of a [`TrackSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TracksFile {
    #[serde(rename = "F")]
    pub frames: usize,
    #[serde(rename = "N")]
    pub tracks: usize,
    pub positions: Vec<Vec<[f64; 3]>>,
    pub object_id: Vec<u32>,
    pub existence: Vec<Vec<u8>>,
    pub visibility: Vec<Vec<u8>>,
}

impl From<&TrackSet> for TracksFile {
    fn from(ts: &TrackSet) -> Self {
        let (f, n) = (ts.num_frames(), ts.num_tracks());
        let rows = |get: &dyn Fn(usize, usize) -> u8| -> Vec<Vec<u8>> { (0..f).map(|i| (0..n).map(|j| get(i, j)).collect()).collect() };
        Self {
            frames: f,
            tracks: n,
            positions: (0..f)
                .map(|i| {
                    (0..n)
                        .map(|j| {
                            let p = ts.position(i, j);
                            [p.x, p.y, p.z]
                        })
                        .collect()
                })
                .collect(),
            object_id: ts.object_ids().to_vec(),
            existence: rows(&|i, j| ts.exists(i, j) as u8),
            visibility: rows(&|i, j| ts.visibility()[i * n + j] as u8),
        }
    }
}

impl TracksFile {
    pub fn into_track_set(self, file: &Path) -> Result<TrackSet, TrackIoError> {
        let (f, n) = (self.frames, self.tracks);
        if f == 0 {
            return Err(TrackIoError::schema(file, "F", "must be at least 1"));
        }
        if n == 0 {
            return Err(TrackIoError::schema(file, "N", "must be at least 1"));
        }
        let check_rows = |field: &str, len: usize, row_lens: &mut dyn Iterator<Item = usize>| -> Result<(), TrackIoError> {
            if len != f {
                return Err(TrackIoError::shape(file, field, f, len));
            }
            for (i, l) in row_lens.enumerate() {
                if l != n {
                    return Err(TrackIoError::shape(file, &format!("{field}[{i}]"), n, l));
                }
            }
            Ok(())
        };
        check_rows("positions", self.positions.len(), &mut self.positions.iter().map(Vec::len))?;
        check_rows("existence", self.existence.len(), &mut self.existence.iter().map(Vec::len))?;
        check_rows("visibility", self.visibility.len(), &mut self.visibility.iter().map(Vec::len))?;
        if self.object_id.len() != n {
            return Err(TrackIoError::shape(file, "object_id", n, self.object_id.len()));
        }
        let flags = |field: &str, rows: &[Vec<u8>]| -> Result<Vec<bool>, TrackIoError> {
            rows.iter()
                .enumerate()
                .flat_map(|(i, row)| row.iter().enumerate().map(move |(j, &v)| (i, j, v)))
                .map(|(i, j, v)| match v {
                    0 => Ok(false),
                    1 => Ok(true),
                    _ => Err(TrackIoError::schema(file, &format!("{field}[{i}][{j}]"), format!("flag must be 0 or 1, got {v}"))),
                })
                .collect()
        };
        let existence = flags("existence", &self.existence)?;
        let visibility = flags("visibility", &self.visibility)?;
        let mut positions = Vec::with_capacity(f * n);
        for (i, row) in self.positions.iter().enumerate() {
            for (j, p) in row.iter().enumerate() {
                if !p.iter().all(|v| v.is_finite()) {
                    return Err(TrackIoError::schema(file, &format!("positions[{i}][{j}]"), "non-finite coordinate"));
                }
                positions.push(Vector3::from(*p));
            }
        }
        TrackSet::new(f, n, positions, self.object_id, existence, visibility).map_err(|e| TrackIoError::schema(file, "tracks", e.to_string()))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrackIoError + '_ {
    move |source| TrackIoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_required(path: &Path) -> Result<Vec<u8>, TrackIoError> {
    if !path.is_file() {
        return Err(TrackIoError::MissingFile { path: path.to_path_buf() });
    }
    fs::read(path).map_err(io_err(path))
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, TrackIoError> {
    let bytes = read_required(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        let msg = e.to_string();
        // serde names the offending field as "field `x`" in most messages.
        let field = msg.split('`').nth(1).unwrap_or("<root>").to_string();
        TrackIoError::schema(path, &field, msg)
    })
}

pub fn read_tracks(path: &Path) -> Result<TrackSet, TrackIoError> {
    parse_json::<TracksFile>(path)?.into_track_set(path)
}

pub fn read_camera(path: &Path) -> Result<CameraPath, TrackIoError> {
    let records: Vec<CameraRecord> = parse_json(path)?;
    if records.is_empty() {
        return Err(TrackIoError::schema(path, "<root>", "camera path needs at least one frame"));
    }
    for (i, r) in records.iter().enumerate() {
        let vals = [r.fx, r.fy, r.cx, r.cy].into_iter().chain(r.r).chain(r.t);
        if vals.into_iter().any(|v| !v.is_finite()) {
            return Err(TrackIoError::schema(path, &format!("[{i}]"), "non-finite number"));
        }
    }
    CameraPath::from_records(&records).map_err(|e| TrackIoError::schema(path, "<record>", e.to_string()))
}

/// Canonical JSON bytes: compact, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec(value).expect("serializable value");
    bytes.push(b'\n');
    bytes
}

/// Writes `bytes`, creating parent directories.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), TrackIoError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    fs::write(path, bytes).map_err(io_err(path))
}

pub fn write_tracks(path: &Path, ts: &TrackSet) -> Result<(), TrackIoError> {
    write_file(path, &to_canonical_json(&TracksFile::from(ts)))
}

pub fn write_camera(path: &Path, cam: &CameraPath) -> Result<(), TrackIoError> {
    write_file(path, &to_canonical_json(&cam.to_records()))
}

pub fn frame_name(i: usize, ext: &str) -> String {
    format!("{i:06}.{ext}")
}

fn count_frames(dir: &Path) -> Result<usize, TrackIoError> {
    let entries = fs::read_dir(dir).map_err(io_err(dir))?;
    let mut count = 0;
    for e in entries {
        let e = e.map_err(io_err(dir))?;
        if e.path().extension().is_some_and(|x| x == "png") {
            count += 1;
        }
    }
    Ok(count)
}

fn image_err(path: &Path) -> impl FnOnce(image::ImageError) -> TrackIoError + '_ {
    move |e| TrackIoError::Image {
        file: path.to_path_buf(),
        message: e.to_string(),
    }
}

pub fn read_video(dir: &Path) -> Result<VideoClip, TrackIoError> {
    if !dir.is_dir() {
        return Err(TrackIoError::MissingFile { path: dir.to_path_buf() });
    }
    let count = count_frames(dir)?;
    if count == 0 {
        return Err(TrackIoError::MissingFile { path: dir.join(frame_name(0, "png")) });
    }
    let mut clip: Option<VideoClip> = None;
    for i in 0..count {
        let path = dir.join(frame_name(i, "png"));
        let bytes = read_required(&path)?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(image_err(&path))?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let clip = clip.get_or_insert_with(|| VideoClip::zeros(count, h, w));
        if (w, h) != (clip.width, clip.height) {
            return Err(TrackIoError::shape(&path, "width", clip.width, w));
        }
        for (dst, src) in clip.frame_mut(i).iter_mut().zip(img.as_raw()) {
            *dst = *src as f32 / 255.0;
        }
    }
    Ok(clip.expect("at least one frame"))
}

pub fn encode_png_rgb(width: usize, height: usize, rgb: &[f32]) -> Vec<u8> {
    let raw: Vec<u8> = rgb.iter().map(|&v| quantize_u8(v)).collect();
    let img = image::RgbImage::from_raw(width as u32, height as u32, raw).expect("buffer matches frame size");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("in-memory png encoding");
    out.into_inner()
}

pub fn encode_png_gray(width: usize, height: usize, values: &[u8]) -> Vec<u8> {
    let img = image::GrayImage::from_raw(width as u32, height as u32, values.to_vec()).expect("buffer matches frame size");
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png).expect("in-memory png encoding");
    out.into_inner()
}

pub fn write_video(dir: &Path, video: &VideoClip) -> Result<(), TrackIoError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for f in 0..video.frames {
        write_file(&dir.join(frame_name(f, "png")), &encode_png_rgb(video.width, video.height, video.frame(f)))?;
    }
    Ok(())
}

/// `TFDEPTH1` raster: magic, little-endian u32 width and height, then f32 meters.
pub fn encode_depth_raster(width: usize, height: usize, depth: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + depth.len() * 4);
    out.extend_from_slice(DEPTH_MAGIC);
    out.extend_from_slice(&(width as u32).to_le_bytes());
    out.extend_from_slice(&(height as u32).to_le_bytes());
    for v in depth {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_depth_raster(path: &Path, bytes: &[u8]) -> Result<(usize, usize, Vec<f32>), TrackIoError> {
    if bytes.len() < 16 || &bytes[..8] != DEPTH_MAGIC {
        return Err(TrackIoError::schema(path, "magic", "expected TFDEPTH1 header"));
    }
    let w = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let h = u32::from_le_bytes(bytes[12..16].try_into().expect("4 bytes")) as usize;
    let body = &bytes[16..];
    if body.len() != w * h * 4 {
        return Err(TrackIoError::shape(path, "data", w * h * 4, body.len()));
    }
    let data: Vec<f32> = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
    if data.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(TrackIoError::schema(path, "data", "depth must be finite and non-negative"));
    }
    Ok((w, h, data))
}

fn read_depth(dir: &Path, frames: usize, width: usize, height: usize) -> Result<DepthMaps, TrackIoError> {
    let mut data = Vec::with_capacity(frames * width * height);
    for i in 0..frames {
        let bin = dir.join(frame_name(i, "bin"));
        let png = dir.join(frame_name(i, "png"));
        let (w, h, values) = if bin.is_file() {
            decode_depth_raster(&bin, &read_required(&bin)?)?
        } else {
            let bytes = read_required(&png)?;
            let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(image_err(&png))?;
            let img = match img {
                image::DynamicImage::ImageLuma16(g) => g,
                _ => return Err(TrackIoError::schema(&png, "format", "depth PNG must be 16-bit grayscale")),
            };
            let vals = img.as_raw().iter().map(|&mm| mm as f32 / 1000.0).collect();
            (img.width() as usize, img.height() as usize, vals)
        };
        if (w, h) != (width, height) {
            return Err(TrackIoError::shape(dir, &format!("depth[{i}].width"), width, w));
        }
        data.extend(values);
    }
    Ok(DepthMaps {
        frames,
        height,
        width,
        data,
    })
}

/// Reads one 8-bit label PNG per frame from `dir`.
pub fn read_masks(dir: &Path, frames: usize, width: usize, height: usize) -> Result<LabelMaps, TrackIoError> {
    let mut data = Vec::with_capacity(frames * width * height);
    for i in 0..frames {
        let path = dir.join(frame_name(i, "png"));
        let bytes = read_required(&path)?;
        let img = image::load_from_memory_with_format(&bytes, image::ImageFormat::Png).map_err(image_err(&path))?;
        let img = match img {
            image::DynamicImage::ImageLuma8(g) => g,
            _ => return Err(TrackIoError::schema(&path, "format", "mask PNG must be 8-bit grayscale")),
        };
        if (img.width() as usize, img.height() as usize) != (width, height) {
            return Err(TrackIoError::shape(&path, "width", width, img.width() as usize));
        }
        data.extend_from_slice(img.as_raw());
    }
    Ok(LabelMaps {
        frames,
        height,
        width,
        data,
    })
}

/// Loads and validates a project directory.
pub fn load_project(dir: &Path) -> Result<ClipPair, TrackIoError> {
    let source_video = read_video(&dir.join("frames"))?;
    let camera_path = dir.join("camera.json");
    let tracks_path = dir.join("tracks.json");
    let source_camera = read_camera(&camera_path)?;
    let source_tracks = read_tracks(&tracks_path)?;
    let (f, h, w) = (source_video.frames, source_video.height, source_video.width);

    let target_dir = dir.join("target");
    let target_camera_path = target_dir.join("camera.json");
    let target_tracks_path = target_dir.join("tracks.json");
    let target_camera = if target_camera_path.is_file() {
        read_camera(&target_camera_path)?
    } else {
        source_camera.clone()
    };
    let target_tracks = if target_tracks_path.is_file() {
        read_tracks(&target_tracks_path)?
    } else {
        source_tracks.clone()
    };
    let target_video = if target_dir.join("frames").is_dir() {
        Some(read_video(&target_dir.join("frames"))?)
    } else {
        None
    };

    for (path, cam) in [(&camera_path, &source_camera), (&target_camera_path, &target_camera)] {
        if cam.len() != f {
            return Err(TrackIoError::shape(path, "frames", f, cam.len()));
        }
        if (cam.width() as usize, cam.height() as usize) != (w, h) {
            return Err(TrackIoError::shape(path, "width", w, cam.width() as usize));
        }
    }
    for (path, ts) in [(&tracks_path, &source_tracks), (&target_tracks_path, &target_tracks)] {
        if ts.num_frames() != f {
            return Err(TrackIoError::shape(path, "F", f, ts.num_frames()));
        }
    }
    if target_tracks.num_tracks() != source_tracks.num_tracks() {
        return Err(TrackIoError::shape(&target_tracks_path, "N", source_tracks.num_tracks(), target_tracks.num_tracks()));
    }

    let depth = dir.join("depth").is_dir().then(|| read_depth(&dir.join("depth"), f, w, h)).transpose()?;
    let masks = dir.join("masks").is_dir().then(|| read_masks(&dir.join("masks"), f, w, h)).transpose()?;

    let pair = ClipPair {
        source_video,
        target_video,
        source_camera,
        target_camera,
        source_tracks,
        target_tracks,
        depth,
        masks,
    };
    pair.validate().map_err(|(field, message)| TrackIoError::schema(dir, &field, message))?;
    Ok(pair)
}

/// Writes a project directory. The `target/` files are written only when they
/// differ from the source, so loading and saving a project reproduces it.
pub fn save_project(dir: &Path, pair: &ClipPair) -> Result<(), TrackIoError> {
    write_video(&dir.join("frames"), &pair.source_video)?;
    write_camera(&dir.join("camera.json"), &pair.source_camera)?;
    write_tracks(&dir.join("tracks.json"), &pair.source_tracks)?;
    if pair.target_camera != pair.source_camera {
        write_camera(&dir.join("target").join("camera.json"), &pair.target_camera)?;
    }
    if pair.target_tracks != pair.source_tracks {
        write_tracks(&dir.join("target").join("tracks.json"), &pair.target_tracks)?;
    }
    if let Some(t) = &pair.target_video {
        write_video(&dir.join("target").join("frames"), t)?;
    }
    if let Some(d) = &pair.depth {
        for f in 0..d.frames {
            write_file(&dir.join("depth").join(frame_name(f, "bin")), &encode_depth_raster(d.width, d.height, d.frame(f)))?;
        }
    }
    if let Some(m) = &pair.masks {
        for f in 0..m.frames {
            write_file(&dir.join("masks").join(frame_name(f, "png")), &encode_png_gray(m.width, m.height, m.frame(f)))?;
        }
    }
    Ok(())
}
