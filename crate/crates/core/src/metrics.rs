//! End-point error, PSNR and SSIM, each with an optional pixel mask.
//!
//! Masks are `F × H × W` with nonzero meaning "include". A mask of all ones
//! takes the same code path as no mask, so both give identical bits.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::tracks::{ProjectedTracks, VideoClip};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask selects no pixels")]
    EmptyMask,
    #[error("frames of {height}x{width} are smaller than the {window}x{window} SSIM window")]
    FrameTooSmall { height: usize, width: usize, window: usize },
}

/// Mean Euclidean distance between corresponding 2D points.
pub fn epe(a: &[[f64; 2]], b: &[[f64; 2]]) -> Result<f64, MetricError> {
    epe_masked(a, b, None)
}

/// EPE over the pairs flagged visible.
pub fn epe_visible(a: &[[f64; 2]], b: &[[f64; 2]], visible: &[bool]) -> Result<f64, MetricError> {
    epe_masked(a, b, Some(visible))
}

fn epe_masked(a: &[[f64; 2]], b: &[[f64; 2]], keep: Option<&[bool]>) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::ShapeMismatch(format!("{} vs {} points", a.len(), b.len())));
    }
    if let Some(k) = keep {
        if k.len() != a.len() {
            return Err(MetricError::ShapeMismatch(format!("{} visibility flags for {} points", k.len(), a.len())));
        }
    }
    let (mut sum, mut count) = (0.0, 0usize);
    for (i, (p, q)) in a.iter().zip(b).enumerate() {
        if keep.is_none_or(|k| k[i]) {
            sum += (p[0] - q[0]).hypot(p[1] - q[1]);
            count += 1;
        }
    }
    if count == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(sum / count as f64)
}

/// Pixel coordinates of projected tracks at a `width × height` resolution.
pub fn track_pixels(pt: &ProjectedTracks, width: usize, height: usize) -> Vec<[f64; 2]> {
    pt.coords().iter().map(|c| [c[0] * width as f64, c[1] * height as f64]).collect()
}

fn check_shapes(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Result<(), MetricError> {
    if (a.frames, a.height, a.width) != (b.frames, b.height, b.width) {
        return Err(MetricError::ShapeMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.frames, a.height, a.width, b.frames, b.height, b.width
        )));
    }
    if let Some(m) = mask {
        if m.len() != a.frames * a.height * a.width {
            return Err(MetricError::ShapeMismatch(format!("mask has {} entries, video {}", m.len(), a.frames * a.height * a.width)));
        }
    }
    Ok(())
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (1.0 / mse).log10()
    }
}

/// Squared error sum and sample count over masked pixels of frames `frames`.
fn squared_error(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>, frames: std::ops::Range<usize>) -> (f64, usize) {
    let plane = a.height * a.width;
    let (mut sum, mut count) = (0.0, 0usize);
    for p in frames.start * plane..frames.end * plane {
        if mask.is_none_or(|m| m[p] != 0) {
            for ch in 0..3 {
                let d = a.data[3 * p + ch] as f64 - b.data[3 * p + ch] as f64;
                sum += d * d;
            }
            count += 3;
        }
    }
    (sum, count)
}

/// PSNR with peak 1 over all (masked) samples; `+inf` when they agree.
pub fn psnr(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Result<f64, MetricError> {
    check_shapes(a, b, mask)?;
    let (sum, count) = squared_error(a, b, mask, 0..a.frames);
    if count == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(psnr_from_mse(sum / count as f64))
}

/// Per-frame PSNR; `None` for frames the mask leaves empty.
pub fn psnr_per_frame(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Result<Vec<Option<f64>>, MetricError> {
    check_shapes(a, b, mask)?;
    Ok((0..a.frames)
        .map(|f| {
            let (sum, count) = squared_error(a, b, mask, f..f + 1);
            (count > 0).then(|| psnr_from_mse(sum / count as f64))
        })
        .collect())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = 0.01 * 0.01;
const SSIM_C2: f64 = 0.03 * 0.03;

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let half = (SSIM_WINDOW / 2) as f64;
    let mut taps: [f64; SSIM_WINDOW] = std::array::from_fn(|i| (-((i as f64 - half).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
    let total: f64 = taps.iter().sum();
    taps.iter_mut().for_each(|t| *t /= total);
    taps
}

/// Valid-mode separable filtering of an `h × w` plane.
fn filter_valid(plane: &[f64], h: usize, w: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * plane[r * w + c + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(k, t)| t * rows[(r + k) * ow + c]).sum();
        }
    }
    out
}

/// SSIM map sums per frame: `(sum, windows)` over windows whose center pixel
/// is masked, across the three channels.
fn ssim_sums(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Vec<(f64, usize)> {
    let (h, w) = (a.height, a.width);
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let half = SSIM_WINDOW / 2;
    let taps = gaussian_taps();
    let channel = |v: &VideoClip, f: usize, ch: usize| -> Vec<f64> { v.frame(f).iter().skip(ch).step_by(3).map(|&x| x as f64).collect() };
    (0..a.frames)
        .map(|f| {
            let (mut sum, mut count) = (0.0, 0usize);
            for ch in 0..3 {
                let x = channel(a, f, ch);
                let y = channel(b, f, ch);
                let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
                let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
                let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
                let (mx, my) = (filter_valid(&x, h, w, &taps), filter_valid(&y, h, w, &taps));
                let (sxx, syy, sxy) = (filter_valid(&xx, h, w, &taps), filter_valid(&yy, h, w, &taps), filter_valid(&xy, h, w, &taps));
                for r in 0..oh {
                    for c in 0..ow {
                        if mask.is_some_and(|m| m[(f * h + r + half) * w + c + half] == 0) {
                            continue;
                        }
                        let k = r * ow + c;
                        let (ux, uy) = (mx[k], my[k]);
                        let (vx, vy, cxy) = (sxx[k] - ux * ux, syy[k] - uy * uy, sxy[k] - ux * uy);
                        sum += ((2.0 * ux * uy + SSIM_C1) * (2.0 * cxy + SSIM_C2)) / ((ux * ux + uy * uy + SSIM_C1) * (vx + vy + SSIM_C2));
                        count += 1;
                    }
                }
            }
            (sum, count)
        })
        .collect()
}

fn check_ssim(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Result<(), MetricError> {
    check_shapes(a, b, mask)?;
    if a.height < SSIM_WINDOW || a.width < SSIM_WINDOW {
        return Err(MetricError::FrameTooSmall { height: a.height, width: a.width, window: SSIM_WINDOW });
    }
    Ok(())
}

/// Gaussian-window SSIM (11×11, σ = 1.5, K1 = 0.01, K2 = 0.03, L = 1), mean
/// over frames, channels and valid windows.
pub fn ssim(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Result<f64, MetricError> {
    check_ssim(a, b, mask)?;
    let (sum, count) = ssim_sums(a, b, mask).into_iter().fold((0.0, 0), |(s, c), (fs, fc)| (s + fs, c + fc));
    if count == 0 {
        return Err(MetricError::EmptyMask);
    }
    Ok(sum / count as f64)
}

pub fn ssim_per_frame(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Result<Vec<Option<f64>>, MetricError> {
    check_ssim(a, b, mask)?;
    Ok(ssim_sums(a, b, mask).into_iter().map(|(s, c)| (c > 0).then(|| s / c as f64)).collect())
}

/// A score that serializes infinities as `"inf"` / `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score(pub f64);

impl Serialize for Score {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            v if v == f64::INFINITY => s.serialize_str("inf"),
            v if v == f64::NEG_INFINITY => s.serialize_str("-inf"),
            v if v.is_nan() => s.serialize_str("nan"),
            v => s.serialize_f64(v),
        }
    }
}

impl<'de> Deserialize<'de> for Score {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Score(v)),
            Raw::Str(s) => match s.as_str() {
                "inf" => Ok(Score(f64::INFINITY)),
                "-inf" => Ok(Score(f64::NEG_INFINITY)),
                "nan" => Ok(Score(f64::NAN)),
                other => Err(serde::de::Error::custom(format!("unknown score `{other}`"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub frames: usize,
    pub height: usize,
    pub width: usize,
    pub masked: bool,
    pub tracks: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: Score,
    pub ssim: Option<Score>,
    pub epe: Option<Score>,
    pub epe_visible: Option<Score>,
    pub psnr_per_frame: Vec<Option<Score>>,
    pub ssim_per_frame: Vec<Option<Score>>,
    pub metadata: ReportMetadata,
}

impl MetricReport {
    /// Video scores for `a` against reference `b`. SSIM is skipped for frames
    /// below the window size.
    pub fn for_videos(a: &VideoClip, b: &VideoClip, mask: Option<&[u8]>) -> Result<Self, MetricError> {
        let psnr = psnr(a, b, mask)?;
        let psnr_frames = psnr_per_frame(a, b, mask)?;
        let (ssim, ssim_frames) = match ssim(a, b, mask) {
            Ok(s) => (Some(Score(s)), ssim_per_frame(a, b, mask)?.into_iter().map(|v| v.map(Score)).collect()),
            Err(MetricError::FrameTooSmall { .. }) => (None, Vec::new()),
            Err(e) => return Err(e),
        };
        Ok(Self {
            psnr: Score(psnr),
            ssim,
            epe: None,
            epe_visible: None,
            psnr_per_frame: psnr_frames.into_iter().map(|v| v.map(Score)).collect(),
            ssim_per_frame: ssim_frames,
            metadata: ReportMetadata { frames: a.frames, height: a.height, width: a.width, masked: mask.is_some(), tracks: None },
        })
    }

    pub fn with_epe(mut self, epe: f64, epe_visible: Option<f64>, tracks: usize) -> Self {
        self.epe = Some(Score(epe));
        self.epe_visible = epe_visible.map(Score);
        self.metadata.tracks = Some(tracks);
        self
    }

    /// Fixed-order plain-text table.
    pub fn table(&self) -> String {
        let fmt = |s: Option<Score>| match s {
            None => "-".to_string(),
            Some(Score(v)) if v.is_infinite() => if v > 0.0 { "inf" } else { "-inf" }.to_string(),
            Some(Score(v)) => format!("{v:.4}"),
        };
        let rows = [("psnr", Some(self.psnr)), ("ssim", self.ssim), ("epe", self.epe), ("epe_visible", self.epe_visible)];
        let mut out = String::from("metric        value\n");
        for (name, v) in rows {
            out.push_str(&format!("{name:<13} {}\n", fmt(v)));
        }
        out
    }
}
