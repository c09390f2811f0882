//! Track conditioner: sample per-track context from source video tokens,
//! mix it along each track's time axis, add depth, and splat it back onto
//! source- and target-frame token grids.

use serde::{Deserialize, Serialize};

use crate::impl_params;
use crate::layers::{CrossAttention, CrossAttentionCache, Linear, BlockCache, TransformerBlock};
use crate::posenc::PosEncConfig;
use crate::tensor::Mat;
use crate::ModelError;
use trackedit_core::rng::Rng;
use trackedit_core::ProjectedTracks;

/// `f × h × w` tokens of width `d`, stored as `(f·h·w) × d` rows in
/// `(frame, row, column)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenGrid {
    pub f: usize,
    pub h: usize,
    pub w: usize,
    pub data: Mat,
}

impl TokenGrid {
    pub fn new(f: usize, h: usize, w: usize, data: Mat) -> Self {
        assert_eq!(data.rows, f * h * w, "token grid rows must be f·h·w");
        Self { f, h, w, data }
    }

    pub fn zeros(f: usize, h: usize, w: usize, d: usize) -> Self {
        Self::new(f, h, w, Mat::zeros(f * h * w, d))
    }

    pub fn d(&self) -> usize {
        self.data.cols
    }

    pub fn cells(&self) -> usize {
        self.h * self.w
    }

    pub fn frame(&self, k: usize) -> Mat {
        self.data.rows_range(k * self.cells(), self.cells())
    }
}

/// `f × N` track tokens of width `d`, stored frame-major (`k·N + n`).
#[derive(Debug, Clone, PartialEq)]
pub struct TrackTokens {
    pub f: usize,
    pub n: usize,
    pub data: Mat,
}

impl TrackTokens {
    pub fn frame(&self, k: usize) -> Mat {
        self.data.rows_range(k * self.n, self.n)
    }

    /// Reorders rows between frame-major and track-major layouts.
    fn permute(data: &Mat, outer: usize, inner: usize) -> Mat {
        let mut out = Mat::zeros(data.rows, data.cols);
        for a in 0..outer {
            for b in 0..inner {
                out.row_mut(b * outer + a).copy_from_slice(data.row(a * inner + b));
            }
        }
        out
    }

    fn track_major(&self) -> Mat {
        Self::permute(&self.data, self.f, self.n)
    }

    fn from_track_major(f: usize, n: usize, data: &Mat) -> Self {
        Self { f, n, data: Self::permute(data, n, f) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionerConfig {
    pub d: usize,
    pub heads: usize,
    pub pe: PosEncConfig,
    pub temporal_blocks: usize,
}

impl ConditionerConfig {
    pub fn new(d: usize, heads: usize, pe_width: usize) -> Self {
        assert!(heads >= 1 && d % heads == 0, "d must split into heads");
        Self { d, heads, pe: PosEncConfig::new(pe_width), temporal_blocks: 2 }
    }
}

/// Score of an exact image-plane match when sampling and splatting start.
pub const POSITIONAL_PEAK_LOGIT: f64 = 12.0;

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionerParams {
    pub sample: CrossAttention,
    pub temporal: Vec<TransformerBlock>,
    pub depth: Linear,
    /// One attention for both branches.
    pub splat: CrossAttention,
}

impl_params!(ConditionerParams { sample, temporal, depth, splat });

pub struct SampleCache {
    inputs: Vec<[f64; 4]>,
    frames: Vec<CrossAttentionCache>,
    blocks: Vec<BlockCache>,
}

pub struct SplatCache {
    inputs: Vec<[f64; 4]>,
    frames: Vec<CrossAttentionCache>,
}

pub struct ConditionerCache {
    sample: SampleCache,
    depth_inputs: [Mat; 2],
    splat: [SplatCache; 2],
}

impl ConditionerCache {
    fn depth_inputs_z(&self, branch: usize, row: usize) -> f64 {
        self.splat[branch].inputs[row][2]
    }

    /// Attention weights of every sampling and splatting attention, for
    /// inspection.
    pub fn attention_weights(&self) -> impl Iterator<Item = &Mat> {
        self.sample
            .frames
            .iter()
            .chain(self.splat.iter().flat_map(|s| s.frames.iter()))
            .flat_map(|c| c.probs.iter())
    }
}

/// Input gradients of the conditioner. Coordinate gradients are frame-major
/// `(x, y, z)`; existence is a discrete label and gets none.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionerInputGrads {
    pub vid_src: Mat,
    pub coords_src: Vec<[f64; 3]>,
    pub coords_tgt: Vec<[f64; 3]>,
}

fn all_inputs(pt: &ProjectedTracks) -> Vec<[f64; 4]> {
    (0..pt.num_frames()).flat_map(|k| pt.frame_inputs(k)).collect()
}

/// Accumulates `dpe` (one row per input quadruple) into coordinate gradients.
fn accumulate_coord_grad(pe: &PosEncConfig, inputs: &[[f64; 4]], dpe: &Mat, offset: usize, out: &mut [[f64; 3]]) {
    for r in 0..dpe.rows {
        let g = pe.encode_grad(inputs[offset + r], dpe.row(r));
        for c in 0..3 {
            out[offset + r][c] += g[c];
        }
    }
}

fn check_tracks(pt: &ProjectedTracks, f: usize, name: &str) -> Result<(), ModelError> {
    if pt.num_frames() != f {
        return Err(ModelError::ShapeMismatch(format!("{name} tracks have {} frames, tokens {f}", pt.num_frames())));
    }
    Ok(())
}

impl ConditionerParams {
    pub fn new(cfg: &ConditionerConfig, rng: &mut Rng) -> Self {
        Self {
            sample: CrossAttention::positional(cfg.pe.width, cfg.d, cfg.heads, cfg.pe.image_lanes(), POSITIONAL_PEAK_LOGIT, rng),
            temporal: (0..cfg.temporal_blocks).map(|_| TransformerBlock::new(cfg.d, rng)).collect(),
            depth: Linear::new(cfg.pe.width, cfg.d, rng),
            splat: CrossAttention::positional(cfg.pe.width, cfg.d, cfg.heads, cfg.pe.image_lanes(), POSITIONAL_PEAK_LOGIT, rng),
        }
    }

    /// Per frame, track-coordinate queries attend over the grid key with the
    /// frame's video tokens as values; the temporal blocks then run over each
    /// track independently.
    pub fn sample_context(&self, cfg: &ConditionerConfig, pt: &ProjectedTracks, vid: &TokenGrid) -> (TrackTokens, SampleCache) {
        let grid = cfg.pe.grid_key(vid.h, vid.w);
        let n = pt.num_tracks();
        let inputs = all_inputs(pt);
        let mut sampled = Mat::zeros(vid.f * n, cfg.d);
        let mut frames = Vec::with_capacity(vid.f);
        for k in 0..vid.f {
            let queries = cfg.pe.encode_rows(&inputs[k * n..(k + 1) * n]);
            let (out, cache) = self.sample.forward(&queries, &grid, &vid.frame(k), cfg.heads);
            sampled.data[k * n * cfg.d..(k + 1) * n * cfg.d].copy_from_slice(&out.data);
            frames.push(cache);
        }
        let tokens = TrackTokens { f: vid.f, n, data: sampled };
        let mut x = tokens.track_major();
        let mut blocks = Vec::with_capacity(self.temporal.len());
        for block in &self.temporal {
            let (y, cache) = block.forward(&x, vid.f, cfg.heads);
            x = y;
            blocks.push(cache);
        }
        (TrackTokens::from_track_major(vid.f, n, &x), SampleCache { inputs, frames, blocks })
    }

    /// Returns the gradient for the video tokens and accumulates the query
    /// coordinate gradients.
    #[allow(clippy::too_many_arguments)]
    fn sample_context_backward(&self, cfg: &ConditionerConfig, cache: &SampleCache, f: usize, n: usize, dout: &Mat, grad: &mut ConditionerParams, dcoords: &mut [[f64; 3]]) -> Mat {
        let hw = cache.frames[0].probs[0].cols;
        let mut dx = TrackTokens { f, n, data: dout.clone() }.track_major();
        for (i, block) in self.temporal.iter().enumerate().rev() {
            dx = block.backward(&cache.blocks[i], &dx, &mut grad.temporal[i]);
        }
        let dsampled = TrackTokens::from_track_major(f, n, &dx).data;
        let mut dvid = Mat::zeros(f * hw, cfg.d);
        for (k, c) in cache.frames.iter().enumerate() {
            let (dqueries, _, dvalues) = self.sample.backward(c, &dsampled.rows_range(k * n, n), &mut grad.sample);
            accumulate_coord_grad(&cfg.pe, &cache.inputs, &dqueries, k * n, dcoords);
            dvid.data[k * hw * cfg.d..(k + 1) * hw * cfg.d].copy_from_slice(&dvalues.data);
        }
        dvid
    }

    /// Adds the depth projection of `(0, 0, z, 1)` to every track token;
    /// `z` is frame-major like the tokens.
    pub fn inject_depth(&self, cfg: &ConditionerConfig, tt: &TrackTokens, z: &[f64]) -> (TrackTokens, Mat) {
        let inputs = cfg.pe.depth_rows(z);
        let mut out = tt.clone();
        out.data.add_assign(&self.depth.forward(&inputs));
        (out, inputs)
    }

    /// Per frame, grid queries attend over the branch's track-coordinate keys
    /// with the branch's track tokens as values.
    pub fn splat(&self, cfg: &ConditionerConfig, tt: &TrackTokens, pt: &ProjectedTracks, h: usize, w: usize) -> (TokenGrid, SplatCache) {
        let grid = cfg.pe.grid_key(h, w);
        let inputs = all_inputs(pt);
        let mut out = TokenGrid::zeros(tt.f, h, w, cfg.d);
        let mut frames = Vec::with_capacity(tt.f);
        for k in 0..tt.f {
            let keys = cfg.pe.encode_rows(&inputs[k * tt.n..(k + 1) * tt.n]);
            let (y, cache) = self.splat.forward(&grid, &keys, &tt.frame(k), cfg.heads);
            out.data.data[k * h * w * cfg.d..(k + 1) * h * w * cfg.d].copy_from_slice(&y.data);
            frames.push(cache);
        }
        (out, SplatCache { inputs, frames })
    }

    /// Returns the gradient for the track tokens (frame-major) and
    /// accumulates the key coordinate gradients.
    #[allow(clippy::too_many_arguments)]
    fn splat_backward(&self, cfg: &ConditionerConfig, cache: &SplatCache, n: usize, dgrid: &TokenGrid, grad: &mut ConditionerParams, dcoords: &mut [[f64; 3]]) -> Mat {
        let mut dtt = Mat::zeros(dgrid.f * n, cfg.d);
        let d = cfg.d;
        for (k, c) in cache.frames.iter().enumerate() {
            let (_, dkeys, dvalues) = self.splat.backward(c, &dgrid.frame(k), &mut grad.splat);
            accumulate_coord_grad(&cfg.pe, &cache.inputs, &dkeys, k * n, dcoords);
            dtt.data[k * n * d..(k + 1) * n * d].copy_from_slice(&dvalues.data);
        }
        dtt
    }

    /// Track grids for the source and target branches. Visibility never
    /// enters: the projected tracks carry only coordinates and existence.
    pub fn forward(
        &self,
        cfg: &ConditionerConfig,
        vid_src: &TokenGrid,
        pt_src: &ProjectedTracks,
        pt_tgt: &ProjectedTracks,
    ) -> Result<(TokenGrid, TokenGrid, ConditionerCache), ModelError> {
        check_tracks(pt_src, vid_src.f, "source")?;
        check_tracks(pt_tgt, vid_src.f, "target")?;
        if pt_src.num_tracks() != pt_tgt.num_tracks() {
            return Err(ModelError::ShapeMismatch(format!("{} source vs {} target tracks", pt_src.num_tracks(), pt_tgt.num_tracks())));
        }
        if vid_src.d() != cfg.d {
            return Err(ModelError::ShapeMismatch(format!("video tokens are {} wide, model {}", vid_src.d(), cfg.d)));
        }
        let (tt, sample) = self.sample_context(cfg, pt_src, vid_src);
        let z = |pt: &ProjectedTracks| pt.coords().iter().map(|c| c[2]).collect::<Vec<_>>();
        let (tt_src, din_src) = self.inject_depth(cfg, &tt, &z(pt_src));
        let (tt_tgt, din_tgt) = self.inject_depth(cfg, &tt, &z(pt_tgt));
        let (grid_src, splat_src) = self.splat(cfg, &tt_src, pt_src, vid_src.h, vid_src.w);
        let (grid_tgt, splat_tgt) = self.splat(cfg, &tt_tgt, pt_tgt, vid_src.h, vid_src.w);
        Ok((grid_src, grid_tgt, ConditionerCache { sample, depth_inputs: [din_src, din_tgt], splat: [splat_src, splat_tgt] }))
    }

    /// Accumulates parameter gradients into `grad` and returns the input
    /// gradients.
    pub fn backward(&self, cfg: &ConditionerConfig, cache: &ConditionerCache, d_src: &TokenGrid, d_tgt: &TokenGrid, grad: &mut ConditionerParams) -> ConditionerInputGrads {
        let f = d_src.f;
        let n = cache.depth_inputs[0].rows / f;
        let mut dcoords = [vec![[0.0; 3]; f * n], vec![[0.0; 3]; f * n]];
        let mut dtt = Mat::zeros(f * n, cfg.d);
        for (b, dgrid) in [d_src, d_tgt].into_iter().enumerate() {
            let dbranch = self.splat_backward(cfg, &cache.splat[b], n, dgrid, grad, &mut dcoords[b]);
            let ddepth = self.depth.backward(&cache.depth_inputs[b], &dbranch, &mut grad.depth);
            for r in 0..ddepth.rows {
                let z = cache.depth_inputs_z(b, r);
                dcoords[b][r][2] += cfg.pe.encode_grad([0.0, 0.0, z, 1.0], ddepth.row(r))[2];
            }
            dtt.add_assign(&dbranch);
        }
        let [mut coords_src, coords_tgt] = dcoords;
        let vid_src = self.sample_context_backward(cfg, &cache.sample, f, n, &dtt, grad, &mut coords_src);
        ConditionerInputGrads { vid_src, coords_src, coords_tgt }
    }
}

/// `[vid_src + trk_src; vid_tgt + trk_tgt]` as one `2·f·h·w × d` sequence.
pub fn condition_tokens(vid_src: &TokenGrid, vid_tgt: &TokenGrid, trk_src: &TokenGrid, trk_tgt: &TokenGrid) -> Result<Mat, ModelError> {
    let dims = |g: &TokenGrid| (g.f, g.h, g.w, g.d());
    let reference = dims(vid_src);
    for (name, g) in [("target video", vid_tgt), ("source tracks", trk_src), ("target tracks", trk_tgt)] {
        if dims(g) != reference {
            return Err(ModelError::ShapeMismatch(format!("{name} grid is {:?}, source video {:?}", dims(g), reference)));
        }
    }
    Ok(Mat::vstack(&[&vid_src.data.add(&trk_src.data), &vid_tgt.data.add(&trk_tgt.data)]))
}
