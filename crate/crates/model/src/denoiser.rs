//! A small full-attention denoiser over the conditioned source/target token
//! sequence, and the toy model that wires it to the conditioner.

use serde::{Deserialize, Serialize};

use crate::conditioner::{condition_tokens, ConditionerCache, ConditionerConfig, ConditionerParams, TokenGrid};
use crate::flow::{patch_dim, PatchSize};
use crate::impl_params;
use crate::layers::{BlockCache, LayerNorm, LayerNormCache, Linear, Params, TransformerBlock};
use crate::posenc::PosEncConfig;
use crate::tensor::Mat;
use crate::ModelError;
use trackedit_core::rng::Rng;
use trackedit_core::ProjectedTracks;

/// Flow time is multiplied by this before its sinusoidal features.
pub const TIME_SCALE: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub conditioner: ConditionerConfig,
    pub denoiser_heads: usize,
    pub blocks: usize,
    pub patch: PatchSize,
}

impl ModelConfig {
    pub fn d(&self) -> usize {
        self.conditioner.d
    }

    pub fn heads(&self) -> usize {
        self.denoiser_heads
    }

    pub fn patch_dim(&self) -> usize {
        patch_dim(self.patch)
    }

    /// Encoding of sequence positions: as wide as the model, with the
    /// conditioner's frequency ladder.
    fn token_pe(&self) -> PosEncConfig {
        PosEncConfig { width: self.d(), ..self.conditioner.pe }
    }
}

/// Sinusoidal features of flow time, `1 × width`, sin half then cos half.
pub fn time_features(t: f64, width: usize) -> Mat {
    let pairs = width / 2;
    let mut m = Mat::zeros(1, width);
    for i in 0..pairs {
        let freq = 10000f64.powf(-(i as f64) / pairs as f64);
        let (s, c) = (t * TIME_SCALE * freq).sin_cos();
        m.data[i] = s;
        m.data[pairs + i] = c;
    }
    m
}

/// Fixed encodings of `(x, y, frame, branch)` for the `2·f·h·w` sequence.
pub fn sequence_positions(pe: &PosEncConfig, f: usize, h: usize, w: usize) -> Mat {
    let mut rows = Vec::with_capacity(2 * f * h * w);
    for branch in 0..2 {
        for k in 0..f {
            for i in 0..h {
                for j in 0..w {
                    rows.push([(j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64, (k as f64 + 0.5) / f as f64, branch as f64]);
                }
            }
        }
    }
    pe.encode_rows(&rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserParams {
    /// Shared by the source video and the noisy target.
    pub embed: Linear,
    pub time: Linear,
    pub blocks: Vec<TransformerBlock>,
    pub norm: LayerNorm,
    pub unembed: Linear,
    /// Per-channel gain on the noisy patch, from time features, added to the
    /// output. Lets noise bypass the `patch_dim → d` embedding.
    pub skip: Linear,
}

impl_params!(DenoiserParams { embed, time, blocks, norm, unembed, skip });

pub struct DenoiserCache {
    time_in: Mat,
    blocks: Vec<BlockCache>,
    block_out: Mat,
    norm: LayerNormCache,
    normed: Mat,
    noisy: Mat,
}

impl DenoiserParams {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        let d = cfg.d();
        Self {
            embed: Linear::new(cfg.patch_dim(), d, rng),
            time: Linear::new(d, d, rng),
            blocks: (0..cfg.blocks).map(|_| TransformerBlock::new(d, rng)).collect(),
            norm: LayerNorm::new(d),
            unembed: Linear::new(d, cfg.patch_dim(), rng),
            skip: Linear::new(d, cfg.patch_dim(), rng),
        }
    }

    /// Predicted velocity for the target half of `seq` (`2·L × d`), as
    /// `L × patch_dim`. `noisy` is the raw target patches.
    pub fn forward(&self, cfg: &ModelConfig, seq: &Mat, positions: &Mat, noisy: &Mat, t: f64) -> (Mat, DenoiserCache) {
        let half = seq.rows / 2;
        let time_in = time_features(t, cfg.d());
        let mut x = seq.add(positions);
        x.add_row_broadcast(&self.time.forward(&time_in));
        let mut blocks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (y, cache) = block.forward(&x, x.rows, cfg.heads());
            x = y;
            blocks.push(cache);
        }
        let (normed, norm) = self.norm.forward(&x.rows_range(half, half));
        let mut v = self.unembed.forward(&normed);
        let gate = self.skip.forward(&time_in);
        for (row, noise) in v.data.chunks_mut(gate.cols).zip(noisy.data.chunks(gate.cols)) {
            for ((o, g), n) in row.iter_mut().zip(&gate.data).zip(noise) {
                *o += g * n;
            }
        }
        (v, DenoiserCache { time_in, blocks, block_out: x, norm, normed, noisy: noisy.clone() })
    }

    /// Returns the gradient for the input sequence.
    pub fn backward(&self, cache: &DenoiserCache, dv: &Mat, grad: &mut DenoiserParams) -> Mat {
        let (rows, d) = (cache.block_out.rows, cache.block_out.cols);
        let half = rows / 2;
        let mut dgate = Mat::zeros(1, dv.cols);
        for (row, noise) in dv.data.chunks(dv.cols).zip(cache.noisy.data.chunks(dv.cols)) {
            for ((g, o), n) in dgate.data.iter_mut().zip(row).zip(noise) {
                *g += o * n;
            }
        }
        self.skip.backward(&cache.time_in, &dgate, &mut grad.skip);
        let dnormed = self.unembed.backward(&cache.normed, dv, &mut grad.unembed);
        let dtarget = self.norm.backward(&cache.norm, &dnormed, &mut grad.norm);
        let mut dx = Mat::zeros(rows, d);
        dx.data[half * d..].copy_from_slice(&dtarget.data);
        for (i, block) in self.blocks.iter().enumerate().rev() {
            dx = block.backward(&cache.blocks[i], &dx, &mut grad.blocks[i]);
        }
        self.time.backward(&cache.time_in, &dx.sum_rows(), &mut grad.time);
        dx
    }
}

/// Conditioner plus denoiser.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    pub conditioner: ConditionerParams,
    pub denoiser: DenoiserParams,
}

impl_params!(ToyModel { conditioner, denoiser });

/// Whether track tokens reach the denoiser. `Zeroed` is the ablation: the
/// conditioner never runs and its tokens are replaced by zeros.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackMode {
    Full,
    Zeroed,
}

/// Everything the model sees for one prediction.
pub struct ModelInputs<'a> {
    /// Source pixels as patch tokens in model space.
    pub source: &'a TokenGrid,
    /// Noisy target patch tokens.
    pub noisy: &'a TokenGrid,
    pub tracks_src: &'a ProjectedTracks,
    pub tracks_tgt: &'a ProjectedTracks,
    pub t: f64,
    pub mode: TrackMode,
}

pub struct ModelCache {
    source: Mat,
    noisy: Mat,
    conditioner: Option<ConditionerCache>,
    denoiser: DenoiserCache,
    dims: (usize, usize, usize),
}

impl ToyModel {
    pub fn new(cfg: &ModelConfig, rng: &mut Rng) -> Self {
        Self { conditioner: ConditionerParams::new(&cfg.conditioner, rng), denoiser: DenoiserParams::new(cfg, rng) }
    }

    /// A zero-filled copy, for gradient accumulators.
    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        z.fill(0.0);
        z
    }

    /// Predicted velocity on the target tokens, `L × patch_dim`.
    pub fn forward(&self, cfg: &ModelConfig, inputs: &ModelInputs) -> Result<(Mat, ModelCache), ModelError> {
        let (src, noisy) = (inputs.source, inputs.noisy);
        if (src.f, src.h, src.w) != (noisy.f, noisy.h, noisy.w) || src.d() != cfg.patch_dim() || noisy.d() != cfg.patch_dim() {
            return Err(ModelError::ShapeMismatch("source and noisy token grids differ".into()));
        }
        let (f, h, w) = (src.f, src.h, src.w);
        let vid_src = TokenGrid::new(f, h, w, self.denoiser.embed.forward(&src.data));
        let vid_tgt = TokenGrid::new(f, h, w, self.denoiser.embed.forward(&noisy.data));
        let (trk_src, trk_tgt, conditioner) = match inputs.mode {
            TrackMode::Full => {
                let (a, b, cache) = self.conditioner.forward(&cfg.conditioner, &vid_src, inputs.tracks_src, inputs.tracks_tgt)?;
                (a, b, Some(cache))
            }
            TrackMode::Zeroed => (TokenGrid::zeros(f, h, w, cfg.d()), TokenGrid::zeros(f, h, w, cfg.d()), None),
        };
        let seq = condition_tokens(&vid_src, &vid_tgt, &trk_src, &trk_tgt)?;
        let positions = sequence_positions(&cfg.token_pe(), f, h, w);
        let (v, denoiser) = self.denoiser.forward(cfg, &seq, &positions, &noisy.data, inputs.t);
        Ok((v, ModelCache { source: src.data.clone(), noisy: noisy.data.clone(), conditioner, denoiser, dims: (f, h, w) }))
    }

    /// Accumulates parameter gradients for upstream velocity gradient `dv`.
    pub fn backward(&self, cfg: &ModelConfig, cache: &ModelCache, dv: &Mat, grad: &mut ToyModel) {
        let (f, h, w) = cache.dims;
        let l = f * h * w;
        let dseq = self.denoiser.backward(&cache.denoiser, dv, &mut grad.denoiser);
        let mut dvid_src = dseq.rows_range(0, l);
        let dvid_tgt = dseq.rows_range(l, l);
        if let Some(cc) = &cache.conditioner {
            let d_src = TokenGrid::new(f, h, w, dvid_src.clone());
            let d_tgt = TokenGrid::new(f, h, w, dvid_tgt.clone());
            let g = self.conditioner.backward(&cfg.conditioner, cc, &d_src, &d_tgt, &mut grad.conditioner);
            dvid_src.add_assign(&g.vid_src);
        }
        self.denoiser.embed.backward(&cache.source, &dvid_src, &mut grad.denoiser.embed);
        self.denoiser.embed.backward(&cache.noisy, &dvid_tgt, &mut grad.denoiser.embed);
    }
}

/// Mean squared error and its gradient.
pub fn mse(pred: &Mat, target: &Mat) -> (f64, Mat) {
    assert_eq!((pred.rows, pred.cols), (target.rows, target.cols));
    let n = pred.len() as f64;
    let diff: Vec<f64> = pred.data.iter().zip(&target.data).map(|(p, t)| p - t).collect();
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (loss, Mat::from_vec(pred.rows, pred.cols, diff.iter().map(|d| 2.0 * d / n).collect()))
}
