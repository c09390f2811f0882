//! Rectified-flow training on procedural pairs, Euler sampling and the
//! blob-center evaluation.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::conditioner::{ConditionerConfig, TokenGrid};
use crate::denoiser::{mse, ModelConfig, ModelInputs, ToyModel, TrackMode};
use crate::flow::{flow_interpolate, gaussian, patchify, to_model_space, to_pixel_space, unpatchify, PatchSize};
use crate::layers::Params;
use crate::posenc::PosEncConfig;
use crate::scene::{gen_procedural_pair, ToySample, ToySceneConfig};
use crate::tensor::Mat;
use crate::ModelError;
use trackedit_core::geometry::project;
use trackedit_core::rng::derive;
use trackedit_core::tracks::{project_pair, temporal_downsample};
use trackedit_core::{ProjectedTracks, VideoClip};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyTrainConfig {
    pub scene: ToySceneConfig,
    pub pairs: usize,
    pub held_out: usize,
    pub epochs: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub d: usize,
    /// Conditioner heads; the positional encoding is one head wide.
    pub conditioner_heads: usize,
    pub denoiser_heads: usize,
    pub blocks: usize,
    pub patch: PatchSize,
    pub pe_input_scale: f64,
    pub pe_base: f64,
    /// Euler steps used when generating for evaluation.
    pub eval_steps: usize,
    /// Held-out EPE is computed every this many epochs and after the last;
    /// 0 means only after the last.
    pub eval_every: usize,
    pub seed: u64,
    /// Worker threads for data generation and evaluation; 0 picks the
    /// available parallelism. Results do not depend on it.
    pub threads: usize,
}

impl Default for ToyTrainConfig {
    fn default() -> Self {
        Self {
            scene: ToySceneConfig::default(),
            pairs: 200,
            held_out: 40,
            epochs: 20,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            d: 32,
            conditioner_heads: 1,
            denoiser_heads: 2,
            blocks: 2,
            patch: (4, 4, 4),
            pe_input_scale: 8.0 * std::f64::consts::PI,
            pe_base: 16.0,
            eval_steps: 8,
            eval_every: 0,
            seed: 0,
            threads: 0,
        }
    }
}

impl ToyTrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.scene.validate()?;
        if self.held_out == 0 || self.held_out >= self.pairs {
            return Err("held-out count must lie in 1..pairs".into());
        }
        if self.epochs == 0 || self.eval_steps == 0 {
            return Err("epochs and eval steps must be positive".into());
        }
        if !(self.lr >= 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err("invalid optimizer settings".into());
        }
        let (pt, ph, pw) = self.patch;
        if pt == 0 || ph == 0 || pw == 0 || self.scene.frames % pt != 0 || self.scene.height % ph != 0 || self.scene.width % pw != 0 {
            return Err("scene dims must be divisible by the patch".into());
        }
        if self.conditioner_heads == 0 || self.d % self.conditioner_heads != 0 || (self.d / self.conditioner_heads) % 8 != 0 {
            return Err("d / conditioner_heads must be a multiple of 8".into());
        }
        if self.denoiser_heads == 0 || self.d % self.denoiser_heads != 0 || self.d % 8 != 0 {
            return Err("d must be a multiple of 8 and split into denoiser heads".into());
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        let mut conditioner = ConditionerConfig::new(self.d, self.conditioner_heads, self.d / self.conditioner_heads);
        conditioner.pe = PosEncConfig { input_scale: self.pe_input_scale, base: self.pe_base, ..conditioner.pe };
        ModelConfig { conditioner, denoiser_heads: self.denoiser_heads, blocks: self.blocks, patch: self.patch }
    }

    pub fn token_frames(&self) -> usize {
        self.scene.frames / self.patch.0
    }

    fn threads(&self) -> usize {
        if self.threads > 0 {
            self.threads
        } else {
            std::thread::available_parallelism().map_or(1, |n| n.get())
        }
    }
}

/// Maps `f` over `items` on up to `threads` scoped workers, keeping order.
pub fn par_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(usize, &T) -> R + Sync) -> Vec<R> {
    let threads = threads.max(1).min(items.len().max(1));
    if threads == 1 {
        return items.iter().enumerate().map(|(i, x)| f(i, x)).collect();
    }
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .enumerate()
            .map(|(c, part)| {
                let f = &f;
                s.spawn(move || part.iter().enumerate().map(|(i, x)| f(c * chunk + i, x)).collect::<Vec<_>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    })
}

/// A generated pair in model form.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedPair {
    /// Source patches in model space `[-1, 1]`.
    pub source: TokenGrid,
    pub target: TokenGrid,
    /// Tracks subsampled to the token frame count.
    pub tracks_src: ProjectedTracks,
    pub tracks_tgt: ProjectedTracks,
    pub sample: ToySample,
}

fn model_grid(video: &VideoClip, patch: PatchSize) -> Result<TokenGrid, ModelError> {
    let g = patchify(video, patch)?;
    Ok(TokenGrid::new(g.f, g.h, g.w, to_model_space(&g.data)))
}

pub fn prepare_pair(sample: ToySample, patch: PatchSize) -> Result<PreparedPair, ModelError> {
    let source = model_grid(&sample.pair.source_video, patch)?;
    let target_video = sample.pair.target_video.as_ref().ok_or_else(|| ModelError::ShapeMismatch("pair has no target video".into()))?;
    let target = model_grid(target_video, patch)?;
    let (src, tgt) = project_pair(&sample.pair);
    Ok(PreparedPair {
        tracks_src: temporal_downsample(&src, source.f),
        tracks_tgt: temporal_downsample(&tgt, source.f),
        source,
        target,
        sample,
    })
}

/// Seeds of the pairs in a dataset; pair `i` of a dataset with root `seed`.
pub fn pair_seed(seed: u64, i: usize) -> u64 {
    trackedit_core::rng::derive_seed(seed, &format!("toy/pair/{i}"))
}

pub fn generate_dataset(cfg: &ToyTrainConfig) -> Vec<PreparedPair> {
    let idx: Vec<usize> = (0..cfg.pairs).collect();
    par_map(&idx, cfg.threads(), |_, &i| prepare_pair(gen_procedural_pair(pair_seed(cfg.seed, i), &cfg.scene), cfg.patch).expect("scene dims divide by the patch"))
}

/// First-order adaptive-moment optimizer without weight decay.
#[derive(Debug, Clone)]
pub struct Adam<P> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: P,
    v: P,
}

impl<P: Params + Clone> Adam<P> {
    pub fn new(params: &P, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        let mut m = params.clone();
        m.fill(0.0);
        Self { lr, beta1, beta2, eps, step: 0, v: m.clone(), m }
    }

    pub fn update(&mut self, params: &mut P, grad: &P) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        let grads = grad.named();
        let mut ms = self.m.named_mut();
        let mut vs = self.v.named_mut();
        for (t, (_, p)) in params.named_mut().into_iter().enumerate() {
            let (g, m, v) = (&grads[t].1.data, &mut ms[t].1.data, &mut vs[t].1.data);
            for i in 0..p.data.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p.data[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    /// Mean velocity loss over the epoch's steps.
    pub loss: f64,
    pub val_epe: Option<f64>,
}

pub struct TrainOutcome {
    pub model: ToyModel,
    pub config: ModelConfig,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainOutcome {
    pub fn final_loss(&self) -> f64 {
        self.metrics.last().map_or(f64::NAN, |m| m.loss)
    }

    pub fn final_epe(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.val_epe)
    }

    pub fn smoothed_final_loss(&self) -> f64 {
        smoothed_loss(&self.metrics, self.metrics.len())
    }
}

/// Epochs averaged by [`smoothed_loss`].
pub const SMOOTHING_WINDOW: usize = 5;

/// Mean loss over the up to [`SMOOTHING_WINDOW`] epochs ending at `epoch`
/// (1-based).
pub fn smoothed_loss(metrics: &[EpochMetrics], epoch: usize) -> f64 {
    assert!(epoch >= 1 && epoch <= metrics.len(), "epoch {epoch} out of range");
    let window = &metrics[epoch.saturating_sub(SMOOTHING_WINDOW)..epoch];
    window.iter().map(|m| m.loss).sum::<f64>() / window.len() as f64
}

/// One rectified-flow step on one pair; returns the loss.
pub fn train_step(model: &ToyModel, cfg: &ModelConfig, pair: &PreparedPair, mode: TrackMode, t: f64, eps: &Mat, grad: &mut ToyModel) -> f64 {
    let state = flow_interpolate(&pair.target.data, eps, t);
    let noisy = TokenGrid::new(pair.target.f, pair.target.h, pair.target.w, state.x_t);
    let inputs = ModelInputs { source: &pair.source, noisy: &noisy, tracks_src: &pair.tracks_src, tracks_tgt: &pair.tracks_tgt, t, mode };
    let (v, cache) = model.forward(cfg, &inputs).expect("prepared pairs are consistent");
    let (loss, dv) = mse(&v, &state.velocity);
    model.backward(cfg, &cache, &dv, grad);
    loss
}

/// Trains on `train`, reporting held-out EPE on `held_out`. `on_epoch` sees
/// every epoch's metrics as they are produced.
pub fn train_loop(cfg: &ToyTrainConfig, train: &[PreparedPair], held_out: &[PreparedPair], mode: TrackMode, mut on_epoch: impl FnMut(&EpochMetrics)) -> TrainOutcome {
    assert!(!train.is_empty(), "training set is empty");
    let mcfg = cfg.model_config();
    let mut model = ToyModel::new(&mcfg, &mut derive(cfg.seed, "train/init"));
    let mut adam = Adam::new(&model, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps);
    let mut grad = model.zeros_like();
    let mut order_rng = derive(cfg.seed, "train/order");
    let mut noise_rng = derive(cfg.seed, "train/noise");
    let mut metrics = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for &i in &order {
            let pair = &train[i];
            let t: f64 = noise_rng.random();
            let eps = gaussian(pair.target.data.rows, pair.target.data.cols, &mut noise_rng);
            grad.fill(0.0);
            total += train_step(&model, &mcfg, pair, mode, t, &eps, &mut grad);
            adam.update(&mut model, &grad);
        }
        let evaluate = epoch == cfg.epochs || (cfg.eval_every > 0 && epoch % cfg.eval_every == 0);
        let val_epe = (evaluate && !held_out.is_empty()).then(|| evaluate_epe(&model, &mcfg, held_out, mode, cfg.eval_steps, cfg.seed, cfg.threads()));
        let m = EpochMetrics { epoch, loss: total / train.len() as f64, val_epe };
        log::info!("epoch {epoch}: loss {:.5} val_epe {:?}", m.loss, m.val_epe);
        on_epoch(&m);
        metrics.push(m);
    }
    TrainOutcome { model, config: mcfg, metrics }
}

/// Euler integration of the learned velocity from noise at `t = 1` to data
/// at `t = 0`; returns model-space target tokens.
pub fn generate_tokens(model: &ToyModel, cfg: &ModelConfig, source: &TokenGrid, tracks_src: &ProjectedTracks, tracks_tgt: &ProjectedTracks, mode: TrackMode, steps: usize, noise: Mat) -> Result<Mat, ModelError> {
    assert!(steps >= 1, "need at least one step");
    let mut x = noise;
    let dt = 1.0 / steps as f64;
    for i in 0..steps {
        let t = 1.0 - i as f64 * dt;
        let noisy = TokenGrid::new(source.f, source.h, source.w, x);
        let inputs = ModelInputs { source, noisy: &noisy, tracks_src, tracks_tgt, t, mode };
        let (v, _) = model.forward(cfg, &inputs)?;
        x = noisy.data;
        for (a, b) in x.data.iter_mut().zip(&v.data) {
            *a -= dt * b;
        }
    }
    Ok(x)
}

/// Generates a target clip in pixels, clamped to `[0, 1]`.
#[allow(clippy::too_many_arguments)]
pub fn generate(model: &ToyModel, cfg: &ModelConfig, source: &TokenGrid, tracks_src: &ProjectedTracks, tracks_tgt: &ProjectedTracks, mode: TrackMode, steps: usize, seed: u64) -> Result<VideoClip, ModelError> {
    let noise = gaussian(source.data.rows, source.data.cols, &mut derive(seed, "generate/noise"));
    let x = generate_tokens(model, cfg, source, tracks_src, tracks_tgt, mode, steps, noise)?;
    unpatchify(&TokenGrid::new(source.f, source.h, source.w, to_pixel_space(&x)), cfg.patch)
}

/// Width of the color kernel used to find a billboard in a frame.
pub const BLOB_COLOR_SIGMA: f32 = 0.15;

/// Color-weighted centroid (pixel units) of `color` in frame `f`, or `None`
/// when no pixel resembles it.
pub fn blob_centroid(video: &VideoClip, f: usize, color: [f32; 3]) -> Option<[f64; 2]> {
    let (mut sx, mut sy, mut sw) = (0.0f64, 0.0f64, 0.0f64);
    for r in 0..video.height {
        for c in 0..video.width {
            let p = video.pixel(f, r, c);
            let d2: f32 = (0..3).map(|i| (p[i] - color[i]).powi(2)).sum();
            let w = (-d2 / (2.0 * BLOB_COLOR_SIGMA * BLOB_COLOR_SIGMA)).exp() as f64;
            sx += w * (c as f64 + 0.5);
            sy += w * (r as f64 + 0.5);
            sw += w;
        }
    }
    (sw > 1e-6).then(|| [sx / sw, sy / sw])
}

/// Mean distance between each billboard's color centroid in `video` and the
/// mean projection of its ground-truth target tracks, over frames and
/// billboards. A billboard with no matching pixels is scored at the frame
/// center.
pub fn blob_epe(video: &VideoClip, sample: &ToySample) -> f64 {
    let ts = &sample.pair.target_tracks;
    let cam = &sample.pair.target_camera;
    let (mut total, mut count) = (0.0, 0usize);
    for f in 0..video.frames {
        let frame = cam.frame(f);
        for b in &sample.billboards {
            let members = ts.tracks_with_object(b.object_id);
            let mut gt = [0.0; 2];
            for &n in &members {
                let p = project(ts.position(f, n), &frame.intrinsics, &frame.pose).expect("billboards stay in front of the camera");
                gt[0] += p.x / members.len() as f64;
                gt[1] += p.y / members.len() as f64;
            }
            let found = blob_centroid(video, f, b.color).unwrap_or([video.width as f64 / 2.0, video.height as f64 / 2.0]);
            total += ((found[0] - gt[0]).powi(2) + (found[1] - gt[1]).powi(2)).sqrt();
            count += 1;
        }
    }
    total / count as f64
}

pub fn evaluate_epe(model: &ToyModel, cfg: &ModelConfig, pairs: &[PreparedPair], mode: TrackMode, steps: usize, seed: u64, threads: usize) -> f64 {
    let scores = par_map(pairs, threads, |i, p| {
        let video = generate(model, cfg, &p.source, &p.tracks_src, &p.tracks_tgt, mode, steps, derive_seed_for_eval(seed, i)).expect("prepared pairs are consistent");
        blob_epe(&video, &p.sample)
    });
    scores.iter().sum::<f64>() / scores.len() as f64
}

fn derive_seed_for_eval(seed: u64, i: usize) -> u64 {
    trackedit_core::rng::derive_seed(seed, &format!("eval/{i}"))
}

/// Splits a dataset into `(train, held_out)` with the held-out pairs last.
pub fn split(data: &[PreparedPair], held_out: usize) -> (&[PreparedPair], &[PreparedPair]) {
    data.split_at(data.len() - held_out)
}
