//! Central finite-difference checks of the hand-written gradients, plus the
//! small seeded fixture they run on.

use rand::Rng as _;

use crate::conditioner::{ConditionerConfig, ConditionerParams, TokenGrid};
use crate::denoiser::{ModelConfig, ModelInputs, ToyModel, TrackMode};
use crate::flow::patch_dim;
use crate::layers::Params;
use crate::tensor::Mat;
use trackedit_core::rng::{derive, Rng};
use trackedit_core::ProjectedTracks;

pub const FD_STEP: f64 = 1e-5;

/// Relative errors use `max(|analytic|, |numeric|, RELATIVE_FLOOR)` as the
/// denominator. Key biases and constant grid-key lanes have exactly zero
/// gradient (softmax is shift invariant), where a central difference on an
/// O(10) loss returns round-off of a few 1e-10.
pub const RELATIVE_FLOOR: f64 = 1e-5;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
}

/// Compares `analytic` against central differences of `loss` for every entry
/// of every tensor in `params`.
pub fn check_params<P: Params + Clone>(params: &P, analytic: &P, loss: impl Fn(&P) -> f64) -> Vec<TensorCheck> {
    let grads: Vec<Mat> = analytic.named().into_iter().map(|(_, m)| m.clone()).collect();
    let names: Vec<String> = params.named().into_iter().map(|(n, _)| n).collect();
    let mut probe = params.clone();
    let mut out = Vec::with_capacity(names.len());
    for (t, name) in names.into_iter().enumerate() {
        let mut worst = 0.0f64;
        for i in 0..grads[t].len() {
            let original = probe.named()[t].1.data[i];
            let set = |p: &mut P, v: f64| p.named_mut()[t].1.data[i] = v;
            set(&mut probe, original + FD_STEP);
            let hi = loss(&probe);
            set(&mut probe, original - FD_STEP);
            let lo = loss(&probe);
            set(&mut probe, original);
            let numeric = (hi - lo) / (2.0 * FD_STEP);
            worst = worst.max(relative_error(grads[t].data[i], numeric));
        }
        out.push(TensorCheck { name, entries: grads[t].len(), max_relative_error: worst });
    }
    out
}

/// Central-difference check of a gradient over a flat input vector.
pub fn check_inputs(name: &str, values: &[f64], analytic: &[f64], loss: impl Fn(&[f64]) -> f64) -> TensorCheck {
    let mut probe = values.to_vec();
    let mut worst = 0.0f64;
    for i in 0..values.len() {
        probe[i] = values[i] + FD_STEP;
        let hi = loss(&probe);
        probe[i] = values[i] - FD_STEP;
        let lo = loss(&probe);
        probe[i] = values[i];
        worst = worst.max(relative_error(analytic[i], (hi - lo) / (2.0 * FD_STEP)));
    }
    TensorCheck { name: name.to_string(), entries: values.len(), max_relative_error: worst }
}

pub fn dot(a: &Mat, b: &Mat) -> f64 {
    a.data.iter().zip(&b.data).map(|(x, y)| x * y).sum()
}

/// Tracks with coordinates in `[0, 1]` and roughly one in six entries marked
/// non-existent.
pub fn random_tracks(frames: usize, tracks: usize, rng: &mut Rng) -> ProjectedTracks {
    let coords = (0..frames * tracks).map(|_| [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()]).collect();
    let existence = (0..frames * tracks).map(|_| rng.random::<f64>() > 1.0 / 6.0).collect();
    ProjectedTracks::new(frames, tracks, coords, existence).expect("consistent shapes")
}

pub fn random_grid(f: usize, h: usize, w: usize, d: usize, rng: &mut Rng) -> TokenGrid {
    TokenGrid::new(f, h, w, Mat::uniform(f * h * w, d, 1.0, rng))
}

/// The seeded small configuration: `f = 2`, `N = 3`, `h = w = 4`, `d = 8`,
/// two heads, two blocks in the denoiser.
pub struct SmallCase {
    pub cfg: ModelConfig,
    pub model: ToyModel,
    pub source: TokenGrid,
    pub noisy: TokenGrid,
    pub tracks_src: ProjectedTracks,
    pub tracks_tgt: ProjectedTracks,
    pub t: f64,
}

impl SmallCase {
    pub const FRAMES: usize = 2;
    pub const TRACKS: usize = 3;
    pub const SIDE: usize = 4;
    pub const WIDTH: usize = 8;

    pub fn new(seed: u64) -> Self {
        let cfg = ModelConfig { conditioner: ConditionerConfig::new(Self::WIDTH, 2, 8), denoiser_heads: 2, blocks: 2, patch: (1, 2, 2) };
        let mut rng = derive(seed, "gradcheck/model");
        let model = ToyModel::new(&cfg, &mut rng);
        let mut rng = derive(seed, "gradcheck/inputs");
        let (f, s, p) = (Self::FRAMES, Self::SIDE, patch_dim(cfg.patch));
        Self {
            source: random_grid(f, s, s, p, &mut rng),
            noisy: random_grid(f, s, s, p, &mut rng),
            tracks_src: random_tracks(f, Self::TRACKS, &mut rng),
            tracks_tgt: random_tracks(f, Self::TRACKS, &mut rng),
            t: 0.37,
            cfg,
            model,
        }
    }

    pub fn inputs(&self, mode: TrackMode) -> ModelInputs<'_> {
        ModelInputs { source: &self.source, noisy: &self.noisy, tracks_src: &self.tracks_src, tracks_tgt: &self.tracks_tgt, t: self.t, mode }
    }

    /// Checks every parameter of the full model under the loss
    /// `Σ v ⊙ weights` for fixed random weights.
    pub fn check_model(&self) -> Vec<TensorCheck> {
        let mut rng = derive(0, "gradcheck/upstream");
        let (v, cache) = self.model.forward(&self.cfg, &self.inputs(TrackMode::Full)).expect("valid fixture");
        let weights = Mat::uniform(v.rows, v.cols, 1.0, &mut rng);
        let mut grad = self.model.zeros_like();
        self.model.backward(&self.cfg, &cache, &weights, &mut grad);
        check_params(&self.model, &grad, |m: &ToyModel| {
            let (v, _) = m.forward(&self.cfg, &self.inputs(TrackMode::Full)).expect("valid fixture");
            dot(&v, &weights)
        })
    }

    /// Checks the conditioner alone, parameters and inputs, under
    /// `Σ trk_src ⊙ a + Σ trk_tgt ⊙ b`.
    pub fn check_conditioner(&self) -> Vec<TensorCheck> {
        let cc = &self.cfg.conditioner;
        let params = &self.model.conditioner;
        let mut rng = derive(1, "gradcheck/upstream");
        let (f, s, d) = (Self::FRAMES, Self::SIDE, Self::WIDTH);
        let vid = random_grid(f, s, s, d, &mut rng);
        let a = random_grid(f, s, s, d, &mut rng);
        let b = random_grid(f, s, s, d, &mut rng);
        let loss_of = |p: &ConditionerParams, vid: &TokenGrid, src: &ProjectedTracks, tgt: &ProjectedTracks| {
            let (gs, gt, _) = p.forward(cc, vid, src, tgt).expect("valid fixture");
            dot(&gs.data, &a.data) + dot(&gt.data, &b.data)
        };
        let (_, _, cache) = params.forward(cc, &vid, &self.tracks_src, &self.tracks_tgt).expect("valid fixture");
        let mut grad = params.clone();
        grad.fill(0.0);
        let inputs = params.backward(cc, &cache, &a, &b, &mut grad);
        let mut out = check_params(params, &grad, |p: &ConditionerParams| loss_of(p, &vid, &self.tracks_src, &self.tracks_tgt));
        out.push(check_inputs("input.vid_src", &vid.data.data, &inputs.vid_src.data, |x| {
            let v = TokenGrid::new(f, s, s, Mat::from_vec(vid.data.rows, d, x.to_vec()));
            loss_of(params, &v, &self.tracks_src, &self.tracks_tgt)
        }));
        let flat = |pt: &ProjectedTracks| pt.coords().iter().flat_map(|c| c.iter().copied()).collect::<Vec<_>>();
        let rebuild = |pt: &ProjectedTracks, x: &[f64]| {
            let coords = x.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            ProjectedTracks::new(pt.num_frames(), pt.num_tracks(), coords, pt.existence().to_vec()).expect("same shape")
        };
        let g_src: Vec<f64> = inputs.coords_src.iter().flat_map(|c| c.iter().copied()).collect();
        let g_tgt: Vec<f64> = inputs.coords_tgt.iter().flat_map(|c| c.iter().copied()).collect();
        out.push(check_inputs("input.coords_src", &flat(&self.tracks_src), &g_src, |x| loss_of(params, &vid, &rebuild(&self.tracks_src, x), &self.tracks_tgt)));
        out.push(check_inputs("input.coords_tgt", &flat(&self.tracks_tgt), &g_tgt, |x| loss_of(params, &vid, &self.tracks_src, &rebuild(&self.tracks_tgt, x))));
        out
    }
}
