//! Layers with hand-written reverse passes. Each `backward` accumulates
//! parameter gradients into a same-shaped struct and returns the input
//! gradient.

use crate::tensor::{matmul, matmul_nt, matmul_tn, matmul_tn_acc, Mat};
use trackedit_core::rng::Rng;

/// Named access to every parameter tensor, in a fixed order.
pub trait Params {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Mat));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Mat));

    fn named(&self) -> Vec<(String, &Mat)> {
        let mut out = Vec::new();
        self.visit("", &mut |n, m| out.push((n, m)));
        out
    }

    fn named_mut(&mut self) -> Vec<(String, &mut Mat)> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |n, m| out.push((n, m)));
        out
    }

    fn num_params(&self) -> usize {
        self.named().iter().map(|(_, m)| m.len()).sum()
    }

    fn fill(&mut self, v: f64) {
        for (_, m) in self.named_mut() {
            m.data.fill(v);
        }
    }
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl Params for Mat {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Mat)) {
        f(prefix.to_string(), self);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Mat)) {
        f(prefix.to_string(), self);
    }
}

impl<T: Params> Params for Vec<T> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Mat)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Mat)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

/// Implements [`Params`] for a struct by visiting the listed fields in order.
#[macro_export]
macro_rules! impl_params {
    ($ty:ty { $($field:ident),* $(,)? }) => {
        impl $crate::layers::Params for $ty {
            fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a $crate::tensor::Mat)) {
                $( $crate::layers::Params::visit(&self.$field, &$crate::layers::join_name(prefix, stringify!($field)), f); )*
            }
            fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut $crate::tensor::Mat)) {
                $( $crate::layers::Params::visit_mut(&mut self.$field, &$crate::layers::join_name(prefix, stringify!($field)), f); )*
            }
        }
    };
}

#[doc(hidden)]
pub fn join_name(prefix: &str, name: &str) -> String {
    join(prefix, name)
}

/// `y = x · w + b` with `w` stored `in × out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub w: Mat,
    pub b: Mat,
}

impl_params!(Linear { w, b });

impl Linear {
    /// Weights and bias uniform in `±1/√fan_in`.
    pub fn new(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        Self { w: Mat::uniform(fan_in, fan_out, bound, rng), b: Mat::uniform(1, fan_out, bound, rng) }
    }

    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { w: Mat::zeros(fan_in, fan_out), b: Mat::zeros(1, fan_out) }
    }

    pub fn forward(&self, x: &Mat) -> Mat {
        let mut y = matmul(x, &self.w);
        y.add_row_broadcast(&self.b);
        y
    }

    pub fn backward(&self, x: &Mat, dy: &Mat, grad: &mut Linear) -> Mat {
        matmul_tn_acc(x, dy, &mut grad.w);
        grad.b.add_assign(&dy.sum_rows());
        matmul_nt(dy, &self.w)
    }
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: Mat,
    pub bias: Mat,
}

impl_params!(LayerNorm { gain, bias });

#[derive(Debug, Clone)]
pub struct LayerNormCache {
    xhat: Mat,
    inv_std: Vec<f64>,
}

impl LayerNorm {
    pub fn new(d: usize) -> Self {
        Self { gain: Mat::from_vec(1, d, vec![1.0; d]), bias: Mat::zeros(1, d) }
    }

    pub fn forward(&self, x: &Mat) -> (Mat, LayerNormCache) {
        let d = x.cols as f64;
        let mut xhat = x.clone();
        let mut inv_std = Vec::with_capacity(x.rows);
        for r in 0..x.rows {
            let row = xhat.row_mut(r);
            let mean = row.iter().sum::<f64>() / d;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            row.iter_mut().for_each(|v| *v = (*v - mean) * s);
            inv_std.push(s);
        }
        let mut y = xhat.clone();
        for r in 0..y.rows {
            for ((v, g), b) in y.row_mut(r).iter_mut().zip(&self.gain.data).zip(&self.bias.data) {
                *v = *v * g + b;
            }
        }
        (y, LayerNormCache { xhat, inv_std })
    }

    pub fn backward(&self, cache: &LayerNormCache, dy: &Mat, grad: &mut LayerNorm) -> Mat {
        let d = dy.cols as f64;
        let mut dx = Mat::zeros(dy.rows, dy.cols);
        for r in 0..dy.rows {
            let (xh, g) = (cache.xhat.row(r), dy.row(r));
            let dxhat: Vec<f64> = g.iter().zip(&self.gain.data).map(|(a, b)| a * b).collect();
            let mean_d = dxhat.iter().sum::<f64>() / d;
            let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d;
            for (c, out) in dx.row_mut(r).iter_mut().enumerate() {
                *out = cache.inv_std[r] * (dxhat[c] - mean_d - xh[c] * mean_dx);
                grad.gain.data[c] += g[c] * xh[c];
                grad.bias.data[c] += g[c];
            }
        }
        dx
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)

/// Tanh-approximated Gaussian error linear unit.
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

pub fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let t = u.tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

/// Row-wise softmax in place.
pub fn softmax_rows(m: &mut Mat) {
    for r in 0..m.rows {
        let row = m.row_mut(r);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
}

/// Multi-head scaled dot-product attention without any additive bias.
/// `q` is `M × dq`, `k` is `K × dq`, `v` is `K × dv`; both widths split
/// evenly into `heads`. Returns the concatenated head outputs and the
/// per-head attention weights.
pub fn attention(q: &Mat, k: &Mat, v: &Mat, heads: usize) -> (Mat, Vec<Mat>) {
    assert_eq!(q.cols, k.cols, "query/key widths differ");
    assert_eq!(k.rows, v.rows, "key/value counts differ");
    assert!(q.cols % heads == 0 && v.cols % heads == 0, "widths must split into heads");
    let (hq, hv) = (q.cols / heads, v.cols / heads);
    let scale = 1.0 / (hq as f64).sqrt();
    let mut out = Mat::zeros(q.rows, v.cols);
    let mut probs = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = q.cols_range(h * hq, hq);
        let kh = k.cols_range(h * hq, hq);
        let vh = v.cols_range(h * hv, hv);
        let mut s = matmul_nt(&qh, &kh);
        s.scale(scale);
        softmax_rows(&mut s);
        out.set_cols(h * hv, &matmul(&s, &vh));
        probs.push(s);
    }
    (out, probs)
}

/// Gradients of [`attention`] with respect to `q`, `k` and `v`.
pub fn attention_backward(q: &Mat, k: &Mat, v: &Mat, probs: &[Mat], dout: &Mat) -> (Mat, Mat, Mat) {
    let heads = probs.len();
    let (hq, hv) = (q.cols / heads, v.cols / heads);
    let scale = 1.0 / (hq as f64).sqrt();
    let (mut dq, mut dk, mut dv) = (q.zeros_like(), k.zeros_like(), v.zeros_like());
    for (h, p) in probs.iter().enumerate() {
        let qh = q.cols_range(h * hq, hq);
        let kh = k.cols_range(h * hq, hq);
        let vh = v.cols_range(h * hv, hv);
        let doh = dout.cols_range(h * hv, hv);
        dv.set_cols(h * hv, &matmul_tn(p, &doh));
        let dp = matmul_nt(&doh, &vh);
        let mut ds = dp.clone();
        for r in 0..ds.rows {
            let dot: f64 = dp.row(r).iter().zip(p.row(r)).map(|(a, b)| a * b).sum();
            for (x, pr) in ds.row_mut(r).iter_mut().zip(p.row(r)) {
                *x = pr * (*x - dot) * scale;
            }
        }
        dq.set_cols(h * hq, &matmul(&ds, &kh));
        dk.set_cols(h * hq, &matmul_tn(&ds, &qh));
    }
    (dq, dk, dv)
}

/// Cross-attention whose queries and keys are lifted from positional
/// encodings while values enter unprojected; an output projection follows.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttention {
    pub q: Linear,
    pub k: Linear,
    pub out: Linear,
}

impl_params!(CrossAttention { q, k, out });

#[derive(Debug, Clone)]
pub struct CrossAttentionCache {
    queries: Mat,
    keys: Mat,
    values: Mat,
    q: Mat,
    k: Mat,
    mixed: Mat,
    pub probs: Vec<Mat>,
}

impl CrossAttention {
    pub fn new(pe: usize, d: usize, rng: &mut Rng) -> Self {
        Self { q: Linear::new(pe, d, rng), k: Linear::new(pe, d, rng), out: Linear::new(d, d, rng) }
    }

    /// Query and key lifts start as the same scaled selector of the first
    /// `lanes` encoding lanes, copied into every head, so the scores begin as
    /// a positional kernel peaking at `peak_logit` on exact matches. The
    /// output projection keeps its random init.
    pub fn positional(pe: usize, d: usize, heads: usize, lanes: usize, peak_logit: f64, rng: &mut Rng) -> Self {
        let d_head = d / heads;
        assert!(lanes <= pe && lanes <= d_head && lanes % 2 == 0, "selected lanes must fit one head");
        // Each selected sin/cos pair contributes at most 1 to the raw dot.
        let gain = (peak_logit * (d_head as f64).sqrt() / (lanes / 2) as f64).sqrt();
        let mut lift = Linear::zeros(pe, d);
        for h in 0..heads {
            for i in 0..lanes {
                *lift.w.at_mut(i, h * d_head + i) = gain;
            }
        }
        Self { q: lift.clone(), k: lift, out: Linear::new(d, d, rng) }
    }

    pub fn forward(&self, queries: &Mat, keys: &Mat, values: &Mat, heads: usize) -> (Mat, CrossAttentionCache) {
        let q = self.q.forward(queries);
        let k = self.k.forward(keys);
        let (mixed, probs) = attention(&q, &k, values, heads);
        let y = self.out.forward(&mixed);
        (y, CrossAttentionCache { queries: queries.clone(), keys: keys.clone(), values: values.clone(), q, k, mixed, probs })
    }

    /// Returns gradients for `(queries, keys, values)`.
    pub fn backward(&self, cache: &CrossAttentionCache, dy: &Mat, grad: &mut CrossAttention) -> (Mat, Mat, Mat) {
        let dmixed = self.out.backward(&cache.mixed, dy, &mut grad.out);
        let (dq, dk, dv) = attention_backward(&cache.q, &cache.k, &cache.values, &cache.probs, &dmixed);
        let dqueries = self.q.backward(&cache.queries, &dq, &mut grad.q);
        let dkeys = self.k.backward(&cache.keys, &dk, &mut grad.k);
        (dqueries, dkeys, dv)
    }
}

/// Pre-norm transformer block. Rows are split into consecutive groups of
/// `seq` rows and self-attention runs within each group only.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformerBlock {
    pub ln1: LayerNorm,
    pub qkv: Linear,
    pub proj: Linear,
    pub ln2: LayerNorm,
    pub ff1: Linear,
    pub ff2: Linear,
}

impl_params!(TransformerBlock { ln1, qkv, proj, ln2, ff1, ff2 });

pub const FFN_MULT: usize = 4;

#[derive(Debug, Clone)]
pub struct BlockCache {
    seq: usize,
    ln1: LayerNormCache,
    h1: Mat,
    qkv: Mat,
    probs: Vec<Vec<Mat>>,
    mixed: Mat,
    ln2: LayerNormCache,
    h2: Mat,
    pre: Mat,
    act: Mat,
}

impl TransformerBlock {
    pub fn new(d: usize, rng: &mut Rng) -> Self {
        Self {
            ln1: LayerNorm::new(d),
            qkv: Linear::new(d, 3 * d, rng),
            proj: Linear::new(d, d, rng),
            ln2: LayerNorm::new(d),
            ff1: Linear::new(d, FFN_MULT * d, rng),
            ff2: Linear::new(FFN_MULT * d, d, rng),
        }
    }

    pub fn forward(&self, x: &Mat, seq: usize, heads: usize) -> (Mat, BlockCache) {
        assert!(seq > 0 && x.rows % seq == 0, "rows must split into sequences");
        let d = x.cols;
        let (h1, ln1) = self.ln1.forward(x);
        let qkv = self.qkv.forward(&h1);
        let mut mixed = Mat::zeros(x.rows, d);
        let mut probs = Vec::with_capacity(x.rows / seq);
        for g in 0..x.rows / seq {
            let block = qkv.rows_range(g * seq, seq);
            let (o, p) = attention(&block.cols_range(0, d), &block.cols_range(d, d), &block.cols_range(2 * d, d), heads);
            mixed.data[g * seq * d..(g + 1) * seq * d].copy_from_slice(&o.data);
            probs.push(p);
        }
        let mut x2 = self.proj.forward(&mixed);
        x2.add_assign(x);
        let (h2, ln2) = self.ln2.forward(&x2);
        let pre = self.ff1.forward(&h2);
        let act = Mat::from_vec(pre.rows, pre.cols, pre.data.iter().map(|&v| gelu(v)).collect());
        let mut y = self.ff2.forward(&act);
        y.add_assign(&x2);
        (y, BlockCache { seq, ln1, h1, qkv, probs, mixed, ln2, h2, pre, act })
    }

    pub fn backward(&self, cache: &BlockCache, dy: &Mat, grad: &mut TransformerBlock) -> Mat {
        let d = dy.cols;
        let seq = cache.seq;
        let dact = self.ff2.backward(&cache.act, dy, &mut grad.ff2);
        let dpre = Mat::from_vec(dact.rows, dact.cols, dact.data.iter().zip(&cache.pre.data).map(|(g, &x)| g * gelu_grad(x)).collect());
        let dh2 = self.ff1.backward(&cache.h2, &dpre, &mut grad.ff1);
        let mut dx2 = self.ln2.backward(&cache.ln2, &dh2, &mut grad.ln2);
        dx2.add_assign(dy);
        let dmixed = self.proj.backward(&cache.mixed, &dx2, &mut grad.proj);
        let mut dqkv = Mat::zeros(cache.qkv.rows, 3 * d);
        for (g, probs) in cache.probs.iter().enumerate() {
            let block = cache.qkv.rows_range(g * seq, seq);
            let (dq, dk, dv) = attention_backward(&block.cols_range(0, d), &block.cols_range(d, d), &block.cols_range(2 * d, d), probs, &dmixed.rows_range(g * seq, seq));
            for r in 0..seq {
                let row = dqkv.row_mut(g * seq + r);
                row[..d].copy_from_slice(dq.row(r));
                row[d..2 * d].copy_from_slice(dk.row(r));
                row[2 * d..].copy_from_slice(dv.row(r));
            }
        }
        let dh1 = self.qkv.backward(&cache.h1, &dqkv, &mut grad.qkv);
        let mut dx = self.ln1.backward(&cache.ln1, &dh1, &mut grad.ln1);
        dx.add_assign(&dx2);
        dx
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use trackedit_core::rng::derive;

    #[test]
    fn gelu_derivative_matches_difference() {
        for &x in &[-3.0, -0.7, 0.0, 0.4, 2.5] {
            let fd = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6;
            assert!((fd - gelu_grad(x)).abs() < 1e-8);
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let mut rng = derive(1, "softmax");
        let mut m = Mat::uniform(4, 9, 30.0, &mut rng);
        softmax_rows(&mut m);
        for r in 0..4 {
            assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn params_are_named_in_order() {
        let mut rng = derive(0, "p");
        let block = TransformerBlock::new(4, &mut rng);
        let names: Vec<String> = block.named().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names[..3], ["ln1.gain".to_string(), "ln1.bias".into(), "qkv.w".into()]);
        assert_eq!(block.num_params(), 2 * 4 + 4 * 12 + 12 + 4 * 4 + 4 + 2 * 4 + 4 * 16 + 16 + 16 * 4 + 4);
    }
}
