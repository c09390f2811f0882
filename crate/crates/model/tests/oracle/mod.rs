//! Straight-line scalar reimplementation of the conditioner, reading only
//! parameter values. Shared with the acceptance suite.
#![allow(dead_code)]

use trackedit_core::ProjectedTracks;
use trackedit_model::conditioner::{ConditionerConfig, ConditionerParams, TokenGrid};
use trackedit_model::layers::{CrossAttention, LayerNorm, Linear, TransformerBlock};
use trackedit_model::posenc::PosEncConfig;

pub type Rows = Vec<Vec<f64>>;

pub fn rows_of(m: &trackedit_model::tensor::Mat) -> Rows {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

pub fn max_diff(a: &Rows, b: &trackedit_model::tensor::Mat) -> f64 {
    assert_eq!(a.len(), b.rows);
    let mut worst = 0.0f64;
    for (r, row) in a.iter().enumerate() {
        assert_eq!(row.len(), b.cols);
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((v - b.at(r, c)).abs());
        }
    }
    worst
}

pub fn linear(x: &Rows, l: &Linear) -> Rows {
    x.iter()
        .map(|row| {
            (0..l.w.cols)
                .map(|o| {
                    let mut acc = l.b.at(0, o);
                    for (i, xi) in row.iter().enumerate() {
                        acc += xi * l.w.at(i, o);
                    }
                    acc
                })
                .collect()
        })
        .collect()
}

pub fn layer_norm(x: &Rows, ln: &LayerNorm) -> Rows {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mut mean = 0.0;
            for v in row {
                mean += v;
            }
            mean /= n;
            let mut var = 0.0;
            for v in row {
                var += (v - mean) * (v - mean);
            }
            var /= n;
            let inv = 1.0 / (var + 1e-5).sqrt();
            row.iter().enumerate().map(|(c, v)| (v - mean) * inv * ln.gain.at(0, c) + ln.bias.at(0, c)).collect()
        })
        .collect()
}

pub fn gelu(x: f64) -> f64 {
    let c = (2.0 / std::f64::consts::PI).sqrt();
    0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())
}

fn add(a: &Rows, b: &Rows) -> Rows {
    a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
}

/// Multi-head softmax attention over already projected `q`, `k` and raw `v`.
pub fn raw_attention(q: &Rows, k: &Rows, v: &Rows, heads: usize) -> Rows {
    let dq = q[0].len() / heads;
    let dv = v[0].len() / heads;
    let mut out = vec![vec![0.0; v[0].len()]; q.len()];
    for h in 0..heads {
        for (m, qrow) in q.iter().enumerate() {
            let mut scores = Vec::with_capacity(k.len());
            for krow in k {
                let mut s = 0.0;
                for c in 0..dq {
                    s += qrow[h * dq + c] * krow[h * dq + c];
                }
                scores.push(s / (dq as f64).sqrt());
            }
            let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let weights: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
            let total: f64 = weights.iter().sum();
            for c in 0..dv {
                let mut acc = 0.0;
                for (j, vrow) in v.iter().enumerate() {
                    acc += weights[j] / total * vrow[h * dv + c];
                }
                out[m][h * dv + c] = acc;
            }
        }
    }
    out
}

pub fn attend(queries: &Rows, keys: &Rows, values: &Rows, ca: &CrossAttention, heads: usize) -> Rows {
    linear(&raw_attention(&linear(queries, &ca.q), &linear(keys, &ca.k), values, heads), &ca.out)
}

pub fn block(x: &Rows, b: &TransformerBlock, heads: usize) -> Rows {
    let d = x[0].len();
    let qkv = linear(&layer_norm(x, &b.ln1), &b.qkv);
    let part = |s: usize| qkv.iter().map(|r| r[s * d..(s + 1) * d].to_vec()).collect::<Rows>();
    let x2 = add(x, &linear(&raw_attention(&part(0), &part(1), &part(2), heads), &b.proj));
    let hidden: Rows = linear(&layer_norm(&x2, &b.ln2), &b.ff1).into_iter().map(|r| r.into_iter().map(gelu).collect()).collect();
    add(&x2, &linear(&hidden, &b.ff2))
}

pub fn posenc(cfg: &PosEncConfig, inputs: [f64; 4]) -> Vec<f64> {
    let per = cfg.width / 4;
    let pairs = per / 2;
    let mut out = vec![0.0; cfg.width];
    for (j, v) in inputs.iter().enumerate() {
        for i in 0..pairs {
            let angle = v * cfg.input_scale / cfg.base.powf(i as f64 / pairs as f64);
            out[j * per + i] = angle.sin();
            out[j * per + pairs + i] = angle.cos();
        }
    }
    out
}

pub fn grid_key(cfg: &PosEncConfig, h: usize, w: usize) -> Rows {
    let mut out = Vec::new();
    for i in 0..h {
        for j in 0..w {
            out.push(posenc(cfg, [(j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64, 0.0, 1.0]));
        }
    }
    out
}

fn track_inputs(pt: &ProjectedTracks, k: usize, n: usize) -> [f64; 4] {
    let c = pt.coord(k, n);
    [c[0], c[1], c[2], if pt.exists(k, n) { 1.0 } else { 0.0 }]
}

fn frame_rows(grid: &TokenGrid, k: usize) -> Rows {
    let cells = grid.h * grid.w;
    (0..cells).map(|c| grid.data.row(k * cells + c).to_vec()).collect()
}

/// Sampled track tokens, indexed `[frame][track]`.
pub fn sample_context(p: &ConditionerParams, cfg: &ConditionerConfig, pt: &ProjectedTracks, vid: &TokenGrid) -> Vec<Rows> {
    let grid = grid_key(&cfg.pe, vid.h, vid.w);
    let n = pt.num_tracks();
    let sampled: Vec<Rows> = (0..vid.f)
        .map(|k| {
            let queries: Rows = (0..n).map(|t| posenc(&cfg.pe, track_inputs(pt, k, t))).collect();
            attend(&queries, &grid, &frame_rows(vid, k), &p.sample, cfg.heads)
        })
        .collect();
    let mut out = sampled.clone();
    for t in 0..n {
        let mut seq: Rows = (0..vid.f).map(|k| sampled[k][t].clone()).collect();
        for b in &p.temporal {
            seq = block(&seq, b, cfg.heads);
        }
        for k in 0..vid.f {
            out[k][t] = seq[k].clone();
        }
    }
    out
}

pub fn inject_depth(p: &ConditionerParams, cfg: &ConditionerConfig, tt: &[Rows], pt: &ProjectedTracks) -> Vec<Rows> {
    tt.iter()
        .enumerate()
        .map(|(k, rows)| {
            let enc: Rows = (0..rows.len()).map(|t| posenc(&cfg.pe, [0.0, 0.0, pt.coord(k, t)[2], 1.0])).collect();
            add(rows, &linear(&enc, &p.depth))
        })
        .collect()
}

/// Splatted grid, frame-major rows.
pub fn splat(p: &ConditionerParams, cfg: &ConditionerConfig, tt: &[Rows], pt: &ProjectedTracks, h: usize, w: usize) -> Rows {
    let grid = grid_key(&cfg.pe, h, w);
    let mut out = Vec::new();
    for (k, rows) in tt.iter().enumerate() {
        let keys: Rows = (0..rows.len()).map(|t| posenc(&cfg.pe, track_inputs(pt, k, t))).collect();
        out.extend(attend(&grid, &keys, rows, &p.splat, cfg.heads));
    }
    out
}

pub fn conditioner_forward(p: &ConditionerParams, cfg: &ConditionerConfig, vid: &TokenGrid, src: &ProjectedTracks, tgt: &ProjectedTracks) -> (Rows, Rows) {
    let tt = sample_context(p, cfg, src, vid);
    let a = splat(p, cfg, &inject_depth(p, cfg, &tt, src), src, vid.h, vid.w);
    let b = splat(p, cfg, &inject_depth(p, cfg, &tt, tgt), tgt, vid.h, vid.w);
    (a, b)
}
