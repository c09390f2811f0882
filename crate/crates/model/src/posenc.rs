//! Sinusoidal encodings of `(x, y, z, existence)` quadruples.

use serde::{Deserialize, Serialize};

use crate::tensor::Mat;

pub const POSENC_INPUTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosEncConfig {
    /// Output width; each input gets `width / 4` lanes, half sin and half cos.
    pub width: usize,
    pub base: f64,
    /// Inputs are multiplied by this before the frequency ladder, so
    /// normalized coordinates span many radians.
    pub input_scale: f64,
}

impl PosEncConfig {
    pub fn new(width: usize) -> Self {
        assert!(width > 0 && width % (2 * POSENC_INPUTS) == 0, "posenc width must be a positive multiple of 8");
        Self { width, base: 10000.0, input_scale: 100.0 }
    }

    fn lanes(&self) -> usize {
        self.width / POSENC_INPUTS
    }

    /// Number of leading lanes that encode `(x, y)`.
    pub fn image_lanes(&self) -> usize {
        2 * self.lanes()
    }

    /// Angular frequency of the `i`-th sin/cos pair of one input.
    pub fn frequency(&self, i: usize) -> f64 {
        let pairs = self.lanes() / 2;
        self.input_scale * self.base.powf(-(i as f64) / pairs as f64)
    }

    /// Encodes into `out`, which must hold `width` values. Per input, the
    /// sin lanes come first, then the cos lanes.
    pub fn encode_into(&self, inputs: [f64; 4], out: &mut [f64]) {
        let lanes = self.lanes();
        let pairs = lanes / 2;
        for (j, &v) in inputs.iter().enumerate() {
            let block = &mut out[j * lanes..(j + 1) * lanes];
            for i in 0..pairs {
                let (s, c) = (v * self.frequency(i)).sin_cos();
                block[i] = s;
                block[pairs + i] = c;
            }
        }
    }

    /// Gradient of `dout · encode(inputs)` with respect to the inputs.
    pub fn encode_grad(&self, inputs: [f64; 4], dout: &[f64]) -> [f64; 4] {
        let lanes = self.lanes();
        let pairs = lanes / 2;
        let mut g = [0.0; 4];
        for (j, &v) in inputs.iter().enumerate() {
            let block = &dout[j * lanes..(j + 1) * lanes];
            for i in 0..pairs {
                let a = self.frequency(i);
                let (s, c) = (v * a).sin_cos();
                g[j] += a * (block[i] * c - block[pairs + i] * s);
            }
        }
        g
    }

    pub fn encode(&self, inputs: [f64; 4]) -> Vec<f64> {
        let mut out = vec![0.0; self.width];
        self.encode_into(inputs, &mut out);
        out
    }

    /// One encoded row per input quadruple.
    pub fn encode_rows(&self, rows: &[[f64; 4]]) -> Mat {
        let mut m = Mat::zeros(rows.len(), self.width);
        for (r, inputs) in rows.iter().enumerate() {
            self.encode_into(*inputs, m.row_mut(r));
        }
        m
    }

    /// Patch-center encodings of an `h × w` grid with `z = 0` and existence
    /// 1, row-major over `(i, j)`.
    pub fn grid_key(&self, h: usize, w: usize) -> Mat {
        let rows: Vec<[f64; 4]> = (0..h)
            .flat_map(|i| (0..w).map(move |j| [(j as f64 + 0.5) / w as f64, (i as f64 + 0.5) / h as f64, 0.0, 1.0]))
            .collect();
        self.encode_rows(&rows)
    }

    /// Encodings of disparity alone, `(0, 0, z, 1)`.
    pub fn depth_rows(&self, z: &[f64]) -> Mat {
        let rows: Vec<[f64; 4]> = z.iter().map(|&z| [0.0, 0.0, z, 1.0]).collect();
        self.encode_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn zero_input_is_sin_zero_cos_one() {
        let pe = PosEncConfig::new(32);
        let v = pe.encode([0.0; 4]);
        for j in 0..4 {
            assert!(v[j * 8..j * 8 + 4].iter().all(|&s| s == 0.0));
            assert!(v[j * 8 + 4..j * 8 + 8].iter().all(|&c| c == 1.0));
        }
    }

    #[test]
    fn encode_grad_matches_difference() {
        let pe = PosEncConfig::new(16);
        let x = [0.31, 0.72, 0.45, 1.0];
        let dout: Vec<f64> = (0..16).map(|i| (i as f64 * 0.37).sin()).collect();
        let g = pe.encode_grad(x, &dout);
        let dot = |v: [f64; 4]| pe.encode(v).iter().zip(&dout).map(|(a, b)| a * b).sum::<f64>();
        for j in 0..4 {
            let (mut hi, mut lo) = (x, x);
            hi[j] += 1e-6;
            lo[j] -= 1e-6;
            let fd = (dot(hi) - dot(lo)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-6 * (1.0 + g[j].abs()), "input {j}: {fd} vs {}", g[j]);
        }
    }

    #[test]
    fn unit_grid_is_center() {
        let pe = PosEncConfig::new(16);
        assert_eq!(pe.grid_key(1, 1).data, pe.encode([0.5, 0.5, 0.0, 1.0]));
        assert_eq!(pe.grid_key(3, 5), pe.grid_key(3, 5));
    }

    #[test]
    fn fine_grid_has_no_collisions() {
        // x and y occupy disjoint lanes, so the 1001 × 1001 grid is collision
        // free exactly when the 1001 per-axis blocks are pairwise distinct.
        let pe = PosEncConfig::new(32);
        for axis in 0..2 {
            let mut seen = HashSet::new();
            for i in 0..=1000 {
                let mut inputs = [0.0, 0.0, 0.0, 1.0];
                inputs[axis] = i as f64 * 1e-3;
                let v = pe.encode(inputs);
                let key: Vec<i64> = v[axis * 8..axis * 8 + 8].iter().map(|x| (x * 1e9).round() as i64).collect();
                assert!(seen.insert(key), "collision at {i} on axis {axis}");
            }
        }
    }

    #[test]
    fn mirrored_grid_columns_follow_angle_difference() {
        // x' = 1 - x: sin(a(1-x)) = sin a cos ax - cos a sin ax,
        // cos(a(1-x)) = cos a cos ax + sin a sin ax.
        let pe = PosEncConfig::new(32);
        let (h, w) = (3, 6);
        let g = pe.grid_key(h, w);
        for i in 0..h {
            for j in 0..w {
                let a = g.row(i * w + j);
                let b = g.row(i * w + (w - 1 - j));
                for p in 0..4 {
                    let (sa, ca) = pe.frequency(p).sin_cos();
                    assert!((b[p] - (sa * a[4 + p] - ca * a[p])).abs() < 1e-9);
                    assert!((b[4 + p] - (ca * a[4 + p] + sa * a[p])).abs() < 1e-9);
                }
                assert_eq!(&a[8..], &b[8..]);
            }
        }
    }
}
