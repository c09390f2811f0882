use nalgebra::{Matrix3, SMatrix, Vector3};

use super::GeometryError;

/// Planar projective transform, normalized so the bottom-right entry is 1
/// whenever it is nonzero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography {
    pub matrix: Matrix3<f64>,
}

impl Homography {
    pub fn identity() -> Self {
        Self {
            matrix: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, GeometryError> {
        let s = m[(2, 2)];
        let m = if s != 0.0 { m / s } else { m };
        if m.try_inverse().is_none() || !m.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::DegenerateConfiguration("homography is singular".into()));
        }
        Ok(Self { matrix: m })
    }

    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let v = self.matrix * Vector3::new(p[0], p[1], 1.0);
        [v.x / v.z, v.y / v.z]
    }

    pub fn inverse(&self) -> Option<Self> {
        self.matrix.try_inverse().and_then(|m| Self::from_matrix(m).ok())
    }
}

/// Similarity that moves the centroid to the origin and the mean distance to √2.
fn hartley_normalization(pts: &[[f64; 2]; 4]) -> Matrix3<f64> {
    let cx = pts.iter().map(|p| p[0]).sum::<f64>() / 4.0;
    let cy = pts.iter().map(|p| p[1]).sum::<f64>() / 4.0;
    let mean_dist = pts.iter().map(|p| ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt()).sum::<f64>() / 4.0;
    let s = if mean_dist > 1e-15 { std::f64::consts::SQRT_2 / mean_dist } else { 1.0 };
    Matrix3::new(s, 0.0, -s * cx, 0.0, s, -s * cy, 0.0, 0.0, 1.0)
}

fn collinear(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> bool {
    let cross = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]);
    let scale = ((b[0] - a[0]).hypot(b[1] - a[1])) * ((c[0] - a[0]).hypot(c[1] - a[1]));
    scale == 0.0 || cross.abs() <= 1e-12 * scale
}

fn has_collinear_triple(pts: &[[f64; 2]; 4]) -> bool {
    (0..4).any(|skip| {
        let t: Vec<[f64; 2]> = (0..4).filter(|&i| i != skip).map(|i| pts[i]).collect();
        collinear(t[0], t[1], t[2])
    })
}

/// Direct linear transform with Hartley normalization on exactly four
/// correspondences `(src, dst)`; the result maps each `src` onto its `dst`.
pub fn fit_homography(corr: &[([f64; 2], [f64; 2]); 4]) -> Result<Homography, GeometryError> {
    let src: [[f64; 2]; 4] = std::array::from_fn(|i| corr[i].0);
    let dst: [[f64; 2]; 4] = std::array::from_fn(|i| corr[i].1);
    if corr.iter().flat_map(|(a, b)| a.iter().chain(b.iter())).any(|v| !v.is_finite()) {
        return Err(GeometryError::DegenerateConfiguration("non-finite correspondence".into()));
    }
    if has_collinear_triple(&src) || has_collinear_triple(&dst) {
        return Err(GeometryError::DegenerateConfiguration("three collinear points".into()));
    }
    let ts = hartley_normalization(&src);
    let td = hartley_normalization(&dst);

    // 8 equations padded with a zero row so the SVD exposes the full null space.
    let mut a = SMatrix::<f64, 9, 9>::zeros();
    for i in 0..4 {
        let s = ts * Vector3::new(src[i][0], src[i][1], 1.0);
        let d = td * Vector3::new(dst[i][0], dst[i][1], 1.0);
        let (x, y, u, v) = (s.x, s.y, d.x, d.y);
        let r0 = [-x, -y, -1.0, 0.0, 0.0, 0.0, u * x, u * y, u];
        let r1 = [0.0, 0.0, 0.0, -x, -y, -1.0, v * x, v * y, v];
        for c in 0..9 {
            a[(2 * i, c)] = r0[c];
            a[(2 * i + 1, c)] = r1[c];
        }
    }
    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..9).collect();
    order.sort_by(|&i, &j| sv[i].total_cmp(&sv[j]));
    let (smallest, second) = (order[0], order[1]);
    if sv[second] <= 1e-10 * sv[order[8]] {
        return Err(GeometryError::DegenerateConfiguration("DLT system is rank-deficient".into()));
    }
    let h = v_t.row(smallest);
    let hn = Matrix3::new(h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], h[8]);
    let td_inv = td
        .try_inverse()
        .ok_or_else(|| GeometryError::DegenerateConfiguration("normalization not invertible".into()))?;
    Homography::from_matrix(td_inv * hn * ts)
}
