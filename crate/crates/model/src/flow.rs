//! Pixel patches and the rectified-flow interpolant.

use rand_distr::{Distribution, StandardNormal};

use crate::conditioner::TokenGrid;
use crate::tensor::Mat;
use crate::ModelError;
use trackedit_core::rng::Rng;
use trackedit_core::VideoClip;

/// Patch size `(frames, rows, columns)`.
pub type PatchSize = (usize, usize, usize);

pub fn patch_dim(patch: PatchSize) -> usize {
    patch.0 * patch.1 * patch.2 * 3
}

fn check_divisible(frames: usize, height: usize, width: usize, patch: PatchSize) -> Result<(), ModelError> {
    let (pt, ph, pw) = patch;
    if pt == 0 || ph == 0 || pw == 0 || frames % pt != 0 || height % ph != 0 || width % pw != 0 {
        return Err(ModelError::IndivisibleDims { dims: (frames, height, width), patch });
    }
    Ok(())
}

/// One token per patch; within a token values run over `(frame, row,
/// column, channel)` of the patch.
pub fn patchify(video: &VideoClip, patch: PatchSize) -> Result<TokenGrid, ModelError> {
    check_divisible(video.frames, video.height, video.width, patch)?;
    let (pt, ph, pw) = patch;
    let (f, h, w) = (video.frames / pt, video.height / ph, video.width / pw);
    let mut data = Mat::zeros(f * h * w, patch_dim(patch));
    for k in 0..f {
        for i in 0..h {
            for j in 0..w {
                let row = data.row_mut((k * h + i) * w + j);
                let mut c = 0;
                for dt in 0..pt {
                    for dy in 0..ph {
                        for dx in 0..pw {
                            let px = video.pixel(k * pt + dt, i * ph + dy, j * pw + dx);
                            for v in px {
                                row[c] = v as f64;
                                c += 1;
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(TokenGrid::new(f, h, w, data))
}

/// Inverse of [`patchify`].
pub fn unpatchify(grid: &TokenGrid, patch: PatchSize) -> Result<VideoClip, ModelError> {
    let (pt, ph, pw) = patch;
    if grid.d() != patch_dim(patch) {
        return Err(ModelError::ShapeMismatch(format!("tokens are {} wide, patch needs {}", grid.d(), patch_dim(patch))));
    }
    let mut video = VideoClip::zeros(grid.f * pt, grid.h * ph, grid.w * pw);
    for k in 0..grid.f {
        for i in 0..grid.h {
            for j in 0..grid.w {
                let row = grid.data.row((k * grid.h + i) * grid.w + j);
                let mut c = 0;
                for dt in 0..pt {
                    for dy in 0..ph {
                        for dx in 0..pw {
                            video.set_pixel(k * pt + dt, i * ph + dy, j * pw + dx, [row[c] as f32, row[c + 1] as f32, row[c + 2] as f32]);
                            c += 3;
                        }
                    }
                }
            }
        }
    }
    Ok(video)
}

/// A point on the straight path from data (`t = 0`) to noise (`t = 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub x_t: Mat,
    pub epsilon: Mat,
    /// Regression target `epsilon − x0`.
    pub velocity: Mat,
}

pub fn flow_interpolate(x0: &Mat, eps: &Mat, t: f64) -> FlowState {
    assert!((0.0..=1.0).contains(&t), "flow time must lie in [0, 1]");
    assert_eq!((x0.rows, x0.cols), (eps.rows, eps.cols), "noise shape");
    let x_t = x0.data.iter().zip(&eps.data).map(|(a, e)| (1.0 - t) * a + t * e).collect();
    let velocity = x0.data.iter().zip(&eps.data).map(|(a, e)| e - a).collect();
    FlowState {
        t,
        x_t: Mat::from_vec(x0.rows, x0.cols, x_t),
        epsilon: eps.clone(),
        velocity: Mat::from_vec(x0.rows, x0.cols, velocity),
    }
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| StandardNormal.sample(rng)).collect())
}

/// Pixels in `[0, 1]` to model space `[-1, 1]`.
pub fn to_model_space(m: &Mat) -> Mat {
    Mat::from_vec(m.rows, m.cols, m.data.iter().map(|v| 2.0 * v - 1.0).collect())
}

pub fn to_pixel_space(m: &Mat) -> Mat {
    Mat::from_vec(m.rows, m.cols, m.data.iter().map(|v| ((v + 1.0) * 0.5).clamp(0.0, 1.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng as _;
    use trackedit_core::rng::derive;

    fn random_video(f: usize, h: usize, w: usize) -> VideoClip {
        let mut rng = derive(5, "video");
        VideoClip::from_data(f, h, w, (0..f * h * w * 3).map(|_| rng.random::<f32>()).collect()).unwrap()
    }

    #[test]
    fn unit_patch_is_pixel_rearrangement() {
        let v = random_video(2, 3, 4);
        let g = patchify(&v, (1, 1, 1)).unwrap();
        assert_eq!((g.f, g.h, g.w, g.d()), (2, 3, 4, 3));
        assert_eq!(g.data.data, v.data.iter().map(|&x| x as f64).collect::<Vec<_>>());
    }

    #[test]
    fn round_trip_is_exact() {
        let v = random_video(4, 8, 12);
        let g = patchify(&v, (2, 4, 3)).unwrap();
        assert_eq!(g.data.rows, 2 * 2 * 4);
        assert_eq!(unpatchify(&g, (2, 4, 3)).unwrap(), v);
    }

    #[test]
    fn indivisible_dims_are_rejected() {
        let v = random_video(3, 8, 8);
        assert!(matches!(patchify(&v, (2, 4, 4)), Err(ModelError::IndivisibleDims { .. })));
    }

    #[test]
    fn interpolant_endpoints_and_midpoint() {
        let mut rng = derive(0, "flow");
        let x0 = gaussian(3, 5, &mut rng);
        let eps = gaussian(3, 5, &mut rng);
        assert_eq!(flow_interpolate(&x0, &eps, 0.0).x_t, x0);
        assert_eq!(flow_interpolate(&x0, &eps, 1.0).x_t, eps);
        let mid = flow_interpolate(&x0, &eps, 0.5);
        for i in 0..x0.len() {
            assert!((mid.x_t.data[i] - 0.5 * (x0.data[i] + eps.data[i])).abs() < 1e-15);
            assert_eq!(mid.velocity.data[i], eps.data[i] - x0.data[i]);
        }
    }
}
