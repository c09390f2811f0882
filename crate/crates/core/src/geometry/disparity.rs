/// Disparity range shared by both branches of a clip pair.
///
/// Bounds are the 1st/99th nearest-rank percentiles of the disparity pool, so
/// small pools use their exact min and max while a few outlier depths in a
/// large pool are clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DisparityRange {
    pub min: f64,
    pub max: f64,
}

impl DisparityRange {
    pub const LOWER_PERCENTILE: f64 = 0.01;
    pub const UPPER_PERCENTILE: f64 = 0.99;

    /// Builds the range from positive depths; non-positive or non-finite
    /// values are skipped. An empty pool yields a degenerate range.
    pub fn from_depths<I: IntoIterator<Item = f64>>(depths: I) -> Self {
        let mut disp: Vec<f64> = depths
            .into_iter()
            .filter(|d| *d > 0.0 && d.is_finite())
            .map(|d| 1.0 / d)
            .collect();
        if disp.is_empty() {
            return Self { min: 1.0, max: 1.0 };
        }
        disp.sort_by(f64::total_cmp);
        Self {
            min: nearest_rank(&disp, Self::LOWER_PERCENTILE),
            max: nearest_rank(&disp, Self::UPPER_PERCENTILE),
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !(self.max - self.min > 1e-12 * self.max.abs())
    }

    /// Normalized disparity in `[0, 1]`; nearer points get larger values.
    pub fn normalize(&self, depth: f64) -> f64 {
        if self.is_degenerate() {
            return 0.5;
        }
        ((1.0 / depth - self.min) / (self.max - self.min)).clamp(0.0, 1.0)
    }
}

fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let rank = ((p * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Normalizes a pool of depths against its own disparity range.
pub fn normalize_disparity(depths: &[f64]) -> Vec<f64> {
    let range = DisparityRange::from_depths(depths.iter().copied());
    depths.iter().map(|&d| range.normalize(d)).collect()
}
