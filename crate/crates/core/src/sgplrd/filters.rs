//! Candidate refinement: the log-variance filter and the color-deviation
//! filter. Together they turn gray candidates into salient gray pixels.

use super::{Planes, Raster};

/// Population variance of the three log-channel values.
#[inline]
pub fn log_variance(l: [f64; 3]) -> f64 {
    let mean = (l[0] + l[1] + l[2]) / 3.0;
    ((l[0] - mean).powi(2) + (l[1] - mean).powi(2) + (l[2] - mean).powi(2)) / 3.0
}

#[inline]
fn at(planes: &Planes, i: usize) -> [f64; 3] {
    [planes[0].data[i], planes[1].data[i], planes[2].data[i]]
}

/// Keeps candidates whose log-channel variance exceeds `var_th`.
pub fn variance_filter(log_img: &Planes, candidates: &Raster<bool>, var_th: f64) -> Raster<bool> {
    candidates.map_indexed(|i, keep| keep && log_variance(at(log_img, i)) > var_th)
}

/// Image-wide mean log intensity per channel and the derived threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorDeviation {
    pub means: [f64; 3],
    pub threshold: f64,
}

impl ColorDeviation {
    /// Threshold is `color_th * |min(means)|`; mean log intensities are
    /// negative on `[0, 1]` data so the magnitude is used.
    pub fn new(log_img: &Planes, color_th: f64) -> Self {
        let means = [
            mean(&log_img[0].data),
            mean(&log_img[1].data),
            mean(&log_img[2].data),
        ];
        let min = means[0].min(means[1]).min(means[2]);
        Self {
            means,
            threshold: color_th * min.abs(),
        }
    }

    /// Largest absolute deviation of a pixel's log values from the means.
    #[inline]
    pub fn deviation(&self, l: [f64; 3]) -> f64 {
        (0..3)
            .map(|c| (l[c] - self.means[c]).abs())
            .fold(0.0, f64::max)
    }

    #[inline]
    pub fn keeps(&self, l: [f64; 3]) -> bool {
        self.deviation(l) <= self.threshold
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Keeps candidates within the color-deviation threshold.
pub fn color_deviation_filter(
    log_img: &Planes,
    candidates: &Raster<bool>,
    color_th: f64,
) -> Raster<bool> {
    let dev = ColorDeviation::new(log_img, color_th);
    candidates.map_indexed(|i, keep| keep && dev.keeps(at(log_img, i)))
}
