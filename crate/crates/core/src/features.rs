//! Agent observation: log-chrominance histogram of the image plus a short
//! encoding of recent actions.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::image::LinearImage;

pub const HISTORY_LEN: usize = 5;
pub const HISTORY_DIM: usize = 2 * HISTORY_LEN + 1;
/// Largest per-step change of `N` (percent) and `p`.
pub const MAX_DELTA_N: f64 = 0.6;
pub const MAX_DELTA_P: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HistogramConfig {
    /// Bins per axis.
    pub bins: usize,
    /// Grid covers `[-span, span]` on both axes.
    pub span: f64,
    /// Pixels count only when every channel exceeds `log_eps` times the
    /// image peak.
    pub log_eps: f64,
    /// Weight planes by channel intensity; unit counts otherwise.
    pub intensity_weighted: bool,
}

impl Default for HistogramConfig {
    fn default() -> Self {
        Self {
            bins: 60,
            span: 3.2,
            log_eps: 1e-4,
            intensity_weighted: true,
        }
    }
}

impl HistogramConfig {
    pub fn dim(&self) -> usize {
        3 * self.bins * self.bins
    }
}

/// Flattened `3 x m x m` histogram, plane-major; each plane is the square
/// root of an l1-normalized histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct HistogramFeature {
    pub bins: usize,
    pub values: Vec<f64>,
}

impl HistogramFeature {
    /// Indices of non-zero entries, ascending.
    pub fn nonzero(&self) -> Vec<(u32, f64)> {
        self.values
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i as u32, *v))
            .collect()
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let m2 = self.bins * self.bins;
        &self.values[c * m2..(c + 1) * m2]
    }
}

#[inline]
pub fn bin_index(x: f64, bins: usize, span: f64) -> usize {
    let t = ((x + span) / (2.0 * span) * bins as f64).floor();
    t.clamp(0.0, (bins - 1) as f64) as usize
}

pub fn rgb_uv_histogram(img: &LinearImage, cfg: &HistogramConfig) -> HistogramFeature {
    assert!(cfg.bins >= 2 && cfg.span > 0.0, "invalid histogram config");
    let m = cfg.bins;
    let m2 = m * m;
    let mut values = vec![0.0; 3 * m2];
    let floor = cfg.log_eps * img.peak();
    for px in img.pixels() {
        if !(px[0] > floor && px[1] > floor && px[2] > floor) {
            continue;
        }
        let u = (px[1] / px[0]).ln();
        let v = (px[1] / px[2]).ln();
        let k = bin_index(u, m, cfg.span) * m + bin_index(v, m, cfg.span);
        for c in 0..3 {
            values[c * m2 + k] += if cfg.intensity_weighted { px[c] } else { 1.0 };
        }
    }
    for plane in values.chunks_mut(m2) {
        let total: f64 = plane.iter().sum();
        if total > 0.0 {
            for v in plane.iter_mut() {
                *v = (*v / total).sqrt();
            }
        }
    }
    HistogramFeature { bins: m, values }
}

/// History vector: the last five `dN / 0.6`, then the last five `dp / 4`,
/// most recent first and zero-padded, then `min(t / t_max, 1)`.
pub fn encode_history(actions: &[[f64; 2]], t: usize, t_max: usize) -> [f64; HISTORY_DIM] {
    assert!(t_max >= 1, "t_max must be positive");
    let mut h = [0.0; HISTORY_DIM];
    for (k, a) in actions.iter().rev().take(HISTORY_LEN).enumerate() {
        h[k] = (a[0] / MAX_DELTA_N).clamp(-1.0, 1.0);
        h[HISTORY_LEN + k] = (a[1] / MAX_DELTA_P).clamp(-1.0, 1.0);
    }
    h[HISTORY_DIM - 1] = (t as f64 / t_max as f64).min(1.0);
    h
}

/// Observation seen by the agent. The histogram depends only on the image
/// and is shared between all states of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub hist: Arc<HistogramFeature>,
    pub history: [f64; HISTORY_DIM],
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> HistogramConfig {
        HistogramConfig::default()
    }

    #[test]
    fn gray_point_mass_at_center() {
        let img = LinearImage::from_fn(1, 1, |_, _| [0.3, 0.3, 0.3]).unwrap();
        let h = rgb_uv_histogram(&img, &cfg());
        let center = 30 * 60 + 30;
        for c in 0..3 {
            assert_eq!(h.plane(c)[center], 1.0);
            assert_eq!(h.plane(c).iter().filter(|v| **v != 0.0).count(), 1);
        }
    }

    #[test]
    fn two_pixel_binning_brute_force() {
        let img = LinearImage::from_fn(2, 1, |x, _| if x == 0 { [0.1, 0.4, 0.2] } else { [0.5, 0.05, 0.05] })
            .unwrap();
        let h = rgb_uv_histogram(&img, &cfg());
        // independent binning: width 6.4/60 per bin
        let bin = |x: f64| ((((x + 3.2) / (6.4 / 60.0)).floor()) as i64).clamp(0, 59) as usize;
        let p0 = (bin((4.0f64).ln()), bin((2.0f64).ln()));
        let p1 = (bin((0.1f64).ln()), bin(0.0));
        assert_eq!(p0, (42, 36));
        assert_eq!(p1, (8, 30));
        // R plane weights 0.1 and 0.5
        let r = h.plane(0);
        assert!((r[p0.0 * 60 + p0.1] - (0.1f64 / 0.6).sqrt()).abs() < 1e-15);
        assert!((r[p1.0 * 60 + p1.1] - (0.5f64 / 0.6).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn extreme_chroma_clamps_to_edge() {
        let img = LinearImage::from_fn(1, 1, |_, _| [1e-3, 0.9, 0.5]).unwrap();
        let h = rgb_uv_histogram(&img, &cfg());
        assert_eq!(h.plane(1)[59 * 60 + bin_index((0.9f64 / 0.5).ln(), 60, 3.2)], 1.0);
    }

    #[test]
    fn black_image_gives_zero_feature() {
        let img = LinearImage::from_fn(3, 3, |_, _| [0.0; 3]).unwrap();
        assert!(rgb_uv_histogram(&img, &cfg()).values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn history_examples() {
        let h = encode_history(&[], 0, 15);
        assert!(h.iter().all(|v| *v == 0.0));
        let h = encode_history(&[[0.6, -4.0]], 1, 15);
        assert_eq!(h[0], 1.0);
        assert_eq!(h[5], -1.0);
        assert_eq!(h[10], 1.0 / 15.0);
        assert!(h[1..5].iter().chain(&h[6..10]).all(|v| *v == 0.0));
        assert_eq!(encode_history(&[], 20, 15)[10], 1.0);
    }

    #[test]
    fn history_most_recent_first() {
        let acts: Vec<[f64; 2]> = (1..=7).map(|k| [0.06 * k as f64, 0.4 * k as f64]).collect();
        let h = encode_history(&acts, 7, 15);
        assert!((h[0] - 0.7).abs() < 1e-12);
        assert!((h[4] - 0.3).abs() < 1e-12);
        assert!((h[5] - 0.7).abs() < 1e-12);
        assert!((h[9] - 0.3).abs() < 1e-12);
    }
}
