//! Pixel-wise local reflectance difference and the weighted Minkowski
//! aggregation that turns it into an illuminant estimate.

use super::{Planes, Raster};
use crate::error::{AwbError, Result};
use crate::illuminant::IlluminantEstimate;

/// Window mean of non-zero values and the mean-over-max ratio, per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalReflectance {
    pub mean: Planes,
    pub ratio: Planes,
}

/// `(mean of non-zero values, mean / window max)` for the `window x window`
/// neighbourhood of `(x, y)`, clipped at the borders.
#[inline]
pub fn window_stats(plane: &Raster<f64>, x: usize, y: usize, window: usize) -> (f64, f64) {
    let r = window / 2;
    let (x0, x1) = (x.saturating_sub(r), (x + r).min(plane.width - 1));
    let (y0, y1) = (y.saturating_sub(r), (y + r).min(plane.height - 1));
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut max = 0.0f64;
    for yy in y0..=y1 {
        let row = &plane.data[yy * plane.width..(yy + 1) * plane.width];
        for &v in &row[x0..=x1] {
            if v != 0.0 {
                sum += v;
                count += 1;
            }
            max = max.max(v);
        }
    }
    if count == 0 || max <= 0.0 {
        return (0.0, 0.0);
    }
    let mean = sum / count as f64;
    (mean, mean / max)
}

/// Evaluates [`window_stats`] at every pixel of every channel.
pub fn local_reflectance_difference(sgp_values: &Planes, window: usize) -> LocalReflectance {
    assert!(window % 2 == 1, "window must be odd");
    let (w, h) = (sgp_values[0].width, sgp_values[0].height);
    let mut mean = [
        Raster::filled(w, h, 0.0),
        Raster::filled(w, h, 0.0),
        Raster::filled(w, h, 0.0),
    ];
    let mut ratio = mean.clone();
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let (mu, n) = window_stats(&sgp_values[c], x, y, window);
                mean[c].data[y * w + x] = mu;
                ratio[c].data[y * w + x] = n;
            }
        }
    }
    LocalReflectance { mean, ratio }
}

/// Per-channel accumulator for the weighted Minkowski ratio.
///
/// Terms are scaled by their maxima before raising to `p`, so large orders
/// on dark images neither underflow nor overflow.
#[derive(Debug, Default, Clone)]
pub(crate) struct MinkowskiRatio {
    num: [Vec<f64>; 3],
    den: [Vec<f64>; 3],
}

impl MinkowskiRatio {
    /// Adds one position; positions with `ratio <= 0` fall outside the
    /// valid set for that channel.
    #[inline]
    pub(crate) fn push(&mut self, c: usize, mean: f64, ratio: f64, weight: f64) {
        if ratio > 0.0 {
            self.num[c].push(mean * weight);
            self.den[c].push(ratio * weight);
        }
    }

    pub(crate) fn finish(&self, p: f64) -> Result<IlluminantEstimate> {
        let mut e = [0.0; 3];
        for c in 0..3 {
            let num = scaled_power_sum(&self.num[c], p);
            let den = scaled_power_sum(&self.den[c], p);
            let (Some((nmax, nsum)), Some((dmax, dsum))) = (num, den) else {
                return Err(AwbError::InsufficientEvidence { channel: c });
            };
            e[c] = (nmax / dmax) * (nsum / dsum).powf(1.0 / p);
        }
        IlluminantEstimate::from_raw(e)
    }
}

/// `(max, sum((x / max)^p))`, or `None` when every term is zero.
fn scaled_power_sum(terms: &[f64], p: f64) -> Option<(f64, f64)> {
    let max = terms.iter().copied().fold(0.0f64, f64::max);
    if !(max > 0.0) {
        return None;
    }
    Some((max, terms.iter().map(|t| (t / max).powf(p)).sum()))
}

/// Weighted Minkowski ratio over positions with a positive ratio, then
/// unit-normalized.
pub fn aggregate_illuminant(
    lrd: &LocalReflectance,
    weights: &Raster<f64>,
    p: f64,
) -> Result<IlluminantEstimate> {
    if !(p >= 1.0) {
        return Err(AwbError::InvalidParameter(format!("minkowski p {p} < 1")));
    }
    let mut acc = MinkowskiRatio::default();
    for c in 0..3 {
        for i in 0..weights.data.len() {
            acc.push(c, lrd.mean[c].data[i], lrd.ratio[c].data[i], weights.data[i]);
        }
    }
    acc.finish(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(values: &[f64]) -> Raster<f64> {
        Raster {
            width: values.len(),
            height: 1,
            data: values.to_vec(),
        }
    }

    fn lrd_single(mean: [f64; 3], ratio: [f64; 3]) -> LocalReflectance {
        LocalReflectance {
            mean: [row(&[mean[0]]), row(&[mean[1]]), row(&[mean[2]])],
            ratio: [row(&[ratio[0]]), row(&[ratio[1]]), row(&[ratio[2]])],
        }
    }

    #[test]
    fn window_with_single_value() {
        let p = row(&[0.0, 0.7, 0.0]);
        assert_eq!(window_stats(&p, 1, 0, 3), (0.7, 1.0));
    }

    #[test]
    fn window_hand_computation() {
        let p = row(&[0.0, 0.2, 0.4]);
        let (mu, n) = window_stats(&p, 1, 0, 3);
        assert!((mu - 0.3).abs() < 1e-15);
        assert!((n - 0.75).abs() < 1e-15);
    }

    #[test]
    fn all_zero_window() {
        let p = row(&[0.0, 0.0, 0.0, 0.0, 0.5]);
        assert_eq!(window_stats(&p, 1, 0, 3), (0.0, 0.0));
        let lrd = local_reflectance_difference(&[p.clone(), p.clone(), p], 3);
        assert_eq!(lrd.ratio[0].data, vec![0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn single_position_ratio_is_mean_over_ratio() {
        let lrd = lrd_single([0.2, 0.4, 0.6], [0.5, 0.5, 0.5]);
        let w = row(&[1.0]);
        for p in [1.0, 2.0, 7.5] {
            let e = aggregate_illuminant(&lrd, &w, p).unwrap().rgb();
            assert!((e[0] - 0.267_261_241_912_424_4).abs() < 1e-12);
            assert!((e[1] - 0.534_522_483_824_848_8).abs() < 1e-12);
            assert!((e[2] - 0.801_783_725_737_273_2).abs() < 1e-12);
        }
    }

    #[test]
    fn two_positions_p2_brute_force() {
        let lrd = LocalReflectance {
            mean: [row(&[0.2, 0.5]), row(&[0.3, 0.1]), row(&[0.4, 0.6])],
            ratio: [row(&[0.5, 1.0]), row(&[0.25, 0.8]), row(&[1.0, 0.6])],
        };
        let w = row(&[0.6, 0.3]);
        let e = aggregate_illuminant(&lrd, &w, 2.0).unwrap().rgb();
        // independent evaluation of the ratio of squared weighted sums
        let mut raw = [0.0; 3];
        for c in 0..3 {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..2 {
                num += (lrd.mean[c].data[i] * w.data[i]).powi(2);
                den += (lrd.ratio[c].data[i] * w.data[i]).powi(2);
            }
            raw[c] = (num / den).sqrt();
        }
        let n = (raw[0] * raw[0] + raw[1] * raw[1] + raw[2] * raw[2]).sqrt();
        for c in 0..3 {
            assert!((e[c] - raw[c] / n).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_support_is_insufficient() {
        let lrd = lrd_single([0.2, 0.4, 0.6], [0.5, 0.0, 0.5]);
        assert!(matches!(
            aggregate_illuminant(&lrd, &row(&[1.0]), 2.0),
            Err(AwbError::InsufficientEvidence { channel: 1 })
        ));
        let lrd = lrd_single([0.2, 0.4, 0.6], [0.5, 0.5, 0.5]);
        assert!(aggregate_illuminant(&lrd, &row(&[0.0]), 2.0).is_err());
        assert!(aggregate_illuminant(&lrd, &row(&[1.0]), 0.5).is_err());
    }
}
