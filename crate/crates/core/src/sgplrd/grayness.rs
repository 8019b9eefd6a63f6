use super::{Planes, Raster};
use crate::error::{AwbError, Result};
use crate::image::LinearImage;

/// Contrast vectors shorter than this carry no direction.
pub const MIN_CONTRAST_NORM: f64 = 1e-10;

/// Per-pixel angle (degrees) between the contrast vector and the gray axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GraynessMap {
    pub width: usize,
    pub height: usize,
    pub angle: Vec<f64>,
    pub valid: Vec<bool>,
}

impl GraynessMap {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Marks pixels with any channel at or above the image's saturation level.
    pub fn invalidate_saturated(&mut self, img: &LinearImage) {
        for (i, valid) in self.valid.iter_mut().enumerate() {
            if *valid && img.is_saturated(i) {
                *valid = false;
            }
        }
    }

    /// Valid pixel indices sorted by angle, ties broken by row-major index.
    pub fn ranked(&self) -> Vec<u32> {
        let mut order: Vec<u32> = (0..self.angle.len() as u32)
            .filter(|&i| self.valid[i as usize])
            .collect();
        order.sort_unstable_by(|&a, &b| {
            self.angle[a as usize]
                .total_cmp(&self.angle[b as usize])
                .then(a.cmp(&b))
        });
        order
    }
}

/// Angle between `d` and `[1, 1, 1]`, in degrees; `None` when `d` is too short.
#[inline]
pub fn gray_angle(d: [f64; 3]) -> Option<f64> {
    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    if !(norm >= MIN_CONTRAST_NORM) {
        return None;
    }
    let cos = (d[0] + d[1] + d[2]) / (norm * 3f64.sqrt());
    Some(cos.clamp(-1.0, 1.0).acos().to_degrees())
}

pub fn grayness_map(contrast: &Planes) -> GraynessMap {
    let (w, h) = (contrast[0].width, contrast[0].height);
    assert!(
        contrast.iter().all(|p| p.width == w && p.height == h),
        "contrast planes must share a shape"
    );
    let n = w * h;
    let mut angle = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let d = [contrast[0].data[i], contrast[1].data[i], contrast[2].data[i]];
        if let Some(a) = gray_angle(d) {
            angle[i] = a;
            valid[i] = true;
        }
    }
    GraynessMap {
        width: w,
        height: h,
        angle,
        valid,
    }
}

/// Number of candidates kept for `n_percent` of `valid` pixels.
pub fn candidate_count(n_percent: f64, valid: usize) -> usize {
    let exact = n_percent / 100.0 * valid as f64;
    // Guard against products like 0.1 * 10 landing a hair above an integer.
    let k = (exact - 1e-9 * exact.max(1.0)).ceil().max(1.0) as usize;
    k.min(valid)
}

/// The `ceil(n% * valid)` pixels with the smallest angle.
pub fn select_candidates(gmap: &GraynessMap, n_percent: f64) -> Result<Raster<bool>> {
    if !(n_percent > 0.0 && n_percent <= 100.0) {
        return Err(AwbError::InvalidParameter(format!(
            "n_percent {n_percent} outside (0, 100]"
        )));
    }
    let order = gmap.ranked();
    if order.is_empty() {
        return Err(AwbError::EmptyCandidates);
    }
    let k = candidate_count(n_percent, order.len());
    let mut mask = Raster::filled(gmap.width, gmap.height, false);
    for &i in &order[..k] {
        mask.data[i as usize] = true;
    }
    Ok(mask)
}
