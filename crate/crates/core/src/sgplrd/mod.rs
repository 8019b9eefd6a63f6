//! Salient-gray-pixel illuminant estimation with local reflectance
//! differences.
//!
//! The pipeline is: log transform, Laplacian-of-Gaussian contrast, grayness
//! angle, top-N% candidate selection, the variance and color-deviation
//! filters, luminance confidence weighting, windowed mean-over-max
//! normalization and finally a weighted Minkowski ratio per channel.
//!
//! Everything up to candidate ranking is independent of the two tunable
//! parameters, so [`PreparedImage`] computes it once and answers repeated
//! `(N, p)` queries cheaply. The free functions in the submodules expose each
//! stage on full rasters.

pub mod contrast;
pub mod filters;
pub mod grayness;
pub mod lrd;
pub mod weights;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{AwbError, Result};
use crate::illuminant::IlluminantEstimate;
use crate::image::LinearImage;

pub use contrast::log_contrast;
pub use filters::{color_deviation_filter, variance_filter, ColorDeviation};
pub use grayness::{grayness_map, select_candidates, GraynessMap};
pub use lrd::{aggregate_illuminant, local_reflectance_difference, LocalReflectance};
pub use weights::{confidence_weights, ConfidenceWeights};

/// Row-major single-channel raster.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn map_indexed<U>(&self, mut f: impl FnMut(usize, T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().enumerate().map(|(i, &v)| f(i, v)).collect(),
        }
    }
}

/// One raster per color channel, in R, G, B order.
pub type Planes = [Raster<f64>; 3];

/// Boolean raster marking salient gray pixels.
pub type SgpMask = Raster<bool>;

/// Clamp ranges for the two tunable parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParamBounds {
    pub n_min: f64,
    pub n_max: f64,
    pub p_min: f64,
    pub p_max: f64,
}

impl Default for ParamBounds {
    fn default() -> Self {
        Self {
            n_min: 0.01,
            n_max: 5.0,
            p_min: 1.0,
            p_max: 20.0,
        }
    }
}

impl ParamBounds {
    pub fn clamp_n(&self, n: f64) -> f64 {
        n.clamp(self.n_min, self.n_max)
    }

    pub fn clamp_p(&self, p: f64) -> f64 {
        p.clamp(self.p_min, self.p_max)
    }
}

/// Estimator configuration: the tunable pair `(n_percent, minkowski_p)` plus
/// the fixed thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgpParams {
    /// Percentage of valid pixels kept as gray candidates.
    pub n_percent: f64,
    pub minkowski_p: f64,
    pub var_th: f64,
    pub color_th: f64,
    pub log_eps: f64,
    /// Gaussian standard deviation of the Laplacian-of-Gaussian.
    pub log_sigma: f64,
    /// Local reflectance window side (odd).
    pub window: usize,
    /// Variance and color-deviation filters; off for well-lit daytime data.
    pub filters_enabled: bool,
    pub exclude_saturated: bool,
    pub bounds: ParamBounds,
}

impl Default for SgpParams {
    fn default() -> Self {
        Self {
            n_percent: 0.5,
            minkowski_p: 2.0,
            var_th: 1e-4,
            color_th: 0.5,
            log_eps: 1e-4,
            log_sigma: 0.5,
            window: 3,
            filters_enabled: true,
            exclude_saturated: true,
            bounds: ParamBounds::default(),
        }
    }
}

impl SgpParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AwbError::InvalidParameter(m));
        let b = &self.bounds;
        if !(b.n_min > 0.0 && b.n_min <= b.n_max && b.n_max <= 100.0) {
            return bad(format!("invalid N bounds [{}, {}]", b.n_min, b.n_max));
        }
        if !(b.p_min >= 1.0 && b.p_min <= b.p_max) {
            return bad(format!("invalid p bounds [{}, {}]", b.p_min, b.p_max));
        }
        check_tunable(self.n_percent, self.minkowski_p)?;
        if self.minkowski_p > b.p_max {
            return bad(format!(
                "minkowski_p {} above bound {}",
                self.minkowski_p, b.p_max
            ));
        }
        if !(self.var_th >= 0.0) || !(self.color_th >= 0.0) {
            return bad("thresholds must be >= 0".into());
        }
        if !(self.log_eps > 0.0) || !(self.log_sigma > 0.0) {
            return bad("log_eps and log_sigma must be > 0".into());
        }
        if self.window < 3 || self.window % 2 == 0 {
            return bad(format!("window {} must be odd and >= 3", self.window));
        }
        Ok(())
    }

    pub fn with_tunables(mut self, n_percent: f64, minkowski_p: f64) -> Self {
        self.n_percent = n_percent;
        self.minkowski_p = minkowski_p;
        self
    }
}

fn check_tunable(n_percent: f64, p: f64) -> Result<()> {
    if !(n_percent > 0.0 && n_percent <= 100.0) {
        return Err(AwbError::InvalidParameter(format!(
            "n_percent {n_percent} outside (0, 100]"
        )));
    }
    if !(p >= 1.0 && p.is_finite()) {
        return Err(AwbError::InvalidParameter(format!("minkowski_p {p} < 1")));
    }
    Ok(())
}

/// Why the estimator fell back to the gray-world average.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FallbackReason {
    NoValidPixels,
    NoSalientPixels,
    DegenerateWeights,
    InsufficientEvidence,
}

impl fmt::Display for FallbackReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FallbackReason::NoValidPixels => "no_valid_pixels",
            FallbackReason::NoSalientPixels => "no_salient_pixels",
            FallbackReason::DegenerateWeights => "degenerate_weights",
            FallbackReason::InsufficientEvidence => "insufficient_evidence",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub illuminant: IlluminantEstimate,
    pub fallback: Option<FallbackReason>,
    pub candidates: usize,
    pub salient: usize,
    pub exponent: Option<f64>,
}

impl Estimate {
    pub fn is_fallback(&self) -> bool {
        self.fallback.is_some()
    }
}

/// Normalized per-channel means.
pub fn gray_world(img: &LinearImage) -> Result<IlluminantEstimate> {
    IlluminantEstimate::from_raw(img.channel_means())
        .map_err(|_| AwbError::InvalidImage("image is entirely black".into()))
}

/// Parameter-independent state of one image, ready for repeated queries.
#[derive(Debug, Clone)]
pub struct PreparedImage {
    image: Arc<LinearImage>,
    params: SgpParams,
    gray: GraynessMap,
    /// Valid pixels ranked by grayness angle (ties by index).
    ranked: Vec<u32>,
    /// Per-pixel outcome of the variance and color-deviation filters.
    passes_filters: Vec<bool>,
}

impl PreparedImage {
    pub fn new(image: Arc<LinearImage>, params: &SgpParams) -> Result<Self> {
        params.validate()?;
        let norm_log = contrast::normalized_log_planes(&image, params.log_eps);
        let delta = contrast::log_of_gaussian(&norm_log, params.log_sigma);
        let mut gray = grayness_map(&delta);
        if params.exclude_saturated {
            gray.invalidate_saturated(&image);
        }
        let ranked = gray.ranked();

        let passes_filters = if params.filters_enabled {
            let raw_log = contrast::log_planes(&image, params.log_eps);
            let deviation = ColorDeviation::new(&raw_log, params.color_th);
            (0..image.pixel_count())
                .map(|i| {
                    let norm = [norm_log[0].data[i], norm_log[1].data[i], norm_log[2].data[i]];
                    let raw = [raw_log[0].data[i], raw_log[1].data[i], raw_log[2].data[i]];
                    filters::log_variance(norm) > params.var_th && deviation.keeps(raw)
                })
                .collect()
        } else {
            vec![true; image.pixel_count()]
        };

        Ok(Self {
            image,
            params: *params,
            gray,
            ranked,
            passes_filters,
        })
    }

    pub fn image(&self) -> &Arc<LinearImage> {
        &self.image
    }

    pub fn params(&self) -> &SgpParams {
        &self.params
    }

    pub fn grayness(&self) -> &GraynessMap {
        &self.gray
    }

    /// Salient gray pixel indices for `n_percent`, in row-major order.
    pub fn salient_pixels(&self, n_percent: f64) -> Vec<u32> {
        if self.ranked.is_empty() {
            return Vec::new();
        }
        let k = grayness::candidate_count(n_percent, self.ranked.len());
        let mut sgp: Vec<u32> = self.ranked[..k]
            .iter()
            .copied()
            .filter(|&i| self.passes_filters[i as usize])
            .collect();
        sgp.sort_unstable();
        sgp
    }

    /// Estimate for the given tunables, falling back to gray world when the
    /// salient-pixel evidence is insufficient.
    pub fn estimate(&self, n_percent: f64, minkowski_p: f64) -> Result<Estimate> {
        check_tunable(n_percent, minkowski_p)?;
        let fallback = |reason, candidates, salient| -> Result<Estimate> {
            Ok(Estimate {
                illuminant: gray_world(&self.image)?,
                fallback: Some(reason),
                candidates,
                salient,
                exponent: None,
            })
        };
        if self.ranked.is_empty() {
            return fallback(FallbackReason::NoValidPixels, 0, 0);
        }
        let candidates = grayness::candidate_count(n_percent, self.ranked.len());
        let sgp = self.salient_pixels(n_percent);
        if sgp.is_empty() {
            return fallback(FallbackReason::NoSalientPixels, candidates, 0);
        }

        let img = &*self.image;
        let lm: Vec<f64> = sgp
            .iter()
            .map(|&i| weights::luminance(img.pixel(i as usize)))
            .collect();
        let (w, exponent, _, _) = match weights::weights_for_luminances(&lm) {
            Ok(v) => v,
            Err(_) => return fallback(FallbackReason::DegenerateWeights, candidates, sgp.len()),
        };

        // slot[i] = 1 + position of pixel i in `sgp`, 0 when not salient
        let mut slot = vec![0u32; img.pixel_count()];
        for (j, &i) in sgp.iter().enumerate() {
            slot[i as usize] = j as u32 + 1;
        }
        let (width, height) = (img.width(), img.height());
        let r = self.params.window / 2;
        let mut acc = lrd::MinkowskiRatio::default();
        for (j, &i) in sgp.iter().enumerate() {
            let (x, y) = (i as usize % width, i as usize / width);
            let (x0, x1) = (x.saturating_sub(r), (x + r).min(width - 1));
            let (y0, y1) = (y.saturating_sub(r), (y + r).min(height - 1));
            let mut sum = [0.0; 3];
            let mut count = [0usize; 3];
            let mut max = [0.0f64; 3];
            for yy in y0..=y1 {
                for xx in x0..=x1 {
                    let s = slot[yy * width + xx];
                    if s == 0 {
                        continue;
                    }
                    let px = img.pixel(yy * width + xx);
                    for c in 0..3 {
                        if px[c] != 0.0 {
                            sum[c] += px[c];
                            count[c] += 1;
                        }
                        max[c] = max[c].max(px[c]);
                    }
                }
            }
            for c in 0..3 {
                if count[c] > 0 && max[c] > 0.0 {
                    let mean = sum[c] / count[c] as f64;
                    acc.push(c, mean, mean / max[c], w[j]);
                }
            }
        }
        match acc.finish(minkowski_p) {
            Ok(illuminant) => Ok(Estimate {
                illuminant,
                fallback: None,
                candidates,
                salient: sgp.len(),
                exponent: Some(exponent),
            }),
            Err(_) => fallback(FallbackReason::InsufficientEvidence, candidates, sgp.len()),
        }
    }
}

/// Full estimate for one image with `params`.
pub fn estimate(img: &LinearImage, params: &SgpParams) -> Result<Estimate> {
    PreparedImage::new(Arc::new(img.clone()), params)?.estimate(params.n_percent, params.minkowski_p)
}
