use super::Raster;
use crate::error::{AwbError, Result};
use crate::image::LinearImage;

/// Luminance-adaptive confidence of each salient gray pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceWeights {
    pub weights: Raster<f64>,
    pub exponent: f64,
    pub skewness: f64,
    pub mean_luminance: f64,
}

/// Exponent chosen from the luminance skewness.
pub fn adaptive_exponent(skewness: f64) -> f64 {
    if skewness > 1.5 {
        1.0
    } else if skewness > 0.2 {
        2.0
    } else {
        4.0
    }
}

/// Population skewness `m3 / m2^1.5`; zero for a degenerate (constant) sample.
pub fn skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    if values.is_empty() {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3) = (0.0, 0.0);
    for v in values {
        let d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
    }
    m2 /= n;
    m3 /= n;
    if m2 <= 0.0 {
        return 0.0;
    }
    m3 / m2.powf(1.5)
}

#[inline]
pub fn confidence(luminance: f64, mean_luminance: f64, exponent: f64) -> f64 {
    1.0 - (-(luminance / mean_luminance).powf(exponent)).exp()
}

/// Weights for a list of SGP luminances, returned in the same order.
pub(crate) fn weights_for_luminances(lm: &[f64]) -> Result<(Vec<f64>, f64, f64, f64)> {
    let nonzero: Vec<f64> = lm.iter().copied().filter(|v| *v > 0.0).collect();
    if nonzero.is_empty() {
        return Err(AwbError::DegenerateWeights);
    }
    let skew = skewness(&nonzero);
    let exponent = adaptive_exponent(skew);
    let mean = nonzero.iter().sum::<f64>() / nonzero.len() as f64;
    let w = lm.iter().map(|&v| confidence(v, mean, exponent)).collect();
    Ok((w, exponent, skew, mean))
}

#[inline]
pub fn luminance(px: [f64; 3]) -> f64 {
    (px[0] + px[1] + px[2]) / 3.0
}

/// Confidence weights over the salient gray pixels; zero elsewhere.
pub fn confidence_weights(img: &LinearImage, sgp: &Raster<bool>) -> Result<ConfidenceWeights> {
    let idx: Vec<usize> = (0..sgp.data.len()).filter(|&i| sgp.data[i]).collect();
    let lm: Vec<f64> = idx.iter().map(|&i| luminance(img.pixel(i))).collect();
    let (w, exponent, skewness, mean_luminance) = weights_for_luminances(&lm)?;
    let mut weights = Raster::filled(sgp.width, sgp.height, 0.0);
    for (&i, wv) in idx.iter().zip(w) {
        weights.data[i] = wv;
    }
    Ok(ConfidenceWeights {
        weights,
        exponent,
        skewness,
        mean_luminance,
    })
}
