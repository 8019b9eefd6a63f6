//! Synthetic night scenes with a known illuminant.
//!
//! A scene is a grid of reflectance patches. Achromatic patches carry a
//! sinusoidal texture; the rest are flat colors from a hue ring. The image is
//! reflectance times illuminant, scaled to a dark exposure, plus sensor noise.

use std::f64::consts::TAU;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{write_ground_truth, GroundTruthRecord, GROUND_TRUTH_FILE};
use crate::error::{AwbError, Result};
use crate::image::{write_linear_png, LinearImage};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    /// Positive RGB illuminant; normalized on use.
    pub illuminant: [f64; 3],
    pub gray_fraction: f64,
    /// Texture frequency of achromatic patches, in cycles per pixel.
    pub texture_scale: f64,
    /// Standard deviation of additive Gaussian noise.
    pub noise_sigma: f64,
    /// Signal-dependent noise: std `shot_noise * sqrt(value)`. Zero disables.
    pub shot_noise: f64,
    /// Patches per side.
    pub patch_grid: usize,
    /// Brightest noise-free sample after exposure scaling.
    pub exposure_peak: f64,
    pub chroma_saturation: f64,
    pub seed: u64,
}

impl SceneSpec {
    pub fn new(width: usize, height: usize, illuminant: [f64; 3], seed: u64) -> Self {
        Self {
            width,
            height,
            illuminant,
            gray_fraction: 0.5,
            texture_scale: 0.15,
            noise_sigma: 0.0,
            shot_noise: 0.0,
            patch_grid: 16,
            exposure_peak: 0.2,
            chroma_saturation: 0.6,
            seed,
        }
    }

    /// Scene with an illuminant drawn from the night prior using `seed`.
    pub fn random(width: usize, height: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_111u64);
        Self::new(width, height, sample_night_illuminant(&mut rng), seed)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AwbError::InvalidParameter(m.to_string()));
        if self.width == 0 || self.height == 0 {
            return bad("scene size must be positive");
        }
        if self.illuminant.iter().any(|c| !(*c > 0.0) || !c.is_finite()) {
            return bad("illuminant components must be positive");
        }
        if !(0.0..=1.0).contains(&self.gray_fraction) {
            return bad("gray_fraction outside [0, 1]");
        }
        if !(self.noise_sigma >= 0.0) || !(self.shot_noise >= 0.0) {
            return bad("noise levels must be >= 0");
        }
        if self.patch_grid == 0 {
            return bad("patch_grid must be positive");
        }
        if !(self.exposure_peak > 0.0 && self.exposure_peak <= 1.0) {
            return bad("exposure_peak outside (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.chroma_saturation) {
            return bad("chroma_saturation outside [0, 1]");
        }
        Ok(())
    }
}

/// Strongly tinted illuminants typical of artificial night lighting.
/// Draws are rejected until the log-channel variance reaches 0.01.
pub fn sample_night_illuminant(rng: &mut impl Rng) -> [f64; 3] {
    loop {
        let r = rng.random_range(-0.3f64..0.9).exp();
        let b = rng.random_range(-1.4f64..0.2).exp();
        let l = [r, 1.0, b];
        let logs = l.map(f64::ln);
        let mean = logs.iter().sum::<f64>() / 3.0;
        let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 3.0;
        if var >= 0.01 {
            let n = (r * r + 1.0 + b * b).sqrt();
            return [r / n, 1.0 / n, b / n];
        }
    }
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match i {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub image: LinearImage,
    pub illuminant: [f64; 3],
    /// Per-pixel reflectance, interleaved RGB.
    pub reflectance: Vec<f64>,
    /// Row-major over the patch grid.
    pub gray_patches: Vec<bool>,
    pub patch_size: usize,
}

impl SyntheticScene {
    pub fn ground_truth(&self, image_id: &str) -> Result<GroundTruthRecord> {
        GroundTruthRecord::new(image_id, self.illuminant, "synthetic", None)
    }

    /// Whether the pixel lies in an achromatic patch.
    pub fn is_gray_pixel(&self, x: usize, y: usize) -> bool {
        let g = (self.gray_patches.len() as f64).sqrt() as usize;
        self.gray_patches[(y / self.patch_size).min(g - 1) * g + (x / self.patch_size).min(g - 1)]
    }
}

pub fn render(spec: &SceneSpec) -> Result<SyntheticScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let g = spec.patch_grid;
    let patches = g * g;
    let gray_count = (spec.gray_fraction * patches as f64).round() as usize;
    let mut order: Vec<usize> = (0..patches).collect();
    order.shuffle(&mut rng);
    let mut gray_patches = vec![false; patches];
    for &k in &order[..gray_count] {
        gray_patches[k] = true;
    }

    // per patch: base albedo or color, texture phases
    let mut albedo = Vec::with_capacity(patches);
    let mut phase = Vec::with_capacity(patches);
    for &gray in &gray_patches {
        let a = if gray {
            let v = rng.random_range(0.15..0.9);
            [v, v, v]
        } else {
            let h = rng.random_range(0.0..1.0);
            let v = rng.random_range(0.25..0.9);
            hsv_to_rgb(h, spec.chroma_saturation, v)
        };
        albedo.push(a);
        phase.push([rng.random_range(0.0..TAU), rng.random_range(0.0..TAU)]);
    }

    let patch_size = spec.width.max(spec.height).div_ceil(g);
    let f = TAU * spec.texture_scale;
    let mut reflectance = Vec::with_capacity(spec.width * spec.height * 3);
    for y in 0..spec.height {
        for x in 0..spec.width {
            let k = (y / patch_size).min(g - 1) * g + (x / patch_size).min(g - 1);
            let a = albedo[k];
            let t = if gray_patches[k] {
                let [px, py] = phase[k];
                1.0 + 0.4 * (f * x as f64 + px).sin() * (f * y as f64 + py).sin()
            } else {
                1.0
            };
            reflectance.extend_from_slice(&[a[0] * t, a[1] * t, a[2] * t]);
        }
    }

    let norm = spec.illuminant.iter().map(|c| c * c).sum::<f64>().sqrt();
    let illum = spec.illuminant.map(|c| c / norm);
    let mut data: Vec<f64> = reflectance
        .chunks_exact(3)
        .flat_map(|w| [w[0] * illum[0], w[1] * illum[1], w[2] * illum[2]])
        .collect();
    let peak = data.iter().copied().fold(0.0f64, f64::max);
    let scale = spec.exposure_peak / peak;
    for v in data.iter_mut() {
        *v *= scale;
    }
    if spec.noise_sigma > 0.0 || spec.shot_noise > 0.0 {
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for v in data.iter_mut() {
            let sigma = spec.noise_sigma + spec.shot_noise * v.sqrt();
            *v += sigma * unit.sample(&mut rng);
        }
    }
    for v in data.iter_mut() {
        *v = v.clamp(0.0, 1.0);
    }
    let image = LinearImage::new(
        spec.width,
        spec.height,
        data,
        16,
        crate::image::DEFAULT_SATURATION_LEVEL,
    )?;
    Ok(SyntheticScene {
        image,
        illuminant: illum,
        reflectance,
        gray_patches,
        patch_size,
    })
}

/// Writes scenes as `<id>.png` plus the ground-truth CSV, in the dataset
/// layout read by [`crate::dataset::Dataset`].
pub fn write_dataset(dir: impl AsRef<Path>, scenes: &[(String, SyntheticScene)]) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| AwbError::io(dir, e))?;
    let mut records = Vec::with_capacity(scenes.len());
    for (id, scene) in scenes {
        write_linear_png(&scene.image, dir.join(format!("{id}.png")))?;
        records.push(scene.ground_truth(id)?);
    }
    write_ground_truth(dir.join(GROUND_TRUTH_FILE), &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_gray_noise_free_is_proportional_to_illuminant() {
        let mut spec = SceneSpec::new(64, 48, [0.9, 0.5, 0.2], 3);
        spec.gray_fraction = 1.0;
        let s = render(&spec).unwrap();
        let l = s.illuminant;
        for px in s.image.pixels() {
            let k = px[1] / l[1];
            assert!((px[0] - k * l[0]).abs() < 1e-15);
            assert!((px[2] - k * l[2]).abs() < 1e-15);
        }
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let mut spec = SceneSpec::random(40, 40, 17);
        let a = render(&spec).unwrap();
        let b = render(&spec).unwrap();
        assert_eq!(a.image, b.image);
        spec.noise_sigma = 0.01;
        assert_eq!(render(&spec).unwrap().image, render(&spec).unwrap().image);
        spec.seed = 18;
        assert_ne!(render(&spec).unwrap().image, a.image);
    }

    #[test]
    fn gray_fraction_counts_patches_in_reflectance() {
        let mut spec = SceneSpec::random(64, 64, 5);
        spec.patch_grid = 8;
        spec.gray_fraction = 0.5;
        let s = render(&spec).unwrap();
        let ps = s.patch_size;
        let mut achromatic = 0;
        for py in 0..8 {
            for px in 0..8 {
                let i = ((py * ps + 1) * 64 + px * ps + 1) * 3;
                let r = &s.reflectance[i..i + 3];
                if r[0] == r[1] && r[1] == r[2] {
                    achromatic += 1;
                }
            }
        }
        assert_eq!(achromatic, 32);
        assert_eq!(s.gray_patches.iter().filter(|g| **g).count(), 32);
    }

    #[test]
    fn exposure_is_dark() {
        let s = render(&SceneSpec::random(32, 32, 2)).unwrap();
        assert!((s.image.peak() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn night_prior_is_chromatic() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..200 {
            let l = sample_night_illuminant(&mut rng);
            let logs = l.map(f64::ln);
            let m = logs.iter().sum::<f64>() / 3.0;
            assert!(logs.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 3.0 >= 0.01);
            assert!(l.iter().all(|c| *c > 0.0));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut spec = SceneSpec::random(8, 8, 0);
        spec.gray_fraction = 1.5;
        assert!(render(&spec).is_err());
        let mut spec = SceneSpec::random(8, 8, 0);
        spec.illuminant = [0.0, 1.0, 1.0];
        assert!(render(&spec).is_err());
    }
}
