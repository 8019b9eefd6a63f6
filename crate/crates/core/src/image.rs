//! Linear RGB rasters: loading, resampling and white-balance application.
//!
//! All intensities live in `[0, 1]` after black-level subtraction and
//! white-point scaling. Images are immutable once constructed.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, Rgb};

use crate::error::{AwbError, Result};
use crate::illuminant::IlluminantEstimate;

/// Default intensity above which a pixel counts as clipped.
pub const DEFAULT_SATURATION_LEVEL: f64 = 0.98;

/// Linear-RGB raster with interleaved `R, G, B` samples in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
    bit_depth: u8,
    saturation_level: f64,
}

impl LinearImage {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f64>,
        bit_depth: u8,
        saturation_level: f64,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(AwbError::InvalidImage("image has zero extent".into()));
        }
        if data.len() != width * height * 3 {
            return Err(AwbError::InvalidImage(format!(
                "expected {} samples for {width}x{height}x3, got {}",
                width * height * 3,
                data.len()
            )));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(AwbError::InvalidImage(format!(
                "intensity {v} outside [0, 1]"
            )));
        }
        if !(saturation_level > 0.0 && saturation_level <= 1.0) {
            return Err(AwbError::InvalidImage(format!(
                "saturation level {saturation_level} outside (0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
            bit_depth,
            saturation_level,
        })
    }

    /// Builds an image from a per-pixel closure; values are clamped to `[0, 1]`.
    pub fn from_fn(
        width: usize,
        height: usize,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                data.extend(px.iter().map(|v| v.clamp(0.0, 1.0)));
            }
        }
        Self::new(width, height, data, 16, DEFAULT_SATURATION_LEVEL)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn bit_depth(&self) -> u8 {
        self.bit_depth
    }

    pub fn saturation_level(&self) -> f64 {
        self.saturation_level
    }

    pub fn with_saturation_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0 && level <= 1.0) {
            return Err(AwbError::InvalidImage(format!(
                "saturation level {level} outside (0, 1]"
            )));
        }
        self.saturation_level = level;
        Ok(self)
    }

    #[inline]
    pub fn pixel(&self, index: usize) -> [f64; 3] {
        let o = index * 3;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [f64; 3] {
        self.pixel(y * self.width + x)
    }

    pub fn pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// True when any channel reaches the saturation level.
    #[inline]
    pub fn is_saturated(&self, index: usize) -> bool {
        self.pixel(index).iter().any(|&v| v >= self.saturation_level)
    }

    /// Largest sample over all channels.
    pub fn peak(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    /// Multiplies every sample by `s`, clamping to `[0, 1]`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(AwbError::InvalidParameter(format!("scale {s} must be >= 0")));
        }
        let data = self.data.iter().map(|v| (v * s).clamp(0.0, 1.0)).collect();
        Self::new(
            self.width,
            self.height,
            data,
            self.bit_depth,
            self.saturation_level,
        )
    }

    /// Per-channel arithmetic means.
    pub fn channel_means(&self) -> [f64; 3] {
        let mut sum = [0.0; 3];
        for px in self.pixels() {
            for c in 0..3 {
                sum[c] += px[c];
            }
        }
        let n = self.pixel_count() as f64;
        [sum[0] / n, sum[1] / n, sum[2] / n]
    }
}

/// How raw container values map to linear intensities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadOptions {
    pub black_level: f64,
    /// Raw value of full scale. Defaults to the container maximum
    /// (255 or 65535) when `None`.
    pub white_point: Option<f64>,
    /// Source bit depth recorded on the image. Defaults to the container depth.
    pub bit_depth: Option<u8>,
    pub saturation_level: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            black_level: 0.0,
            white_point: None,
            bit_depth: None,
            saturation_level: DEFAULT_SATURATION_LEVEL,
        }
    }
}

/// Maps one raw sample to `[0, 1]`.
#[inline]
pub fn normalize_raw(raw: f64, black_level: f64, white_point: f64) -> f64 {
    ((raw - black_level) / (white_point - black_level)).clamp(0.0, 1.0)
}

/// Reads an 8- or 16-bit 3-channel raster and converts it to linear `[0, 1]`.
pub fn load_linear_image(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<LinearImage> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(AwbError::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
        ));
    }
    let decoded = image::open(path).map_err(|e| AwbError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if opts.black_level < 0.0 {
        return Err(AwbError::InvalidParameter(format!(
            "black level {} must be >= 0",
            opts.black_level
        )));
    }

    let (width, height, container_bits, raw): (u32, u32, u8, Vec<f64>) = match decoded {
        DynamicImage::ImageRgb8(buf) => (
            buf.width(),
            buf.height(),
            8,
            buf.into_raw().into_iter().map(f64::from).collect(),
        ),
        DynamicImage::ImageRgb16(buf) => (
            buf.width(),
            buf.height(),
            16,
            buf.into_raw().into_iter().map(f64::from).collect(),
        ),
        other => {
            return Err(AwbError::ChannelCount {
                found: format!("{:?}", other.color()),
            })
        }
    };

    let white_point = opts
        .white_point
        .unwrap_or(((1u32 << container_bits) - 1) as f64);
    if opts.black_level >= white_point {
        return Err(AwbError::BlackLevel {
            black_level: opts.black_level,
            white_point,
        });
    }
    let data = raw
        .into_iter()
        .map(|v| normalize_raw(v, opts.black_level, white_point))
        .collect();
    LinearImage::new(
        width as usize,
        height as usize,
        data,
        opts.bit_depth.unwrap_or(container_bits),
        opts.saturation_level,
    )
}

/// Writes the image as a linear 16-bit RGB PNG (no gamma).
pub fn write_linear_png(img: &LinearImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let raw: Vec<u16> = img
        .data
        .iter()
        .map(|v| (v * 65535.0).round().clamp(0.0, 65535.0) as u16)
        .collect();
    let buf: ImageBuffer<Rgb<u16>, Vec<u16>> =
        ImageBuffer::from_raw(img.width as u32, img.height as u32, raw)
            .expect("buffer length matches dimensions");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| AwbError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
}

/// Block-mean (area) downsampling by `factor = 1/k` for integer `k`.
///
/// Trailing partial blocks are averaged over the pixels they contain.
pub fn downsample(img: &LinearImage, factor: f64) -> Result<LinearImage> {
    if !(factor > 0.0 && factor <= 1.0) {
        return Err(AwbError::InvalidParameter(format!(
            "downsample factor {factor} outside (0, 1]"
        )));
    }
    let inv = 1.0 / factor;
    let k = inv.round();
    if (inv - k).abs() > 1e-9 * inv || k < 1.0 {
        return Err(AwbError::InvalidParameter(format!(
            "downsample factor {factor} is not the reciprocal of an integer"
        )));
    }
    let k = k as usize;
    if k == 1 {
        return Ok(img.clone());
    }
    let out_w = img.width.div_ceil(k);
    let out_h = img.height.div_ceil(k);
    let mut data = Vec::with_capacity(out_w * out_h * 3);
    for by in 0..out_h {
        let y1 = ((by + 1) * k).min(img.height);
        for bx in 0..out_w {
            let x1 = ((bx + 1) * k).min(img.width);
            let mut sum = [0.0; 3];
            let mut count = 0usize;
            for y in by * k..y1 {
                for x in bx * k..x1 {
                    let px = img.get(x, y);
                    for c in 0..3 {
                        sum[c] += px[c];
                    }
                    count += 1;
                }
            }
            let n = count as f64;
            data.extend(sum.iter().map(|s| s / n));
        }
    }
    LinearImage::new(out_w, out_h, data, img.bit_depth, img.saturation_level)
}

/// Per-channel gains that neutralize `e`, normalized so the green gain is 1.
pub fn white_balance_gains(e: &IlluminantEstimate) -> Result<[f64; 3]> {
    let rgb = e.rgb();
    if rgb.iter().any(|&c| c <= 0.0) {
        return Err(AwbError::ZeroVector(format!(
            "cannot white balance with illuminant {rgb:?}"
        )));
    }
    Ok([rgb[1] / rgb[0], 1.0, rgb[1] / rgb[2]])
}

/// Divides out the illuminant (green gain fixed at 1) and clamps to `[0, 1]`.
pub fn apply_white_balance(img: &LinearImage, e: &IlluminantEstimate) -> Result<LinearImage> {
    let gains = white_balance_gains(e)?;
    let data = img
        .data
        .chunks_exact(3)
        .flat_map(|px| {
            [
                (px[0] * gains[0]).clamp(0.0, 1.0),
                (px[1] * gains[1]).clamp(0.0, 1.0),
                (px[2] * gains[2]).clamp(0.0, 1.0),
            ]
        })
        .collect();
    LinearImage::new(img.width, img.height, data, img.bit_depth, img.saturation_level)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_rgb16(path: &Path, w: u32, h: u32, values: Vec<u16>) {
        let buf: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::from_raw(w, h, values).unwrap();
        buf.save_with_format(path, image::ImageFormat::Png).unwrap();
    }

    #[test]
    fn load_zero_and_full_scale() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        write_rgb16(&path, 2, 1, vec![0, 0, 0, 65535, 65535, 65535]);
        let img = load_linear_image(&path, &LoadOptions::default()).unwrap();
        assert_eq!(img.pixel(0), [0.0, 0.0, 0.0]);
        assert_eq!(img.pixel(1), [1.0, 1.0, 1.0]);
        assert_eq!(img.bit_depth(), 16);
    }

    #[test]
    fn load_14bit_black_level() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw14.png");
        write_rgb16(&path, 1, 1, vec![1024, 512, 16383]);
        let opts = LoadOptions {
            black_level: 512.0,
            white_point: Some(16383.0),
            bit_depth: Some(14),
            ..LoadOptions::default()
        };
        let img = load_linear_image(&path, &opts).unwrap();
        // (1024 - 512) / (16383 - 512), evaluated independently: 512 / 15871
        assert!((img.pixel(0)[0] - 0.032_260_097_032_323_104).abs() < 1e-12);
        assert_eq!(img.pixel(0)[1], 0.0);
        assert_eq!(img.pixel(0)[2], 1.0);
        assert_eq!(img.bit_depth(), 14);
    }

    #[test]
    fn load_errors() {
        let dir = tempfile::tempdir().unwrap();
        let missing = dir.path().join("missing.png");
        assert!(matches!(
            load_linear_image(&missing, &LoadOptions::default()),
            Err(AwbError::Io { .. })
        ));

        let gray = dir.path().join("gray.png");
        let buf: ImageBuffer<image::Luma<u16>, Vec<u16>> =
            ImageBuffer::from_raw(1, 1, vec![100]).unwrap();
        buf.save_with_format(&gray, image::ImageFormat::Png).unwrap();
        assert!(matches!(
            load_linear_image(&gray, &LoadOptions::default()),
            Err(AwbError::ChannelCount { .. })
        ));

        let ok = dir.path().join("ok.png");
        write_rgb16(&ok, 1, 1, vec![1, 2, 3]);
        let opts = LoadOptions {
            black_level: 70000.0,
            ..LoadOptions::default()
        };
        assert!(matches!(
            load_linear_image(&ok, &opts),
            Err(AwbError::BlackLevel { .. })
        ));
    }

    #[test]
    fn downsample_block_means() {
        let c = LinearImage::from_fn(8, 8, |_, _| [0.3, 0.3, 0.3]).unwrap();
        let d = downsample(&c, 0.25).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
        assert!(d.data().iter().all(|v| (v - 0.3).abs() < 1e-15));

        let two = LinearImage::new(2, 2, vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0], 16, 0.98)
            .unwrap();
        let d = downsample(&two, 0.5).unwrap();
        assert_eq!(d.pixel(0), [0.5, 0.5, 0.5]);

        let ramp = LinearImage::from_fn(4, 4, |x, y| {
            let v = (y * 4 + x) as f64 / 16.0;
            [v, v / 2.0, v / 4.0]
        })
        .unwrap();
        let d = downsample(&ramp, 0.25).unwrap();
        // brute-force global mean
        let mut sum = [0.0; 3];
        for px in ramp.pixels() {
            for c in 0..3 {
                sum[c] += px[c];
            }
        }
        for c in 0..3 {
            assert!((d.pixel(0)[c] - sum[c] / 16.0).abs() < 1e-15);
        }
    }

    #[test]
    fn downsample_partial_blocks_and_errors() {
        let img = LinearImage::from_fn(5, 3, |x, _| [x as f64 / 10.0; 3]).unwrap();
        let d = downsample(&img, 0.5).unwrap();
        assert_eq!((d.width(), d.height()), (3, 2));
        // last column block holds only x = 4
        assert!((d.get(2, 0)[0] - 0.4).abs() < 1e-15);
        assert!(downsample(&img, 0.3).is_err());
        assert!(downsample(&img, 0.0).is_err());
        assert!(downsample(&img, 1.5).is_err());
    }

    #[test]
    fn white_balance_examples() {
        let img = LinearImage::new(1, 1, vec![0.2, 0.4, 0.4], 16, 0.98).unwrap();
        let neutral = IlluminantEstimate::neutral();
        let same = apply_white_balance(&img, &neutral).unwrap();
        for (a, b) in same.data().iter().zip(img.data()) {
            assert!((a - b).abs() < 1e-15);
        }

        let e = IlluminantEstimate::from_raw([1.0, 2.0, 2.0]).unwrap();
        let out = apply_white_balance(&img, &e).unwrap();
        for v in out.data() {
            assert!((v - 0.4).abs() < 1e-12);
        }

        let bright = LinearImage::new(1, 1, vec![0.9, 0.5, 0.95], 16, 0.98).unwrap();
        let warm = IlluminantEstimate::from_raw([0.2, 1.0, 0.3]).unwrap();
        let out = apply_white_balance(&bright, &warm).unwrap();
        assert!(out.data().iter().all(|v| *v <= 1.0));

        let bad = IlluminantEstimate::from_raw([1.0, 0.0, 1.0]).unwrap();
        assert!(apply_white_balance(&img, &bad).is_err());
    }

    #[test]
    fn constructor_invariants() {
        assert!(LinearImage::new(1, 1, vec![0.0, 1.2, 0.0], 16, 0.98).is_err());
        assert!(LinearImage::new(1, 1, vec![0.0, 0.5], 16, 0.98).is_err());
        assert!(LinearImage::new(1, 1, vec![0.0, 0.5, 0.1], 16, 0.0).is_err());
    }
}
