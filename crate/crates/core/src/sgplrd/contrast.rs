//! Log transform and Laplacian-of-Gaussian local contrast.

use super::{Planes, Raster};
use crate::image::LinearImage;

/// `ln(v + eps)` per channel on raw intensities.
pub fn log_planes(img: &LinearImage, log_eps: f64) -> Planes {
    channel_planes(img, |v| (v + log_eps).ln())
}

/// `ln(v / peak + eps)` per channel, where `peak` is the brightest sample.
///
/// Dividing by the peak makes `eps` relative to the image's own range, so a
/// power-of-two exposure change leaves the output bit-identical.
pub fn normalized_log_planes(img: &LinearImage, log_eps: f64) -> Planes {
    let peak = img.peak();
    if peak <= 0.0 {
        let flat = log_eps.ln();
        return channel_planes(img, |_| flat);
    }
    channel_planes(img, |v| (v / peak + log_eps).ln())
}

fn channel_planes(img: &LinearImage, f: impl Fn(f64) -> f64) -> Planes {
    let (w, h) = (img.width(), img.height());
    let mut planes = [
        Raster::filled(w, h, 0.0),
        Raster::filled(w, h, 0.0),
        Raster::filled(w, h, 0.0),
    ];
    for (i, px) in img.pixels().enumerate() {
        for c in 0..3 {
            planes[c].data[i] = f(px[c]);
        }
    }
    planes
}

/// Normalized 1-D Gaussian taps with radius `max(1, ceil(4 sigma))`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    assert!(sigma > 0.0, "sigma must be positive");
    let radius = ((4.0 * sigma).ceil() as usize).max(1);
    let taps: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let d = i as f64 - radius as f64;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable Gaussian blur with edge replication.
pub fn gaussian_blur(src: &Raster<f64>, sigma: f64) -> Raster<f64> {
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h) = (src.width, src.height);
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;

    let mut tmp = Raster::filled(w, h, 0.0);
    for y in 0..h {
        let row = &src.data[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = 0.0;
            for (k, tap) in kernel.iter().enumerate() {
                acc += tap * row[clamp(x as isize + k as isize - r, w)];
            }
            tmp.data[y * w + x] = acc;
        }
    }
    let mut out = Raster::filled(w, h, 0.0);
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for (k, tap) in kernel.iter().enumerate() {
                acc += tap * tmp.data[clamp(y as isize + k as isize - r, h) * w + x];
            }
            out.data[y * w + x] = acc;
        }
    }
    out
}

/// 4-neighbour 3x3 Laplacian with edge replication.
pub fn laplacian(src: &Raster<f64>) -> Raster<f64> {
    let (w, h) = (src.width, src.height);
    let mut out = Raster::filled(w, h, 0.0);
    for y in 0..h {
        let up = y.saturating_sub(1);
        let down = (y + 1).min(h - 1);
        for x in 0..w {
            let left = x.saturating_sub(1);
            let right = (x + 1).min(w - 1);
            let c = src.data[y * w + x];
            out.data[y * w + x] = src.data[up * w + x]
                + src.data[down * w + x]
                + src.data[y * w + left]
                + src.data[y * w + right]
                - 4.0 * c;
        }
    }
    out
}

/// Laplacian of Gaussian applied to each plane.
pub fn log_of_gaussian(planes: &Planes, sigma: f64) -> Planes {
    [
        laplacian(&gaussian_blur(&planes[0], sigma)),
        laplacian(&gaussian_blur(&planes[1], sigma)),
        laplacian(&gaussian_blur(&planes[2], sigma)),
    ]
}

/// Per-channel local contrast of the log image (the `Δ` rasters).
pub fn log_contrast(img: &LinearImage, log_eps: f64, sigma: f64) -> Planes {
    log_of_gaussian(&normalized_log_planes(img, log_eps), sigma)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Dense 2-D oracle: full (non-separable) Gaussian then Laplacian, both
    /// evaluated directly with clamped indices.
    fn dense_log(src: &Raster<f64>, sigma: f64) -> Raster<f64> {
        let radius = ((4.0 * sigma).ceil() as isize).max(1);
        let (w, h) = (src.width as isize, src.height as isize);
        let at = |x: isize, y: isize| src.data[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
        let mut norm = 0.0;
        for dy in -radius..=radius {
            for dx in -radius..=radius {
                norm += (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp();
            }
        }
        let mut blurred = vec![0.0; (w * h) as usize];
        for y in 0..h {
            for x in 0..w {
                let mut acc = 0.0;
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        let g = (-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)).exp() / norm;
                        acc += g * at(x + dx, y + dy);
                    }
                }
                blurred[(y * w + x) as usize] = acc;
            }
        }
        let b = |x: isize, y: isize| blurred[(y.clamp(0, h - 1) * w + x.clamp(0, w - 1)) as usize];
        let mut out = Raster::filled(src.width, src.height, 0.0);
        for y in 0..h {
            for x in 0..w {
                out.data[(y * w + x) as usize] =
                    b(x - 1, y) + b(x + 1, y) + b(x, y - 1) + b(x, y + 1) - 4.0 * b(x, y);
            }
        }
        out
    }

    #[test]
    fn kernel_radius_and_normalization() {
        let k = gaussian_kernel(0.5);
        assert_eq!(k.len(), 5);
        assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(k[2] > k[1] && k[1] > k[0]);
    }

    #[test]
    fn constant_image_has_zero_contrast() {
        let img = LinearImage::from_fn(9, 7, |_, _| [0.2, 0.05, 0.6]).unwrap();
        let d = log_contrast(&img, 1e-4, 0.5);
        for plane in &d {
            assert!(plane.data.iter().all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn scaling_leaves_contrast_unchanged() {
        let img = LinearImage::from_fn(12, 10, |x, y| {
            let v = 0.05 + 0.01 * ((x * 7 + y * 3) % 11) as f64;
            [v, 0.5 * v, 0.25 * v + 0.01]
        })
        .unwrap();
        let a = log_contrast(&img, 1e-4, 0.5);
        let b = log_contrast(&img.scaled(4.0).unwrap(), 1e-4, 0.5);
        for c in 0..3 {
            assert_eq!(a[c].data, b[c].data);
        }
        let c3 = log_contrast(&img.scaled(1.7).unwrap(), 1e-4, 0.5);
        for c in 0..3 {
            for (x, y) in a[c].data.iter().zip(&c3[c].data) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bright_spot_matches_dense_oracle() {
        let img = LinearImage::from_fn(9, 9, |x, y| {
            if (x, y) == (4, 4) {
                [0.8; 3]
            } else {
                [0.1; 3]
            }
        })
        .unwrap();
        let planes = normalized_log_planes(&img, 1e-4);
        let fast = log_of_gaussian(&planes, 0.5);
        let oracle = dense_log(&planes[0], 0.5);
        for (a, b) in fast[0].data.iter().zip(&oracle.data) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
        let center = fast[0].data[4 * 9 + 4];
        assert!(center < 0.0);

        // Corner spot exercises the replicated boundary.
        let corner = LinearImage::from_fn(6, 5, |x, y| if x + y == 0 { [0.9; 3] } else { [0.2; 3] }).unwrap();
        let planes = normalized_log_planes(&corner, 1e-4);
        let fast = log_of_gaussian(&planes, 0.8);
        let oracle = dense_log(&planes[1], 0.8);
        for (a, b) in fast[1].data.iter().zip(&oracle.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
