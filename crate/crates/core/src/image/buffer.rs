use std::path::{Path, PathBuf};

use ::image::{DynamicImage, GrayImage, Luma};

use crate::error::{Error, Result};

/// Row-major grayscale image with floating intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
    pub timestamp: f64,
    pub index: usize,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self { width, height, data: vec![value; width * height], timestamp: 0.0, index: 0 }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data, timestamp: 0.0, index: 0 }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage("dimensions must be positive".into()));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!("expected {} samples, got {}", width * height, data.len())));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidImage("non-finite intensity".into()));
        }
        Ok(Self { width, height, data, timestamp: 0.0, index: 0 })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn at_clamped(&self, x: isize, y: isize) -> f64 {
        let x = x.clamp(0, self.width as isize - 1) as usize;
        let y = y.clamp(0, self.height as isize - 1) as usize;
        self.at(x, y)
    }

    /// Bilinear sample with clamp-to-edge outside the image.
    #[inline]
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let (xi, yi) = (x0 as isize, y0 as isize);
        let a = self.at_clamped(xi, yi);
        let b = self.at_clamped(xi + 1, yi);
        let c = self.at_clamped(xi, yi + 1);
        let d = self.at_clamped(xi + 1, yi + 1);
        (a * (1.0 - fx) + b * fx) * (1.0 - fy) + (c * (1.0 - fx) + d * fx) * fy
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => Self::from_gray8(g),
            _ => {
                let rgb = img.to_rgb8();
                let data = rgb
                    .pixels()
                    .map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64)
                    .collect();
                Self { width: rgb.width() as usize, height: rgb.height() as usize, data, timestamp: 0.0, index: 0 }
            }
        }
    }

    pub fn from_gray8(g: &GrayImage) -> Self {
        Self {
            width: g.width() as usize,
            height: g.height() as usize,
            data: g.pixels().map(|p| p[0] as f64).collect(),
            timestamp: 0.0,
            index: 0,
        }
    }

    pub fn to_gray8(&self) -> GrayImage {
        GrayImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            Luma([self.at(x as usize, y as usize).round().clamp(0.0, 255.0) as u8])
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = ::image::open(path)?;
        Ok(Self::from_dynamic(&img))
    }

    /// Writes 8-bit PGM or PNG depending on the extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_gray8().save(path)?;
        Ok(())
    }
}

/// Image files (`.pgm`, `.png`) in a directory, sorted by file name.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::Path { path: dir.into(), message: "not a directory".into() });
    }
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_is_exact_on_planes() {
        let img = ImageBuffer::from_fn(8, 8, |x, y| 3.0 * x as f64 - 2.0 * y as f64 + 7.0);
        let v = img.sample(2.25, 4.75);
        assert!((v - (3.0 * 2.25 - 2.0 * 4.75 + 7.0)).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(ImageBuffer::from_vec(0, 3, vec![]).is_err());
        assert!(ImageBuffer::from_vec(2, 2, vec![0.0; 3]).is_err());
        assert!(ImageBuffer::from_vec(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn rgb_uses_luminance_weights() {
        let rgb = ::image::RgbImage::from_pixel(2, 1, ::image::Rgb([100, 200, 50]));
        let img = ImageBuffer::from_dynamic(&DynamicImage::ImageRgb8(rgb));
        assert!((img.at(0, 0) - (29.9 + 117.4 + 5.7)).abs() < 1e-9);
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageBuffer::from_fn(5, 4, |x, y| (x * 40 + y) as f64);
        let p = dir.path().join("f0001.pgm");
        img.save(&p).unwrap();
        assert_eq!(ImageBuffer::load(&p).unwrap().data, img.data);
        assert_eq!(list_frames(dir.path()).unwrap(), vec![p]);
    }
}
