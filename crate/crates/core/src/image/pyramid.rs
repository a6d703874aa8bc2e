use crate::error::{Error, Result};

use super::ImageBuffer;

/// Smallest side a pyramid level may have; one tracking patch must fit.
pub const MIN_LEVEL_SIDE: usize = 11;

const BINOMIAL5: [f64; 5] = [1.0 / 16.0, 4.0 / 16.0, 6.0 / 16.0, 4.0 / 16.0, 1.0 / 16.0];

#[derive(Debug, Clone)]
pub struct PyramidLevel {
    pub image: ImageBuffer,
    pub grad_x: ImageBuffer,
    pub grad_y: ImageBuffer,
}

/// Level 0 is full resolution; each further level halves both sides
/// (`ceil`) after a 5-tap binomial blur.
#[derive(Debug, Clone)]
pub struct Pyramid {
    pub levels: Vec<PyramidLevel>,
}

impl Pyramid {
    pub fn build(image: &ImageBuffer, levels: usize) -> Result<Self> {
        Self::build_with_min_side(image, levels, MIN_LEVEL_SIDE)
    }

    pub fn build_with_min_side(image: &ImageBuffer, levels: usize, min_side: usize) -> Result<Self> {
        let too_small = || Error::ImageTooSmall { width: image.width, height: image.height, levels };
        if levels == 0 {
            return Err(too_small());
        }
        let (w, h) = level_dims(image.width, image.height, levels - 1);
        if w < min_side || h < min_side {
            return Err(too_small());
        }
        let mut out = Vec::with_capacity(levels);
        let mut current = image.clone();
        for l in 0..levels {
            if l > 0 {
                current = downsample(&current);
            }
            let (grad_x, grad_y) = central_gradients(&current);
            out.push(PyramidLevel { image: current.clone(), grad_x, grad_y });
        }
        Ok(Self { levels: out })
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn base(&self) -> &ImageBuffer {
        &self.levels[0].image
    }
}

pub fn level_dims(width: usize, height: usize, level: usize) -> (usize, usize) {
    let s = 1usize << level;
    (width.div_ceil(s), height.div_ceil(s))
}

fn downsample(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width, img.height);
    // horizontal pass evaluated only on even columns
    let nw = w.div_ceil(2);
    let nh = h.div_ceil(2);
    let mut tmp = vec![0.0; nw * h];
    for y in 0..h {
        for nx in 0..nw {
            let x = (2 * nx) as isize;
            let mut acc = 0.0;
            for (k, c) in BINOMIAL5.iter().enumerate() {
                acc += c * img.at_clamped(x + k as isize - 2, y as isize);
            }
            tmp[y * nw + nx] = acc;
        }
    }
    let mut out = ImageBuffer::new(nw, nh);
    for ny in 0..nh {
        let y = (2 * ny) as isize;
        for nx in 0..nw {
            let mut acc = 0.0;
            for (k, c) in BINOMIAL5.iter().enumerate() {
                let yy = (y + k as isize - 2).clamp(0, h as isize - 1) as usize;
                acc += c * tmp[yy * nw + nx];
            }
            out.set(nx, ny, acc);
        }
    }
    out.timestamp = img.timestamp;
    out.index = img.index;
    out
}

fn central_gradients(img: &ImageBuffer) -> (ImageBuffer, ImageBuffer) {
    let (w, h) = (img.width, img.height);
    let mut gx = ImageBuffer::new(w, h);
    let mut gy = ImageBuffer::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let dx = (xr - xl).max(1) as f64;
            let dy = (yd - yu).max(1) as f64;
            gx.set(x, y, if w > 1 { (img.at(xr, y) - img.at(xl, y)) / dx } else { 0.0 });
            gy.set(x, y, if h > 1 { (img.at(x, yd) - img.at(x, yu)) / dy } else { 0.0 });
        }
    }
    (gx, gy)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_image_stays_constant() {
        let img = ImageBuffer::filled(64, 48, 77.0);
        let pyr = Pyramid::build(&img, 3).unwrap();
        for lvl in &pyr.levels {
            assert!(lvl.image.data.iter().all(|v| (v - 77.0).abs() < 1e-12));
            assert!(lvl.grad_x.data.iter().chain(&lvl.grad_y.data).all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn level_dimensions() {
        let pyr = Pyramid::build(&ImageBuffer::new(640, 480), 4).unwrap();
        let dims: Vec<_> = pyr.levels.iter().map(|l| (l.image.width, l.image.height)).collect();
        assert_eq!(dims, vec![(640, 480), (320, 240), (160, 120), (80, 60)]);
        let pyr = Pyramid::build(&ImageBuffer::new(101, 57), 3).unwrap();
        assert_eq!((pyr.levels[2].image.width, pyr.levels[2].image.height), (26, 15));
        assert_eq!(pyr.levels[2].grad_x.width, 26);
    }

    #[test]
    fn ramp_gradient_is_one() {
        let img = ImageBuffer::from_fn(40, 30, |x, _| x as f64);
        let pyr = Pyramid::build(&img, 2).unwrap();
        for y in 0..30 {
            for x in 1..39 {
                assert!((pyr.levels[0].grad_x.at(x, y) - 1.0).abs() < 1e-12);
                assert!(pyr.levels[0].grad_y.at(x, y).abs() < 1e-12);
            }
        }
        // a ramp halves into a ramp with slope 2 per coarse pixel
        assert!((pyr.levels[1].grad_x.at(10, 7) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn too_small_for_levels() {
        assert!(matches!(Pyramid::build(&ImageBuffer::new(64, 64), 4), Err(Error::ImageTooSmall { .. })));
        assert!(Pyramid::build(&ImageBuffer::new(64, 64), 0).is_err());
    }
}
