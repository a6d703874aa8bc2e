use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::{ImageBuffer, Pyramid};

/// Side of the structure-tensor window.
pub const TENSOR_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum ScoreThreshold {
    Absolute(f64),
    /// Fraction of the largest score in the image.
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorParams {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub max_per_cell: usize,
    pub min_score: ScoreThreshold,
    pub min_distance: f64,
    /// No keypoint closer than this to the border (≥ patch half-width).
    pub border: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        Self {
            grid_rows: 10,
            grid_cols: 10,
            max_per_cell: 3,
            min_score: ScoreThreshold::Relative(1e-3),
            min_distance: 8.0,
            border: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub position: Vector2<f64>,
    pub score: f64,
    pub cell: usize,
}

/// Minimum eigenvalue of `[[a, b], [b, c]]`.
#[inline]
pub fn min_eigenvalue(a: f64, b: f64, c: f64) -> f64 {
    0.5 * ((a + c) - ((a - c) * (a - c) + 4.0 * b * b).sqrt())
}

/// Sobel derivatives scaled so that a unit ramp has gradient 1.
pub fn sobel(img: &ImageBuffer) -> (ImageBuffer, ImageBuffer) {
    let (w, h) = (img.width, img.height);
    let mut gx = ImageBuffer::new(w, h);
    let mut gy = ImageBuffer::new(w, h);
    for y in 0..h as isize {
        for x in 0..w as isize {
            let p = |dx: isize, dy: isize| img.at_clamped(x + dx, y + dy);
            let dx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let dy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            gx.set(x as usize, y as usize, dx / 8.0);
            gy.set(x as usize, y as usize, dy / 8.0);
        }
    }
    (gx, gy)
}

/// Per-pixel Shi-Tomasi score: smallest eigenvalue of the structure tensor
/// averaged over a `TENSOR_WINDOW²` neighbourhood. Pixels whose window leaves
/// the image score zero.
pub fn shi_tomasi_scores(img: &ImageBuffer) -> ImageBuffer {
    let (w, h) = (img.width, img.height);
    let (gx, gy) = sobel(img);
    let r = TENSOR_WINDOW / 2;
    let n = (TENSOR_WINDOW * TENSOR_WINDOW) as f64;
    let mut out = ImageBuffer::new(w, h);
    if w <= 2 * r + 2 || h <= 2 * r + 2 {
        return out;
    }
    // separable box sums of the three tensor products
    let prods: [Vec<f64>; 3] = [
        gx.data.iter().map(|v| v * v).collect(),
        gx.data.iter().zip(&gy.data).map(|(a, b)| a * b).collect(),
        gy.data.iter().map(|v| v * v).collect(),
    ];
    let mut sums = [vec![0.0; w * h], vec![0.0; w * h], vec![0.0; w * h]];
    for (p, s) in prods.iter().zip(sums.iter_mut()) {
        let mut row = vec![0.0; w * h];
        for y in 0..h {
            for x in r..w - r {
                row[y * w + x] = p[y * w + x - r..=y * w + x + r].iter().sum();
            }
        }
        for y in r..h - r {
            for x in r..w - r {
                s[y * w + x] = (y - r..=y + r).map(|yy| row[yy * w + x]).sum();
            }
        }
    }
    // Sobel at the outermost row is clamped; keep the window one pixel further in.
    for y in r + 1..h - r - 1 {
        for x in r + 1..w - r - 1 {
            let i = y * w + x;
            out.data[i] = min_eigenvalue(sums[0][i] / n, sums[1][i] / n, sums[2][i] / n).max(0.0);
        }
    }
    out
}

/// Grid-distributed Shi-Tomasi corners on pyramid level 0.
///
/// Candidates are 3×3 local maxima above the score threshold. They are taken
/// greedily in descending score order, skipping any that would exceed the
/// per-cell quota or fall within `min_distance` of an accepted corner. The
/// result is ordered by `(cell, descending score)`.
pub fn detect_shi_tomasi(pyramid: &Pyramid, params: &DetectorParams) -> Vec<Keypoint> {
    let img = pyramid.base();
    let scores = shi_tomasi_scores(img);
    let (w, h) = (img.width, img.height);
    let max_score = scores.data.iter().cloned().fold(0.0, f64::max);
    if max_score <= 0.0 {
        return Vec::new();
    }
    let threshold = match params.min_score {
        ScoreThreshold::Absolute(t) => t,
        ScoreThreshold::Relative(f) => f * max_score,
    }
    .max(f64::MIN_POSITIVE);

    let border = params.border.max(TENSOR_WINDOW / 2 + 1);
    let mut candidates = Vec::new();
    for y in border..h.saturating_sub(border) {
        for x in border..w.saturating_sub(border) {
            let s = scores.at(x, y);
            if s < threshold {
                continue;
            }
            let mut is_max = true;
            'nbr: for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if dx == 0 && dy == 0 {
                        continue;
                    }
                    let o = scores.at_clamped(x as isize + dx, y as isize + dy);
                    // ties broken towards the earlier raster position
                    let earlier = dy < 0 || (dy == 0 && dx < 0);
                    if o > s || (o == s && earlier) {
                        is_max = false;
                        break 'nbr;
                    }
                }
            }
            if is_max {
                candidates.push((s, x, y));
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.2.cmp(&b.2)).then(a.1.cmp(&b.1)));

    let rows = params.grid_rows.max(1);
    let cols = params.grid_cols.max(1);
    let mut per_cell = vec![0usize; rows * cols];
    let min_d2 = params.min_distance * params.min_distance;
    let mut accepted: Vec<Keypoint> = Vec::new();
    for (s, x, y) in candidates {
        let cell = (y * rows / h).min(rows - 1) * cols + (x * cols / w).min(cols - 1);
        if per_cell[cell] >= params.max_per_cell {
            continue;
        }
        let pos = Vector2::new(x as f64, y as f64);
        if accepted.iter().any(|k| (k.position - pos).norm_squared() < min_d2) {
            continue;
        }
        per_cell[cell] += 1;
        accepted.push(Keypoint { position: pos, score: s, cell });
    }
    accepted.sort_by(|a, b| a.cell.cmp(&b.cell).then(b.score.total_cmp(&a.score)));
    accepted
}
