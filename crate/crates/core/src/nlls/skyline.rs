//! Symmetric positive-definite envelope (skyline) storage and Cholesky.
//!
//! Only the lower triangle is stored: row `i` holds columns
//! `first[i]..=i` contiguously.

#[derive(Debug, Clone)]
pub struct Skyline {
    first: Vec<usize>,
    row_ptr: Vec<usize>,
    values: Vec<f64>,
}

impl Skyline {
    pub fn new(first: Vec<usize>) -> Self {
        let mut row_ptr = Vec::with_capacity(first.len() + 1);
        row_ptr.push(0);
        for (i, f) in first.iter().enumerate() {
            assert!(*f <= i, "envelope start beyond diagonal");
            row_ptr.push(row_ptr[i] + i - f + 1);
        }
        let nnz = *row_ptr.last().unwrap();
        Self { first, row_ptr, values: vec![0.0; nnz] }
    }

    pub fn dim(&self) -> usize {
        self.first.len()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn clear(&mut self) {
        self.values.iter_mut().for_each(|v| *v = 0.0);
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && j >= self.first[i], "({i},{j}) outside envelope");
        self.row_ptr[i] + j - self.first[i]
    }

    /// Adds to the lower-triangle entry `(i, j)`, `j ≤ i`.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.index(i, j);
        self.values[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if j < self.first[i] {
            0.0
        } else {
            self.values[self.index(i, j)]
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim()).map(|i| self.values[self.index(i, i)]).collect()
    }

    pub fn add_diagonal(&mut self, d: &[f64]) {
        for (i, v) in d.iter().enumerate() {
            let k = self.index(i, i);
            self.values[k] += v;
        }
    }

    /// `A x` for the full symmetric matrix.
    pub fn sym_matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.dim()];
        for i in 0..self.dim() {
            let fi = self.first[i];
            let pi = self.row_ptr[i];
            for j in fi..i {
                let a = self.values[pi + j - fi];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += self.values[pi + i - fi] * x[i];
        }
        y
    }

    /// In-place Cholesky `A = L Lᵀ`; returns `None` on a non-positive pivot.
    pub fn factorize(mut self) -> Option<SkylineCholesky> {
        let n = self.dim();
        for i in 0..n {
            let fi = self.first[i];
            let pi = self.row_ptr[i];
            for j in fi..i {
                let fj = self.first[j];
                let pj = self.row_ptr[j];
                let k0 = fi.max(fj);
                let mut s = self.values[pi + j - fi];
                let a = &self.values[pi + k0 - fi..pi + j - fi];
                let b = &self.values[pj + k0 - fj..pj + j - fj];
                s -= a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                self.values[pi + j - fi] = s / self.values[pj + j - fj];
            }
            let row = &self.values[pi..pi + i - fi];
            let d = self.values[pi + i - fi] - row.iter().map(|v| v * v).sum::<f64>();
            if !(d > 0.0) || !d.is_finite() {
                return None;
            }
            self.values[pi + i - fi] = d.sqrt();
        }
        Some(SkylineCholesky { l: self })
    }
}

pub struct SkylineCholesky {
    l: Skyline,
}

impl SkylineCholesky {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let n = l.dim();
        let mut y = b.to_vec();
        for i in 0..n {
            let fi = l.first[i];
            let pi = l.row_ptr[i];
            let mut s = y[i];
            for j in fi..i {
                s -= l.values[pi + j - fi] * y[j];
            }
            y[i] = s / l.values[pi + i - fi];
        }
        for i in (0..n).rev() {
            let fi = l.first[i];
            let pi = l.row_ptr[i];
            y[i] /= l.values[pi + i - fi];
            let yi = y[i];
            for j in fi..i {
                y[j] -= l.values[pi + j - fi] * yi;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn matches_dense_solve_on_banded_matrix() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 40;
        let band = 5;
        let mut dense = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            for j in i.saturating_sub(band)..i {
                let v: f64 = rng.random_range(-1.0..1.0);
                dense[(i, j)] = v;
                dense[(j, i)] = v;
            }
            dense[(i, i)] = 12.0;
        }
        // a dense last row/column, like a pose block
        for j in 0..n - 1 {
            let v: f64 = rng.random_range(-0.2..0.2);
            dense[(n - 1, j)] = v;
            dense[(j, n - 1)] = v;
        }
        let first: Vec<usize> = (0..n).map(|i| if i == n - 1 { 0 } else { i.saturating_sub(band) }).collect();
        let mut sky = Skyline::new(first);
        for i in 0..n {
            for j in 0..=i {
                if dense[(i, j)] != 0.0 {
                    sky.add(i, j, dense[(i, j)]);
                }
            }
        }
        assert_eq!(sky.get(3, n - 1), dense[(n - 1, 3)]);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = sky.factorize().unwrap().solve(&b);
        let expect = dense.cholesky().unwrap().solve(&DVector::from_vec(b));
        for i in 0..n {
            assert!((x[i] - expect[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn indefinite_fails() {
        let mut sky = Skyline::new(vec![0, 0]);
        sky.add(0, 0, 1.0);
        sky.add(1, 0, 2.0);
        sky.add(1, 1, 1.0);
        assert!(sky.factorize().is_none());
    }
}
