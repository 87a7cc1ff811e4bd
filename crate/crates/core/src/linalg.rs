//! Dense row-major matrices and the elementwise pieces shared by every layer.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} values cannot fill a {}x{} matrix",
                data.len(),
                rows,
                cols
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("matrix entry {}", bad)));
        }
        Ok(Matrix { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    /// `out = self * x + bias`.
    pub fn affine(&self, x: &[f64], bias: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(bias.len(), self.rows);
        (0..self.rows)
            .map(|r| bias[r] + dot(self.row(r), x))
            .collect()
    }

    /// `out += self^T * upstream`.
    pub fn add_transpose_product(&self, upstream: &[f64], out: &mut [f64]) {
        debug_assert_eq!(upstream.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &u) in upstream.iter().enumerate() {
            if u == 0.0 {
                continue;
            }
            axpy(u, self.row(r), out);
        }
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Glorot/Xavier uniform initialization on `[-sqrt(6/(rows+cols)), +sqrt(6/(rows+cols))]`.
pub fn xavier_init<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::Dimension(format!(
            "cannot initialize a {}x{} matrix",
            rows, cols
        )));
    }
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.gen_range(-bound..=bound))
        .collect();
    Ok(Matrix { rows, cols, data })
}

pub fn tanh_forward(x: &[f64]) -> Vec<f64> {
    x.iter().map(|v| v.tanh()).collect()
}

/// Backward through `y = tanh(x)` given the forward output `y`: `upstream * (1 - y^2)`.
pub fn tanh_backward(y: &[f64], upstream: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(upstream)
        .map(|(y, g)| g * (1.0 - y * y))
        .collect()
}

pub fn check_finite(what: &str, values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::Numeric(format!("{} entry {} is {}", what, i, values[i]))),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn xavier_single_entry_within_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = xavier_init(1, 1, &mut rng).unwrap();
        assert!(m.get(0, 0).abs() <= 3f64.sqrt());
    }

    #[test]
    fn xavier_mean_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = xavier_init(100, 100, &mut rng).unwrap();
        let bound = (6.0f64 / 200.0).sqrt();
        assert!(m.as_slice().iter().all(|v| v.abs() <= bound));
        let mean = m.as_slice().iter().sum::<f64>() / 1e4;
        assert!(mean.abs() < 0.02, "mean {}", mean);
    }

    #[test]
    fn xavier_is_deterministic() {
        let a = xavier_init(7, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = xavier_init(7, 4, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn xavier_rejects_zero_dims() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(xavier_init(0, 3, &mut rng), Err(Error::Dimension(_))));
        assert!(matches!(xavier_init(3, 0, &mut rng), Err(Error::Dimension(_))));
    }

    #[test]
    fn tanh_values() {
        assert_eq!(tanh_forward(&[0.0]), vec![0.0]);
        let big = tanh_forward(&[40.0])[0];
        assert!(big > 1.0 - 1e-6 && big <= 1.0);
        assert_eq!(tanh_backward(&[0.0], &[1.0]), vec![1.0]);
    }

    #[test]
    fn tanh_gradient_matches_central_difference() {
        let h = 1e-5;
        for &x in &[-2.0f64, -0.7, 0.0, 0.3, 1.1, 2.5] {
            let y = x.tanh();
            let analytic = tanh_backward(&[y], &[1.0])[0];
            let numeric = ((x + h).tanh() - (x - h).tanh()) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
            assert!(rel < 1e-6, "x={} rel={}", x, rel);
        }
    }

    #[test]
    fn from_vec_validates() {
        assert!(Matrix::from_vec(2, 2, vec![1.0; 3]).is_err());
        assert!(matches!(
            Matrix::from_vec(1, 2, vec![1.0, f64::NAN]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn affine_and_transpose_product_agree_with_transpose() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, -1.0, 0.5, 4.0]).unwrap();
        assert_eq!(m.affine(&[1.0, 1.0, 1.0], &[0.0, 1.0]), vec![6.0, 4.5]);
        let mut out = vec![0.0; 3];
        m.add_transpose_product(&[1.0, 2.0], &mut out);
        let t = m.transpose();
        assert_eq!(out, t.affine(&[1.0, 2.0], &[0.0; 3]));
    }
}
