use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};

/// Dense third-order tensor stored row-major: `(i, j, k)` lives at
/// `(i * J + j) * K + k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseTensor3 {
    dims: (usize, usize, usize),
    values: Vec<f64>,
}

impl DenseTensor3 {
    pub fn zeros(i: usize, j: usize, k: usize) -> Self {
        DenseTensor3 {
            dims: (i, j, k),
            values: vec![0.0; i * j * k],
        }
    }

    pub fn from_fn(i: usize, j: usize, k: usize, mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(i * j * k);
        for a in 0..i {
            for b in 0..j {
                for c in 0..k {
                    values.push(f(a, b, c));
                }
            }
        }
        DenseTensor3 { dims: (i, j, k), values }
    }

    pub fn from_values(dims: (usize, usize, usize), values: Vec<f64>) -> Result<Self> {
        if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 {
            return Err(FitError::InvalidArgument(format!("tensor dimensions {dims:?} must be positive")));
        }
        if values.len() != dims.0 * dims.1 * dims.2 {
            return Err(FitError::dims(format!(
                "{} values for a {dims:?} tensor",
                values.len()
            )));
        }
        Ok(DenseTensor3 { dims, values })
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims.1 + j) * self.dims.2 + k
    }

    pub fn get(&self, i: usize, j: usize, k: usize) -> f64 {
        self.values[self.offset(i, j, k)]
    }

    pub fn get_mut(&mut self, i: usize, j: usize, k: usize) -> &mut f64 {
        let o = self.offset(i, j, k);
        &mut self.values[o]
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Mode-n unfolding with the remaining indices ordered first-fastest:
    /// mode 0 gives `I × JK` with column `j + k·J`, mode 1 gives `J × IK`
    /// with column `i + k·I`, mode 2 gives `K × IJ` with column `i + j·I`.
    pub fn unfold(&self, mode: usize) -> DMatrix<f64> {
        let (i, j, k) = self.dims;
        match mode {
            0 => DMatrix::from_fn(i, j * k, |r, c| self.get(r, c % j, c / j)),
            1 => DMatrix::from_fn(j, i * k, |r, c| self.get(c % i, r, c / i)),
            _ => DMatrix::from_fn(k, i * j, |r, c| self.get(c % i, c / i, r)),
        }
    }

    /// Multiplies along `mode` by `m` (`P × dim`), replacing that dimension with `P`.
    pub fn mode_product(&self, mode: usize, m: &DMatrix<f64>) -> Result<DenseTensor3> {
        let (i, j, k) = self.dims;
        let dim = [i, j, k][mode];
        if m.ncols() != dim {
            return Err(FitError::dims(format!(
                "mode-{mode} product with a {}x{} matrix on dimension {dim}",
                m.nrows(),
                m.ncols()
            )));
        }
        let p = m.nrows();
        let out = match mode {
            0 => DenseTensor3::from_fn(p, j, k, |a, b, c| (0..i).map(|d| m[(a, d)] * self.get(d, b, c)).sum()),
            1 => DenseTensor3::from_fn(i, p, k, |a, b, c| (0..j).map(|d| m[(b, d)] * self.get(a, d, c)).sum()),
            _ => DenseTensor3::from_fn(i, j, p, |a, b, c| (0..k).map(|d| m[(c, d)] * self.get(a, b, d)).sum()),
        };
        Ok(out)
    }
}
