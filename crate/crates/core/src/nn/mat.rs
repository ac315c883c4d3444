//! Strided matrix views over row-major buffers and a gemm wrapper.

/// Read-only strided view of a matrix stored in a flat slice.
#[derive(Debug, Clone, Copy)]
pub(crate) struct View<'a> {
    data: &'a [f64],
    rows: usize,
    cols: usize,
    rs: usize,
    cs: usize,
}

impl<'a> View<'a> {
    pub(crate) fn new(data: &'a [f64], rows: usize, cols: usize) -> Self {
        View { data, rows, cols, rs: cols, cs: 1 }
    }

    /// Columns `start..start + n` of a row-major `rows × stride` matrix.
    pub(crate) fn cols_of(data: &'a [f64], rows: usize, stride: usize, start: usize, n: usize) -> Self {
        View { data: &data[start..], rows, cols: n, rs: stride, cs: 1 }
    }

    pub(crate) fn t(self) -> Self {
        View { data: self.data, rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs }
    }

    fn in_bounds(&self) -> bool {
        self.rows == 0 || self.cols == 0 || (self.rows - 1) * self.rs + (self.cols - 1) * self.cs < self.data.len()
    }
}

/// Strided mutable destination.
pub(crate) struct ViewMut<'a> {
    data: &'a mut [f64],
    rows: usize,
    cols: usize,
    rs: usize,
}

impl<'a> ViewMut<'a> {
    pub(crate) fn new(data: &'a mut [f64], rows: usize, cols: usize) -> Self {
        ViewMut { data, rows, cols, rs: cols }
    }

    pub(crate) fn cols_of(data: &'a mut [f64], rows: usize, stride: usize, start: usize, n: usize) -> Self {
        ViewMut { data: &mut data[start..], rows, cols: n, rs: stride }
    }
}

/// `c = alpha · a · b + beta · c`. With `beta == 0` the old contents of `c` are ignored.
pub(crate) fn gemm(alpha: f64, a: View<'_>, b: View<'_>, beta: f64, c: ViewMut<'_>) {
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert_eq!(k, b.rows, "inner dimensions");
    assert_eq!((m, n), (c.rows, c.cols), "output shape");
    assert!(a.in_bounds() && b.in_bounds(), "operand out of bounds");
    if m == 0 || n == 0 {
        return;
    }
    assert!((m - 1) * c.rs + n - 1 < c.data.len(), "output out of bounds");
    // SAFETY: every index touched is bounded by the asserts above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.data.as_mut_ptr(),
            c.rs as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn matches_naive_product_and_transposes() {
        let a: Vec<f64> = (0..6).map(|v| v as f64 - 2.0).collect(); // 2×3
        let b: Vec<f64> = (0..12).map(|v| (v as f64).sin()).collect(); // 3×4
        let mut c = vec![0.0; 8];
        gemm(1.0, View::new(&a, 2, 3), View::new(&b, 3, 4), 0.0, ViewMut::new(&mut c, 2, 4));
        let want = naive(&a, 2, 3, &b, 4);
        for (x, y) in c.iter().zip(&want) {
            assert!((x - y).abs() < 1e-14);
        }
        // (bᵀ aᵀ) = (a b)ᵀ
        let mut ct = vec![0.0; 8];
        gemm(1.0, View::new(&b, 3, 4).t(), View::new(&a, 2, 3).t(), 0.0, ViewMut::new(&mut ct, 4, 2));
        for i in 0..2 {
            for j in 0..4 {
                assert!((ct[j * 2 + i] - want[i * 4 + j]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn column_block_views() {
        // 2×5 matrix; take columns 1..3 and accumulate into columns 2..4 of another
        let w: Vec<f64> = (0..10).map(|v| v as f64).collect();
        let eye = [1.0, 0.0, 0.0, 1.0];
        let mut out = vec![1.0; 10];
        gemm(
            1.0,
            View::new(&eye, 2, 2),
            View::cols_of(&w, 2, 5, 1, 2),
            1.0,
            ViewMut::cols_of(&mut out, 2, 5, 2, 2),
        );
        assert_eq!(out, vec![1.0, 1.0, 2.0, 3.0, 1.0, 1.0, 1.0, 7.0, 8.0, 1.0]);
    }
}
