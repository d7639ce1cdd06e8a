//! Matrix products behind convolution and dense layers.

use std::fmt;
use std::str::FromStr;

use crate::error::Error;

/// Arithmetic precision used for the matrix products inside convolution and
/// dense layers. Tensors themselves are always stored as `f64`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Precision {
    #[default]
    F64,
    F32,
}

impl FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f64" | "double" => Ok(Precision::F64),
            "f32" | "single" => Ok(Precision::F32),
            _ => Err(Error::UnknownKind {
                what: "precision",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Precision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Precision::F64 => "f64",
            Precision::F32 => "f32",
        })
    }
}

/// Strided view of a matrix stored in a slice.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f64],
    pub row_stride: usize,
    pub col_stride: usize,
}

impl<'a> Mat<'a> {
    /// Row-major matrix with `cols` columns.
    pub fn rows(data: &'a [f64], cols: usize) -> Self {
        Mat {
            data,
            row_stride: cols,
            col_stride: 1,
        }
    }

    /// Transpose of a row-major matrix with `cols` columns.
    pub fn rows_t(data: &'a [f64], cols: usize) -> Self {
        Mat {
            data,
            row_stride: 1,
            col_stride: cols,
        }
    }
}

/// `c[m x n] (+)= a[m x k] * b[k x n]`, with `c` row-major.
pub(crate) fn gemm(
    precision: Precision,
    m: usize,
    k: usize,
    n: usize,
    a: Mat<'_>,
    b: Mat<'_>,
    c: &mut [f64],
    accumulate: bool,
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            c[..m * n].fill(0.0);
        }
        return;
    }
    check_extent(&a, m, k);
    check_extent(&b, k, n);
    match precision {
        Precision::F64 => {
            let beta = if accumulate { 1.0 } else { 0.0 };
            // SAFETY: extents were checked above against the slice lengths, and
            // `c` holds at least m*n elements laid out row-major.
            unsafe {
                matrixmultiply::dgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a.data.as_ptr(),
                    a.row_stride as isize,
                    a.col_stride as isize,
                    b.data.as_ptr(),
                    b.row_stride as isize,
                    b.col_stride as isize,
                    beta,
                    c.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
        }
        Precision::F32 => {
            let a32: Vec<f32> = a.data.iter().map(|&v| v as f32).collect();
            let b32: Vec<f32> = b.data.iter().map(|&v| v as f32).collect();
            let mut c32 = vec![0.0f32; m * n];
            // SAFETY: same layout as the f64 buffers, checked above.
            unsafe {
                matrixmultiply::sgemm(
                    m,
                    k,
                    n,
                    1.0,
                    a32.as_ptr(),
                    a.row_stride as isize,
                    a.col_stride as isize,
                    b32.as_ptr(),
                    b.row_stride as isize,
                    b.col_stride as isize,
                    0.0,
                    c32.as_mut_ptr(),
                    n as isize,
                    1,
                );
            }
            if accumulate {
                for (dst, src) in c.iter_mut().zip(&c32) {
                    *dst += f64::from(*src);
                }
            } else {
                for (dst, src) in c.iter_mut().zip(&c32) {
                    *dst = f64::from(*src);
                }
            }
        }
    }
}

fn check_extent(m: &Mat<'_>, rows: usize, cols: usize) {
    let last = (rows - 1) * m.row_stride + (cols - 1) * m.col_stride;
    assert!(last < m.data.len(), "gemm operand out of bounds");
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(m: usize, k: usize, n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
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
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f64> = (0..m * k).map(|i| (i as f64 * 0.37).sin()).collect();
        let b: Vec<f64> = (0..k * n).map(|i| (i as f64 * 0.11).cos()).collect();
        let expect = naive(m, k, n, &a, &b);
        let mut c = vec![0.0; m * n];
        gemm(Precision::F64, m, k, n, Mat::rows(&a, k), Mat::rows(&b, n), &mut c, false);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-14);
        }
        // b^T stored as [n x k]; view it transposed.
        let mut bt = vec![0.0; k * n];
        for p in 0..k {
            for j in 0..n {
                bt[j * k + p] = b[p * n + j];
            }
        }
        gemm(Precision::F64, m, k, n, Mat::rows(&a, k), Mat::rows_t(&bt, k), &mut c, true);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - 2.0 * y).abs() < 1e-13);
        }
        let mut c32 = vec![0.0; m * n];
        gemm(Precision::F32, m, k, n, Mat::rows(&a, k), Mat::rows(&b, n), &mut c32, false);
        for (x, y) in c32.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-5);
        }
    }
}
