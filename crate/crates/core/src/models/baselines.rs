//! Non-neural references: persistence and per-pixel linear regression.

use nalgebra::{DMatrix, DVector};

use super::Forecaster;
use crate::data::{latest_state_channels, Sample, INPUT_CHANNELS};
use crate::error::{Error, Result};
use crate::tensor::GridTensor;

/// Tikhonov term added to rank-deficient normal equations.
pub const RIDGE_LAMBDA: f64 = 1e-8;

/// Pivot ratio below which the normal matrix is treated as singular.
const RANK_TOLERANCE: f64 = 1e-12;

const OUTPUTS: usize = 3;

/// Tomorrow equals today: returns the latest input day's (u, v, A).
#[derive(Clone, Copy, Debug, Default)]
pub struct Persistence;

impl Forecaster for Persistence {
    fn name(&self) -> String {
        "persistence".into()
    }

    fn predict(&self, input: &GridTensor) -> Result<GridTensor> {
        let [b, c, h, w] = input.shape();
        if c != INPUT_CHANNELS {
            return Err(Error::Shape {
                op: "persistence",
                dim: "input channels",
                expected: INPUT_CHANNELS,
                got: c,
            });
        }
        let mut out = GridTensor::zeros([b, OUTPUTS, h, w]);
        for bi in 0..b {
            for (o, &ch) in latest_state_channels().iter().enumerate() {
                out.plane_mut(bi, o).copy_from_slice(input.plane(bi, ch));
            }
        }
        Ok(out)
    }
}

/// Independent least-squares fit per pixel and per output:
/// `y(i, j) = sum_k a_k(i, j) x_k(i, j)` over the 20 input channels.
#[derive(Clone, Debug, PartialEq)]
pub struct LinRegModel {
    height: usize,
    width: usize,
    /// `[pixel][output][channel]`.
    coeffs: Vec<f64>,
    fitted: Vec<bool>,
    ridge_pixels: usize,
}

impl LinRegModel {
    /// Builds a model from explicit coefficients laid out
    /// `[pixel][output][channel]`.
    pub fn from_coefficients(height: usize, width: usize, coeffs: Vec<f64>, fitted: Vec<bool>) -> Result<Self> {
        let hw = height * width;
        if coeffs.len() != hw * OUTPUTS * INPUT_CHANNELS || fitted.len() != hw {
            return Err(Error::Shape {
                op: "LinRegModel::from_coefficients",
                dim: "coefficients",
                expected: hw * OUTPUTS * INPUT_CHANNELS,
                got: coeffs.len(),
            });
        }
        Ok(LinRegModel {
            height,
            width,
            coeffs,
            fitted,
            ridge_pixels: 0,
        })
    }

    /// Fits on the valid pixels of `samples`. A pixel needs at least as many
    /// valid samples as there are input channels, otherwise it stays unfit.
    pub fn fit<'a>(samples: impl IntoIterator<Item = &'a Sample>) -> Result<Self> {
        let samples: Vec<&Sample> = samples.into_iter().collect();
        let first = samples
            .first()
            .ok_or_else(|| Error::InvalidParameter("linreg needs at least one sample".into()))?;
        let [_, _, h, w] = first.input.shape();
        let hw = h * w;
        let n = INPUT_CHANNELS;
        let mut xtx = vec![0.0; hw * n * n];
        let mut xty = vec![0.0; hw * n * OUTPUTS];
        let mut counts = vec![0usize; hw];
        let mut x = vec![0.0; n];
        for s in &samples {
            if s.input.shape() != [1, n, h, w] || s.target.shape() != [1, OUTPUTS, h, w] {
                return Err(Error::Shape {
                    op: "linreg_fit",
                    dim: "sample grid",
                    expected: hw,
                    got: s.input.height() * s.input.width(),
                });
            }
            let (inp, tgt, mask) = (s.input.data(), s.target.data(), s.mask.data());
            for p in 0..hw {
                if mask[p] <= 0.0 {
                    continue;
                }
                counts[p] += 1;
                for (k, xk) in x.iter_mut().enumerate() {
                    *xk = inp[k * hw + p];
                }
                let a = &mut xtx[p * n * n..(p + 1) * n * n];
                for i in 0..n {
                    for j in i..n {
                        a[i * n + j] += x[i] * x[j];
                    }
                }
                let b = &mut xty[p * n * OUTPUTS..(p + 1) * n * OUTPUTS];
                for o in 0..OUTPUTS {
                    let y = tgt[o * hw + p];
                    for k in 0..n {
                        b[o * n + k] += x[k] * y;
                    }
                }
            }
        }

        let mut coeffs = vec![0.0; hw * OUTPUTS * n];
        let mut fitted = vec![false; hw];
        let mut ridge_pixels = 0;
        for p in 0..hw {
            if counts[p] < n {
                continue;
            }
            let a = &xtx[p * n * n..(p + 1) * n * n];
            let m = DMatrix::from_fn(n, n, |i, j| a[i.min(j) * n + i.max(j)]);
            let (chol, ridged) = factor(m);
            ridge_pixels += usize::from(ridged);
            let b = &xty[p * n * OUTPUTS..(p + 1) * n * OUTPUTS];
            for o in 0..OUTPUTS {
                let rhs = DVector::from_column_slice(&b[o * n..(o + 1) * n]);
                let sol = chol.solve(&rhs);
                coeffs[(p * OUTPUTS + o) * n..(p * OUTPUTS + o + 1) * n].copy_from_slice(sol.as_slice());
            }
            fitted[p] = true;
        }
        Ok(LinRegModel {
            height: h,
            width: w,
            coeffs,
            fitted,
            ridge_pixels,
        })
    }

    /// Coefficients of `output` (0 = u, 1 = v, 2 = A) at pixel `(y, x)`.
    pub fn coefficients(&self, y: usize, x: usize, output: usize) -> &[f64] {
        let p = y * self.width + x;
        &self.coeffs[(p * OUTPUTS + output) * INPUT_CHANNELS..(p * OUTPUTS + output + 1) * INPUT_CHANNELS]
    }

    pub fn is_fitted(&self, y: usize, x: usize) -> bool {
        self.fitted[y * self.width + x]
    }

    /// Pixels whose normal equations needed the ridge term.
    pub fn ridge_pixels(&self) -> usize {
        self.ridge_pixels
    }

    pub fn fitted_pixels(&self) -> usize {
        self.fitted.iter().filter(|&&f| f).count()
    }
}

/// Cholesky factor of `m`, falling back to `m + lambda I` when `m` is
/// singular to working precision.
fn factor(m: DMatrix<f64>) -> (nalgebra::Cholesky<f64, nalgebra::Dyn>, bool) {
    let n = m.nrows();
    let scale = (0..n).map(|i| m[(i, i)]).fold(0.0, f64::max);
    if let Some(c) = m.clone().cholesky() {
        let l = c.l_dirty();
        let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if min_pivot > RANK_TOLERANCE * scale {
            return (c, false);
        }
    }
    let ridged = m + DMatrix::identity(n, n) * RIDGE_LAMBDA;
    let c = ridged
        .cholesky()
        .expect("a positive semi-definite matrix plus a ridge term is positive definite");
    (c, true)
}

impl Forecaster for LinRegModel {
    fn name(&self) -> String {
        "linreg".into()
    }

    fn predict(&self, input: &GridTensor) -> Result<GridTensor> {
        let [b, c, h, w] = input.shape();
        if c != INPUT_CHANNELS || (h, w) != (self.height, self.width) {
            return Err(Error::Shape {
                op: "linreg_predict",
                dim: "input grid",
                expected: INPUT_CHANNELS * self.height * self.width,
                got: c * h * w,
            });
        }
        let hw = h * w;
        let mut out = GridTensor::zeros([b, OUTPUTS, h, w]);
        for bi in 0..b {
            let inp = &input.data()[bi * c * hw..(bi + 1) * c * hw];
            for p in (0..hw).filter(|&p| self.fitted[p]) {
                for o in 0..OUTPUTS {
                    let a = &self.coeffs[(p * OUTPUTS + o) * c..(p * OUTPUTS + o + 1) * c];
                    let y: f64 = a.iter().enumerate().map(|(k, ak)| ak * inp[k * hw + p]).sum();
                    out.data_mut()[((bi * OUTPUTS + o) * hw) + p] = y;
                }
            }
        }
        Ok(out)
    }

    fn output_mask(&self) -> Option<&[bool]> {
        Some(&self.fitted)
    }
}
