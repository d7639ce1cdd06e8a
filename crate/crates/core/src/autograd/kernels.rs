//! Numeric kernels for the layers with learnable weights. Convolutions are
//! lowered to matrix products through an im2col buffer, one batch item at a
//! time.

use super::gemm::{gemm, Mat, Precision};
use crate::tensor::GridTensor;

/// Unfolds one batch item into a `[ci*k*k, h*w]` row-major matrix with zero
/// padding `pad` on every side.
fn im2col(x: &GridTensor, b: usize, k: usize, pad: usize, cols: &mut [f64]) {
    let [_, ci, h, w] = x.shape();
    let hw = h * w;
    for c in 0..ci {
        let plane = x.plane(b, c);
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let dst = &mut cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize {
                        out_row.fill(0.0);
                        continue;
                    }
                    let src_row = &plane[sy as usize * w..(sy as usize + 1) * w];
                    let (lo, hi) = valid_span(kx, pad, w);
                    out_row[..lo].fill(0.0);
                    out_row[hi..].fill(0.0);
                    if lo == hi {
                        continue;
                    }
                    let shift = kx as isize - pad as isize;
                    out_row[lo..hi].copy_from_slice(
                        &src_row[(lo as isize + shift) as usize..(hi as isize + shift) as usize],
                    );
                }
            }
        }
    }
}

/// Output columns `x` whose source column `x + kx - pad` lies inside `0..w`.
#[inline]
fn valid_span(kx: usize, pad: usize, w: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx).min(w);
    let hi = (w + pad).saturating_sub(kx).min(w);
    (lo, hi.max(lo))
}

/// Adjoint of [`im2col`]: scatters-adds a column matrix back into batch item `b`.
fn col2im(cols: &[f64], k: usize, pad: usize, out: &mut GridTensor, b: usize) {
    let [_, ci, h, w] = out.shape();
    let hw = h * w;
    for c in 0..ci {
        let plane = out.plane_mut(b, c);
        for ky in 0..k {
            for kx in 0..k {
                let row = (c * k + ky) * k + kx;
                let src = &cols[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[sy as usize * w..(sy as usize + 1) * w];
                    let (lo, hi) = valid_span(kx, pad, w);
                    if lo == hi {
                        continue;
                    }
                    let shift = kx as isize - pad as isize;
                    let d = &mut dst_row[(lo as isize + shift) as usize..(hi as isize + shift) as usize];
                    for (o, &v) in d.iter_mut().zip(&src[y * w + lo..y * w + hi]) {
                        *o += v;
                    }
                }
            }
        }
    }
}

/// Same-size convolution: `kernel` is `[co, ci, k, k]`, padding `k / 2`.
pub(crate) fn conv2d_forward(
    precision: Precision,
    x: &GridTensor,
    kernel: &GridTensor,
    bias: Option<&GridTensor>,
) -> GridTensor {
    let [bsz, ci, h, w] = x.shape();
    let [co, _, k, _] = kernel.shape();
    let pad = k / 2;
    let hw = h * w;
    let rows = ci * k * k;
    let mut out = GridTensor::zeros([bsz, co, h, w]);
    let mut cols = vec![0.0; rows * hw];
    for b in 0..bsz {
        im2col(x, b, k, pad, &mut cols);
        let dst = &mut out.data_mut()[b * co * hw..(b + 1) * co * hw];
        gemm(
            precision,
            co,
            rows,
            hw,
            Mat::rows(kernel.data(), rows),
            Mat::rows(&cols, hw),
            dst,
            false,
        );
        if let Some(bias) = bias {
            for c in 0..co {
                let bv = bias.data()[c];
                dst[c * hw..(c + 1) * hw].iter_mut().for_each(|v| *v += bv);
            }
        }
    }
    out
}

/// Gradients of [`conv2d_forward`]. Returns `(dx, dkernel, dbias)`.
pub(crate) fn conv2d_backward(
    precision: Precision,
    x: &GridTensor,
    kernel: &GridTensor,
    grad_out: &GridTensor,
    need_x: bool,
    need_kernel: bool,
    need_bias: bool,
) -> (Option<GridTensor>, Option<GridTensor>, Option<GridTensor>) {
    let [bsz, ci, h, w] = x.shape();
    let [co, _, k, _] = kernel.shape();
    let pad = k / 2;
    let hw = h * w;
    let rows = ci * k * k;
    let mut dx = need_x.then(|| GridTensor::zeros(x.shape()));
    let mut dk = need_kernel.then(|| GridTensor::zeros(kernel.shape()));
    let mut cols = vec![0.0; rows * hw];
    let mut dcols = vec![0.0; if need_x { rows * hw } else { 0 }];
    for b in 0..bsz {
        let g = &grad_out.data()[b * co * hw..(b + 1) * co * hw];
        if let Some(dk) = dk.as_mut() {
            im2col(x, b, k, pad, &mut cols);
            gemm(
                precision,
                co,
                hw,
                rows,
                Mat::rows(g, hw),
                Mat::rows_t(&cols, hw),
                dk.data_mut(),
                true,
            );
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                precision,
                rows,
                co,
                hw,
                Mat::rows_t(kernel.data(), rows),
                Mat::rows(g, hw),
                &mut dcols,
                false,
            );
            col2im(&dcols, k, pad, dx, b);
        }
    }
    let db = need_bias.then(|| {
        let mut db = GridTensor::zeros([1, co, 1, 1]);
        for b in 0..bsz {
            for c in 0..co {
                db.data_mut()[c] += grad_out.plane(b, c).iter().sum::<f64>();
            }
        }
        db
    });
    (dx, dk, db)
}

/// 2x2 stride-2 transposed convolution: `kernel` is `[ci, co, 2, 2]`.
pub(crate) fn conv_t2d_forward(
    precision: Precision,
    x: &GridTensor,
    kernel: &GridTensor,
    bias: Option<&GridTensor>,
) -> GridTensor {
    let [bsz, ci, h, w] = x.shape();
    let co = kernel.shape()[1];
    let hw = h * w;
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = GridTensor::zeros([bsz, co, oh, ow]);
    let mut cols = vec![0.0; co * 4 * hw];
    for b in 0..bsz {
        let xb = &x.data()[b * ci * hw..(b + 1) * ci * hw];
        gemm(
            precision,
            co * 4,
            ci,
            hw,
            Mat::rows_t(kernel.data(), co * 4),
            Mat::rows(xb, hw),
            &mut cols,
            false,
        );
        for c in 0..co {
            let bv = bias.map_or(0.0, |t| t.data()[c]);
            let plane = out.plane_mut(b, c);
            for d in 0..4 {
                let (dy, dx) = (d / 2, d % 2);
                let src = &cols[(c * 4 + d) * hw..(c * 4 + d + 1) * hw];
                for y in 0..h {
                    for x in 0..w {
                        plane[(2 * y + dy) * ow + 2 * x + dx] = src[y * w + x] + bv;
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn conv_t2d_backward(
    precision: Precision,
    x: &GridTensor,
    kernel: &GridTensor,
    grad_out: &GridTensor,
    need_x: bool,
    need_kernel: bool,
    need_bias: bool,
) -> (Option<GridTensor>, Option<GridTensor>, Option<GridTensor>) {
    let [bsz, ci, h, w] = x.shape();
    let co = kernel.shape()[1];
    let hw = h * w;
    let ow = 2 * w;
    let mut dx = need_x.then(|| GridTensor::zeros(x.shape()));
    let mut dk = need_kernel.then(|| GridTensor::zeros(kernel.shape()));
    let mut dcols = vec![0.0; co * 4 * hw];
    for b in 0..bsz {
        for c in 0..co {
            let plane = grad_out.plane(b, c);
            for d in 0..4 {
                let (dy, ddx) = (d / 2, d % 2);
                let dst = &mut dcols[(c * 4 + d) * hw..(c * 4 + d + 1) * hw];
                for y in 0..h {
                    for x in 0..w {
                        dst[y * w + x] = plane[(2 * y + dy) * ow + 2 * x + ddx];
                    }
                }
            }
        }
        let xb = &x.data()[b * ci * hw..(b + 1) * ci * hw];
        if let Some(dk) = dk.as_mut() {
            gemm(
                precision,
                ci,
                hw,
                co * 4,
                Mat::rows(xb, hw),
                Mat::rows_t(&dcols, hw),
                dk.data_mut(),
                true,
            );
        }
        if let Some(dx) = dx.as_mut() {
            gemm(
                precision,
                ci,
                co * 4,
                hw,
                Mat::rows(kernel.data(), co * 4),
                Mat::rows(&dcols, hw),
                &mut dx.data_mut()[b * ci * hw..(b + 1) * ci * hw],
                false,
            );
        }
    }
    let db = need_bias.then(|| {
        let mut db = GridTensor::zeros([1, co, 1, 1]);
        for b in 0..bsz {
            for c in 0..co {
                db.data_mut()[c] += grad_out.plane(b, c).iter().sum::<f64>();
            }
        }
        db
    });
    (dx, dk, db)
}

/// Affine map on the flattened `[c, h, w]` features of each batch item.
/// `weight` is `[n_out, n_in, 1, 1]`; the result is `[b, n_out, 1, 1]`.
pub(crate) fn dense_forward(
    precision: Precision,
    x: &GridTensor,
    weight: &GridTensor,
    bias: Option<&GridTensor>,
) -> GridTensor {
    let bsz = x.batch();
    let [n_out, n_in, _, _] = weight.shape();
    let mut out = GridTensor::zeros([bsz, n_out, 1, 1]);
    gemm(
        precision,
        bsz,
        n_in,
        n_out,
        Mat::rows(x.data(), n_in),
        Mat::rows_t(weight.data(), n_in),
        out.data_mut(),
        false,
    );
    if let Some(bias) = bias {
        for row in out.data_mut().chunks_mut(n_out) {
            for (o, b) in row.iter_mut().zip(bias.data()) {
                *o += b;
            }
        }
    }
    out
}

pub(crate) fn dense_backward(
    precision: Precision,
    x: &GridTensor,
    weight: &GridTensor,
    grad_out: &GridTensor,
    need_x: bool,
    need_weight: bool,
    need_bias: bool,
) -> (Option<GridTensor>, Option<GridTensor>, Option<GridTensor>) {
    let bsz = x.batch();
    let [n_out, n_in, _, _] = weight.shape();
    let dx = need_x.then(|| {
        let mut dx = GridTensor::zeros(x.shape());
        gemm(
            precision,
            bsz,
            n_out,
            n_in,
            Mat::rows(grad_out.data(), n_out),
            Mat::rows(weight.data(), n_in),
            dx.data_mut(),
            false,
        );
        dx
    });
    let dw = need_weight.then(|| {
        let mut dw = GridTensor::zeros(weight.shape());
        gemm(
            precision,
            n_out,
            bsz,
            n_in,
            Mat::rows_t(grad_out.data(), n_out),
            Mat::rows(x.data(), n_in),
            dw.data_mut(),
            false,
        );
        dw
    });
    let db = need_bias.then(|| {
        let mut db = GridTensor::zeros([1, n_out, 1, 1]);
        for row in grad_out.data().chunks(n_out) {
            for (d, g) in db.data_mut().iter_mut().zip(row) {
                *d += g;
            }
        }
        db
    });
    (dx, dw, db)
}
