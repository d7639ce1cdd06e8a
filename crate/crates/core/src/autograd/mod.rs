//! Reverse-mode automatic differentiation over [`GridTensor`] values.
//!
//! A [`Tape`] records every operation in creation order, which is already a
//! topological order of the computation graph. [`Tape::backward`] walks the
//! records in reverse, visiting each node once and summing gradient
//! contributions over fan-out.

mod gemm;
pub mod gradcheck;
mod kernels;

use std::fmt;
use std::str::FromStr;

pub use gemm::Precision;
pub use gradcheck::grad_check;

use crate::error::{Error, Result};
use crate::tensor::{numel, GridTensor, Shape};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-v).exp()),
            Activation::Relu => v.max(0.0),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            _ => Err(Error::UnknownKind {
                what: "activation",
                name: s.to_string(),
            }),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Avg,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EwOp {
    Add,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv2d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
    },
    ConvTranspose2d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
    },
    /// `argmax[i]` is the flat input offset that produced output `i`.
    MaxPool2d { x: Var, argmax: Vec<usize> },
    PoolSpatial {
        x: Var,
        mode: PoolMode,
        argmax: Vec<usize>,
    },
    PoolChannel {
        x: Var,
        mode: PoolMode,
        argmax: Vec<usize>,
    },
    Activation { x: Var, kind: Activation },
    Dense {
        x: Var,
        weight: Var,
        bias: Option<Var>,
    },
    /// `y` broadcasts into the output shape.
    Elementwise { x: Var, y: Var, op: EwOp },
    Concat { parts: Vec<Var> },
    SliceChannels { x: Var, start: usize },
    Reshape { x: Var },
    Sum { x: Var },
    Scale { x: Var, factor: f64 },
    MaskedLoss {
        pred: Var,
        target: GridTensor,
        mask: Vec<bool>,
        weights: Vec<f64>,
        count: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: GridTensor,
    op: Op,
    requires_grad: bool,
    /// Accumulated gradient, kept for leaves only.
    grad: Option<GridTensor>,
}

/// Records a computation and differentiates it in reverse.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    precision: Precision,
}

fn shape_err(op: &'static str, dim: &'static str, expected: usize, got: usize) -> Error {
    Error::Shape {
        op,
        dim,
        expected,
        got,
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_precision(precision: Precision) -> Self {
        Tape {
            nodes: Vec::new(),
            precision,
        }
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: GridTensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records an input. Gradients are collected only when `requires_grad`.
    pub fn leaf(&mut self, value: GridTensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: GridTensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: GridTensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &GridTensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.needs(v)
    }

    /// Accumulated gradient of a leaf, present after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&GridTensor> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<GridTensor> {
        self.nodes[v.0].grad.take()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Same-size convolution with zero padding `k / 2`; `kernel` is
    /// `[c_out, c_in, k, k]` with odd `k`, `bias` is `[1, c_out, 1, 1]`.
    pub fn conv2d(&mut self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x);
        let ks = self.shape(kernel);
        if ks[2] != ks[3] {
            return Err(shape_err("conv2d", "kernel width", ks[2], ks[3]));
        }
        if ks[2] % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "conv2d: kernel size {} must be odd",
                ks[2]
            )));
        }
        if ks[1] != xs[1] {
            return Err(shape_err("conv2d", "input channels", ks[1], xs[1]));
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if numel(bs) != ks[0] {
                return Err(shape_err("conv2d", "bias length", ks[0], numel(bs)));
            }
        }
        let value = kernels::conv2d_forward(
            self.precision,
            self.value(x),
            self.value(kernel),
            bias.map(|b| self.value(b)),
        );
        let rg = self.needs(x) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(value, Op::Conv2d { x, kernel, bias }, rg))
    }

    /// 2x2 stride-2 transposed convolution doubling both spatial dims;
    /// `kernel` is `[c_in, c_out, 2, 2]`.
    pub fn conv_transpose2d(&mut self, x: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x);
        let ks = self.shape(kernel);
        if ks[2] != 2 || ks[3] != 2 {
            return Err(shape_err("conv_transpose2d", "kernel size", 2, ks[2].max(ks[3])));
        }
        if ks[0] != xs[1] {
            return Err(shape_err("conv_transpose2d", "input channels", ks[0], xs[1]));
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if numel(bs) != ks[1] {
                return Err(shape_err("conv_transpose2d", "bias length", ks[1], numel(bs)));
            }
        }
        let value = kernels::conv_t2d_forward(
            self.precision,
            self.value(x),
            self.value(kernel),
            bias.map(|b| self.value(b)),
        );
        let rg = self.needs(x) || self.needs(kernel) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(value, Op::ConvTranspose2d { x, kernel, bias }, rg))
    }

    /// 2x2 max pooling with stride 2. Ties go to the first element in
    /// row-major scan order.
    pub fn maxpool2d(&mut self, x: Var) -> Result<Var> {
        let [b, c, h, w] = self.shape(x);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::SpatialSize {
                op: "maxpool2d",
                height: h,
                width: w,
                multiple: 2,
            });
        }
        let (oh, ow) = (h / 2, w / 2);
        let src = self.value(x).data();
        let mut out = Vec::with_capacity(b * c * oh * ow);
        let mut argmax = Vec::with_capacity(b * c * oh * ow);
        for plane in 0..b * c {
            let base = plane * h * w;
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = base + 2 * y * w + 2 * xx;
                    for o in [
                        base + 2 * y * w + 2 * xx + 1,
                        base + (2 * y + 1) * w + 2 * xx,
                        base + (2 * y + 1) * w + 2 * xx + 1,
                    ] {
                        if src[o] > src[best] {
                            best = o;
                        }
                    }
                    out.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let value = GridTensor::from_vec([b, c, oh, ow], out)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::MaxPool2d { x, argmax }, rg))
    }

    /// Global reduction over the spatial axes, giving `[b, c, 1, 1]`.
    pub fn pool_spatial(&mut self, x: Var, mode: PoolMode) -> Var {
        let [b, c, h, w] = self.shape(x);
        let hw = h * w;
        let t = self.value(x);
        let mut out = Vec::with_capacity(b * c);
        let mut argmax = Vec::new();
        for plane in 0..b * c {
            let vals = &t.data()[plane * hw..(plane + 1) * hw];
            match mode {
                PoolMode::Avg => out.push(vals.iter().sum::<f64>() / hw as f64),
                PoolMode::Max => {
                    let best = first_argmax(vals);
                    out.push(vals[best]);
                    argmax.push(plane * hw + best);
                }
            }
        }
        let value = GridTensor::from_vec([b, c, 1, 1], out).expect("pool_spatial shape");
        let rg = self.needs(x);
        self.push(value, Op::PoolSpatial { x, mode, argmax }, rg)
    }

    /// Reduction over the channel axis, giving `[b, 1, h, w]`.
    pub fn pool_channel(&mut self, x: Var, mode: PoolMode) -> Var {
        let [b, c, h, w] = self.shape(x);
        let hw = h * w;
        let t = self.value(x).data();
        let mut out = vec![0.0; b * hw];
        let mut argmax = Vec::new();
        if mode == PoolMode::Max {
            argmax = vec![0usize; b * hw];
        }
        for ib in 0..b {
            for p in 0..hw {
                let o = ib * hw + p;
                match mode {
                    PoolMode::Avg => {
                        let s: f64 = (0..c).map(|ic| t[(ib * c + ic) * hw + p]).sum();
                        out[o] = s / c as f64;
                    }
                    PoolMode::Max => {
                        let mut best = ib * c * hw + p;
                        for ic in 1..c {
                            let cand = (ib * c + ic) * hw + p;
                            if t[cand] > t[best] {
                                best = cand;
                            }
                        }
                        out[o] = t[best];
                        argmax[o] = best;
                    }
                }
            }
        }
        let value = GridTensor::from_vec([b, 1, h, w], out).expect("pool_channel shape");
        let rg = self.needs(x);
        self.push(value, Op::PoolChannel { x, mode, argmax }, rg)
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let value = self.value(x).map(|v| kind.apply(v));
        let rg = self.needs(x);
        self.push(value, Op::Activation { x, kind }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Tanh)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.activation(x, Activation::Relu)
    }

    /// Affine map of each batch item's flattened features.
    /// `weight` is `[n_out, n_in, 1, 1]`, `bias` holds `n_out` values.
    pub fn dense(&mut self, x: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(x);
        let ws = self.shape(weight);
        let n_in = xs[1] * xs[2] * xs[3];
        if ws[1] * ws[2] * ws[3] != n_in {
            return Err(shape_err("dense", "input length", ws[1] * ws[2] * ws[3], n_in));
        }
        if ws[2] != 1 || ws[3] != 1 {
            return Err(shape_err("dense", "weight trailing dims", 1, ws[2] * ws[3]));
        }
        if let Some(b) = bias {
            let bs = self.shape(b);
            if numel(bs) != ws[0] {
                return Err(shape_err("dense", "bias length", ws[0], numel(bs)));
            }
        }
        let value = kernels::dense_forward(
            self.precision,
            self.value(x),
            self.value(weight),
            bias.map(|b| self.value(b)),
        );
        let rg = self.needs(x) || self.needs(weight) || bias.is_some_and(|b| self.needs(b));
        Ok(self.push(value, Op::Dense { x, weight, bias }, rg))
    }

    /// Elementwise add or multiply. Either operand may broadcast into the
    /// other along any axis where its extent is 1.
    pub fn ew(&mut self, x: Var, y: Var, op: EwOp) -> Result<Var> {
        let (xs, ys) = (self.shape(x), self.shape(y));
        let (big, small) = if broadcasts_into(ys, xs) {
            (x, y)
        } else if broadcasts_into(xs, ys) {
            (y, x)
        } else {
            return Err(Error::Broadcast {
                op: "ew",
                from: ys,
                to: xs,
            });
        };
        let out_shape = self.shape(big);
        let strides = broadcast_strides(self.shape(small));
        let (a, b) = (self.value(big).data(), self.value(small).data());
        let mut out = Vec::with_capacity(a.len());
        for_each_broadcast(out_shape, strides, |i, j| {
            out.push(match op {
                EwOp::Add => a[i] + b[j],
                EwOp::Mul => a[i] * b[j],
            })
        });
        let value = GridTensor::from_vec(out_shape, out)?;
        let rg = self.needs(big) || self.needs(small);
        Ok(self.push(value, Op::Elementwise { x: big, y: small, op }, rg))
    }

    pub fn add(&mut self, x: Var, y: Var) -> Result<Var> {
        self.ew(x, y, EwOp::Add)
    }

    pub fn mul(&mut self, x: Var, y: Var) -> Result<Var> {
        self.ew(x, y, EwOp::Mul)
    }

    /// Concatenation along the channel axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::InvalidParameter("concat of zero tensors".into()))?;
        let [b, _, h, w] = self.shape(first);
        let mut c_total = 0;
        for &p in parts {
            let s = self.shape(p);
            if s[0] != b {
                return Err(shape_err("concat", "batch", b, s[0]));
            }
            if s[2] != h {
                return Err(shape_err("concat", "height", h, s[2]));
            }
            if s[3] != w {
                return Err(shape_err("concat", "width", w, s[3]));
            }
            c_total += s[1];
        }
        let hw = h * w;
        let mut out = Vec::with_capacity(b * c_total * hw);
        for ib in 0..b {
            for &p in parts {
                let t = self.value(p);
                let c = t.channels();
                out.extend_from_slice(&t.data()[ib * c * hw..(ib + 1) * c * hw]);
            }
        }
        let value = GridTensor::from_vec([b, c_total, h, w], out)?;
        let rg = parts.iter().any(|&p| self.needs(p));
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
            rg,
        ))
    }

    pub fn slice_channels(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let c = self.shape(x)[1];
        if start + len > c || len == 0 {
            return Err(shape_err("slice_channels", "channel range end", c, start + len));
        }
        let value = self.value(x).channel_slice(start, len);
        let rg = self.needs(x);
        Ok(self.push(value, Op::SliceChannels { x, start }, rg))
    }

    pub fn reshape(&mut self, x: Var, shape: Shape) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let rg = self.needs(x);
        Ok(self.push(value, Op::Reshape { x }, rg))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = GridTensor::scalar(self.value(x).sum());
        let rg = self.needs(x);
        self.push(value, Op::Sum { x }, rg)
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = self.value(x).map(|v| v * factor);
        let rg = self.needs(x);
        self.push(value, Op::Scale { x, factor }, rg)
    }

    /// Channel-weighted squared error averaged over valid pixels:
    /// `sum_valid sum_c weights[c] * (pred - target)^2 / n_valid`.
    ///
    /// `mask` is `[b, 1, h, w]`, nonzero meaning valid. Masked pixels add
    /// nothing to the value or to the gradient.
    pub fn masked_loss(
        &mut self,
        pred: Var,
        target: &GridTensor,
        mask: &GridTensor,
        weights: &[f64],
    ) -> Result<Var> {
        let ps = self.shape(pred);
        let [b, c, h, w] = ps;
        if target.shape() != ps {
            return Err(shape_err(
                "masked_loss",
                "target elements",
                numel(ps),
                target.len(),
            ));
        }
        if mask.shape() != [b, 1, h, w] {
            return Err(shape_err("masked_loss", "mask elements", b * h * w, mask.len()));
        }
        if weights.len() != c {
            return Err(shape_err("masked_loss", "channel weights", c, weights.len()));
        }
        let valid: Vec<bool> = mask.data().iter().map(|&m| m != 0.0).collect();
        let count = valid.iter().filter(|&&v| v).count();
        if count == 0 {
            return Err(Error::EmptyMask("masked_loss"));
        }
        let hw = h * w;
        let p = self.value(pred).data();
        let mut total = 0.0;
        for ib in 0..b {
            for (ic, &wc) in weights.iter().enumerate() {
                let base = (ib * c + ic) * hw;
                for px in 0..hw {
                    if valid[ib * hw + px] {
                        let d = p[base + px] - target.data()[base + px];
                        total += wc * d * d;
                    }
                }
            }
        }
        let value = GridTensor::scalar(total / count as f64);
        let rg = self.needs(pred);
        Ok(self.push(
            value,
            Op::MaskedLoss {
                pred,
                target: target.clone(),
                mask: valid,
                weights: weights.to_vec(),
                count,
            },
            rg,
        ))
    }

    /// Back-propagates from a scalar `loss`, adding into the gradients of
    /// every reachable leaf that requires one. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let s = self.shape(loss);
        if numel(s) != 1 {
            return Err(Error::NotScalar(s));
        }
        if !self.needs(loss) {
            return Ok(());
        }
        let mut grads: Vec<Option<GridTensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(GridTensor::ones(s));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match node.grad.as_mut() {
                    Some(acc) => acc.add_assign(&g),
                    None => node.grad = Some(g),
                }
                continue;
            }
            for (input, dg) in self.local_grads(i, &g) {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match grads[input.0].as_mut() {
                    Some(acc) => acc.add_assign(&dg),
                    None => grads[input.0] = Some(dg),
                }
            }
        }
        Ok(())
    }

    /// Gradients with respect to the inputs of node `i` given its output
    /// gradient `g`.
    fn local_grads(&self, i: usize, g: &GridTensor) -> Vec<(Var, GridTensor)> {
        let node = &self.nodes[i];
        let mut out = Vec::new();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, kernel, bias } | Op::ConvTranspose2d { x, kernel, bias } => {
                let transpose = matches!(node.op, Op::ConvTranspose2d { .. });
                let backward = if transpose {
                    kernels::conv_t2d_backward
                } else {
                    kernels::conv2d_backward
                };
                let need_b = bias.is_some_and(|b| self.needs(b));
                let (dx, dk, db) = backward(
                    self.precision,
                    self.value(*x),
                    self.value(*kernel),
                    g,
                    self.needs(*x),
                    self.needs(*kernel),
                    need_b,
                );
                push_some(&mut out, *x, dx);
                push_some(&mut out, *kernel, dk);
                if let (Some(b), Some(db)) = (bias, db) {
                    let shape = self.shape(*b);
                    out.push((*b, db.reshaped(shape).expect("bias grad shape")));
                }
            }
            Op::Dense { x, weight, bias } => {
                let need_b = bias.is_some_and(|b| self.needs(b));
                let (dx, dw, db) = kernels::dense_backward(
                    self.precision,
                    self.value(*x),
                    self.value(*weight),
                    g,
                    self.needs(*x),
                    self.needs(*weight),
                    need_b,
                );
                push_some(&mut out, *x, dx);
                push_some(&mut out, *weight, dw);
                if let (Some(b), Some(db)) = (bias, db) {
                    let shape = self.shape(*b);
                    out.push((*b, db.reshaped(shape).expect("bias grad shape")));
                }
            }
            Op::MaxPool2d { x, argmax }
            | Op::PoolSpatial {
                x,
                mode: PoolMode::Max,
                argmax,
            }
            | Op::PoolChannel {
                x,
                mode: PoolMode::Max,
                argmax,
            } => {
                let mut dx = GridTensor::zeros(self.shape(*x));
                let d = dx.data_mut();
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    d[src] += gv;
                }
                out.push((*x, dx));
            }
            Op::PoolSpatial {
                x,
                mode: PoolMode::Avg,
                ..
            } => {
                let [b, c, h, w] = self.shape(*x);
                let hw = h * w;
                let mut dx = GridTensor::zeros([b, c, h, w]);
                for plane in 0..b * c {
                    let v = g.data()[plane] / hw as f64;
                    dx.data_mut()[plane * hw..(plane + 1) * hw].fill(v);
                }
                out.push((*x, dx));
            }
            Op::PoolChannel {
                x,
                mode: PoolMode::Avg,
                ..
            } => {
                let [b, c, h, w] = self.shape(*x);
                let hw = h * w;
                let mut dx = GridTensor::zeros([b, c, h, w]);
                for ib in 0..b {
                    let gb = &g.data()[ib * hw..(ib + 1) * hw];
                    for ic in 0..c {
                        let dst = dx.plane_mut(ib, ic);
                        for (d, gv) in dst.iter_mut().zip(gb) {
                            *d = gv / c as f64;
                        }
                    }
                }
                out.push((*x, dx));
            }
            Op::Activation { x, kind } => {
                let y = node.value.data();
                let data = g
                    .data()
                    .iter()
                    .zip(y)
                    .map(|(gv, &yv)| gv * kind.derivative_from_output(yv))
                    .collect();
                out.push((*x, GridTensor::from_vec(node.value.shape(), data).unwrap()));
            }
            Op::Elementwise { x, y, op } => {
                let out_shape = node.value.shape();
                let ys = self.shape(*y);
                let strides = broadcast_strides(ys);
                let (xv, yv) = (self.value(*x).data(), self.value(*y).data());
                let gd = g.data();
                if self.needs(*x) {
                    let dx = match op {
                        EwOp::Add => g.clone(),
                        EwOp::Mul => {
                            let mut d = Vec::with_capacity(gd.len());
                            for_each_broadcast(out_shape, strides, |i, j| d.push(gd[i] * yv[j]));
                            GridTensor::from_vec(out_shape, d).unwrap()
                        }
                    };
                    out.push((*x, dx));
                }
                if self.needs(*y) {
                    let mut dy = GridTensor::zeros(ys);
                    let d = dy.data_mut();
                    match op {
                        EwOp::Add => for_each_broadcast(out_shape, strides, |i, j| d[j] += gd[i]),
                        EwOp::Mul => {
                            for_each_broadcast(out_shape, strides, |i, j| d[j] += gd[i] * xv[i])
                        }
                    }
                    out.push((*y, dy));
                }
            }
            Op::Concat { parts } => {
                let [b, c_total, h, w] = node.value.shape();
                let hw = h * w;
                let mut offset = 0;
                for &p in parts {
                    let c = self.shape(p)[1];
                    if self.needs(p) {
                        let mut d = Vec::with_capacity(b * c * hw);
                        for ib in 0..b {
                            let base = (ib * c_total + offset) * hw;
                            d.extend_from_slice(&g.data()[base..base + c * hw]);
                        }
                        out.push((p, GridTensor::from_vec([b, c, h, w], d).unwrap()));
                    }
                    offset += c;
                }
            }
            Op::SliceChannels { x, start } => {
                let [b, c, h, w] = self.shape(*x);
                let len = node.value.channels();
                let hw = h * w;
                let mut dx = GridTensor::zeros([b, c, h, w]);
                for ib in 0..b {
                    let dst = (ib * c + start) * hw;
                    let src = ib * len * hw;
                    dx.data_mut()[dst..dst + len * hw]
                        .copy_from_slice(&g.data()[src..src + len * hw]);
                }
                out.push((*x, dx));
            }
            Op::Reshape { x } => {
                let shape = self.shape(*x);
                out.push((*x, g.clone().reshaped(shape).unwrap()));
            }
            Op::Sum { x } => {
                out.push((*x, GridTensor::full(self.shape(*x), g.data()[0])));
            }
            Op::Scale { x, factor } => {
                out.push((*x, g.map(|v| v * factor)));
            }
            Op::MaskedLoss {
                pred,
                target,
                mask,
                weights,
                count,
            } => {
                let [b, c, h, w] = self.shape(*pred);
                let hw = h * w;
                let p = self.value(*pred).data();
                let scale = 2.0 * g.data()[0] / *count as f64;
                let mut dp = GridTensor::zeros([b, c, h, w]);
                let d = dp.data_mut();
                for ib in 0..b {
                    for (ic, &wc) in weights.iter().enumerate() {
                        let base = (ib * c + ic) * hw;
                        for px in 0..hw {
                            if mask[ib * hw + px] {
                                d[base + px] =
                                    scale * wc * (p[base + px] - target.data()[base + px]);
                            }
                        }
                    }
                }
                out.push((*pred, dp));
            }
        }
        out
    }
}

fn push_some(out: &mut Vec<(Var, GridTensor)>, v: Var, g: Option<GridTensor>) {
    if let Some(g) = g {
        out.push((v, g));
    }
}

fn first_argmax(vals: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in vals.iter().enumerate().skip(1) {
        if v > vals[best] {
            best = i;
        }
    }
    best
}

fn broadcasts_into(small: Shape, big: Shape) -> bool {
    small.iter().zip(&big).all(|(&s, &b)| s == b || s == 1)
}

/// Strides of `shape` with zero stride on unit axes.
fn broadcast_strides(shape: Shape) -> [usize; 4] {
    let mut strides = [0; 4];
    let mut acc = 1;
    for d in (0..4).rev() {
        strides[d] = if shape[d] == 1 { 0 } else { acc };
        acc *= shape[d];
    }
    strides
}

/// Calls `f(out_index, broadcast_index)` in row-major order of `shape`.
#[inline]
fn for_each_broadcast(shape: Shape, strides: [usize; 4], mut f: impl FnMut(usize, usize)) {
    let [b, c, h, w] = shape;
    let mut i = 0;
    for ib in 0..b {
        for ic in 0..c {
            for iy in 0..h {
                let row = ib * strides[0] + ic * strides[1] + iy * strides[2];
                if strides[3] == 0 {
                    for _ in 0..w {
                        f(i, row);
                        i += 1;
                    }
                } else {
                    for ix in 0..w {
                        f(i, row + ix);
                        i += 1;
                    }
                }
            }
        }
    }
}
