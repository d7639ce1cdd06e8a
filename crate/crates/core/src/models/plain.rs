//! Single-path baselines: the seven-layer FCN and the conv/pool + dense CNN.

use rand::Rng;

use super::params::{Bound, ParamBuilder, ParamSet};
use super::{Forward, ModelSpec};
use crate::autograd::{Tape, Var};
use crate::error::Result;

pub const FCN_LAYERS: usize = 7;
pub const FCN_CHANNELS: usize = 64;
pub const CNN_STAGES: usize = 5;
/// Widest feature map of the conv/pool stack.
pub const CNN_MAX_CHANNELS: usize = 256;

pub(super) fn init_fcn7<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ParamSet {
    let mut b = ParamBuilder::new(rng);
    let mut prev = spec.input_channels;
    for i in 1..=FCN_LAYERS {
        b.conv(&format!("fcn.conv{i}"), prev, FCN_CHANNELS, 3);
        prev = FCN_CHANNELS;
    }
    // 3x3 output layer: eight 3x3 layers give a 17x17 receptive field.
    b.conv("fcn.head", prev, spec.output_channels, 3);
    b.set
}

pub(super) fn forward_fcn7(spec: &ModelSpec, tape: &mut Tape, p: &Bound<'_>, x: Var) -> Result<Forward> {
    let mut h = x;
    for i in 1..=FCN_LAYERS {
        let w = p.get(&format!("fcn.conv{i}.w"))?;
        let b = p.get(&format!("fcn.conv{i}.b"))?;
        let y = tape.conv2d(h, w, Some(b))?;
        h = tape.activation(y, spec.activation);
    }
    let y = tape.conv2d(h, p.get("fcn.head.w")?, Some(p.get("fcn.head.b")?))?;
    let out = tape.tanh(y);
    split3(tape, out)
}

pub fn cnn_channels(spec: &ModelSpec) -> Vec<usize> {
    (0..CNN_STAGES)
        .map(|i| (spec.stem_channels << i).min(CNN_MAX_CHANNELS))
        .collect()
}

/// Input width of the dense layer: `(H/32) * (W/32) * C5`.
pub fn cnn_dense_inputs(spec: &ModelSpec) -> usize {
    let c5 = *cnn_channels(spec).last().expect("five stages");
    (spec.height >> CNN_STAGES) * (spec.width >> CNN_STAGES) * c5
}

pub(super) fn init_cnn_dense<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ParamSet {
    let mut b = ParamBuilder::new(rng);
    let mut prev = spec.input_channels;
    for (i, c) in cnn_channels(spec).into_iter().enumerate() {
        b.conv(&format!("cnn.conv{}", i + 1), prev, c, 3);
        prev = c;
    }
    let n_out = spec.output_channels * spec.height * spec.width;
    b.dense("cnn.dense", cnn_dense_inputs(spec), n_out);
    b.set
}

pub(super) fn forward_cnn_dense(
    spec: &ModelSpec,
    tape: &mut Tape,
    p: &Bound<'_>,
    x: Var,
) -> Result<Forward> {
    let mut h = x;
    for i in 1..=CNN_STAGES {
        let w = p.get(&format!("cnn.conv{i}.w"))?;
        let b = p.get(&format!("cnn.conv{i}.b"))?;
        let y = tape.conv2d(h, w, Some(b))?;
        let y = tape.activation(y, spec.activation);
        h = tape.maxpool2d(y)?;
    }
    let y = tape.dense(h, p.get("cnn.dense.w")?, Some(p.get("cnn.dense.b")?))?;
    let y = tape.tanh(y);
    let batch = tape.shape(x)[0];
    let out = tape.reshape(y, [batch, spec.output_channels, spec.height, spec.width])?;
    split3(tape, out)
}

fn split3(tape: &mut Tape, out: Var) -> Result<Forward> {
    Ok(Forward {
        u: tape.slice_channels(out, 0, 1)?,
        v: tape.slice_channels(out, 1, 1)?,
        a: tape.slice_channels(out, 2, 1)?,
    })
}
