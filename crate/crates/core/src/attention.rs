//! Channel attention, spatial attention and the weighting attention module
//! (WAM) that lets the SIV and SIC branches exchange features.
//!
//! Parameter structs (`*Params`) own tensors; the bound structs (`Cbam`,
//! `Wam`, ...) hold the corresponding tape handles for one forward pass.

use rand::Rng;

use crate::autograd::{PoolMode, Tape, Var};
use crate::error::{Error, Result};
use crate::tensor::GridTensor;

/// Bottleneck ratio of the channel-attention MLP.
pub const REDUCTION_RATIO: usize = 8;
/// Side of the spatial-attention convolution kernel.
pub const SPATIAL_KERNEL: usize = 7;
/// Initial value of every WAM weight grid.
pub const WAM_INIT: f64 = 0.5;

pub fn hidden_width(channels: usize) -> usize {
    (channels / REDUCTION_RATIO).max(1)
}

fn init_uniform(shape: [usize; 4], fan_in: usize, rng: &mut impl Rng) -> GridTensor {
    GridTensor::uniform(shape, (1.0 / fan_in as f64).sqrt(), rng)
}

/// Shared MLP `C -> C/r -> C` applied to both pooled descriptors.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelAttnParams {
    pub w1: GridTensor,
    pub b1: GridTensor,
    pub w2: GridTensor,
    pub b2: GridTensor,
}

impl ChannelAttnParams {
    pub fn new(channels: usize, rng: &mut impl Rng) -> Self {
        let hidden = hidden_width(channels);
        ChannelAttnParams {
            w1: init_uniform([hidden, channels, 1, 1], channels, rng),
            b1: init_uniform([1, hidden, 1, 1], channels, rng),
            w2: init_uniform([channels, hidden, 1, 1], hidden, rng),
            b2: init_uniform([1, channels, 1, 1], hidden, rng),
        }
    }

    pub fn zeros(channels: usize) -> Self {
        let hidden = hidden_width(channels);
        ChannelAttnParams {
            w1: GridTensor::zeros([hidden, channels, 1, 1]),
            b1: GridTensor::zeros([1, hidden, 1, 1]),
            w2: GridTensor::zeros([channels, hidden, 1, 1]),
            b2: GridTensor::zeros([1, channels, 1, 1]),
        }
    }

    pub fn channels(&self) -> usize {
        self.w1.shape()[1]
    }
}

/// One `2 -> 1` convolution over the channel-pooled stack, no bias.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialAttnParams {
    pub kernel: GridTensor,
}

impl SpatialAttnParams {
    pub fn new(rng: &mut impl Rng) -> Self {
        let k = SPATIAL_KERNEL;
        SpatialAttnParams {
            kernel: init_uniform([1, 2, k, k], 2 * k * k, rng),
        }
    }

    pub fn zeros() -> Self {
        let k = SPATIAL_KERNEL;
        SpatialAttnParams {
            kernel: GridTensor::zeros([1, 2, k, k]),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CbamParams {
    pub channel: ChannelAttnParams,
    pub spatial: SpatialAttnParams,
}

impl CbamParams {
    pub fn new(channels: usize, rng: &mut impl Rng) -> Self {
        CbamParams {
            channel: ChannelAttnParams::new(channels, rng),
            spatial: SpatialAttnParams::new(rng),
        }
    }

    fn named(&self, prefix: &str, out: &mut Vec<(String, GridTensor)>) {
        let c = &self.channel;
        out.push((format!("{prefix}.mlp1.w"), c.w1.clone()));
        out.push((format!("{prefix}.mlp1.b"), c.b1.clone()));
        out.push((format!("{prefix}.mlp2.w"), c.w2.clone()));
        out.push((format!("{prefix}.mlp2.b"), c.b2.clone()));
        out.push((format!("{prefix}.spatial.w"), self.spatial.kernel.clone()));
    }

    pub fn bind(&self, tape: &mut Tape, identity: bool) -> Cbam {
        Cbam {
            channel: ChannelAttn {
                w1: tape.param(self.channel.w1.clone()),
                b1: tape.param(self.channel.b1.clone()),
                w2: tape.param(self.channel.w2.clone()),
                b2: tape.param(self.channel.b2.clone()),
            },
            spatial: SpatialAttn {
                kernel: tape.param(self.spatial.kernel.clone()),
            },
            identity,
        }
    }
}

/// Learnable state of one weighting attention module at a level whose
/// feature maps are `[_, C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct WamParams {
    pub a_in_siv: GridTensor,
    pub a_in_sic: GridTensor,
    pub a_out_siv: GridTensor,
    pub a_out_sic: GridTensor,
    pub attn_shared: CbamParams,
    pub attn_siv: CbamParams,
    pub attn_sic: CbamParams,
}

/// Names of the four weight grids, in export order.
pub const WAM_GRIDS: [&str; 4] = ["a_in_siv", "a_in_sic", "a_out_siv", "a_out_sic"];

impl WamParams {
    pub fn new(channels: usize, height: usize, width: usize, rng: &mut impl Rng) -> Self {
        let grid = GridTensor::full([1, channels, height, width], WAM_INIT);
        WamParams {
            a_in_siv: grid.clone(),
            a_in_sic: grid.clone(),
            a_out_siv: grid.clone(),
            a_out_sic: grid,
            attn_shared: CbamParams::new(channels, rng),
            attn_siv: CbamParams::new(channels, rng),
            attn_sic: CbamParams::new(channels, rng),
        }
    }

    /// Flattens into `(name, tensor)` pairs under `prefix`.
    pub fn named(&self, prefix: &str) -> Vec<(String, GridTensor)> {
        let mut out = vec![
            (format!("{prefix}.a_in_siv"), self.a_in_siv.clone()),
            (format!("{prefix}.a_in_sic"), self.a_in_sic.clone()),
            (format!("{prefix}.a_out_siv"), self.a_out_siv.clone()),
            (format!("{prefix}.a_out_sic"), self.a_out_sic.clone()),
        ];
        self.attn_shared.named(&format!("{prefix}.shared"), &mut out);
        self.attn_siv.named(&format!("{prefix}.siv"), &mut out);
        self.attn_sic.named(&format!("{prefix}.sic"), &mut out);
        out
    }

    pub fn bind(&self, tape: &mut Tape, identity: bool) -> Wam {
        Wam {
            a_in_siv: tape.param(self.a_in_siv.clone()),
            a_in_sic: tape.param(self.a_in_sic.clone()),
            a_out_siv: tape.param(self.a_out_siv.clone()),
            a_out_sic: tape.param(self.a_out_sic.clone()),
            shared: self.attn_shared.bind(tape, identity),
            siv: self.attn_siv.bind(tape, identity),
            sic: self.attn_sic.bind(tape, identity),
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct ChannelAttn {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct SpatialAttn {
    pub kernel: Var,
}

/// Channel then spatial attention, bound to a tape.
///
/// With `identity` set both maps are constant ones, which turns
/// [`cbam_apply`] into the identity map.
#[derive(Clone, Copy, Debug)]
pub struct Cbam {
    pub channel: ChannelAttn,
    pub spatial: SpatialAttn,
    pub identity: bool,
}

impl Cbam {
    /// Looks up the tape handles registered under `prefix`.
    pub fn lookup(
        prefix: &str,
        identity: bool,
        get: &dyn Fn(&str) -> Result<Var>,
    ) -> Result<Self> {
        Ok(Cbam {
            channel: ChannelAttn {
                w1: get(&format!("{prefix}.mlp1.w"))?,
                b1: get(&format!("{prefix}.mlp1.b"))?,
                w2: get(&format!("{prefix}.mlp2.w"))?,
                b2: get(&format!("{prefix}.mlp2.b"))?,
            },
            spatial: SpatialAttn {
                kernel: get(&format!("{prefix}.spatial.w"))?,
            },
            identity,
        })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Wam {
    pub a_in_siv: Var,
    pub a_in_sic: Var,
    pub a_out_siv: Var,
    pub a_out_sic: Var,
    pub shared: Cbam,
    pub siv: Cbam,
    pub sic: Cbam,
}

impl Wam {
    pub fn lookup(
        prefix: &str,
        identity: bool,
        get: &dyn Fn(&str) -> Result<Var>,
    ) -> Result<Self> {
        Ok(Wam {
            a_in_siv: get(&format!("{prefix}.a_in_siv"))?,
            a_in_sic: get(&format!("{prefix}.a_in_sic"))?,
            a_out_siv: get(&format!("{prefix}.a_out_siv"))?,
            a_out_sic: get(&format!("{prefix}.a_out_sic"))?,
            shared: Cbam::lookup(&format!("{prefix}.shared"), identity, get)?,
            siv: Cbam::lookup(&format!("{prefix}.siv"), identity, get)?,
            sic: Cbam::lookup(&format!("{prefix}.sic"), identity, get)?,
        })
    }
}

fn mlp(tape: &mut Tape, x: Var, p: &ChannelAttn) -> Result<Var> {
    let h = tape.dense(x, p.w1, Some(p.b1))?;
    let h = tape.relu(h);
    tape.dense(h, p.w2, Some(p.b2))
}

/// `sigmoid(MLP(avgpool(x)) + MLP(maxpool(x)))`, shape `[B, C, 1, 1]`.
pub fn channel_attention(tape: &mut Tape, x: Var, p: &ChannelAttn) -> Result<Var> {
    let c = tape.shape(x)[1];
    let expected = tape.shape(p.w1)[1];
    if c != expected {
        return Err(Error::Shape {
            op: "channel_attention",
            dim: "channels",
            expected,
            got: c,
        });
    }
    let avg = tape.pool_spatial(x, PoolMode::Avg);
    let max = tape.pool_spatial(x, PoolMode::Max);
    let a = mlp(tape, avg, p)?;
    let m = mlp(tape, max, p)?;
    let s = tape.add(a, m)?;
    Ok(tape.sigmoid(s))
}

/// `sigmoid(conv([avgpool_c(x); maxpool_c(x)]))`, shape `[B, 1, H, W]`.
pub fn spatial_attention(tape: &mut Tape, x: Var, p: &SpatialAttn) -> Result<Var> {
    let avg = tape.pool_channel(x, PoolMode::Avg);
    let max = tape.pool_channel(x, PoolMode::Max);
    let stacked = tape.concat(&[avg, max])?;
    let logits = tape.conv2d(stacked, p.kernel, None)?;
    Ok(tape.sigmoid(logits))
}

/// `M_s(x) * (M_c(x) * x)`, with both maps computed from the same `x`.
pub fn cbam_apply(tape: &mut Tape, x: Var, p: &Cbam) -> Result<Var> {
    let [b, c, h, w] = tape.shape(x);
    let (mc, ms) = if p.identity {
        (
            tape.constant(GridTensor::ones([b, c, 1, 1])),
            tape.constant(GridTensor::ones([b, 1, h, w])),
        )
    } else {
        (
            channel_attention(tape, x, &p.channel)?,
            spatial_attention(tape, x, &p.spatial)?,
        )
    };
    let refined = tape.mul(x, mc)?;
    tape.mul(refined, ms)
}

/// Exchanges information between the SIV and SIC feature maps of one level.
/// Returns `(xi_out_siv, xi_out_sic)`.
pub fn wam_forward(tape: &mut Tape, siv: Var, sic: Var, p: &Wam) -> Result<(Var, Var)> {
    let (ss, sc) = (tape.shape(siv), tape.shape(sic));
    for (dim, i) in [("batch", 0), ("channels", 1), ("height", 2), ("width", 3)] {
        if ss[i] != sc[i] {
            return Err(Error::Shape {
                op: "wam_forward",
                dim,
                expected: ss[i],
                got: sc[i],
            });
        }
    }
    let gs = tape.shape(p.a_in_siv);
    for (dim, i) in [("channels", 1), ("height", 2), ("width", 3)] {
        if gs[i] != ss[i] {
            return Err(Error::Shape {
                op: "wam_forward",
                dim,
                expected: gs[i],
                got: ss[i],
            });
        }
    }
    let from_siv = tape.mul(siv, p.a_in_siv)?;
    let from_sic = tape.mul(sic, p.a_in_sic)?;
    let share = tape.add(from_siv, from_sic)?;
    let share = cbam_apply(tape, share, &p.shared)?;

    let siv_self = cbam_apply(tape, siv, &p.siv)?;
    let to_siv = tape.mul(share, p.a_out_siv)?;
    let out_siv = tape.add(to_siv, siv_self)?;

    let sic_self = cbam_apply(tape, sic, &p.sic)?;
    let to_sic = tape.mul(share, p.a_out_sic)?;
    let out_sic = tape.add(to_sic, sic_self)?;
    Ok((out_siv, out_sic))
}
