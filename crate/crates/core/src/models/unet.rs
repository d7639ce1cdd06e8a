//! The U-net family: HIS-Unet, EB-Unet, LB-Unet and the plain U-net.
//!
//! Parameter names are shared across variants wherever the layer is the
//! same, so an EB-Unet state is exactly an HIS-Unet state minus its `wam*`
//! entries.

use rand::Rng;

use super::params::{Bound, ParamBuilder, ParamSet};
use super::{Forward, ModelKind, ModelSpec};
use crate::attention::{wam_forward, Wam, WamParams};
use crate::autograd::{Tape, Var};
use crate::error::Result;

/// Number of output channels of the SIV branch head.
const SIV_OUT: usize = 2;

/// Encoder, bottleneck and decoder convolutions under `p`. The LB-Unet
/// trunk leaves out the last decoder convolution, which is per branch.
fn init_path<R: Rng>(b: &mut ParamBuilder<'_, R>, spec: &ModelSpec, p: &str, c_in: usize, skip_last: bool) {
    let depth = spec.depth;
    let mut prev = c_in;
    for l in 1..=depth {
        let c = spec.level_channels(l);
        b.conv(&format!("{p}.enc{l}.conv1"), prev, c, 3);
        b.conv(&format!("{p}.enc{l}.conv2"), c, c, 3);
        prev = c;
    }
    let mid = spec.level_channels(depth + 1);
    b.conv(&format!("{p}.mid.conv1"), prev, mid, 3);
    b.conv(&format!("{p}.mid.conv2"), mid, mid, 3);
    for l in (1..=depth).rev() {
        let c = spec.level_channels(l);
        b.up(&format!("{p}.dec{l}.up"), 2 * c, c);
        b.conv(&format!("{p}.dec{l}.conv1"), 2 * c, c, 3);
        if !(skip_last && l == 1) {
            b.conv(&format!("{p}.dec{l}.conv2"), c, c, 3);
        }
    }
}

pub(super) fn init<R: Rng>(spec: &ModelSpec, rng: &mut R) -> ParamSet {
    let mut b = ParamBuilder::new(rng);
    let stem = spec.stem_channels;
    match spec.kind {
        ModelKind::HisUnet | ModelKind::EbUnet => {
            b.conv("stem", spec.input_channels, stem, 3);
            for p in ["siv", "sic"] {
                init_path(&mut b, spec, p, stem, false);
            }
            b.conv("siv.head", stem, SIV_OUT, 1);
            b.conv("sic.head", stem, spec.output_channels - SIV_OUT, 1);
            if spec.kind == ModelKind::HisUnet {
                for (idx, (c, h, w)) in wam_levels(spec).into_iter().enumerate() {
                    let wam = WamParams::new(c, h, w, b.rng);
                    b.extend(wam.named(&format!("wam{}", idx + 1)));
                }
            }
        }
        ModelKind::Unet => {
            init_path(&mut b, spec, "trunk", spec.input_channels, false);
            b.conv("trunk.head", stem, spec.output_channels, 1);
        }
        ModelKind::LbUnet => {
            init_path(&mut b, spec, "trunk", spec.input_channels, true);
            for p in ["siv", "sic"] {
                b.conv(&format!("{p}.dec1.conv2"), stem, stem, 3);
            }
            b.conv("siv.head", stem, SIV_OUT, 1);
            b.conv("sic.head", stem, spec.output_channels - SIV_OUT, 1);
        }
        _ => unreachable!("not a U-net kind"),
    }
    b.set
}

/// `(channels, height, width)` of each WAM, in forward order: one after
/// every pooling step, then one after every up-convolution.
pub fn wam_levels(spec: &ModelSpec) -> Vec<(usize, usize, usize)> {
    let (h, w, d) = (spec.height, spec.width, spec.depth);
    let mut out = Vec::with_capacity(2 * d);
    for l in 1..=d {
        out.push((spec.level_channels(l), h >> l, w >> l));
    }
    for l in (1..=d).rev() {
        out.push((spec.level_channels(l), h >> (l - 1), w >> (l - 1)));
    }
    out
}

struct Ctx<'a, 'b> {
    spec: &'a ModelSpec,
    tape: &'a mut Tape,
    params: &'a Bound<'b>,
}

impl Ctx<'_, '_> {
    fn conv(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.params.get(&format!("{name}.w"))?;
        let b = self.params.get(&format!("{name}.b"))?;
        let y = self.tape.conv2d(x, w, Some(b))?;
        Ok(self.tape.activation(y, self.spec.activation))
    }

    fn head(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.params.get(&format!("{name}.w"))?;
        let b = self.params.get(&format!("{name}.b"))?;
        let y = self.tape.conv2d(x, w, Some(b))?;
        Ok(self.tape.tanh(y))
    }

    fn up(&mut self, name: &str, x: Var) -> Result<Var> {
        let w = self.params.get(&format!("{name}.w"))?;
        let b = self.params.get(&format!("{name}.b"))?;
        self.tape.conv_transpose2d(x, w, Some(b))
    }

    fn wam(&mut self, idx: usize, siv: Var, sic: Var) -> Result<(Var, Var)> {
        let params = self.params;
        let wam = Wam::lookup(&format!("wam{idx}"), self.spec.identity_attention, &|n| {
            params.get(n)
        })?;
        wam_forward(self.tape, siv, sic, &wam)
    }
}

/// Feature maps of one or two parallel paths.
struct Paths {
    names: Vec<&'static str>,
    x: Vec<Var>,
}

pub(super) fn forward(spec: &ModelSpec, tape: &mut Tape, params: &Bound<'_>, x: Var) -> Result<Forward> {
    let mut ctx = Ctx { spec, tape, params };
    let share = spec.kind == ModelKind::HisUnet;
    let two = matches!(spec.kind, ModelKind::HisUnet | ModelKind::EbUnet);

    let mut paths = if two {
        let s = ctx.conv("stem", x)?;
        Paths {
            names: vec!["siv", "sic"],
            x: vec![s, s],
        }
    } else {
        Paths {
            names: vec!["trunk"],
            x: vec![x],
        }
    };

    let depth = spec.depth;
    let mut skips: Vec<Vec<Var>> = vec![Vec::new(); paths.x.len()];
    let mut wam_idx = 0;
    for l in 1..=depth {
        for (i, name) in paths.names.iter().enumerate() {
            let a = ctx.conv(&format!("{name}.enc{l}.conv1"), paths.x[i])?;
            let a = ctx.conv(&format!("{name}.enc{l}.conv2"), a)?;
            skips[i].push(a);
            paths.x[i] = ctx.tape.maxpool2d(a)?;
        }
        if share {
            wam_idx += 1;
            let (s, c) = ctx.wam(wam_idx, paths.x[0], paths.x[1])?;
            paths.x = vec![s, c];
        }
    }
    for (i, name) in paths.names.iter().enumerate() {
        let a = ctx.conv(&format!("{name}.mid.conv1"), paths.x[i])?;
        paths.x[i] = ctx.conv(&format!("{name}.mid.conv2"), a)?;
    }
    for l in (1..=depth).rev() {
        for (i, name) in paths.names.iter().enumerate() {
            paths.x[i] = ctx.up(&format!("{name}.dec{l}.up"), paths.x[i])?;
        }
        if share {
            wam_idx += 1;
            let (s, c) = ctx.wam(wam_idx, paths.x[0], paths.x[1])?;
            paths.x = vec![s, c];
        }
        for (i, name) in paths.names.iter().enumerate() {
            let cat = ctx.tape.concat(&[paths.x[i], skips[i][l - 1]])?;
            let a = ctx.conv(&format!("{name}.dec{l}.conv1"), cat)?;
            paths.x[i] = if spec.kind == ModelKind::LbUnet && l == 1 {
                a
            } else {
                ctx.conv(&format!("{name}.dec{l}.conv2"), a)?
            };
        }
    }

    match spec.kind {
        ModelKind::HisUnet | ModelKind::EbUnet => {
            let uv = ctx.head("siv.head", paths.x[0])?;
            let a = ctx.head("sic.head", paths.x[1])?;
            split_uv(ctx.tape, uv, a)
        }
        ModelKind::LbUnet => {
            let trunk = paths.x[0];
            let s = ctx.conv("siv.dec1.conv2", trunk)?;
            let c = ctx.conv("sic.dec1.conv2", trunk)?;
            let uv = ctx.head("siv.head", s)?;
            let a = ctx.head("sic.head", c)?;
            split_uv(ctx.tape, uv, a)
        }
        ModelKind::Unet => {
            let out = ctx.head("trunk.head", paths.x[0])?;
            Ok(Forward {
                u: ctx.tape.slice_channels(out, 0, 1)?,
                v: ctx.tape.slice_channels(out, 1, 1)?,
                a: ctx.tape.slice_channels(out, 2, 1)?,
            })
        }
        _ => unreachable!("not a U-net kind"),
    }
}

fn split_uv(tape: &mut Tape, uv: Var, a: Var) -> Result<Forward> {
    Ok(Forward {
        u: tape.slice_channels(uv, 0, 1)?,
        v: tape.slice_channels(uv, 1, 1)?,
        a,
    })
}
