//! HSUN checkpoints: a model spec followed by named f64 tensors.
//!
//! ```text
//! magic            b"HSUN"
//! version          u32
//! kind             u32 length + UTF-8
//! stem_channels    u32
//! depth            u32
//! input_channels   u32
//! output_channels  u32
//! activation       u32 length + UTF-8
//! seed             u64
//! height, width    u32, u32
//! identity_attn    u8
//! n_tensors        u32
//! per tensor       u32 name length, name, 4 x u32 shape, f64 data
//! ```
//!
//! All integers and floats are little-endian. Tensors whose names start
//! with [`EXTRA_PREFIX`] carry training state rather than model weights.

use std::fs;
use std::path::Path;

use super::{ModelSpec, ModelState, ParamSet};
use crate::error::{Error, Result};
use crate::tensor::{numel, GridTensor};

pub const MAGIC: &[u8; 4] = b"HSUN";
pub const VERSION: u32 = 1;
/// Prefix of non-weight tensors such as optimizer moments.
pub const EXTRA_PREFIX: &str = "train/";

/// Everything in one checkpoint file.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub state: ModelState,
    /// Tensors under [`EXTRA_PREFIX`], with the prefix removed.
    pub extras: ParamSet,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    put_u32(out, s.len());
    out.extend_from_slice(s.as_bytes());
}

pub fn encode(state: &ModelState, extras: &ParamSet) -> Vec<u8> {
    let s = &state.spec;
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_str(&mut out, s.kind.name());
    for v in [s.stem_channels, s.depth, s.input_channels, s.output_channels] {
        put_u32(&mut out, v);
    }
    put_str(&mut out, s.activation.name());
    out.extend_from_slice(&s.seed.to_le_bytes());
    put_u32(&mut out, s.height);
    put_u32(&mut out, s.width);
    out.push(u8::from(s.identity_attention));
    put_u32(&mut out, state.params.len() + extras.len());
    let extra_names: Vec<String> = extras.names().map(|n| format!("{EXTRA_PREFIX}{n}")).collect();
    let all = state
        .params
        .iter()
        .chain(extra_names.iter().map(String::as_str).zip(extras.iter().map(|(_, t)| t)));
    for (name, t) in all {
        put_str(&mut out, name);
        for d in t.shape() {
            put_u32(&mut out, d);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::format(
                self.origin,
                format!("truncated while reading {what} at byte {}", self.pos),
            ));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")) as usize)
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)?;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec()).map_err(|_| Error::format(self.origin, format!("{what} is not UTF-8")))
    }
}

pub fn decode(buf: &[u8], origin: &str) -> Result<Checkpoint> {
    let mut r = Reader { buf, pos: 0, origin };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(origin, "bad magic, not an HSUN checkpoint"));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::format(origin, format!("unsupported checkpoint version {version}")));
    }
    let kind = r.string("model kind")?.parse()?;
    let stem_channels = r.u32("stem_channels")?;
    let depth = r.u32("depth")?;
    let input_channels = r.u32("input_channels")?;
    let output_channels = r.u32("output_channels")?;
    let activation = r.string("activation")?.parse()?;
    let seed = u64::from_le_bytes(r.take(8, "seed")?.try_into().expect("8 bytes"));
    let height = r.u32("height")?;
    let width = r.u32("width")?;
    let identity_attention = match r.take(1, "identity flag")?[0] {
        0 => false,
        1 => true,
        b => return Err(Error::format(origin, format!("identity flag byte {b} is not 0 or 1"))),
    };
    let spec = ModelSpec {
        kind,
        stem_channels,
        depth,
        input_channels,
        output_channels,
        activation,
        seed,
        height,
        width,
        identity_attention,
    };
    let n = r.u32("tensor count")?;
    let mut params = ParamSet::new();
    let mut extras = ParamSet::new();
    for _ in 0..n {
        let name = r.string("tensor name")?;
        let mut shape = [0usize; 4];
        for d in &mut shape {
            *d = r.u32("tensor shape")?;
        }
        let len = numel(shape);
        let bytes = r.take(len.checked_mul(8).ok_or_else(|| Error::format(origin, "tensor size overflow"))?, &name)?;
        let data = bytes
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
            .collect();
        let t = GridTensor::from_vec(shape, data)?;
        match name.strip_prefix(EXTRA_PREFIX) {
            Some(rest) => extras.insert(rest, t),
            None => params.insert(name, t),
        }
    }
    if r.pos != buf.len() {
        return Err(Error::format(origin, format!("{} trailing bytes", buf.len() - r.pos)));
    }
    spec.validate()?;
    check_against_init(&spec, &params, origin)?;
    Ok(Checkpoint {
        state: ModelState { spec, params },
        extras,
    })
}

/// Every parameter the model spec implies must be present with the right shape.
fn check_against_init(spec: &ModelSpec, params: &ParamSet, origin: &str) -> Result<()> {
    let reference = ModelState::init(spec.clone())?;
    for (name, t) in reference.params.iter() {
        match params.get(name) {
            None => return Err(Error::format(origin, format!("missing tensor '{name}'"))),
            Some(p) if p.shape() != t.shape() => {
                return Err(Error::format(
                    origin,
                    format!("tensor '{name}' has shape {:?}, expected {:?}", p.shape(), t.shape()),
                ))
            }
            _ => {}
        }
    }
    if params.len() != reference.params.len() {
        return Err(Error::format(origin, "checkpoint holds unexpected tensors"));
    }
    Ok(())
}

pub fn save(path: impl AsRef<Path>, state: &ModelState, extras: &ParamSet) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, encode(state, extras))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let buf = fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    decode(&buf, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelKind;

    #[test]
    fn round_trip_is_bitwise() {
        let state = ModelState::init(ModelSpec::new(ModelKind::Fcn7, 4, 4).with_seed(3)).unwrap();
        let mut extras = ParamSet::new();
        extras.insert("step", GridTensor::scalar(7.0));
        let bytes = encode(&state, &extras);
        let ck = decode(&bytes, "mem").unwrap();
        assert_eq!(ck.state, state);
        assert_eq!(ck.extras, extras);
        assert_eq!(encode(&ck.state, &ck.extras), bytes);
    }

    #[test]
    fn corruption_is_reported() {
        let state = ModelState::init(ModelSpec::new(ModelKind::Fcn7, 4, 4)).unwrap();
        let bytes = encode(&state, &ParamSet::new());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, "m"), Err(Error::Format { .. })));
        assert!(decode(&bytes[..bytes.len() - 1], "m").is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(&bad, "m").unwrap_err().to_string().contains("version"));
    }
}
