//! SIGD: a little-endian container for a stack of daily grids.
//!
//! ```text
//! magic      b"SIGD"
//! version    b'1'
//! height     u32
//! width      u32
//! n_vars     u32
//! n_days     u32
//! var names  n_vars x (u32 byte length, UTF-8 bytes)
//! start date u32 byte length, ISO-8601 "YYYY-MM-DD"
//! body       n_days x n_vars x height x width f32, row-major,
//!            day-major then variable; quiet NaN marks a missing pixel
//! ```

use std::fs;
use std::io::Read;
use std::path::Path;

use chrono::NaiveDate;

use super::grid::{GridStack, VarGrid};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SIGD";
pub const VERSION: u8 = b'1';

/// Serializes a stack to bytes.
pub fn encode(stack: &GridStack) -> Vec<u8> {
    let hw = stack.height * stack.width;
    let mut out = Vec::with_capacity(64 + stack.grids.len() * hw * 4);
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    for n in [stack.height, stack.width, stack.vars.len(), stack.n_days] {
        out.extend_from_slice(&(n as u32).to_le_bytes());
    }
    for v in &stack.vars {
        out.extend_from_slice(&(v.len() as u32).to_le_bytes());
        out.extend_from_slice(v.as_bytes());
    }
    let date = stack.start.format("%Y-%m-%d").to_string();
    out.extend_from_slice(&(date.len() as u32).to_le_bytes());
    out.extend_from_slice(date.as_bytes());
    for g in &stack.grids {
        for v in g.raw() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Cursor<'a> {
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

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let n = self.u32(what)? as usize;
        let b = self.take(n, what)?;
        String::from_utf8(b.to_vec())
            .map_err(|_| Error::format(self.origin, format!("{what} is not UTF-8")))
    }
}

/// Parses bytes produced by [`encode`]. `origin` names the source in errors.
pub fn decode(buf: &[u8], origin: &str) -> Result<GridStack> {
    let mut c = Cursor {
        buf,
        pos: 0,
        origin,
    };
    if c.take(4, "magic")? != MAGIC {
        return Err(Error::format(origin, "bad magic, not a SIGD file"));
    }
    let version = c.take(1, "version")?[0];
    if version != VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported SIGD version '{}'", version as char),
        ));
    }
    let height = c.u32("height")? as usize;
    let width = c.u32("width")? as usize;
    let n_vars = c.u32("n_vars")? as usize;
    let n_days = c.u32("n_days")? as usize;
    let vars = (0..n_vars)
        .map(|_| c.string("variable name"))
        .collect::<Result<Vec<_>>>()?;
    let date_str = c.string("start date")?;
    let start = NaiveDate::parse_from_str(&date_str, "%Y-%m-%d")
        .map_err(|e| Error::format(origin, format!("start date '{date_str}': {e}")))?;

    let hw = height * width;
    let body_len = n_days
        .checked_mul(n_vars)
        .and_then(|n| n.checked_mul(hw))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::format(origin, "header dimensions overflow"))?;
    let body = c.take(body_len, "grid body")?;
    if c.pos != buf.len() {
        return Err(Error::format(
            origin,
            format!("{} trailing bytes after body", buf.len() - c.pos),
        ));
    }
    let mut stack = GridStack::new(height, width, start, vars.clone(), n_days);
    let mut floats = body
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]));
    for day in 0..n_days {
        let date = stack.date(day);
        for (vi, v) in vars.iter().enumerate() {
            let raw: Vec<f32> = floats.by_ref().take(hw).collect();
            stack.grids[day * n_vars + vi] = VarGrid::from_raw(v.clone(), date, height, width, raw)?;
        }
    }
    Ok(stack)
}

pub fn write_stack(path: impl AsRef<Path>, stack: &GridStack) -> Result<()> {
    fs::write(path, encode(stack))?;
    Ok(())
}

pub fn read_stack(path: impl AsRef<Path>) -> Result<GridStack> {
    let path = path.as_ref();
    let mut f = fs::File::open(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    let mut buf = Vec::new();
    f.read_to_end(&mut buf)?;
    decode(&buf, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    /// Bytes of a 1x2 grid, one variable "sic", one day, values [0.5, NaN],
    /// written out by hand.
    fn golden() -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(b"SIGD1");
        b.extend_from_slice(&[1, 0, 0, 0]); // height
        b.extend_from_slice(&[2, 0, 0, 0]); // width
        b.extend_from_slice(&[1, 0, 0, 0]); // n_vars
        b.extend_from_slice(&[1, 0, 0, 0]); // n_days
        b.extend_from_slice(&[3, 0, 0, 0]);
        b.extend_from_slice(b"sic");
        b.extend_from_slice(&[10, 0, 0, 0]);
        b.extend_from_slice(b"2022-03-01");
        b.extend_from_slice(&[0x00, 0x00, 0x00, 0x3f]); // 0.5f32
        b.extend_from_slice(&[0x00, 0x00, 0xc0, 0x7f]); // quiet NaN
        b
    }

    #[test]
    fn golden_file_decodes_and_reencodes() {
        let s = decode(&golden(), "golden").unwrap();
        assert_eq!((s.height, s.width, s.n_days), (1, 2, 1));
        assert_eq!(s.start, date("2022-03-01"));
        let g = s.get(0, "sic").unwrap();
        assert_eq!(g.values, vec![0.5, 0.0]);
        assert_eq!(g.valid, vec![true, false]);
        assert_eq!(encode(&s), golden());
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let mut bad = golden();
        bad[0] = b'X';
        assert!(matches!(decode(&bad, "x"), Err(Error::Format { .. })));
        let mut bad = golden();
        bad[4] = b'2';
        let err = decode(&bad, "x").unwrap_err().to_string();
        assert!(err.contains("version"), "{err}");
        let g = golden();
        let err = decode(&g[..g.len() - 3], "x").unwrap_err().to_string();
        assert!(err.contains("truncated"), "{err}");
    }

    #[test]
    fn missing_file_is_named() {
        assert!(matches!(
            read_stack("/nonexistent/world.sigd"),
            Err(Error::MissingFile(_))
        ));
    }
}
