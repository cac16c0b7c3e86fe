//! Checkpoint files.
//!
//! ```text
//! "PNN1"  u32 record count
//! record: u32 name length, name bytes (UTF-8),
//!         u8 nbits, u8 es (255 for IEEE floats), u8 rank, rank × u32 extents,
//!         elements as little-endian ceil(nbits/8)-byte patterns
//! ```
//! All integers are little-endian.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::posit::PositConfig;
use crate::tensor::{Numeric, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PNN1";
const FLOAT_ES: u8 = 255;

fn kind_code(kind: Numeric) -> (u8, u8) {
    match kind {
        Numeric::F32 => (32, FLOAT_ES),
        Numeric::F64 => (64, FLOAT_ES),
        Numeric::Posit(c) => (c.nbits() as u8, c.es() as u8),
    }
}

pub fn encode_tensors<'a>(records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Vec<u8> {
    let records: Vec<_> = records.into_iter().collect();
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend((records.len() as u32).to_le_bytes());
    for (name, t) in records {
        out.extend((name.len() as u32).to_le_bytes());
        out.extend(name.as_bytes());
        let (nbits, es) = kind_code(t.kind());
        out.extend([nbits, es, t.rank() as u8]);
        for &d in t.shape() {
            out.extend((d as u32).to_le_bytes());
        }
        let width = (nbits as usize).div_ceil(8);
        for &w in t.contiguous().words() {
            out.extend(&w.to_le_bytes()[..width]);
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::Checkpoint { path: self.path.to_path_buf(), reason: reason.into() }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!("truncated while reading {what} at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4, "magic")? != CHECKPOINT_MAGIC {
        return Err(r.fail("not a PNN1 checkpoint"));
    }
    let count = r.u32("record count")?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32("name length")? as usize;
        let name = String::from_utf8(r.take(len, "name")?.to_vec()).map_err(|_| r.fail("tensor name is not UTF-8"))?;
        let (nbits, es) = (r.u8("nbits")?, r.u8("es")?);
        let kind = match (nbits, es) {
            (32, FLOAT_ES) => Numeric::F32,
            (64, FLOAT_ES) => Numeric::F64,
            _ => Numeric::Posit(
                PositConfig::new(nbits as u32, es as u32).map_err(|e| r.fail(format!("{name}: {e}")))?,
            ),
        };
        let rank = r.u8("rank")? as usize;
        let shape = (0..rank).map(|_| r.u32("extent").map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let width = (nbits as usize).div_ceil(8);
        let raw = r.take(n * width, &format!("{name} data"))?;
        let words = raw
            .chunks(width)
            .map(|c| {
                let mut b = [0u8; 8];
                b[..width].copy_from_slice(c);
                u64::from_le_bytes(b)
            })
            .collect();
        out.push((name, Tensor::from_words(&shape, words, kind)?));
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

pub fn save_tensors<'a>(path: &Path, records: impl IntoIterator<Item = (&'a str, &'a Tensor)>) -> Result<()> {
    fs::write(path, encode_tensors(records)).map_err(|e| Error::io(path, e))
}

pub fn load_tensors(path: &Path) -> Result<Vec<(String, Tensor)>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_tensors(&bytes, path)
}
