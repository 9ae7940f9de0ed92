//! Self-describing binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!   magic "QCKPT\0" | version u32 | count u32
//!   then per parameter:
//!   name_len u32 | name utf-8 | ndim u32 | dims u32 each | values f64 LE
//!
//! Round-trips are byte-identical: save(load(bytes)) == bytes.

use crate::error::{Error, Result};
use crate::numerics::params::ParamStore;
use crate::numerics::tensor::Tensor;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 6] = b"QCKPT\0";
const VERSION: u32 = 1;

pub fn save_checkpoint(path: &Path, params: &ParamStore) -> Result<()> {
    let mut buf = Vec::with_capacity(64 + params.total_len() * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, tensor) in params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(tensor.shape.len() as u32).to_le_bytes());
        for &d in &tensor.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for v in &tensor.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<ParamStore> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = 0usize;

    let take = |cur: &mut usize, n: usize| -> Result<&[u8]> {
        if *cur + n > bytes.len() {
            return Err(Error::usage("checkpoint truncated"));
        }
        let s = &bytes[*cur..*cur + n];
        *cur += n;
        Ok(s)
    };
    let take_u32 = |cur: &mut usize| -> Result<u32> {
        let s = take(cur, 4)?;
        Ok(u32::from_le_bytes([s[0], s[1], s[2], s[3]]))
    };

    if take(&mut cur, 6)? != MAGIC {
        return Err(Error::usage("not a checkpoint file (bad magic)"));
    }
    let version = take_u32(&mut cur)?;
    if version != VERSION {
        return Err(Error::usage(format!("unsupported checkpoint version {version}")));
    }
    let count = take_u32(&mut cur)? as usize;
    let mut params = ParamStore::new();
    for _ in 0..count {
        let name_len = take_u32(&mut cur)? as usize;
        let name = String::from_utf8(take(&mut cur, name_len)?.to_vec())
            .map_err(|_| Error::usage("checkpoint parameter name is not utf-8"))?;
        let ndim = take_u32(&mut cur)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(take_u32(&mut cur)? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = take(&mut cur, n * 8)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect();
        params.push(name, Tensor::new(shape, data)?);
    }
    if cur != bytes.len() {
        return Err(Error::usage("checkpoint has trailing bytes"));
    }
    Ok(params)
}
