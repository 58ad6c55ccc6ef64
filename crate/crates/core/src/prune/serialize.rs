//! Mask files: magic, version, tensor directory (name, rank, extents) and a
//! little-endian bitset per tensor (bit set = weight kept).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{MaskTensor, PruneMask};
use crate::{Error, Result};

pub(crate) const MASK_MAGIC: &[u8; 4] = b"PLMK";
const MASK_VERSION: u32 = 1;

pub fn save_mask(path: &Path, mask: &PruneMask) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MASK_MAGIC)?;
    w.write_all(&MASK_VERSION.to_le_bytes())?;
    w.write_all(&(mask.tensors().len() as u32).to_le_bytes())?;
    for t in mask.tensors() {
        w.write_all(&(t.name.len() as u32).to_le_bytes())?;
        w.write_all(t.name.as_bytes())?;
        w.write_all(&(t.shape.len() as u32).to_le_bytes())?;
        for &e in &t.shape {
            w.write_all(&(e as u32).to_le_bytes())?;
        }
    }
    for t in mask.tensors() {
        let mut bytes = vec![0u8; t.keep.len().div_ceil(8)];
        for (i, &k) in t.keep.iter().enumerate() {
            if k {
                bytes[i / 8] |= 1 << (i % 8);
            }
        }
        w.write_all(&bytes)?;
    }
    w.flush()?;
    Ok(())
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|e| Error::Format(format!("truncated mask: {e}")))?;
    Ok(u32::from_le_bytes(b))
}

pub fn load_mask(path: &Path) -> Result<PruneMask> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MASK_MAGIC {
        return Err(Error::Format("not a mask file".into()));
    }
    let version = read_u32(&mut r)?;
    if version != MASK_VERSION {
        return Err(Error::Format(format!("unsupported mask version {version}")));
    }
    let count = read_u32(&mut r)? as usize;
    let mut dir = Vec::with_capacity(count);
    for _ in 0..count {
        let len = read_u32(&mut r)? as usize;
        let mut name = vec![0u8; len];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| Error::Format("mask name is not UTF-8".into()))?;
        let rank = read_u32(&mut r)? as usize;
        let shape = (0..rank).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        dir.push((name, shape));
    }
    let mut tensors = Vec::with_capacity(count);
    for (name, shape) in dir {
        let n: usize = shape.iter().product();
        let mut bytes = vec![0u8; n.div_ceil(8)];
        r.read_exact(&mut bytes).map_err(|e| Error::Format(format!("truncated mask: {e}")))?;
        let keep = (0..n).map(|i| bytes[i / 8] & (1 << (i % 8)) != 0).collect();
        tensors.push(MaskTensor { name, shape, keep });
    }
    PruneMask::from_tensors(tensors)
}
