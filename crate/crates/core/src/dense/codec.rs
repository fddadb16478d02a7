//! Dense index file: fixed little-endian header, `count × dimension` f32
//! vectors, then the passage-id table. See `docs/FORMATS.md`.

use std::io::{Read, Write};
use std::path::Path;

use super::DenseIndex;
use crate::error::{Error, Result};

pub const DENSE_FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BSDENSE\0";

pub fn write_dense<W: Write>(idx: &DenseIndex, mut w: W) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&DENSE_FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(idx.dimension() as u32).to_le_bytes())?;
    w.write_all(&(idx.len() as u32).to_le_bytes())?;
    let enc = idx.encoder_id().as_bytes();
    w.write_all(&(enc.len() as u32).to_le_bytes())?;
    w.write_all(enc)?;
    for v in idx.raw_vectors() {
        w.write_all(&v.to_le_bytes())?;
    }
    for id in idx.ids() {
        w.write_all(&(id.len() as u32).to_le_bytes())?;
        w.write_all(id.as_bytes())?;
    }
    w.flush()
}

fn u32_le<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn string<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len = u32_le(r)? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

pub fn read_dense<R: Read>(mut r: R, path: &Path) -> Result<DenseIndex> {
    let io = |e: std::io::Error| Error::format(path, format!("truncated or corrupt: {e}"));
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::format(path, "not a dense index (bad magic)"));
    }
    let version = u32_le(&mut r).map_err(io)?;
    if version != DENSE_FORMAT_VERSION {
        return Err(Error::format(
            path,
            format!("format version {version} is not supported (expected {DENSE_FORMAT_VERSION})"),
        ));
    }
    let dimension = u32_le(&mut r).map_err(io)? as usize;
    let count = u32_le(&mut r).map_err(io)? as usize;
    let encoder_id = string(&mut r).map_err(io)?;

    let mut raw = vec![0u8; count * dimension * 4];
    r.read_exact(&mut raw).map_err(io)?;
    let vectors: Vec<f32> = raw
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let ids = (0..count).map(|_| string(&mut r)).collect::<std::io::Result<Vec<_>>>().map_err(io)?;
    let mut rest = Vec::new();
    r.read_to_end(&mut rest).map_err(io)?;
    if !rest.is_empty() {
        return Err(Error::format(path, "trailing bytes after passage table"));
    }
    Ok(DenseIndex::from_raw(dimension, encoder_id, ids, vectors))
}
