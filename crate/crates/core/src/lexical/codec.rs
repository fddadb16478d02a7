//! Binary encoding of [`LexicalIndex`]. The layout is described in
//! `docs/FORMATS.md`; every integer after the fixed header is an unsigned
//! LEB128 varint and strings are varint-length-prefixed UTF-8.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use integer_encoding::{VarIntReader, VarIntWriter};

use super::{ExactPosting, GramPosting, LexicalIndex};
use crate::analysis::AnalyzerConfig;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"BSLEXIDX";
const TRAILER: &[u8; 8] = b"BSLEXEND";

fn put_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_varint(s.len() as u64)?;
    w.write_all(s.as_bytes())
}

fn get_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let len: u64 = r.read_varint()?;
    let mut buf = vec![0u8; len as usize];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

fn get_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_varint_u32<R: Read>(r: &mut R) -> std::io::Result<u32> {
    let v: u64 = r.read_varint()?;
    u32::try_from(v).map_err(|_| std::io::Error::new(std::io::ErrorKind::InvalidData, "varint overflows u32"))
}

pub fn write_index<W: Write>(idx: &LexicalIndex, mut w: W) -> std::io::Result<()> {
    let a = idx.analyzer();
    w.write_all(MAGIC)?;
    w.write_all(&FORMAT_VERSION.to_le_bytes())?;
    w.write_all(&(a.min_gram as u32).to_le_bytes())?;
    w.write_all(&(a.max_gram as u32).to_le_bytes())?;
    w.write_all(&[u8::from(a.lowercase) | (u8::from(a.ascii_fold) << 1)])?;

    w.write_varint(idx.len() as u64)?;
    for (id, len) in idx.unit_ids().iter().zip(idx.lengths()) {
        put_str(&mut w, id)?;
        w.write_varint(u64::from(*len))?;
    }

    w.write_varint(idx.exact_terms().len() as u64)?;
    for (term, postings) in idx.exact_terms() {
        put_str(&mut w, term)?;
        w.write_varint(postings.len() as u64)?;
        let mut prev_unit = 0;
        for p in postings {
            w.write_varint(u64::from(p.unit - prev_unit))?;
            prev_unit = p.unit;
            w.write_varint(p.positions.len() as u64)?;
            let mut prev_pos = 0;
            for &pos in &p.positions {
                w.write_varint(u64::from(pos - prev_pos))?;
                prev_pos = pos;
            }
        }
    }

    w.write_varint(idx.grams().len() as u64)?;
    for (gram, postings) in idx.grams() {
        put_str(&mut w, gram)?;
        w.write_varint(postings.len() as u64)?;
        let mut prev_unit = 0;
        for p in postings {
            w.write_varint(u64::from(p.unit - prev_unit))?;
            prev_unit = p.unit;
            w.write_varint(u64::from(p.freq))?;
        }
    }
    w.write_all(TRAILER)?;
    w.flush()
}

fn decode<R: Read>(r: &mut R, path: &Path) -> Result<LexicalIndex> {
    let bad = |m: String| Error::format(path, m);
    let io = |e: std::io::Error| Error::format(path, format!("truncated or corrupt: {e}"));

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(bad("not a lexical index (bad magic)".into()));
    }
    let version = get_u32(r).map_err(io)?;
    if version != FORMAT_VERSION {
        return Err(bad(format!(
            "format version {version} is not supported (expected {FORMAT_VERSION})"
        )));
    }
    let min_gram = get_u32(r).map_err(io)? as usize;
    let max_gram = get_u32(r).map_err(io)? as usize;
    let mut flags = [0u8; 1];
    r.read_exact(&mut flags).map_err(io)?;
    let analyzer = AnalyzerConfig {
        min_gram,
        max_gram,
        lowercase: flags[0] & 1 != 0,
        ascii_fold: flags[0] & 2 != 0,
    };
    analyzer.validate()?;

    let n: u64 = r.read_varint().map_err(io)?;
    let mut unit_ids = Vec::with_capacity(n as usize);
    let mut lengths = Vec::with_capacity(n as usize);
    for _ in 0..n {
        unit_ids.push(get_str(r).map_err(io)?);
        lengths.push(get_varint_u32(r).map_err(io)?);
    }
    if unit_ids.windows(2).any(|w| w[0] >= w[1]) {
        return Err(bad("unit ids are not strictly ascending".into()));
    }

    let check_unit = |u: u32| {
        if (u as usize) < unit_ids.len() {
            Ok(u)
        } else {
            Err(bad(format!("posting references unknown unit ordinal {u}")))
        }
    };

    let term_count: u64 = r.read_varint().map_err(io)?;
    let mut exact = BTreeMap::new();
    for _ in 0..term_count {
        let term = get_str(r).map_err(io)?;
        let count: u64 = r.read_varint().map_err(io)?;
        let mut postings = Vec::with_capacity(count as usize);
        let mut unit = 0u32;
        for _ in 0..count {
            unit += get_varint_u32(r).map_err(io)?;
            let tf: u64 = r.read_varint().map_err(io)?;
            let mut positions = Vec::with_capacity(tf as usize);
            let mut pos = 0u32;
            for _ in 0..tf {
                pos += get_varint_u32(r).map_err(io)?;
                positions.push(pos);
            }
            postings.push(ExactPosting {
                unit: check_unit(unit)?,
                positions,
            });
        }
        exact.insert(term, postings);
    }

    let gram_count: u64 = r.read_varint().map_err(io)?;
    let mut ngram = BTreeMap::new();
    for _ in 0..gram_count {
        let gram = get_str(r).map_err(io)?;
        let count: u64 = r.read_varint().map_err(io)?;
        let mut postings = Vec::with_capacity(count as usize);
        let mut unit = 0u32;
        for _ in 0..count {
            unit += get_varint_u32(r).map_err(io)?;
            let freq = get_varint_u32(r).map_err(io)?;
            postings.push(GramPosting {
                unit: check_unit(unit)?,
                freq,
            });
        }
        ngram.insert(gram, postings);
    }

    let mut trailer = [0u8; 8];
    r.read_exact(&mut trailer).map_err(io)?;
    if &trailer != TRAILER {
        return Err(bad("missing trailer".into()));
    }
    Ok(LexicalIndex::from_parts(analyzer, unit_ids, lengths, exact, ngram))
}

/// Decodes an index; `path` is only used for error messages.
pub fn read_index<R: Read>(mut r: R, path: &Path) -> Result<LexicalIndex> {
    decode(&mut r, path)
}
