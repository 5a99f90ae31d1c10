//! Binary store file.
//!
//! ```text
//! magic      8 bytes  "SLEDGER1"
//! blocks     u32 LE
//! per block: year i32 LE, articles u32 LE, then per article:
//!            varint id length, id bytes (UTF-8),
//!            varint n, n delta-coded varints (all keywords),
//!            varint n, n delta-coded varints (major keywords)
//! trailer    32 bytes SHA-256 of everything before it
//! ```
//!
//! Delta coding stores the first id as-is and each later id as the gap to
//! its predecessor. Lists are strictly ascending so gaps are at least one.

use std::io::{self, Read, Write};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ArticleRecord, CorpusStore, YearBlock};
use crate::ontology::KeywordId;

pub const STORE_MAGIC: &[u8; 8] = b"SLEDGER1";

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("not a store file (bad magic)")]
    BadMagic,
    #[error("store file is truncated or corrupt: {0}")]
    Corrupt(String),
    #[error("store checksum mismatch")]
    Checksum,
    #[error(transparent)]
    Io(#[from] io::Error),
}

struct HashingWriter<W> {
    inner: W,
    hasher: Sha256,
}

impl<W: Write> Write for HashingWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

fn put_varint<W: Write>(w: &mut W, mut v: u64) -> io::Result<()> {
    let mut bytes = [0u8; 10];
    let mut n = 0;
    loop {
        let b = (v & 0x7f) as u8;
        v >>= 7;
        if v == 0 {
            bytes[n] = b;
            n += 1;
            break;
        }
        bytes[n] = b | 0x80;
        n += 1;
    }
    w.write_all(&bytes[..n])
}

fn put_ids<W: Write>(w: &mut W, ids: &[KeywordId]) -> io::Result<()> {
    put_varint(w, ids.len() as u64)?;
    let mut prev = 0u32;
    for (i, id) in ids.iter().enumerate() {
        let v = if i == 0 { id.0 } else { id.0 - prev };
        put_varint(w, u64::from(v))?;
        prev = id.0;
    }
    Ok(())
}

pub fn write_store<W: Write>(store: &CorpusStore, out: W) -> Result<(), PersistError> {
    let mut w = HashingWriter { inner: out, hasher: Sha256::new() };
    w.write_all(STORE_MAGIC)?;
    w.write_all(&(store.years.len() as u32).to_le_bytes())?;
    for block in &store.years {
        w.write_all(&block.year.to_le_bytes())?;
        w.write_all(&(block.articles.len() as u32).to_le_bytes())?;
        for a in &block.articles {
            put_varint(&mut w, a.article_id.len() as u64)?;
            w.write_all(a.article_id.as_bytes())?;
            put_ids(&mut w, &a.all_keywords)?;
            put_ids(&mut w, &a.major_keywords)?;
        }
    }
    let digest = w.hasher.finalize();
    w.inner.write_all(&digest)?;
    w.inner.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], PersistError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| PersistError::Corrupt(format!("unexpected end at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, PersistError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn varint(&mut self) -> Result<u64, PersistError> {
        let mut v = 0u64;
        for shift in (0..64).step_by(7) {
            let b = self.take(1)?[0];
            v |= u64::from(b & 0x7f) << shift;
            if b & 0x80 == 0 {
                return Ok(v);
            }
        }
        Err(PersistError::Corrupt(format!("varint overflow at byte {}", self.pos)))
    }

    fn ids(&mut self) -> Result<Vec<KeywordId>, PersistError> {
        let n = self.varint()? as usize;
        if n > self.buf.len() - self.pos {
            return Err(PersistError::Corrupt("keyword count exceeds file size".into()));
        }
        let mut out = Vec::with_capacity(n);
        let mut prev = 0u64;
        for i in 0..n {
            let d = self.varint()?;
            if i > 0 && d == 0 {
                return Err(PersistError::Corrupt("keyword list not strictly ascending".into()));
            }
            let v = if i == 0 { d } else { prev + d };
            let id = u32::try_from(v).map_err(|_| PersistError::Corrupt("keyword id overflow".into()))?;
            out.push(KeywordId(id));
            prev = v;
        }
        Ok(out)
    }
}

pub fn read_store<R: Read>(mut input: R) -> Result<CorpusStore, PersistError> {
    let mut buf = Vec::new();
    input.read_to_end(&mut buf)?;
    if buf.len() < STORE_MAGIC.len() || &buf[..8] != STORE_MAGIC {
        return Err(PersistError::BadMagic);
    }
    if buf.len() < 8 + 4 + 32 {
        return Err(PersistError::Corrupt("file too short".into()));
    }
    let (body, digest) = buf.split_at(buf.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(PersistError::Checksum);
    }
    let mut c = Cursor { buf: body, pos: 8 };
    let n_blocks = c.u32()?;
    let mut years = Vec::with_capacity(n_blocks.min(4096) as usize);
    let mut last_year = None;
    for _ in 0..n_blocks {
        let year = c.u32()? as i32;
        if last_year.is_some_and(|y| y >= year) {
            return Err(PersistError::Corrupt("year blocks not ascending".into()));
        }
        last_year = Some(year);
        let n = c.u32()?;
        let mut articles = Vec::with_capacity(n.min(1 << 20) as usize);
        for _ in 0..n {
            let len = c.varint()? as usize;
            let id = std::str::from_utf8(c.take(len)?)
                .map_err(|_| PersistError::Corrupt("article id is not UTF-8".into()))?
                .to_string();
            let all = c.ids()?;
            let major = c.ids()?;
            let rec = ArticleRecord::new(id, year, all, major)
                .map_err(|e| PersistError::Corrupt(e.to_string()))?;
            articles.push(rec);
        }
        years.push(YearBlock::new(year, articles));
    }
    if c.pos != body.len() {
        return Err(PersistError::Corrupt("trailing bytes".into()));
    }
    Ok(CorpusStore { years })
}
