//! Little-endian binary layouts.
//!
//! ```text
//! QFSE: "QFSE" u16 version u32 n_samples u32 d_t u32 d_v
//!       { u32 id_len, id, u8 label, d_t x f32, d_v x f32 }*
//! QFKB: "QFKB" u16 version u32 n_entries u32 d_k
//!       { u32 id_len, id, u32 payload_len, payload, d_k x f32 }*
//! ```

use std::io::{self, Read, Write};

use super::{KnowledgeBase, KnowledgeEntry, Sample, SampleSet};
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"QFSE";
pub const KNOWLEDGE_MAGIC: [u8; 4] = *b"QFKB";
pub const VERSION: u16 = 1;

// Reject absurd lengths before allocating for them.
const MAX_STRING_LEN: u32 = 1 << 26;

struct Reader<R> {
    inner: R,
    record: Option<usize>,
}

impl<R: Read> Reader<R> {
    fn fail(&self, e: io::Error) -> Error {
        match (e.kind(), self.record) {
            (io::ErrorKind::UnexpectedEof, Some(record)) => Error::Malformed {
                record,
                message: "truncated record".into(),
            },
            (io::ErrorKind::UnexpectedEof, None) => Error::BadHeader("truncated header".into()),
            _ => Error::Io(e),
        }
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf).map_err(|e| self.fail(e))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes()?))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String> {
        let len = self.u32()?;
        let record = self.record.unwrap_or(0);
        if len > MAX_STRING_LEN {
            return Err(Error::Malformed {
                record,
                message: format!("string length {len} too large"),
            });
        }
        let mut buf = vec![0u8; len as usize];
        self.inner.read_exact(&mut buf).map_err(|e| self.fail(e))?;
        String::from_utf8(buf).map_err(|_| Error::Malformed {
            record,
            message: "invalid UTF-8".into(),
        })
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let mut buf = vec![0u8; n * 4];
        self.inner.read_exact(&mut buf).map_err(|e| self.fail(e))?;
        Ok(buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect())
    }

    fn preamble(&mut self, magic: [u8; 4]) -> Result<()> {
        let found = self.bytes::<4>()?;
        if found != magic {
            return Err(Error::BadMagic {
                expected: magic,
                found,
            });
        }
        let version = self.u16()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(())
    }

    fn expect_eof(&mut self) -> Result<()> {
        let mut probe = [0u8; 1];
        match self.inner.read(&mut probe)? {
            0 => Ok(()),
            _ => Err(Error::BadHeader("trailing bytes after last record".into())),
        }
    }
}

fn put_u32<W: Write>(w: &mut W, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::BadHeader(format!("{v} exceeds u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    put_u32(w, s.len())?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn put_floats<W: Write>(w: &mut W, v: &[f32]) -> Result<()> {
    let mut buf = Vec::with_capacity(v.len() * 4);
    for x in v {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub(super) fn read_dataset<R: Read>(inner: R) -> Result<SampleSet> {
    let mut r = Reader {
        inner,
        record: None,
    };
    r.preamble(DATASET_MAGIC)?;
    let n = r.u32()? as usize;
    let d_t = r.u32()? as usize;
    let d_v = r.u32()? as usize;
    let mut samples = Vec::with_capacity(n.min(1 << 16));
    for record in 0..n {
        r.record = Some(record);
        let id = r.string()?;
        let label = r.u8()?;
        if label > 1 {
            return Err(Error::InvalidLabel {
                record,
                label: label as i64,
            });
        }
        let text_emb = r.floats(d_t)?;
        let image_emb = r.floats(d_v)?;
        samples.push(Sample {
            id,
            label,
            text_emb,
            image_emb,
        });
    }
    r.expect_eof()?;
    Ok(SampleSet { d_t, d_v, samples })
}

pub(super) fn write_dataset<W: Write>(set: &SampleSet, w: &mut W) -> Result<()> {
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u32(w, set.samples.len())?;
    put_u32(w, set.d_t)?;
    put_u32(w, set.d_v)?;
    for s in &set.samples {
        put_str(w, &s.id)?;
        w.write_all(&[s.label])?;
        put_floats(w, &s.text_emb)?;
        put_floats(w, &s.image_emb)?;
    }
    Ok(())
}

pub(super) fn read_knowledge_base<R: Read>(inner: R) -> Result<KnowledgeBase> {
    let mut r = Reader {
        inner,
        record: None,
    };
    r.preamble(KNOWLEDGE_MAGIC)?;
    let n = r.u32()? as usize;
    let d_k = r.u32()? as usize;
    let mut entries = Vec::with_capacity(n.min(1 << 16));
    for record in 0..n {
        r.record = Some(record);
        let id = r.string()?;
        let payload = r.string()?;
        let key_emb = r.floats(d_k)?;
        entries.push(KnowledgeEntry {
            id,
            key_emb,
            payload,
        });
    }
    r.expect_eof()?;
    Ok(KnowledgeBase { d_k, entries })
}

pub(super) fn write_knowledge_base<W: Write>(kb: &KnowledgeBase, w: &mut W) -> Result<()> {
    w.write_all(&KNOWLEDGE_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_u32(w, kb.entries.len())?;
    put_u32(w, kb.d_k)?;
    for e in &kb.entries {
        put_str(w, &e.id)?;
        put_str(w, &e.payload)?;
        put_floats(w, &e.key_emb)?;
    }
    Ok(())
}
