//! Embedding datasets and knowledge bases.
//!
//! Vectors are held as `f32`, the on-disk precision, and widened to `f64` at
//! the point of computation. Two on-disk encodings are supported: a JSONL
//! text form with a header line, and the little-endian binary layouts
//! `QFSE` (datasets) and `QFKB` (knowledge bases).

mod binary;
mod jsonl;
mod synth;

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use synth::{synth_dataset, SynthConfig};

pub const DEFAULT_TEXT_DIM: usize = 768;
pub const DEFAULT_IMAGE_DIM: usize = 2048;
pub const DEFAULT_KEY_DIM: usize = 768;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: String,
    pub label: u8,
    pub text_emb: Vec<f32>,
    pub image_emb: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    pub d_t: usize,
    pub d_v: usize,
    pub samples: Vec<Sample>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeEntry {
    pub id: String,
    pub key_emb: Vec<f32>,
    pub payload: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnowledgeBase {
    pub d_k: usize,
    pub entries: Vec<KnowledgeEntry>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Binary,
}

impl Format {
    /// `.jsonl`/`.json` paths are text, everything else is binary.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("json") => Format::Jsonl,
            _ => Format::Binary,
        }
    }
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "jsonl" => Ok(Format::Jsonl),
            "binary" => Ok(Format::Binary),
            other => Err(Error::InvalidConfig(format!("unknown format {other:?}"))),
        }
    }
}

fn check_vector(record: usize, field: &'static str, v: &[f32], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::DimensionMismatch {
            record,
            field,
            expected,
            found: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFiniteValue { record, field });
    }
    Ok(())
}

impl Sample {
    pub fn text_f64(&self) -> Vec<f64> {
        self.text_emb.iter().map(|&x| x as f64).collect()
    }

    pub fn image_f64(&self) -> Vec<f64> {
        self.image_emb.iter().map(|&x| x as f64).collect()
    }
}

impl SampleSet {
    /// Checks every invariant, reporting the first offending record.
    pub fn validate(&self) -> Result<()> {
        if self.d_t == 0 || self.d_v == 0 {
            return Err(Error::BadHeader("dimensions must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(self.samples.len());
        for (i, s) in self.samples.iter().enumerate() {
            if s.label > 1 {
                return Err(Error::InvalidLabel {
                    record: i,
                    label: s.label as i64,
                });
            }
            check_vector(i, "text_emb", &s.text_emb, self.d_t)?;
            check_vector(i, "image_emb", &s.image_emb, self.d_v)?;
            if !seen.insert(s.id.as_str()) {
                return Err(Error::DuplicateId {
                    record: i,
                    id: s.id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn find(&self, id: &str) -> Result<&Sample> {
        self.samples
            .iter()
            .find(|s| s.id == id)
            .ok_or_else(|| Error::UnknownSample(id.to_string()))
    }

    /// Copies the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> SampleSet {
        SampleSet {
            d_t: self.d_t,
            d_v: self.d_v,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

impl KnowledgeBase {
    pub fn validate(&self) -> Result<()> {
        if self.d_k == 0 {
            return Err(Error::BadHeader("d_k must be positive".into()));
        }
        let mut seen = HashSet::with_capacity(self.entries.len());
        for (i, e) in self.entries.iter().enumerate() {
            check_vector(i, "key_emb", &e.key_emb, self.d_k)?;
            if e.key_emb.iter().all(|&x| x == 0.0) {
                return Err(Error::ZeroKey { id: e.id.clone() });
            }
            if !seen.insert(e.id.as_str()) {
                return Err(Error::DuplicateId {
                    record: i,
                    id: e.id.clone(),
                });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

pub fn read_dataset(path: impl AsRef<Path>, format: Format) -> Result<SampleSet> {
    let reader = BufReader::new(File::open(path)?);
    let set = match format {
        Format::Jsonl => jsonl::read_dataset(reader)?,
        Format::Binary => binary::read_dataset(reader)?,
    };
    set.validate()?;
    Ok(set)
}

pub fn write_dataset(set: &SampleSet, path: impl AsRef<Path>, format: Format) -> Result<()> {
    if set.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    set.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Jsonl => jsonl::write_dataset(set, &mut w)?,
        Format::Binary => binary::write_dataset(set, &mut w)?,
    }
    w.flush()?;
    Ok(())
}

pub fn read_knowledge_base(path: impl AsRef<Path>, format: Format) -> Result<KnowledgeBase> {
    let reader = BufReader::new(File::open(path)?);
    let kb = match format {
        Format::Jsonl => jsonl::read_knowledge_base(reader)?,
        Format::Binary => binary::read_knowledge_base(reader)?,
    };
    kb.validate()?;
    Ok(kb)
}

pub fn write_knowledge_base(
    kb: &KnowledgeBase,
    path: impl AsRef<Path>,
    format: Format,
) -> Result<()> {
    if kb.is_empty() {
        return Err(Error::Empty("knowledge base"));
    }
    kb.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    match format {
        Format::Jsonl => jsonl::write_knowledge_base(kb, &mut w)?,
        Format::Binary => binary::write_knowledge_base(kb, &mut w)?,
    }
    w.flush()?;
    Ok(())
}
