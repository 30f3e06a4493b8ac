use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{KnowledgeBase, KnowledgeEntry, Sample, SampleSet};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct DatasetHeader {
    d_t: usize,
    d_v: usize,
}

#[derive(Serialize, Deserialize)]
struct KnowledgeHeader {
    d_k: usize,
}

#[derive(Deserialize)]
struct RawSample {
    id: String,
    label: i64,
    text_emb: Vec<f64>,
    image_emb: Vec<f64>,
}

#[derive(Serialize)]
struct SampleRef<'a> {
    id: &'a str,
    label: u8,
    text_emb: &'a [f32],
    image_emb: &'a [f32],
}

#[derive(Deserialize)]
struct RawEntry {
    id: String,
    key_emb: Vec<f64>,
    #[serde(default)]
    payload: String,
}

#[derive(Serialize)]
struct EntryRef<'a> {
    id: &'a str,
    payload: &'a str,
    key_emb: &'a [f32],
}

/// Non-blank lines, paired with their zero-based position among records.
fn lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<String>> {
    reader
        .lines()
        .map(|l| l.map_err(Error::from))
        .filter(|l| !matches!(l, Ok(s) if s.trim().is_empty()))
}

fn narrow(record: usize, field: &'static str, v: Vec<f64>) -> Result<Vec<f32>> {
    v.into_iter()
        .map(|x| {
            let y = x as f32;
            if y.is_finite() {
                Ok(y)
            } else {
                Err(Error::NonFiniteValue { record, field })
            }
        })
        .collect()
}

fn parse_header<T: for<'de> Deserialize<'de>>(line: Option<Result<String>>) -> Result<T> {
    let line = line.ok_or_else(|| Error::BadHeader("missing header line".into()))??;
    serde_json::from_str(&line).map_err(|e| Error::BadHeader(e.to_string()))
}

fn parse_record<T: for<'de> Deserialize<'de>>(record: usize, line: &str) -> Result<T> {
    // Check it is an object first so the message is about shape, not serde internals.
    let value: Value = serde_json::from_str(line).map_err(|e| Error::Malformed {
        record,
        message: e.to_string(),
    })?;
    serde_json::from_value(value).map_err(|e| Error::Malformed {
        record,
        message: e.to_string(),
    })
}

pub(super) fn read_dataset<R: BufRead>(reader: R) -> Result<SampleSet> {
    let mut it = lines(reader);
    let header: DatasetHeader = parse_header(it.next())?;
    let mut samples = Vec::new();
    for (record, line) in it.enumerate() {
        let raw: RawSample = parse_record(record, &line?)?;
        if !(0..=1).contains(&raw.label) {
            return Err(Error::InvalidLabel {
                record,
                label: raw.label,
            });
        }
        samples.push(Sample {
            id: raw.id,
            label: raw.label as u8,
            text_emb: narrow(record, "text_emb", raw.text_emb)?,
            image_emb: narrow(record, "image_emb", raw.image_emb)?,
        });
    }
    Ok(SampleSet {
        d_t: header.d_t,
        d_v: header.d_v,
        samples,
    })
}

pub(super) fn write_dataset<W: Write>(set: &SampleSet, w: &mut W) -> Result<()> {
    serde_json::to_writer(
        &mut *w,
        &DatasetHeader {
            d_t: set.d_t,
            d_v: set.d_v,
        },
    )?;
    w.write_all(b"\n")?;
    for s in &set.samples {
        serde_json::to_writer(
            &mut *w,
            &SampleRef {
                id: &s.id,
                label: s.label,
                text_emb: &s.text_emb,
                image_emb: &s.image_emb,
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub(super) fn read_knowledge_base<R: BufRead>(reader: R) -> Result<KnowledgeBase> {
    let mut it = lines(reader);
    let header: KnowledgeHeader = parse_header(it.next())?;
    let mut entries = Vec::new();
    for (record, line) in it.enumerate() {
        let raw: RawEntry = parse_record(record, &line?)?;
        entries.push(KnowledgeEntry {
            id: raw.id,
            key_emb: narrow(record, "key_emb", raw.key_emb)?,
            payload: raw.payload,
        });
    }
    Ok(KnowledgeBase {
        d_k: header.d_k,
        entries,
    })
}

pub(super) fn write_knowledge_base<W: Write>(kb: &KnowledgeBase, w: &mut W) -> Result<()> {
    serde_json::to_writer(&mut *w, &KnowledgeHeader { d_k: kb.d_k })?;
    w.write_all(b"\n")?;
    for e in &kb.entries {
        serde_json::to_writer(
            &mut *w,
            &EntryRef {
                id: &e.id,
                payload: &e.payload,
                key_emb: &e.key_emb,
            },
        )?;
        w.write_all(b"\n")?;
    }
    Ok(())
}
