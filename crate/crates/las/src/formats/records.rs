//! JSON Lines records: manifests, n-best lists and training logs.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{read_text, write_atomic, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feats: Option<PathBuf>,
    pub text: String,
}

/// `-inf` is written as `null`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbestRecord {
    pub id: String,
    pub rank: usize,
    pub text: String,
    pub tokens: Vec<u32>,
    #[serde(serialize_with = "ser_logp", deserialize_with = "de_logp")]
    pub las_logp: f64,
    #[serde(serialize_with = "ser_logp", deserialize_with = "de_logp")]
    pub lm_logp: f64,
    #[serde(serialize_with = "ser_logp", deserialize_with = "de_logp")]
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    pub sampling_prob: f64,
    pub grad_clip_events: usize,
}

fn ser_logp<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if v.is_finite() {
        s.serialize_f64(*v)
    } else {
        s.serialize_none()
    }
}

fn de_logp<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    out
}

pub fn parse_jsonl<T: DeserializeOwned>(text: &str, context: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| Error::format(format!("{context}:{}", i + 1), e.to_string())))
        .collect()
}

pub fn load_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(&read_text(path)?, &path.display().to_string())
}

pub fn save_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(records).as_bytes())
}

/// Checks that ids are unique and each record names exactly one of
/// `audio` and `feats`.
pub fn validate_manifest(records: &[ManifestRecord], context: &str) -> Result<()> {
    let mut ids = HashSet::new();
    for (i, r) in records.iter().enumerate() {
        let at = || format!("{context}: record {}", i + 1);
        if r.audio.is_some() == r.feats.is_some() {
            return Err(Error::format(at(), format!("{}: exactly one of audio and feats is required", r.id)));
        }
        if !ids.insert(r.id.as_str()) {
            return Err(Error::format(at(), format!("duplicate id {}", r.id)));
        }
    }
    Ok(())
}

/// Loads a manifest, resolving relative paths against its directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let mut records: Vec<ManifestRecord> = load_jsonl(path)?;
    validate_manifest(&records, &path.display().to_string())?;
    let base = path.parent().unwrap_or(Path::new(""));
    for r in &mut records {
        for p in [&mut r.audio, &mut r.feats].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }
    Ok(records)
}
