//! On-disk formats.

mod arpa;
mod checkpoint;
mod features;
mod records;
mod vocab;

pub use arpa::{format_arpa, load_arpa, parse_arpa, save_arpa, DEFAULT_UNK_PENALTY, LOG_ZERO};
pub use checkpoint::{decode_params, encode_params, infer_las_config, infer_lm_config, load_params, save_params, Dtype};
pub use features::{decode_features, encode_features, load_features, save_features};
pub use records::{
    load_jsonl, load_manifest, parse_jsonl, save_jsonl, to_jsonl, validate_manifest, ManifestRecord, NbestRecord,
    TrainLogRecord,
};
pub use vocab::{format_vocab, load_vocab, parse_vocab, save_vocab};

use crate::error::{Error, Result};

/// Little-endian cursor that reports truncation with its byte offset.
pub(crate) struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(bytes: &'a [u8], context: &'a str) -> Self {
        Reader { bytes, pos: 0, context }
    }

    pub(crate) fn error(&self, message: impl Into<String>) -> Error {
        Error::format(format!("{} at byte {}", self.context, self.pos), message)
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.error(format!("truncated: wanted {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("slice of length N"))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        self.array().map(f32::from_le_bytes)
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        self.array().map(f64::from_le_bytes)
    }

    pub(crate) fn magic(&mut self, magic: &[u8; 4]) -> Result<()> {
        if self.take(4)? != magic {
            return Err(self.error(format!("bad magic, expected {:?}", std::str::from_utf8(magic).unwrap_or("?"))));
        }
        Ok(())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(self.error(format!("{} trailing bytes", self.bytes.len() - self.pos)));
        }
        Ok(())
    }
}
