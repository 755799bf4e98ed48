//! `FBNK` feature files.

use std::path::Path;

use las_core::numerics::Tensor;

use super::Reader;
use crate::error::{read_file, write_atomic, Result};
use crate::frontend::FeatureSequence;

pub const MAGIC: &[u8; 4] = b"FBNK";
pub const VERSION: u32 = 1;

pub fn encode_features(f: &FeatureSequence) -> Vec<u8> {
    let (t, d) = f.frames.dims2();
    let mut out = Vec::with_capacity(20 + 4 * t * d);
    out.extend_from_slice(MAGIC);
    for v in [VERSION, t as u32, d as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend_from_slice(&(f.frame_shift as f32).to_le_bytes());
    for &v in f.frames.data() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_features(bytes: &[u8], context: &str) -> Result<FeatureSequence> {
    let mut r = Reader::new(bytes, context);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported FBNK version {version}")));
    }
    let t = r.u32()? as usize;
    let d = r.u32()? as usize;
    let frame_shift = r.f32()? as f64;
    let data = (0..t * d).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let frames = Tensor::matrix(t, d, data).map_err(|e| r.error(e.to_string()))?;
    Ok(FeatureSequence { id: String::new(), frames, frame_shift })
}

pub fn save_features(path: &Path, f: &FeatureSequence) -> Result<()> {
    write_atomic(path, &encode_features(f))
}

pub fn load_features(path: &Path) -> Result<FeatureSequence> {
    decode_features(&read_file(path)?, &path.display().to_string())
}
