//! `LASF` named-tensor containers.

use std::path::Path;

use las_core::lm::NeuralLmConfig;
use las_core::model::{AlignmentHistory, LasConfig};
use las_core::numerics::{ParamStore, Tensor};

use super::Reader;
use crate::error::{read_file, write_atomic, Error, Result};

pub const MAGIC: &[u8; 4] = b"LASF";
pub const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Dtype {
    #[default]
    F32,
    F64,
}

impl Dtype {
    fn tag(self) -> u32 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }
}

pub fn encode_params(store: &ParamStore, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for (name, t) in store.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&dtype.tag().to_le_bytes());
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            match dtype {
                Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
                Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
    }
    out
}

/// Parses a container; `context` names the source in errors. Also returns
/// the dtype of the first entry (`F32` when empty).
pub fn decode_params(bytes: &[u8], context: &str) -> Result<(ParamStore, Dtype)> {
    let mut r = Reader::new(bytes, context);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(r.error(format!("unsupported LASF version {version}")));
    }
    let count = r.u32()?;
    let mut store = ParamStore::new();
    let mut first = None;
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?).map_err(|_| r.error("entry name is not UTF-8"))?.to_string();
        let dtype = match r.u32()? {
            0 => Dtype::F32,
            1 => Dtype::F64,
            t => return Err(r.error(format!("unknown dtype tag {t} for {name}"))),
        };
        first.get_or_insert(dtype);
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.error("tensor too large"))?;
        let data = match dtype {
            Dtype::F32 => (0..n).map(|_| r.f32().map(f64::from)).collect::<Result<Vec<_>>>()?,
            Dtype::F64 => (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?,
        };
        let t = Tensor::new(shape, data).map_err(|e| r.error(format!("{name}: {e}")))?;
        store.insert(&name, t).map_err(|e| r.error(e.to_string()))?;
    }
    r.finish()?;
    Ok((store, first.unwrap_or_default()))
}

pub fn save_params(path: &Path, store: &ParamStore, dtype: Dtype) -> Result<()> {
    write_atomic(path, &encode_params(store, dtype))
}

pub fn load_params(path: &Path) -> Result<ParamStore> {
    decode_params(&read_file(path)?, &path.display().to_string()).map(|(s, _)| s)
}

fn shape<'a>(store: &'a ParamStore, name: &str) -> Result<&'a [usize]> {
    Ok(store.require(name)?.shape())
}

fn count_layers(store: &ParamStore, prefix: &str, suffix: &str) -> usize {
    (0..).take_while(|l| store.get(&format!("{prefix}{l}{suffix}")).is_some()).count()
}

/// Recovers every size of a recognizer from its parameter shapes. The
/// attention variant is not visible in the shapes and is passed in.
pub fn infer_las_config(store: &ParamStore, location_aware: bool, history: AlignmentHistory) -> Result<LasConfig> {
    let listener_layers = count_layers(store, "listener.layer", ".fwd.Wx");
    let speller_layers = count_layers(store, "speller.layer", ".Wx");
    if listener_layers == 0 || speller_layers == 0 {
        return Err(Error::invalid("checkpoint does not hold a recognizer"));
    }
    let first = shape(store, "listener.layer0.fwd.Wx")?;
    let out = shape(store, "speller.out.W")?;
    let filters = shape(store, "attention.F")?;
    let config = LasConfig {
        feature_dim: first[1] / 2,
        listener_layers,
        listener_hidden: first[0] / 4,
        speller_layers,
        speller_hidden: shape(store, "speller.layer0.Wh")?[1],
        embed_dim: shape(store, "speller.embed")?[1],
        attention_dim: shape(store, "attention.W")?[0],
        conv_filters: filters[0],
        conv_width: filters[1],
        location_aware,
        history,
        vocab_size: out[0],
    };
    Ok(config)
}

pub fn infer_lm_config(store: &ParamStore) -> Result<NeuralLmConfig> {
    let layers = count_layers(store, "lm.layer", ".Wx");
    if layers == 0 {
        return Err(Error::invalid("checkpoint does not hold a neural LM"));
    }
    let embed = shape(store, "lm.embed")?;
    Ok(NeuralLmConfig {
        vocab_size: embed[0],
        embed_dim: embed[1],
        hidden: shape(store, "lm.layer0.Wh")?[1],
        layers,
    })
}
