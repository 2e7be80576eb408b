//! Binary checkpoint: magic, u64 LE header length, JSON header, then every
//! tensor of [`PhiParams`] as raw little-endian f64 in `tensors()` order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};
use crate::model::{Dims, PhiParams};
use crate::neural::ParamSet;

const MAGIC: &[u8; 8] = b"PHICKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct TensorHeader {
    name: String,
    shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "D")]
    d: usize,
    #[serde(rename = "V")]
    v: usize,
    tokens: Vec<String>,
    tensors: Vec<TensorHeader>,
    #[serde(default)]
    meta: serde_json::Map<String, serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: PhiParams,
    pub vocab: Vocabulary,
    /// Free-form provenance (stage, epoch, ...). Must be deterministic.
    pub meta: serde_json::Map<String, serde_json::Value>,
}

impl Checkpoint {
    pub fn new(params: PhiParams, vocab: Vocabulary) -> Self {
        Self {
            params,
            vocab,
            meta: Default::default(),
        }
    }
}

/// Writes to a sibling temp file and renames it into place.
pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<()> {
    let Dims {
        hidden,
        feature,
        vocab,
    } = ckpt.params.dims();
    if vocab != ckpt.vocab.len() {
        return Err(Error::Checkpoint(format!(
            "parameters have V={vocab} but vocabulary has {} tokens",
            ckpt.vocab.len()
        )));
    }
    let header = Header {
        format_version: FORMAT_VERSION,
        k: hidden,
        d: feature,
        v: vocab,
        tokens: ckpt.vocab.tokens().to_vec(),
        tensors: ckpt
            .params
            .shapes()
            .into_iter()
            .map(|(name, (r, c))| TensorHeader { name, shape: [r, c] })
            .collect(),
        meta: ckpt.meta.clone(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;

    let tmp = path.with_extension("tmp");
    let write = || -> std::io::Result<()> {
        let mut w = BufWriter::new(File::create(&tmp)?);
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u64).to_le_bytes())?;
        w.write_all(&json)?;
        for (_, t) in ckpt.params.tensors() {
            for x in t {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        w.into_inner().map_err(|e| e.into_error())?.sync_all()
    };
    write().map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);

    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint(format!("{}: not a checkpoint file", path.display())));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 30 {
        return Err(Error::Checkpoint(format!("header length {len} is implausible")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json).map_err(io)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "format version {} not supported (expected {FORMAT_VERSION})",
            header.format_version
        )));
    }

    let vocab = Vocabulary::from_token_list(header.tokens)?;
    if vocab.len() != header.v {
        return Err(Error::Checkpoint(format!(
            "header V={} but token list has {} entries",
            header.v,
            vocab.len()
        )));
    }
    let mut params = PhiParams::zeros(Dims {
        hidden: header.k,
        feature: header.d,
        vocab: header.v,
    });
    let expected: Vec<TensorHeader> = params
        .shapes()
        .into_iter()
        .map(|(name, (r, c))| TensorHeader { name, shape: [r, c] })
        .collect();
    if expected != header.tensors {
        return Err(Error::Checkpoint(
            "tensor layout does not match this build's parameter layout".into(),
        ));
    }
    let mut buf = [0u8; 8];
    for (name, t) in params.tensors_mut() {
        for x in t.iter_mut() {
            r.read_exact(&mut buf)
                .map_err(|_| Error::Checkpoint(format!("truncated data in tensor {name}")))?;
            *x = f64::from_le_bytes(buf);
        }
    }
    if r.read(&mut buf).map_err(io)? != 0 {
        return Err(Error::Checkpoint("trailing bytes after tensor data".into()));
    }
    Ok(Checkpoint {
        params,
        vocab,
        meta: header.meta,
    })
}
