//! Binary checkpoint container.
//!
//! Layout (little endian):
//! ```text
//! magic    b"GENCTLCK"
//! version  u32
//! header   u32 length + UTF-8 run manifest (config, hash, seed, adam step)
//! count    u32
//! tensors  count x { u32 name length, name, u32 rank, rank x u64 dims, f64 values }
//! ```
//! Tensors are the model parameters followed by `adam.m.*` and `adam.v.*`.

use std::fs;
use std::path::Path;

use crate::config::{parse_kv, RunConfiguration};
use crate::error::{Error, Result};
use crate::metrics::atomic_write;
use crate::model::ModelParams;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"GENCTLCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub struct Checkpoint {
    pub params: ModelParams,
    pub config: RunConfiguration,
    pub hash: String,
}

pub fn encode(params: &ModelParams, config: &RunConfiguration) -> Vec<u8> {
    let mut run = config.clone();
    run.train.net = params.net;
    run.train.adam = params.adam.config;
    let header = format!("{}adam_step = {}\n", run.manifest_text(), params.adam.step);

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());

    let mut named: Vec<(String, &Tensor)> = Vec::new();
    for (n, t) in params.names.iter().zip(&params.tensors) {
        named.push((n.clone(), t));
    }
    for (n, t) in params.names.iter().zip(&params.adam.first) {
        named.push((format!("adam.m.{n}"), t));
    }
    for (n, t) in params.names.iter().zip(&params.adam.second) {
        named.push((format!("adam.v.{n}"), t));
    }
    out.extend_from_slice(&(named.len() as u32).to_le_bytes());
    for (name, t) in named {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("not a genctl checkpoint".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let header_len = r.u32()? as usize;
    let header = std::str::from_utf8(r.take(header_len)?)
        .map_err(|_| Error::Checkpoint("header is not UTF-8".into()))?
        .to_string();

    let mut config_text = String::new();
    let mut hash = String::new();
    let mut adam_step = 0u64;
    for (_, k, v) in parse_kv(&header)? {
        match k.as_str() {
            "adam_step" => {
                adam_step = v
                    .parse()
                    .map_err(|_| Error::Checkpoint(format!("bad adam_step `{v}`")))?
            }
            "hash" => hash = v,
            _ => config_text.push_str(&format!("{k} = {v}\n")),
        }
    }
    let config = RunConfiguration::from_sources(Some(&config_text), &[])?;
    let mut params = ModelParams::zeros(config.train.net, config.train.adam)?;
    params.adam.step = adam_step;

    let count = r.u32()? as usize;
    let expected = 3 * params.tensors.len();
    if count != expected {
        return Err(Error::Checkpoint(format!("expected {expected} tensors, found {count}")));
    }
    for i in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Checkpoint("tensor too large".into()))?)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let tensor = Tensor::new(shape, data)?;

        let k = params.tensors.len();
        let (slot, expected_name) = match i / k {
            0 => (&mut params.tensors[i % k], params.names[i % k].clone()),
            1 => (&mut params.adam.first[i % k], format!("adam.m.{}", params.names[i % k])),
            _ => (&mut params.adam.second[i % k], format!("adam.v.{}", params.names[i % k])),
        };
        if name != expected_name {
            return Err(Error::Checkpoint(format!("expected tensor `{expected_name}`, found `{name}`")));
        }
        if slot.shape() != tensor.shape() {
            return Err(Error::Checkpoint(format!(
                "tensor `{name}` has shape {:?}, config implies {:?}",
                tensor.shape(),
                slot.shape()
            )));
        }
        *slot = tensor;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    params.validate()?;
    Ok(Checkpoint { params, config, hash })
}

pub fn save(path: &Path, params: &ModelParams, config: &RunConfiguration) -> Result<()> {
    atomic_write(path, &encode(params, config))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
