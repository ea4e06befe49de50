//! Binary checkpoint: magic, format version, a JSON header with the network
//! and mitigation configs, then named tensors as
//! `(name, shape, row-major little-endian f64 data)`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetConfig, TinyPpgNet};
use crate::error::{Error, Result};
use crate::io::{atomic_write, read_bytes};
use crate::mitigate::MitigationConfig;

const MAGIC: &[u8; 8] = b"FTCKPT\0\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    net: NetConfig,
    mitigation: MitigationConfig,
    n_tensors: usize,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub net: TinyPpgNet,
    pub mitigation: MitigationConfig,
}

pub fn encode_checkpoint(net: &TinyPpgNet, mitigation: &MitigationConfig) -> Vec<u8> {
    let header = Header {
        net: net.config().clone(),
        mitigation: mitigation.clone(),
        n_tensors: net.param_specs().len(),
    };
    let header = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + net.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for spec in net.param_specs() {
        out.extend_from_slice(&(spec.name.len() as u32).to_le_bytes());
        out.extend_from_slice(spec.name.as_bytes());
        out.extend_from_slice(&(spec.shape.len() as u32).to_le_bytes());
        for &dim in &spec.shape {
            out.extend_from_slice(&(dim as u64).to_le_bytes());
        }
        for v in &net.params()[spec.range()] {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save_checkpoint(path: &Path, net: &TinyPpgNet, mitigation: &MitigationConfig) -> Result<()> {
    atomic_write(path, &encode_checkpoint(net, mitigation))
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Schema("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Schema("not a checkpoint file (bad magic)".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Schema(format!("unsupported checkpoint version {version}")));
    }
    let hlen = r.u64()? as usize;
    let header: Header = serde_json::from_slice(r.take(hlen)?)
        .map_err(|e| Error::Schema(format!("checkpoint header: {e}")))?;
    let mut net = TinyPpgNet::zeros(header.net)?;
    if header.n_tensors != net.param_specs().len() {
        return Err(Error::Schema(format!(
            "checkpoint has {} tensors, config implies {}",
            header.n_tensors,
            net.param_specs().len()
        )));
    }
    for spec in net.param_specs().to_vec() {
        let nlen = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(nlen)?).map_err(|_| Error::Schema("tensor name is not UTF-8".into()))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(Error::Schema(format!(
                "tensor {name} {shape:?} does not match expected {} {:?}",
                spec.name, spec.shape
            )));
        }
        let dst = &mut net.params_mut()[spec.range()];
        for v in dst.iter_mut() {
            *v = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::Schema("trailing bytes after last tensor".into()));
    }
    Ok(Checkpoint { net, mitigation: header.mitigation })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    decode_checkpoint(&read_bytes(path)?)
}
