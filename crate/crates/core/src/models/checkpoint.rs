//! Little-endian binary weight container.
//!
//! ```text
//! magic      8 bytes  "ODVSRW01"
//! name       u32 length + UTF-8 bytes (architecture name)
//! scale      u32
//! count      u32
//! table      count x { u32 length + UTF-8 tensor name, 4 x u32 dims, u64 offset }
//! payload    f32 values; each entry's offset counts f32 elements from payload start
//! ```

use super::network::Network;
use super::spec::NetworkSpec;
use super::zoo;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"ODVSRW01";

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub name: String,
    pub scale: usize,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn save(net: &Network<f32>) -> Vec<u8> {
    let spec = net.spec();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_str(&mut out, &spec.name);
    out.extend_from_slice(&(spec.scale as u32).to_le_bytes());
    out.extend_from_slice(&(net.param_specs().len() as u32).to_le_bytes());
    let mut offset = 0u64;
    for (p, t) in net.param_specs().iter().zip(net.params()) {
        put_str(&mut out, &p.name);
        for d in t.dims() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&offset.to_le_bytes());
        offset += t.len() as u64;
    }
    for t in net.params() {
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
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(
                "checkpoint",
                self.bytes.len(),
                format!("truncated while reading {what} ({n} bytes needed at {})", self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, what: &str) -> Result<String> {
        let at = self.pos;
        let len = self.u32(what)? as usize;
        let raw = self.take(len, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format("checkpoint", at, format!("{what} is not UTF-8")))
    }
}

pub fn read(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::format("checkpoint", 0, "bad magic"));
    }
    let name = r.string("architecture name")?;
    let scale = r.u32("scale")? as usize;
    let count = r.u32("tensor count")? as usize;
    let mut table = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let tname = r.string("tensor name")?;
        let at = r.pos;
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.u32("tensor dims")? as usize;
        }
        let offset = r.u64("tensor offset")?;
        if dims.contains(&0) {
            return Err(Error::format("checkpoint", at, format!("{tname}: zero dimension")));
        }
        table.push((tname, dims, offset, at));
    }
    let payload_start = r.pos;
    let total = (bytes.len() - payload_start) / 4;
    let mut tensors = Vec::with_capacity(table.len());
    for (tname, dims, offset, at) in table {
        let len: usize = dims.iter().product();
        let end = offset.checked_add(len as u64).filter(|&e| e <= total as u64);
        let Some(end) = end else {
            return Err(Error::format(
                "checkpoint",
                bytes.len(),
                format!("{tname}: payload at element {offset} (entry at byte {at}) runs past the end"),
            ));
        };
        let from = payload_start + offset as usize * 4;
        let to = payload_start + end as usize * 4;
        let data = bytes[from..to]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        tensors.push((tname, Tensor::from_vec(dims, data)?));
    }
    Ok(Checkpoint {
        name,
        scale,
        tensors,
    })
}

/// Restore weights into `spec`, rejecting any name, scale, count or shape
/// disagreement.
pub fn load_into(spec: NetworkSpec, bytes: &[u8]) -> Result<Network<f32>> {
    let ck = read(bytes)?;
    if ck.name != spec.name || ck.scale != spec.scale {
        return Err(Error::Checkpoint(format!(
            "checkpoint holds {} x{}, expected {} x{}",
            ck.name, ck.scale, spec.name, spec.scale
        )));
    }
    let specs = spec.param_specs();
    if specs.len() != ck.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors in checkpoint, {} in {}",
            ck.tensors.len(),
            specs.len(),
            spec.name
        )));
    }
    for (p, (n, t)) in specs.iter().zip(&ck.tensors) {
        if &p.name != n {
            return Err(Error::Checkpoint(format!("expected tensor {}, found {n}", p.name)));
        }
        if p.dims != t.dims() {
            return Err(Error::Checkpoint(format!(
                "{n}: shape {:?} does not match {:?}",
                t.dims(),
                p.dims
            )));
        }
    }
    Network::from_params(spec, ck.tensors.into_iter().map(|(_, t)| t).collect())
}

/// Rebuild the named architecture at the stored scale and restore its weights.
pub fn load(bytes: &[u8]) -> Result<Network<f32>> {
    let ck = read(bytes)?;
    let spec = zoo::build(&ck.name, ck.scale)?;
    load_into(spec, bytes)
}
