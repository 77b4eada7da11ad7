use crate::error::{Error, Result};
use crate::netarch::{build_detector, DetectorConfig, DetectorNetwork, HeadKind};
use crate::tensorcore::{RngStream, Tensor};
use std::io::{Read, Write};
use std::path::Path;

/// Versioned binary checkpoint: config JSON, head kind, then each
/// parameter as (name, shape, raw little-endian f64 bits). Round trips are
/// bit-exact.
const MAGIC: &[u8; 8] = b"GDETCK01";

pub fn save_checkpoint(net: &DetectorNetwork, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    let cfg = serde_json::to_vec(net.config()).expect("config serializes");
    buf.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
    buf.extend_from_slice(&cfg);
    buf.push(match net.head_kind() {
        HeadKind::Projection => 0,
        HeadKind::Classifier => 1,
    });
    buf.extend_from_slice(&(net.params().len() as u32).to_le_bytes());
    for p in net.params() {
        let name = p.name.as_bytes();
        buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
        buf.extend_from_slice(name);
        buf.push(p.value.shape().len() as u8);
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<DetectorNetwork> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    let mut r = Reader {
        buf: &bytes,
        pos: 0,
    };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint(format!(
            "{} is not a detector checkpoint (bad magic)",
            path.display()
        )));
    }
    let cfg_len = r.u32()? as usize;
    let config: DetectorConfig = serde_json::from_slice(r.take(cfg_len)?)
        .map_err(|e| Error::Checkpoint(format!("bad embedded config: {e}")))?;
    let head = match r.u8()? {
        0 => HeadKind::Projection,
        1 => HeadKind::Classifier,
        k => return Err(Error::Checkpoint(format!("unknown head kind {k}"))),
    };
    // Rebuild the structure, then overwrite every parameter from the file.
    let mut net = build_detector(&config, &RngStream::new(0, 0))?;
    if head == HeadKind::Classifier {
        net = net.swap_head(HeadKind::Classifier, &RngStream::new(0, 0))?;
    }
    let count = r.u32()? as usize;
    if count != net.params().len() {
        return Err(Error::Checkpoint(format!(
            "parameter count {} does not match config-derived structure ({})",
            count,
            net.params().len()
        )));
    }
    for i in 0..count {
        let name_len = r.u16()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::Checkpoint("non-utf8 parameter name".into()))?
            .to_string();
        let ndim = r.u8()? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let raw = r.take(8 * n)?;
        let data: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let p = &mut net.params_mut()[i];
        if p.name != name {
            return Err(Error::Checkpoint(format!(
                "parameter {i} named `{name}` in file, expected `{}`",
                p.name
            )));
        }
        if p.value.shape() != shape.as_slice() {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` has shape {shape:?} in file, expected {:?}",
                p.value.shape()
            )));
        }
        p.value = Tensor::new(shape, data)
            .map_err(|e| Error::Checkpoint(format!("parameter `{name}`: {e}")))?;
        p.reset_grad();
    }
    Ok(net)
}
