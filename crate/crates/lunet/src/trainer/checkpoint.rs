//! Binary checkpoint format.
//!
//! ```text
//! "LUNT"  u32 version (=1)  u32 record_count
//! per record: u16 name_len, name bytes, u8 ndim, ndim x u32 dims, f32 payload
//! ```
//!
//! All integers and floats are little-endian. Parameter records come first,
//! then buffer records, both in build order.

use std::io::{Read, Write};
use std::path::Path;

use crate::baselines::linknet::LinkNetConfig;
use crate::error::{Error, Result};
use crate::model::{Architecture, SegmentationModel};
use crate::tensor::{Real, Tensor};
use crate::unet::{UNetConfig, UpsampleMode};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LUNT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

/// Copies every parameter and buffer of `model` into records.
pub fn snapshot<T: Real, M: SegmentationModel<T> + ?Sized>(model: &M) -> Vec<Record> {
    let params = model.params().into_iter().map(|p| (&p.name, &p.value));
    let buffers = model.buffers().into_iter().map(|b| (&b.name, &b.value));
    params
        .chain(buffers)
        .map(|(name, t)| Record {
            name: name.clone(),
            shape: t.shape().to_vec(),
            data: t.data().iter().map(|v| v.to_f64() as f32).collect(),
        })
        .collect()
}

/// Overwrites parameters and buffers of `model` from `records`, which must
/// match the model's names and shapes one-to-one and in order.
pub fn restore<T: Real, M: SegmentationModel<T> + ?Sized>(model: &mut M, records: &[Record]) -> Result<()> {
    let n_params = model.params().len();
    let expected = n_params + model.buffers().len();
    if records.len() != expected {
        return Err(Error::MalformedCheckpoint(format!(
            "checkpoint has {} records, model needs {expected}",
            records.len()
        )));
    }
    let check = |rec: &Record, name: &str, t: &Tensor<T>| -> Result<()> {
        if rec.name != name || rec.shape != t.shape() {
            return Err(Error::MalformedCheckpoint(format!(
                "record {} {:?} does not match model tensor {} {:?}",
                rec.name,
                rec.shape,
                name,
                t.shape()
            )));
        }
        Ok(())
    };
    for (p, rec) in model.params_mut().into_iter().zip(&records[..n_params]) {
        check(rec, &p.name, &p.value)?;
        for (d, &s) in p.value.data_mut().iter_mut().zip(&rec.data) {
            *d = T::from_f64(s as f64);
        }
    }
    for (b, rec) in model.buffers_mut().into_iter().zip(&records[n_params..]) {
        check(rec, &b.name, &b.value)?;
        for (d, &s) in b.value.data_mut().iter_mut().zip(&rec.data) {
            *d = T::from_f64(s as f64);
        }
    }
    Ok(())
}

pub fn write_records<W: Write>(mut w: W, records: &[Record]) -> std::io::Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(records.len() as u32).to_le_bytes())?;
    for r in records {
        w.write_all(&(r.name.len() as u16).to_le_bytes())?;
        w.write_all(r.name.as_bytes())?;
        w.write_all(&[r.shape.len() as u8])?;
        for &d in &r.shape {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        for &v in &r.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::MalformedCheckpoint(format!(
                "truncated at byte {} (needed {n} more, {} left)",
                self.pos,
                self.buf.len() - self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

pub fn parse_records(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    if c.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::MalformedCheckpoint("bad magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let count = c.u32()? as usize;
    let mut records = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let name_len = u16::from_le_bytes(c.take(2)?.try_into().unwrap()) as usize;
        let name = std::str::from_utf8(c.take(name_len)?)
            .map_err(|_| Error::MalformedCheckpoint("record name is not UTF-8".into()))?
            .to_string();
        let ndim = c.take(1)?[0] as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(c.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        let payload = c.take(n * 4)?;
        let data = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        records.push(Record { name, shape, data });
    }
    if c.pos != bytes.len() {
        return Err(Error::MalformedCheckpoint(format!(
            "{} trailing bytes after last record",
            bytes.len() - c.pos
        )));
    }
    Ok(records)
}

pub fn read_records<R: Read>(mut r: R) -> Result<Vec<Record>> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::MalformedCheckpoint(e.to_string()))?;
    parse_records(&bytes)
}

pub fn save_checkpoint<T: Real, M: SegmentationModel<T> + ?Sized>(model: &M, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_records(std::io::BufWriter::new(file), &snapshot(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Real, M: SegmentationModel<T> + ?Sized>(model: &mut M, path: &Path) -> Result<()> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    restore(model, &parse_records(&bytes)?)
}

/// Recovers the network configuration from record names and shapes.
/// `input_hw` is not stored and must be supplied.
pub fn infer_architecture(records: &[Record], input_hw: (usize, usize)) -> Result<Architecture> {
    let find = |name: &str| records.iter().find(|r| r.name == name);
    let missing = |name: &str| Error::MalformedCheckpoint(format!("missing record {name}"));
    let head = find("head.weight").ok_or_else(|| missing("head.weight"))?;
    let out_channels = head.shape[0];
    if let Some(stem) = find("stem.conv.weight") {
        let enc1 = find("enc1.conv1.weight").ok_or_else(|| missing("enc1.conv1.weight"))?;
        let base = stem.shape[0];
        return Ok(Architecture::Linknet(LinkNetConfig {
            base_filters: base,
            filter_step: enc1.shape[0] - base,
            in_channels: stem.shape[1],
            out_channels,
            input_hw,
            seed: 0,
        }));
    }
    let enc0 = find("enc0.conv1.weight").ok_or_else(|| missing("enc0.conv1.weight"))?;
    let depth = (0..)
        .take_while(|c| find(&format!("enc{c}.conv1.weight")).is_some())
        .count();
    let next = find(&format!("enc{}.conv1.weight", 1.min(depth)))
        .filter(|_| depth > 1)
        .or_else(|| find("bottleneck.conv1.weight"))
        .ok_or_else(|| missing("bottleneck.conv1.weight"))?;
    let base = enc0.shape[0];
    let upsample_mode = if find("up0.weight").is_some() {
        UpsampleMode::TransposedConv
    } else if find("up0.proj.weight").is_some() {
        UpsampleMode::MaxUnpool
    } else {
        return Err(missing("up0.weight"));
    };
    Ok(Architecture::Unet(UNetConfig {
        base_filters: base,
        filter_step: next.shape[0] - base,
        depth,
        in_channels: enc0.shape[1],
        out_channels,
        upsample_mode,
        input_hw,
        seed: 0,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::unet::UNet;

    #[test]
    fn bad_magic_and_version() {
        assert!(matches!(parse_records(b"NOPE\x01\0\0\0\0\0\0\0"), Err(Error::MalformedCheckpoint(_))));
        assert!(matches!(
            parse_records(b"LUNT\x02\0\0\0\0\0\0\0"),
            Err(Error::VersionMismatch { found: 2, expected: 1 })
        ));
        assert_eq!(parse_records(b"LUNT\x01\0\0\0\0\0\0\0").unwrap(), vec![]);
    }

    #[test]
    fn infers_unet_config() {
        for mode in [UpsampleMode::TransposedConv, UpsampleMode::MaxUnpool] {
            let cfg = UNetConfig {
                base_filters: 3,
                filter_step: 5,
                depth: 3,
                upsample_mode: mode,
                input_hw: (16, 16),
                ..UNetConfig::default()
            };
            let net = UNet::<f32>::build(cfg.clone()).unwrap();
            let arch = infer_architecture(&snapshot(&net), (16, 16)).unwrap();
            assert_eq!(arch, Architecture::Unet(UNetConfig { seed: 0, ..cfg }));
        }
    }
}
