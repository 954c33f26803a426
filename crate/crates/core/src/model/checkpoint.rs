//! Checkpoint files.
//!
//! Layout (little-endian): magic `HSTW`, `u32` version, `u32` length + JSON
//! encoder config, `u32` joint count + (`u32` length + UTF-8 name) per joint,
//! `u32` tensor count, then per tensor `u32` rank, `u32` extents and `f64`
//! values, in parameter enumeration order.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::binio::{read_bytes, read_f64s, read_u32, write_u32};
use crate::error::{Error, Result};
use crate::model::{EncoderConfig, HstFormer, ModelParams};
use crate::skeleton::{BodyPartPartition, Skeleton};
use crate::tensor::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"HSTW";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, model: &HstFormer) -> Result<()> {
    w.write_all(CHECKPOINT_MAGIC)?;
    write_u32(&mut w, CHECKPOINT_VERSION)?;
    let config = serde_json::to_vec(&model.config)?;
    write_u32(&mut w, config.len() as u32)?;
    w.write_all(&config)?;
    let names = Skeleton::default().names();
    write_u32(&mut w, names.len() as u32)?;
    for name in &names {
        write_u32(&mut w, name.len() as u32)?;
        w.write_all(name.as_bytes())?;
    }
    let tensors = model.params.to_vec();
    write_u32(&mut w, tensors.len() as u32)?;
    for t in tensors {
        write_u32(&mut w, t.rank() as u32)?;
        for &extent in t.shape() {
            write_u32(&mut w, extent as u32)?;
        }
        let mut buf = Vec::with_capacity(t.numel() * 8);
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

/// Reads a checkpoint; when `expected` is given the stored config must equal it.
pub fn read_checkpoint<R: Read>(mut r: R, expected: Option<&EncoderConfig>) -> Result<HstFormer> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format(format!("bad checkpoint magic {magic:?}")));
    }
    let version = read_u32(&mut r)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}, expected {CHECKPOINT_VERSION}")));
    }
    let len = read_u32(&mut r)? as usize;
    let config: EncoderConfig = serde_json::from_slice(&read_bytes(&mut r, len)?)?;
    if let Some(expected) = expected {
        if &config != expected {
            return Err(Error::Config(format!(
                "checkpoint config {} does not match requested {}",
                config.tag(),
                expected.tag()
            )));
        }
    }
    let joints = read_u32(&mut r)? as usize;
    let mut names = Vec::with_capacity(joints.min(64));
    for _ in 0..joints {
        let len = read_u32(&mut r)? as usize;
        let bytes = read_bytes(&mut r, len)?;
        names.push(String::from_utf8(bytes).map_err(|e| Error::Format(format!("joint name: {e}")))?);
    }
    let skeleton = Skeleton::from_names(&names)?;
    if skeleton != Skeleton::default() {
        return Err(Error::Format("checkpoint skeleton differs from the canonical layout".into()));
    }

    let partition = BodyPartPartition::default();
    let mut params = ModelParams::zeros(&config, &partition)?;
    let count = read_u32(&mut r)? as usize;
    let expected_count = params.to_vec().len();
    if count != expected_count {
        return Err(Error::Format(format!("checkpoint holds {count} tensors, config requires {expected_count}")));
    }
    let mut failure = None;
    params.for_each_mut(|name, slot| {
        if failure.is_some() {
            return;
        }
        let result = (|| -> Result<Tensor> {
            let rank = read_u32(&mut r)? as usize;
            let shape = (0..rank).map(|_| read_u32(&mut r).map(|v| v as usize)).collect::<Result<Vec<_>>>()?;
            if shape != slot.shape() {
                return Err(Error::Format(format!("tensor {name} has shape {shape:?}, expected {:?}", slot.shape())));
            }
            let data = read_f64s(&mut r, slot.numel())?;
            Ok(Tensor::new(shape, data)?)
        })();
        match result {
            Ok(t) => *slot = t,
            Err(e) => failure = Some(e),
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    HstFormer::from_params(config, partition, params)
}

pub fn save_checkpoint(path: &Path, model: &HstFormer) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_checkpoint(&mut w, model)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path, expected: Option<&EncoderConfig>) -> Result<HstFormer> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    read_checkpoint(std::io::BufReader::new(file), expected).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
