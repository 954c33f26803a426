//! `HSTP` pose files: magic, `u32` version, `u32` T, `u32` J, `u32` C, then
//! T·J·C little-endian `f32` values, frame-major, joint-major, channel.

use std::io::{Read, Write};
use std::path::Path;

use crate::data::binio::{read_u32, write_u32};
use crate::error::{Error, Result};
use crate::skeleton::NUM_JOINTS;
use crate::tensor::Tensor;

pub const POSE_MAGIC: &[u8; 4] = b"HSTP";
pub const POSE_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

/// Header fields of a pose file.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoseHeader {
    pub frames: usize,
    pub joints: usize,
    pub channels: usize,
}

/// Serializes a `T×J×C` tensor. Values are narrowed to `f32`.
pub fn write_pose<W: Write>(mut w: W, poses: &Tensor) -> Result<()> {
    let shape = poses.shape();
    if shape.len() != 3 || !matches!(shape[2], 2 | 3) {
        return Err(Error::Format(format!("pose tensor must be T×J×{{2,3}}, got {shape:?}")));
    }
    if !poses.is_finite() {
        return Err(Error::Format("refusing to write non-finite pose values".into()));
    }
    let mut buf = Vec::with_capacity(HEADER_LEN + 4 * poses.numel());
    buf.extend_from_slice(POSE_MAGIC);
    write_u32(&mut buf, POSE_VERSION)?;
    for &extent in shape {
        write_u32(&mut buf, extent as u32)?;
    }
    for &v in poses.data() {
        buf.extend_from_slice(&(v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

/// Parses a pose file, rejecting bad magic/version, channel counts other than
/// 2 or 3, non-17-joint skeletons, payload length mismatches and non-finite values.
pub fn read_pose<R: Read>(mut r: R) -> Result<(PoseHeader, Tensor)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| Error::Format("file too short for a pose header".into()))?;
    if &magic != POSE_MAGIC {
        return Err(Error::Format(format!("bad pose file magic {magic:?}, expected \"HSTP\"")));
    }
    let version = read_u32(&mut r)?;
    if version != POSE_VERSION {
        return Err(Error::Format(format!("unsupported pose file version {version}")));
    }
    let frames = read_u32(&mut r)? as usize;
    let joints = read_u32(&mut r)? as usize;
    let channels = read_u32(&mut r)? as usize;
    if frames == 0 {
        return Err(Error::Format("pose file has zero frames".into()));
    }
    if joints != NUM_JOINTS {
        return Err(Error::Format(format!("pose file has {joints} joints, expected {NUM_JOINTS}")));
    }
    if !matches!(channels, 2 | 3) {
        return Err(Error::Format(format!("pose file has {channels} channels, expected 2 or 3")));
    }
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    let expected = 4 * frames * joints * channels;
    if payload.len() != expected {
        return Err(Error::Format(format!(
            "pose payload is {} bytes, header T={frames} J={joints} C={channels} requires {expected}",
            payload.len()
        )));
    }
    let data: Vec<f64> =
        payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")) as f64).collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        let per_frame = joints * channels;
        return Err(Error::Format(format!(
            "non-finite value at frame {}, joint {}",
            i / per_frame,
            (i % per_frame) / channels
        )));
    }
    let header = PoseHeader { frames, joints, channels };
    Ok((header, Tensor::new(vec![frames, joints, channels], data)?))
}

pub fn save_pose(path: &Path, poses: &Tensor) -> Result<()> {
    let mut buf = Vec::new();
    write_pose(&mut buf, poses)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_pose(path: &Path) -> Result<(PoseHeader, Tensor)> {
    let bytes = std::fs::read(path).map_err(|e| Error::Data(format!("cannot read {}: {e}", path.display())))?;
    read_pose(bytes.as_slice()).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}
