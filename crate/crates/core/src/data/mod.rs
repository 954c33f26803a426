//! Dataset formats, loading and synthetic generation.

pub(crate) mod binio;
pub mod camera;
pub mod manifest;
pub mod posefile;
pub mod synth;

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use camera::{project, Camera};
pub use manifest::{DatasetManifest, SequenceEntry};
pub use posefile::{load_pose, read_pose, save_pose, write_pose, PoseHeader};
pub use synth::{gen_synthetic, MotionKind, SyntheticSequence};

use crate::error::{Error, Result};
use crate::skeleton::{JointId, NUM_JOINTS};
use crate::tensor::Tensor;

/// One recorded sequence. 2D poses are pixels; 3D poses are millimeters, in
/// world coordinates when `camera` is set and camera coordinates otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct Sequence {
    pub name: String,
    pub action: String,
    pub pose2d: Tensor,
    pub pose3d: Option<Tensor>,
    pub camera: Option<Camera>,
}

impl Sequence {
    pub fn n_frames(&self) -> usize {
        self.pose2d.shape()[0]
    }

    /// 3D poses in camera coordinates, millimeters.
    pub fn camera_poses(&self) -> Option<Tensor> {
        let poses = self.pose3d.as_ref()?;
        Some(match &self.camera {
            Some(camera) => camera.poses_to_camera(poses),
            None => poses.clone(),
        })
    }

    /// Frames `start..start + len`.
    pub fn crop(&self, start: usize, len: usize) -> Result<Sequence> {
        if len == 0 || start + len > self.n_frames() {
            return Err(Error::Data(format!(
                "crop {start}..{} out of range for {:?} with {} frames",
                start + len,
                self.name,
                self.n_frames()
            )));
        }
        Ok(Sequence {
            name: self.name.clone(),
            action: self.action.clone(),
            pose2d: crop_frames(&self.pose2d, start, len),
            pose3d: self.pose3d.as_ref().map(|p| crop_frames(p, start, len)),
            camera: self.camera.clone(),
        })
    }
}

fn crop_frames(t: &Tensor, start: usize, len: usize) -> Tensor {
    let per = t.numel() / t.shape()[0];
    let mut shape = t.shape().to_vec();
    shape[0] = len;
    Tensor::new(shape, t.data()[start * per..(start + len) * per].to_vec()).expect("cropped extents")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub fps: f64,
    pub image_width: f64,
    pub image_height: f64,
    pub sequences: Vec<Sequence>,
}

impl Dataset {
    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(Sequence::n_frames).sum()
    }

    /// Pixels to `[-1, 1]` by image extent.
    pub fn normalize_2d(&self, pose2d: &Tensor) -> Tensor {
        let (w, h) = (self.image_width, self.image_height);
        let mut out = pose2d.clone();
        for uv in out.data_mut().chunks_exact_mut(2) {
            uv[0] = 2.0 * uv[0] / w - 1.0;
            uv[1] = 2.0 * uv[1] / h - 1.0;
        }
        out
    }

    /// Splits every sequence in time: the first `1 - val_fraction` of its
    /// frames train, the rest are held out.
    pub fn split_temporal(&self, val_fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0 < val_fraction && val_fraction < 1.0) {
            return Err(Error::Config(format!("val_fraction must lie in (0, 1), got {val_fraction}")));
        }
        let mut train = Dataset { sequences: Vec::new(), ..self.clone() };
        let mut val = train.clone();
        for s in &self.sequences {
            let n = s.n_frames();
            let n_val = ((n as f64) * val_fraction).round() as usize;
            if n_val == 0 || n_val == n {
                return Err(Error::Data(format!(
                    "sequence {:?} with {n} frames is too short to split at {val_fraction}",
                    s.name
                )));
            }
            train.sequences.push(s.crop(0, n - n_val)?);
            val.sequences.push(s.crop(n - n_val, n_val)?);
        }
        Ok((train, val))
    }
}

/// Root-relative copy of `T×J×3` poses (hip subtracted per frame).
pub fn root_relative(poses: &Tensor) -> Tensor {
    let mut out = poses.clone();
    let root = JointId::Hip.index();
    for frame in out.data_mut().chunks_exact_mut(NUM_JOINTS * 3) {
        let r = [frame[root * 3], frame[root * 3 + 1], frame[root * 3 + 2]];
        for p in frame.chunks_exact_mut(3) {
            for k in 0..3 {
                p[k] -= r[k];
            }
        }
    }
    out
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn load_checked(path: &Path, entry: &SequenceEntry, channels: usize) -> Result<Tensor> {
    let (header, poses) = load_pose(path)?;
    if header.frames != entry.n_frames {
        return Err(Error::Data(format!(
            "sequence {:?}: manifest n_frames = {} but {} has T = {}",
            entry.name,
            entry.n_frames,
            path.display(),
            header.frames
        )));
    }
    if header.channels != channels {
        return Err(Error::Data(format!(
            "sequence {:?}: {} has {} channels, expected {channels}",
            entry.name,
            path.display(),
            header.channels
        )));
    }
    Ok(poses)
}

/// Loads a manifest and every file it references.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let manifest = DatasetManifest::load(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut sequences = Vec::with_capacity(manifest.sequences.len());
    for entry in &manifest.sequences {
        let pose2d = load_checked(&resolve(base, &entry.path_2d), entry, 2)?;
        let pose3d = match &entry.path_3d {
            Some(p) => Some(load_checked(&resolve(base, p), entry, 3)?),
            None => None,
        };
        sequences.push(Sequence {
            name: entry.name.clone(),
            action: entry.action.clone(),
            pose2d,
            pose3d,
            camera: entry.camera.clone(),
        });
    }
    Ok(Dataset { fps: manifest.fps, image_width: manifest.image_width, image_height: manifest.image_height, sequences })
}

/// Writes `dataset` to `dir` as pose files plus `manifest.json`; returns the
/// manifest path.
pub fn save_dataset(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = DatasetManifest::new(dataset.image_width, dataset.image_height, dataset.fps);
    for s in &dataset.sequences {
        let path_2d = PathBuf::from(format!("{}.2d.hstp", s.name));
        save_pose(&dir.join(&path_2d), &s.pose2d)?;
        let path_3d = match &s.pose3d {
            Some(p) => {
                let path = PathBuf::from(format!("{}.3d.hstp", s.name));
                save_pose(&dir.join(&path), p)?;
                Some(path)
            }
            None => None,
        };
        manifest.sequences.push(SequenceEntry {
            name: s.name.clone(),
            action: s.action.clone(),
            n_frames: s.n_frames(),
            path_2d,
            path_3d,
            camera: s.camera.clone(),
        });
    }
    manifest.validate()?;
    let path = dir.join("manifest.json");
    manifest.save(&path)?;
    Ok(path)
}

/// Writes `poses3d` (camera coordinates, millimeters, one tensor per
/// sequence) as a dataset alongside the original 2D inputs.
pub fn save_predictions(dataset: &Dataset, poses3d: &[Tensor], dir: &Path) -> Result<PathBuf> {
    if poses3d.len() != dataset.sequences.len() {
        return Err(Error::Data(format!(
            "{} prediction tensors for {} sequences",
            poses3d.len(),
            dataset.sequences.len()
        )));
    }
    let mut out = Dataset { sequences: Vec::new(), ..dataset.clone() };
    for (s, p) in dataset.sequences.iter().zip(poses3d) {
        if p.shape() != [s.n_frames(), NUM_JOINTS, 3] {
            return Err(Error::Data(format!(
                "prediction for {:?} has shape {:?}, expected [{}, {NUM_JOINTS}, 3]",
                s.name,
                p.shape(),
                s.n_frames()
            )));
        }
        out.sequences.push(Sequence { pose3d: Some(p.clone()), camera: None, ..s.clone() });
    }
    save_dataset(&out, dir)
}

/// Options for [`generate_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub seed: u64,
    /// Total frames, split evenly across sequences.
    pub frames: usize,
    pub sequences: usize,
    pub motion: MotionKind,
    pub noise_px: f64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self { seed: 1, frames: 2000, sequences: 4, motion: MotionKind::WalkCycle, noise_px: 0.0 }
    }
}

/// Synthetic dataset in memory; each sequence is a distinct actor.
pub fn synthetic_dataset(opts: &SynthOptions) -> Result<Dataset> {
    if opts.sequences == 0 || opts.frames < opts.sequences {
        return Err(Error::Config(format!(
            "need at least one frame per sequence, got {} frames for {} sequences",
            opts.frames, opts.sequences
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let base = opts.frames / opts.sequences;
    let mut sequences = Vec::with_capacity(opts.sequences);
    for i in 0..opts.sequences {
        let n = if i + 1 == opts.sequences { opts.frames - base * i } else { base };
        let s = gen_synthetic(rng.random(), n, opts.motion, opts.noise_px)?;
        sequences.push(Sequence {
            name: format!("{}_{i:02}", opts.motion),
            action: opts.motion.to_string(),
            pose2d: s.pose2d,
            pose3d: Some(s.pose3d),
            camera: Some(s.camera),
        });
    }
    Ok(Dataset { fps: synth::SYNTH_FPS, image_width: synth::IMAGE_WIDTH, image_height: synth::IMAGE_HEIGHT, sequences })
}

/// Generates a synthetic dataset and writes it to `dir`.
pub fn generate_dataset(opts: &SynthOptions, dir: &Path) -> Result<PathBuf> {
    save_dataset(&synthetic_dataset(opts)?, dir)
}
