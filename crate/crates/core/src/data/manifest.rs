//! JSON dataset manifests.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::camera::Camera;
use crate::error::{Error, Result};
use crate::skeleton::Skeleton;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceEntry {
    pub name: String,
    pub action: String,
    pub n_frames: usize,
    /// Relative paths resolve against the manifest's directory.
    pub path_2d: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_3d: Option<PathBuf>,
    /// When absent, 3D poses are already in camera coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub camera: Option<Camera>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub skeleton: Vec<String>,
    /// Unit of the 3D files; only `"mm"` is supported.
    pub units: String,
    pub fps: f64,
    /// 2D normalization extents in pixels.
    pub image_width: f64,
    pub image_height: f64,
    pub sequences: Vec<SequenceEntry>,
}

impl DatasetManifest {
    pub fn new(image_width: f64, image_height: f64, fps: f64) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            skeleton: Skeleton::default().names(),
            units: "mm".into(),
            fps,
            image_width,
            image_height,
            sequences: Vec::new(),
        }
    }

    /// Checks everything that does not require touching the referenced files.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {}, expected {MANIFEST_VERSION}",
                self.format_version
            )));
        }
        Skeleton::from_names(&self.skeleton)?;
        if self.units != "mm" {
            return Err(Error::Format(format!("unsupported units {:?}, expected \"mm\"", self.units)));
        }
        if !(self.image_width > 0.0 && self.image_height > 0.0) {
            return Err(Error::Format(format!(
                "image extents must be positive, got {}x{}",
                self.image_width, self.image_height
            )));
        }
        if !(self.fps > 0.0) {
            return Err(Error::Format(format!("fps must be positive, got {}", self.fps)));
        }
        let mut names = std::collections::HashSet::new();
        for s in &self.sequences {
            if !names.insert(s.name.as_str()) {
                return Err(Error::Format(format!("duplicate sequence name {:?}", s.name)));
            }
            if s.n_frames == 0 {
                return Err(Error::Format(format!("sequence {:?} has n_frames = 0", s.name)));
            }
            if let Some(camera) = &s.camera {
                camera.validate()?;
            }
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Data(format!("cannot read manifest {}: {e}", path.display())))?;
        let manifest: Self =
            serde_json::from_str(&text).map_err(|e| Error::Format(format!("manifest {}: {e}", path.display())))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip() {
        let mut m = DatasetManifest::new(1000.0, 1000.0, 50.0);
        m.sequences.push(SequenceEntry {
            name: "s0".into(),
            action: "walk_cycle".into(),
            n_frames: 9,
            path_2d: "s0.2d.hstp".into(),
            path_3d: None,
            camera: None,
        });
        let text = serde_json::to_string(&m).unwrap();
        let back: DatasetManifest = serde_json::from_str(&text).unwrap();
        assert_eq!(m, back);
        assert!(!text.contains("path_3d"));
    }

    #[test]
    fn rejects_bad_skeleton_and_unknown_keys() {
        let mut m = DatasetManifest::new(1000.0, 1000.0, 50.0);
        m.skeleton.swap(0, 1);
        assert!(m.validate().is_err());
        let text = r#"{"format_version":1,"skeleton":[],"units":"mm","fps":50,"image_width":1,"image_height":1,"sequences":[],"extra":1}"#;
        assert!(serde_json::from_str::<DatasetManifest>(text).is_err());
    }
}
