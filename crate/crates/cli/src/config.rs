//! `key=value` run configuration files with command-line overrides.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::CliError;

/// One configuration key: name, default, help text.
pub type Key = (&'static str, &'static str, &'static str);

pub const MODEL_KEYS: &[Key] = &[
    ("frames", "81", "frames per input window (T)"),
    ("dim", "32", "per-joint feature width (D)"),
    ("layers", "6", "transformer layers per encoder (N_en)"),
    ("max_heads", "8", "upper bound on attention heads"),
    ("mlp_ratio", "4", "feed-forward expansion for STE/JTTE"),
    ("group_mlp_ratio", "4", "feed-forward expansion for BTTE/PTTE"),
    ("encoders", "STE,JTTE,BTTE,PTTE", "enabled encoders in execution order"),
    ("fusion", "true", "fuse all encoder outputs before the head"),
];

pub const TRAIN_KEYS: &[Key] = &[
    ("epochs", "100", "training epochs"),
    ("lr", "0.001", "initial learning rate"),
    ("lr_decay", "0.8", "learning-rate decay factor"),
    ("lr_decay_every", "20", "epochs between decays"),
    ("batch_size", "8", "windows per optimizer step"),
    ("seed", "0", "seed for initialization, sampling and augmentation"),
    ("interval", "1", "sample interval N between window frames"),
    ("flip_augment", "true", "random horizontal flips during training"),
    ("test_time_flip", "true", "average with the flipped prediction at evaluation"),
    ("val_fraction", "0.2", "trailing fraction of every sequence held out"),
    ("data", "data/manifest.json", "dataset manifest"),
    ("out", "runs/train", "output directory"),
];

pub const EVAL_KEYS: &[Key] = &[
    ("checkpoint", "runs/train/checkpoint.hstw", "model checkpoint"),
    ("data", "data/manifest.json", "dataset manifest"),
    ("out", "runs/eval", "output directory"),
    ("interval", "1", "sample interval N between window frames"),
    ("test_time_flip", "true", "average with the flipped prediction"),
    ("split", "val", "frames to score: val (held-out tail) or all"),
    ("val_fraction", "0.2", "trailing fraction of every sequence held out"),
    ("pck_threshold", "150", "PCK threshold in millimeters"),
];

pub const GEN_KEYS: &[Key] = &[
    ("seed", "1", "generator seed"),
    ("frames", "2000", "total frames across all sequences"),
    ("sequences", "4", "number of sequences (distinct actors)"),
    ("motion", "walk_cycle", "walk_cycle, arm_wave or mixed"),
    ("noise_px", "0", "std of Gaussian noise added to 2D keypoints, pixels"),
    ("out", "data", "output directory"),
];

pub const STATS_KEYS: &[Key] = &[
    ("data", "data/manifest.json", "dataset manifest"),
    ("out", "runs/stats", "output directory"),
    ("intervals", "1,3,5,7", "sample intervals N"),
    ("bins", "20", "histogram bins"),
];

pub const GRADCHECK_KEYS: &[Key] = &[
    ("seed", "0", "seed for the random cases"),
    ("cases", "100", "random cases per primitive"),
    ("coords", "8", "coordinates checked per model parameter tensor"),
    ("frames", "4", "model check window length"),
    ("dim", "8", "model check feature width"),
    ("layers", "1", "model check layers per encoder"),
];

pub const ABLATE_KEYS: &[Key] = &[
    ("matrix", "all", "components, ordering, grid or all"),
    ("grid_frames", "9,27", "window lengths of the grid"),
    ("grid_intervals", "1,3,5,7", "sample intervals of the grid"),
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    keys: Vec<&'static str>,
    values: BTreeMap<&'static str, String>,
}

impl RunConfig {
    /// Defaults, then the file at `path`, then `overrides`.
    pub fn resolve(schema: &[Key], path: Option<&Path>, overrides: &[(String, String)]) -> Result<Self, CliError> {
        let mut cfg = Self {
            keys: schema.iter().map(|k| k.0).collect(),
            values: schema.iter().map(|k| (k.0, k.1.to_string())).collect(),
        };
        if let Some(path) = path {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for (k, v) in overrides {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::config(format!("{origin}:{}: expected key=value, got {line:?}", i + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| CliError::config(format!("{origin}:{}: {}", i + 1, e.message)))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let slot =
            self.keys.iter().find(|k| **k == key).ok_or_else(|| CliError::config(format!("unknown key {key:?}")))?;
        self.values.insert(slot, value.to_string());
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("key {key} missing from schema"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, CliError>
    where
        T::Err: Display,
    {
        let raw = self.raw(key);
        raw.parse().map_err(|e| CliError::config(format!("{key}={raw}: {e}")))
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.raw(key).to_ascii_lowercase().as_str() {
            "true" | "1" | "yes" | "on" => Ok(true),
            "false" | "0" | "no" | "off" => Ok(false),
            other => Err(CliError::config(format!("{key}={other}: expected a boolean"))),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CliError>
    where
        T::Err: Display,
    {
        self.raw(key)
            .split(',')
            .map(|s| s.trim().parse().map_err(|e| CliError::config(format!("{key}: {e}"))))
            .collect()
    }

    pub fn path(&self, key: &str) -> PathBuf {
        PathBuf::from(self.raw(key))
    }

    /// Every key in schema order, one `key=value` per line.
    pub fn render(&self) -> String {
        self.keys.iter().map(|k| format!("{k}={}\n", self.values[k])).collect()
    }

    /// Writes `resolved.cfg` into `dir`.
    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(dir).map_err(CliError::data_io)?;
        let path = dir.join("resolved.cfg");
        std::fs::write(&path, self.render()).map_err(CliError::data_io)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_overrides() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "# comment\nframes = 9\ndim=16\n").unwrap();
        let cfg = RunConfig::resolve(MODEL_KEYS, Some(&path), &[("dim".into(), "8".into())]).unwrap();
        assert_eq!(cfg.get::<usize>("frames").unwrap(), 9);
        assert_eq!(cfg.get::<usize>("dim").unwrap(), 8);
        assert_eq!(cfg.get::<usize>("layers").unwrap(), 6);
        let again = dir.path().join("again.cfg");
        std::fs::write(&again, cfg.render()).unwrap();
        assert_eq!(RunConfig::resolve(MODEL_KEYS, Some(&again), &[]).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.cfg");
        std::fs::write(&path, "frame=9\n").unwrap();
        let err = RunConfig::resolve(MODEL_KEYS, Some(&path), &[]).unwrap_err();
        assert_eq!(err.code, 2);
        assert!(err.message.contains("frame"), "{}", err.message);
    }
}
