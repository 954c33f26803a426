use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::skeleton::NUM_JOINTS;

/// The four encoder levels, listed in canonical (fusion) order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderKind {
    /// Spatial: joints within a frame.
    Ste,
    /// Joint temporal: one joint across frames.
    Jtte,
    /// Body-part temporal: one part's concatenated joints across frames.
    Btte,
    /// Pose temporal: the whole concatenated pose across frames.
    Ptte,
}

impl EncoderKind {
    pub const CANONICAL: [EncoderKind; 4] = [EncoderKind::Ste, EncoderKind::Jtte, EncoderKind::Btte, EncoderKind::Ptte];

    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::Ste => "STE",
            EncoderKind::Jtte => "JTTE",
            EncoderKind::Btte => "BTTE",
            EncoderKind::Ptte => "PTTE",
        }
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "STE" => Ok(EncoderKind::Ste),
            "JTTE" => Ok(EncoderKind::Jtte),
            "BTTE" => Ok(EncoderKind::Btte),
            "PTTE" => Ok(EncoderKind::Ptte),
            other => Err(Error::Config(format!("unknown encoder {other:?}"))),
        }
    }
}

/// Architecture hyper-parameters. The set of enabled encoders is exactly the
/// set named in `encoder_order`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderConfig {
    /// Frames per input window (T).
    pub frames: usize,
    pub joints: usize,
    /// Per-joint feature width (D).
    pub dim: usize,
    /// Transformer layers per encoder (N_en).
    pub layers: usize,
    /// Upper bound on attention heads; each encoder uses the largest divisor
    /// of its token width not exceeding this.
    pub max_heads: usize,
    /// Feed-forward expansion for the STE/JTTE blocks.
    pub mlp_ratio: usize,
    /// Feed-forward expansion for the BTTE/PTTE blocks.
    pub group_mlp_ratio: usize,
    pub encoder_order: Vec<EncoderKind>,
    pub fusion: bool,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            frames: 81,
            joints: NUM_JOINTS,
            dim: 32,
            layers: 6,
            max_heads: 8,
            mlp_ratio: 4,
            group_mlp_ratio: 4,
            encoder_order: EncoderKind::CANONICAL.to_vec(),
            fusion: true,
        }
    }
}

impl EncoderConfig {
    pub fn small(frames: usize, dim: usize, layers: usize) -> Self {
        Self { frames, dim, layers, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.frames == 0 {
            return bad("frames must be at least 1".into());
        }
        if self.joints != NUM_JOINTS {
            return bad(format!("only {NUM_JOINTS}-joint skeletons are supported, got {}", self.joints));
        }
        if self.dim == 0 || self.layers == 0 || self.max_heads == 0 {
            return bad("dim, layers and max_heads must be positive".into());
        }
        if self.mlp_ratio == 0 || self.group_mlp_ratio == 0 {
            return bad("mlp ratios must be positive".into());
        }
        if self.encoder_order.is_empty() {
            return bad("at least one encoder must be enabled".into());
        }
        for (i, kind) in self.encoder_order.iter().enumerate() {
            if self.encoder_order[..i].contains(kind) {
                return bad(format!("encoder {kind} listed twice in encoder_order"));
            }
        }
        Ok(())
    }

    pub fn is_enabled(&self, kind: EncoderKind) -> bool {
        self.encoder_order.contains(&kind)
    }

    /// Enabled encoders in canonical order; this is the fusion concatenation order.
    pub fn enabled_canonical(&self) -> Vec<EncoderKind> {
        EncoderKind::CANONICAL.into_iter().filter(|k| self.is_enabled(*k)).collect()
    }

    /// Rows of the fusion weight.
    pub fn fusion_width(&self) -> usize {
        self.encoder_order.len() * self.dim
    }

    /// Head count used for a token width.
    pub fn heads_for(&self, width: usize) -> usize {
        (1..=self.max_heads.min(width)).rev().find(|&h| width.is_multiple_of(h)).unwrap_or(1)
    }

    /// Replaces the enabled encoders (in execution order) and the fusion flag.
    pub fn with_encoders(mut self, encoders: &[EncoderKind], fusion: bool) -> Self {
        self.encoder_order = encoders.to_vec();
        self.fusion = fusion;
        self
    }

    /// Stable short identifier of the architecture, used to name ablation cells.
    pub fn tag(&self) -> String {
        let order: Vec<&str> = self.encoder_order.iter().map(|k| k.name()).collect();
        format!(
            "T{}-D{}-L{}-{}{}",
            self.frames,
            self.dim,
            self.layers,
            order.join(">"),
            if self.fusion { "+F" } else { "" }
        )
    }
}
