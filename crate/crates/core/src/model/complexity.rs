//! Closed-form parameter and multiply-accumulate counts.

use serde::Serialize;

use crate::model::config::{EncoderConfig, EncoderKind};
use crate::skeleton::BodyPartPartition;

/// Published reference points for the default T=81, D=32, N_en=6 setting.
pub const REFERENCE_PARAMS_MAIN_M: f64 = 22.81;
pub const REFERENCE_PARAMS_APPENDIX_M: f64 = 22.72;
pub const REFERENCE_GFLOPS_MAIN: f64 = 3.94;
pub const REFERENCE_GFLOPS_APPENDIX: f64 = 2.12;

/// Scalars in one block of token width `w` and hidden width `r·w`.
pub fn te_layer_params(width: usize, mlp_ratio: usize) -> usize {
    let hidden = width * mlp_ratio;
    // two norms, four projections with bias, two feed-forward layers with bias
    4 * width + 4 * (width * width + width) + (width * hidden + hidden) + (hidden * width + width)
}

fn encoder_params(width: usize, pos_numel: usize, layers: usize, mlp_ratio: usize) -> usize {
    pos_numel + layers * te_layer_params(width, mlp_ratio) + 2 * width
}

/// Multiply-accumulates of one block over `batch` sequences of `n` tokens.
pub fn te_layer_macs(batch: usize, n: usize, width: usize, mlp_ratio: usize) -> u64 {
    let (b, n, w, r) = (batch as u64, n as u64, width as u64, mlp_ratio as u64);
    // Q/K/V/output projections, QKᵀ and attention·V, feed-forward.
    b * n * 4 * w * w + 2 * b * n * n * w + 2 * b * n * w * (r * w)
}

/// Per-component counts; `total` is their sum.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Breakdown {
    pub embed: u64,
    pub ste: u64,
    pub jtte: u64,
    pub btte: u64,
    pub ptte: u64,
    pub fusion: u64,
    pub head: u64,
    pub total: u64,
}

impl Breakdown {
    fn finish(mut self) -> Self {
        self.total = self.embed + self.ste + self.jtte + self.btte + self.ptte + self.fusion + self.head;
        self
    }

    pub fn component(&self, kind: EncoderKind) -> u64 {
        match kind {
            EncoderKind::Ste => self.ste,
            EncoderKind::Jtte => self.jtte,
            EncoderKind::Btte => self.btte,
            EncoderKind::Ptte => self.ptte,
        }
    }
}

pub fn param_breakdown(config: &EncoderConfig, partition: &BodyPartPartition) -> Breakdown {
    let (t, j, d, l) = (config.frames, config.joints, config.dim, config.layers);
    let mut b = Breakdown { embed: (2 * d + 2 * d) as u64, head: (3 * d + 3) as u64, ..Default::default() };
    if config.is_enabled(EncoderKind::Ste) {
        b.ste = encoder_params(d, j * d, l, config.mlp_ratio) as u64;
    }
    if config.is_enabled(EncoderKind::Jtte) {
        b.jtte = encoder_params(d, t * d, l, config.mlp_ratio) as u64;
    }
    if config.is_enabled(EncoderKind::Btte) {
        b.btte = partition
            .token_widths(d)
            .into_iter()
            .map(|w| encoder_params(w, t * w, l, config.group_mlp_ratio) as u64)
            .sum();
    }
    if config.is_enabled(EncoderKind::Ptte) {
        b.ptte = encoder_params(j * d, t * j * d, l, config.group_mlp_ratio) as u64;
    }
    if config.fusion {
        b.fusion = (config.fusion_width() * d) as u64;
    }
    b.finish()
}

pub fn param_count(config: &EncoderConfig, partition: &BodyPartPartition) -> u64 {
    param_breakdown(config, partition).total
}

/// Multiply-accumulates of one forward pass over a `T`-frame window.
pub fn flops_breakdown(config: &EncoderConfig, partition: &BodyPartPartition) -> Breakdown {
    let (t, j, d, l) = (config.frames, config.joints, config.dim, config.layers as u64);
    let tj = (t * j) as u64;
    let mut b = Breakdown { embed: tj * 2 * d as u64, head: tj * d as u64 * 3, ..Default::default() };
    if config.is_enabled(EncoderKind::Ste) {
        b.ste = l * te_layer_macs(t, j, d, config.mlp_ratio);
    }
    if config.is_enabled(EncoderKind::Jtte) {
        b.jtte = l * te_layer_macs(j, t, d, config.mlp_ratio);
    }
    if config.is_enabled(EncoderKind::Btte) {
        b.btte =
            partition.token_widths(d).into_iter().map(|w| l * te_layer_macs(1, t, w, config.group_mlp_ratio)).sum();
    }
    if config.is_enabled(EncoderKind::Ptte) {
        b.ptte = l * te_layer_macs(1, t, j * d, config.group_mlp_ratio);
    }
    if config.fusion {
        b.fusion = tj * (config.fusion_width() * d) as u64;
    }
    b.finish()
}

pub fn flops_estimate(config: &EncoderConfig, partition: &BodyPartPartition) -> u64 {
    flops_breakdown(config, partition).total
}
