//! Forward pass: embedding, the four encoders with their tensor slicing,
//! fusion and the regression head. Every function records onto a tape and
//! takes weights already bound as [`Var`]s.

use crate::error::{Error, Result, TensorError};
use crate::model::config::{EncoderConfig, EncoderKind};
use crate::model::params::{EncoderParams, ModelParams, TeLayerParams};
use crate::skeleton::BodyPartPartition;
use crate::tape::{Tape, Var};

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-stage outputs of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub embedded: Var,
    /// Encoder outputs in canonical order (only enabled ones).
    pub encoder_outputs: Vec<(EncoderKind, Var)>,
    /// Input to the regression head (fusion output, or the last encoder's output).
    pub features: Var,
    pub output: Var,
}

/// `LN(X W_L)`: per-joint 2→D projection then layer norm.
pub fn embed(tape: &mut Tape<'_>, x: Var, params: &ModelParams<Var>) -> Result<Var> {
    let shape = tape.shape(x);
    if shape.len() != 3 || shape[2] != 2 {
        return Err(Error::Config(format!("expected a T×J×2 input, got shape {shape:?}")));
    }
    let projected = tape.matmul(x, params.embed_weight)?;
    Ok(tape.layer_norm(projected, params.embed_gamma, params.embed_beta, LAYER_NORM_EPS)?)
}

/// Pre-norm transformer block on tokens `[.., n, d]`: multi-head
/// self-attention with residual, then a GELU feed-forward with residual.
pub fn te_block(
    tape: &mut Tape<'_>,
    x: Var,
    layer: &TeLayerParams<Var>,
    heads: usize,
) -> std::result::Result<Var, TensorError> {
    let shape = tape.shape(x).to_vec();
    let rank = shape.len();
    if rank < 2 {
        return Err(TensorError::InvalidShape {
            op: "te_block",
            detail: format!("tokens need rank >= 2, got {shape:?}"),
        });
    }
    let (n, d) = (shape[rank - 2], shape[rank - 1]);
    if heads == 0 || d % heads != 0 {
        return Err(TensorError::InvalidShape {
            op: "te_block",
            detail: format!("token width {d} is not divisible by {heads} heads"),
        });
    }
    let batch: usize = shape[..rank - 2].iter().product();
    let head_dim = d / heads;

    let h = tape.layer_norm(x, layer.ln1_gamma, layer.ln1_beta, LAYER_NORM_EPS)?;
    let project = |tape: &mut Tape<'_>, w: Var, b: Var| -> std::result::Result<Var, TensorError> {
        let p = tape.matmul(h, w)?;
        let p = tape.add_broadcast(p, b)?;
        let p = tape.reshape(p, &[batch, n, heads, head_dim])?;
        tape.permute(p, &[0, 2, 1, 3])
    };
    let q = project(tape, layer.w_query, layer.b_query)?;
    let k = project(tape, layer.w_key, layer.b_key)?;
    let v = project(tape, layer.w_value, layer.b_value)?;

    let scores = tape.batch_matmul(q, k, true)?;
    let scores = tape.scale(scores, 1.0 / (head_dim as f64).sqrt());
    let attn = tape.softmax(scores);
    let ctx = tape.batch_matmul(attn, v, false)?;
    let ctx = tape.permute(ctx, &[0, 2, 1, 3])?;
    let ctx = tape.reshape(ctx, &shape)?;
    let out = tape.matmul(ctx, layer.w_out)?;
    let out = tape.add_broadcast(out, layer.b_out)?;
    let x = tape.add(x, out)?;

    let h = tape.layer_norm(x, layer.ln2_gamma, layer.ln2_beta, LAYER_NORM_EPS)?;
    let f = tape.matmul(h, layer.w_ff1)?;
    let f = tape.add_broadcast(f, layer.b_ff1)?;
    let f = tape.gelu(f);
    let f = tape.matmul(f, layer.w_ff2)?;
    let f = tape.add_broadcast(f, layer.b_ff2)?;
    tape.add(x, f)
}

/// Adds the positional encoding, runs every block, applies the final norm.
pub fn encoder_stack(
    tape: &mut Tape<'_>,
    tokens: Var,
    encoder: &EncoderParams<Var>,
    heads: usize,
) -> std::result::Result<Var, TensorError> {
    let mut x = tape.add_broadcast(tokens, encoder.pos)?;
    for layer in &encoder.layers {
        x = te_block(tape, x, layer, heads)?;
    }
    tape.layer_norm(x, encoder.norm_gamma, encoder.norm_beta, LAYER_NORM_EPS)
}

fn require(enc: Option<&EncoderParams<Var>>, kind: EncoderKind) -> Result<&EncoderParams<Var>> {
    enc.ok_or_else(|| Error::Config(format!("encoder {kind} has no parameters")))
}

/// Spatial encoder: each frame's J joints are the tokens.
pub fn ste_forward(tape: &mut Tape<'_>, x: Var, params: &ModelParams<Var>, config: &EncoderConfig) -> Result<Var> {
    let enc = require(params.ste.as_ref(), EncoderKind::Ste)?;
    Ok(encoder_stack(tape, x, enc, config.heads_for(config.dim))?)
}

/// Joint temporal encoder: each joint's trajectory over T frames is a sequence.
pub fn jtte_forward(tape: &mut Tape<'_>, z: Var, params: &ModelParams<Var>, config: &EncoderConfig) -> Result<Var> {
    let enc = require(params.jtte.as_ref(), EncoderKind::Jtte)?;
    let per_joint = tape.permute(z, &[1, 0, 2])?;
    let out = encoder_stack(tape, per_joint, enc, config.heads_for(config.dim))?;
    Ok(tape.permute(out, &[1, 0, 2])?)
}

/// Body-part temporal encoders: each part's joints are concatenated per frame
/// into a `J^k·D` token and run through that part's own encoder; the outputs
/// are split back into joints in the original order.
pub fn btte_forward(
    tape: &mut Tape<'_>,
    z: Var,
    partition: &BodyPartPartition,
    params: &ModelParams<Var>,
    config: &EncoderConfig,
) -> Result<Var> {
    let shape = tape.shape(z).to_vec();
    let (t, j, d) = (shape[0], shape[1], shape[2]);
    let groups = partition.group_indices();
    let covered: usize = groups.iter().map(Vec::len).sum();
    if groups.len() != params.btte.len() || covered != j {
        return Err(Error::Config(format!(
            "partition has {} groups over {covered} joints; model has {} part encoders over {j} joints",
            groups.len(),
            params.btte.len()
        )));
    }
    let mut parts = Vec::with_capacity(groups.len());
    for (indices, enc) in groups.iter().zip(&params.btte) {
        let width = indices.len() * d;
        let part = tape.index_select(z, 1, indices)?;
        let tokens = tape.reshape(part, &[t, width])?;
        let out = encoder_stack(tape, tokens, enc, config.heads_for(width))?;
        parts.push(tape.reshape(out, &[t, indices.len(), d])?);
    }
    let grouped = tape.concat(&parts, 1)?;
    // Position of each original joint within the grouped layout.
    let mut inverse = vec![0; j];
    for (slot, joint) in groups.iter().flatten().enumerate() {
        inverse[*joint] = slot;
    }
    Ok(tape.index_select(grouped, 1, &inverse)?)
}

/// Pose temporal encoder: each frame's whole pose is one `J·D` token.
pub fn ptte_forward(tape: &mut Tape<'_>, z: Var, params: &ModelParams<Var>, config: &EncoderConfig) -> Result<Var> {
    let enc = require(params.ptte.as_ref(), EncoderKind::Ptte)?;
    let shape = tape.shape(z).to_vec();
    let width = shape[1] * shape[2];
    let tokens = tape.reshape(z, &[shape[0], width])?;
    let out = encoder_stack(tape, tokens, enc, config.heads_for(width))?;
    Ok(tape.reshape(out, &shape)?)
}

/// `Concat(Z_1, …, Z_n) W_F` along the feature axis.
pub fn fuse(tape: &mut Tape<'_>, outputs: &[Var], fusion_weight: Var) -> Result<Var> {
    let first = *outputs.first().ok_or_else(|| Error::Config("fusion needs at least one input".into()))?;
    let base = tape.shape(first).to_vec();
    for &o in outputs {
        if tape.shape(o) != base.as_slice() {
            return Err(TensorError::ShapeMismatch { op: "fuse", lhs: base, rhs: tape.shape(o).to_vec() }.into());
        }
    }
    let cat = tape.concat_last_axis(outputs)?;
    Ok(tape.matmul(cat, fusion_weight)?)
}

/// Linear D→3 regression head.
pub fn head(tape: &mut Tape<'_>, features: Var, params: &ModelParams<Var>) -> Result<Var> {
    let y = tape.matmul(features, params.head_weight)?;
    Ok(tape.add_broadcast(y, params.head_bias)?)
}

fn run_encoder(
    tape: &mut Tape<'_>,
    kind: EncoderKind,
    z: Var,
    partition: &BodyPartPartition,
    params: &ModelParams<Var>,
    config: &EncoderConfig,
) -> Result<Var> {
    match kind {
        EncoderKind::Ste => ste_forward(tape, z, params, config),
        EncoderKind::Jtte => jtte_forward(tape, z, params, config),
        EncoderKind::Btte => btte_forward(tape, z, partition, params, config),
        EncoderKind::Ptte => ptte_forward(tape, z, params, config),
    }
}

/// Full pass from a `T×J×2` input to `T×J×3` poses: embedding, enabled
/// encoders chained in `encoder_order`, fusion over all enabled encoder
/// outputs (canonical order), regression head.
pub fn forward(
    tape: &mut Tape<'_>,
    x: Var,
    params: &ModelParams<Var>,
    config: &EncoderConfig,
    partition: &BodyPartPartition,
) -> Result<ForwardTrace> {
    let shape = tape.shape(x);
    if shape.len() != 3 || shape[0] != config.frames || shape[1] != config.joints || shape[2] != 2 {
        return Err(Error::Config(format!(
            "input shape {shape:?} does not match the configured {}×{}×2",
            config.frames, config.joints
        )));
    }
    if config.fusion != params.fusion.is_some() {
        return Err(Error::Config("fusion flag disagrees with the parameters".into()));
    }
    let embedded = embed(tape, x, params)?;
    let mut z = embedded;
    let mut outputs = Vec::with_capacity(config.encoder_order.len());
    for &kind in &config.encoder_order {
        z = run_encoder(tape, kind, z, partition, params, config)?;
        outputs.push((kind, z));
    }
    outputs.sort_by_key(|(k, _)| EncoderKind::CANONICAL.iter().position(|c| c == k));
    let features = match params.fusion {
        Some(w) => {
            let vars: Vec<Var> = outputs.iter().map(|(_, v)| *v).collect();
            fuse(tape, &vars, w)?
        }
        None => z,
    };
    let output = head(tape, features, params)?;
    Ok(ForwardTrace { embedded, encoder_outputs: outputs, features, output })
}
