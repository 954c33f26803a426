//! Learnable weights and their fixed enumeration order.
//!
//! Parameters are enumerated as: embedding (`embed.weight`, `embed.gamma`,
//! `embed.beta`), then each enabled encoder in canonical order STE, JTTE,
//! BTTE parts 0..6, PTTE (each as positional encoding, layers 0..N_en with
//! their sixteen tensors, final norm), then `fusion.weight` when fusion is
//! on, then `head.weight` and `head.bias`. Checkpoints and optimizer state
//! follow this order.

use rand::Rng;

use crate::error::Result;
use crate::model::config::{EncoderConfig, EncoderKind};
use crate::skeleton::BodyPartPartition;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Standard deviation of positional-encoding initialization.
pub const POS_INIT_STD: f64 = 0.02;

#[derive(Clone, Copy)]
enum Fill {
    Ones,
    Zeros,
    Positional,
    Linear,
}

macro_rules! layer_params {
    ($($field:ident),* $(,)?) => {
        /// One pre-norm transformer block.
        #[derive(Clone, Debug, PartialEq)]
        pub struct TeLayerParams<P> {
            $(pub $field: P,)*
        }

        impl<P> TeLayerParams<P> {
            fn map<'a, Q>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a P) -> Q) -> TeLayerParams<Q> {
                TeLayerParams { $($field: f(&format!("{prefix}.{}", stringify!($field)), &self.$field),)* }
            }

            fn for_each_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(&str, &'a mut P)) {
                $(f(&format!("{prefix}.{}", stringify!($field)), &mut self.$field);)*
            }
        }
    };
}

layer_params!(
    ln1_gamma, ln1_beta, w_query, b_query, w_key, b_key, w_value, b_value, w_out, b_out, ln2_gamma, ln2_beta, w_ff1,
    b_ff1, w_ff2, b_ff2,
);

/// A stack of blocks with its additive positional encoding and final norm.
#[derive(Clone, Debug, PartialEq)]
pub struct EncoderParams<P> {
    pub pos: P,
    pub layers: Vec<TeLayerParams<P>>,
    pub norm_gamma: P,
    pub norm_beta: P,
}

impl<P> EncoderParams<P> {
    fn map<'a, Q>(&'a self, prefix: &str, f: &mut impl FnMut(&str, &'a P) -> Q) -> EncoderParams<Q> {
        EncoderParams {
            pos: f(&format!("{prefix}.pos"), &self.pos),
            layers: self.layers.iter().enumerate().map(|(i, l)| l.map(&format!("{prefix}.layer{i}"), f)).collect(),
            norm_gamma: f(&format!("{prefix}.norm_gamma"), &self.norm_gamma),
            norm_beta: f(&format!("{prefix}.norm_beta"), &self.norm_beta),
        }
    }

    fn for_each_mut<'a>(&'a mut self, prefix: &str, f: &mut impl FnMut(&str, &'a mut P)) {
        f(&format!("{prefix}.pos"), &mut self.pos);
        for (i, l) in self.layers.iter_mut().enumerate() {
            l.for_each_mut(&format!("{prefix}.layer{i}"), f);
        }
        f(&format!("{prefix}.norm_gamma"), &mut self.norm_gamma);
        f(&format!("{prefix}.norm_beta"), &mut self.norm_beta);
    }
}

/// All model weights. `P` is [`Tensor`] for stored weights and [`Var`] once
/// bound to a tape.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<P = Tensor> {
    /// 2×D joint embedding, no bias.
    pub embed_weight: P,
    pub embed_gamma: P,
    pub embed_beta: P,
    /// Positional encoding J×D.
    pub ste: Option<EncoderParams<P>>,
    /// Positional encoding T×D.
    pub jtte: Option<EncoderParams<P>>,
    /// One encoder per body part; positional encoding T×(J^k·D). Empty when disabled.
    pub btte: Vec<EncoderParams<P>>,
    /// Positional encoding T×(J·D).
    pub ptte: Option<EncoderParams<P>>,
    /// (#enabled·D)×D, no bias.
    pub fusion: Option<P>,
    /// D×3.
    pub head_weight: P,
    pub head_bias: P,
}

impl<P> ModelParams<P> {
    /// Rebuilds the structure by applying `f` to every parameter in enumeration order.
    pub fn map<'a, Q>(&'a self, mut f: impl FnMut(&str, &'a P) -> Q) -> ModelParams<Q> {
        let f = &mut f;
        ModelParams {
            embed_weight: f("embed.weight", &self.embed_weight),
            embed_gamma: f("embed.gamma", &self.embed_gamma),
            embed_beta: f("embed.beta", &self.embed_beta),
            ste: self.ste.as_ref().map(|e| e.map("ste", f)),
            jtte: self.jtte.as_ref().map(|e| e.map("jtte", f)),
            btte: self.btte.iter().enumerate().map(|(i, e)| e.map(&format!("btte{i}"), f)).collect(),
            ptte: self.ptte.as_ref().map(|e| e.map("ptte", f)),
            fusion: self.fusion.as_ref().map(|w| f("fusion.weight", w)),
            head_weight: f("head.weight", &self.head_weight),
            head_bias: f("head.bias", &self.head_bias),
        }
    }

    /// Visits every parameter mutably in enumeration order.
    pub fn for_each_mut<'a>(&'a mut self, mut f: impl FnMut(&str, &'a mut P)) {
        let f = &mut f;
        f("embed.weight", &mut self.embed_weight);
        f("embed.gamma", &mut self.embed_gamma);
        f("embed.beta", &mut self.embed_beta);
        if let Some(e) = &mut self.ste {
            e.for_each_mut("ste", f);
        }
        if let Some(e) = &mut self.jtte {
            e.for_each_mut("jtte", f);
        }
        for (i, e) in self.btte.iter_mut().enumerate() {
            e.for_each_mut(&format!("btte{i}"), f);
        }
        if let Some(e) = &mut self.ptte {
            e.for_each_mut("ptte", f);
        }
        if let Some(w) = &mut self.fusion {
            f("fusion.weight", w);
        }
        f("head.weight", &mut self.head_weight);
        f("head.bias", &mut self.head_bias);
    }

    /// Visits every parameter in enumeration order.
    pub fn for_each<'a>(&'a self, mut f: impl FnMut(&str, &'a P)) {
        let _ = self.map(|name, p| f(name, p));
    }

    /// Parameters flattened in enumeration order.
    pub fn to_vec(&self) -> Vec<&P> {
        let mut out = Vec::new();
        self.for_each(|_, p| out.push(p));
        out
    }

    pub fn encoder(&self, kind: EncoderKind) -> Option<&EncoderParams<P>> {
        match kind {
            EncoderKind::Ste => self.ste.as_ref(),
            EncoderKind::Jtte => self.jtte.as_ref(),
            EncoderKind::Ptte => self.ptte.as_ref(),
            EncoderKind::Btte => None,
        }
    }
}

impl ModelParams<Tensor> {
    /// Fresh weights for `config`: LN scales 1 and shifts 0, biases 0,
    /// positional encodings `N(0, 0.02²)`, linear weights `N(0, 1/fan_in)`.
    pub fn init<R: Rng + ?Sized>(config: &EncoderConfig, partition: &BodyPartPartition, rng: &mut R) -> Result<Self> {
        Self::build(config, partition, &mut |kind, shape| match kind {
            Fill::Ones => Tensor::ones(shape),
            Fill::Zeros => Tensor::zeros(shape),
            Fill::Positional => Tensor::randn(shape, POS_INIT_STD, rng),
            Fill::Linear => Tensor::randn(shape, 1.0 / (shape[0] as f64).sqrt(), rng),
        })
    }

    /// All-zero weights with the shapes `config` implies.
    pub fn zeros(config: &EncoderConfig, partition: &BodyPartPartition) -> Result<Self> {
        Self::build(config, partition, &mut |_, shape| Tensor::zeros(shape))
    }

    fn build(
        config: &EncoderConfig,
        partition: &BodyPartPartition,
        fill: &mut dyn FnMut(Fill, &[usize]) -> Tensor,
    ) -> Result<Self> {
        config.validate()?;
        partition.validate()?;
        let (t, j, d) = (config.frames, config.joints, config.dim);
        let mut encoder = |width: usize, pos_shape: &[usize], ratio: usize| {
            let hidden = width * ratio;
            let pos = fill(Fill::Positional, pos_shape);
            let layers = (0..config.layers)
                .map(|_| TeLayerParams {
                    ln1_gamma: fill(Fill::Ones, &[width]),
                    ln1_beta: fill(Fill::Zeros, &[width]),
                    w_query: fill(Fill::Linear, &[width, width]),
                    b_query: fill(Fill::Zeros, &[width]),
                    w_key: fill(Fill::Linear, &[width, width]),
                    b_key: fill(Fill::Zeros, &[width]),
                    w_value: fill(Fill::Linear, &[width, width]),
                    b_value: fill(Fill::Zeros, &[width]),
                    w_out: fill(Fill::Linear, &[width, width]),
                    b_out: fill(Fill::Zeros, &[width]),
                    ln2_gamma: fill(Fill::Ones, &[width]),
                    ln2_beta: fill(Fill::Zeros, &[width]),
                    w_ff1: fill(Fill::Linear, &[width, hidden]),
                    b_ff1: fill(Fill::Zeros, &[hidden]),
                    w_ff2: fill(Fill::Linear, &[hidden, width]),
                    b_ff2: fill(Fill::Zeros, &[width]),
                })
                .collect();
            EncoderParams {
                pos,
                layers,
                norm_gamma: fill(Fill::Ones, &[width]),
                norm_beta: fill(Fill::Zeros, &[width]),
            }
        };

        let ste = config.is_enabled(EncoderKind::Ste).then(|| encoder(d, &[j, d], config.mlp_ratio));
        let jtte = config.is_enabled(EncoderKind::Jtte).then(|| encoder(d, &[t, d], config.mlp_ratio));
        let btte = if config.is_enabled(EncoderKind::Btte) {
            partition.token_widths(d).into_iter().map(|w| encoder(w, &[t, w], config.group_mlp_ratio)).collect()
        } else {
            Vec::new()
        };
        let ptte = config.is_enabled(EncoderKind::Ptte).then(|| encoder(j * d, &[t, j * d], config.group_mlp_ratio));
        let embed_weight = fill(Fill::Linear, &[2, d]);
        let fusion = config.fusion.then(|| fill(Fill::Linear, &[config.fusion_width(), d]));
        Ok(Self {
            embed_weight,
            embed_gamma: fill(Fill::Ones, &[d]),
            embed_beta: fill(Fill::Zeros, &[d]),
            ste,
            jtte,
            btte,
            ptte,
            fusion,
            head_weight: fill(Fill::Linear, &[d, 3]),
            head_bias: fill(Fill::Zeros, &[3]),
        })
    }

    /// Registers every weight as a borrowed gradient-tracking leaf.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> ModelParams<Var> {
        self.map(|_, t| tape.param(t))
    }

    /// Total scalar count by enumeration.
    pub fn num_scalars(&self) -> usize {
        let mut n = 0;
        self.for_each(|_, t| n += t.numel());
        n
    }

    /// (name, shape) pairs in enumeration order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        self.for_each(|name, t| out.push((name.to_string(), t.shape().to_vec())));
        out
    }

    /// Sets every positional encoding to zero.
    pub fn zero_positional_encodings(&mut self) {
        self.for_each_mut(|name, t| {
            if name.ends_with(".pos") {
                t.data_mut().fill(0.0);
            }
        });
    }
}
