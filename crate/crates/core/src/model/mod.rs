//! The lifting network and its accounting.

pub mod checkpoint;
pub mod complexity;
mod config;
pub mod forward;
mod params;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use config::{EncoderConfig, EncoderKind};
pub use forward::ForwardTrace;
pub use params::{EncoderParams, ModelParams, TeLayerParams, POS_INIT_STD};

use crate::error::{Error, Result};
use crate::skeleton::BodyPartPartition;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Anything trainable that maps a `T×17×2` window to `T×17×3`.
pub trait Lifter: Sync {
    /// Window length the model consumes.
    fn frames(&self) -> usize;

    /// Records a forward pass on `tape`, returning the output and the
    /// parameter leaves in enumeration order.
    fn record<'p>(&'p self, tape: &mut Tape<'p>, input: Var) -> Result<(Var, Vec<Var>)>;

    /// Parameters in enumeration order.
    fn parameters(&self) -> Vec<&Tensor>;

    fn parameters_mut(&mut self) -> Vec<&mut Tensor>;

    /// Inference without gradient bookkeeping for the caller.
    fn predict(&self, input: &Tensor) -> Result<Tensor> {
        let mut tape = Tape::new();
        let x = tape.constant(input.clone());
        let (y, _) = self.record(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HstFormer {
    pub config: EncoderConfig,
    pub partition: BodyPartPartition,
    pub params: ModelParams,
}

impl HstFormer {
    pub fn new(config: EncoderConfig, seed: u64) -> Result<Self> {
        let partition = BodyPartPartition::default();
        let params = ModelParams::init(&config, &partition, &mut ChaCha8Rng::seed_from_u64(seed))?;
        Ok(Self { config, partition, params })
    }

    /// Wraps existing weights after checking they have the shapes `config` implies.
    pub fn from_params(config: EncoderConfig, partition: BodyPartPartition, params: ModelParams) -> Result<Self> {
        let expected = ModelParams::zeros(&config, &partition)?.layout();
        let actual = params.layout();
        if expected != actual {
            return Err(Error::Config(format!(
                "parameter layout does not match config {} ({} tensors vs {} expected)",
                config.tag(),
                actual.len(),
                expected.len()
            )));
        }
        Ok(Self { config, partition, params })
    }

    /// Forward pass exposing every intermediate stage.
    pub fn trace<'p>(&'p self, tape: &mut Tape<'p>, input: Var) -> Result<(ForwardTrace, ModelParams<Var>)> {
        let bound = self.params.bind(tape);
        let trace = forward::forward(tape, input, &bound, &self.config, &self.partition)?;
        Ok((trace, bound))
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }
}

impl Lifter for HstFormer {
    fn frames(&self) -> usize {
        self.config.frames
    }

    fn record<'p>(&'p self, tape: &mut Tape<'p>, input: Var) -> Result<(Var, Vec<Var>)> {
        let (trace, bound) = self.trace(tape, input)?;
        Ok((trace.output, bound.to_vec().into_iter().copied().collect()))
    }

    fn parameters(&self) -> Vec<&Tensor> {
        self.params.to_vec()
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        self.params.for_each_mut(|_, t| out.push(t));
        out
    }
}

/// Per-frame linear map from the flattened 2D pose to the flattened 3D pose;
/// the temporal-context-free reference model.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearLifter {
    frames: usize,
    joints: usize,
    pub weight: Tensor,
    pub bias: Tensor,
}

impl LinearLifter {
    pub fn new(frames: usize, joints: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = 2 * joints;
        Self {
            frames,
            joints,
            weight: Tensor::randn(&[fan_in, 3 * joints], 1.0 / (fan_in as f64).sqrt(), &mut rng),
            bias: Tensor::zeros(&[3 * joints]),
        }
    }
}

impl Lifter for LinearLifter {
    fn frames(&self) -> usize {
        self.frames
    }

    fn record<'p>(&'p self, tape: &mut Tape<'p>, input: Var) -> Result<(Var, Vec<Var>)> {
        let w = tape.param(&self.weight);
        let b = tape.param(&self.bias);
        let t = tape.shape(input)[0];
        let flat = tape.reshape(input, &[t, 2 * self.joints])?;
        let y = tape.matmul(flat, w)?;
        let y = tape.add_broadcast(y, b)?;
        let y = tape.reshape(y, &[t, self.joints, 3])?;
        Ok((y, vec![w, b]))
    }

    fn parameters(&self) -> Vec<&Tensor> {
        vec![&self.weight, &self.bias]
    }

    fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        vec![&mut self.weight, &mut self.bias]
    }
}
