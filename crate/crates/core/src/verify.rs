//! Randomized finite-difference checks for every tape primitive and for the
//! full model loss.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, TensorError};
use crate::gradcheck::{central_difference, grad_check, relative_error, DEFAULT_STEP};
use crate::model::{EncoderConfig, HstFormer, Lifter, ModelParams};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::training::mpjpe_loss;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub cases: usize,
    pub max_error: f64,
    pub tolerance: f64,
}

impl CheckOutcome {
    pub fn passed(&self) -> bool {
        self.max_error < self.tolerance
    }
}

/// Contracts `y` with a fixed random tensor so every output coordinate
/// reaches the scalar with a distinct weight.
pub fn weighted_sum(tape: &mut Tape<'_>, y: Var, weights: &Tensor) -> std::result::Result<Var, TensorError> {
    let n = tape.value(y).numel();
    let flat = tape.reshape(y, &[1, n])?;
    let w = tape.constant(weights.reshaped(&[n, 1])?);
    let s = tape.matmul(flat, w)?;
    Ok(tape.sum(s))
}

fn dims<R: Rng>(rng: &mut R, rank: usize) -> Vec<usize> {
    (0..rank).map(|_| rng.random_range(1..=4)).collect()
}

fn randn<R: Rng>(rng: &mut R, shape: &[usize]) -> Tensor {
    Tensor::randn(shape, 1.0, rng)
}

/// A primitive under test: builds a random case and returns the input plus a
/// scalar function of it.
type CaseBuilder =
    fn(&mut ChaCha8Rng) -> (Tensor, Box<dyn Fn(&mut Tape<'_>, Var) -> std::result::Result<Var, TensorError>>);

macro_rules! case {
    ($rng:ident, $x:expr, $out_shape:expr, |$t:ident, $v:ident| $body:expr) => {{
        let x = $x;
        let probe = randn($rng, &$out_shape);
        let f: Box<dyn Fn(&mut Tape<'_>, Var) -> std::result::Result<Var, TensorError>> =
            Box::new(move |$t: &mut Tape<'_>, $v: Var| {
                let y = $body?;
                weighted_sum($t, y, &probe)
            });
        (x, f)
    }};
}

fn primitives() -> Vec<(&'static str, CaseBuilder)> {
    vec![
        ("matmul.lhs", |rng| {
            let (m, k, n) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4));
            let b = randn(rng, &[k, n]);
            case!(rng, randn(rng, &[m, k]), [m, n], |t, v| {
                let b = t.constant(b.clone());
                t.matmul(v, b)
            })
        }),
        ("matmul.rhs", |rng| {
            let (m, k, n) = (rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4));
            let a = randn(rng, &[m, k]);
            case!(rng, randn(rng, &[k, n]), [m, n], |t, v| {
                let a = t.constant(a.clone());
                t.matmul(a, v)
            })
        }),
        ("batch_matmul.lhs", |rng| {
            let (bt, m, k, n) =
                (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4));
            let trans = rng.random_bool(0.5);
            let b = randn(rng, &if trans { [bt, n, k] } else { [bt, k, n] });
            case!(rng, randn(rng, &[bt, m, k]), [bt, m, n], |t, v| {
                let b = t.constant(b.clone());
                t.batch_matmul(v, b, trans)
            })
        }),
        ("batch_matmul.rhs", |rng| {
            let (bt, m, k, n) =
                (rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(1..=4), rng.random_range(1..=4));
            let trans = rng.random_bool(0.5);
            let a = randn(rng, &[bt, m, k]);
            let shape = if trans { [bt, n, k] } else { [bt, k, n] };
            case!(rng, randn(rng, &shape), [bt, m, n], |t, v| {
                let a = t.constant(a.clone());
                t.batch_matmul(a, v, trans)
            })
        }),
        ("add", |rng| {
            let s = dims(rng, 2);
            let b = randn(rng, &s);
            case!(rng, randn(rng, &s), s, |t, v| {
                let b = t.constant(b.clone());
                t.add(b, v)
            })
        }),
        ("sub", |rng| {
            let s = dims(rng, 2);
            let b = randn(rng, &s);
            case!(rng, randn(rng, &s), s, |t, v| {
                let b = t.constant(b.clone());
                t.sub(b, v)
            })
        }),
        ("add_broadcast.bias", |rng| {
            let s = dims(rng, 3);
            let a = randn(rng, &s);
            case!(rng, randn(rng, &s[1..]), s, |t, v| {
                let a = t.constant(a.clone());
                t.add_broadcast(a, v)
            })
        }),
        ("scale", |rng| {
            let s = dims(rng, 2);
            let c: f64 = rng.random_range(-3.0..3.0);
            case!(rng, randn(rng, &s), s, |t, v| Ok::<_, TensorError>(t.scale(v, c)))
        }),
        ("gelu", |rng| {
            let s = dims(rng, 2);
            case!(rng, randn(rng, &s), s, |t, v| Ok::<_, TensorError>(t.gelu(v)))
        }),
        ("softmax", |rng| {
            let s = dims(rng, 2);
            case!(rng, randn(rng, &s), s, |t, v| Ok::<_, TensorError>(t.softmax(v)))
        }),
        ("layer_norm.x", |rng| {
            let mut s = dims(rng, 2);
            s[1] += 1;
            let (g, b) = (randn(rng, &s[1..]), randn(rng, &s[1..]));
            case!(rng, randn(rng, &s), s, |t, v| {
                let (g, b) = (t.constant(g.clone()), t.constant(b.clone()));
                t.layer_norm(v, g, b, 1e-5)
            })
        }),
        ("layer_norm.gamma", |rng| {
            let mut s = dims(rng, 2);
            s[1] += 1;
            let (x, b) = (randn(rng, &s), randn(rng, &s[1..]));
            case!(rng, randn(rng, &s[1..]), s, |t, v| {
                let (x, b) = (t.constant(x.clone()), t.constant(b.clone()));
                t.layer_norm(x, v, b, 1e-5)
            })
        }),
        ("layer_norm.beta", |rng| {
            let mut s = dims(rng, 2);
            s[1] += 1;
            let (x, g) = (randn(rng, &s), randn(rng, &s[1..]));
            case!(rng, randn(rng, &s[1..]), s, |t, v| {
                let (x, g) = (t.constant(x.clone()), t.constant(g.clone()));
                t.layer_norm(x, g, v, 1e-5)
            })
        }),
        ("reshape", |rng| {
            let s = dims(rng, 3);
            let out = [s[0] * s[1], s[2]];
            case!(rng, randn(rng, &s), out, |t, v| t.reshape(v, &out))
        }),
        ("permute", |rng| {
            let s = dims(rng, 3);
            let axes = [2, 0, 1];
            let out = [s[2], s[0], s[1]];
            case!(rng, randn(rng, &s), out, |t, v| t.permute(v, &axes))
        }),
        ("transpose", |rng| {
            let s = dims(rng, 3);
            let out = [s[0], s[2], s[1]];
            case!(rng, randn(rng, &s), out, |t, v| t.transpose(v, 1, 2))
        }),
        ("concat", |rng| {
            let s = dims(rng, 3);
            let axis = rng.random_range(0..3);
            let mut other_shape = s.clone();
            other_shape[axis] = rng.random_range(1..=3);
            let other = randn(rng, &other_shape);
            let mut out = s.clone();
            out[axis] += other_shape[axis];
            case!(rng, randn(rng, &s), out, |t, v| {
                let o = t.constant(other.clone());
                t.concat(&[v, o, v], axis).and_then(|c| t.slice_axis(c, axis, 0, out[axis]))
            })
        }),
        ("slice_axis", |rng| {
            let mut s = dims(rng, 3);
            s[1] += 2;
            let start = rng.random_range(0..s[1]);
            let len = rng.random_range(1..=s[1] - start);
            let out = [s[0], len, s[2]];
            case!(rng, randn(rng, &s), out, |t, v| t.slice_axis(v, 1, start, len))
        }),
        ("index_select", |rng| {
            let s = dims(rng, 3);
            let idx: Vec<usize> = (0..rng.random_range(1..=5)).map(|_| rng.random_range(0..s[2])).collect();
            let out = [s[0], s[1], idx.len()];
            case!(rng, randn(rng, &s), out, |t, v| t.index_select(v, 2, &idx))
        }),
        ("norm_last_axis", |rng| {
            let s = dims(rng, 2);
            let out = [s[0]];
            case!(rng, randn(rng, &s), out, |t, v| Ok::<_, TensorError>(t.norm_last_axis(v)))
        }),
        ("sum", |rng| {
            let s = dims(rng, 3);
            case!(rng, randn(rng, &s), [1], |t, v| Ok::<_, TensorError>(t.sum(v)))
        }),
    ]
}

/// Runs `cases` randomized checks per primitive.
pub fn primitive_suite(cases: usize, seed: u64) -> Result<Vec<CheckOutcome>> {
    let mut out = Vec::new();
    for (i, (name, build)) in primitives().into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((i as u64 + 1) << 32));
        let mut max_error: f64 = 0.0;
        for _ in 0..cases {
            let (x, f) = build(&mut rng);
            max_error = max_error.max(grad_check(|t: &mut Tape<'_>, v: Var| f(t, v), &x, DEFAULT_STEP)?);
        }
        out.push(CheckOutcome { name: name.to_string(), cases, max_error, tolerance: PRIMITIVE_TOLERANCE });
    }
    Ok(out)
}

fn loss_value(model: &HstFormer, input: &Tensor, target: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let (y, _) = model.record(&mut tape, x)?;
    let gt = tape.constant(target.clone());
    let loss = mpjpe_loss(&mut tape, y, gt)?;
    Ok(tape.value(loss).data()[0])
}

/// Full-model loss gradient against central differences, checking
/// `coords_per_tensor` random coordinates of every parameter tensor plus
/// the input.
pub fn model_check(config: &EncoderConfig, seed: u64, coords_per_tensor: usize) -> Result<CheckOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = HstFormer::new(config.clone(), seed)?;
    let input = Tensor::randn(&[config.frames, config.joints, 2], 1.0, &mut rng);
    let target = Tensor::randn(&[config.frames, config.joints, 3], 1.0, &mut rng);

    let mut tape = Tape::new();
    let x = tape.leaf(input.clone(), true);
    let (y, params) = model.record(&mut tape, x)?;
    let gt = tape.constant(target.clone());
    let loss = mpjpe_loss(&mut tape, y, gt)?;
    let mut grads = tape.backward(loss)?;
    let input_grad = grads.take(x).unwrap_or_else(|| vec![0.0; input.numel()]);
    let param_grads: Vec<Vec<f64>> = params
        .iter()
        .zip(model.parameters())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();

    let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<usize> {
        if n <= coords_per_tensor {
            (0..n).collect()
        } else {
            (0..coords_per_tensor).map(|_| rng.random_range(0..n)).collect()
        }
    };

    let mut max_error: f64 = 0.0;
    let mut cases = 0;
    let coords = pick(&mut rng, input.numel());
    let numeric = central_difference(
        |p| {
            loss_value(&model, p, &target)
                .map_err(|e| TensorError::InvalidShape { op: "model_check", detail: e.to_string() })
        },
        &input,
        DEFAULT_STEP,
        &coords,
    )?;
    let analytic: Vec<f64> = coords.iter().map(|&i| input_grad[i]).collect();
    max_error = max_error.max(relative_error(&analytic, &numeric));
    cases += coords.len();

    for (ti, grad) in param_grads.iter().enumerate() {
        let numel = model.parameters()[ti].numel();
        let coords = pick(&mut rng, numel);
        let mut perturbed = model.clone();
        for &c in &coords {
            let orig = model.parameters()[ti].data()[c];
            let mut eval = |v: f64| -> Result<f64> {
                perturbed.parameters_mut()[ti].data_mut()[c] = v;
                loss_value(&perturbed, &input, &target)
            };
            let plus = eval(orig + DEFAULT_STEP)?;
            let minus = eval(orig - DEFAULT_STEP)?;
            eval(orig)?;
            let numeric = (plus - minus) / (2.0 * DEFAULT_STEP);
            max_error = max_error.max(relative_error(&[grad[c]], &[numeric]));
            cases += 1;
        }
    }
    Ok(CheckOutcome { name: format!("model_loss[{}]", config.tag()), cases, max_error, tolerance: MODEL_TOLERANCE })
}

/// The small all-encoder configuration used for the full-model check.
pub fn model_check_config() -> EncoderConfig {
    EncoderConfig::small(4, 8, 1)
}

/// Enumerated parameter count of a freshly built model.
pub fn enumerated_params(config: &EncoderConfig) -> Result<usize> {
    Ok(ModelParams::zeros(config, &Default::default())?.num_scalars())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_primitive_passes_a_few_cases() {
        for o in primitive_suite(5, 7).unwrap() {
            assert!(o.passed(), "{o:?}");
        }
    }
}
