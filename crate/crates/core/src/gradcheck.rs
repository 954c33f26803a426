//! Finite-difference verification of tape gradients.

use crate::error::TensorError;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Default central-difference step for 64-bit checks.
pub const DEFAULT_STEP: f64 = 1e-5;

/// Builds a scalar from a single input on a fresh tape.
pub trait ScalarFn: for<'t> Fn(&mut Tape<'t>, Var) -> Result<Var, TensorError> {}
impl<F> ScalarFn for F where F: for<'t> Fn(&mut Tape<'t>, Var) -> Result<Var, TensorError> {}

/// `max_i |analytic_i − numeric_i| / max(1, |analytic_i|)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(1.0)).fold(0.0, f64::max)
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` at the listed coordinates.
pub fn central_difference(
    mut eval: impl FnMut(&Tensor) -> Result<f64, TensorError>,
    x: &Tensor,
    h: f64,
    coords: &[usize],
) -> Result<Vec<f64>, TensorError> {
    let mut probe = x.clone();
    coords
        .iter()
        .map(|&i| {
            let orig = probe.data()[i];
            probe.data_mut()[i] = orig + h;
            let plus = eval(&probe)?;
            probe.data_mut()[i] = orig - h;
            let minus = eval(&probe)?;
            probe.data_mut()[i] = orig;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect()
}

fn evaluate<F: ScalarFn>(f: &F, x: &Tensor) -> Result<f64, TensorError> {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone(), false);
    let out = f(&mut tape, v)?;
    let value = tape.value(out);
    if value.numel() != 1 {
        return Err(TensorError::NonScalar(value.shape().to_vec()));
    }
    Ok(value.data()[0])
}

/// Analytic gradient of `f` at `x` from one backward sweep.
pub fn analytic_gradient<F: ScalarFn>(f: &F, x: &Tensor) -> Result<Vec<f64>, TensorError> {
    let mut tape = Tape::new();
    let v = tape.leaf(x.clone(), true);
    let out = f(&mut tape, v)?;
    let mut grads = tape.backward(out)?;
    Ok(grads.take(v).unwrap_or_else(|| vec![0.0; x.numel()]))
}

/// Maximum relative error between the tape gradient and central differences
/// over every coordinate of `x`.
pub fn grad_check<F: ScalarFn>(f: F, x: &Tensor, h: f64) -> Result<f64, TensorError> {
    let coords: Vec<usize> = (0..x.numel()).collect();
    grad_check_at(f, x, h, &coords)
}

/// [`grad_check`] restricted to a subset of coordinates.
pub fn grad_check_at<F: ScalarFn>(f: F, x: &Tensor, h: f64, coords: &[usize]) -> Result<f64, TensorError> {
    let analytic = analytic_gradient(&f, x)?;
    let numeric = central_difference(|p| evaluate(&f, p), x, h, coords)?;
    let picked: Vec<f64> = coords.iter().map(|&i| analytic[i]).collect();
    Ok(relative_error(&picked, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_function_has_exact_gradient() {
        let x = Tensor::new(vec![3], vec![0.3, -1.2, 4.0]).unwrap();
        let f = |t: &mut Tape<'_>, v: Var| Ok(t.sum(v));
        assert_eq!(analytic_gradient(&f, &x).unwrap(), vec![1.0; 3]);
        assert!(grad_check(f, &x, DEFAULT_STEP).unwrap() < 1e-9);
    }

    #[test]
    fn quadratic_central_difference_is_exact() {
        let x = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let f = |t: &mut Tape<'_>, v: Var| {
            let n = t.norm_last_axis(v);
            let sq = t.reshape(n, &[1, 1])?;
            let p = t.matmul(sq, sq)?;
            Ok(t.sum(p))
        };
        assert_eq!(analytic_gradient(&f, &x).unwrap(), vec![2.0, 4.0]);
        let numeric = central_difference(|p| evaluate(&f, p), &x, 0.5, &[0, 1]).unwrap();
        assert!((numeric[0] - 2.0).abs() < 1e-12 && (numeric[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn non_scalar_output_is_rejected() {
        let x = Tensor::zeros(&[3]);
        let f = |t: &mut Tape<'_>, v: Var| Ok(t.scale(v, 2.0));
        assert!(matches!(grad_check(f, &x, DEFAULT_STEP), Err(TensorError::NonScalar(_))));
    }
}
