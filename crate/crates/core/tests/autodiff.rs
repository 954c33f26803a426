use hstformer::gradcheck::{analytic_gradient, grad_check, DEFAULT_STEP};
use hstformer::{Tape, Tensor};
use proptest::prelude::*;

fn tensor(shape: &[usize], values: &[f64]) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape.to_vec(), values[..n].to_vec()).unwrap()
}

fn naive_matmul(a: &Tensor, b: &Tensor) -> Vec<f64> {
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                out[i * n + j] += a.at(&[i, p]) * b.at(&[p, j]);
            }
        }
    }
    out
}

fn values(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_matches_triple_loop(m in 1usize..24, k in 1usize..24, n in 1usize..24, v in values(24 * 24 * 2)) {
        let a = tensor(&[m, k], &v);
        let b = tensor(&[k, n], &v[m * k..]);
        let mut tape = Tape::new();
        let (x, y) = (tape.constant(a.clone()), tape.constant(b.clone()));
        let out = tape.matmul(x, y).unwrap();
        prop_assert_eq!(tape.macs(), (m * k * n) as u64);
        for (got, want) in tape.value(out).data().iter().zip(naive_matmul(&a, &b)) {
            prop_assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn transposed_batch_matmul_matches_explicit_transpose(bt in 1usize..3, m in 1usize..12, k in 1usize..12, n in 1usize..12, v in values(3 * 12 * 12 * 2)) {
        let a = tensor(&[bt, m, k], &v);
        let b = tensor(&[bt, n, k], &v[bt * m * k..]);
        let mut tape = Tape::new();
        let (x, y) = (tape.constant(a), tape.constant(b));
        let direct = tape.batch_matmul(x, y, true).unwrap();
        let yt = tape.transpose(y, 1, 2).unwrap();
        let explicit = tape.batch_matmul(x, yt, false).unwrap();
        prop_assert!(tape.value(direct).max_abs_diff(tape.value(explicit)) < 1e-12);
    }

    #[test]
    fn matmul_gradient_matches_differences(m in 1usize..5, k in 1usize..5, n in 1usize..5, v in values(50)) {
        let b = tensor(&[k, n], &v[25..]);
        let err = grad_check(
            move |t, x| {
                let b = t.constant(b.clone());
                let y = t.matmul(x, b)?;
                let y = t.gelu(y);
                Ok(t.sum(y))
            },
            &tensor(&[m, k], &v),
            DEFAULT_STEP,
        )
        .unwrap();
        prop_assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn sum_of_softmax_has_zero_gradient(rows in 1usize..5, cols in 1usize..7, v in values(35)) {
        let grad = analytic_gradient(&|t: &mut Tape<'_>, x| {
            let s = t.softmax(x);
            Ok(t.sum(s))
        }, &tensor(&[rows, cols], &v)).unwrap();
        prop_assert!(grad.iter().all(|g| g.abs() < 1e-12));
    }

    #[test]
    fn linear_ops_have_constant_gradients(len in 1usize..20, c in -3.0f64..3.0, v in values(20)) {
        let grad = analytic_gradient(&move |t: &mut Tape<'_>, x| {
            let y = t.scale(x, c);
            let z = t.add(y, x)?;
            Ok(t.sum(z))
        }, &tensor(&[len], &v)).unwrap();
        prop_assert!(grad.iter().all(|g| (g - (c + 1.0)).abs() < 1e-12));
    }

    #[test]
    fn layer_norm_standardizes(rows in 1usize..4, cols in 2usize..9, v in values(32)) {
        let x = tensor(&[rows, cols], &v);
        prop_assume!(x.data().chunks(cols).all(|r| r.iter().any(|&a| (a - r[0]).abs() > 1e-2)));
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let g = tape.constant(Tensor::ones(&[cols]));
        let b = tape.constant(Tensor::zeros(&[cols]));
        let y = tape.layer_norm(xv, g, b, 0.0).unwrap();
        for row in tape.value(y).data().chunks(cols) {
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / cols as f64;
            prop_assert!(mean.abs() < 1e-9 && (var - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn permute_round_trip_is_identity(d0 in 1usize..4, d1 in 1usize..4, d2 in 1usize..4, v in values(27)) {
        let x = tensor(&[d0, d1, d2], &v);
        let mut tape = Tape::new();
        let a = tape.constant(x.clone());
        let p = tape.permute(a, &[2, 0, 1]).unwrap();
        let back = tape.permute(p, &[1, 2, 0]).unwrap();
        prop_assert_eq!(tape.value(back), &x);
    }
}

#[test]
fn shared_input_accumulates_gradient() {
    // d/dx sum(x ⊙ x) via matmul of a row with itself.
    let x = Tensor::new(vec![1, 3], vec![1.0, -2.0, 0.5]).unwrap();
    let grad = analytic_gradient(
        &|t: &mut Tape<'_>, v| {
            let vt = t.transpose(v, 0, 1)?;
            let y = t.matmul(v, vt)?;
            Ok(t.sum(y))
        },
        &x,
    )
    .unwrap();
    assert_eq!(grad, vec![2.0, -4.0, 1.0]);
}

#[test]
fn gelu_matches_reference_values() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 1.0]).unwrap());
    let y = tape.gelu(x);
    // x·Φ(x) with Φ(1) = 0.841344746068543.
    let want = [-0.158655253931457, 0.0, 0.841344746068543];
    for (got, want) in tape.value(y).data().iter().zip(want) {
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}
