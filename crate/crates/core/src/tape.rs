//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every operation applied to its [`Var`] handles during a
//! forward pass. [`Tape::backward`] then replays the record in reverse exactly
//! once, accumulating adjoints into a [`Gradients`] table. Parameter leaves are
//! borrowed rather than copied, so a tape lives no longer than the parameters
//! it reads.

use std::borrow::Cow;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::TensorError;
use crate::tensor::{gemm, row_major_strides, split_at_axis, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul { a: Var, b: Var, rows: usize, k: usize, n: usize },
    BatchMatMul { a: Var, b: Var, batch: usize, m: usize, k: usize, n: usize, trans_b: bool },
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Sub(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    Softmax(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Reshape(Var),
    Permute { a: Var, src: Vec<usize> },
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { a: Var, axis: usize, start: usize },
    IndexSelect { a: Var, axis: usize, indices: Vec<usize> },
    NormLastAxis(Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    needs_grad: bool,
}

/// Operation record for one forward pass.
#[derive(Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
    macs: u64,
}

/// Adjoints produced by [`Tape::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`, if `v` influenced the loss
    /// and was marked as requiring gradients.
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    pub fn take(&mut self, v: Var) -> Option<Vec<f64>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, lhs: &[usize], rhs: &[usize]) -> TensorError {
    TensorError::ShapeMismatch { op, lhs: lhs.to_vec(), rhs: rhs.to_vec() }
}

fn invalid(op: &'static str, detail: String) -> TensorError {
    TensorError::InvalidShape { op, detail }
}

fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * FRAC_1_SQRT_2))
}

fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Multiply-accumulates executed by matrix products so far.
    pub fn macs(&self) -> u64 {
        self.macs
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.push_with(Cow::Owned(value), op, needs_grad)
    }

    fn push_with(&mut self, value: Cow<'p, Tensor>, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    /// Records an owned leaf.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push_with(Cow::Owned(value), Op::Leaf, requires_grad)
    }

    /// Records an owned leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Records a borrowed leaf that receives a gradient.
    pub fn param(&mut self, value: &'p Tensor) -> Var {
        self.push_with(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// `a[..., k] · b[k, n] -> [..., n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sb.len() != 2 || sa.is_empty() || *sa.last().unwrap() != sb[0] {
            return Err(mismatch("matmul", sa, sb));
        }
        let (k, n) = (sb[0], sb[1]);
        let rows = self.value(a).numel() / k;
        let mut out_shape = sa.to_vec();
        *out_shape.last_mut().unwrap() = n;
        let mut out = vec![0.0; rows * n];
        gemm(self.value(a).data(), self.value(b).data(), &mut out, rows, k, n, false, false);
        self.macs += (rows * k * n) as u64;
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::MatMul { a, b, rows, k, n }, &[a, b]))
    }

    /// Batched product over identical leading dims: `a[B.., m, k] · b[B.., k, n]`,
    /// or `a · bᵀ` with `b[B.., n, k]` when `trans_b` is set.
    pub fn batch_matmul(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let r = sa.len();
        if r < 2 || sb.len() != r || sa[..r - 2] != sb[..r - 2] {
            return Err(mismatch("batch_matmul", sa, sb));
        }
        let (m, k) = (sa[r - 2], sa[r - 1]);
        let (kb, n) = if trans_b { (sb[r - 1], sb[r - 2]) } else { (sb[r - 2], sb[r - 1]) };
        if k != kb {
            return Err(mismatch("batch_matmul", sa, sb));
        }
        let batch: usize = sa[..r - 2].iter().product();
        let mut out_shape = sa[..r - 2].to_vec();
        out_shape.extend([m, n]);
        let mut out = vec![0.0; batch * m * n];
        let (da, db) = (self.value(a).data(), self.value(b).data());
        for i in 0..batch {
            gemm(
                &da[i * m * k..(i + 1) * m * k],
                &db[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
                false,
                trans_b,
            );
        }
        self.macs += (batch * m * k * n) as u64;
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::BatchMatMul { a, b, batch, m, k, n, trans_b }, &[a, b]))
    }

    fn zip_same(
        &mut self,
        op_name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op_name, ta.shape(), tb.shape()));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| f(*x, *y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.zip_same("add", a, b, |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let value = self.zip_same("sub", a, b, |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b), &[a, b]))
    }

    /// `a + b` where `b`'s shape is a trailing suffix of `a`'s (biases,
    /// positional encodings).
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (sa, sb) = (ta.shape(), tb.shape());
        if sb.len() > sa.len() || sa[sa.len() - sb.len()..] != *sb {
            return Err(mismatch("add_broadcast", sa, sb));
        }
        let inner = tb.numel();
        let mut data = ta.data().to_vec();
        for chunk in data.chunks_exact_mut(inner) {
            for (x, y) in chunk.iter_mut().zip(tb.data()) {
                *x += y;
            }
        }
        let value = Tensor::new(sa.to_vec(), data)?;
        Ok(self.push(value, Op::AddBroadcast(a, b), &[a, b]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let t = self.value(a);
        let value = Tensor::new(t.shape().to_vec(), t.data().iter().map(|x| x * c).collect()).expect("shape preserved");
        self.push(value, Op::Scale(a, c), &[a])
    }

    /// Exact GELU, `x·Φ(x)` with Φ the standard normal CDF.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| x * std_normal_cdf(x)).collect();
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        self.push(value, Op::Gelu(a), &[a])
    }

    /// Softmax over the last axis with max subtraction.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = *t.shape().last().unwrap();
        let mut data = t.data().to_vec();
        for row in data.chunks_exact_mut(n) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for x in row.iter_mut() {
                *x = (*x - max).exp();
                sum += *x;
            }
            let inv = 1.0 / sum;
            for x in row.iter_mut() {
                *x *= inv;
            }
        }
        let value = Tensor::new(t.shape().to_vec(), data).expect("shape preserved");
        self.push(value, Op::Softmax(a), &[a])
    }

    /// Normalizes each last-axis vector by its population mean and variance,
    /// then applies `gamma`/`beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var, TensorError> {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        let d = *tx.shape().last().unwrap();
        if tg.shape() != [d] {
            return Err(mismatch("layer_norm", tx.shape(), tg.shape()));
        }
        if tb.shape() != [d] {
            return Err(mismatch("layer_norm", tx.shape(), tb.shape()));
        }
        let rows = tx.numel() / d;
        let mut xhat = vec![0.0; tx.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; tx.numel()];
        for r in 0..rows {
            let row = &tx.data()[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std[r] = is;
            for j in 0..d {
                let h = (row[j] - mean) * is;
                xhat[r * d + j] = h;
                out[r * d + j] = tg.data()[j] * h + tb.data()[j];
            }
        }
        let value = Tensor::new(tx.shape().to_vec(), out)?;
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta, xhat, inv_std }, &[x, gamma, beta]))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(a);
        let numel: usize = shape.iter().product();
        if numel != t.numel() {
            return Err(mismatch("reshape", t.shape(), shape));
        }
        let value = t.reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(a), &[a]))
    }

    /// Reorders axes: output axis `i` is input axis `axes[i]`.
    pub fn permute(&mut self, a: Var, axes: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(a);
        let shape = t.shape();
        let mut seen = vec![false; shape.len()];
        if axes.len() != shape.len()
            || axes.iter().any(|&ax| ax >= shape.len() || std::mem::replace(&mut seen[ax], true))
        {
            return Err(invalid("permute", format!("axes {axes:?} do not permute rank {}", shape.len())));
        }
        let in_strides = row_major_strides(shape);
        let out_shape: Vec<usize> = axes.iter().map(|&ax| shape[ax]).collect();
        let strides: Vec<usize> = axes.iter().map(|&ax| in_strides[ax]).collect();
        let numel = t.numel();
        let mut src = Vec::with_capacity(numel);
        let mut counter = vec![0usize; out_shape.len()];
        let mut offset = 0usize;
        for _ in 0..numel {
            src.push(offset);
            for d in (0..out_shape.len()).rev() {
                counter[d] += 1;
                offset += strides[d];
                if counter[d] < out_shape[d] {
                    break;
                }
                offset -= strides[d] * out_shape[d];
                counter[d] = 0;
            }
        }
        let data = src.iter().map(|&i| t.data()[i]).collect();
        let value = Tensor::new(out_shape, data)?;
        Ok(self.push(value, Op::Permute { a, src }, &[a]))
    }

    /// Swaps two axes.
    pub fn transpose(&mut self, a: Var, axis0: usize, axis1: usize) -> Result<Var, TensorError> {
        let rank = self.shape(a).len();
        if axis0 >= rank || axis1 >= rank {
            return Err(invalid("transpose", format!("axes ({axis0}, {axis1}) out of range for rank {rank}")));
        }
        let mut axes: Vec<usize> = (0..rank).collect();
        axes.swap(axis0, axis1);
        self.permute(a, &axes)
    }

    /// Concatenates along `axis`; all other extents must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, TensorError> {
        let first = inputs.first().ok_or_else(|| invalid("concat", "no inputs".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(invalid("concat", format!("axis {axis} out of range for rank {}", base.len())));
        }
        let mut total = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(i, (x, y))| i == axis || x == y);
            if !compatible {
                return Err(mismatch("concat", &base, s));
            }
            total += s[axis];
        }
        let (outer, _, inner) = split_at_axis(&base, axis);
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let block = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * block..(o + 1) * block]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat { inputs: inputs.to_vec(), axis }, inputs))
    }

    pub fn concat_last_axis(&mut self, inputs: &[Var]) -> Result<Var, TensorError> {
        let first = inputs.first().ok_or_else(|| invalid("concat_last_axis", "no inputs".into()))?;
        let axis = self.shape(*first).len() - 1;
        self.concat(inputs, axis)
    }

    /// Contiguous range `start..start + len` along `axis`.
    pub fn slice_axis(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var, TensorError> {
        let t = self.value(a);
        let shape = t.shape();
        if axis >= shape.len() || len == 0 || start + len > shape[axis] {
            return Err(invalid("slice_axis", format!("range {start}..{} on axis {axis} of {shape:?}", start + len)));
        }
        let (outer, extent, inner) = split_at_axis(shape, axis);
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * extent + start) * inner;
            out.extend_from_slice(&t.data()[base..base + len * inner]);
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = len;
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::Slice { a, axis, start }, &[a]))
    }

    /// Gathers `indices` along `axis` (repeats allowed).
    pub fn index_select(&mut self, a: Var, axis: usize, indices: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(a);
        let shape = t.shape();
        if axis >= shape.len() || indices.is_empty() || indices.iter().any(|&i| i >= shape[axis]) {
            return Err(invalid("index_select", format!("indices {indices:?} on axis {axis} of {shape:?}")));
        }
        let (outer, extent, inner) = split_at_axis(shape, axis);
        let mut out = Vec::with_capacity(outer * indices.len() * inner);
        for o in 0..outer {
            for &i in indices {
                let base = (o * extent + i) * inner;
                out.extend_from_slice(&t.data()[base..base + inner]);
            }
        }
        let mut out_shape = shape.to_vec();
        out_shape[axis] = indices.len();
        let value = Tensor::new(out_shape, out)?;
        Ok(self.push(value, Op::IndexSelect { a, axis, indices: indices.to_vec() }, &[a]))
    }

    /// Euclidean norm over the last axis; drops that axis (rank-1 input gives shape `[1]`).
    pub fn norm_last_axis(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let shape = t.shape();
        let n = *shape.last().unwrap();
        let data: Vec<f64> =
            t.data().chunks_exact(n).map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let out_shape = if shape.len() == 1 { vec![1] } else { shape[..shape.len() - 1].to_vec() };
        let value = Tensor::new(out_shape, data).expect("shape derived from input");
        self.push(value, Op::NormLastAxis(a), &[a])
    }

    /// Sum of all elements, shape `[1]`.
    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(a), &[a])
    }

    /// Reverse sweep from a scalar `loss`, visiting each recorded node once.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(TensorError::NonScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].needs_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backward_node(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let mut acc = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            let input = &self.nodes[v.0];
            if !input.needs_grad {
                return;
            }
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; input.value.numel()]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul { a, b, rows, k, n } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &mut |da| gemm(g, bv, da, *rows, *n, *k, false, true));
                acc(*b, &mut |db| gemm(av, g, db, *k, *rows, *n, true, false));
            }
            Op::BatchMatMul { a, b, batch, m, k, n, trans_b } => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                let (m, k, n) = (*m, *k, *n);
                acc(*a, &mut |da| {
                    for i in 0..*batch {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let bi = &bv[i * k * n..(i + 1) * k * n];
                        let dai = &mut da[i * m * k..(i + 1) * m * k];
                        // dA = G·Bᵀ, or G·B when B was stored transposed.
                        gemm(gi, bi, dai, m, n, k, false, !*trans_b);
                    }
                });
                acc(*b, &mut |db| {
                    for i in 0..*batch {
                        let gi = &g[i * m * n..(i + 1) * m * n];
                        let ai = &av[i * m * k..(i + 1) * m * k];
                        let dbi = &mut db[i * k * n..(i + 1) * k * n];
                        if *trans_b {
                            gemm(gi, ai, dbi, n, m, k, true, false);
                        } else {
                            gemm(ai, gi, dbi, k, m, n, true, false);
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| add_into(db, g));
            }
            Op::Sub(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| db.iter_mut().zip(g).for_each(|(d, x)| *d -= x));
            }
            Op::AddBroadcast(a, b) => {
                acc(*a, &mut |da| add_into(da, g));
                acc(*b, &mut |db| {
                    for chunk in g.chunks_exact(db.len()) {
                        add_into(db, chunk);
                    }
                });
            }
            Op::Scale(a, c) => acc(*a, &mut |da| da.iter_mut().zip(g).for_each(|(d, x)| *d += c * x)),
            Op::Gelu(a) => {
                let x = self.value(*a).data();
                acc(*a, &mut |da| {
                    for ((d, &xi), gi) in da.iter_mut().zip(x).zip(g) {
                        *d += gi * (std_normal_cdf(xi) + xi * std_normal_pdf(xi));
                    }
                });
            }
            Op::Softmax(a) => {
                let y = node.value.data();
                let n = *node.value.shape().last().unwrap();
                acc(*a, &mut |da| {
                    for ((dr, yr), gr) in da.chunks_exact_mut(n).zip(y.chunks_exact(n)).zip(g.chunks_exact(n)) {
                        let s: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                        for ((d, yi), gi) in dr.iter_mut().zip(yr).zip(gr) {
                            *d += yi * (gi - s);
                        }
                    }
                });
            }
            Op::LayerNorm { x, gamma, beta, xhat, inv_std } => {
                let gam = self.value(*gamma).data();
                let d = gam.len();
                acc(*gamma, &mut |dg| {
                    for (gr, hr) in g.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        dg.iter_mut().zip(gr.iter().zip(hr)).for_each(|(o, (a, b))| *o += a * b);
                    }
                });
                acc(*beta, &mut |db| {
                    for gr in g.chunks_exact(d) {
                        add_into(db, gr);
                    }
                });
                acc(*x, &mut |dx| {
                    let mut dh = vec![0.0; d];
                    for (r, ((dxr, gr), hr)) in
                        dx.chunks_exact_mut(d).zip(g.chunks_exact(d)).zip(xhat.chunks_exact(d)).enumerate()
                    {
                        let mut mean_dh = 0.0;
                        let mut mean_dh_h = 0.0;
                        for j in 0..d {
                            dh[j] = gr[j] * gam[j];
                            mean_dh += dh[j];
                            mean_dh_h += dh[j] * hr[j];
                        }
                        mean_dh /= d as f64;
                        mean_dh_h /= d as f64;
                        for j in 0..d {
                            dxr[j] += inv_std[r] * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                });
            }
            Op::Reshape(a) => acc(*a, &mut |da| add_into(da, g)),
            Op::Permute { a, src } => acc(*a, &mut |da| {
                for (&s, gi) in src.iter().zip(g) {
                    da[s] += gi;
                }
            }),
            Op::Concat { inputs, axis } => {
                let (outer, total, inner) = split_at_axis(node.value.shape(), *axis);
                let mut offset = 0;
                for &v in inputs {
                    let extent = self.shape(v)[*axis];
                    acc(v, &mut |dv| {
                        let block = extent * inner;
                        for o in 0..outer {
                            let src = o * total * inner + offset * inner;
                            add_into(&mut dv[o * block..(o + 1) * block], &g[src..src + block]);
                        }
                    });
                    offset += extent;
                }
            }
            Op::Slice { a, axis, start } => {
                let (outer, extent, inner) = split_at_axis(self.shape(*a), *axis);
                let len = node.value.shape()[*axis];
                acc(*a, &mut |da| {
                    for o in 0..outer {
                        let dst = (o * extent + start) * inner;
                        let src = o * len * inner;
                        add_into(&mut da[dst..dst + len * inner], &g[src..src + len * inner]);
                    }
                });
            }
            Op::IndexSelect { a, axis, indices } => {
                let (outer, extent, inner) = split_at_axis(self.shape(*a), *axis);
                acc(*a, &mut |da| {
                    for o in 0..outer {
                        for (slot, &i) in indices.iter().enumerate() {
                            let dst = (o * extent + i) * inner;
                            let src = (o * indices.len() + slot) * inner;
                            add_into(&mut da[dst..dst + inner], &g[src..src + inner]);
                        }
                    }
                });
            }
            Op::NormLastAxis(a) => {
                let x = self.value(*a).data();
                let y = node.value.data();
                let n = x.len() / y.len();
                acc(*a, &mut |da| {
                    for (r, (dr, xr)) in da.chunks_exact_mut(n).zip(x.chunks_exact(n)).enumerate() {
                        // Subgradient 0 at the origin.
                        if y[r] > 0.0 {
                            let c = g[r] / y[r];
                            dr.iter_mut().zip(xr).for_each(|(d, xi)| *d += c * xi);
                        }
                    }
                });
            }
            Op::Sum(a) => acc(*a, &mut |da| da.iter_mut().for_each(|d| *d += g[0])),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}
