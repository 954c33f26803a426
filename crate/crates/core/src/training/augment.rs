//! Window sampling and horizontal flipping.

use crate::error::{Error, Result};
use crate::model::Lifter;
use crate::skeleton::{mirror_permutation, NUM_JOINTS};
use crate::tensor::Tensor;

/// Frame indices `start, start + n, ..., start + (t - 1)·n`, clamped to
/// `len - 1`.
pub fn sample_window(len: usize, start: usize, t: usize, n: usize) -> Result<Vec<usize>> {
    if t == 0 || n == 0 {
        return Err(Error::Config(format!("window length and interval must be at least 1, got T={t} N={n}")));
    }
    if len == 0 {
        return Err(Error::Data("cannot sample a window from an empty sequence".into()));
    }
    Ok((0..t).map(|i| (start + i * n).min(len - 1)).collect())
}

/// Gathers frames of a `L×J×C` tensor.
pub fn gather_frames(seq: &Tensor, frames: &[usize]) -> Tensor {
    let per = seq.numel() / seq.shape()[0];
    let mut data = Vec::with_capacity(frames.len() * per);
    for &f in frames {
        data.extend_from_slice(&seq.data()[f * per..(f + 1) * per]);
    }
    let mut shape = seq.shape().to_vec();
    shape[0] = frames.len();
    Tensor::new(shape, data).expect("gathered extents")
}

/// Mirrors `T×17×C` poses: negates x and swaps left/right joints.
pub fn flip_pose(pose: &Tensor) -> Tensor {
    let shape = pose.shape();
    assert!(shape.len() == 3 && shape[1] == NUM_JOINTS, "flip_pose expects T×17×C, got {shape:?}");
    let c = shape[2];
    let perm = mirror_permutation();
    let mut out = pose.clone();
    for (src, dst) in pose.data().chunks_exact(NUM_JOINTS * c).zip(out.data_mut().chunks_exact_mut(NUM_JOINTS * c)) {
        for (j, &m) in perm.iter().enumerate() {
            let from = &src[m * c..(m + 1) * c];
            let to = &mut dst[j * c..(j + 1) * c];
            to.copy_from_slice(from);
            to[0] = -to[0];
        }
    }
    out
}

/// Mean of `f(x)` and `flip(f(flip(x)))`.
pub fn tta_flip_average<M: Lifter + ?Sized>(model: &M, input: &Tensor) -> Result<Tensor> {
    let direct = model.predict(input)?;
    let mirrored = flip_pose(&model.predict(&flip_pose(input))?);
    let data = direct.data().iter().zip(mirrored.data()).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(Tensor::new(direct.shape().to_vec(), data)?)
}
