//! Pose-estimation metrics: MPJPE, Procrustes-aligned MPJPE, PCK/AUC and the
//! frame-delta statistic over sampled 2D sequences.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, TensorError};
use crate::tensor::Tensor;

pub const DEFAULT_PCK_THRESHOLD: f64 = 150.0;

/// Thresholds (mm) averaged by [`auc`]: 5, 10, ..., 150.
pub fn default_auc_thresholds() -> Vec<f64> {
    (1..=30).map(|i| 5.0 * i as f64).collect()
}

fn check_congruent(op: &'static str, pred: &Tensor, gt: &Tensor) -> Result<()> {
    if pred.shape() != gt.shape() {
        return Err(TensorError::ShapeMismatch { op, lhs: pred.shape().to_vec(), rhs: gt.shape().to_vec() }.into());
    }
    let shape = pred.shape();
    if shape.len() != 3 || !matches!(shape[2], 2 | 3) {
        return Err(TensorError::InvalidShape { op, detail: format!("expected T×J×C poses, got {shape:?}") }.into());
    }
    Ok(())
}

/// Euclidean distance per joint, frame-major.
pub fn joint_errors(pred: &Tensor, gt: &Tensor) -> Result<Vec<f64>> {
    check_congruent("joint_errors", pred, gt)?;
    let c = pred.shape()[2];
    Ok(pred
        .data()
        .chunks_exact(c)
        .zip(gt.data().chunks_exact(c))
        .map(|(p, g)| p.iter().zip(g).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        .collect())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Mean per-joint position error.
pub fn mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    Ok(mean(&joint_errors(pred, gt)?))
}

/// Least-squares similarity transform `x ↦ s·R·x + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Similarity {
    pub scale: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// The source points were (near) collinear; only translation was fitted.
    pub degenerate: bool,
}

impl Similarity {
    pub fn apply(&self, p: Vector3<f64>) -> Vector3<f64> {
        self.rotation * p * self.scale + self.translation
    }
}

fn points(frame: &[f64]) -> Vec<Vector3<f64>> {
    frame.chunks_exact(3).map(|p| Vector3::new(p[0], p[1], p[2])).collect()
}

fn centroid(p: &[Vector3<f64>]) -> Vector3<f64> {
    p.iter().sum::<Vector3<f64>>() / p.len() as f64
}

/// Similarity transform taking `src` onto `dst` in the least-squares sense,
/// rotations only (no reflections).
pub fn align_similarity(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Similarity {
    let (mu_s, mu_d) = (centroid(src), centroid(dst));
    let n = src.len() as f64;
    let mut cov = Matrix3::zeros();
    let mut scatter = Matrix3::zeros();
    let mut var_s = 0.0;
    for (s, d) in src.iter().zip(dst) {
        let (sc, dc) = (s - mu_s, d - mu_d);
        cov += dc * sc.transpose();
        scatter += sc * sc.transpose();
        var_s += sc.norm_squared();
    }
    cov /= n;
    var_s /= n;

    let spread = scatter.symmetric_eigenvalues();
    let mut ev: Vec<f64> = spread.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    if !(ev[0] > 0.0) || ev[1] <= 1e-12 * ev[0] {
        return Similarity { scale: 1.0, rotation: Matrix3::identity(), translation: mu_d - mu_s, degenerate: true };
    }

    let svd = cov.svd(true, true);
    let (u, v_t) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Vector3::new(1.0, 1.0, 1.0);
    if (u * v_t).determinant() < 0.0 {
        let smallest = (0..3)
            .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
            .expect("three singular values");
        d[smallest] = -1.0;
    }
    let rotation = u * Matrix3::from_diagonal(&d) * v_t;
    let scale = svd.singular_values.dot(&d) / var_s;
    let translation = mu_d - rotation * mu_s * scale;
    Similarity { scale, rotation, translation, degenerate: false }
}

/// Result of [`p_mpjpe_detailed`].
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedError {
    pub value: f64,
    /// Frames whose alignment fell back to translation only.
    pub degenerate_frames: Vec<usize>,
}

/// MPJPE after aligning each predicted frame to ground truth.
pub fn p_mpjpe_detailed(pred: &Tensor, gt: &Tensor) -> Result<AlignedError> {
    check_congruent("p_mpjpe", pred, gt)?;
    if pred.shape()[2] != 3 {
        return Err(Error::Config("p_mpjpe requires 3D poses".into()));
    }
    let per = pred.shape()[1] * 3;
    let mut total = 0.0;
    let mut degenerate_frames = Vec::new();
    for (f, (p, g)) in pred.data().chunks_exact(per).zip(gt.data().chunks_exact(per)).enumerate() {
        let (src, dst) = (points(p), points(g));
        let sim = align_similarity(&src, &dst);
        if sim.degenerate {
            degenerate_frames.push(f);
        }
        total += src.iter().zip(&dst).map(|(s, d)| (sim.apply(*s) - d).norm()).sum::<f64>();
    }
    Ok(AlignedError { value: total / (pred.numel() / 3) as f64, degenerate_frames })
}

pub fn p_mpjpe(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    Ok(p_mpjpe_detailed(pred, gt)?.value)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("PCK threshold must be positive, got {threshold}")));
    }
    Ok(())
}

/// Percentage of errors strictly below `threshold`.
pub fn pck_from_errors(errors: &[f64], threshold: f64) -> Result<f64> {
    check_threshold(threshold)?;
    let hits = errors.iter().filter(|&&e| e < threshold).count();
    Ok(100.0 * hits as f64 / errors.len() as f64)
}

pub fn pck(pred: &Tensor, gt: &Tensor, threshold: f64) -> Result<f64> {
    pck_from_errors(&joint_errors(pred, gt)?, threshold)
}

/// Mean PCK over `thresholds`, as a fraction.
pub fn auc_from_errors(errors: &[f64], thresholds: &[f64]) -> Result<f64> {
    if thresholds.is_empty() {
        return Err(Error::Config("AUC needs at least one threshold".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sum = 0.0;
    for &t in thresholds {
        check_threshold(t)?;
        sum += sorted.partition_point(|&e| e < t) as f64 / sorted.len() as f64;
    }
    Ok(sum / thresholds.len() as f64)
}

pub fn auc(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    auc_from_errors(&joint_errors(pred, gt)?, &default_auc_thresholds())
}

/// Histogram bin `[lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Bin {
    pub bin_lo: f64,
    pub bin_hi: f64,
    pub count: usize,
}

/// Equal-width bins covering `[0, max]`; the maximum lands in the last bin.
pub fn histogram(values: &[f64], bins: usize) -> Vec<Bin> {
    let bins = bins.max(1);
    let max = values.iter().copied().fold(0.0, f64::max);
    let width = if max > 0.0 { max / bins as f64 } else { 1.0 };
    let mut out: Vec<Bin> =
        (0..bins).map(|i| Bin { bin_lo: i as f64 * width, bin_hi: (i + 1) as f64 * width, count: 0 }).collect();
    for &v in values {
        let i = ((v / width) as usize).min(bins - 1);
        out[i].count += 1;
    }
    out
}

pub fn histogram_csv(bins: &[Bin]) -> String {
    let mut s = String::from("bin_lo,bin_hi,count\n");
    for b in bins {
        s.push_str(&format!("{},{},{}\n", b.bin_lo, b.bin_hi, b.count));
    }
    s
}

/// Distribution of the 2D MPJPE between frames `i` and `i + n`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameDelta {
    pub interval: usize,
    pub deltas: Vec<f64>,
    pub mean: f64,
}

impl FrameDelta {
    pub fn histogram(&self, bins: usize) -> Vec<Bin> {
        histogram(&self.deltas, bins)
    }
}

/// Frame-delta MPJPE over `T×J×2` sequences; sequences with at most `n`
/// frames contribute nothing.
pub fn frame_delta_mpjpe(sequences: &[&Tensor], n: usize) -> Result<FrameDelta> {
    if n == 0 {
        return Err(Error::Config("sample interval must be at least 1".into()));
    }
    let mut deltas = Vec::new();
    for seq in sequences {
        let shape = seq.shape();
        if shape.len() != 3 {
            return Err(Error::Data(format!("expected T×J×C sequence, got {shape:?}")));
        }
        let per = shape[1] * shape[2];
        let frames: Vec<&[f64]> = seq.data().chunks_exact(per).collect();
        for i in 0..frames.len().saturating_sub(n) {
            let (a, b) = (frames[i], frames[i + n]);
            let sum: f64 = a
                .chunks_exact(shape[2])
                .zip(b.chunks_exact(shape[2]))
                .map(|(p, q)| p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
                .sum();
            deltas.push(sum / shape[1] as f64);
        }
    }
    if deltas.is_empty() {
        return Err(Error::Data(format!("every sequence is shorter than {} frames", n + 1)));
    }
    let mean = mean(&deltas);
    Ok(FrameDelta { interval: n, deltas, mean })
}

/// Metrics over one group of frames.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub name: String,
    pub action: String,
    pub frames: usize,
    pub joints: usize,
    pub mpjpe: f64,
    pub p_mpjpe: f64,
    pub pck: f64,
    pub auc: f64,
    pub degenerate_frames: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub pck_threshold: f64,
    pub sequences: Vec<Scores>,
    pub actions: Vec<Scores>,
    pub aggregate: Scores,
}

struct Accum {
    frames: usize,
    errors: Vec<f64>,
    aligned_sum: f64,
    degenerate: usize,
}

impl Accum {
    fn new() -> Self {
        Self { frames: 0, errors: Vec::new(), aligned_sum: 0.0, degenerate: 0 }
    }

    fn absorb(&mut self, other: &Accum) {
        self.frames += other.frames;
        self.errors.extend_from_slice(&other.errors);
        self.aligned_sum += other.aligned_sum;
        self.degenerate += other.degenerate;
    }

    fn scores(&self, name: &str, action: &str, threshold: f64, thresholds: &[f64]) -> Result<Scores> {
        let n = self.errors.len();
        Ok(Scores {
            name: name.into(),
            action: action.into(),
            frames: self.frames,
            joints: n,
            mpjpe: mean(&self.errors),
            p_mpjpe: self.aligned_sum / n as f64,
            pck: pck_from_errors(&self.errors, threshold)?,
            auc: auc_from_errors(&self.errors, thresholds)?,
            degenerate_frames: self.degenerate,
        })
    }
}

/// One evaluated sequence: `T×J×3` prediction and ground truth in mm.
pub struct Evaluated<'a> {
    pub name: &'a str,
    pub action: &'a str,
    pub pred: &'a Tensor,
    pub gt: &'a Tensor,
}

impl MetricReport {
    /// Scores per sequence, per action and overall; aggregates weight every joint equally.
    pub fn compute(items: &[Evaluated<'_>], pck_threshold: f64) -> Result<Self> {
        check_threshold(pck_threshold)?;
        if items.is_empty() {
            return Err(Error::Data("nothing to evaluate".into()));
        }
        let thresholds = default_auc_thresholds();
        let mut sequences = Vec::with_capacity(items.len());
        let mut by_action: BTreeMap<&str, Accum> = BTreeMap::new();
        let mut total = Accum::new();
        for item in items {
            let errors = joint_errors(item.pred, item.gt)?;
            let aligned = p_mpjpe_detailed(item.pred, item.gt)?;
            let acc = Accum {
                frames: item.pred.shape()[0],
                aligned_sum: aligned.value * errors.len() as f64,
                errors,
                degenerate: aligned.degenerate_frames.len(),
            };
            sequences.push(acc.scores(item.name, item.action, pck_threshold, &thresholds)?);
            by_action.entry(item.action).or_insert_with(Accum::new).absorb(&acc);
            total.absorb(&acc);
        }
        let actions =
            by_action.iter().map(|(a, acc)| acc.scores(a, a, pck_threshold, &thresholds)).collect::<Result<_>>()?;
        let aggregate = total.scores("all", "all", pck_threshold, &thresholds)?;
        Ok(Self { pck_threshold, sequences, actions, aggregate })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per sequence followed by per-action and aggregate rows.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("name,action,frames,mpjpe_mm,p_mpjpe_mm,pck,auc,degenerate_frames\n");
        for r in self.sequences.iter().chain(&self.actions).chain(std::iter::once(&self.aggregate)) {
            s.push_str(&format!(
                "{},{},{},{:.6},{:.6},{:.6},{:.6},{}\n",
                r.name, r.action, r.frames, r.mpjpe, r.p_mpjpe, r.pck, r.auc, r.degenerate_frames
            ));
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poses(t: usize, f: impl Fn(usize) -> f64) -> Tensor {
        Tensor::new(vec![t, 17, 3], (0..t * 51).map(f).collect()).unwrap()
    }

    #[test]
    fn mpjpe_hand_cases() {
        let gt = poses(2, |i| (i as f64 * 0.7).sin() * 100.0);
        assert_eq!(mpjpe(&gt, &gt).unwrap(), 0.0);
        let mut shifted = gt.clone();
        for p in shifted.data_mut().chunks_exact_mut(3) {
            p[0] += 3.0;
        }
        assert!((mpjpe(&shifted, &gt).unwrap() - 3.0).abs() < 1e-12);
        let mut one = gt.clone();
        one.data_mut()[5 * 3 + 1] += 34.0;
        assert!((mpjpe(&one, &gt).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn auc_of_constant_75mm_is_half() {
        let errors = vec![75.0; 34];
        assert_eq!(pck_from_errors(&errors, 150.0).unwrap(), 100.0);
        assert_eq!(auc_from_errors(&errors, &default_auc_thresholds()).unwrap(), 0.5);
    }

    #[test]
    fn identity_alignment_recovered() {
        let gt = poses(1, |i| ((i * 37 % 101) as f64) - 50.0);
        let pts = points(gt.data());
        let sim = align_similarity(&pts, &pts);
        assert!((sim.scale - 1.0).abs() < 1e-12);
        assert!((sim.rotation - Matrix3::identity()).norm() < 1e-12);
        assert!(sim.translation.norm() < 1e-9);
        assert!(p_mpjpe(&gt, &gt).unwrap() < 1e-9);
    }

    #[test]
    fn collinear_frame_is_flagged() {
        let line = poses(1, |i| if i % 3 == 0 { (i / 3) as f64 } else { 0.0 });
        let gt = poses(1, |i| i as f64);
        let r = p_mpjpe_detailed(&line, &gt).unwrap();
        assert_eq!(r.degenerate_frames, vec![0]);
    }

    #[test]
    fn histogram_counts_everything() {
        let bins = histogram(&[0.0, 0.5, 1.0, 2.0], 4);
        assert_eq!(bins.iter().map(|b| b.count).sum::<usize>(), 4);
        assert_eq!(bins[3].count, 1);
        assert!(histogram_csv(&bins).starts_with("bin_lo,bin_hi,count\n"));
    }

    #[test]
    fn linear_motion_delta_is_speed_times_interval() {
        let seq = Tensor::new(
            vec![20, 17, 2],
            (0..20 * 34).map(|i| if i % 2 == 0 { (i / 34) as f64 * 2.5 } else { 1.0 }).collect(),
        )
        .unwrap();
        for n in [1, 3, 5, 7] {
            let d = frame_delta_mpjpe(&[&seq], n).unwrap();
            assert!(d.deltas.iter().all(|&v| (v - 2.5 * n as f64).abs() < 1e-12));
        }
        assert!(frame_delta_mpjpe(&[&seq], 20).is_err());
    }
}
