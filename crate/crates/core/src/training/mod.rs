//! Loss, optimizer, sampling and the training loop.
//!
//! Models regress root-relative camera-frame poses in meters from 2D inputs
//! normalized to `[-1, 1]`; evaluation converts back to millimeters.

pub mod augment;
pub mod optim;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

pub use augment::{flip_pose, gather_frames, sample_window, tta_flip_average};
pub use optim::{adam_step, lr_at_epoch, lr_schedule, AdamState, BASE_LR, LR_DECAY, LR_DECAY_EVERY};

use crate::data::{root_relative, Dataset};
use crate::error::{Error, Result, TensorError};
use crate::metrics::{Evaluated, MetricReport, DEFAULT_PCK_THRESHOLD};
use crate::model::Lifter;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Millimeters per model output unit.
pub const MM_PER_UNIT: f64 = 1000.0;

/// Sum over frames and joints of the Euclidean distance between `pred` and `gt`.
pub fn mpjpe_loss(tape: &mut Tape<'_>, pred: Var, gt: Var) -> Result<Var> {
    if tape.shape(pred) != tape.shape(gt) {
        return Err(TensorError::ShapeMismatch {
            op: "mpjpe_loss",
            lhs: tape.shape(pred).to_vec(),
            rhs: tape.shape(gt).to_vec(),
        }
        .into());
    }
    let diff = tape.sub(pred, gt)?;
    let dist = tape.norm_last_axis(diff);
    Ok(tape.sum(dist))
}

/// [`mpjpe_loss`] on plain tensors.
pub fn mpjpe_loss_value(pred: &Tensor, gt: &Tensor) -> Result<f64> {
    let mut tape = Tape::new();
    let (p, g) = (tape.constant(pred.clone()), tape.constant(gt.clone()));
    let loss = mpjpe_loss(&mut tape, p, g)?;
    Ok(tape.value(loss).data()[0])
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Sample interval N between consecutive window frames.
    pub interval: usize,
    pub flip_augment: bool,
    pub test_time_flip: bool,
    /// Worker threads for per-sample gradients; 0 uses all cores.
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            base_lr: BASE_LR,
            lr_decay: LR_DECAY,
            lr_decay_every: LR_DECAY_EVERY,
            batch_size: 8,
            seed: 0,
            interval: 1,
            flip_augment: true,
            test_time_flip: true,
            threads: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.interval == 0 || self.batch_size == 0 || self.lr_decay_every == 0 {
            return Err(Error::Config(format!(
                "interval, batch_size and lr_decay_every must be at least 1, got {}, {}, {}",
                self.interval, self.batch_size, self.lr_decay_every
            )));
        }
        if !(self.base_lr > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        Ok(())
    }

    pub fn lr(&self, epoch: usize) -> f64 {
        lr_schedule(epoch, self.base_lr, self.lr_decay, self.lr_decay_every)
    }
}

/// A sequence ready for lifting: normalized 2D input and target in model units.
#[derive(Clone, Debug, PartialEq)]
pub struct LiftingSequence {
    pub name: String,
    pub action: String,
    pub input: Tensor,
    pub target: Tensor,
}

impl LiftingSequence {
    pub fn len(&self) -> usize {
        self.input.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Converts every sequence of `dataset`; all of them need 3D ground truth.
pub fn prepare(dataset: &Dataset) -> Result<Vec<LiftingSequence>> {
    dataset
        .sequences
        .iter()
        .map(|s| {
            let cam =
                s.camera_poses().ok_or_else(|| Error::Data(format!("sequence {:?} has no 3D ground truth", s.name)))?;
            let mut target = root_relative(&cam);
            target.data_mut().iter_mut().for_each(|v| *v /= MM_PER_UNIT);
            Ok(LiftingSequence {
                name: s.name.clone(),
                action: s.action.clone(),
                input: dataset.normalize_2d(&s.pose2d),
                target,
            })
        })
        .collect()
}

/// Predicts every frame of a `L×17×2` input using non-overlapping windows per
/// residue class modulo `interval`; each frame is predicted exactly once.
pub fn predict_sequence<M: Lifter + ?Sized>(model: &M, input: &Tensor, interval: usize, tta: bool) -> Result<Tensor> {
    let len = input.shape()[0];
    let t = model.frames();
    let mut out = Tensor::zeros(&[len, input.shape()[1], 3]);
    let per = out.numel() / len;
    for r in 0..interval.min(len) {
        let mut start = r;
        while start < len {
            let frames = sample_window(len, start, t, interval)?;
            let window = gather_frames(input, &frames);
            let y = if tta { tta_flip_average(model, &window)? } else { model.predict(&window)? };
            for (i, &f) in frames.iter().enumerate() {
                if start + i * interval < len {
                    out.data_mut()[f * per..(f + 1) * per].copy_from_slice(&y.data()[i * per..(i + 1) * per]);
                }
            }
            start += t * interval;
        }
    }
    Ok(out)
}

/// Predictions in millimeters plus the metric report against ground truth.
pub fn evaluate<M: Lifter + ?Sized>(
    model: &M,
    sequences: &[LiftingSequence],
    interval: usize,
    tta: bool,
    pck_threshold: f64,
) -> Result<(MetricReport, Vec<Tensor>)> {
    let mut preds = Vec::with_capacity(sequences.len());
    let mut gts = Vec::with_capacity(sequences.len());
    for s in sequences {
        let mut p = predict_sequence(model, &s.input, interval, tta)?;
        p.data_mut().iter_mut().for_each(|v| *v *= MM_PER_UNIT);
        let mut g = s.target.clone();
        g.data_mut().iter_mut().for_each(|v| *v *= MM_PER_UNIT);
        preds.push(p);
        gts.push(g);
    }
    let items: Vec<Evaluated<'_>> = sequences
        .iter()
        .zip(preds.iter().zip(&gts))
        .map(|(s, (pred, gt))| Evaluated { name: &s.name, action: &s.action, pred, gt })
        .collect();
    let report = MetricReport::compute(&items, pck_threshold)?;
    Ok((report, preds))
}

/// Held-out MPJPE in millimeters.
pub fn validation_mpjpe<M: Lifter + ?Sized>(model: &M, val: &[LiftingSequence], cfg: &TrainConfig) -> Result<f64> {
    Ok(evaluate(model, val, cfg.interval, cfg.test_time_flip, DEFAULT_PCK_THRESHOLD)?.0.aggregate.mpjpe)
}

/// Loss and per-parameter gradients for one window.
pub fn sample_gradient<M: Lifter + ?Sized>(model: &M, input: &Tensor, target: &Tensor) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut tape = Tape::new();
    let x = tape.constant(input.clone());
    let (y, params) = model.record(&mut tape, x)?;
    let gt = tape.constant(target.clone());
    let loss = mpjpe_loss(&mut tape, y, gt)?;
    let mut grads = tape.backward(loss)?;
    let value = tape.value(loss).data()[0];
    let grads = params
        .iter()
        .zip(model.parameters())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| vec![0.0; p.numel()]))
        .collect();
    Ok((value, grads))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-window loss in model units.
    pub train_loss: f64,
    /// Millimeters.
    pub val_mpjpe: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    pub initial_val_mpjpe: f64,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub best_val_mpjpe: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,lr,train_loss,val_mpjpe\n");
    for r in history {
        s.push_str(&format!("{},{},{},{}\n", r.epoch, r.lr, r.train_loss, r.val_mpjpe));
    }
    s
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

/// Trains `model` in place. `on_improve` runs whenever validation MPJPE
/// reaches a new best (checkpointing hook).
pub fn train<M: Lifter>(
    model: &mut M,
    train_set: &[LiftingSequence],
    val_set: &[LiftingSequence],
    cfg: &TrainConfig,
    mut on_improve: impl FnMut(&M, &EpochRecord) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if train_set.is_empty() || train_set.iter().all(LiftingSequence::is_empty) {
        return Err(Error::Data("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(Error::Data("validation set is empty".into()));
    }
    let t = model.frames();
    let span = (t - 1) * cfg.interval + 1;
    let starts: Vec<(usize, usize)> = train_set
        .iter()
        .enumerate()
        .flat_map(|(i, s)| (0..s.len().saturating_sub(span - 1).max(1)).map(move |f| (i, f)))
        .collect();
    let total_frames: usize = train_set.iter().map(LiftingSequence::len).sum();
    let windows_per_epoch = total_frames.div_ceil(t).min(starts.len()).max(1);

    let pool = build_pool(cfg.threads)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = AdamState::new(&model.parameters());
    let initial_val_mpjpe = validation_mpjpe(&*model, val_set, cfg)?;
    let mut best_val_mpjpe = initial_val_mpjpe;
    let mut best_epoch = None;
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.lr(epoch);
        let mut order = starts.clone();
        order.shuffle(&mut rng);
        order.truncate(windows_per_epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let samples: Vec<(Tensor, Tensor)> = batch
                .iter()
                .map(|&(i, start)| {
                    let s = &train_set[i];
                    let frames = sample_window(s.len(), start, t, cfg.interval)?;
                    let (x, y) = (gather_frames(&s.input, &frames), gather_frames(&s.target, &frames));
                    Ok(if cfg.flip_augment && rng.random_bool(0.5) { (flip_pose(&x), flip_pose(&y)) } else { (x, y) })
                })
                .collect::<Result<_>>()?;
            let shared: &M = model;
            let results: Vec<Result<(f64, Vec<Vec<f64>>)>> =
                pool.install(|| samples.par_iter().map(|(x, y)| sample_gradient(shared, x, y)).collect());
            let mut total: Option<Vec<Vec<f64>>> = None;
            for r in results {
                let (loss, grads) = r?;
                loss_sum += loss;
                match &mut total {
                    None => total = Some(grads),
                    Some(acc) => {
                        for (a, g) in acc.iter_mut().zip(grads) {
                            a.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                        }
                    }
                }
            }
            let mut grads = total.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().flatten().for_each(|g| *g *= inv);
            adam_step(&mut model.parameters_mut(), &grads, &mut adam, lr)?;
        }
        let val_mpjpe = validation_mpjpe(&*model, val_set, cfg)?;
        let record = EpochRecord { epoch, lr, train_loss: loss_sum / order.len() as f64, val_mpjpe };
        if !record.train_loss.is_finite() || !val_mpjpe.is_finite() {
            return Err(Error::Data(format!("training diverged at epoch {epoch}")));
        }
        if val_mpjpe < best_val_mpjpe {
            best_val_mpjpe = val_mpjpe;
            best_epoch = Some(epoch);
            on_improve(model, &record)?;
        }
        history.push(record);
    }
    Ok(TrainReport { initial_val_mpjpe, history, best_epoch, best_val_mpjpe })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LinearLifter;

    #[test]
    fn loss_hand_values() {
        let gt = Tensor::new(vec![2, 17, 3], (0..102).map(|i| i as f64 * 0.1).collect()).unwrap();
        assert_eq!(mpjpe_loss_value(&gt, &gt).unwrap(), 0.0);
        let mut off = gt.clone();
        for p in off.data_mut().chunks_exact_mut(3) {
            p[0] += 3.0;
        }
        assert!((mpjpe_loss_value(&off, &gt).unwrap() - 102.0).abs() < 1e-9);
    }

    #[test]
    fn every_frame_predicted_once() {
        // A lifter whose output encodes the input x of the root joint.
        let mut model = LinearLifter::new(4, 17, 0);
        model.weight = Tensor::zeros(&[34, 51]);
        model.weight.set(&[0, 0], 1.0);
        let input = Tensor::new(vec![11, 17, 2], (0..11 * 34).map(|i| (i / 34) as f64).collect()).unwrap();
        for n in [1, 2, 3] {
            let y = predict_sequence(&model, &input, n, false).unwrap();
            for f in 0..11 {
                assert_eq!(y.at(&[f, 0, 0]), f as f64, "interval {n}");
            }
        }
    }
}
