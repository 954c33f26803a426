//! Pose generators and an independent similarity-alignment oracle shared by
//! the metric tests.

#![allow(dead_code)]

use argmin::core::{CostFunction, Executor};
use argmin::solver::neldermead::NelderMead;
use hstformer::Tensor;
use nalgebra::{Rotation3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub const J: usize = 17;

pub fn random_pose(rng: &mut ChaCha8Rng, frames: usize, spread: f64) -> Tensor {
    Tensor::randn(&[frames, J, 3], spread, rng)
}

pub fn random_rotation(rng: &mut ChaCha8Rng, max_angle: f64) -> Rotation3<f64> {
    let axis = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    Rotation3::new(axis.normalize() * rng.random_range(0.0..max_angle))
}

pub fn transform(pose: &Tensor, s: f64, r: &Rotation3<f64>, t: Vector3<f64>) -> Tensor {
    let mut out = pose.clone();
    for p in out.data_mut().chunks_exact_mut(3) {
        let q = r * Vector3::new(p[0], p[1], p[2]) * s + t;
        p.copy_from_slice(q.as_slice());
    }
    out
}

pub fn add_noise(pose: &Tensor, std: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let noise = Normal::new(0.0, std).unwrap();
    let data = pose.data().iter().map(|v| v + noise.sample(rng)).collect();
    Tensor::new(pose.shape().to_vec(), data).unwrap()
}

pub fn points(t: &Tensor) -> Vec<Vector3<f64>> {
    t.data().chunks_exact(3).map(|p| Vector3::new(p[0], p[1], p[2])).collect()
}

pub fn brute_errors(pred: &Tensor, gt: &Tensor) -> Vec<f64> {
    let (p, g) = (points(pred), points(gt));
    p.iter().zip(&g).map(|(a, b)| ((a.x - b.x).powi(2) + (a.y - b.y).powi(2) + (a.z - b.z).powi(2)).sqrt()).collect()
}

/// Least-squares similarity fit over (log scale, rotation vector, translation)
/// found by derivative-free search; poses are scaled to meters inside.
#[derive(Clone)]
struct SimilarityFit {
    src: Vec<Vector3<f64>>,
    dst: Vec<Vector3<f64>>,
}

impl SimilarityFit {
    fn map(&self, p: &[f64]) -> impl Iterator<Item = Vector3<f64>> + '_ {
        let s = p[0].exp();
        let r = Rotation3::new(Vector3::new(p[1], p[2], p[3]));
        let t = Vector3::new(p[4], p[5], p[6]);
        self.src.iter().map(move |x| r * x * s + t)
    }

    fn mean_error_mm(&self, p: &[f64]) -> f64 {
        self.map(p).zip(&self.dst).map(|(a, b)| (a - b).norm()).sum::<f64>() / self.src.len() as f64 * 1000.0
    }
}

impl CostFunction for SimilarityFit {
    type Param = Vec<f64>;
    type Output = f64;

    fn cost(&self, p: &Vec<f64>) -> Result<f64, argmin::core::Error> {
        Ok(self.map(p).zip(&self.dst).map(|(a, b)| (a - b).norm_squared()).sum())
    }
}

/// Mean per-joint error (mm) after the best similarity found by
/// Nelder-Mead from several rotation starts.
pub fn optimizer_p_mpjpe(pred: &Tensor, gt: &Tensor, rng: &mut ChaCha8Rng) -> f64 {
    let fit = SimilarityFit {
        src: points(pred).into_iter().map(|p| p / 1000.0).collect(),
        dst: points(gt).into_iter().map(|p| p / 1000.0).collect(),
    };
    let shift = fit.dst.iter().sum::<Vector3<f64>>() / J as f64 - fit.src.iter().sum::<Vector3<f64>>() / J as f64;
    let mut best: Option<(f64, Vec<f64>)> = None;
    for start in 0..6 {
        let rot = if start == 0 { Vector3::zeros() } else { random_rotation(rng, std::f64::consts::PI).scaled_axis() };
        let mut x0 = vec![0.0, rot.x, rot.y, rot.z, shift.x, shift.y, shift.z];
        for step in [0.3, 0.03, 0.003] {
            let simplex = (0..=7)
                .map(|i| {
                    let mut v = x0.clone();
                    if i > 0 {
                        v[i - 1] += step;
                    }
                    v
                })
                .collect();
            let solver = NelderMead::new(simplex).with_sd_tolerance(1e-15).unwrap();
            let res = Executor::new(fit.clone(), solver).configure(|s| s.max_iters(20_000)).run().unwrap();
            x0 = res.state.best_param.unwrap();
        }
        let cost = fit.cost(&x0).unwrap();
        if best.as_ref().is_none_or(|(c, _)| cost < *c) {
            best = Some((cost, x0));
        }
    }
    fit.mean_error_mm(&best.unwrap().1)
}
