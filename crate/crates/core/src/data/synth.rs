//! Synthetic articulated motion.
//!
//! A 17-joint body with fixed bone lengths is driven by smooth periodic joint
//! angles (forward kinematics) while its root travels a circle in front of a
//! fixed camera. World axes: x lateral, y up, z toward the camera.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::camera::{project, Camera};
use crate::error::{Error, Result};
use crate::skeleton::{JointId, NUM_JOINTS};
use crate::tensor::Tensor;

pub const SYNTH_FPS: f64 = 50.0;
pub const IMAGE_WIDTH: f64 = 1000.0;
pub const IMAGE_HEIGHT: f64 = 1000.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    WalkCycle,
    ArmWave,
    Mixed,
}

impl MotionKind {
    pub fn name(self) -> &'static str {
        match self {
            MotionKind::WalkCycle => "walk_cycle",
            MotionKind::ArmWave => "arm_wave",
            MotionKind::Mixed => "mixed",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "walk_cycle" => Ok(MotionKind::WalkCycle),
            "arm_wave" => Ok(MotionKind::ArmWave),
            "mixed" => Ok(MotionKind::Mixed),
            other => Err(Error::Config(format!("unknown motion kind {other:?}"))),
        }
    }
}

/// The fixed camera all synthetic sequences are rendered with: 4.5 m from the
/// origin, slightly yawed, principal point at the image center.
pub fn default_camera() -> Camera {
    let yaw: f64 = 15f64.to_radians();
    let (s, c) = yaw.sin_cos();
    // diag(1, -1, -1) · R_y(yaw): image y points down, optical axis along -z.
    Camera {
        fx: 1150.0,
        fy: 1150.0,
        cx: IMAGE_WIDTH / 2.0,
        cy: IMAGE_HEIGHT / 2.0,
        rotation: [[c, 0.0, s], [0.0, -1.0, 0.0], [s, 0.0, -c]],
        translation: [0.0, 900.0, 4500.0],
    }
}

/// Paired sequence produced by [`gen_synthetic`].
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSequence {
    pub motion: MotionKind,
    /// `T×17×3`, world millimeters.
    pub pose3d: Tensor,
    /// `T×17×2`, pixels.
    pub pose2d: Tensor,
    pub camera: Camera,
}

/// Per-seed body and motion parameters.
#[derive(Clone, Debug)]
struct Actor {
    scale: f64,
    gait_hz: f64,
    phase: f64,
    hip_amp: f64,
    knee_amp: f64,
    arm_amp: f64,
    wave_hz: f64,
    path_radius: f64,
    path_speed: f64,
    blend_hz: f64,
}

impl Actor {
    fn sample(rng: &mut ChaCha8Rng) -> Self {
        Self {
            scale: rng.random_range(0.9..1.1),
            gait_hz: rng.random_range(0.8..1.2),
            phase: rng.random_range(0.0..TAU),
            hip_amp: rng.random_range(0.35..0.5),
            knee_amp: rng.random_range(0.6..0.9),
            arm_amp: rng.random_range(0.3..0.5),
            wave_hz: rng.random_range(0.5..0.9),
            path_radius: rng.random_range(1000.0..1600.0),
            path_speed: rng.random_range(900.0..1300.0),
            blend_hz: rng.random_range(0.05..0.1),
        }
    }
}

/// Joint angles for one instant (radians).
#[derive(Clone, Copy, Debug, Default)]
struct Angles {
    /// Hip flexion, forward positive.
    hip: [f64; 2],
    /// Knee flexion, non-negative.
    knee: [f64; 2],
    /// Shoulder flexion and abduction.
    shoulder_flex: [f64; 2],
    shoulder_abd: [f64; 2],
    elbow: [f64; 2],
    torso_lean: f64,
    torso_twist: f64,
    bob: f64,
}

const LEFT: usize = 0;
const RIGHT: usize = 1;

fn walk_angles(a: &Actor, t: f64) -> Angles {
    let w = TAU * a.gait_hz * t + a.phase;
    let mut ang = Angles::default();
    for (side, offset) in [(LEFT, 0.0), (RIGHT, PI)] {
        let p = w + offset;
        ang.hip[side] = a.hip_amp * p.sin();
        ang.knee[side] = a.knee_amp * 0.5 * (1.0 - (p + 0.5 * PI).cos()).max(0.0) * 0.5 + 0.05;
        // Arms swing against the same-side leg.
        ang.shoulder_flex[side] = -a.arm_amp * p.sin();
        ang.shoulder_abd[side] = 0.12;
        ang.elbow[side] = 0.35 + 0.15 * (p + 0.3).sin();
    }
    ang.torso_lean = 0.06;
    ang.torso_twist = 0.08 * w.sin();
    ang.bob = 20.0 * (2.0 * w).cos();
    ang
}

fn wave_angles(a: &Actor, t: f64) -> Angles {
    let w = TAU * a.wave_hz * t + a.phase;
    let sway = 0.06 * (0.5 * w).sin();
    let mut ang = Angles::default();
    for side in [LEFT, RIGHT] {
        ang.hip[side] = 0.05 + sway * if side == LEFT { 1.0 } else { -1.0 };
        ang.knee[side] = 0.1;
        ang.shoulder_abd[side] = 0.1;
        ang.elbow[side] = 0.2;
    }
    // Right arm raised and waving.
    ang.shoulder_abd[RIGHT] = 1.9 + 0.25 * w.sin();
    ang.shoulder_flex[RIGHT] = 0.3;
    ang.elbow[RIGHT] = 0.9 + 0.45 * (w + 0.4).sin();
    ang.torso_lean = 0.02;
    ang.torso_twist = 0.1 * (0.5 * w).sin();
    ang
}

fn blend(a: &Angles, b: &Angles, s: f64) -> Angles {
    let mix = |x: f64, y: f64| (1.0 - s) * x + s * y;
    let mix2 = |x: [f64; 2], y: [f64; 2]| [mix(x[0], y[0]), mix(x[1], y[1])];
    Angles {
        hip: mix2(a.hip, b.hip),
        knee: mix2(a.knee, b.knee),
        shoulder_flex: mix2(a.shoulder_flex, b.shoulder_flex),
        shoulder_abd: mix2(a.shoulder_abd, b.shoulder_abd),
        elbow: mix2(a.elbow, b.elbow),
        torso_lean: mix(a.torso_lean, b.torso_lean),
        torso_twist: mix(a.torso_twist, b.torso_twist),
        bob: mix(a.bob, b.bob),
    }
}

/// Bone lengths in millimeters before the per-actor scale.
mod bones {
    pub const PELVIS_HALF: f64 = 130.0;
    pub const THIGH: f64 = 450.0;
    pub const SHIN: f64 = 440.0;
    pub const SPINE: f64 = 230.0;
    pub const CHEST: f64 = 250.0;
    pub const NECK: f64 = 120.0;
    pub const HEAD: f64 = 110.0;
    pub const SHOULDER_HALF: f64 = 160.0;
    pub const UPPER_ARM: f64 = 280.0;
    pub const FOREARM: f64 = 250.0;
    pub const HIP_HEIGHT: f64 = 920.0;
}

type V3 = [f64; 3];

fn add(a: V3, b: V3) -> V3 {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

fn scale(a: V3, s: f64) -> V3 {
    [a[0] * s, a[1] * s, a[2] * s]
}

/// Rotation about the lateral (x) axis; positive tips +y toward +z (forward).
fn rot_x(v: V3, angle: f64) -> V3 {
    let (s, c) = angle.sin_cos();
    [v[0], c * v[1] + s * v[2], -s * v[1] + c * v[2]]
}

/// Rotation about the vertical (y) axis.
fn rot_y(v: V3, angle: f64) -> V3 {
    let (s, c) = angle.sin_cos();
    [c * v[0] + s * v[2], v[1], -s * v[0] + c * v[2]]
}

/// Rotation about the forward (z) axis.
fn rot_z(v: V3, angle: f64) -> V3 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1], v[2]]
}

/// Body-frame joint positions (x toward the body's left, y up, z forward),
/// root at the origin.
fn pose_body_frame(ang: &Angles, scale_factor: f64) -> [V3; NUM_JOINTS] {
    use bones::*;
    let s = scale_factor;
    let down = [0.0, -1.0, 0.0];
    let up = [0.0, 1.0, 0.0];
    let mut p = [[0.0; 3]; NUM_JOINTS];
    let set = |p: &mut [V3; NUM_JOINTS], j: JointId, v: V3| p[j.index()] = v;

    // Legs: flexion tips the limb forward.
    for (side, sign, hip_j, knee_j, foot_j) in [
        (LEFT, 1.0, JointId::LHip, JointId::LKnee, JointId::LFoot),
        (RIGHT, -1.0, JointId::RHip, JointId::RKnee, JointId::RFoot),
    ] {
        let hip = [sign * PELVIS_HALF * s, 0.0, 0.0];
        let thigh = rot_x(down, -ang.hip[side]);
        let knee = add(hip, scale(thigh, THIGH * s));
        let shin = rot_x(down, -(ang.hip[side] - ang.knee[side]));
        let foot = add(knee, scale(shin, SHIN * s));
        set(&mut p, hip_j, hip);
        set(&mut p, knee_j, knee);
        set(&mut p, foot_j, foot);
    }

    // Torso leans forward and twists about the vertical.
    let spine_dir = rot_y(rot_x(up, ang.torso_lean), ang.torso_twist * 0.5);
    let spine = scale(spine_dir, SPINE * s);
    let chest_dir = rot_y(rot_x(up, ang.torso_lean), ang.torso_twist);
    let thorax = add(spine, scale(chest_dir, CHEST * s));
    let nose = add(thorax, scale(rot_x(up, ang.torso_lean + 0.25), NECK * s));
    let head = add(nose, scale(rot_x(up, ang.torso_lean - 0.2), HEAD * s));
    set(&mut p, JointId::Spine, spine);
    set(&mut p, JointId::Thorax, thorax);
    set(&mut p, JointId::Nose, nose);
    set(&mut p, JointId::Head, head);

    for (side, sign, sh_j, el_j, wr_j) in [
        (LEFT, 1.0, JointId::LShoulder, JointId::LElbow, JointId::LWrist),
        (RIGHT, -1.0, JointId::RShoulder, JointId::RElbow, JointId::RWrist),
    ] {
        let shoulder = add(thorax, scale(rot_y([sign, 0.0, 0.0], ang.torso_twist), SHOULDER_HALF * s));
        // Abduct outward (about z), then flex forward (about x).
        let upper = rot_x(rot_z(down, sign * ang.shoulder_abd[side]), -ang.shoulder_flex[side]);
        let elbow = add(shoulder, scale(upper, UPPER_ARM * s));
        let fore = rot_x(rot_z(down, sign * ang.shoulder_abd[side]), -(ang.shoulder_flex[side] + ang.elbow[side]));
        let wrist = add(elbow, scale(fore, FOREARM * s));
        set(&mut p, sh_j, shoulder);
        set(&mut p, el_j, elbow);
        set(&mut p, wr_j, wrist);
    }
    p
}

/// World-frame `T×17×3` motion (millimeters) for an actor.
fn simulate(actor: &Actor, motion: MotionKind, n_frames: usize) -> Tensor {
    let mut data = Vec::with_capacity(n_frames * NUM_JOINTS * 3);
    for f in 0..n_frames {
        let t = f as f64 / SYNTH_FPS;
        let walk_weight = match motion {
            MotionKind::WalkCycle => 1.0,
            MotionKind::ArmWave => 0.0,
            MotionKind::Mixed => 0.5 - 0.5 * (TAU * actor.blend_hz * t).cos(),
        };
        let ang = blend(&wave_angles(actor, t), &walk_angles(actor, t), walk_weight);
        let body = pose_body_frame(&ang, actor.scale);

        // Root follows a circle; heading is tangent to it while walking.
        let travelled = match motion {
            MotionKind::WalkCycle => actor.path_speed * t,
            MotionKind::ArmWave => 0.0,
            MotionKind::Mixed => {
                // Integral of speed·walk_weight.
                let w = TAU * actor.blend_hz;
                actor.path_speed * (0.5 * t - 0.5 * (w * t).sin() / w)
            }
        };
        let theta = travelled / actor.path_radius + actor.phase;
        let root = [
            actor.path_radius * theta.cos(),
            bones::HIP_HEIGHT * actor.scale + ang.bob,
            actor.path_radius * theta.sin(),
        ];
        // Facing the direction of travel: body +z along the tangent.
        let heading = -theta;
        for j in body {
            let w = add(root, rot_y(j, heading));
            data.extend_from_slice(&w);
        }
    }
    Tensor::new(vec![n_frames, NUM_JOINTS, 3], data).expect("shape matches generated data")
}

/// Deterministic paired 2D/3D motion for `seed`. `noise_px` adds i.i.d.
/// Gaussian noise of that standard deviation to the 2D keypoints.
pub fn gen_synthetic(seed: u64, n_frames: usize, motion: MotionKind, noise_px: f64) -> Result<SyntheticSequence> {
    if n_frames == 0 {
        return Err(Error::Config("n_frames must be at least 1".into()));
    }
    if !(noise_px >= 0.0) {
        return Err(Error::Config(format!("noise must be non-negative, got {noise_px}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let actor = Actor::sample(&mut rng);
    let camera = default_camera();
    let pose3d = simulate(&actor, motion, n_frames);
    let mut pose2d = project(&pose3d, &camera)?;
    if noise_px > 0.0 {
        let normal = Normal::new(0.0, noise_px).expect("finite noise");
        for v in pose2d.data_mut() {
            *v += normal.sample(&mut rng);
        }
    }
    Ok(SyntheticSequence { motion, pose3d, pose2d, camera })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::Skeleton;

    fn bone_lengths(poses: &Tensor, frame: usize) -> Vec<f64> {
        Skeleton::default()
            .bones()
            .into_iter()
            .map(|(c, p)| {
                let a: Vec<f64> = (0..3).map(|k| poses.at(&[frame, c, k])).collect();
                let b: Vec<f64> = (0..3).map(|k| poses.at(&[frame, p, k])).collect();
                a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            })
            .collect()
    }

    #[test]
    fn bones_are_rigid_for_every_motion() {
        for motion in [MotionKind::WalkCycle, MotionKind::ArmWave, MotionKind::Mixed] {
            let seq = gen_synthetic(3, 200, motion, 0.0).unwrap();
            let first = bone_lengths(&seq.pose3d, 0);
            for f in 1..200 {
                for (a, b) in bone_lengths(&seq.pose3d, f).iter().zip(&first) {
                    assert!((a - b).abs() < 1e-9, "{motion}: bone drift {a} vs {b}");
                }
            }
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = gen_synthetic(11, 120, MotionKind::Mixed, 1.5).unwrap();
        let b = gen_synthetic(11, 120, MotionKind::Mixed, 1.5).unwrap();
        assert_eq!(a, b);
        let c = gen_synthetic(12, 120, MotionKind::Mixed, 1.5).unwrap();
        assert_ne!(a.pose3d, c.pose3d);
    }

    #[test]
    fn body_stays_in_view() {
        let seq = gen_synthetic(5, 1000, MotionKind::WalkCycle, 0.0).unwrap();
        for uv in seq.pose2d.data().chunks_exact(2) {
            assert!(uv[0] > 0.0 && uv[0] < IMAGE_WIDTH && uv[1] > 0.0 && uv[1] < IMAGE_HEIGHT, "{uv:?}");
        }
    }

    #[test]
    fn left_joints_are_on_the_left() {
        let seq = gen_synthetic(1, 1, MotionKind::ArmWave, 0.0).unwrap();
        let body = pose_body_frame(&wave_angles(&Actor::sample(&mut ChaCha8Rng::seed_from_u64(1)), 0.0), 1.0);
        assert!(body[JointId::LHip.index()][0] > 0.0 && body[JointId::RHip.index()][0] < 0.0);
        assert_eq!(seq.pose3d.shape(), &[1, 17, 3]);
    }
}
