//! Pinhole cameras.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Intrinsics plus world→camera extrinsics: `X_cam = R·X_world + t`, millimeters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// Row-major rotation.
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl Camera {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(Error::Config(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy)));
        }
        Ok(())
    }

    /// Camera-frame coordinates of a world point.
    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        std::array::from_fn(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }

    /// `T×J×3` world poses to camera frame.
    pub fn poses_to_camera(&self, poses: &Tensor) -> Tensor {
        let mut out = poses.clone();
        for p in out.data_mut().chunks_exact_mut(3) {
            let c = self.to_camera([p[0], p[1], p[2]]);
            p.copy_from_slice(&c);
        }
        out
    }

    /// Pixel coordinates of a camera-frame point with positive depth.
    pub fn project_camera_point(&self, c: [f64; 3]) -> [f64; 2] {
        [self.fx * c[0] / c[2] + self.cx, self.fy * c[1] / c[2] + self.cy]
    }
}

/// Pinhole projection of `T×J×3` world poses to `T×J×2` pixels.
pub fn project(poses: &Tensor, camera: &Camera) -> Result<Tensor> {
    camera.validate()?;
    let shape = poses.shape();
    if shape.len() != 3 || shape[2] != 3 {
        return Err(Error::Config(format!("expected T×J×3 poses, got {shape:?}")));
    }
    let joints = shape[1];
    let mut out = Vec::with_capacity(shape[0] * joints * 2);
    for (i, p) in poses.data().chunks_exact(3).enumerate() {
        let c = camera.to_camera([p[0], p[1], p[2]]);
        if !(c[2] > 0.0) {
            return Err(Error::Data(format!(
                "joint {} of frame {} has non-positive depth {}",
                i % joints,
                i / joints,
                c[2]
            )));
        }
        out.extend(camera.project_camera_point(c));
    }
    Ok(Tensor::new(vec![shape[0], joints, 2], out)?)
}
