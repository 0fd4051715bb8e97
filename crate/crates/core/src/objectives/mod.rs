//! Reconstruction objectives: root tracking, pose tracking, keypoint reprojection
//! and joint-limit penalties, and their weighted sum.

use serde::{Deserialize, Serialize};

use crate::body::{BodySpec, JointKind};
use crate::error::{Error, Result};
use crate::mathcore::{Mat3, Quat, Real, Vec3};

/// Smallest camera-frame depth accepted by [`project`].
pub const MIN_DEPTH: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::InvalidInput("camera focal lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Pinhole camera with its pose in the world (`p_world = R p_cam + t`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub intrinsics: CameraIntrinsics,
    /// World-from-camera rotation, row-major.
    pub rotation: [[f64; 3]; 3],
    /// Camera center in world coordinates.
    pub translation: [f64; 3],
}

impl Camera {
    pub fn rotation_mat(&self) -> Mat3<f64> {
        Mat3 { m: self.rotation }
    }

    pub fn world_to_camera<S: Real>(&self, p: &Vec3<S>) -> Vec3<S> {
        let r = Mat3::<S>::from_f64(&self.rotation_mat());
        r.tmul_vec(&(*p - Vec3::from_f64(Vec3::c(self.translation[0], self.translation[1], self.translation[2]))))
    }

    pub fn validate(&self) -> Result<()> {
        self.intrinsics.validate()?;
        let r = self.rotation_mat();
        let rrt = r.mul(&r.transpose());
        if rrt.max_abs_diff(&Mat3::identity()) > 1e-6 || (r.det() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidInput("camera rotation must be orthonormal with det +1".into()));
        }
        Ok(())
    }

    /// Projects a world point to pixels.
    pub fn project_world(&self, p: Vec3<f64>) -> Result<[f64; 2]> {
        project(self.world_to_camera(&p), &self.intrinsics)
    }
}

/// Perspective projection of a camera-frame point.
pub fn project(p: Vec3<f64>, k: &CameraIntrinsics) -> Result<[f64; 2]> {
    if !(p.z > MIN_DEPTH) {
        return Err(Error::BehindCamera(p.z));
    }
    Ok(project_clamped(&p, k))
}

/// Projection with the depth clamped to [`MIN_DEPTH`]; usable inside recorded graphs.
pub fn project_clamped<S: Real>(p: &Vec3<S>, k: &CameraIntrinsics) -> [S; 2] {
    let z = p.z.max(S::cst(MIN_DEPTH));
    [p.x / z * k.fx + k.cx, p.y / z * k.fy + k.cy]
}

/// One frame of kinematic evidence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceFrame {
    /// Root (pelvis) position in world coordinates, m.
    pub root: [f64; 3],
    /// One unit quaternion per link: world orientation for the root, local otherwise.
    pub quats: Vec<[f64; 4]>,
    /// Detected keypoints in pixels.
    pub keypoints: Vec<[f64; 2]>,
    /// Detection confidences in [0, 1].
    pub confidence: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub fps: f64,
    pub camera: Camera,
    pub frames: Vec<ReferenceFrame>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn validate(&self, body: &BodySpec) -> Result<()> {
        if self.frames.len() < 2 {
            return Err(Error::InvalidInput("reference needs at least 2 frames".into()));
        }
        if !(self.fps > 0.0) {
            return Err(Error::InvalidInput("fps must be positive".into()));
        }
        self.camera.validate()?;
        let nk = body.keypoints.len();
        for (i, f) in self.frames.iter().enumerate() {
            let bad = |m: &str| Err(Error::InvalidInput(format!("frame {i}: {m}")));
            if f.quats.len() != body.n_links() {
                return bad(&format!("expected {} quaternions, got {}", body.n_links(), f.quats.len()));
            }
            if f.keypoints.len() != nk || f.confidence.len() != nk {
                return bad(&format!("expected {nk} keypoints and confidences"));
            }
            if f.root.iter().any(|x| !x.is_finite()) || f.keypoints.iter().flatten().any(|x| !x.is_finite()) {
                return bad("non-finite value");
            }
            if f.confidence.iter().any(|c| !(0.0..=1.0).contains(c)) {
                return bad("confidence outside [0, 1]");
            }
            for q in &f.quats {
                let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
                if !((n - 1.0).abs() < 1e-3) {
                    return bad("quaternion is not unit");
                }
            }
        }
        Ok(())
    }

    /// Slice of frames `[start, end)` sharing this camera.
    pub fn slice(&self, start: usize, end: usize) -> ReferenceTrajectory {
        ReferenceTrajectory {
            fps: self.fps,
            camera: self.camera,
            frames: self.frames[start..end].to_vec(),
        }
    }
}

/// Generalized coordinates for a reference frame.
pub fn frame_to_q(body: &BodySpec, f: &ReferenceFrame) -> Vec<f64> {
    let mut q = vec![0.0; body.nq()];
    for (l, quat) in body.links.iter().zip(&f.quats) {
        let i = l.q_index;
        let u = Quat::new(quat[0], quat[1], quat[2], quat[3]).normalize();
        match l.joint.kind {
            JointKind::Floating => {
                q[i..i + 3].copy_from_slice(&f.root);
                q[i + 3..i + 7].copy_from_slice(&u.to_array());
            }
            JointKind::Spherical => q[i..i + 4].copy_from_slice(&u.to_array()),
            JointKind::Revolute(a) => q[i] = 2.0 * u.vec().dot(&a).atan2(u.w),
            JointKind::Fixed => {}
        }
    }
    q
}

/// Trajectory holding the given poses, with keypoints rendered through
/// `camera` at full confidence.
pub fn rendered_reference(body: &BodySpec, camera: &Camera, fps: f64, poses: &[Vec<f64>]) -> ReferenceTrajectory {
    let zero = vec![0.0; body.nv()];
    let frames = poses
        .iter()
        .map(|q| {
            let kin = crate::dynamics::forward_kinematics(body, q, &zero);
            let kps = crate::dynamics::keypoint_positions(body, &kin)
                .iter()
                .map(|p| project_clamped(&camera.world_to_camera(p), &camera.intrinsics))
                .collect();
            q_to_frame(body, q, kps, vec![1.0; body.keypoints.len()])
        })
        .collect();
    ReferenceTrajectory { fps, camera: *camera, frames }
}

/// Reference frame holding the pose `q`, with the given keypoint evidence.
pub fn q_to_frame(body: &BodySpec, q: &[f64], keypoints: Vec<[f64; 2]>, confidence: Vec<f64>) -> ReferenceFrame {
    let root = if body.is_floating() {
        let i = body.links[0].q_index;
        [q[i], q[i + 1], q[i + 2]]
    } else {
        [0.0; 3]
    };
    ReferenceFrame {
        root,
        quats: crate::dynamics::joint_quaternions(body, q).iter().map(|u| u.to_array()).collect(),
        keypoints,
        confidence,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_r: f64,
    pub w_j: f64,
    pub w_i: f64,
    pub w_l: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_r: 10.0,
            w_j: 0.1,
            w_i: 0.01,
            w_l: 0.01,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if [self.w_r, self.w_j, self.w_i, self.w_l].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("loss weights must be finite and nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub root: f64,
    pub pose: f64,
    pub projection: f64,
    pub limit: f64,
}

impl LossComponents {
    pub fn as_array(&self) -> [f64; 4] {
        [self.root, self.pose, self.projection, self.limit]
    }
}

/// Weighted sum of the components; fails naming the first non-finite one.
pub fn total_loss(c: &LossComponents, w: &LossWeights) -> Result<f64> {
    for (name, v) in [("root", c.root), ("pose", c.pose), ("projection", c.projection), ("limit", c.limit)] {
        if !v.is_finite() {
            return Err(Error::Diverged(format!("{name} loss is {v}")));
        }
    }
    Ok(w.w_r * c.root + w.w_j * c.pose + w.w_i * c.projection + w.w_l * c.limit)
}

/// Angle between unit quaternions as 4-vectors, sign-invariant: `arccos(|a·b|)`.
///
/// Evaluated as `2 atan2(‖a − b‖, ‖a + b‖)` after aligning signs, which has a
/// finite (zero) subgradient at perfect alignment.
pub fn quat_distance<S: Real>(a: &Quat<S>, b: &Quat<S>) -> S {
    let s = S::select_le(S::zero(), a.dot(b), S::one(), -S::one());
    let b = b.scale(s);
    let d = (a.w - b.w).sq() + (a.x - b.x).sq() + (a.y - b.y).sq() + (a.z - b.z).sq();
    let p = (a.w + b.w).sq() + (a.x + b.x).sq() + (a.y + b.y).sq() + (a.z + b.z).sq();
    d.safe_sqrt().atan2(p.safe_sqrt()) * 2.0
}

/// Per-frame building blocks, unnormalized.
pub fn root_term<S: Real>(sim: &Vec3<S>, reference: &Vec3<S>) -> S {
    (*sim - *reference).norm_sq()
}

pub fn pose_term<S: Real>(sim: &[Quat<S>], reference: &[Quat<S>]) -> S {
    sim.iter().zip(reference).fold(S::zero(), |acc, (a, b)| acc + quat_distance(a, b))
}

pub fn projection_term<S: Real>(
    sim_world: &[Vec3<S>],
    keypoints: &[[S; 2]],
    confidence: &[S],
    camera: &Camera,
) -> S {
    let mut acc = S::zero();
    for ((p, x), c) in sim_world.iter().zip(keypoints).zip(confidence) {
        let uv = project_clamped(&camera.world_to_camera(p), &camera.intrinsics);
        acc += ((uv[0] - x[0]).sq() + (uv[1] - x[1]).sq()) * *c;
    }
    acc
}

pub fn limit_term<S: Real>(coords: &[S], lower: &[f64], upper: &[f64]) -> S {
    let mut acc = S::zero();
    for ((x, lo), hi) in coords.iter().zip(lower).zip(upper) {
        let h = (S::cst(*lo) - *x).max(S::zero()) + (*x - *hi).max(S::zero());
        acc += h.sq();
    }
    acc
}

fn check_frames(a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::InvalidInput(format!("frame count mismatch: {a} simulated vs {b} reference")));
    }
    Ok(())
}

/// Mean squared root position error.
pub fn root_loss<S: Real>(sim: &[Vec3<S>], reference: &[[f64; 3]]) -> Result<S> {
    check_frames(sim.len(), reference.len())?;
    let mut acc = S::zero();
    for (s, r) in sim.iter().zip(reference) {
        acc += root_term(s, &Vec3::from_f64(Vec3::c(r[0], r[1], r[2])));
    }
    Ok(acc / sim.len() as f64)
}

/// Mean quaternion distance over frames and joints.
pub fn pose_loss<S: Real>(sim: &[Vec<Quat<S>>], reference: &[Vec<[f64; 4]>]) -> Result<S> {
    check_frames(sim.len(), reference.len())?;
    let k = reference[0].len();
    let mut acc = S::zero();
    for (s, r) in sim.iter().zip(reference) {
        if s.len() != k || r.len() != k {
            return Err(Error::InvalidInput("joint count mismatch".into()));
        }
        let r: Vec<Quat<S>> = r.iter().map(|q| Quat::from_f64(Quat::new(q[0], q[1], q[2], q[3]))).collect();
        acc += pose_term(s, &r);
    }
    Ok(acc / (sim.len() * k) as f64)
}

/// Mean confidence-weighted squared reprojection error over frames and keypoints.
pub fn projection_loss<S: Real>(sim_world: &[Vec<Vec3<S>>], reference: &[ReferenceFrame], camera: &Camera) -> Result<S> {
    check_frames(sim_world.len(), reference.len())?;
    let k = reference[0].keypoints.len();
    let mut acc = S::zero();
    for (s, r) in sim_world.iter().zip(reference) {
        if s.len() != k || r.keypoints.len() != k || r.confidence.len() != k {
            return Err(Error::InvalidInput("keypoint count mismatch".into()));
        }
        let x: Vec<[S; 2]> = r.keypoints.iter().map(|p| [S::cst(p[0]), S::cst(p[1])]).collect();
        let c: Vec<S> = r.confidence.iter().map(|c| S::cst(*c)).collect();
        acc += projection_term(s, &x, &c, camera);
    }
    Ok(acc / (sim_world.len() * k) as f64)
}

/// Mean squared limit violation; `coords` are per-frame actuated joint coordinates,
/// averaged over frames and `n_joints`.
pub fn limit_loss<S: Real>(coords: &[Vec<S>], lower: &[f64], upper: &[f64], n_joints: usize) -> Result<S> {
    if coords.is_empty() || n_joints == 0 {
        return Err(Error::InvalidInput("limit loss needs frames and joints".into()));
    }
    let mut acc = S::zero();
    for c in coords {
        if c.len() != lower.len() || c.len() != upper.len() {
            return Err(Error::InvalidInput("joint coordinate count mismatch".into()));
        }
        acc += limit_term(c, lower, upper);
    }
    Ok(acc / (coords.len() * n_joints) as f64)
}
