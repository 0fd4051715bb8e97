//! Ground plane estimation: the rigid transform that takes camera-frame body
//! samples to a world with the ground at `y = 0` and gravity along `-y`.

use nalgebra::Matrix3;

use crate::body::BodySpec;
use crate::dynamics::forward_kinematics;
use crate::error::{Error, Result};
use crate::mathcore::{record_gradient, Mat3, Quat, Real, Var, Vec3};
use crate::objectives::{Camera, CameraIntrinsics, ReferenceTrajectory};
use crate::optimizer::{bfgs_minimize, BfgsOptions};

/// World-from-camera rigid transform: `world = rotation · camera + translation`.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GroundTransform {
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
}

impl GroundTransform {
    pub fn identity() -> Self {
        GroundTransform { rotation: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]], translation: [0.0; 3] }
    }

    pub fn apply(&self, p: &[f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [0, 1, 2].map(|i| r[i][0] * p[0] + r[i][1] * p[1] + r[i][2] * p[2] + self.translation[i])
    }

    pub fn validate(&self) -> Result<()> {
        let r = Matrix3::from_fn(|i, j| self.rotation[i][j]);
        let err = (r.transpose() * r - Matrix3::identity()).abs().max();
        if !(err < 1e-6) || !((r.determinant() - 1.0).abs() < 1e-6) {
            return Err(Error::InvalidInput("ground rotation must be orthonormal with determinant +1".into()));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("ground translation must be finite".into()));
        }
        Ok(())
    }

    /// The camera whose frame this transform leaves.
    pub fn camera(&self, intrinsics: CameraIntrinsics) -> Camera {
        Camera { intrinsics, rotation: self.rotation, translation: self.translation }
    }

    /// Inverse of [`GroundTransform::camera`].
    pub fn from_camera(camera: &Camera) -> Self {
        GroundTransform { rotation: camera.rotation, translation: camera.translation }
    }
}

/// Re-expresses a trajectory given in the transform's source frame (root
/// positions, root orientations and camera pose) in its target frame.
/// Local joint rotations and keypoints are unchanged.
pub fn transform_reference(body: &BodySpec, r: &ReferenceTrajectory, t: &GroundTransform) -> Result<ReferenceTrajectory> {
    t.validate()?;
    if !body.is_floating() {
        return Err(Error::InvalidBody("only floating-base trajectories can be moved".into()));
    }
    let rm = Mat3::<f64>::from_rows(t.rotation[0], t.rotation[1], t.rotation[2]);
    let rq = Quat::from_mat(&rm);
    let cam = r.camera.rotation_mat();
    let moved = rm.mul(&cam);
    let camera = Camera {
        intrinsics: r.camera.intrinsics,
        rotation: moved.m,
        translation: t.apply(&r.camera.translation),
    };
    let frames = r
        .frames
        .iter()
        .map(|f| {
            let mut f = f.clone();
            f.root = t.apply(&f.root);
            f.quats[0] = rq.mul(&Quat::from_slice(&f.quats[0])).normalize().to_array();
            f
        })
        .collect();
    Ok(ReferenceTrajectory { fps: r.fps, camera, frames })
}

#[derive(Clone, Debug)]
pub struct GroundConfig {
    /// Lowest points per frame that should touch the ground.
    pub k: usize,
    /// Clip on each signed distance, m.
    pub delta: f64,
    pub max_iters: usize,
}

impl Default for GroundConfig {
    fn default() -> Self {
        GroundConfig { k: 20, delta: 0.2, max_iters: 200 }
    }
}

#[derive(Clone, Debug)]
pub struct GroundEstimate {
    pub transform: GroundTransform,
    pub loss: f64,
    /// Loss reached from each initialization.
    pub restarts: Vec<f64>,
}

/// Surface samples of every capsule: `along` points on each segment pushed out
/// by the radius in the six link-frame axis directions. Returned in world
/// coordinates.
pub fn body_surface_samples(body: &BodySpec, q: &[f64], along: usize) -> Vec<[f64; 3]> {
    let kin = forward_kinematics(body, q, &vec![0.0; body.nv()]);
    let dirs = [
        Vec3::c(1.0, 0.0, 0.0),
        Vec3::c(-1.0, 0.0, 0.0),
        Vec3::c(0.0, 1.0, 0.0),
        Vec3::c(0.0, -1.0, 0.0),
        Vec3::c(0.0, 0.0, 1.0),
        Vec3::c(0.0, 0.0, -1.0),
    ];
    let mut out = Vec::with_capacity(body.capsules.len() * along * 6);
    for c in &body.capsules {
        for s in 0..along {
            let t = if along == 1 { 0.5 } else { s as f64 / (along - 1) as f64 };
            let p = c.a.scale(1.0 - t) + c.b.scale(t);
            for d in &dirs {
                let w = kin.point_world(c.link, &(p + d.scale(c.radius)));
                out.push([w.x, w.y, w.z]);
            }
        }
    }
    out
}

fn frame_loss<S: Real>(heights: &[S], k: usize, delta: f64) -> S {
    let mut order: Vec<usize> = (0..heights.len()).collect();
    order.sort_by(|&a, &b| heights[a].val().total_cmp(&heights[b].val()));
    order[..k]
        .iter()
        .map(|&i| heights[i].clamp_to(S::cst(-delta), S::cst(delta)).sq())
        .fold(S::zero(), |a, b| a + b)
}

/// Clipped squared heights of the `k` lowest points per frame after applying `t`.
pub fn ground_loss(clouds: &[Vec<[f64; 3]>], t: &GroundTransform, cfg: &GroundConfig) -> f64 {
    clouds
        .iter()
        .map(|c| {
            let h: Vec<f64> = c.iter().map(|p| t.apply(p)[1]).collect();
            frame_loss(&h, cfg.k.min(h.len()), cfg.delta)
        })
        .sum()
}

/// `exp(x[0..3])` applied after `base`, then shifted by `x[3..6]`.
fn compose(base: &GroundTransform, x: &[f64]) -> GroundTransform {
    let r = Quat::exp(&Vec3::c(x[0], x[1], x[2])).to_mat();
    let t = r.mul_vec(&Vec3::c(base.translation[0], base.translation[1], base.translation[2]));
    GroundTransform { rotation: r.mul(&Mat3 { m: base.rotation }).m, translation: [t.x + x[3], t.y + x[4], t.z + x[5]] }
}

fn check_clouds(clouds: &[Vec<[f64; 3]>], cfg: &GroundConfig) -> Result<()> {
    if clouds.is_empty() {
        return Err(Error::InvalidInput("ground estimation needs at least one frame".into()));
    }
    if cfg.k == 0 || !(cfg.delta > 0.0) {
        return Err(Error::InvalidConfig("ground estimation needs k >= 1 and delta > 0".into()));
    }
    for (f, c) in clouds.iter().enumerate() {
        if c.len() < cfg.k {
            return Err(Error::InvalidInput(format!("frame {f} has {} points, fewer than k = {}", c.len(), cfg.k)));
        }
        if c.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("frame {f} has non-finite points")));
        }
        let n = c.len() as f64;
        let m = [0, 1, 2].map(|j| c.iter().map(|p| p[j]).sum::<f64>() / n);
        let mut cov = Matrix3::zeros();
        for p in c {
            let d = nalgebra::Vector3::new(p[0] - m[0], p[1] - m[1], p[2] - m[2]);
            cov += d * d.transpose();
        }
        let s = cov.symmetric_eigenvalues();
        let mut s: Vec<f64> = s.iter().copied().collect();
        s.sort_by(|a, b| b.total_cmp(a));
        if !(s[0] > 0.0) || s[1] <= 1e-12 * s[0] {
            return Err(Error::Degenerate(format!("frame {f} point cloud has rank below 2")));
        }
    }
    Ok(())
}

/// Fixes the unobservable yaw and horizontal offset: the camera centre sits
/// above the world origin and its optical axis looks along world `-z`.
fn canonical_gauge(t: GroundTransform) -> GroundTransform {
    let axis = [t.rotation[0][2], t.rotation[2][2]];
    let mut out = t;
    out.translation[0] = 0.0;
    out.translation[2] = 0.0;
    if axis[0].hypot(axis[1]) > 1e-9 {
        // Rotation about y taking (ax, az) onto (0, -|a|).
        let yaw = (-axis[0]).atan2(-axis[1]);
        let ry = Quat::from_axis_angle(&Vec3::c(0.0, 1.0, 0.0), -yaw).to_mat();
        out.rotation = ry.mul(&Mat3 { m: t.rotation }).m;
    }
    out
}

fn lowest<'a>(c: &'a [[f64; 3]], t: &GroundTransform, k: usize) -> Vec<[f64; 3]> {
    let mut w: Vec<[f64; 3]> = c.iter().map(|p| t.apply(p)).collect();
    w.sort_by(|a, b| a[1].total_cmp(&b[1]));
    w.truncate(k);
    w
}

/// Alternates between picking each frame's `k` lowest points and levelling a
/// least-squares plane through all of them.
fn level_by_plane_fits(clouds: &[Vec<[f64; 3]>], mut t: GroundTransform, k: usize, iters: usize) -> GroundTransform {
    for _ in 0..iters {
        let pts: Vec<[f64; 3]> = clouds.iter().flat_map(|c| lowest(c, &t, k)).collect();
        let n = pts.len() as f64;
        let m = [0, 1, 2].map(|j| pts.iter().map(|p| p[j]).sum::<f64>() / n);
        let mut cov = Matrix3::zeros();
        for p in &pts {
            let d = nalgebra::Vector3::new(p[0] - m[0], p[1] - m[1], p[2] - m[2]);
            cov += d * d.transpose();
        }
        let eig = cov.symmetric_eigen();
        let i = eig.eigenvalues.imin();
        let mut normal = eig.eigenvectors.column(i).into_owned();
        if normal.y < 0.0 {
            normal = -normal;
        }
        // Skip fits whose smallest spread is not clearly a plane normal.
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        if !(ev[1] > 4.0 * ev[0]) || normal.y < 0.5 {
            break;
        }
        let delta = rotation_between(&Vec3::c(normal.x, normal.y, normal.z), &Vec3::c(0.0, 1.0, 0.0));
        let r = delta.mul(&Mat3 { m: t.rotation });
        let tr = delta.mul_vec(&Vec3::c(t.translation[0], t.translation[1], t.translation[2]));
        t = GroundTransform { rotation: r.m, translation: [tr.x, tr.y, tr.z] };
        let h = clouds.iter().flat_map(|c| lowest(c, &t, k)).map(|p| p[1]).sum::<f64>() / n;
        t.translation[1] -= h;
    }
    t
}

/// Rotation taking unit `from` onto unit `to` about their common normal.
fn rotation_between(from: &Vec3<f64>, to: &Vec3<f64>) -> Mat3<f64> {
    let axis = from.cross(to);
    let ang = axis.norm().atan2(from.dot(to));
    if axis.norm() > 1e-12 {
        Quat::from_axis_angle(&axis.normalized(), ang).to_mat()
    } else if from.dot(to) > 0.0 {
        Mat3::identity()
    } else {
        // Half turn about any axis orthogonal to `from`.
        let o = if from.x.abs() < 0.9 { Vec3::c(1.0, 0.0, 0.0) } else { Vec3::c(0.0, 0.0, 1.0) };
        Quat::from_axis_angle(&from.cross(&o).normalized(), std::f64::consts::PI).to_mat()
    }
}

const CANDIDATE_UPS: usize = 1024;
const STARTS: usize = 8;

/// Candidate camera-frame up directions on a spiral covering the sphere, each
/// levelled with its lowest points on the ground; the `STARTS` with the
/// smallest loss are returned.
fn initializations(clouds: &[Vec<[f64; 3]>], cfg: &GroundConfig) -> Vec<GroundTransform> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut scored: Vec<(f64, GroundTransform)> = (0..CANDIDATE_UPS)
        .map(|i| {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / CANDIDATE_UPS as f64;
            let r = (1.0 - y * y).sqrt();
            let up = Vec3::c(r * (golden * i as f64).cos(), y, r * (golden * i as f64).sin());
            let rot = rotation_between(&up, &Vec3::c(0.0, 1.0, 0.0));
            let mut t = GroundTransform { rotation: rot.m, translation: [0.0; 3] };
            let h: f64 = clouds.iter().flat_map(|c| lowest(c, &t, cfg.k)).map(|p| p[1]).sum::<f64>();
            t.translation[1] = -h / (clouds.len() * cfg.k) as f64;
            (ground_loss(clouds, &t, cfg), t)
        })
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    scored.into_iter().take(STARTS).map(|(_, t)| t).collect()
}

/// Loss slack, per frame, within which two fits count as tied.
const TIE_LOSS_PER_FRAME: f64 = 1e-4;

fn mean_height(clouds: &[Vec<[f64; 3]>], t: &GroundTransform) -> f64 {
    let n: usize = clouds.iter().map(Vec::len).sum();
    clouds.iter().flatten().map(|p| t.apply(p)[1]).sum::<f64>() / n as f64
}

/// Minimizes [`ground_loss`] over the six rigid-motion parameters and keeps
/// the best of several starts, ties going to the tallest stance. Starts come from a coarse scan of up
/// directions and are first levelled by repeated plane fits through the lowest points. Yaw and
/// the horizontal offset are not observable from heights; the result is
/// returned in a canonical gauge.
pub fn estimate_ground_transform(clouds: &[Vec<[f64; 3]>], cfg: &GroundConfig) -> Result<GroundEstimate> {
    check_clouds(clouds, cfg)?;
    let mut found = Vec::new();
    let mut restarts = Vec::new();
    for start in initializations(clouds, cfg) {
        let levelled = level_by_plane_fits(clouds, start, cfg.k, 30);
        let base = Mat3 { m: levelled.rotation };
        let t0 = levelled.translation;
        let fg = |x: &[f64]| {
            record_gradient(x, |v: &[Var]| {
                let r = Quat::exp(&Vec3::new(v[0], v[1], v[2])).to_mat();
                let mut total = Var::cst(0.0);
                for c in clouds {
                    let h: Vec<Var> = c
                        .iter()
                        .map(|p| {
                            let b = base.mul_vec(&Vec3::c(p[0], p[1], p[2]));
                            let b = b + Vec3::c(t0[0], t0[1], t0[2]);
                            let w = r.mul_vec(&Vec3::new(Var::cst(b.x), Var::cst(b.y), Var::cst(b.z)));
                            w.y + v[4]
                        })
                        .collect();
                    total += frame_loss(&h, cfg.k, cfg.delta);
                }
                total
            })
        };
        let opt = BfgsOptions { max_iters: cfg.max_iters, grad_tol: 1e-12, ..BfgsOptions::default() };
        let res = bfgs_minimize(fg, &[0.0; 6], &opt);
        let t = compose(&levelled, &res.x);
        let loss = ground_loss(clouds, &t, cfg);
        restarts.push(loss);
        found.push((loss, t));
    }
    // A body lying down can also rest k points on a plane. Among starts that
    // fit about equally well, keep the one that stands tallest.
    let least = found.iter().map(|(l, _)| *l).fold(f64::INFINITY, f64::min);
    let tol = TIE_LOSS_PER_FRAME * clouds.len() as f64;
    let (loss, t) = found
        .into_iter()
        .filter(|(l, _)| *l <= least + tol)
        .map(|(l, t)| (mean_height(clouds, &t), l, t))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, l, t)| (l, t))
        .expect("at least one initialization");
    let transform = canonical_gauge(t);
    Ok(GroundEstimate { transform, loss, restarts })
}

#[cfg(test)]
mod tests;
