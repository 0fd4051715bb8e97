//! Motion quality metrics: joint position errors, acceleration smoothness and
//! foot skating.
//!
//! Closed-form values, errors in mm:
//! - identical inputs: every error is 0.
//! - every joint shifted by `d` m: MPJPE-G = 1000·|d|, MPJPE = MPJPE-PA = 0.
//! - each frame rotated by `R` about its root joint: MPJPE = MPJPE-G =
//!   1000·mean |R p − p| over root-relative joints `p`, MPJPE-PA = 0.
//! - keypoints shifted by `(a, b)` px: 2D error = √(a² + b²) px.
//! - joints moving on a quadratic in time: acceleration variation is 0.

use nalgebra::{Matrix3, Vector3};

use crate::body::BodySpec;
use crate::dynamics::{forward_kinematics, keypoint_positions};
use crate::error::{Error, Result};
use crate::mathcore::Vec3;
use crate::objectives::{frame_to_q, ReferenceTrajectory};

/// Joint positions per frame, in metres.
#[derive(Clone, Debug, PartialEq)]
pub struct JointTrajectory3D {
    pub fps: f64,
    pub frames: Vec<Vec<[f64; 3]>>,
}

impl JointTrajectory3D {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn joints(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.joints();
        if n == 0 {
            return Err(Error::InvalidInput("trajectory has no joints".into()));
        }
        if let Some(f) = self.frames.iter().position(|f| f.len() != n) {
            return Err(Error::InvalidInput(format!("frame {f} has {} joints, expected {n}", self.frames[f].len())));
        }
        if self.frames.iter().flatten().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("trajectory has non-finite joint positions".into()));
        }
        Ok(())
    }

    /// Keypoint positions of a body along a configuration sequence.
    pub fn from_configurations(body: &BodySpec, fps: f64, qs: &[Vec<f64>]) -> Self {
        let zero = vec![0.0; body.nv()];
        let frames = qs
            .iter()
            .map(|q| {
                let kin = forward_kinematics(body, q, &zero);
                keypoint_positions(body, &kin).iter().map(|p| [p.x, p.y, p.z]).collect()
            })
            .collect();
        JointTrajectory3D { fps, frames }
    }
}

fn shapes_match<T>(pred: &[Vec<T>], gt: &[Vec<T>]) -> Result<()> {
    if pred.len() != gt.len() {
        return Err(Error::InvalidInput(format!("{} predicted frames vs {} ground-truth frames", pred.len(), gt.len())));
    }
    if pred.is_empty() {
        return Err(Error::InvalidInput("no frames to compare".into()));
    }
    for (f, (a, b)) in pred.iter().zip(gt).enumerate() {
        if a.len() != b.len() || a.is_empty() {
            return Err(Error::InvalidInput(format!("frame {f}: {} predicted joints vs {} ground-truth joints", a.len(), b.len())));
        }
    }
    Ok(())
}

fn dist3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn frame_error(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    a.iter().zip(b).map(|(p, q)| dist3(p, q)).sum::<f64>() / a.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// World-frame mean joint error per frame, mm.
pub fn mpjpe_g_per_frame(pred: &JointTrajectory3D, gt: &JointTrajectory3D) -> Result<Vec<f64>> {
    shapes_match(&pred.frames, &gt.frames)?;
    Ok(pred.frames.iter().zip(&gt.frames).map(|(a, b)| 1000.0 * frame_error(a, b)).collect())
}

/// Mean joint error after translating each predicted frame so its root joint
/// coincides with the ground truth's, mm per frame.
pub fn mpjpe_per_frame(pred: &JointTrajectory3D, gt: &JointTrajectory3D, root: usize) -> Result<Vec<f64>> {
    shapes_match(&pred.frames, &gt.frames)?;
    if root >= pred.joints() {
        return Err(Error::InvalidInput(format!("root joint {root} out of range")));
    }
    Ok(pred
        .frames
        .iter()
        .zip(&gt.frames)
        .map(|(a, b)| {
            let d: Vec<f64> = (0..3).map(|c| b[root][c] - a[root][c]).collect();
            let moved: Vec<[f64; 3]> = a.iter().map(|p| [p[0] + d[0], p[1] + d[1], p[2] + d[2]]).collect();
            1000.0 * frame_error(&moved, b)
        })
        .collect())
}

/// Similarity transform `(s, R, t)` minimizing `Σ |s R x + t - y|²`.
pub fn similarity_align(x: &[[f64; 3]], y: &[[f64; 3]]) -> (f64, Matrix3<f64>, Vector3<f64>) {
    let n = x.len() as f64;
    let v = |p: &[f64; 3]| Vector3::new(p[0], p[1], p[2]);
    let mx = x.iter().map(v).sum::<Vector3<f64>>() / n;
    let my = y.iter().map(v).sum::<Vector3<f64>>() / n;
    let mut cov = Matrix3::zeros();
    let mut var = 0.0;
    for (a, b) in x.iter().zip(y) {
        let xa = v(a) - mx;
        cov += (v(b) - my) * xa.transpose();
        var += xa.norm_squared();
    }
    cov /= n;
    var /= n;
    if var < 1e-300 {
        return (1.0, Matrix3::identity(), my - mx);
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v requested"));
    let mut d = Matrix3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    let r = u * d * vt;
    let s = (svd.singular_values.component_mul(&d.diagonal())).sum() / var;
    (s, r, my - r * mx * s)
}

/// Mean joint error after per-frame similarity alignment, mm per frame.
pub fn mpjpe_pa_per_frame(pred: &JointTrajectory3D, gt: &JointTrajectory3D) -> Result<Vec<f64>> {
    shapes_match(&pred.frames, &gt.frames)?;
    Ok(pred
        .frames
        .iter()
        .zip(&gt.frames)
        .map(|(a, b)| {
            let (s, r, t) = similarity_align(a, b);
            let moved: Vec<[f64; 3]> = a
                .iter()
                .map(|p| {
                    let m = r * Vector3::new(p[0], p[1], p[2]) * s + t;
                    [m.x, m.y, m.z]
                })
                .collect();
            1000.0 * frame_error(&moved, b)
        })
        .collect())
}

pub fn mpjpe_g(pred: &JointTrajectory3D, gt: &JointTrajectory3D) -> Result<f64> {
    Ok(mean(&mpjpe_g_per_frame(pred, gt)?))
}

pub fn mpjpe(pred: &JointTrajectory3D, gt: &JointTrajectory3D, root: usize) -> Result<f64> {
    Ok(mean(&mpjpe_per_frame(pred, gt, root)?))
}

pub fn mpjpe_pa(pred: &JointTrajectory3D, gt: &JointTrajectory3D) -> Result<f64> {
    Ok(mean(&mpjpe_pa_per_frame(pred, gt)?))
}

/// Mean 2D keypoint error per frame, px.
pub fn mpjpe_2d_per_frame(pred: &[Vec<[f64; 2]>], gt: &[Vec<[f64; 2]>]) -> Result<Vec<f64>> {
    shapes_match(pred, gt)?;
    Ok(pred
        .iter()
        .zip(gt)
        .map(|(a, b)| a.iter().zip(b).map(|(p, q)| (p[0] - q[0]).hypot(p[1] - q[1])).sum::<f64>() / a.len() as f64)
        .collect())
}

pub fn mpjpe_2d(pred: &[Vec<[f64; 2]>], gt: &[Vec<[f64; 2]>]) -> Result<f64> {
    Ok(mean(&mpjpe_2d_per_frame(pred, gt)?))
}

/// Per-frame acceleration change summed over joints, mm/frame². Accelerations
/// are central second differences; entry `t` compares accelerations at frames
/// `t + 1` and `t + 2`.
pub fn total_variation_acc_per_frame(traj: &JointTrajectory3D) -> Result<Vec<f64>> {
    traj.validate()?;
    if traj.len() < 4 {
        return Err(Error::InvalidInput(format!("acceleration variation needs at least 4 frames, got {}", traj.len())));
    }
    let f = &traj.frames;
    let acc = |t: usize, k: usize| -> [f64; 3] {
        let mut a = [0.0; 3];
        for (c, v) in a.iter_mut().enumerate() {
            *v = 1000.0 * (f[t + 1][k][c] - 2.0 * f[t][k][c] + f[t - 1][k][c]);
        }
        a
    };
    Ok((1..f.len() - 2)
        .map(|t| (0..traj.joints()).map(|k| dist3(&acc(t + 1, k), &acc(t, k))).sum())
        .collect())
}

/// Mean over frames of [`total_variation_acc_per_frame`].
pub fn total_variation_acc(traj: &JointTrajectory3D) -> Result<f64> {
    Ok(mean(&total_variation_acc_per_frame(traj)?))
}

/// Ground plane as a point and unit normal.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroundPlane {
    pub point: [f64; 3],
    pub normal: [f64; 3],
}

impl Default for GroundPlane {
    fn default() -> Self {
        GroundPlane { point: [0.0; 3], normal: [0.0, 1.0, 0.0] }
    }
}

impl GroundPlane {
    fn height(&self, p: &[f64; 3]) -> f64 {
        (0..3).map(|c| (p[c] - self.point[c]) * self.normal[c]).sum()
    }

    fn tangential(&self, d: [f64; 3]) -> f64 {
        let h: f64 = (0..3).map(|c| d[c] * self.normal[c]).sum();
        let t: Vec<f64> = (0..3).map(|c| d[c] - h * self.normal[c]).collect();
        (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]).sqrt()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SkateParams {
    /// Points that must lie within `contact_distance` of the plane.
    pub min_points: usize,
    /// m.
    pub contact_distance: f64,
    /// Horizontal displacement above which a planted foot skates, m.
    pub threshold: f64,
}

impl SkateParams {
    /// Thresholds for kinematic estimates.
    pub fn kinematic() -> Self {
        SkateParams { min_points: 10, contact_distance: 0.005, threshold: 0.02 }
    }

    /// Thresholds for simulated motion, whose feet rest exactly on the plane.
    pub fn dynamic() -> Self {
        SkateParams { contact_distance: 0.001, ..Self::kinematic() }
    }
}

/// Sample points of every foot in every frame: `[frame][foot][point]`.
pub type FootPoints = Vec<Vec<Vec<[f64; 3]>>>;

/// Sole samples per foot capsule in [`foot_points`].
pub const SOLE_SAMPLES_PER_CAPSULE: usize = 25;

/// Sole samples of every foot for a configuration sequence.
pub fn foot_points(body: &BodySpec, qs: &[Vec<f64>]) -> FootPoints {
    let zero = vec![0.0; body.nv()];
    qs.iter()
        .map(|q| {
            let kin = forward_kinematics(body, q, &zero);
            body.feet
                .iter()
                .map(|&ft| {
                    body.sole_points(ft, SOLE_SAMPLES_PER_CAPSULE)
                        .iter()
                        .map(|p: &Vec3<f64>| {
                            let w = kin.point_world(ft, p);
                            [w.x, w.y, w.z]
                        })
                        .collect()
                })
                .collect()
        })
        .collect()
}

fn centroid(pts: &[[f64; 3]]) -> [f64; 3] {
    let mut c = [0.0; 3];
    for p in pts {
        for k in 0..3 {
            c[k] += p[k] / pts.len() as f64;
        }
    }
    c
}

/// Flags for each adjacent frame pair in which some foot stays in contact and
/// its centroid moves horizontally by more than the threshold.
pub fn skate_flags(feet: &FootPoints, plane: &GroundPlane, p: &SkateParams) -> Vec<bool> {
    let contact = |pts: &[[f64; 3]]| pts.iter().filter(|q| plane.height(q).abs() <= p.contact_distance).count() >= p.min_points;
    feet.windows(2)
        .map(|w| {
            w[0].iter().zip(&w[1]).any(|(a, b)| {
                if !(contact(a) && contact(b)) {
                    return false;
                }
                let (ca, cb) = (centroid(a), centroid(b));
                plane.tangential([cb[0] - ca[0], cb[1] - ca[1], cb[2] - ca[2]]) > p.threshold
            })
        })
        .collect()
}

/// Percentage of adjacent frame pairs with a skating foot.
pub fn foot_skate(feet: &FootPoints, plane: &GroundPlane, p: &SkateParams) -> f64 {
    if feet.len() < 2 {
        return 0.0;
    }
    let flags = skate_flags(feet, plane, p);
    100.0 * flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64
}

/// Aggregate metrics of one prediction.
#[derive(Clone, Debug, Default, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MetricReport {
    pub mpjpe_g: Option<f64>,
    pub mpjpe: Option<f64>,
    pub mpjpe_pa: Option<f64>,
    pub mpjpe_2d: Option<f64>,
    pub tv_acc: f64,
    pub foot_skate: f64,
}

impl MetricReport {
    /// `(name, value)` rows with missing comparisons omitted.
    pub fn rows(&self) -> Vec<(&'static str, f64)> {
        [
            ("mpjpe_g_mm", self.mpjpe_g),
            ("mpjpe_mm", self.mpjpe),
            ("mpjpe_pa_mm", self.mpjpe_pa),
            ("mpjpe_2d_px", self.mpjpe_2d),
            ("tv_acc_mm_per_frame2", Some(self.tv_acc)),
            ("foot_skate_pct", Some(self.foot_skate)),
        ]
        .into_iter()
        .filter_map(|(n, v)| v.map(|v| (n, v)))
        .collect()
    }
}

/// Per-frame series behind a [`MetricReport`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PerFrameMetrics {
    pub mpjpe_g: Vec<f64>,
    pub mpjpe: Vec<f64>,
    pub mpjpe_pa: Vec<f64>,
    pub mpjpe_2d: Vec<f64>,
    pub tv_acc: Vec<f64>,
    /// 1 where the transition into the frame skates, 0 otherwise; empty for frame 0.
    pub skate: Vec<f64>,
}

/// Metrics of `pred` against `target`, both trajectories of `body`. Keypoint 0
/// is the root for MPJPE. The 2D error is omitted when either side lacks
/// keypoints; acceleration variation is 0 for fewer than 4 frames.
pub fn compare(
    body: &BodySpec,
    pred: &ReferenceTrajectory,
    target: &ReferenceTrajectory,
    skate: &SkateParams,
) -> Result<(MetricReport, PerFrameMetrics)> {
    if pred.len() != target.len() {
        return Err(Error::InvalidInput(format!("{} predicted frames for {} target frames", pred.len(), target.len())));
    }
    let qs = |r: &ReferenceTrajectory| r.frames.iter().map(|f| frame_to_q(body, f)).collect::<Vec<_>>();
    let (pq, tq) = (qs(pred), qs(target));
    let pj = JointTrajectory3D::from_configurations(body, pred.fps, &pq);
    let tj = JointTrajectory3D::from_configurations(body, target.fps, &tq);
    let mut per = PerFrameMetrics {
        mpjpe_g: mpjpe_g_per_frame(&pj, &tj)?,
        mpjpe: mpjpe_per_frame(&pj, &tj, 0)?,
        mpjpe_pa: mpjpe_pa_per_frame(&pj, &tj)?,
        ..PerFrameMetrics::default()
    };
    let kp = |r: &ReferenceTrajectory| r.frames.iter().map(|f| f.keypoints.clone()).collect::<Vec<_>>();
    let (pk, tk) = (kp(pred), kp(target));
    let has_2d = pk.iter().chain(&tk).all(|k| !k.is_empty());
    if has_2d {
        per.mpjpe_2d = mpjpe_2d_per_frame(&pk, &tk)?;
    }
    if pj.len() >= 4 {
        per.tv_acc = total_variation_acc_per_frame(&pj)?;
    }
    let flags = skate_flags(&foot_points(body, &pq), &GroundPlane::default(), skate);
    per.skate = flags.iter().map(|&f| if f { 1.0 } else { 0.0 }).collect();
    let report = MetricReport {
        mpjpe_g: Some(mean(&per.mpjpe_g)),
        mpjpe: Some(mean(&per.mpjpe)),
        mpjpe_pa: Some(mean(&per.mpjpe_pa)),
        mpjpe_2d: has_2d.then(|| mean(&per.mpjpe_2d)),
        tv_acc: if per.tv_acc.is_empty() { 0.0 } else { mean(&per.tv_acc) },
        foot_skate: if flags.is_empty() { 0.0 } else { 100.0 * mean(&per.skate) },
    };
    Ok((report, per))
}
