//! Small bodies and random states for tests, benchmarks and examples.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::body::{build_humanoid, Anthropometry, BodyBuilder, BodySpec, JointKind};
use crate::control::{params_from_targets, targets_from_q, ControlTrajectory};
use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::optimizer::RolloutEngine;
use crate::mathcore::{Mat3, Quat, SpatialInertia, Vec3};
use crate::objectives::{q_to_frame, Camera, CameraIntrinsics, ReferenceTrajectory};

/// The default 48-DoF humanoid.
pub fn standard_humanoid() -> BodySpec {
    let a = Anthropometry::default_humanoid();
    build_humanoid(&a, a.total_mass_kg).expect("default humanoid builds")
}

/// Planar pendulum hanging from the world with point masses at the end of each rod.
/// Links hinge about `z`; rods point along `-y` at zero angle.
pub fn point_mass_pendulum(masses: &[f64], lengths: &[f64]) -> BodySpec {
    let mut b = BodyBuilder::new();
    let anchor = b.link("anchor", None, "anchor", JointKind::Fixed, Vec3::ZERO, SpatialInertia::point_mass(1.0, Vec3::ZERO));
    let mut parent = anchor;
    let mut offset = Vec3::ZERO;
    for (k, (&m, &l)) in masses.iter().zip(lengths).enumerate() {
        let id = b.link(
            &format!("rod{k}"),
            Some(parent),
            &format!("hinge{k}"),
            JointKind::Revolute(Vec3::c(0.0, 0.0, 1.0)),
            offset,
            SpatialInertia::point_mass(m, Vec3::c(0.0, -l, 0.0)),
        );
        parent = id;
        offset = Vec3::c(0.0, -l, 0.0);
    }
    b.build().expect("pendulum builds")
}

/// A single free rigid capsule (floating base) of the given mass.
pub fn free_capsule(mass: f64, radius: f64, half_length: f64) -> BodySpec {
    let mut b = BodyBuilder::new();
    let a = Vec3::c(-half_length, 0.0, 0.0);
    let c = Vec3::c(half_length, 0.0, 0.0);
    let id = b.link("body", None, "root", JointKind::Floating, Vec3::ZERO, SpatialInertia::point_mass(mass, Vec3::ZERO));
    b.capsule(id, a, c, radius);
    let cap = crate::body::Capsule { link: id, a, b: c, radius };
    b.set_inertia(id, cap.link_inertia(mass));
    b.build().expect("capsule builds")
}

/// Chain of `n` capsules on spherical joints under a floating base.
pub fn floating_chain(n: usize) -> BodySpec {
    let mut b = BodyBuilder::new().armature(0.01);
    let mut parent = None;
    for k in 0..n {
        let kind = if k == 0 { JointKind::Floating } else { JointKind::Spherical };
        let off = if k == 0 { Vec3::ZERO } else { Vec3::c(0.0, -0.3, 0.0) };
        let cap = crate::body::Capsule {
            link: k,
            a: Vec3::c(0.0, -0.02, 0.01),
            b: Vec3::c(0.0, -0.28, -0.01),
            radius: 0.04,
        };
        let id = b.link(&format!("l{k}"), parent, &format!("j{k}"), kind, off, cap.link_inertia(1.0 + k as f64 * 0.3));
        b.capsule(id, cap.a, cap.b, cap.radius);
        parent = Some(id);
    }
    b.build().expect("chain builds")
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Random unit quaternion with rotation angle below `max_angle`.
pub fn random_rotation<R: Rng>(rng: &mut R, max_angle: f64) -> Quat<f64> {
    let axis = Vec3::c(normal(rng), normal(rng), normal(rng)).normalized();
    let ang = rng.random_range(0.0..max_angle);
    Quat::exp(&axis.scale(ang))
}

/// Random configuration and velocity; velocities have standard deviation `vel`.
pub fn random_state<R: Rng>(body: &BodySpec, rng: &mut R, vel: f64) -> (Vec<f64>, Vec<f64>) {
    let mut q = body.neutral_q(Vec3::c(normal(rng) * 0.3, 1.0 + normal(rng) * 0.1, normal(rng) * 0.3));
    for l in &body.links {
        let i = l.q_index;
        match l.joint.kind {
            JointKind::Floating => q[i + 3..i + 7].copy_from_slice(&random_rotation(rng, 3.0).to_array()),
            JointKind::Spherical => q[i..i + 4].copy_from_slice(&random_rotation(rng, 1.2).to_array()),
            JointKind::Revolute(_) => q[i] = rng.random_range(-1.2..1.2),
            JointKind::Fixed => {}
        }
    }
    let qd = (0..body.nv()).map(|_| normal(rng) * vel).collect();
    (q, qd)
}

/// Rotation matrix about the x axis.
pub fn rot_x(a: f64) -> Mat3<f64> {
    Quat::from_axis_angle(&Vec3::c(1.0, 0.0, 0.0), a).to_mat()
}

/// Neutral pose translated so the lowest capsule surface touches `y = 0`.
pub fn standing_q(body: &BodySpec) -> Vec<f64> {
    let q = body.neutral_q(Vec3::ZERO);
    let kin = crate::dynamics::forward_kinematics(body, &q, &vec![0.0; body.nv()]);
    let low = body
        .capsules
        .iter()
        .flat_map(|c| [c.a, c.b].map(|p| kin.point_world(c.link, &p).y - c.radius))
        .fold(f64::INFINITY, f64::min);
    body.neutral_q(Vec3::c(0.0, -low, 0.0))
}

/// Camera 4 m in front of the origin at chest height, looking back along `-z`.
pub fn front_camera() -> Camera {
    Camera {
        intrinsics: CameraIntrinsics { fx: 1000.0, fy: 1000.0, cx: 500.0, cy: 500.0 },
        rotation: [[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]],
        translation: [0.0, 1.0, 4.0],
    }
}

/// Noise-free reference whose frames hold the given poses and their exact projections.
pub fn reference_from_poses(body: &BodySpec, camera: &Camera, fps: f64, poses: &[Vec<f64>]) -> ReferenceTrajectory {
    crate::objectives::rendered_reference(body, camera, fps, poses)
}

/// Stepping-in-place motion: slow lateral weight shift, alternating knee
/// bends and arm swing over a light crouch. Balance comes from a frame-rate
/// capture-point feedback on the ankles and hips, so the resulting targets are
/// still a plain open-loop control trajectory.
#[derive(Clone, Debug)]
pub struct GaitScript {
    pub frames: usize,
    pub fps: f64,
    /// Seconds per full left-right cycle.
    pub period: f64,
    /// Hip roll amplitude, rad.
    pub sway: f64,
    pub knee_lift: f64,
    pub crouch: f64,
    pub arm_swing: f64,
    /// Seconds over which amplitudes fade in.
    pub ramp: f64,
    /// Ankle correction per metre of capture-point error, rad/m.
    pub balance_gain: f64,
    /// Hip roll correction as a multiple of the ankle roll correction.
    pub hip_gain: f64,
}

impl Default for GaitScript {
    fn default() -> Self {
        GaitScript {
            frames: 42,
            fps: 25.0,
            period: 2.0,
            sway: 0.1,
            knee_lift: 0.2,
            crouch: 0.2,
            arm_swing: 0.3,
            ramp: 1.0,
            balance_gain: 1.0,
            hip_gain: 1.0,
        }
    }
}

/// Simulated ground truth together with the controls that produce it.
#[derive(Clone, Debug)]
pub struct ScriptedMotion {
    pub initial_state: SimState<f64>,
    pub controls: ControlTrajectory,
    /// One state per frame, starting with `initial_state`.
    pub frames: Vec<SimState<f64>>,
}

fn set_rotvec(body: &BodySpec, q: &mut [f64], joint: &str, r: Vec3<f64>) {
    let l = &body.links[body.joint_id(joint).expect("humanoid joint")];
    q[l.q_index..l.q_index + 4].copy_from_slice(&Quat::exp(&r).to_array());
}

fn post_rotate(body: &BodySpec, q: &mut [f64], joint: &str, r: Vec3<f64>) {
    let l = &body.links[body.joint_id(joint).expect("humanoid joint")];
    let cur = Quat::from_slice(&q[l.q_index..l.q_index + 4]);
    q[l.q_index..l.q_index + 4].copy_from_slice(&cur.mul(&Quat::exp(&r)).to_array());
}

impl GaitScript {
    fn fade(&self, t: f64) -> f64 {
        (t / self.ramp).min(1.0)
    }

    fn hip_roll(&self, t: f64) -> f64 {
        self.sway * self.fade(t) * (2.0 * std::f64::consts::PI * t / self.period).sin()
    }

    fn pose(&self, body: &BodySpec, base: &[f64], t: f64) -> Vec<f64> {
        let mut q = base.to_vec();
        let a = self.fade(t);
        let w = 2.0 * std::f64::consts::PI * t / self.period;
        let phi = self.hip_roll(t);
        let bend = [self.crouch * a + self.knee_lift * a * w.sin(), self.crouch * a - self.knee_lift * a * w.sin()];
        for (side, k) in ["left", "right"].iter().zip(bend) {
            set_rotvec(body, &mut q, &format!("{side}_hip"), Vec3::c(-0.5 * k, 0.0, phi));
            let knee = &body.links[body.joint_id(&format!("{side}_knee")).expect("humanoid joint")];
            q[knee.q_index] = k;
            set_rotvec(body, &mut q, &format!("{side}_ankle"), Vec3::c(-0.5 * k, 0.0, -phi));
        }
        let arm = self.arm_swing * a * w.cos();
        set_rotvec(body, &mut q, "left_shoulder", Vec3::c(arm, 0.0, 0.0));
        set_rotvec(body, &mut q, "right_shoulder", Vec3::c(-arm, 0.0, 0.0));
        q
    }

    /// Rolls the script forward with `engine`, one frame at a time.
    pub fn simulate(&self, engine: &RolloutEngine) -> Result<ScriptedMotion> {
        let body = engine.body();
        if self.frames < 2 {
            return Err(Error::InvalidConfig("a scripted motion needs at least 2 frames".into()));
        }
        let base = standing_q(body);
        let init = SimState::at_rest(base.clone(), body.nv());
        let mass = body.total_mass();
        let rest_z = {
            let kin = crate::dynamics::forward_kinematics(body, &init.q, &init.qd);
            crate::dynamics::center_of_mass(body, &kin).z
        };
        let mut frames = vec![init.clone()];
        let mut targets = Vec::with_capacity(self.frames - 1);
        for k in 0..self.frames - 1 {
            let t = (k + 1) as f64 / self.fps;
            let st = frames.last().expect("nonempty");
            let kin = crate::dynamics::forward_kinematics(body, &st.q, &st.qd);
            let mut c = Vec3::ZERO;
            let mut v = Vec3::ZERO;
            for (i, l) in body.links.iter().enumerate() {
                let f = l.inertia.mass / mass;
                c = c + kin.point_world(i, &l.inertia.com).scale(f);
                v = v + kin.point_velocity(i, &l.inertia.com).scale(f);
            }
            let soles: Vec<Vec3<f64>> = body
                .feet
                .iter()
                .flat_map(|&ft| body.sole_points(ft, 2).into_iter().map(move |p| (ft, p)))
                .map(|(ft, p)| kin.point_world(ft, &p))
                .collect();
            let support_x = soles.iter().map(|p| p.x).sum::<f64>() / soles.len() as f64;
            let w0 = (9.81 / c.y).sqrt();
            // Nominal COM shift from the hip roll is about one leg length per radian.
            let ex = c.x + v.x / w0 - support_x + 0.9 * self.hip_roll(t);
            let ez = c.z + v.z / w0 - rest_z;
            let pitch = self.balance_gain * ez;
            let roll = -self.balance_gain * ex;
            let mut q = self.pose(body, &base, t);
            for side in ["left", "right"] {
                post_rotate(body, &mut q, &format!("{side}_ankle"), Vec3::c(pitch, 0.0, roll));
                post_rotate(body, &mut q, &format!("{side}_hip"), Vec3::c(0.0, 0.0, -self.hip_gain * roll));
            }
            let target = targets_from_q(body, &q);
            let next = engine.simulate(st, &[params_from_targets(body, &target)], &[[0.0; 6]])?;
            frames.push(next.last().expect("one frame").clone());
            targets.push(target);
        }
        Ok(ScriptedMotion {
            initial_state: init,
            controls: ControlTrajectory { fps: self.fps, targets, residual: Vec::new() },
            frames,
        })
    }
}

fn lowest_sole_point(body: &BodySpec, q: &[f64]) -> f64 {
    let kin = crate::dynamics::forward_kinematics(body, q, &vec![0.0; body.nv()]);
    body.feet
        .iter()
        .flat_map(|&ft| body.sole_points(ft, 5).into_iter().map(move |p| (ft, p)))
        .map(|(ft, p)| kin.point_world(ft, &p).y)
        .fold(f64::INFINITY, f64::min)
}

/// Noise model turning ground truth into a kinematic-style estimate.
#[derive(Clone, Debug)]
pub struct Corruption {
    /// Per-axis root position noise, m.
    pub root_sigma: f64,
    /// Per-axis joint rotation noise, degrees.
    pub joint_sigma_deg: f64,
    /// Horizontal root glide per frame, m. The glide direction flips every
    /// `skate_half_period` frames, so feet slide back and forth while planted.
    pub skate_speed: f64,
    pub skate_half_period: usize,
    /// 2D keypoint noise, px.
    pub keypoint_sigma_px: f64,
    /// Shift every corrupted frame vertically so its lowest sole sample
    /// touches the ground, as ground-aligned kinematic estimates do.
    pub snap_to_ground: bool,
}

impl Default for Corruption {
    fn default() -> Self {
        Corruption { root_sigma: 0.02, joint_sigma_deg: 3.0, skate_speed: 0.025, skate_half_period: 3, keypoint_sigma_px: 2.0, snap_to_ground: true }
    }
}

impl Corruption {
    /// Corrupted 3D estimate paired with noisy projections of the true keypoints.
    pub fn apply(&self, body: &BodySpec, camera: &Camera, fps: f64, truth: &[Vec<f64>], seed: u64) -> ReferenceTrajectory {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sj = self.joint_sigma_deg.to_radians();
        let zero = vec![0.0; body.nv()];
        let mut glide = 0.0;
        let frames = truth
            .iter()
            .enumerate()
            .map(|(f, q_true)| {
                if f > 0 && self.skate_half_period > 0 {
                    let dir = if ((f - 1) / self.skate_half_period) % 2 == 0 { 1.0 } else { -1.0 };
                    glide += dir * self.skate_speed;
                }
                let mut q = q_true.clone();
                for l in &body.links {
                    let i = l.q_index;
                    match l.joint.kind {
                        JointKind::Floating => {
                            q[i] += self.root_sigma * normal(&mut rng) + glide;
                            q[i + 1] += self.root_sigma * normal(&mut rng);
                            q[i + 2] += self.root_sigma * normal(&mut rng);
                            let d = Vec3::c(normal(&mut rng), normal(&mut rng), normal(&mut rng)).scale(sj);
                            let r = Quat::from_slice(&q[i + 3..i + 7]).mul(&Quat::exp(&d));
                            q[i + 3..i + 7].copy_from_slice(&r.to_array());
                        }
                        JointKind::Spherical => {
                            let d = Vec3::c(normal(&mut rng), normal(&mut rng), normal(&mut rng)).scale(sj);
                            let r = Quat::from_slice(&q[i..i + 4]).mul(&Quat::exp(&d));
                            q[i..i + 4].copy_from_slice(&r.to_array());
                        }
                        JointKind::Revolute(_) => q[i] += sj * normal(&mut rng),
                        JointKind::Fixed => {}
                    }
                }
                if self.snap_to_ground {
                    let low = lowest_sole_point(body, &q);
                    q[1] -= low;
                }
                let kin = crate::dynamics::forward_kinematics(body, q_true, &zero);
                let kps = crate::dynamics::keypoint_positions(body, &kin)
                    .iter()
                    .map(|p| {
                        let [u, v] = crate::objectives::project_clamped(&camera.world_to_camera(p), &camera.intrinsics);
                        [u + self.keypoint_sigma_px * normal(&mut rng), v + self.keypoint_sigma_px * normal(&mut rng)]
                    })
                    .collect();
                q_to_frame(body, &q, kps, vec![1.0; body.keypoints.len()])
            })
            .collect();
        ReferenceTrajectory { fps, camera: *camera, frames }
    }
}
