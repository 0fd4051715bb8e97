//! PD actuation from target joint orientations, plus the optional residual root wrench.

use crate::body::{BodySpec, JointKind};
use crate::error::{Error, Result};
use crate::mathcore::{Quat, Real, Vec3};

/// Per-DoF gains over the actuated parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub struct PdGains {
    pub kp: Vec<f64>,
    pub kd: Vec<f64>,
}

impl PdGains {
    pub fn uniform(body: &BodySpec, kp: f64, kd: f64) -> PdGains {
        PdGains {
            kp: vec![kp; body.na()],
            kd: vec![kd; body.na()],
        }
    }

    /// Uniform gains with per-joint overrides `(joint name, kp, kd)`.
    pub fn with_overrides(body: &BodySpec, kp: f64, kd: f64, overrides: &[(String, f64, f64)]) -> Result<PdGains> {
        let mut g = PdGains::uniform(body, kp, kd);
        for (name, p, d) in overrides {
            let id = body
                .joint_id(name)
                .ok_or_else(|| Error::InvalidConfig(format!("gain override for unknown joint {name}")))?;
            let l = &body.links[id];
            let a = l
                .a_index
                .ok_or_else(|| Error::InvalidConfig(format!("joint {name} is not actuated")))?;
            for k in 0..l.joint.kind.nv() {
                g.kp[a + k] = *p;
                g.kd[a + k] = *d;
            }
        }
        g.validate(body)?;
        Ok(g)
    }

    pub fn validate(&self, body: &BodySpec) -> Result<()> {
        if self.kp.len() != body.na() || self.kd.len() != body.na() {
            return Err(Error::InvalidConfig("gain vectors must match actuated DoF".into()));
        }
        if self.kp.iter().chain(&self.kd).any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidConfig("gains must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Length of a joint-target vector: 4 per spherical joint (quaternion), 1 per revolute.
pub fn target_len(body: &BodySpec) -> usize {
    body.links
        .iter()
        .filter(|l| l.joint.kind.is_actuated())
        .map(|l| l.joint.kind.nq())
        .sum()
}

/// Maps optimization parameters (rotation vectors / angles) to joint targets.
pub fn targets_from_params<S: Real>(body: &BodySpec, params: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(target_len(body));
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        let a = l.a_index.unwrap();
        match l.joint.kind {
            JointKind::Spherical => {
                let r = Vec3::new(params[a], params[a + 1], params[a + 2]);
                out.extend_from_slice(&Quat::exp(&r).to_array());
            }
            _ => out.push(params[a]),
        }
    }
    out
}

/// Inverse of [`targets_from_params`].
pub fn params_from_targets(body: &BodySpec, targets: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(body.na());
    let mut i = 0;
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        match l.joint.kind {
            JointKind::Spherical => {
                let q = Quat::new(targets[i], targets[i + 1], targets[i + 2], targets[i + 3]).normalize();
                out.extend_from_slice(&q.log().to_array());
                i += 4;
            }
            _ => {
                out.push(targets[i]);
                i += 1;
            }
        }
    }
    out
}

/// Extracts the actuated joint coordinates of `q` in target layout.
pub fn targets_from_q(body: &BodySpec, q: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(target_len(body));
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        out.extend_from_slice(&q[l.q_index..l.q_index + l.joint.kind.nq()]);
    }
    out
}

/// Joint exponential coordinates (spherical) or angles (revolute) of `q`, actuated layout.
pub fn joint_coordinates<S: Real>(body: &BodySpec, q: &[S]) -> Vec<S> {
    let mut out = Vec::with_capacity(body.na());
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        let i = l.q_index;
        match l.joint.kind {
            JointKind::Spherical => {
                let r = Quat::new(q[i], q[i + 1], q[i + 2], q[i + 3]).log();
                out.extend_from_slice(&r.to_array());
            }
            _ => out.push(q[i]),
        }
    }
    out
}

/// PD torques for joint targets in target layout. Base rows get zero.
///
/// Revolute: `kp (q̂ − q) − kd q̇`. Spherical: `kp log(q⁻¹ q̂) − kd ω`.
pub fn pd_torque<S: Real>(body: &BodySpec, targets: &[S], q: &[S], qd: &[S], gains: &PdGains) -> Vec<S> {
    let mut tau = vec![S::zero(); body.nv()];
    let mut t = 0;
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        let (qi, vi, a) = (l.q_index, l.v_index, l.a_index.unwrap());
        match l.joint.kind {
            JointKind::Spherical => {
                let cur = Quat::new(q[qi], q[qi + 1], q[qi + 2], q[qi + 3]);
                let tgt = Quat::new(targets[t], targets[t + 1], targets[t + 2], targets[t + 3]);
                let err = cur.conj().mul(&tgt).log().to_array();
                for k in 0..3 {
                    tau[vi + k] = err[k] * gains.kp[a + k] - qd[vi + k] * gains.kd[a + k];
                }
                t += 4;
            }
            _ => {
                tau[vi] = (targets[t] - q[qi]) * gains.kp[a] - qd[vi] * gains.kd[a];
                t += 1;
            }
        }
    }
    tau
}

/// Componentwise clamp of a raw residual wrench to `[-cap, cap]`.
pub fn residual_wrench<S: Real>(raw: &[S], cap: f64) -> [S; 6] {
    let c = S::cst(cap);
    let mut out = [S::zero(); 6];
    for k in 0..6 {
        out[k] = if cap == 0.0 { S::zero() } else { raw[k].clamp_to(-c, c) };
    }
    out
}

/// Per-frame joint targets held piecewise constant between frames.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlTrajectory {
    pub fps: f64,
    /// One target vector (target layout) per control frame.
    pub targets: Vec<Vec<f64>>,
    /// Optional per-frame root wrench `[force (world), torque (body)]`.
    pub residual: Vec<[f64; 6]>,
}

impl ControlTrajectory {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Index of the control frame active at `time`, clamped to the valid range.
    pub fn frame_at(&self, time: f64) -> usize {
        let f = (time * self.fps + 1e-9).floor();
        if f <= 0.0 {
            0
        } else {
            (f as usize).min(self.targets.len().saturating_sub(1))
        }
    }

    /// Zero-order hold of the targets.
    pub fn sample_target(&self, time: f64) -> &[f64] {
        &self.targets[self.frame_at(time)]
    }

    pub fn residual_at(&self, frame: usize, cap: f64) -> [f64; 6] {
        match self.residual.get(frame) {
            Some(r) => residual_wrench(r, cap),
            None => [0.0; 6],
        }
    }
}

/// Full generalized force: PD on the joints and the clamped residual on the base.
pub fn actuation<S: Real>(
    body: &BodySpec,
    targets: &[S],
    residual: &[S; 6],
    q: &[S],
    qd: &[S],
    gains: &PdGains,
) -> Vec<S> {
    let mut tau = pd_torque(body, targets, q, qd, gains);
    if body.is_floating() {
        let v0 = body.links[0].v_index;
        tau[v0..v0 + 6].copy_from_slice(residual);
    }
    tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::{random_state, standard_humanoid};
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn knee_setup() -> (BodySpec, usize, usize) {
        let body = standard_humanoid();
        let id = body.joint_id("left_knee").unwrap();
        let l = &body.links[id];
        (body.clone(), l.q_index, l.v_index)
    }

    fn target_index(body: &BodySpec, joint: usize) -> usize {
        body.links[..joint]
            .iter()
            .filter(|l| l.joint.kind.is_actuated())
            .map(|l| l.joint.kind.nq())
            .sum()
    }

    #[test]
    fn zero_error_zero_torque() {
        let body = standard_humanoid();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let (q, _) = random_state(&body, &mut r, 0.0);
        let qd = vec![0.0; body.nv()];
        let t = targets_from_q(&body, &q);
        let g = PdGains::uniform(&body, 200.0, 5.0);
        let tau = pd_torque(&body, &t, &q, &qd, &g);
        assert!(tau.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn revolute_position_error() {
        let (body, qi, vi) = knee_setup();
        let mut q = body.neutral_q(Vec3::ZERO);
        q[qi] = 0.3;
        let mut t = targets_from_q(&body, &q);
        let ti = target_index(&body, body.joint_id("left_knee").unwrap());
        t[ti] = 0.4;
        let g = PdGains::uniform(&body, 200.0, 5.0);
        let tau = pd_torque(&body, &t, &q, &vec![0.0; body.nv()], &g);
        assert!((tau[vi] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn damping_only() {
        let (body, _, vi) = knee_setup();
        let q = body.neutral_q(Vec3::ZERO);
        let t = targets_from_q(&body, &q);
        let mut qd = vec![0.0; body.nv()];
        qd[vi] = 2.0;
        let g = PdGains::uniform(&body, 200.0, 5.0);
        let tau = pd_torque(&body, &t, &q, &qd, &g);
        assert!((tau[vi] + 10.0).abs() < 1e-12);
    }

    #[test]
    fn spherical_error_is_log_map() {
        let body = standard_humanoid();
        let id = body.joint_id("left_hip").unwrap();
        let l = &body.links[id];
        let q = body.neutral_q(Vec3::ZERO);
        let mut t = targets_from_q(&body, &q);
        let ti = target_index(&body, id);
        let tq = Quat::exp(&Vec3::c(0.1, -0.2, 0.05));
        t[ti..ti + 4].copy_from_slice(&tq.to_array());
        let g = PdGains::uniform(&body, 100.0, 0.0);
        let tau = pd_torque(&body, &t, &q, &vec![0.0; body.nv()], &g);
        let e = [10.0, -20.0, 5.0];
        for k in 0..3 {
            assert!((tau[l.v_index + k] - e[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn base_rows_zero_without_residual() {
        let body = standard_humanoid();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let (q, qd) = random_state(&body, &mut r, 1.0);
        let t = targets_from_q(&body, &body.neutral_q(Vec3::ZERO));
        let g = PdGains::uniform(&body, 200.0, 5.0);
        let raw = [80.0, -3.0, 0.0, 1.0, 2.0, 3.0];
        let tau = actuation(&body, &t, &residual_wrench(&raw, 0.0), &q, &qd, &g);
        assert!(tau[..6].iter().all(|x| *x == 0.0));
        let tau = actuation(&body, &t, &residual_wrench(&raw, 50.0), &q, &qd, &g);
        assert_eq!(tau[0], 50.0);
        assert_eq!(tau[1], -3.0);
    }

    #[test]
    fn residual_clamp() {
        assert_eq!(residual_wrench(&[80.0, 0.0, 0.0, 0.0, 0.0, 0.0], 50.0), [50.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(residual_wrench(&[-80.0, 10.0, 0.0, 0.0, 0.0, 0.0], 0.0), [0.0; 6]);
    }

    #[test]
    fn zero_order_hold() {
        let traj = ControlTrajectory {
            fps: 25.0,
            targets: vec![vec![0.0], vec![1.0], vec![2.0]],
            residual: vec![],
        };
        assert_eq!(traj.sample_target(0.0), &[0.0]);
        assert_eq!(traj.sample_target(0.02), &[0.0]);
        assert_eq!(traj.sample_target(0.04), &[1.0]);
        assert_eq!(traj.sample_target(0.079), &[1.0]);
        assert_eq!(traj.sample_target(10.0), &[2.0]);
        // exactly on a boundary of a 1 kHz step grid
        assert_eq!(traj.frame_at(40.0 * 1e-3), 1);
    }

    #[test]
    fn params_roundtrip() {
        let body = standard_humanoid();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (q, _) = random_state(&body, &mut r, 0.0);
        let t = targets_from_q(&body, &q);
        let p = params_from_targets(&body, &t);
        assert_eq!(p.len(), 42);
        let t2 = targets_from_params(&body, &p);
        for (chunk, (a, b)) in t.iter().zip(&t2).enumerate() {
            let _ = chunk;
            assert!((a - b).abs() < 1e-12 || (a + b).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn revolute_torque_is_linear_in_error(e1 in -1.0f64..1.0, e2 in -1.0f64..1.0, v in -3.0f64..3.0) {
            let (body, qi, vi) = knee_setup();
            let ti = target_index(&body, body.joint_id("left_knee").unwrap());
            let q = body.neutral_q(Vec3::ZERO);
            let mut qd = vec![0.0; body.nv()];
            qd[vi] = v;
            let g = PdGains::uniform(&body, 200.0, 5.0);
            let tau_at = |e: f64| {
                let mut t = targets_from_q(&body, &q);
                t[ti] = q[qi] + e;
                pd_torque(&body, &t, &q, &qd, &g)[vi]
            };
            let lhs = tau_at(e1 + e2) - tau_at(0.0);
            let rhs = (tau_at(e1) - tau_at(0.0)) + (tau_at(e2) - tau_at(0.0));
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
