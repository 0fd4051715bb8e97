use crate::body::{BodySpec, JointKind};
use crate::mathcore::{Mat3, Quat, Real, SVec, Vec3, Xform};

/// Motion subspace columns of one joint in the child frame.
#[derive(Clone, Copy, Debug)]
pub struct MotionCols<S> {
    pub cols: [SVec<S>; 6],
    pub n: usize,
}

impl<S: Real> MotionCols<S> {
    fn empty() -> Self {
        MotionCols {
            cols: [SVec::zero(); 6],
            n: 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &SVec<S>> {
        self.cols[..self.n].iter()
    }

    /// `S · q̇_joint`
    pub fn mul(&self, qd: &[S]) -> SVec<S> {
        let mut r = SVec::zero();
        for (c, &x) in self.cols[..self.n].iter().zip(qd) {
            r += c.scale(x);
        }
        r
    }
}

/// Per-link frames and velocities for one configuration.
#[derive(Clone, Debug)]
pub struct Kinematics<S> {
    /// `i_X_parent` (parent is the world for the root).
    pub x_parent: Vec<Xform<S>>,
    /// `i_X_world`.
    pub x_world: Vec<Xform<S>>,
    pub s: Vec<MotionCols<S>>,
    /// Body-frame spatial velocity of each link.
    pub v: Vec<SVec<S>>,
    /// Velocity-product acceleration `c_J + v × S q̇` of each link.
    pub c: Vec<SVec<S>>,
}

impl<S: Real> Kinematics<S> {
    /// Rotation of link `i` from link to world coordinates.
    pub fn rotation(&self, i: usize) -> Mat3<S> {
        self.x_world[i].e.transpose()
    }

    pub fn position(&self, i: usize) -> Vec3<S> {
        self.x_world[i].r
    }

    pub fn point_world(&self, i: usize, local: &Vec3<S>) -> Vec3<S> {
        self.x_world[i].point_to_a(local)
    }

    /// World-frame linear velocity of a point fixed to link `i`.
    pub fn point_velocity(&self, i: usize, local: &Vec3<S>) -> Vec3<S> {
        let v = &self.v[i];
        let body = v.lin + v.ang.cross(local);
        self.x_world[i].e.tmul_vec(&body)
    }

    /// Motion subspace columns of link `i` expressed in world coordinates.
    pub fn world_cols(&self, i: usize) -> MotionCols<S> {
        let mut out = self.s[i];
        for k in 0..out.n {
            out.cols[k] = self.x_world[i].inv_apply_motion(&self.s[i].cols[k]);
        }
        out
    }
}

pub(crate) fn quat_at<S: Real>(q: &[S], i: usize) -> Quat<S> {
    Quat::new(q[i], q[i + 1], q[i + 2], q[i + 3])
}

/// Forward kinematics: link frames, motion subspaces and spatial velocities.
pub fn forward_kinematics<S: Real>(body: &BodySpec, q: &[S], qd: &[S]) -> Kinematics<S> {
    let n = body.n_links();
    let mut k = Kinematics {
        x_parent: Vec::with_capacity(n),
        x_world: Vec::with_capacity(n),
        s: Vec::with_capacity(n),
        v: Vec::with_capacity(n),
        c: Vec::with_capacity(n),
    };
    for (i, l) in body.links.iter().enumerate() {
        let qi = l.q_index;
        let vi = l.v_index;
        let off = Vec3::from_f64(l.joint.offset);
        let mut s = MotionCols::empty();
        let mut cj = SVec::zero();
        let xj = match l.joint.kind {
            JointKind::Floating => {
                let pos = Vec3::new(q[qi], q[qi + 1], q[qi + 2]);
                let rot = quat_at(q, qi + 3).to_mat();
                // q̇ = [world linear velocity, body angular velocity]
                let rt = rot.transpose();
                for a in 0..3 {
                    let mut e = Vec3::zero();
                    match a {
                        0 => e.x = S::one(),
                        1 => e.y = S::one(),
                        _ => e.z = S::one(),
                    }
                    s.cols[a] = SVec::new(Vec3::zero(), rt.mul_vec(&e));
                    s.cols[a + 3] = SVec::new(e, Vec3::zero());
                }
                s.n = 6;
                let vw = Vec3::new(qd[vi], qd[vi + 1], qd[vi + 2]);
                let w = Vec3::new(qd[vi + 3], qd[vi + 4], qd[vi + 5]);
                cj = SVec::new(Vec3::zero(), -w.cross(&rt.mul_vec(&vw)));
                Xform::from_pose(&rot, pos + off)
            }
            JointKind::Fixed => Xform::translation(off),
            JointKind::Spherical => {
                for a in 0..3 {
                    let mut e = Vec3::zero();
                    match a {
                        0 => e.x = S::one(),
                        1 => e.y = S::one(),
                        _ => e.z = S::one(),
                    }
                    s.cols[a] = SVec::new(e, Vec3::zero());
                }
                s.n = 3;
                let rot = quat_at(q, qi).to_mat();
                Xform::from_pose(&rot, off)
            }
            JointKind::Revolute(axis) => {
                let ax = Vec3::from_f64(axis);
                s.cols[0] = SVec::new(ax, Vec3::zero());
                s.n = 1;
                let rot = Quat::from_axis_angle(&ax, q[qi]).to_mat();
                Xform::from_pose(&rot, off)
            }
        };
        let vj = s.mul(&qd[vi..vi + s.n]);
        let (xw, v, c) = match l.parent {
            None => (xj, vj, cj),
            Some(p) => {
                let xw = xj.compose(&k.x_world[p]);
                let v = xj.apply_motion(&k.v[p]) + vj;
                let c = cj + v.cross_motion(&vj);
                (xw, v, c)
            }
        };
        debug_assert!(i == k.x_world.len());
        k.x_parent.push(xj);
        k.x_world.push(xw);
        k.s.push(s);
        k.v.push(v);
        k.c.push(c);
    }
    k
}

/// World positions of every keypoint.
pub fn keypoint_positions<S: Real>(body: &BodySpec, kin: &Kinematics<S>) -> Vec<Vec3<S>> {
    body.keypoints
        .iter()
        .map(|kp| kin.point_world(kp.link, &Vec3::from_f64(kp.offset)))
        .collect()
}

/// Local rotation of each link relative to its parent, as a quaternion
/// (world orientation for the root). Revolute joints become a rotation about their axis.
pub fn joint_quaternions<S: Real>(body: &BodySpec, q: &[S]) -> Vec<Quat<S>> {
    body.links
        .iter()
        .map(|l| match l.joint.kind {
            JointKind::Floating => quat_at(q, l.q_index + 3),
            JointKind::Spherical => quat_at(q, l.q_index),
            JointKind::Revolute(a) => Quat::from_axis_angle(&Vec3::from_f64(a), q[l.q_index]),
            JointKind::Fixed => Quat::identity(),
        })
        .collect()
}

/// Center of mass of the whole body in world coordinates.
pub fn center_of_mass<S: Real>(body: &BodySpec, kin: &Kinematics<S>) -> Vec3<S> {
    let mut acc = Vec3::zero();
    let mut m = 0.0;
    for (i, l) in body.links.iter().enumerate() {
        acc += kin.point_world(i, &Vec3::from_f64(l.inertia.com)).scale(S::cst(l.inertia.mass));
        m += l.inertia.mass;
    }
    acc.scale(S::cst(1.0 / m))
}
