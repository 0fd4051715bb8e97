//! The physical body model: links made of capsules, joints, limits, masses.

mod humanoid;
mod inertia;

pub use humanoid::{build_humanoid, load_body_file, parse_body_spec, Anthropometry, Segment, DEFAULT_BODY_TOML};
pub use inertia::{capsule_inertia, capsule_volume};

use crate::error::{Error, Result};
use crate::mathcore::{Mat3, SpatialInertia, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum JointKind {
    /// 6-DoF base: world position plus orientation quaternion.
    Floating,
    /// Welded to the world (test rigs).
    Fixed,
    /// Ball joint parameterized by a quaternion.
    Spherical,
    /// Hinge about a unit axis in the parent (and child) joint frame.
    Revolute(Vec3<f64>),
}

impl JointKind {
    pub fn nq(&self) -> usize {
        match self {
            JointKind::Floating => 7,
            JointKind::Fixed => 0,
            JointKind::Spherical => 4,
            JointKind::Revolute(_) => 1,
        }
    }

    pub fn nv(&self) -> usize {
        match self {
            JointKind::Floating => 6,
            JointKind::Fixed => 0,
            JointKind::Spherical => 3,
            JointKind::Revolute(_) => 1,
        }
    }

    pub fn is_actuated(&self) -> bool {
        matches!(self, JointKind::Spherical | JointKind::Revolute(_))
    }
}

#[derive(Clone, Debug)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Joint origin in the parent link frame (the world for the root).
    pub offset: Vec3<f64>,
    /// Per-DoF limits in radians; exponential coordinates for spherical joints.
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// A capsule: the set of points within `radius` of the segment `a`–`b` (link frame).
#[derive(Clone, Copy, Debug)]
pub struct Capsule {
    pub link: usize,
    pub a: Vec3<f64>,
    pub b: Vec3<f64>,
    pub radius: f64,
}

impl Capsule {
    pub fn half_length(&self) -> f64 {
        (self.b - self.a).norm() / 2.0
    }

    pub fn center(&self) -> Vec3<f64> {
        (self.a + self.b).scale(0.5)
    }

    /// Rotation taking capsule-local axes (axis along z) to link axes.
    pub fn frame(&self) -> Mat3<f64> {
        let d = self.b - self.a;
        if d.norm() < 1e-12 {
            return Mat3::identity();
        }
        let z = d.normalized();
        let helper = if z.x.abs() < 0.9 { Vec3::c(1.0, 0.0, 0.0) } else { Vec3::c(0.0, 1.0, 0.0) };
        let x = helper.cross(&z).normalized();
        let y = z.cross(&x);
        Mat3::from_rows([x.x, y.x, z.x], [x.y, y.y, z.y], [x.z, y.z, z.z])
    }

    pub fn volume(&self) -> f64 {
        capsule_volume(self.radius, self.half_length())
    }

    /// Inertia of this capsule with the given mass, expressed in the link frame.
    pub fn link_inertia(&self, mass: f64) -> SpatialInertia {
        let local = capsule_inertia(mass, self.radius, self.half_length());
        let r = self.frame();
        let i = r.mul(&local.inertia).mul(&r.transpose());
        SpatialInertia::new(mass, self.center(), i)
    }
}

#[derive(Clone, Debug)]
pub struct Link {
    pub name: String,
    pub parent: Option<usize>,
    pub joint: Joint,
    pub inertia: SpatialInertia,
    /// First entry of this link's coordinates in q.
    pub q_index: usize,
    /// First entry of this link's velocities in q̇.
    pub v_index: usize,
    /// First entry of this link's DoFs in the actuated-parameter layout, if actuated.
    pub a_index: Option<usize>,
}

#[derive(Clone, Debug)]
pub struct Keypoint {
    pub name: String,
    pub link: usize,
    pub offset: Vec3<f64>,
}

/// An articulated body: links in topological order (parents before children).
#[derive(Clone, Debug)]
pub struct BodySpec {
    pub links: Vec<Link>,
    pub capsules: Vec<Capsule>,
    pub keypoints: Vec<Keypoint>,
    /// Reflected rotor inertia added to every actuated DoF (kg·m²).
    pub armature: f64,
    /// Links whose sole points define foot contact for metrics.
    pub feet: Vec<usize>,
    nq: usize,
    nv: usize,
    na: usize,
}

impl BodySpec {
    pub fn nq(&self) -> usize {
        self.nq
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    /// Number of actuated DoFs (rotation-vector / angle parameters).
    pub fn na(&self) -> usize {
        self.na
    }

    pub fn n_links(&self) -> usize {
        self.links.len()
    }

    pub fn n_actuated_joints(&self) -> usize {
        self.links.iter().filter(|l| l.joint.kind.is_actuated()).count()
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.inertia.mass).sum()
    }

    pub fn link_id(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn joint_id(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.joint.name == name)
    }

    pub fn keypoint_id(&self, name: &str) -> Option<usize> {
        self.keypoints.iter().position(|k| k.name == name)
    }

    pub fn is_floating(&self) -> bool {
        matches!(self.links[0].joint.kind, JointKind::Floating)
    }

    /// Names of the actuated joints in layout order.
    pub fn actuated_joint_names(&self) -> Vec<String> {
        self.links
            .iter()
            .filter(|l| l.joint.kind.is_actuated())
            .map(|l| l.joint.name.clone())
            .collect()
    }

    /// Per-DoF limits of the actuated parameters, in layout order.
    pub fn actuated_limits(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = Vec::with_capacity(self.na);
        let mut hi = Vec::with_capacity(self.na);
        for l in self.links.iter().filter(|l| l.joint.kind.is_actuated()) {
            lo.extend_from_slice(&l.joint.lower);
            hi.extend_from_slice(&l.joint.upper);
        }
        (lo, hi)
    }

    /// Neutral configuration: identity rotations, zero angles, root at `root_pos`.
    pub fn neutral_q(&self, root_pos: Vec3<f64>) -> Vec<f64> {
        let mut q = vec![0.0; self.nq];
        for l in &self.links {
            let i = l.q_index;
            match l.joint.kind {
                JointKind::Floating => {
                    q[i] = root_pos.x;
                    q[i + 1] = root_pos.y;
                    q[i + 2] = root_pos.z;
                    q[i + 3] = 1.0;
                }
                JointKind::Spherical => q[i] = 1.0,
                _ => {}
            }
        }
        q
    }

    /// Points on the underside of a link's capsules (link frame), used as foot sole samples.
    pub fn sole_points(&self, link: usize, per_capsule: usize) -> Vec<Vec3<f64>> {
        let mut pts = Vec::new();
        for c in self.capsules.iter().filter(|c| c.link == link) {
            for k in 0..per_capsule {
                let t = if per_capsule == 1 { 0.5 } else { k as f64 / (per_capsule - 1) as f64 };
                let p = c.a.scale(1.0 - t) + c.b.scale(t);
                pts.push(p - Vec3::c(0.0, c.radius, 0.0));
            }
        }
        pts
    }

    /// Checks tree structure, mass properties and limits.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.links.is_empty() {
            problems.push("body has no links".to_string());
        }
        for (i, l) in self.links.iter().enumerate() {
            match l.parent {
                None if i != 0 => problems.push(format!("link {} has no parent", l.name)),
                Some(p) if p >= i => problems.push(format!("link {} is not after its parent", l.name)),
                _ => {}
            }
            if !l.inertia.is_physical(1e-9) {
                problems.push(format!("link {} has non-physical inertia", l.name));
            }
            let n = if l.joint.kind.is_actuated() { l.joint.kind.nv() } else { 0 };
            if l.joint.lower.len() != n || l.joint.upper.len() != n {
                problems.push(format!("joint {} limits must have {} entries", l.joint.name, n));
            }
            for (k, (lo, hi)) in l.joint.lower.iter().zip(&l.joint.upper).enumerate() {
                if lo > hi {
                    problems.push(format!("joint {} dof {}: lower {} > upper {}", l.joint.name, k, lo, hi));
                }
            }
        }
        for c in &self.capsules {
            if !(c.radius > 0.0) || c.link >= self.links.len() {
                problems.push(format!("capsule on link {} is invalid", c.link));
            }
        }
        for k in &self.keypoints {
            if k.link >= self.links.len() {
                problems.push(format!("keypoint {} references a missing link", k.name));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidBody(problems.join("; ")))
        }
    }
}

/// Incremental construction of a [`BodySpec`].
#[derive(Default)]
pub struct BodyBuilder {
    links: Vec<Link>,
    capsules: Vec<Capsule>,
    keypoints: Vec<Keypoint>,
    armature: f64,
    feet: Vec<usize>,
}

impl BodyBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn armature(mut self, a: f64) -> Self {
        self.armature = a;
        self
    }

    /// Adds a link; returns its id. Limits default to unbounded.
    pub fn link(
        &mut self,
        name: &str,
        parent: Option<usize>,
        joint_name: &str,
        kind: JointKind,
        offset: Vec3<f64>,
        inertia: SpatialInertia,
    ) -> usize {
        let n = if kind.is_actuated() { kind.nv() } else { 0 };
        self.links.push(Link {
            name: name.into(),
            parent,
            joint: Joint {
                name: joint_name.into(),
                kind,
                offset,
                lower: vec![f64::NEG_INFINITY; n],
                upper: vec![f64::INFINITY; n],
            },
            inertia,
            q_index: 0,
            v_index: 0,
            a_index: None,
        });
        self.links.len() - 1
    }

    pub fn limits(&mut self, link: usize, lower: Vec<f64>, upper: Vec<f64>) {
        self.links[link].joint.lower = lower;
        self.links[link].joint.upper = upper;
    }

    pub fn capsule(&mut self, link: usize, a: Vec3<f64>, b: Vec3<f64>, radius: f64) {
        self.capsules.push(Capsule { link, a, b, radius });
    }

    pub fn keypoint(&mut self, name: &str, link: usize, offset: Vec3<f64>) {
        self.keypoints.push(Keypoint {
            name: name.into(),
            link,
            offset,
        });
    }

    pub fn feet(&mut self, feet: Vec<usize>) {
        self.feet = feet;
    }

    pub fn set_inertia(&mut self, link: usize, inertia: SpatialInertia) {
        self.links[link].inertia = inertia;
    }

    pub fn build(self) -> Result<BodySpec> {
        let BodyBuilder {
            mut links,
            mut capsules,
            keypoints,
            armature,
            feet,
        } = self;
        let (mut nq, mut nv, mut na) = (0, 0, 0);
        for l in links.iter_mut() {
            l.q_index = nq;
            l.v_index = nv;
            nq += l.joint.kind.nq();
            nv += l.joint.kind.nv();
            if l.joint.kind.is_actuated() {
                l.a_index = Some(na);
                na += l.joint.kind.nv();
            }
        }
        // Stable ordering by link keeps contact candidates deterministic.
        capsules.sort_by_key(|c| c.link);
        let body = BodySpec {
            links,
            capsules,
            keypoints,
            armature,
            feet,
            nq,
            nv,
            na,
        };
        body.validate()?;
        Ok(body)
    }
}
