//! One simulation step: kinematics, unconstrained dynamics, contact impulses,
//! semi-implicit Euler integration. Everything is generic over [`Real`] so the
//! same code runs on `f64` and on recorded [`Var`](crate::mathcore::Var)s.

mod algorithms;
mod contact;
mod kinematics;

pub use algorithms::{aba_forward_dynamics, bias_forces, crba_mass_matrix, dof_parents, inverse_dynamics, LtlFactor};
pub use contact::{
    box_sdf, contact_candidates, contact_jacobian, detect_contacts, solve_contact_lcp, tangents, BoxObstacle,
    CandidateSource, ContactPoint, ContactRows, SolverDiagnostics, WorldGeometry,
};
pub use kinematics::{center_of_mass, forward_kinematics, joint_quaternions, keypoint_positions, Kinematics, MotionCols};

use crate::body::{BodySpec, JointKind};
use crate::error::{Error, Result};
use crate::mathcore::{Mat6, Quat, Real, SVec, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForwardDynamics {
    /// Articulated-body algorithm.
    Aba,
    /// Dense mass matrix and sparse factorization; same result, used for cross-checks.
    Crba,
}

#[derive(Clone, Debug)]
pub struct PhysicsConfig {
    pub dt: f64,
    pub gravity: Vec3<f64>,
    /// Projected Gauss-Seidel sweeps per step.
    pub lcp_iterations: usize,
    /// Penetration correction: target separating velocity is `baumgarte · depth / dt`.
    pub baumgarte: f64,
    /// Upper bound on the correction velocity (m/s).
    pub baumgarte_cap: f64,
    /// Restrict contact candidates to these links (all capsules when `None`).
    pub contact_links: Option<Vec<usize>>,
    pub dynamics: ForwardDynamics,
    /// Re-solve the floating-base velocity after each step so the body's world
    /// spatial momentum changes exactly by the applied external impulses.
    pub momentum_correction: bool,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        PhysicsConfig {
            dt: 1e-3,
            gravity: Vec3::c(0.0, -9.81, 0.0),
            lcp_iterations: 1,
            baumgarte: 0.1,
            baumgarte_cap: 1.0,
            contact_links: None,
            dynamics: ForwardDynamics::Aba,
            momentum_correction: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimState<S> {
    pub q: Vec<S>,
    pub qd: Vec<S>,
}

impl<S: Real> SimState<S> {
    pub fn val(&self) -> SimState<f64> {
        SimState {
            q: self.q.iter().map(|x| x.val()).collect(),
            qd: self.qd.iter().map(|x| x.val()).collect(),
        }
    }
}

impl SimState<f64> {
    pub fn at_rest(q: Vec<f64>, nv: usize) -> Self {
        SimState { q, qd: vec![0.0; nv] }
    }

    pub fn validate(&self, body: &BodySpec) -> Result<()> {
        if self.q.len() != body.nq() || self.qd.len() != body.nv() {
            return Err(Error::InvalidState(format!(
                "state has {}/{} entries, body needs {}/{}",
                self.q.len(),
                self.qd.len(),
                body.nq(),
                body.nv()
            )));
        }
        for l in &body.links {
            let i = match l.joint.kind {
                JointKind::Floating => l.q_index + 3,
                JointKind::Spherical => l.q_index,
                _ => continue,
            };
            let n: f64 = self.q[i..i + 4].iter().map(|x| x * x).sum::<f64>().sqrt();
            if (n - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidState(format!("quaternion of joint {} has norm {n}", l.joint.name)));
            }
        }
        if self.q.iter().chain(&self.qd).any(|x| !x.is_finite()) {
            return Err(Error::InvalidState("non-finite entries".into()));
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qd).all(|x| x.is_finite())
    }
}

/// A body in a world with fixed physics settings and a fixed contact candidate set.
#[derive(Clone, Debug)]
pub struct Simulator {
    pub body: BodySpec,
    pub cfg: PhysicsConfig,
    pub world: WorldGeometry,
    lam: Vec<usize>,
    candidates: Vec<CandidateSource>,
}

/// Counters accumulated over steps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepDiagnostics {
    pub steps: usize,
    pub solver: SolverDiagnostics,
}

impl Simulator {
    pub fn new(body: BodySpec, cfg: PhysicsConfig, world: WorldGeometry) -> Result<Simulator> {
        if !(cfg.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        if cfg.lcp_iterations == 0 {
            return Err(Error::InvalidConfig("lcp_iterations must be at least 1".into()));
        }
        world.validate()?;
        let lam = dof_parents(&body);
        let candidates = contact_candidates(&body, cfg.contact_links.as_deref(), &world);
        Ok(Simulator {
            body,
            cfg,
            world,
            lam,
            candidates,
        })
    }

    pub fn candidates(&self) -> &[CandidateSource] {
        &self.candidates
    }

    pub fn dof_parents(&self) -> &[usize] {
        &self.lam
    }

    /// Unconstrained joint accelerations.
    pub fn unconstrained_acceleration<S: Real>(&self, kin: &Kinematics<S>, tau: &[S]) -> Vec<S> {
        match self.cfg.dynamics {
            ForwardDynamics::Aba => aba_forward_dynamics(&self.body, kin, tau, &self.cfg.gravity, &[]),
            ForwardDynamics::Crba => {
                let h = crba_mass_matrix(&self.body, kin);
                let c = bias_forces(&self.body, kin, &self.cfg.gravity, &[]);
                let rhs: Vec<S> = tau.iter().zip(&c).map(|(t, c)| *t - *c).collect();
                LtlFactor::new(h, &self.lam).solve(&rhs)
            }
        }
    }

    /// Prepares the solver rows of every candidate contact.
    pub fn contact_rows<S: Real>(&self, kin: &Kinematics<S>, fac: &LtlFactor<S>) -> Vec<ContactRows<S>> {
        let contacts = detect_contacts(&self.body, kin, &self.world, &self.candidates);
        let beta = self.cfg.baumgarte / self.cfg.dt;
        let cap = S::cst(self.cfg.baumgarte_cap);
        contacts
            .iter()
            .map(|c| {
                let j = contact_jacobian(&self.body, kin, c);
                let (t1, t2) = tangents(&c.normal);
                let m = [fac.solve(&j[0]), fac.solve(&j[1]), fac.solve(&j[2])];
                let depth = (-c.distance).max(S::zero());
                ContactRows {
                    j,
                    m,
                    distance: c.distance,
                    mu: c.mu,
                    bias: (depth * beta).min(cap),
                    bilateral: false,
                    point: c.point,
                    dirs: [c.normal, t1, t2],
                }
            })
            .collect()
    }

    /// Advances one step of length `dt` under generalized forces `tau`.
    pub fn step<S: Real>(&self, st: &SimState<S>, tau: &[S], diag: &mut StepDiagnostics) -> SimState<S> {
        let body = &self.body;
        let dt = self.cfg.dt;
        let kin = forward_kinematics(body, &st.q, &st.qd);
        let qdd = self.unconstrained_acceleration(&kin, tau);
        let mut qd: Vec<S> = st.qd.iter().zip(&qdd).map(|(v, a)| *v + *a * dt).collect();
        let correct = self.cfg.momentum_correction && self.body.is_floating();
        let mut impulse = if correct {
            let mut h = world_momentum(body, &kin);
            h += external_wrench(body, &kin, &self.cfg.gravity, tau).scale(S::cst(dt));
            h
        } else {
            SVec::zero()
        };
        if !self.candidates.is_empty() {
            let h = crba_mass_matrix(body, &kin);
            let fac = LtlFactor::new(h, &self.lam);
            let rows = self.contact_rows(&kin, &fac);
            let p = solve_contact_lcp(&rows, &mut qd, self.cfg.lcp_iterations, &mut diag.solver);
            if correct {
                for (r, pc) in rows.iter().zip(&p) {
                    let f = r.dirs[0].scale(pc[0]) + r.dirs[1].scale(pc[1]) + r.dirs[2].scale(pc[2]);
                    impulse += SVec::new(r.point.cross(&f), f);
                }
            }
        }
        diag.steps += 1;
        let q = integrate_positions(body, &st.q, &qd, dt);
        if correct {
            correct_base_velocity(body, &q, &mut qd, &impulse);
        }
        SimState { q, qd }
    }

    /// [`Simulator::step`] on plain floats with a divergence check.
    pub fn step_checked(&self, st: &SimState<f64>, tau: &[f64], diag: &mut StepDiagnostics) -> Result<SimState<f64>> {
        let next = self.step(st, tau, diag);
        if !next.is_finite() {
            return Err(Error::Diverged(format!("non-finite state after step {}", diag.steps)));
        }
        Ok(next)
    }

    /// Kinetic plus gravitational potential energy.
    pub fn energy(&self, st: &SimState<f64>) -> f64 {
        let kin = forward_kinematics(&self.body, &st.q, &st.qd);
        let h = crba_mass_matrix(&self.body, &kin);
        let nv = self.body.nv();
        let mut ke = 0.0;
        for i in 0..nv {
            for j in 0..nv {
                ke += 0.5 * st.qd[i] * h[i * nv + j] * st.qd[j];
            }
        }
        let com = center_of_mass(&self.body, &kin);
        ke - self.body.total_mass() * self.cfg.gravity.dot(&com)
    }
}

/// Spatial momentum of all links about the world origin, world coordinates.
pub fn world_momentum<S: Real>(body: &BodySpec, kin: &Kinematics<S>) -> SVec<S> {
    let mut h = SVec::zero();
    for i in 0..body.n_links() {
        let m6 = Mat6::<S>::from_f64(&body.links[i].inertia.to_mat6());
        h += kin.x_world[i].inv_apply_force(&m6.mul_vec(&kin.v[i]));
    }
    h
}

/// Gravity plus the generalized force on the floating base, as a world wrench.
fn external_wrench<S: Real>(body: &BodySpec, kin: &Kinematics<S>, gravity: &Vec3<f64>, tau: &[S]) -> SVec<S> {
    let g = Vec3::<S>::from_f64(*gravity);
    let mut w = SVec::zero();
    for (i, l) in body.links.iter().enumerate() {
        let f = g.scale(S::cst(l.inertia.mass));
        let c = kin.point_world(i, &Vec3::from_f64(l.inertia.com));
        w += SVec::new(c.cross(&f), f);
    }
    // Base rows carry a world force and a body-frame torque.
    let v0 = body.links[0].v_index;
    let fb = SVec::new(
        Vec3::new(tau[v0 + 3], tau[v0 + 4], tau[v0 + 5]),
        kin.x_world[0].e.mul_vec(&Vec3::new(tau[v0], tau[v0 + 1], tau[v0 + 2])),
    );
    w + kin.x_world[0].inv_apply_force(&fb)
}

/// Chooses the base velocity so the momentum at the new configuration equals `target`.
fn correct_base_velocity<S: Real>(body: &BodySpec, q: &[S], qd: &mut [S], target: &SVec<S>) {
    let v0 = body.links[0].v_index;
    for k in 0..6 {
        qd[v0 + k] = S::zero();
    }
    let kin = forward_kinematics(body, q, qd);
    let hj = world_momentum(body, &kin);
    let mut ic = Mat6::<S>::zero();
    for i in 0..body.n_links() {
        let m6 = Mat6::<S>::from_f64(&body.links[i].inertia.to_mat6());
        ic = ic.add(&m6.to_parent(&kin.x_world[i]));
    }
    let rhs = (*target - hj).to_array();
    let vw = SVec::from_array(spd_solve6(&ic, &rhs));
    // world spatial velocity [ω_w; v_origin] back to [v_world; ω_body]
    let rot = kin.rotation(0);
    let pos = kin.position(0);
    let wb = rot.tmul_vec(&vw.ang);
    let v = vw.lin + vw.ang.cross(&pos);
    let vals = [v.x, v.y, v.z, wb.x, wb.y, wb.z];
    qd[v0..v0 + 6].copy_from_slice(&vals);
}

fn spd_solve6<S: Real>(a: &Mat6<S>, b: &[S; 6]) -> [S; 6] {
    let mut l = [[S::zero(); 6]; 6];
    for i in 0..6 {
        for j in 0..=i {
            let mut s = a.m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = if i == j { s.sqrt() } else { s / l[j][j] };
        }
    }
    let mut y = [S::zero(); 6];
    for i in 0..6 {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = [S::zero(); 6];
    for i in (0..6).rev() {
        let mut s = y[i];
        for k in i + 1..6 {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Semi-implicit position update from the new velocities.
pub fn integrate_positions<S: Real>(body: &BodySpec, q: &[S], qd: &[S], dt: f64) -> Vec<S> {
    let mut out = q.to_vec();
    for l in &body.links {
        let (qi, vi) = (l.q_index, l.v_index);
        match l.joint.kind {
            JointKind::Floating => {
                for k in 0..3 {
                    out[qi + k] = q[qi + k] + qd[vi + k] * dt;
                }
                let w = Vec3::new(qd[vi + 3], qd[vi + 4], qd[vi + 5]).scale(S::cst(dt));
                let r = kinematics::quat_at(q, qi + 3).mul(&Quat::exp(&w)).normalize();
                out[qi + 3..qi + 7].copy_from_slice(&r.to_array());
            }
            JointKind::Spherical => {
                let w = Vec3::new(qd[vi], qd[vi + 1], qd[vi + 2]).scale(S::cst(dt));
                let r = kinematics::quat_at(q, qi).mul(&Quat::exp(&w)).normalize();
                out[qi..qi + 4].copy_from_slice(&r.to_array());
            }
            JointKind::Revolute(_) => out[qi] = q[qi] + qd[vi] * dt,
            JointKind::Fixed => {}
        }
    }
    out
}

#[cfg(test)]
mod tests;
