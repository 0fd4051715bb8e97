//! Windowed rollouts with loss and reverse-mode gradient, built on graphs that
//! are recorded once per engine and replayed for every step, frame and window.

use std::ops::Range;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::OnceLock;

use crate::body::{BodySpec, JointKind};
use crate::control::{actuation, joint_coordinates, residual_wrench, targets_from_params, PdGains};
use crate::dynamics::{forward_kinematics, joint_quaternions, keypoint_positions, SimState, Simulator, StepDiagnostics};
use crate::error::{Error, Result};
use crate::mathcore::{Graph, Quat, Real, Vec3};
use crate::objectives::{
    frame_to_q, limit_term, pose_term, projection_term, root_term, total_loss, Camera, LossComponents, LossWeights,
    ReferenceFrame, ReferenceTrajectory,
};

/// Flat parameter vector of one window:
/// `[q0 (nv) | q̇0 (nv) | targets (n_controls × na) | residual (n_controls × 6, optional)]`.
///
/// The `q0` block is in velocity layout: root position, root rotation offset
/// (rotation vector applied on the right of the seed orientation), then one
/// rotation vector per spherical joint and one angle per revolute joint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    pub nv: usize,
    pub na: usize,
    pub n_controls: usize,
    pub residual: bool,
}

impl ParamLayout {
    pub fn len(&self) -> usize {
        2 * self.nv + self.n_controls * self.na + if self.residual { 6 * self.n_controls } else { 0 }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn q0(&self) -> Range<usize> {
        0..self.nv
    }

    pub fn qd0(&self) -> Range<usize> {
        self.nv..2 * self.nv
    }

    pub fn target(&self, k: usize) -> Range<usize> {
        let s = 2 * self.nv + k * self.na;
        s..s + self.na
    }

    pub fn residual(&self, k: usize) -> Option<Range<usize>> {
        self.residual.then(|| {
            let s = 2 * self.nv + self.n_controls * self.na + 6 * k;
            s..s + 6
        })
    }
}

/// Loss report for one rollout.
#[derive(Clone, Debug, PartialEq)]
pub struct RolloutReport {
    pub loss: f64,
    pub components: LossComponents,
    /// Simulated state at each reference frame.
    pub frames: Vec<SimState<f64>>,
    /// Clamped residual wrench per control frame (empty when disabled).
    pub residual: Vec<[f64; 6]>,
}

/// Simulator plus controller and objective, with recorded step, frame-loss and
/// initial-state graphs.
pub struct RolloutEngine {
    pub sim: Simulator,
    pub gains: PdGains,
    pub steps_per_frame: usize,
    pub residual_cap: f64,
    pub weights: LossWeights,
    pub camera: Camera,
    lower: Vec<f64>,
    upper: Vec<f64>,
    step_graph: OnceLock<Graph>,
    frame_graph: OnceLock<Graph>,
    init_graph: OnceLock<Graph>,
    builds: AtomicUsize,
}

impl RolloutEngine {
    pub fn new(
        sim: Simulator,
        gains: PdGains,
        fps: f64,
        residual_cap: f64,
        weights: LossWeights,
        camera: Camera,
    ) -> Result<RolloutEngine> {
        gains.validate(&sim.body)?;
        weights.validate()?;
        camera.validate()?;
        if !sim.body.is_floating() {
            return Err(Error::InvalidBody("rollouts need a floating base".into()));
        }
        if !(residual_cap >= 0.0) {
            return Err(Error::InvalidConfig("residual cap must be nonnegative".into()));
        }
        let ratio = 1.0 / (fps * sim.cfg.dt);
        let steps = ratio.round();
        if !(steps >= 1.0) || (ratio - steps).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "time step {} does not divide the frame period 1/{fps}",
                sim.cfg.dt
            )));
        }
        let (lower, upper) = sim.body.actuated_limits();
        Ok(RolloutEngine {
            sim,
            gains,
            steps_per_frame: steps as usize,
            residual_cap,
            weights,
            camera,
            lower,
            upper,
            step_graph: OnceLock::new(),
            frame_graph: OnceLock::new(),
            init_graph: OnceLock::new(),
            builds: AtomicUsize::new(0),
        })
    }

    pub fn body(&self) -> &BodySpec {
        &self.sim.body
    }

    /// Number of graph recordings performed so far (at most three per engine).
    pub fn graph_builds(&self) -> usize {
        self.builds.load(Ordering::Relaxed)
    }

    pub fn layout(&self, n_frames: usize) -> ParamLayout {
        let b = self.body();
        ParamLayout {
            nv: b.nv(),
            na: b.na(),
            n_controls: n_frames.saturating_sub(1),
            residual: self.residual_cap > 0.0,
        }
    }

    fn state_len(&self) -> usize {
        self.body().nq() + self.body().nv()
    }

    /// Step graph: `[q, q̇, target params, raw residual] → [q', q̇']`.
    pub fn step_graph(&self) -> &Graph {
        self.step_graph.get_or_init(|| {
            self.builds.fetch_add(1, Ordering::Relaxed);
            let b = self.body();
            let (nq, nv, na) = (b.nq(), b.nv(), b.na());
            let mut x0 = b.neutral_q(Vec3::c(0.0, 0.95, 0.0));
            x0.extend(std::iter::repeat_n(0.0, nv + na + 6));
            Graph::record(&x0, |v| {
                let q = &v[..nq];
                let qd = &v[nq..nq + nv];
                let t = targets_from_params(b, &v[nq + nv..nq + nv + na]);
                let r = residual_wrench(&v[nq + nv + na..], self.residual_cap);
                let tau = actuation(b, &t, &r, q, qd, &self.gains);
                let st = SimState { q: q.to_vec(), qd: qd.to_vec() };
                let next = self.sim.step(&st, &tau, &mut StepDiagnostics::default());
                let mut out = next.q;
                out.extend(next.qd);
                out
            })
        })
    }

    /// Frame graph: `[q, root ref, ref quats, keypoints, confidences] → raw per-frame sums`.
    fn frame_graph(&self) -> &Graph {
        self.frame_graph.get_or_init(|| {
            self.builds.fetch_add(1, Ordering::Relaxed);
            let b = self.body();
            let (nq, nl, nk) = (b.nq(), b.n_links(), b.keypoints.len());
            let mut x0 = b.neutral_q(Vec3::c(0.0, 0.95, 0.0));
            x0.extend([0.0, 0.95, 0.0]);
            for _ in 0..nl {
                x0.extend([1.0, 0.0, 0.0, 0.0]);
            }
            x0.extend(std::iter::repeat_n(500.0, 2 * nk));
            x0.extend(std::iter::repeat_n(1.0, nk));
            Graph::record(&x0, |v| self.frame_terms(&v[..nq], &v[nq..]).to_vec())
        })
    }

    fn frame_terms<S: Real>(&self, q: &[S], r: &[S]) -> [S; 4] {
        let b = self.body();
        let (nl, nk) = (b.n_links(), b.keypoints.len());
        let zero = vec![S::zero(); b.nv()];
        let kin = forward_kinematics(b, q, &zero);
        let root = kin.position(0);
        let root_ref = Vec3::new(r[0], r[1], r[2]);
        let quats = joint_quaternions(b, q);
        let ref_quats: Vec<Quat<S>> = (0..nl).map(|i| Quat::from_slice(&r[3 + 4 * i..7 + 4 * i])).collect();
        let kp_off = 3 + 4 * nl;
        let kps: Vec<[S; 2]> = (0..nk).map(|i| [r[kp_off + 2 * i], r[kp_off + 2 * i + 1]]).collect();
        let conf = &r[kp_off + 2 * nk..];
        let world = keypoint_positions(b, &kin);
        [
            root_term(&root, &root_ref),
            pose_term(&quats, &ref_quats),
            projection_term(&world, &kps, conf, &self.camera),
            limit_term(&joint_coordinates(b, q), &self.lower, &self.upper),
        ]
    }

    /// Initial-state graph: `[q0 params, q̇0 params, seed root quaternion] → [q, q̇]`.
    fn init_graph(&self) -> &Graph {
        self.init_graph.get_or_init(|| {
            self.builds.fetch_add(1, Ordering::Relaxed);
            let b = self.body();
            let nv = b.nv();
            let mut x0 = vec![0.0; 2 * nv];
            x0.extend([1.0, 0.0, 0.0, 0.0]);
            Graph::record(&x0, |v| {
                let seed = Quat::from_slice(&v[2 * nv..]);
                let mut out = params_to_q(b, &v[..nv], &seed);
                out.extend_from_slice(&v[nv..2 * nv]);
                out
            })
        })
    }

    fn frame_inputs(&self, f: &ReferenceFrame) -> Vec<f64> {
        let mut r = f.root.to_vec();
        for q in &f.quats {
            r.extend_from_slice(q);
        }
        for k in &f.keypoints {
            r.extend_from_slice(k);
        }
        r.extend_from_slice(&f.confidence);
        r
    }

    fn normalizers(&self, n_frames: usize) -> [f64; 4] {
        let b = self.body();
        let f = n_frames as f64;
        [
            1.0 / f,
            1.0 / (f * b.n_links() as f64),
            1.0 / (f * b.keypoints.len() as f64),
            1.0 / (f * b.n_actuated_joints() as f64),
        ]
    }

    /// Initial state for parameters `x` and seed root orientation.
    pub fn initial_state(&self, x: &[f64], seed: &Quat<f64>) -> SimState<f64> {
        let nv = self.body().nv();
        let mut inp = x[..2 * nv].to_vec();
        inp.extend(seed.to_array());
        let out = self.init_graph().eval(&inp);
        let nq = self.body().nq();
        SimState { q: out[..nq].to_vec(), qd: out[nq..].to_vec() }
    }

    fn control_inputs(&self, layout: &ParamLayout, x: &[f64], k: usize, buf: &mut Vec<f64>) {
        buf.extend_from_slice(&x[layout.target(k)]);
        match layout.residual(k) {
            Some(r) => buf.extend_from_slice(&x[r]),
            None => buf.extend([0.0; 6]),
        }
    }

    /// Runs the window forward; returns every simulation state.
    fn forward_states(&self, reference: &ReferenceTrajectory, x: &[f64], seed: &Quat<f64>) -> Result<Vec<f64>> {
        let layout = self.layout(reference.len());
        if x.len() != layout.len() {
            return Err(Error::InvalidInput(format!("expected {} parameters, got {}", layout.len(), x.len())));
        }
        let n = self.state_len();
        let steps = layout.n_controls * self.steps_per_frame;
        let g = self.step_graph();
        let s0 = self.initial_state(x, seed);
        let mut states = Vec::with_capacity((steps + 1) * n);
        states.extend_from_slice(&s0.q);
        states.extend_from_slice(&s0.qd);
        let (mut inp, mut vals, mut out) = (Vec::new(), Vec::new(), Vec::new());
        for t in 0..steps {
            inp.clear();
            inp.extend_from_slice(&states[t * n..(t + 1) * n]);
            self.control_inputs(&layout, x, t / self.steps_per_frame, &mut inp);
            g.forward(&inp, &mut vals);
            g.outputs(&vals, &mut out);
            if out.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged(format!("non-finite state at step {}", t + 1)));
            }
            states.extend_from_slice(&out);
        }
        Ok(states)
    }

    /// Loss components of simulated frame states against a reference.
    pub fn score(&self, reference: &ReferenceTrajectory, frames: &[SimState<f64>]) -> Result<(f64, LossComponents)> {
        if frames.len() != reference.len() {
            return Err(Error::InvalidInput(format!(
                "{} simulated frames for {} reference frames",
                frames.len(),
                reference.len()
            )));
        }
        let g = self.frame_graph();
        let mut sums = [0.0; 4];
        for (s, rf) in frames.iter().zip(&reference.frames) {
            let mut inp = s.q.clone();
            inp.extend(self.frame_inputs(rf));
            for (acc, v) in sums.iter_mut().zip(g.eval(&inp)) {
                *acc += v;
            }
        }
        let w = self.normalizers(reference.len());
        let components = LossComponents {
            root: sums[0] * w[0],
            pose: sums[1] * w[1],
            projection: sums[2] * w[2],
            limit: sums[3] * w[3],
        };
        Ok((total_loss(&components, &self.weights)?, components))
    }

    fn report(&self, reference: &ReferenceTrajectory, x: &[f64], states: &[f64]) -> Result<RolloutReport> {
        let (nq, n) = (self.body().nq(), self.state_len());
        let layout = self.layout(reference.len());
        let frames: Vec<SimState<f64>> = (0..reference.len())
            .map(|f| {
                let s = &states[f * self.steps_per_frame * n..][..n];
                SimState { q: s[..nq].to_vec(), qd: s[nq..].to_vec() }
            })
            .collect();
        let (loss, components) = self.score(reference, &frames)?;
        let residual = (0..layout.n_controls)
            .filter_map(|k| layout.residual(k).map(|r| residual_wrench(&x[r], self.residual_cap)))
            .collect();
        Ok(RolloutReport { loss, components, frames, residual })
    }

    /// Loss of the window rollout for parameters `x`.
    pub fn evaluate(&self, reference: &ReferenceTrajectory, x: &[f64], seed: &Quat<f64>) -> Result<RolloutReport> {
        let states = self.forward_states(reference, x, seed)?;
        self.report(reference, x, &states)
    }

    /// Loss and its gradient with respect to `x`.
    pub fn evaluate_with_gradient(
        &self,
        reference: &ReferenceTrajectory,
        x: &[f64],
        seed: &Quat<f64>,
    ) -> Result<(RolloutReport, Vec<f64>)> {
        let states = self.forward_states(reference, x, seed)?;
        let report = self.report(reference, x, &states)?;
        let b = self.body();
        let (nq, nv, na, n) = (b.nq(), b.nv(), b.na(), self.state_len());
        let layout = self.layout(reference.len());
        let spf = self.steps_per_frame;
        let norm = self.normalizers(reference.len());
        let wts = [self.weights.w_r, self.weights.w_j, self.weights.w_i, self.weights.w_l];
        let frame_adj: Vec<f64> = (0..4).map(|i| wts[i] * norm[i]).collect();

        // Per-frame adjoints of the loss with respect to q.
        let fg = self.frame_graph();
        let (mut vals, mut adj) = (Vec::new(), Vec::new());
        let mut dq = vec![vec![0.0; nq]; reference.len()];
        for (f, rf) in reference.frames.iter().enumerate() {
            let mut inp = states[f * spf * n..][..nq].to_vec();
            inp.extend(self.frame_inputs(rf));
            fg.forward(&inp, &mut vals);
            let mut in_adj = vec![0.0; inp.len()];
            fg.reverse(&vals, &frame_adj, &mut in_adj, &mut adj);
            dq[f].copy_from_slice(&in_adj[..nq]);
        }

        let mut grad = vec![0.0; x.len()];
        let sg = self.step_graph();
        let mut lam = vec![0.0; n];
        let last = layout.n_controls;
        lam[..nq].copy_from_slice(&dq[last]);
        let mut inp = Vec::with_capacity(n + na + 6);
        let mut in_adj = vec![0.0; n + na + 6];
        for t in (0..last * spf).rev() {
            let k = t / spf;
            inp.clear();
            inp.extend_from_slice(&states[t * n..(t + 1) * n]);
            self.control_inputs(&layout, x, k, &mut inp);
            sg.forward(&inp, &mut vals);
            in_adj.iter_mut().for_each(|v| *v = 0.0);
            sg.reverse(&vals, &lam, &mut in_adj, &mut adj);
            lam.copy_from_slice(&in_adj[..n]);
            for (gv, a) in grad[layout.target(k)].iter_mut().zip(&in_adj[n..n + na]) {
                *gv += a;
            }
            if let Some(r) = layout.residual(k) {
                for (gv, a) in grad[r].iter_mut().zip(&in_adj[n + na..]) {
                    *gv += a;
                }
            }
            if t % spf == 0 {
                for (l, d) in lam[..nq].iter_mut().zip(&dq[k]) {
                    *l += d;
                }
            }
        }
        let ig = self.init_graph();
        let mut iinp = x[..2 * nv].to_vec();
        iinp.extend(seed.to_array());
        ig.forward(&iinp, &mut vals);
        let mut iadj = vec![0.0; iinp.len()];
        ig.reverse(&vals, &lam, &mut iadj, &mut adj);
        for (gv, a) in grad[..2 * nv].iter_mut().zip(&iadj) {
            *gv += a;
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        Ok((report, grad))
    }

    /// Forward simulation from an explicit state under per-frame controls.
    /// Returns the state at every frame boundary (`targets.len() + 1` states).
    pub fn simulate(&self, init: &SimState<f64>, targets: &[Vec<f64>], residual: &[[f64; 6]]) -> Result<Vec<SimState<f64>>> {
        let (nq, na) = (self.body().nq(), self.body().na());
        let g = self.step_graph();
        let mut cur: Vec<f64> = init.q.iter().chain(&init.qd).copied().collect();
        let mut out = vec![init.clone()];
        let (mut inp, mut vals, mut o) = (Vec::new(), Vec::new(), Vec::new());
        for (k, tgt) in targets.iter().enumerate() {
            if tgt.len() != na {
                return Err(Error::InvalidInput(format!("control frame {k}: expected {na} target parameters")));
            }
            for _ in 0..self.steps_per_frame {
                inp.clear();
                inp.extend_from_slice(&cur);
                inp.extend_from_slice(tgt);
                inp.extend(residual.get(k).copied().unwrap_or([0.0; 6]));
                g.forward(&inp, &mut vals);
                g.outputs(&vals, &mut o);
                if o.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Diverged(format!("non-finite state in control frame {k}")));
                }
                std::mem::swap(&mut cur, &mut o);
            }
            out.push(SimState { q: cur[..nq].to_vec(), qd: cur[nq..].to_vec() });
        }
        Ok(out)
    }

    /// Seed parameters: pose from reference frame 0, velocity from frames 0 and 1,
    /// and each control target from the reference pose at the end of its interval.
    /// The returned quaternion is the seed root orientation.
    pub fn seed_parameters(&self, reference: &ReferenceTrajectory) -> (Vec<f64>, Quat<f64>) {
        let b = self.body();
        let layout = self.layout(reference.len());
        let mut x = vec![0.0; layout.len()];
        let q0 = frame_to_q(b, &reference.frames[0]);
        let q1 = frame_to_q(b, &reference.frames[1]);
        let (p0, seed) = q_to_params(b, &q0);
        x[layout.q0()].copy_from_slice(&p0);
        x[layout.qd0()].copy_from_slice(&fd_velocity(b, &q0, &q1, reference.fps));
        for k in 0..layout.n_controls {
            let q = frame_to_q(b, &reference.frames[k + 1]);
            let (p, _) = q_to_params(b, &q);
            x[layout.target(k)].copy_from_slice(&p[6..]);
        }
        (x, seed)
    }
}

/// q0 parameters (velocity layout) to generalized coordinates.
pub fn params_to_q<S: Real>(body: &BodySpec, p: &[S], seed: &Quat<S>) -> Vec<S> {
    let mut q = Vec::with_capacity(body.nq());
    for l in &body.links {
        let v = l.v_index;
        match l.joint.kind {
            JointKind::Floating => {
                q.extend_from_slice(&p[v..v + 3]);
                let r = Quat::exp(&Vec3::new(p[v + 3], p[v + 4], p[v + 5]));
                q.extend_from_slice(&seed.mul(&r).to_array());
            }
            JointKind::Spherical => {
                q.extend_from_slice(&Quat::exp(&Vec3::new(p[v], p[v + 1], p[v + 2])).to_array());
            }
            JointKind::Revolute(_) => q.push(p[v]),
            JointKind::Fixed => {}
        }
    }
    q
}

/// Inverse of [`params_to_q`], with the seed taken as the root orientation itself.
pub fn q_to_params(body: &BodySpec, q: &[f64]) -> (Vec<f64>, Quat<f64>) {
    let mut p = vec![0.0; body.nv()];
    let mut seed = Quat::IDENTITY;
    for l in &body.links {
        let (i, v) = (l.q_index, l.v_index);
        match l.joint.kind {
            JointKind::Floating => {
                p[v..v + 3].copy_from_slice(&q[i..i + 3]);
                seed = Quat::from_slice(&q[i + 3..i + 7]).normalize();
            }
            JointKind::Spherical => {
                let r = Quat::from_slice(&q[i..i + 4]).normalize().log();
                p[v..v + 3].copy_from_slice(&r.to_array());
            }
            JointKind::Revolute(_) => p[v] = q[i],
            JointKind::Fixed => {}
        }
    }
    (p, seed)
}

/// Generalized velocity between two poses one frame apart.
pub fn fd_velocity(body: &BodySpec, q0: &[f64], q1: &[f64], fps: f64) -> Vec<f64> {
    let mut v = vec![0.0; body.nv()];
    for l in &body.links {
        let (i, j) = (l.q_index, l.v_index);
        match l.joint.kind {
            JointKind::Floating => {
                for k in 0..3 {
                    v[j + k] = (q1[i + k] - q0[i + k]) * fps;
                }
                let a = Quat::from_slice(&q0[i + 3..i + 7]);
                let b = Quat::from_slice(&q1[i + 3..i + 7]);
                let w = a.conj().mul(&b).log().scale(fps);
                v[j + 3..j + 6].copy_from_slice(&w.to_array());
            }
            JointKind::Spherical => {
                let a = Quat::from_slice(&q0[i..i + 4]);
                let b = Quat::from_slice(&q1[i..i + 4]);
                let w = a.conj().mul(&b).log().scale(fps);
                v[j..j + 3].copy_from_slice(&w.to_array());
            }
            JointKind::Revolute(_) => v[j] = (q1[i] - q0[i]) * fps,
            JointKind::Fixed => {}
        }
    }
    v
}
