//! Window problems, their optimization, and stitching windows into one motion.

use rayon::prelude::*;

use super::basin::{basin_hopping, BasinHoppingConfig};
use super::bfgs::{bfgs_minimize, BfgsOptions, BfgsStatus};
use super::rollout::{q_to_params, ParamLayout, RolloutEngine, RolloutReport};
use crate::body::{BodySpec, JointKind};
use crate::control::{params_from_targets, targets_from_params, ControlTrajectory};
use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::mathcore::Quat;
use crate::objectives::{LossComponents, ReferenceTrajectory};

/// Local or global search.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMethod {
    BasinHopping,
    Bfgs,
}

/// Standard deviations of the basin-hopping perturbation per parameter block.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PerturbationScales {
    /// Joint and root rotations, rad.
    pub rotation: f64,
    /// Root position, m.
    pub position: f64,
    /// Angular rates, rad/s.
    pub angular_velocity: f64,
    /// Root linear velocity, m/s.
    pub linear_velocity: f64,
    /// Residual wrench components, as a fraction of the cap.
    pub residual_fraction: f64,
}

impl Default for PerturbationScales {
    fn default() -> Self {
        PerturbationScales {
            rotation: 0.05,
            position: 0.01,
            angular_velocity: 0.1,
            linear_velocity: 0.05,
            residual_fraction: 0.1,
        }
    }
}

impl PerturbationScales {
    /// Per-parameter scales for a window layout.
    pub fn vector(&self, body: &BodySpec, layout: &ParamLayout, residual_cap: f64) -> Vec<f64> {
        let mut s = vec![0.0; layout.len()];
        for l in &body.links {
            let v = l.v_index;
            match l.joint.kind {
                JointKind::Floating => {
                    s[v..v + 3].fill(self.position);
                    s[v + 3..v + 6].fill(self.rotation);
                    s[layout.nv + v..layout.nv + v + 3].fill(self.linear_velocity);
                    s[layout.nv + v + 3..layout.nv + v + 6].fill(self.angular_velocity);
                }
                _ => {
                    let n = l.joint.kind.nv();
                    s[v..v + n].fill(self.rotation);
                    s[layout.nv + v..layout.nv + v + n].fill(self.angular_velocity);
                }
            }
        }
        for k in 0..layout.n_controls {
            s[layout.target(k)].fill(self.rotation);
            if let Some(r) = layout.residual(k) {
                s[r].fill(self.residual_fraction * residual_cap);
            }
        }
        s
    }
}

#[derive(Clone, Debug)]
pub struct SearchConfig {
    pub method: SearchMethod,
    pub basin: BasinHoppingConfig,
    pub scales: PerturbationScales,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            method: SearchMethod::BasinHopping,
            basin: BasinHoppingConfig { max_evals: Some(1000), ..BasinHoppingConfig::default() },
            scales: PerturbationScales::default(),
        }
    }
}

/// One window of the sequence.
#[derive(Clone, Debug)]
pub struct WindowProblem {
    /// Index of the window's first frame in the full sequence.
    pub start_frame: usize,
    pub reference: ReferenceTrajectory,
}

#[derive(Clone, Debug)]
pub struct WindowResult {
    pub start_frame: usize,
    pub params: Vec<f64>,
    pub seed_orientation: Quat<f64>,
    pub initial_state: SimState<f64>,
    pub controls: ControlTrajectory,
    pub report: RolloutReport,
    pub seed_loss: f64,
    pub evaluations: usize,
    /// Objective after every accepted local-search iterate.
    pub trace: Vec<f64>,
    pub status: Option<BfgsStatus>,
}

/// Optimizes the initial state and control targets of one window.
pub fn optimize_window(engine: &RolloutEngine, problem: &WindowProblem, cfg: &SearchConfig, seed: u64) -> Result<WindowResult> {
    let reference = &problem.reference;
    reference.validate(engine.body())?;
    let (x0, orient) = engine.seed_parameters(reference);
    let seed_report = engine.evaluate(reference, &x0, &orient)?;
    let fg = |x: &[f64]| match engine.evaluate_with_gradient(reference, x, &orient) {
        Ok((r, g)) => (r.loss, g),
        Err(_) => (f64::INFINITY, Vec::new()),
    };
    let (mut x, evaluations, trace, status) = match cfg.method {
        SearchMethod::BasinHopping => {
            let layout = engine.layout(reference.len());
            let scales = cfg.scales.vector(engine.body(), &layout, engine.residual_cap);
            let bh = BasinHoppingConfig { seed, ..cfg.basin.clone() };
            let r = basin_hopping(fg, &x0, &scales, &bh)?;
            let status = r.steps.last().map(|s| s.status);
            (r.x, r.evaluations, r.trace, status)
        }
        SearchMethod::Bfgs => {
            let opt = BfgsOptions {
                max_iters: cfg.basin.n_basins * cfg.basin.inner_iters,
                grad_tol: cfg.basin.grad_tol,
                max_evals: cfg.basin.max_evals,
                ..BfgsOptions::default()
            };
            let r = bfgs_minimize(fg, &x0, &opt);
            (r.x, r.evaluations, r.trace, Some(r.status))
        }
    };
    let mut report = match engine.evaluate(reference, &x, &orient) {
        Ok(r) if r.loss <= seed_report.loss => r,
        _ => {
            x = x0.clone();
            seed_report.clone()
        }
    };
    report.frames.shrink_to_fit();
    let layout = engine.layout(reference.len());
    let controls = controls_from_params(engine, &layout, &x, reference.fps);
    Ok(WindowResult {
        start_frame: problem.start_frame,
        initial_state: engine.initial_state(&x, &orient),
        params: x,
        seed_orientation: orient,
        controls,
        report,
        seed_loss: seed_report.loss,
        evaluations,
        trace,
        status,
    })
}

fn controls_from_params(engine: &RolloutEngine, layout: &ParamLayout, x: &[f64], fps: f64) -> ControlTrajectory {
    let body = engine.body();
    ControlTrajectory {
        fps,
        targets: (0..layout.n_controls).map(|k| targets_from_params(body, &x[layout.target(k)])).collect(),
        residual: (0..layout.n_controls)
            .filter_map(|k| layout.residual(k).map(|r| crate::control::residual_wrench(&x[r], engine.residual_cap)))
            .collect(),
    }
}

/// Window start frames covering `n_frames` with windows of `window_frames`
/// frames overlapping by `overlap` (fraction of the window's control frames).
pub fn window_starts(n_frames: usize, window_frames: usize, overlap: f64) -> Result<Vec<(usize, usize)>> {
    if window_frames < 2 || n_frames < 2 {
        return Err(Error::InvalidConfig("windows and sequences need at least 2 frames".into()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::InvalidConfig("overlap must be in [0, 1)".into()));
    }
    let controls = window_frames - 1;
    let shared = (controls as f64 * overlap).round() as usize;
    let stride = (controls - shared).max(1);
    let mut out = Vec::new();
    let mut s = 0;
    loop {
        let e = (s + window_frames).min(n_frames);
        out.push((s, e));
        if e == n_frames {
            break;
        }
        s += stride;
        if n_frames - s < 2 {
            break;
        }
    }
    Ok(out)
}

/// Control frames of one window for stitching.
#[derive(Clone, Debug)]
pub struct WindowControls {
    pub start_frame: usize,
    pub controls: ControlTrajectory,
}

fn blend_targets(body: &BodySpec, a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(a.len());
    let mut i = 0;
    for l in body.links.iter().filter(|l| l.joint.kind.is_actuated()) {
        match l.joint.kind {
            JointKind::Spherical => {
                let qa = Quat::from_slice(&a[i..i + 4]);
                let qb = Quat::from_slice(&b[i..i + 4]);
                let q = if t == 0.0 {
                    qa
                } else if t == 1.0 {
                    qb
                } else {
                    qa.slerp(&qb, t)
                };
                out.extend_from_slice(&q.to_array());
                i += 4;
            }
            _ => {
                out.push(a[i] * (1.0 - t) + b[i] * t);
                i += 1;
            }
        }
    }
    out
}

/// Merges per-window controls into one trajectory. Inside an overlap the
/// weight of the later window ramps linearly from 0 to 1.
pub fn stitch_windows(body: &BodySpec, windows: &[WindowControls]) -> Result<ControlTrajectory> {
    let first = windows.first().ok_or_else(|| Error::InvalidInput("no windows to stitch".into()))?;
    let fps = first.controls.fps;
    let mut targets = first.controls.targets.clone();
    let mut residual = first.controls.residual.clone();
    let mut end = first.start_frame + first.controls.len();
    let base = first.start_frame;
    for w in &windows[1..] {
        if w.start_frame > end {
            return Err(Error::InvalidInput(format!("gap between control frames {end} and {}", w.start_frame)));
        }
        if w.start_frame < base || w.start_frame + w.controls.len() < end {
            return Err(Error::InvalidInput("windows must be ordered and extend the sequence".into()));
        }
        let overlap = end - w.start_frame;
        for j in 0..w.controls.len() {
            let k = w.start_frame + j - base;
            if j < overlap {
                let t = (j + 1) as f64 / (overlap + 1) as f64;
                targets[k] = blend_targets(body, &targets[k], &w.controls.targets[j], t);
                if let (Some(a), Some(b)) = (residual.get_mut(k), w.controls.residual.get(j)) {
                    for c in 0..6 {
                        a[c] = a[c] * (1.0 - t) + b[c] * t;
                    }
                }
            } else {
                targets.push(w.controls.targets[j].clone());
                if let Some(r) = w.controls.residual.get(j) {
                    residual.push(*r);
                }
            }
        }
        end = w.start_frame + w.controls.len();
    }
    Ok(ControlTrajectory { fps, targets, residual })
}

fn blend_states(body: &BodySpec, a: &SimState<f64>, b: &SimState<f64>, t: f64) -> SimState<f64> {
    let lerp = |x: f64, y: f64| x * (1.0 - t) + y * t;
    let mut q: Vec<f64> = a.q.iter().zip(&b.q).map(|(&x, &y)| lerp(x, y)).collect();
    for l in &body.links {
        let r = match l.joint.kind {
            JointKind::Floating => l.q_index + 3..l.q_index + 7,
            JointKind::Spherical => l.q_index..l.q_index + 4,
            _ => continue,
        };
        let s = Quat::from_slice(&a.q[r.clone()]).slerp(&Quat::from_slice(&b.q[r.clone()]), t);
        q[r].copy_from_slice(&s.to_array());
    }
    SimState { q, qd: a.qd.iter().zip(&b.qd).map(|(&x, &y)| lerp(x, y)).collect() }
}

/// Simulated frames of one window for stitching.
#[derive(Clone, Debug)]
pub struct WindowFrames<'a> {
    pub start_frame: usize,
    pub frames: &'a [SimState<f64>],
}

/// Merges per-window rollouts into one state sequence, with the same linear
/// cross-fade over overlaps as [`stitch_windows`].
pub fn stitch_states(body: &BodySpec, windows: &[WindowFrames]) -> Result<Vec<SimState<f64>>> {
    let first = windows.first().ok_or_else(|| Error::InvalidInput("no windows to stitch".into()))?;
    let mut out = first.frames.to_vec();
    let base = first.start_frame;
    for w in &windows[1..] {
        let end = base + out.len();
        if w.start_frame > end {
            return Err(Error::InvalidInput(format!("gap between frames {end} and {}", w.start_frame)));
        }
        if w.start_frame < base || w.start_frame + w.frames.len() < end {
            return Err(Error::InvalidInput("windows must be ordered and extend the sequence".into()));
        }
        let overlap = end - w.start_frame;
        for (j, s) in w.frames.iter().enumerate() {
            if j < overlap {
                let k = w.start_frame + j - base;
                let t = (j + 1) as f64 / (overlap + 1) as f64;
                out[k] = blend_states(body, &out[k], s, t);
            } else {
                out.push(s.clone());
            }
        }
    }
    Ok(out)
}

/// How per-window results become one motion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StitchMode {
    /// Cross-fade the simulated states of the windows. Every frame comes from
    /// a physical rollout, with blends only over overlaps.
    States,
    /// Cross-fade the controls and re-simulate the whole sequence from the
    /// first window's initial state.
    Controls,
}

#[derive(Clone, Debug)]
pub struct SequenceConfig {
    pub window_frames: usize,
    pub overlap: f64,
    pub workers: usize,
    pub seed: u64,
    pub search: SearchConfig,
    pub stitch: StitchMode,
    /// Evaluation budget per window of the sequential pass that re-fits each
    /// later window from the state the stitched rollout actually reaches.
    /// Zero skips the pass; only used when stitching controls.
    pub refine_evals: usize,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        SequenceConfig {
            window_frames: 25,
            overlap: 0.25,
            workers: 1,
            seed: 0,
            search: SearchConfig::default(),
            stitch: StitchMode::States,
            refine_evals: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SequenceResult {
    pub windows: Vec<WindowResult>,
    /// Sequential re-fit of windows after the first, in window order.
    pub refinements: Vec<Refinement>,
    /// Stitched controls and the first window's initial state. They replay
    /// `frames` exactly only under [`StitchMode::Controls`].
    pub controls: ControlTrajectory,
    pub initial_state: SimState<f64>,
    /// Reconstructed state at every reference frame.
    pub frames: Vec<SimState<f64>>,
    pub loss: f64,
    pub components: LossComponents,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Refinement {
    pub start_frame: usize,
    /// Window loss of the stitched controls from the reached state.
    pub before: f64,
    pub after: f64,
    pub evaluations: usize,
}

/// Re-fits a window's controls with the initial state held fixed. Returns the
/// controls and the losses before and after.
pub fn refine_window(
    engine: &RolloutEngine,
    reference: &ReferenceTrajectory,
    init: &SimState<f64>,
    controls: &ControlTrajectory,
    max_evals: usize,
) -> Result<(ControlTrajectory, Refinement)> {
    let body = engine.body();
    let layout = engine.layout(reference.len());
    if controls.len() != layout.n_controls {
        return Err(Error::InvalidInput(format!("{} controls for a window of {} frames", controls.len(), reference.len())));
    }
    let (p0, orient) = q_to_params(body, &init.q);
    let mut x0 = vec![0.0; layout.len()];
    x0[layout.q0()].copy_from_slice(&p0);
    x0[layout.qd0()].copy_from_slice(&init.qd);
    for k in 0..layout.n_controls {
        x0[layout.target(k)].copy_from_slice(&params_from_targets(body, &controls.targets[k]));
        if let Some(r) = layout.residual(k) {
            x0[r].copy_from_slice(&controls.residual_at(k, engine.residual_cap));
        }
    }
    let fixed = layout.qd0().end;
    let before = engine.evaluate(reference, &x0, &orient)?.loss;
    let fg = |x: &[f64]| match engine.evaluate_with_gradient(reference, x, &orient) {
        Ok((r, mut g)) => {
            g[..fixed].fill(0.0);
            (r.loss, g)
        }
        Err(_) => (f64::INFINITY, Vec::new()),
    };
    let opt = BfgsOptions { max_iters: max_evals, max_evals: Some(max_evals), ..BfgsOptions::default() };
    let r = if max_evals == 0 { None } else { Some(bfgs_minimize(fg, &x0, &opt)) };
    let evaluations = r.as_ref().map_or(0, |r| r.evaluations);
    let (x, after) = match r {
        Some(r) if r.f < before => match engine.evaluate(reference, &r.x, &orient) {
            Ok(rep) if rep.loss < before => (r.x, rep.loss),
            _ => (x0, before),
        },
        _ => (x0, before),
    };
    let controls = controls_from_params(engine, &layout, &x, reference.fps);
    Ok((controls, Refinement { start_frame: 0, before, after, evaluations }))
}

/// Optimizes all windows (in parallel up to `workers`) and stitches them.
/// When stitching controls, a sequential pass then re-fits every later
/// window's controls from the state the stitched rollout reaches at its first
/// frame, and the whole sequence is re-simulated once from the first window's
/// state.
pub fn reconstruct_sequence(engine: &RolloutEngine, reference: &ReferenceTrajectory, cfg: &SequenceConfig) -> Result<SequenceResult> {
    reference.validate(engine.body())?;
    let spans = window_starts(reference.len(), cfg.window_frames, cfg.overlap)?;
    let problems: Vec<WindowProblem> = spans
        .iter()
        .map(|&(s, e)| WindowProblem { start_frame: s, reference: reference.slice(s, e) })
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("worker pool: {e}")))?;
    let results: Vec<Result<WindowResult>> = pool.install(|| {
        problems
            .par_iter()
            .enumerate()
            .map(|(i, p)| {
                let r = optimize_window(engine, p, &cfg.search, cfg.seed.wrapping_add(i as u64));
                if let Ok(w) = &r {
                    log::info!(
                        "window {i} frames {}..{}: loss {:.6} -> {:.6} in {} evaluations",
                        p.start_frame,
                        p.start_frame + p.reference.len(),
                        w.seed_loss,
                        w.report.loss,
                        w.evaluations
                    );
                }
                r
            })
            .collect()
    });
    let windows = results.into_iter().collect::<Result<Vec<_>>>()?;
    let parts: Vec<WindowControls> = windows
        .iter()
        .map(|w| WindowControls { start_frame: w.start_frame, controls: w.controls.clone() })
        .collect();
    let mut controls = stitch_windows(engine.body(), &parts)?;
    let initial_state = windows[0].initial_state.clone();
    let mut refinements = Vec::new();
    if cfg.stitch == StitchMode::States {
        let parts: Vec<WindowFrames> =
            windows.iter().map(|w| WindowFrames { start_frame: w.start_frame, frames: &w.report.frames }).collect();
        let frames = stitch_states(engine.body(), &parts)?;
        let (loss, components) = engine.score(reference, &frames)?;
        return Ok(SequenceResult { windows, refinements, controls, initial_state, frames, loss, components });
    }
    if cfg.refine_evals > 0 {
        let mut state = initial_state.clone();
        let mut at = 0;
        for (i, &(s, e)) in spans.iter().enumerate().skip(1) {
            let head = ControlTrajectory {
                fps: controls.fps,
                targets: controls.targets[at..s].to_vec(),
                residual: controls.residual.get(at..s).map(|r| r.to_vec()).unwrap_or_default(),
            };
            state = resimulate(engine, &state, &head)?.pop().expect("at least one state");
            at = s;
            let window = ControlTrajectory {
                fps: controls.fps,
                targets: controls.targets[s..e - 1].to_vec(),
                residual: controls.residual.get(s..e - 1).map(|r| r.to_vec()).unwrap_or_default(),
            };
            let (fit, mut rf) = refine_window(engine, &reference.slice(s, e), &state, &window, cfg.refine_evals)?;
            rf.start_frame = s;
            log::info!("refit window {i} frames {s}..{e}: loss {:.6} -> {:.6} in {} evaluations", rf.before, rf.after, rf.evaluations);
            controls.targets.splice(s..e - 1, fit.targets);
            if !fit.residual.is_empty() {
                controls.residual.splice(s..e - 1, fit.residual);
            }
            refinements.push(rf);
        }
    }
    let frames = resimulate(engine, &initial_state, &controls)?;
    let (loss, components) = engine.score(reference, &frames)?;
    Ok(SequenceResult { windows, refinements, controls, initial_state, frames, loss, components })
}

/// Forward simulation of a control trajectory; one state per frame boundary.
pub fn resimulate(engine: &RolloutEngine, init: &SimState<f64>, controls: &ControlTrajectory) -> Result<Vec<SimState<f64>>> {
    let body = engine.body();
    let params: Vec<Vec<f64>> = controls.targets.iter().map(|t| params_from_targets(body, t)).collect();
    let residual: Vec<[f64; 6]> = (0..controls.len()).map(|k| controls.residual_at(k, engine.residual_cap)).collect();
    engine.simulate(init, &params, &residual)
}

/// Loss of the re-simulated sequence for several window lengths.
pub fn window_sweep(
    engine: &RolloutEngine,
    reference: &ReferenceTrajectory,
    window_frames: &[usize],
    cfg: &SequenceConfig,
) -> Result<Vec<(usize, Result<SequenceResult>)>> {
    Ok(window_frames
        .iter()
        .map(|&w| (w, reconstruct_sequence(engine, reference, &SequenceConfig { window_frames: w, ..cfg.clone() })))
        .collect())
}
