//! Subcommand implementations. All files are written from this thread after
//! the optimizer has merged its windows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

use physmotion::body::{build_humanoid, load_body_file, Anthropometry, BodySpec};
use physmotion::control::PdGains;
use physmotion::dynamics::{PhysicsConfig, SimState, Simulator, WorldGeometry};
use physmotion::io::{self, ControlsFile, TrajectoryFile};
use physmotion::metrics::{compare, MetricReport, PerFrameMetrics, SkateParams};
use physmotion::objectives::{frame_to_q, rendered_reference, Camera, ReferenceTrajectory};
use physmotion::optimizer::{
    reconstruct_sequence, resimulate, window_starts, BasinHoppingConfig, RolloutEngine, SearchConfig, SequenceConfig,
    SequenceResult,
};
use physmotion::scene::{body_surface_samples, estimate_ground_transform, transform_reference, GroundConfig, GroundEstimate};

use crate::config::{MetricsToggles, RunConfig};

pub const RECONSTRUCTION_FILE: &str = "reconstruction.json";
pub const CONTROLS_FILE: &str = "controls.json";
pub const METRICS_TXT: &str = "metrics.txt";
pub const METRICS_CSV: &str = "metrics.csv";
pub const PER_FRAME_CSV: &str = "per_frame.csv";
pub const LOSS_TRACE_CSV: &str = "loss_trace.csv";
pub const RUN_LOG: &str = "run.log";

pub fn load_body(path: Option<&Path>) -> Result<BodySpec> {
    match path {
        Some(p) => Ok(load_body_file(p)?),
        None => {
            let a = Anthropometry::default_humanoid();
            Ok(build_humanoid(&a, a.total_mass_kg)?)
        }
    }
}

pub fn build_engine(cfg: &RunConfig, body: &BodySpec, fps: f64, camera: Camera) -> Result<RolloutEngine> {
    cfg.check_frame_rate(fps)?;
    let ph = &cfg.physics;
    let physics = PhysicsConfig {
        dt: ph.dt,
        lcp_iterations: ph.lcp_iterations,
        contact_links: ph.feet_contacts_only.then(|| body.feet.clone()),
        ..PhysicsConfig::default()
    };
    let world = WorldGeometry { friction: ph.friction, ..WorldGeometry::default() };
    let sim = Simulator::new(body.clone(), physics, world)?;
    let gains = PdGains::uniform(body, ph.kp, ph.kd);
    Ok(RolloutEngine::new(sim, gains, fps, ph.residual_cap, cfg.weights, camera)?)
}

pub fn sequence_config(cfg: &RunConfig) -> SequenceConfig {
    let o = &cfg.optimizer;
    SequenceConfig {
        window_frames: o.window_frames,
        overlap: o.overlap,
        workers: cfg.workers,
        seed: cfg.seed,
        search: SearchConfig {
            method: o.method,
            basin: BasinHoppingConfig {
                n_basins: o.basins,
                inner_iters: o.inner_iters,
                max_evals: Some(o.max_evals),
                ..BasinHoppingConfig::default()
            },
            ..SearchConfig::default()
        },
        stitch: o.stitch,
        refine_evals: o.refine_evals,
    }
}

fn read_reference(path: &Path, body: &BodySpec) -> Result<ReferenceTrajectory> {
    let r = io::read_trajectory(path)?.reference();
    r.validate(body).with_context(|| format!("invalid trajectory {}", path.display()))?;
    Ok(r)
}

/// Frame indices spread evenly over `n`; all of them when `count` is 0 or too large.
fn spread(n: usize, count: usize) -> Vec<usize> {
    if count == 0 || count >= n {
        return (0..n).collect();
    }
    if count == 1 {
        return vec![0];
    }
    (0..count).map(|i| i * (n - 1) / (count - 1)).collect()
}

/// Estimates the ground frame from the body poses of `r` and re-expresses `r` in it.
pub fn ground_align(cfg: &RunConfig, body: &BodySpec, r: &ReferenceTrajectory) -> Result<(ReferenceTrajectory, GroundEstimate)> {
    let g = &cfg.ground_plane;
    let clouds: Vec<Vec<[f64; 3]>> = spread(r.len(), g.frames)
        .into_iter()
        .map(|f| body_surface_samples(body, &frame_to_q(body, &r.frames[f]), 5))
        .collect();
    let est = estimate_ground_transform(&clouds, &GroundConfig { k: g.k, delta: g.delta, ..GroundConfig::default() })?;
    Ok((transform_reference(body, r, &est.transform)?, est))
}

/// Skate thresholds: simulated motion rests on the plane, kinematic estimates
/// only approximately.
fn skate_params(has_states: bool) -> SkateParams {
    if has_states {
        SkateParams::dynamic()
    } else {
        SkateParams::kinematic()
    }
}

fn filter_report(mut r: MetricReport, t: &MetricsToggles) -> MetricReport {
    if !t.mpjpe {
        r.mpjpe_g = None;
        r.mpjpe = None;
        r.mpjpe_pa = None;
    }
    if !t.mpjpe_2d {
        r.mpjpe_2d = None;
    }
    r
}

struct Comparison {
    label: String,
    report: MetricReport,
    per_frame: PerFrameMetrics,
}

fn compare_labelled(
    body: &BodySpec,
    label: &str,
    pred: &ReferenceTrajectory,
    target: &ReferenceTrajectory,
    pred_simulated: bool,
    toggles: &MetricsToggles,
) -> Result<Comparison> {
    let (report, per_frame) = compare(body, pred, target, &skate_params(pred_simulated))?;
    Ok(Comparison { label: label.into(), report: filter_report(report, toggles), per_frame })
}

/// Series for per_frame.csv, one group per comparison.
fn per_frame_series(cs: &[Comparison], t: &MetricsToggles) -> Vec<(String, Vec<f64>)> {
    let mut out = Vec::new();
    for c in cs {
        let p = &c.per_frame;
        let mut push = |name: &str, v: &Vec<f64>, keep: bool| {
            if keep && !v.is_empty() {
                out.push((format!("{}.{name}", c.label), v.clone()));
            }
        };
        push("mpjpe_g_mm", &p.mpjpe_g, t.mpjpe);
        push("mpjpe_mm", &p.mpjpe, t.mpjpe);
        push("mpjpe_pa_mm", &p.mpjpe_pa, t.mpjpe);
        push("mpjpe_2d_px", &p.mpjpe_2d, t.mpjpe_2d);
        // Aligned so row f holds the entry ending at frame f.
        if t.tv && !p.tv_acc.is_empty() {
            let mut v = vec![f64::NAN; 3];
            v.extend(&p.tv_acc);
            out.push((format!("{}.tv_acc_mm_per_frame2", c.label), v));
        }
        if t.foot_skate && !p.skate.is_empty() {
            let mut v = vec![0.0];
            v.extend(&p.skate);
            out.push((format!("{}.skate", c.label), v));
        }
    }
    out
}

fn metric_rows(cs: &[Comparison]) -> Vec<(String, MetricReport)> {
    cs.iter().map(|c| (c.label.clone(), c.report.clone())).collect()
}

fn write_metrics(dir: &Path, cs: &[Comparison], t: &MetricsToggles, written: &mut Vec<PathBuf>) -> Result<()> {
    let rows = metric_rows(cs);
    let text = strip_rows(io::metrics_text(&rows), t);
    let csv = strip_rows(io::metrics_csv(&rows), t);
    put(dir, METRICS_TXT, &text, written)?;
    put(dir, METRICS_CSV, &csv, written)?;
    if t.per_frame {
        put(dir, PER_FRAME_CSV, &io::per_frame_csv(&per_frame_series(cs, t)), written)?;
    }
    Ok(())
}

/// Removes TV and skate lines when switched off.
fn strip_rows(text: String, t: &MetricsToggles) -> String {
    text.lines()
        .filter(|l| (t.tv || !l.contains("tv_acc")) && (t.foot_skate || !l.contains("foot_skate")))
        .map(|l| format!("{l}\n"))
        .collect()
}

fn put(dir: &Path, name: &str, text: &str, written: &mut Vec<PathBuf>) -> Result<()> {
    let p = dir.join(name);
    io::write_text(&p, text)?;
    written.push(p);
    Ok(())
}

#[derive(Debug)]
pub struct ReconstructOutcome {
    pub loss: f64,
    pub written: Vec<PathBuf>,
}

/// Full pipeline. With `dry_run`, validates inputs, evaluates the seed of the
/// first window and writes nothing.
pub fn run_reconstruct(cfg: &RunConfig, dry_run: bool) -> Result<ReconstructOutcome> {
    cfg.validate()?;
    let body = load_body(cfg.paths.body.as_deref())?;
    let mut reference = read_reference(&cfg.paths.reference, &body)?;
    let truth = match &cfg.paths.ground_truth {
        Some(p) => {
            let t = read_reference(p, &body)?;
            if t.len() != reference.len() {
                bail!("ground truth has {} frames, reference has {}", t.len(), reference.len());
            }
            Some(t)
        }
        None => None,
    };
    let mut log = String::new();
    writeln!(log, "# physmotion run log 1").unwrap();
    writeln!(log, "reference: {} ({} frames at {} fps)", cfg.paths.reference.display(), reference.len(), reference.fps).unwrap();
    if cfg.ground_plane.estimate {
        let (moved, est) = ground_align(cfg, &body, &reference)?;
        writeln!(log, "ground transform: {:?} loss {:.6e}", est.transform, est.loss).unwrap();
        log::info!("ground plane loss {:.3e}", est.loss);
        reference = moved;
    }
    let engine = build_engine(cfg, &body, reference.fps, reference.camera)?;
    let seq = sequence_config(cfg);
    let spans = window_starts(reference.len(), seq.window_frames, seq.overlap)?;
    if dry_run {
        let (s, e) = spans[0];
        let slice = reference.slice(s, e);
        let (x0, orient) = engine.seed_parameters(&slice);
        let loss = engine.evaluate(&slice, &x0, &orient)?.loss;
        log::info!("dry run: {} windows, first window seed loss {loss:.6}", spans.len());
        return Ok(ReconstructOutcome { loss, written: Vec::new() });
    }
    let dir = &cfg.paths.output_dir;
    std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
    let mut written = Vec::new();
    writeln!(log, "windows: {} of {} frames, overlap {}", spans.len(), seq.window_frames, seq.overlap).unwrap();
    let result = match reconstruct_sequence(&engine, &reference, &seq) {
        Ok(r) => r,
        Err(e) => {
            writeln!(log, "status: FAILED ({e}); no reconstruction written").unwrap();
            put(dir, RUN_LOG, &log, &mut written)?;
            return Err(anyhow!(e).context("reconstruction failed"));
        }
    };
    log_windows(&mut log, &result);
    let qs: Vec<Vec<f64>> = result.frames.iter().map(|s| s.q.clone()).collect();
    let recon = rendered_reference(&body, &reference.camera, reference.fps, &qs);
    let file = TrajectoryFile::with_states(&recon, &result.frames)?;
    io::write_trajectory(&dir.join(RECONSTRUCTION_FILE), &file)?;
    written.push(dir.join(RECONSTRUCTION_FILE));
    io::write_controls(&dir.join(CONTROLS_FILE), &ControlsFile::new(&result.initial_state, &result.controls))?;
    written.push(dir.join(CONTROLS_FILE));

    let t = &cfg.metrics;
    let mut cs = vec![compare_labelled(&body, "reconstruction_vs_reference", &recon, &reference, true, t)?];
    if let Some(truth) = &truth {
        cs.push(compare_labelled(&body, "reconstruction_vs_ground_truth", &recon, truth, true, t)?);
        cs.push(compare_labelled(&body, "reference_vs_ground_truth", &reference, truth, false, t)?);
    }
    write_metrics(dir, &cs, t, &mut written)?;
    let traces: Vec<(usize, Vec<f64>)> = result.windows.iter().enumerate().map(|(i, w)| (i, w.trace.clone())).collect();
    put(dir, LOSS_TRACE_CSV, &io::loss_trace_csv(&traces), &mut written)?;
    writeln!(log, "final loss {:.9} {:?}", result.loss, result.components).unwrap();
    writeln!(log, "status: ok").unwrap();
    put(dir, RUN_LOG, &log, &mut written)?;
    Ok(ReconstructOutcome { loss: result.loss, written })
}

fn log_windows(log: &mut String, r: &SequenceResult) {
    for (i, w) in r.windows.iter().enumerate() {
        writeln!(
            log,
            "window {i} start {} frames {}: loss {:.9} -> {:.9}, {} evaluations, {} iterates",
            w.start_frame,
            w.controls.len() + 1,
            w.seed_loss,
            w.report.loss,
            w.evaluations,
            w.trace.len()
        )
        .unwrap();
    }
    for rf in &r.refinements {
        writeln!(log, "refit start {}: loss {:.9} -> {:.9}, {} evaluations", rf.start_frame, rf.before, rf.after, rf.evaluations)
            .unwrap();
    }
}

/// Forward rollout of a controls file. The camera comes from `camera_from`.
pub fn run_simulate(cfg: &RunConfig, body: &BodySpec, controls_path: &Path, camera: Camera, output: &Path) -> Result<Vec<SimState<f64>>> {
    let c = io::read_controls(controls_path)?;
    let init = c.initial_state.to_state();
    if init.q.len() != body.nq() || init.qd.len() != body.nv() {
        bail!("{}: initial state does not match the body ({} q, {} qd)", controls_path.display(), body.nq(), body.nv());
    }
    let controls = c.controls();
    let engine = build_engine(cfg, body, controls.fps, camera)?;
    let frames = resimulate(&engine, &init, &controls)?;
    let qs: Vec<Vec<f64>> = frames.iter().map(|s| s.q.clone()).collect();
    let traj = rendered_reference(body, &camera, controls.fps, &qs);
    io::write_trajectory(output, &TrajectoryFile::with_states(&traj, &frames)?)?;
    Ok(frames)
}

/// Scores `pred` against `target`; writes metrics files when `output_dir` is given.
pub fn run_metrics(body: &BodySpec, pred: &Path, target: &Path, output_dir: Option<&Path>) -> Result<(MetricReport, String)> {
    let pf = io::read_trajectory(pred)?;
    let p = pf.reference();
    p.validate(body).with_context(|| format!("invalid trajectory {}", pred.display()))?;
    let t = read_reference(target, body)?;
    let toggles = MetricsToggles::default();
    let c = compare_labelled(body, "prediction_vs_reference", &p, &t, pf.states().is_some(), &toggles)?;
    let text = io::metrics_text(&[(c.label.clone(), c.report.clone())]);
    if let Some(dir) = output_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        write_metrics(dir, std::slice::from_ref(&c), &toggles, &mut Vec::new())?;
    }
    Ok((c.report, text))
}

/// Estimates the ground frame of a trajectory and writes it re-expressed there.
pub fn run_ground_plane(cfg: &RunConfig, body: &BodySpec, input: &Path, output: &Path) -> Result<GroundEstimate> {
    let r = read_reference(input, body)?;
    let (moved, est) = ground_align(cfg, body, &r)?;
    io::write_trajectory(output, &TrajectoryFile::from_reference(&moved))?;
    Ok(est)
}
