use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use physmotion::fixtures::{front_camera, standard_humanoid, Corruption, GaitScript};
use physmotion::io::{self, TrajectoryFile};
use physmotion::metrics::{compare, SkateParams};
use physmotion::optimizer::{SearchMethod, StitchMode};
use physmotion_cli::config::RunConfig;
use physmotion_cli::pipeline;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_physmotion"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
    config: PathBuf,
    cfg: RunConfig,
}

/// Scripted gait with corrupted reference, a tiny optimizer budget and a
/// config file, all in a fresh directory.
fn fixture(frames: usize, stitch: StitchMode) -> Fixture {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    let body = standard_humanoid();
    let mut cfg = RunConfig::new(root.join("reference.json"), root.join("out"));
    cfg.paths.ground_truth = Some(root.join("truth.json"));
    cfg.optimizer.window_frames = 6;
    cfg.optimizer.overlap = 0.2;
    cfg.optimizer.method = SearchMethod::Bfgs;
    cfg.optimizer.max_evals = 8;
    cfg.optimizer.stitch = stitch;
    let engine = pipeline::build_engine(&cfg, &body, 25.0, front_camera()).unwrap();
    let gt = GaitScript { frames, ..GaitScript::default() }.simulate(&engine).unwrap();
    let qs: Vec<Vec<f64>> = gt.frames.iter().map(|s| s.q.clone()).collect();
    let truth = physmotion::objectives::rendered_reference(&body, &front_camera(), 25.0, &qs);
    let reference = Corruption::default().apply(&body, &front_camera(), 25.0, &qs, 3);
    io::write_trajectory(&root.join("truth.json"), &TrajectoryFile::with_states(&truth, &gt.frames).unwrap()).unwrap();
    io::write_trajectory(&root.join("reference.json"), &TrajectoryFile::from_reference(&reference)).unwrap();
    let config = root.join("run.toml");
    std::fs::write(&config, cfg.to_toml()).unwrap();
    Fixture { _dir: dir, root, config, cfg }
}

#[test]
fn config_file_round_trips() {
    let f = fixture(4, StitchMode::States);
    assert_eq!(RunConfig::load(&f.config).unwrap(), f.cfg);
}

#[test]
fn relative_paths_resolve_against_config_dir() {
    let f = fixture(4, StitchMode::States);
    let mut c = f.cfg.clone();
    c.paths.reference = "reference.json".into();
    c.paths.output_dir = "out".into();
    c.paths.ground_truth = None;
    let p = f.root.join("relative.toml");
    std::fs::write(&p, c.to_toml()).unwrap();
    let back = RunConfig::load(&p).unwrap();
    assert_eq!(back.paths.reference, f.root.join("reference.json"));
    back.validate().unwrap();
}

#[test]
fn reconstruct_writes_artifacts_and_replays() {
    let f = fixture(10, StitchMode::Controls);
    let o = run(&["reconstruct", "--config", s(&f.config), "--workers", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = f.root.join("out");
    for name in ["reconstruction.json", "controls.json", "metrics.txt", "metrics.csv", "per_frame.csv", "loss_trace.csv", "run.log"] {
        assert!(out.join(name).is_file(), "{name} missing");
    }
    let recon = io::read_trajectory(&out.join("reconstruction.json")).unwrap();
    let states = recon.states().expect("per-frame states");
    assert_eq!(states.len(), 10);
    // The output re-ingests as a reference.
    let body = standard_humanoid();
    recon.reference().validate(&body).unwrap();

    let reference = io::read_trajectory(&f.root.join("reference.json")).unwrap().reference();
    let (rec_m, _) = compare(&body, &recon.reference(), &reference, &SkateParams::dynamic()).unwrap();
    let (ref_m, _) = compare(&body, &reference, &reference, &SkateParams::kinematic()).unwrap();
    assert!(rec_m.foot_skate <= ref_m.foot_skate, "{} > {}", rec_m.foot_skate, ref_m.foot_skate);
    let text = std::fs::read_to_string(out.join("metrics.txt")).unwrap();
    assert!(text.contains("[reconstruction_vs_ground_truth]") && text.contains("[reference_vs_ground_truth]"));
    assert!(std::fs::read_to_string(out.join("run.log")).unwrap().contains("status: ok"));

    // Replaying the controls reproduces the reconstruction exactly.
    let replay = f.root.join("replay.json");
    let o = run(&["simulate", "--config", s(&f.config), "--controls", s(&out.join("controls.json")), "--output", s(&replay)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(io::read_trajectory(&replay).unwrap().states().unwrap(), states);
}

#[test]
fn same_seed_gives_identical_bytes() {
    let f = fixture(8, StitchMode::States);
    let mut prev: Option<Vec<Vec<u8>>> = None;
    for (i, workers) in ["1", "2"].iter().enumerate() {
        let o = run(&["reconstruct", "--config", s(&f.config), "--seed", "7", "--workers", workers]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let files: Vec<Vec<u8>> = ["reconstruction.json", "metrics.txt", "metrics.csv", "per_frame.csv", "loss_trace.csv"]
            .iter()
            .map(|n| std::fs::read(f.root.join("out").join(n)).unwrap())
            .collect();
        if let Some(p) = &prev {
            assert!(p == &files, "run {i} differs");
        }
        prev = Some(files);
    }
}

#[test]
fn missing_body_file_is_named() {
    let f = fixture(4, StitchMode::States);
    let mut c = f.cfg.clone();
    c.paths.body = Some(f.root.join("no_such_body.toml"));
    let p = f.root.join("bad.toml");
    std::fs::write(&p, c.to_toml()).unwrap();
    let o = run(&["reconstruct", "--config", s(&p)]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("no_such_body.toml"), "{err}");
}

#[test]
fn dry_run_writes_nothing() {
    let f = fixture(8, StitchMode::States);
    let o = run(&["reconstruct", "--config", s(&f.config), "--dry-run"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("dry run ok"));
    assert!(!f.root.join("out").exists());
}

#[test]
fn incompatible_time_step_is_rejected() {
    let f = fixture(4, StitchMode::States);
    let mut c = f.cfg.clone();
    c.physics.dt = 0.0015;
    let p = f.root.join("dt.toml");
    std::fs::write(&p, c.to_toml()).unwrap();
    let o = run(&["reconstruct", "--config", s(&p), "--dry-run"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("does not divide"));
}

#[test]
fn schema_version_mismatch_fails() {
    let f = fixture(4, StitchMode::States);
    let text = std::fs::read_to_string(f.root.join("reference.json")).unwrap();
    std::fs::write(f.root.join("reference.json"), text.replacen("\"version\": 1", "\"version\": 9", 1)).unwrap();
    let o = run(&["reconstruct", "--config", s(&f.config), "--dry-run"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("version 9"));
}

#[test]
fn simulate_then_metrics_against_itself_is_zero() {
    let f = fixture(6, StitchMode::States);
    let body = standard_humanoid();
    // Controls from the scripted gait.
    let engine = pipeline::build_engine(&f.cfg, &body, 25.0, front_camera()).unwrap();
    let gt = GaitScript { frames: 6, ..GaitScript::default() }.simulate(&engine).unwrap();
    let controls = f.root.join("controls.json");
    io::write_controls(&controls, &io::ControlsFile::new(&gt.initial_state, &gt.controls)).unwrap();
    let sim = f.root.join("sim.json");
    let o = run(&["simulate", "--config", s(&f.config), "--controls", s(&controls), "--output", s(&sim)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(io::read_trajectory(&sim).unwrap().states().unwrap(), gt.frames);

    let out = f.root.join("m");
    let o = run(&["metrics", "--pred", s(&sim), "--reference", s(&sim), "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    for metric in ["mpjpe_g_mm", "mpjpe_mm", "mpjpe_pa_mm", "mpjpe_2d_px"] {
        let line = csv.lines().find(|l| l.contains(metric)).unwrap();
        let v: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(v.abs() < 1e-9, "{line}");
    }
}

#[test]
fn shifted_trajectory_gives_known_offsets() {
    let f = fixture(6, StitchMode::States);
    let body = standard_humanoid();
    let truth = io::read_trajectory(&f.root.join("truth.json")).unwrap();
    let mut shifted = truth.clone();
    for fr in shifted.frames.iter_mut() {
        fr.frame.root[0] += 0.1;
        fr.frame.root[2] -= 0.05;
        for k in fr.frame.keypoints.iter_mut() {
            k[0] += 3.0;
            k[1] -= 4.0;
        }
    }
    let p = f.root.join("shifted.json");
    io::write_trajectory(&p, &shifted).unwrap();
    let t = f.root.join("truth.json");
    let (m, text) = pipeline::run_metrics(&body, &p, &t, None).unwrap();
    let g = (0.1f64.hypot(0.05)) * 1000.0;
    assert!((m.mpjpe_g.unwrap() - g).abs() < 1e-9, "{:?}", m);
    assert!(m.mpjpe.unwrap().abs() < 1e-9 && m.mpjpe_pa.unwrap().abs() < 1e-6);
    assert!((m.mpjpe_2d.unwrap() - 5.0).abs() < 1e-9);
    assert!(text.contains("mpjpe_g_mm"));

    // The standalone report matches the library.
    let (lib, _) = compare(&body, &shifted.reference(), &truth.reference(), &SkateParams::dynamic()).unwrap();
    assert_eq!(lib, m);
    let o = run(&["metrics", "--pred", s(&p), "--reference", s(&t)]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains(&format!("{:.6}", g)));
}

#[test]
fn ground_plane_recovers_level_frame() {
    let f = fixture(4, StitchMode::States);
    let body = standard_humanoid();
    // Tilt and lift the truth, then estimate the frame back.
    let truth = io::read_trajectory(&f.root.join("truth.json")).unwrap().reference();
    let a = 0.3f64;
    let tilt = physmotion::scene::GroundTransform {
        rotation: [[1.0, 0.0, 0.0], [0.0, a.cos(), -a.sin()], [0.0, a.sin(), a.cos()]],
        translation: [0.2, 0.5, -0.1],
    };
    let moved = physmotion::scene::transform_reference(&body, &truth, &tilt).unwrap();
    let input = f.root.join("tilted.json");
    io::write_trajectory(&input, &TrajectoryFile::from_reference(&moved)).unwrap();
    let output = f.root.join("level.json");
    let o = run(&["ground-plane", "--config", s(&f.config), "--input", s(&input), "--output", s(&output)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let level = io::read_trajectory(&output).unwrap().reference();
    for (a, b) in level.frames.iter().zip(&truth.frames) {
        assert!((a.root[1] - b.root[1]).abs() < 0.01, "{} vs {}: {}", a.root[1], b.root[1], String::from_utf8_lossy(&o.stdout));
    }
}
