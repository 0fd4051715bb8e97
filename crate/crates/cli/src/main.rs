use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use physmotion::io;
use physmotion_cli::config::RunConfig;
use physmotion_cli::pipeline;

/// Physics-based reconstruction of human motion from kinematic estimates.
#[derive(Parser, Debug)]
#[command(name = "physmotion", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Optimize a simulated motion that follows a reference trajectory.
    Reconstruct(ReconstructArgs),
    /// Roll out a controls file.
    Simulate(SimulateArgs),
    /// Score a trajectory against another.
    Metrics(MetricsArgs),
    /// Estimate the ground frame of a trajectory and re-express it there.
    GroundPlane(GroundPlaneArgs),
}

#[derive(Args, Debug)]
struct Overrides {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Window length in frames.
    #[arg(long)]
    window: Option<usize>,
    /// Window overlap as a fraction of the window's control frames.
    #[arg(long)]
    overlap: Option<f64>,
    #[arg(long)]
    basins: Option<usize>,
    /// Residual root wrench cap, N and N·m per component.
    #[arg(long)]
    residual_cap: Option<f64>,
}

impl Overrides {
    fn apply(&self, c: &mut RunConfig) {
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.workers {
            c.workers = v;
        }
        if let Some(v) = self.window {
            c.optimizer.window_frames = v;
        }
        if let Some(v) = self.overlap {
            c.optimizer.overlap = v;
        }
        if let Some(v) = self.basins {
            c.optimizer.basins = v;
        }
        if let Some(v) = self.residual_cap {
            c.physics.residual_cap = v;
        }
    }
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    overrides: Overrides,
    /// Validate inputs and evaluate one window seed; write nothing.
    #[arg(long)]
    dry_run: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Run config supplying body and physics settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    controls: PathBuf,
    #[arg(long)]
    output: PathBuf,
    /// Trajectory whose camera is used for rendered keypoints; defaults to the config's reference.
    #[arg(long)]
    camera_from: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    /// Body file; the built-in humanoid when absent.
    #[arg(long)]
    body: Option<PathBuf>,
    /// Also write metrics.txt, metrics.csv and per_frame.csv here.
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct GroundPlaneArgs {
    #[arg(long)]
    config: PathBuf,
    /// Input trajectory; defaults to the config's reference.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    output: PathBuf,
}

fn reconstruct(a: &ReconstructArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    a.overrides.apply(&mut cfg);
    let out = pipeline::run_reconstruct(&cfg, a.dry_run)?;
    if a.dry_run {
        println!("dry run ok: first window seed loss {:.6}", out.loss);
    } else {
        println!("final loss {:.6}", out.loss);
        for p in &out.written {
            println!("wrote {}", p.display());
        }
    }
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(&a.config)?;
    a.overrides.apply(&mut cfg);
    let body = pipeline::load_body(cfg.paths.body.as_deref())?;
    let source = a.camera_from.as_ref().unwrap_or(&cfg.paths.reference);
    if !source.is_file() {
        bail!("camera source not found: {}", source.display());
    }
    let camera = io::read_trajectory(source)?.camera;
    let frames = pipeline::run_simulate(&cfg, &body, &a.controls, camera, &a.output)?;
    println!("wrote {} frames to {}", frames.len(), a.output.display());
    Ok(())
}

fn metrics(a: &MetricsArgs) -> Result<()> {
    let body = pipeline::load_body(a.body.as_deref())?;
    let (_, text) = pipeline::run_metrics(&body, &a.pred, &a.reference, a.output_dir.as_deref())?;
    print!("{text}");
    Ok(())
}

fn ground_plane(a: &GroundPlaneArgs) -> Result<()> {
    let cfg = RunConfig::load(&a.config)?;
    let body = pipeline::load_body(cfg.paths.body.as_deref())?;
    let input = a.input.as_ref().unwrap_or(&cfg.paths.reference);
    let est = pipeline::run_ground_plane(&cfg, &body, input, &a.output)?;
    let json = serde_json::json!({ "transform": est.transform, "loss": est.loss });
    println!("{}", serde_json::to_string_pretty(&json).context("serializing transform")?);
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHYSMOTION_LOG", "warn")).init();
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Reconstruct(a) => reconstruct(a),
        Command::Simulate(a) => simulate(a),
        Command::Metrics(a) => metrics(a),
        Command::GroundPlane(a) => ground_plane(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
