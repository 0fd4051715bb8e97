//! Run configuration file (TOML). Relative paths resolve against the
//! directory holding the config file.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

use physmotion::objectives::LossWeights;
use physmotion::optimizer::{SearchMethod, StitchMode};

pub const CONFIG_FORMAT: &str = "physmotion-run";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    /// Body file; the built-in humanoid when absent.
    pub body: Option<PathBuf>,
    pub reference: PathBuf,
    /// Known motion to score against, in trajectory format.
    pub ground_truth: Option<PathBuf>,
    pub output_dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Physics {
    pub dt: f64,
    pub friction: f64,
    pub lcp_iterations: usize,
    pub kp: f64,
    pub kd: f64,
    /// Contacts between the feet and the world only.
    pub feet_contacts_only: bool,
    /// Per-component clamp on the residual root wrench, N and N·m. Zero disables it.
    pub residual_cap: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Physics { dt: 1e-3, friction: 0.8, lcp_iterations: 1, kp: 2000.0, kd: 20.0, feet_contacts_only: true, residual_cap: 0.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Optimizer {
    pub method: SearchMethod,
    pub window_frames: usize,
    pub overlap: f64,
    pub basins: usize,
    pub inner_iters: usize,
    pub max_evals: usize,
    pub refine_evals: usize,
    pub stitch: StitchMode,
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer {
            method: SearchMethod::BasinHopping,
            window_frames: 25,
            overlap: 0.25,
            basins: 5,
            inner_iters: 50,
            max_evals: 1000,
            refine_evals: 0,
            stitch: StitchMode::States,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsToggles {
    pub mpjpe: bool,
    pub mpjpe_2d: bool,
    pub tv: bool,
    pub foot_skate: bool,
    pub per_frame: bool,
}

impl Default for MetricsToggles {
    fn default() -> Self {
        MetricsToggles { mpjpe: true, mpjpe_2d: true, tv: true, foot_skate: true, per_frame: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GroundPlane {
    /// Re-express the reference in an estimated ground frame before optimizing.
    pub estimate: bool,
    /// Frames used for the estimate, evenly spread; zero means all.
    pub frames: usize,
    pub k: usize,
    pub delta: f64,
}

impl Default for GroundPlane {
    fn default() -> Self {
        GroundPlane { estimate: false, frames: 0, k: 20, delta: 0.2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub format: String,
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    pub paths: Paths,
    #[serde(default)]
    pub physics: Physics,
    #[serde(default)]
    pub optimizer: Optimizer,
    #[serde(default)]
    pub weights: LossWeights,
    #[serde(default)]
    pub metrics: MetricsToggles,
    #[serde(default)]
    pub ground_plane: GroundPlane,
}

fn one() -> usize {
    1
}

impl RunConfig {
    pub fn new(reference: PathBuf, output_dir: PathBuf) -> Self {
        RunConfig {
            format: CONFIG_FORMAT.into(),
            version: 1,
            seed: 0,
            workers: 1,
            paths: Paths { body: None, reference, ground_truth: None, output_dir },
            physics: Physics::default(),
            optimizer: Optimizer::default(),
            weights: LossWeights::default(),
            metrics: MetricsToggles::default(),
            ground_plane: GroundPlane::default(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut c: RunConfig = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        ensure!(c.format == CONFIG_FORMAT, "config {}: format must be {CONFIG_FORMAT:?}, got {:?}", path.display(), c.format);
        ensure!(c.version == 1, "config {}: unsupported version {}", path.display(), c.version);
        let base = path.parent().unwrap_or(Path::new("."));
        c.resolve(base);
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn resolve(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        fix(&mut p.reference);
        fix(&mut p.output_dir);
        if let Some(b) = p.body.as_mut() {
            fix(b);
        }
        if let Some(g) = p.ground_truth.as_mut() {
            fix(g);
        }
    }

    /// Checks values and that every input file exists.
    pub fn validate(&self) -> Result<()> {
        let mut inputs = vec![("reference", &self.paths.reference)];
        if let Some(b) = &self.paths.body {
            inputs.push(("body", b));
        }
        if let Some(g) = &self.paths.ground_truth {
            inputs.push(("ground truth", g));
        }
        for (what, p) in inputs {
            if !p.is_file() {
                bail!("{what} file not found: {}", p.display());
            }
        }
        let ph = &self.physics;
        ensure!(ph.dt > 0.0 && ph.dt.is_finite(), "physics.dt must be positive");
        ensure!(ph.friction >= 0.0, "physics.friction must be nonnegative");
        ensure!(ph.lcp_iterations >= 1, "physics.lcp_iterations must be at least 1");
        ensure!(ph.kp >= 0.0 && ph.kd >= 0.0, "gains must be nonnegative");
        ensure!(ph.residual_cap >= 0.0, "physics.residual_cap must be nonnegative");
        let o = &self.optimizer;
        ensure!(o.window_frames >= 2, "optimizer.window_frames must be at least 2");
        ensure!((0.0..1.0).contains(&o.overlap), "optimizer.overlap must be in [0, 1)");
        ensure!(o.basins >= 1 && o.inner_iters >= 1, "optimizer.basins and inner_iters must be positive");
        ensure!(self.workers >= 1, "workers must be at least 1");
        ensure!(self.ground_plane.k >= 1 && self.ground_plane.delta > 0.0, "ground_plane needs k >= 1 and delta > 0");
        Ok(())
    }

    /// Checks that the frame period is a whole number of steps.
    pub fn check_frame_rate(&self, fps: f64) -> Result<()> {
        let ratio = 1.0 / (fps * self.physics.dt);
        if !(ratio >= 1.0) || (ratio - ratio.round()).abs() > 1e-9 {
            bail!("physics.dt = {} does not divide the frame period 1/{fps} s", self.physics.dt);
        }
        Ok(())
    }
}
