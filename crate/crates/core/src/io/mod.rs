//! On-disk formats. JSON files carry a `format` name and integer `version`;
//! CSV files start with a `# <format> <version>` comment line.

use std::path::Path;

use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::control::ControlTrajectory;
use crate::dynamics::SimState;
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::objectives::{Camera, ReferenceFrame, ReferenceTrajectory};

pub const TRAJECTORY_FORMAT: &str = "physmotion-trajectory";
pub const CONTROLS_FORMAT: &str = "physmotion-controls";
pub const METRICS_FORMAT: &str = "physmotion-metrics";
pub const PER_FRAME_FORMAT: &str = "physmotion-per-frame";
pub const LOSS_TRACE_FORMAT: &str = "physmotion-loss-trace";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub q: Vec<f64>,
    pub qd: Vec<f64>,
}

impl From<&SimState<f64>> for StateRecord {
    fn from(s: &SimState<f64>) -> Self {
        StateRecord { q: s.q.clone(), qd: s.qd.clone() }
    }
}

impl StateRecord {
    pub fn to_state(&self) -> SimState<f64> {
        SimState { q: self.q.clone(), qd: self.qd.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameRecord {
    #[serde(flatten)]
    pub frame: ReferenceFrame,
    /// Simulated state, present in reconstruction outputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state: Option<StateRecord>,
}

/// A reference trajectory, optionally with the simulated state of every frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub format: String,
    pub version: u32,
    pub fps: f64,
    pub camera: Camera,
    pub frames: Vec<FrameRecord>,
}

impl TrajectoryFile {
    pub fn from_reference(r: &ReferenceTrajectory) -> Self {
        TrajectoryFile {
            format: TRAJECTORY_FORMAT.into(),
            version: VERSION,
            fps: r.fps,
            camera: r.camera,
            frames: r.frames.iter().map(|f| FrameRecord { frame: f.clone(), state: None }).collect(),
        }
    }

    pub fn with_states(r: &ReferenceTrajectory, states: &[SimState<f64>]) -> Result<Self> {
        if states.len() != r.len() {
            return Err(Error::InvalidInput(format!("{} states for {} frames", states.len(), r.len())));
        }
        let mut f = Self::from_reference(r);
        for (rec, s) in f.frames.iter_mut().zip(states) {
            rec.state = Some(s.into());
        }
        Ok(f)
    }

    pub fn reference(&self) -> ReferenceTrajectory {
        ReferenceTrajectory { fps: self.fps, camera: self.camera, frames: self.frames.iter().map(|f| f.frame.clone()).collect() }
    }

    /// Simulated states if every frame has one.
    pub fn states(&self) -> Option<Vec<SimState<f64>>> {
        self.frames.iter().map(|f| f.state.as_ref().map(StateRecord::to_state)).collect()
    }
}

/// Initial state and per-frame controls of a rollout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlsFile {
    pub format: String,
    pub version: u32,
    pub fps: f64,
    pub initial_state: StateRecord,
    /// Per control frame, in target layout (quaternion per spherical joint).
    pub targets: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub residual: Vec<[f64; 6]>,
}

impl ControlsFile {
    pub fn new(init: &SimState<f64>, controls: &ControlTrajectory) -> Self {
        ControlsFile {
            format: CONTROLS_FORMAT.into(),
            version: VERSION,
            fps: controls.fps,
            initial_state: init.into(),
            targets: controls.targets.clone(),
            residual: controls.residual.clone(),
        }
    }

    pub fn controls(&self) -> ControlTrajectory {
        ControlTrajectory { fps: self.fps, targets: self.targets.clone(), residual: self.residual.clone() }
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Read { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Write { path: path.to_path_buf(), source })
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

fn read_versioned<T: DeserializeOwned>(path: &Path, format: &str) -> Result<T> {
    let text = read_text(path)?;
    let parse = |msg: String| Error::Parse { path: path.to_path_buf(), msg };
    let h: Header = serde_json::from_str(&text).map_err(|e| parse(e.to_string()))?;
    if h.format != format {
        return Err(parse(format!("expected format {format:?}, found {:?}", h.format)));
    }
    if h.version != VERSION {
        return Err(parse(format!("unsupported {format} version {} (supported: {VERSION})", h.version)));
    }
    serde_json::from_str(&text).map_err(|e| parse(e.to_string()))
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn read_trajectory(path: &Path) -> Result<TrajectoryFile> {
    read_versioned(path, TRAJECTORY_FORMAT)
}

pub fn write_trajectory(path: &Path, t: &TrajectoryFile) -> Result<()> {
    write_text(path, &to_json(t))
}

pub fn read_controls(path: &Path) -> Result<ControlsFile> {
    read_versioned(path, CONTROLS_FORMAT)
}

pub fn write_controls(path: &Path, c: &ControlsFile) -> Result<()> {
    write_text(path, &to_json(c))
}

fn csv_text(format: &str, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory csv");
    for r in rows {
        w.write_record(&r).expect("in-memory csv");
    }
    let body = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv");
    format!("# {format} {VERSION}\n{body}")
}

/// Labelled metric reports as CSV: one row per (label, metric).
pub fn metrics_csv(reports: &[(String, MetricReport)]) -> String {
    let rows = reports
        .iter()
        .flat_map(|(label, r)| r.rows().into_iter().map(move |(n, v)| vec![label.clone(), n.to_string(), format!("{v}")]));
    csv_text(METRICS_FORMAT, &["comparison", "metric", "value"], rows)
}

/// Labelled metric reports as aligned text.
pub fn metrics_text(reports: &[(String, MetricReport)]) -> String {
    let mut s = format!("# {METRICS_FORMAT} {VERSION}\n");
    for (label, r) in reports {
        s.push_str(&format!("[{label}]\n"));
        for (n, v) in r.rows() {
            s.push_str(&format!("{n:<22} {v:.6}\n"));
        }
    }
    s
}

/// Per-frame series as CSV: a `frame` column followed by one column per series.
/// Missing entries (past a series' end, or NaN) are written as empty cells.
pub fn per_frame_csv(series: &[(String, Vec<f64>)]) -> String {
    let n = series.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
    let mut header = vec!["frame"];
    header.extend(series.iter().map(|(n, _)| n.as_str()));
    let rows = (0..n).map(|f| {
        let mut r = vec![f.to_string()];
        r.extend(series.iter().map(|(_, v)| v.get(f).filter(|x| !x.is_nan()).map(|x| format!("{x}")).unwrap_or_default()));
        r
    });
    csv_text(PER_FRAME_FORMAT, &header, rows)
}

/// Objective after each accepted local-search iterate, per window.
pub fn loss_trace_csv(traces: &[(usize, Vec<f64>)]) -> String {
    let rows = traces
        .iter()
        .flat_map(|(w, t)| t.iter().enumerate().map(move |(i, v)| vec![w.to_string(), i.to_string(), format!("{v}")]));
    csv_text(LOSS_TRACE_FORMAT, &["window", "iterate", "loss"], rows)
}

#[cfg(test)]
mod tests;
