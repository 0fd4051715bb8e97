//! Trajectory optimization over windows of the sequence.

pub mod basin;
pub mod bfgs;
pub mod rollout;
pub mod window;

pub use rollout::{fd_velocity, params_to_q, q_to_params, ParamLayout, RolloutEngine, RolloutReport};
pub use bfgs::{bfgs_minimize, BfgsOptions, BfgsResult, BfgsStatus};
pub use basin::{basin_hopping, BasinHoppingConfig, BasinHoppingResult, BasinStep};
pub use window::{
    optimize_window, reconstruct_sequence, refine_window, Refinement, resimulate, stitch_states, stitch_windows, WindowFrames, window_starts, window_sweep, PerturbationScales,
    SearchConfig, SearchMethod, SequenceConfig, SequenceResult, StitchMode, WindowControls, WindowProblem, WindowResult,
};
