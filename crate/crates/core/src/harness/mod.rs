//! Experiment orchestration: configuration, seeded sweeps and result files.

pub mod config;
pub mod output;
pub mod sweep;

pub use config::{ExperimentConfig, SamplingRule, Setup};
pub use output::{emit_results, load_results, EmittedFiles, Metadata};
pub use sweep::{
    child_seed, draw_trial, run_ber_sweep, run_frames_sweep, run_nmse_sweep, Execution, Metric,
    SweepResult, SweepRow, TrialDraw, TrialRecord, GENIE,
};
