//! Experiment harness: scenario runner, parameter sweeps and CSV output.

pub mod config;
pub mod io;
pub mod runner;
pub mod sweeps;

pub use config::{ExperimentConfig, Scale};
pub use runner::{run_all, run_spec, ControllerSpec, Prepared, ScenarioOutcome, ScenarioSpec};
pub use sweeps::{
    compare_controllers, importance_by_distance, importance_map, pressure_dump, robustness_sweep, roster,
    sweep_heterogeneity, sweep_s_and_hops, RatioSource,
};
