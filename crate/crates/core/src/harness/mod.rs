//! Experiment runner: configuration files, Monte Carlo and analytical curve
//! points, and result files.

pub mod align;
pub mod config;
pub mod output;
pub mod run;

pub use align::{align_columns, align_eigenvector, root_mean, subspace_squared_error};
pub use config::{
    preset, Experiment, ExperimentConfig, ExperimentKind, OperatingPoint, OutputFormat, Scene, SimulationMode,
    SweepAxis, Values, PRESETS,
};
pub use output::{write_csv, write_outputs};
pub use run::{
    analytical_desprit, analytical_dpm, rmse_centralized_esprit_mc, rmse_desprit_mc, rmse_dpm_mc, run_experiment,
    CurveKind, CurvePoint, McResult, RunReport, TrialPlan,
};
