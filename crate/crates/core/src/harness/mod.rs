//! End-to-end experiments: data generation, `ε` sweeps, the outlier
//! study and plot-ready CSV output.

pub mod config;
mod experiment;

pub use config::{
    default_k_support, parse_assignment, parse_pairs, EpsSpec, ExperimentConfig, ExperimentKind, Preset, Sampling,
    FULL_SUPPORT_MAX,
};
pub use experiment::{
    eps_tag, experiment_cloud, outlier_indices, run_experiment, OutlierRun, OutlierSummary, PowerLaw, ResultRow,
    ResultTable,
};
