//! Experiment orchestration: pipelines, ε sweeps, the projection attack,
//! and result analysis.

pub mod attack;
pub mod config;
pub mod ffn;
pub mod report;
pub mod run;

pub use attack::{attack_single, run_attack, AttackRow};
pub use config::{AttackTarget, DataSource, EpsilonGrid, ExperimentConfig, FfnConfig, Pipeline};
pub use report::{analyze, score_predictions_file};
pub use run::{load_data, results_header, run_single, run_single_saving, run_sweep, ResultRow, RowFailure, SweepResult};
