//! Run orchestration, artifacts and the command-line interface.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod runs;

pub use checkpoint::{Checkpoint, CHECKPOINT_HEADER};
pub use config::{domain_digest, Mode, Overrides, RunConfig, Scale};
pub use runs::{
    cmd_evaluate, evaluate_against, measurements, point_sets, run_pretrain, run_train, run_truth, truth_quality,
    write_artifacts, write_history, write_metrics, HistoryRow, RunRecord, RunSeeds, TruthQuality, HISTORY_COLUMNS,
    TRUE_VOLTAGE,
};
