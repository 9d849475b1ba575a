//! Experiment runner: configuration, the training loop, evaluation and
//! metrics I/O.

mod config;
mod metrics;
mod run;

pub use config::{EvalConfig, ExperimentConfig};
pub use metrics::{
    compute_auc, metrics_to_csv, parse_metrics_csv, write_metrics, EvalPoint, RunMetrics,
    METRICS_HEADER,
};
pub use run::{evaluate, evaluate_agent, evaluate_teacher, run_training, Experiment, StepTrace};
