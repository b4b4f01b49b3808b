//! Training loops, evaluation metrics and multi-seed summaries.

mod metrics;
mod runs;
mod train;

pub use metrics::{confusion_to_row_stochastic, evaluate, predict, Metrics, POSITIVE_CLASS};
pub use runs::{multi_run, run_seeds, RunSummary};
pub use train::{train_student, train_student_from, train_teacher, TrainConfig, TrainTrace, TrainedModel};
