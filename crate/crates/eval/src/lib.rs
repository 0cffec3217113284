//! Evaluation of the prompt/label factorial matrix against classification
//! backends, plus teacher scale-labelling and training-file export.

pub mod harness;
pub mod metrics;
pub mod teacher;

pub use harness::{
    classification_text, classify_one, interpret, report_table, run_matrix, run_matrix_with, write_outputs,
    Classifiers, ConfigRun, EvalError, EvalOptions, EvalReport, Interval, Parsed, Prediction, CLASSIFY_STAGE,
};
pub use metrics::{
    accuracy, bootstrap_interval, weighted_f1, Metric, MetricError, Pair, CONFIDENCE, DEFAULT_RESAMPLES,
};
pub use teacher::{
    export_training, run_teacher, ExportCounts, ExportOptions, ExportSummary, TeacherRun, TrainingExample,
    TEACHER_STAGE,
};
