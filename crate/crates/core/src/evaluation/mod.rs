//! Metrics and the multi-seed benchmark runner.

mod benchmark;
mod metrics;
mod report;

pub use benchmark::{
    evaluate_model, run_benchmark, BenchmarkConfig, CellFailure, ChanceBasis, TestMetrics, TunedChoice,
};
pub use metrics::{above_chance, auc, chance_f1, confusion_metrics, mean_sd, Confusion, ConfusionMetrics};
pub use report::{
    aggregate, read_records, summary_text, write_report, AggregateRow, BenchmarkReport, MetricRecord,
};
