//! Objective metrics, the real-time-factor harness and rating aggregation.

mod mos;
mod pesq;
mod report;
mod rtf;
mod sisnr;
mod stoi;

pub use mos::{
    aggregate_mos, per_clip_scores, read_ratings, t_interval_half_width, MosSummary, RatingRecord,
    Scores,
};
pub use pesq::PesqAdapter;
pub use report::{
    enhanced_path, evaluate_dataset, evaluate_entry, write_report, AggregateRow, ClipMetrics,
    EvalConfig, MetricSet, MetricsReport, METRICS_CSV, METRICS_JSONL, SUMMARY_JSON,
};
pub use rtf::{measure_rtf, median, real_time_factor, MachineInfo, RtfReport};
pub use sisnr::{sisnr, SISNR_CAP_DB};
pub use stoi::stoi;
