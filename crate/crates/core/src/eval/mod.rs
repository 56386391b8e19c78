//! Pose-error metrics, the LERP baseline and evaluation reports.

mod lerp;
mod metrics;
mod report;

pub use lerp::lerp_baseline;
pub use metrics::{all_metrics, l2p, l2q, npss, npss_channels, offset_curve, Metrics};
pub use report::{
    evaluate, write_metrics_csv, write_offsets_csv, write_report, ClipMetrics, EvalReport, Interpolator,
    IntervalSummary, LerpBaseline, OffsetCurve, DEFAULT_INTERVALS, EVAL_WINDOW, METRICS_CSV, OFFSETS_CSV,
    REPORT_JSON,
};

#[cfg(test)]
mod tests;
