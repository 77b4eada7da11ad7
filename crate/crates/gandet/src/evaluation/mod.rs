//! Detector evaluation: scoring, exact ranking metrics, operating-point
//! analysis, robustness sweeps, and report serialization.

mod metrics;
mod report;
mod score;

pub use metrics::{
    accuracy_at, auc, auc_brute, balanced_threshold, histogram, pd_at_far,
    per_family_threshold_spread, FamilyThreshold, PdAtFar, ScoreSet, ScoredItem, ThresholdSpread,
};
pub use report::{build_report, write_report_json, write_scores_csv, EvalReport, HISTOGRAM_BINS};
pub use score::{robustness_sweep, score_dataset, SweepPoint};
