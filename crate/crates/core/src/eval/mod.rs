//! Evaluation: splits, thresholds, metrics with uncertainty, AUROC comparison,
//! breakdowns and bias auditing.

pub mod bootstrap;
pub mod delong;
pub mod fairness;
pub mod groups;
pub mod metrics;
pub mod report;
pub mod split;
pub mod threshold;

pub use bootstrap::{bootstrap_ci, quantile_sorted, CiMethod, Interval, DEFAULT_RESAMPLES};
pub use delong::{delong_test, DeLong};
pub use fairness::{age_bucket, bias_audit, BiasAudit, GroupRates};
pub use groups::{
    disagreement_analysis, evaluate_by_group, evaluate_by_horizon, horizon_of, DisagreementReport, GroupReports,
    ScorerPair, HORIZON_NAMES,
};
pub use metrics::{auroc, average_precision, brier, midranks, Confusion, Metric};
pub use report::{metric_report, point_metrics, BootstrapConfig, Estimate, MetricReport};
pub use split::{largest_remainder, stratified_split, Split, SplitUnit, SubgroupSplit, DEFAULT_FRACTIONS};
pub use threshold::{select_threshold, DEFAULT_SENSITIVITY};
