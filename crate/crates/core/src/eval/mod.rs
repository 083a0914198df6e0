//! Metrics, simulated quality-matched analyzers, and experiment drivers.

mod experiments;
mod metrics;
mod synthetic;

pub use experiments::{
    cross_quality_matrix, items_from_manifest, mixed_quality_experiment, routed_setting, synthetic_items, task_metric,
    CrossQualityConfig, EvalItem, ExperimentReport, MetricMatrix, MixedExperimentConfig, OrderingCheck, SettingMetric,
    MIXED, ORACLE, STANDARD,
};
pub use metrics::{
    accuracy, adjacent_accuracy, average_precision, confusion, mean_ap, ConfusionMatrix, ImageDetection,
};
pub use synthetic::{
    quality_distance, simulate_analyzer, LinearCurve, SimulatedEstimator, SyntheticAnalyzer, SyntheticAnalyzerProfile,
};
