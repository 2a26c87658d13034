//! Classification metrics, ROC/AUC, ratio sweeps and the variance check.

pub mod metrics;
pub mod roc;
pub mod sweep;
pub mod variance;

pub use metrics::{metrics_from_confusion, ConfusionCounts, Metrics};
pub use roc::{roc_auc, Roc, RocPoint};
pub use sweep::{ratio_sweep, CellResult, Evaluation, SweepResult};
pub use variance::{variance_reduction_check, SyntheticVarianceSpec, VarianceReport};
