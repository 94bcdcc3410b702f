//! Evaluation machinery: binarization, the F1 family, UAR/UAP, KLD,
//! multi-label ranking metrics, cross-corpus projection, predicted
//! co-occurrence, agreement grouping, silhouette and fold-split t-tests.

mod agreement;
mod classification;
mod multilabel;
mod report;
mod significance;

pub use agreement::{agreement_split, pairwise_agreement, silhouette};
pub use classification::{binarize, f1_scores, kld_eval, uar_uap, BinarizedLabels, ClassScores, F1Scores};
pub use multilabel::{multilabel_metrics, predicted_cooccurrence, project_predictions, MultiLabelMetrics};
pub use report::{eval_table, EvalReport};
pub use significance::{fold_assignment, fold_split_metric_ttest, fold_split_ttest, two_sample_ttest, FoldTTest, TTest};
