//! Measurement protocols: accuracy, shift curves, divergences, and human judgments.

pub mod accuracy;
pub mod divergence;
pub mod human;
pub mod overlap;
pub mod stats;

pub use accuracy::{
    classify_regime, masked_topk, shift_curve, topk_accuracy, topk_accuracy_test, AccuracyReport, FacetAccuracy, MaskedAccuracy, Regime,
    ShiftBucket, ShiftCurve,
};
pub use divergence::{cosine_distance, js_divergence, kl_divergence, DivergenceMetric};
pub use human::{aggregate_judgments, human_eval, read_judgments, Choice, HumanEvalReport, JudgedProfile};
pub use overlap::{above_threshold, class_overlap_prf, Prf};
pub use stats::{average_ranks, spearman};
