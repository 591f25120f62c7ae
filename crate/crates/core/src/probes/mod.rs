//! Trainable lightweight readouts and the layer-sweep driver.

pub mod few_shot;
pub mod logistic;
pub mod ridge;
pub mod sweep;

pub use few_shot::{
    few_shot_evaluate, few_shot_odd_one_out, trials_from_manifest, FewShotConfig, FewShotOutcome,
    FewShotSummary, FewShotTrial,
};
pub use logistic::{fit_logistic, DiffVector, LogisticModel};
pub use ridge::{depth_training_rows, fit_ridge, fit_summary, predict_depth_grid, LinearProbe};
pub use sweep::{layer_sweep, LayerPoint};
