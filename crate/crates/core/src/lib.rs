//! Survival-risk modeling toolkit.
//!
//! Cohort preprocessing, Cox proportional-hazards and neural Cox models,
//! hyperparameter search, feature selection, censoring-aware evaluation, a
//! Framingham comparator, and a synthetic cohort generator with known
//! ground truth.

pub mod cohort;
pub mod cox;
pub mod framingham;
pub mod linalg;
pub mod metrics;
pub mod neural;
pub mod search;
pub mod selection;
pub mod stats;
pub mod step;
pub mod synth;
