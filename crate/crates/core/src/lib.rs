//! Bias-aware aggregation of multi-criteria ordinal crowd ratings.
//!
//! Four normal-likelihood generative models (CIM, CDM, ImpCIM, ImpCDM) are
//! fitted by MAP estimation with Adam. The crate also ships a synthetic
//! data generator, the INDV-vs-SIMUL bias statistics and an experiment
//! runner that scores estimates against INDV ground truth by Spearman
//! correlation.

pub mod cli;
pub mod dataset;
pub mod inference;
pub mod models;
pub mod stats;
pub mod synth;

pub use dataset::{Condition, RatingDataset, Response};
pub use inference::{fit, fit_restarts, FitResult, OptimizerConfig};
pub use models::{HyperParams, ModelKind, ParameterSet};
