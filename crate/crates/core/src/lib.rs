//! Bayesian and distributionally robust Bayesian recourse.
//!
//! Given a black-box binary classifier and an input it rejects, the crate
//! samples the classifier around the nearest decision-boundary point and
//! searches an l1 neighbourhood of the input for the point with the smallest
//! posterior odds of the unfavourable class. The robust variant replaces the
//! kernel density estimates by worst-case Gaussian mixtures drawn from
//! optimal-transport ambiguity sets, which hedges against future retraining
//! of the classifier.
//!
//! Modules, bottom-up:
//! - [`data`]: datasets, synthetic generator, CSV schemas, splits, scaling.
//! - [`classifier`]: the 20-50-20 MLP, AUC, model files.
//! - [`sampler`]: boundary search and local sampling.
//! - [`likelihood`]: optimistic / pessimistic mixture likelihood bounds.
//! - [`recourse`]: KDE, robust and Wachter recourse generators.
//! - [`harness`]: future-model ensembles, evaluation, Pareto sweeps.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod classifier;
pub mod data;
pub mod error;
pub mod harness;
pub mod likelihood;
pub mod linalg;
pub mod par;
pub mod recourse;
pub mod sampler;

pub use error::{Error, Result};
