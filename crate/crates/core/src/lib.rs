//! Transporting randomized-trial results to target populations.
//!
//! * [`diagram`]: selection diagrams, d-separation and the search for
//!   baseline covariate sets that make a trial result transportable.
//! * [`standardization`]: standardizing stratum effects or stratum risks to
//!   a target covariate distribution, plus the equivalent IPW estimator.
//! * [`cost`]: counterfactual outcome state transition parameters.
//! * [`homogeneity`]: checkers for each conditional effect homogeneity
//!   definition and the logistic misspecification test.
//! * [`simgen`]: exact oracle tables, discrete structural models and trial
//!   sampling.

pub mod cost;
pub mod diagram;
pub mod error;
pub mod exact;
pub mod formats;
pub mod graph;
pub mod homogeneity;
pub mod logistic;
pub mod model;
pub mod simgen;
pub mod special;
pub mod standardization;

pub use error::{Error, Result};
pub use model::{EffectMeasure, MeasureKind, PopulationId, Risk, StratifiedCounts, Stratum};
