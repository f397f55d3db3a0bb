//! Exact oracles: joint counterfactual tables with prescribed homogeneity
//! properties, discrete structural models with enumerable joints, and
//! randomized trial sampling.

mod rng;
mod scenario;
mod structural;
mod table;
mod trial;

pub use rng::SplitMix64;
pub use scenario::{
    make_table, true_target_quantities, Enforcement, ScenarioSpec, StratumTruth, TrueQuantities,
    COVARIATE,
};
pub use structural::{enumerate_joint, JointDistribution, StructuralModel, MAX_ENUMERATED_NODES};
pub use table::{JointCell, JointCounterfactualCell, PotentialOutcomeTable};
pub use trial::{expected_counts, sample_trial, SampledRecord, TrialSample};
