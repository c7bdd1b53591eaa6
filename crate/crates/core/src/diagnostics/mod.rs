//! How well an operator matches the theory: model-RIP constants (sampled and
//! exact), the sample-complexity predicate, the reconstruction bound and
//! Monte-Carlo reconstruction experiments.

mod bounds;
mod experiment;
mod histogram;
mod rip;

pub use bounds::{
    theorem1_predicate, theorem2_bound, SampleComplexity, Theorem1Check, DEFAULT_C,
};
pub use experiment::{
    iht_experiment, reconstruction_experiment, theorem2_compliance, BoundReport,
    ReconstructionExperiment,
};
pub use histogram::{format_float, Histogram};
pub use rip::{
    empirical_rip, exact_deltas, exact_model_rip_delta, rip_2d_experiment, summarize,
    ExactDeltas, RipOrder, RipParams, RipReport, Summary, DEFAULT_ENUMERATION_CAP,
};
