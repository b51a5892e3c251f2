//! Logistic contextual bandits with sample-split, one-step-corrected
//! estimation, plus the baselines and the simulation harness used to compare
//! them.

pub mod baselines;
pub mod config;
pub mod environment;
pub mod error;
pub mod harness;
pub mod logistic;
pub mod numerics;
pub mod policy;
pub mod supsplitlog;

pub use config::{ProblemConfig, Variant};
pub use error::{Error, Result};
pub use logistic::{Sample, SampleSet};
pub use numerics::DesignState;
pub use policy::{BucketSizes, Branch, FitSchedule, Policy, PolicyDecision};
pub use supsplitlog::SupSplitLog;
pub use baselines::{BaselineConfig, DdrtsGlm, SupBaseline, SupWidth};
pub use environment::{EnvironmentInstance, Regime};
pub use harness::{run_experiment, AggregateResult, Algo, ExperimentSpec, OutputFormat, RunRecord};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    pub mod introduction {}
    #[doc = include_str!("../../../book/src/design-matrices.md")]
    pub mod design_matrices {}
    #[doc = include_str!("../../../book/src/estimation.md")]
    pub mod estimation {}
    #[doc = include_str!("../../../book/src/splitting-policy.md")]
    pub mod splitting_policy {}
    #[doc = include_str!("../../../book/src/data-dependent.md")]
    pub mod data_dependent {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    pub mod baselines {}
    #[doc = include_str!("../../../book/src/environments.md")]
    pub mod environments {}
    #[doc = include_str!("../../../book/src/experiments.md")]
    pub mod experiments {}
    #[doc = include_str!("../../../README.md")]
    pub mod readme {}
}
