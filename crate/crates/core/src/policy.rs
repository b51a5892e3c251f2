//! Common surface shared by every bandit policy in the crate.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, usage, Result};
use crate::logistic::{FitOptions, Sample};

/// How a round's arm was chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    /// Wide confidence interval; sample joins the level's pilot set.
    ExploreToPilot,
    /// Wide confidence interval; sample joins the level's estimation set.
    ExploreToEstimation,
    /// Wide confidence interval in a single-bucket level scheme.
    Explore,
    /// Forced uniform exploration while a level's bucket fills up.
    Warmup,
    /// Every width below `1/√T`: greedy on the level's means.
    Exploit,
    /// The level walk ran out of levels: greedy on the last level's means.
    ExploitCapped,
    /// Arm drawn by posterior sampling.
    Sampled,
}

impl Branch {
    pub const ALL: [Branch; 7] = [
        Branch::ExploreToPilot,
        Branch::ExploreToEstimation,
        Branch::Explore,
        Branch::Warmup,
        Branch::Exploit,
        Branch::ExploitCapped,
        Branch::Sampled,
    ];

    /// True when the round's sample is stored in a level bucket.
    pub fn fills_bucket(self) -> bool {
        matches!(
            self,
            Branch::ExploreToPilot | Branch::ExploreToEstimation | Branch::Explore | Branch::Warmup
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            Branch::ExploreToPilot => "explore-to-pilot",
            Branch::ExploreToEstimation => "explore-to-estimation",
            Branch::Explore => "explore",
            Branch::Warmup => "warmup",
            Branch::Exploit => "exploit",
            Branch::ExploitCapped => "exploit-capped",
            Branch::Sampled => "sampled",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyDecision {
    /// Zero-based arm index.
    pub action: usize,
    /// One-based level at which the walk stopped (0 for level-free policies).
    pub level: usize,
    pub branch: Branch,
    pub width: f64,
    pub mean: f64,
}

/// Gradient-descent budget for every logistic fit a policy performs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitSchedule {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for FitSchedule {
    fn default() -> Self {
        Self {
            steps: FitOptions::DEFAULT_STEPS,
            learning_rate: FitOptions::DEFAULT_LEARNING_RATE,
        }
    }
}

impl FitSchedule {
    pub(crate) fn options(&self, radius: f64, reg: f64, warm: &DVector<f64>) -> FitOptions {
        FitOptions {
            steps: self.steps,
            learning_rate: self.learning_rate,
            radius,
            reg,
            warm_start: Some(warm.clone()),
        }
    }
}

/// Per-level bucket sizes at the end of a run. Single-bucket policies report
/// their buckets under `estimation` and leave `pilot` at zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketSizes {
    pub pilot: Vec<usize>,
    pub estimation: Vec<usize>,
}

pub trait Policy: Send {
    fn name(&self) -> &'static str;

    /// Chooses an arm for `round` (1-based) given the `K` contexts.
    fn select(&mut self, round: usize, contexts: &[DVector<f64>]) -> Result<PolicyDecision>;

    /// Feeds back the realized reward of the chosen arm.
    fn observe(&mut self, decision: &PolicyDecision, sample: Sample) -> Result<()>;

    fn bucket_sizes(&self) -> BucketSizes;

    /// Deterministic invariants that currently fail, described by name.
    fn audit(&self) -> Vec<String>;
}

/// Index of the largest value; ties go to the lowest index.
pub(crate) fn argmax(values: impl IntoIterator<Item = f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.into_iter().enumerate() {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

pub(crate) fn check_contexts(contexts: &[DVector<f64>], arms: usize, dim: usize) -> Result<()> {
    if contexts.len() != arms {
        return Err(usage(format!(
            "expected {arms} contexts, got {}",
            contexts.len()
        )));
    }
    for x in contexts {
        check_dim(dim, x.len(), "context")?;
    }
    Ok(())
}
