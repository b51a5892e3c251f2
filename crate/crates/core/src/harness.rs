//! Seeded multi-run experiments, aggregation and result files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{BaselineConfig, DdrtsGlm, SupBaseline, SupWidth};
use crate::config::{ProblemConfig, Variant};
use crate::environment::{stream_rng, EnvironmentInstance, Regime, POLICY_STREAM, REWARD_STREAM};
use crate::error::{config, Error, Result};
use crate::logistic::Sample;
use crate::numerics::{logdet_ratio_bound, DesignState};
use crate::policy::{Branch, BucketSizes, FitSchedule, Policy};
use crate::supsplitlog::SupSplitLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algo {
    #[serde(rename = "supsplitlog")]
    SupSplitLog,
    #[serde(rename = "supsplitlog-dd")]
    SupSplitLogDd,
    #[serde(rename = "supcb-glm")]
    SupCbGlm,
    #[serde(rename = "suplogistic")]
    SupLogistic,
    #[serde(rename = "ddrts-glm")]
    DdrtsGlm,
}

impl Algo {
    pub const ALL: [Algo; 5] = [
        Algo::SupSplitLog,
        Algo::SupSplitLogDd,
        Algo::SupCbGlm,
        Algo::SupLogistic,
        Algo::DdrtsGlm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::SupSplitLog => "supsplitlog",
            Algo::SupSplitLogDd => "supsplitlog-dd",
            Algo::SupCbGlm => "supcb-glm",
            Algo::SupLogistic => "suplogistic",
            Algo::DdrtsGlm => "ddrts-glm",
        }
    }
}

impl fmt::Display for Algo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algo {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algo::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| config(format!("unknown algorithm {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(config(format!("unknown output format {other:?}"))),
        }
    }
}

/// One experiment: an algorithm on one regime over a list of seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub algo: Algo,
    pub problem: ProblemConfig,
    pub regime: Regime,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub format: OutputFormat,
    pub audit: bool,
    pub fit: FitSchedule,
    /// Baseline warm-up per level; `√(dT)` when absent.
    pub warmup: Option<f64>,
    pub mc_samples: usize,
    pub axis_aligned: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            algo: Algo::SupSplitLogDd,
            problem: ProblemConfig::default(),
            regime: Regime::Middle,
            seeds: (0..10).collect(),
            output: None,
            format: OutputFormat::Csv,
            audit: false,
            fit: FitSchedule::default(),
            warmup: None,
            mc_samples: 1,
            axis_aligned: false,
        }
    }
}

impl ExperimentSpec {
    pub fn new(algo: Algo, problem: ProblemConfig, regime: Regime, seeds: Vec<u64>) -> Self {
        Self {
            algo,
            problem,
            regime,
            seeds,
            ..Self::default()
        }
    }

    /// The problem with the variant implied by the algorithm.
    pub fn effective_problem(&self) -> ProblemConfig {
        let mut p = self.problem.clone();
        match self.algo {
            Algo::SupSplitLog => p.variant = Variant::Fixed,
            Algo::SupSplitLogDd => p.variant = Variant::DataDependent,
            _ => {}
        }
        p
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(config("at least one seed is required"));
        }
        self.effective_problem().validate()?;
        self.baseline_config().validate()
    }

    fn baseline_config(&self) -> BaselineConfig {
        let mut b = BaselineConfig::new(self.effective_problem());
        if let Some(w) = self.warmup {
            b.warmup = w;
        }
        b.fit = self.fit;
        b.mc_samples = self.mc_samples;
        b
    }

    /// Fresh policy for `seed`, drawing its randomness from the policy stream.
    pub fn build_policy(&self, seed: u64) -> Result<Box<dyn Policy>> {
        let rng = stream_rng(seed, POLICY_STREAM);
        Ok(match self.algo {
            Algo::SupSplitLog | Algo::SupSplitLogDd => {
                Box::new(SupSplitLog::new(self.effective_problem(), self.fit)?)
            }
            Algo::SupCbGlm => Box::new(SupBaseline::new(self.baseline_config(), SupWidth::Gram, rng)?),
            Algo::SupLogistic => {
                Box::new(SupBaseline::new(self.baseline_config(), SupWidth::Hessian, rng)?)
            }
            Algo::DdrtsGlm => Box::new(DdrtsGlm::new(self.baseline_config(), rng)?),
        })
    }

    pub fn instance(&self, seed: u64) -> Result<EnvironmentInstance> {
        EnvironmentInstance::generate_with(&self.effective_problem(), self.regime, seed, self.axis_aligned)
    }
}

/// Full per-round trace of one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub actions: Vec<usize>,
    pub levels: Vec<usize>,
    pub branches: Vec<Branch>,
    pub instant_regret: Vec<f64>,
    pub cumulative_regret: Vec<f64>,
    /// Log-det ratio of `κλI + Σ` over all `K` contexts of each round so far.
    pub logdet_all_arms: Vec<f64>,
    /// Log-det ratio of `κλI + Σ` over the chosen contexts so far.
    pub logdet_chosen: Vec<f64>,
    /// `r_t − μ(x_{t,a_t}ᵀθ*)`.
    pub noise: Vec<f64>,
    /// `Σ_t min(1, ‖x_t‖²_{V_{t−1}⁻¹})` over the chosen contexts.
    pub elliptical_potential: f64,
    pub buckets: BucketSizes,
    pub violations: Vec<String>,
    pub realized_kappa: f64,
    pub instance_hash: String,
}

impl RunRecord {
    pub fn final_regret(&self) -> f64 {
        self.cumulative_regret.last().copied().unwrap_or(0.0)
    }

    pub fn branch_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for b in &self.branches {
            *counts.entry(b.name().to_string()).or_insert(0) += 1;
        }
        counts
    }

    /// Rounds decided at each level; index 0 counts level-free decisions.
    pub fn level_histogram(&self) -> Vec<usize> {
        let top = self.levels.iter().copied().max().unwrap_or(0);
        let mut hist = vec![0; top + 1];
        for &s in &self.levels {
            hist[s] += 1;
        }
        hist
    }

    pub fn summary(&self) -> RunSummary {
        RunSummary {
            seed: self.seed,
            final_regret: self.final_regret(),
            final_logdet_all_arms: self.logdet_all_arms.last().copied().unwrap_or(0.0),
            final_logdet_chosen: self.logdet_chosen.last().copied().unwrap_or(0.0),
            buckets: self.buckets.clone(),
            branch_counts: self.branch_counts(),
            level_histogram: self.level_histogram(),
            audit_passed: self.violations.is_empty(),
            violations: self.violations.clone(),
            realized_kappa: self.realized_kappa,
            instance_hash: self.instance_hash.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub final_regret: f64,
    pub final_logdet_all_arms: f64,
    pub final_logdet_chosen: f64,
    pub buckets: BucketSizes,
    pub branch_counts: BTreeMap<String, usize>,
    pub level_histogram: Vec<usize>,
    pub audit_passed: bool,
    pub violations: Vec<String>,
    pub realized_kappa: f64,
    pub instance_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub algo: Algo,
    pub problem: ProblemConfig,
    pub regime: Regime,
    pub seeds: Vec<u64>,
    pub regret_mean: Vec<f64>,
    /// Population standard deviation across seeds.
    pub regret_std: Vec<f64>,
    pub logdet_all_arms_mean: Vec<f64>,
    pub logdet_chosen_mean: Vec<f64>,
    pub runs: Vec<RunSummary>,
}

impl AggregateResult {
    pub fn final_regret_mean(&self) -> f64 {
        self.regret_mean.last().copied().unwrap_or(0.0)
    }

    pub fn final_logdet_all_arms_mean(&self) -> f64 {
        self.logdet_all_arms_mean.last().copied().unwrap_or(0.0)
    }
}

/// Runs one seed to the horizon and checks the deterministic invariants.
pub fn run_seed(spec: &ExperimentSpec, seed: u64) -> Result<RunRecord> {
    let env = spec.instance(seed)?;
    let mut policy = spec.build_policy(seed)?;
    simulate(&env, policy.as_mut())
}

/// Plays `policy` against `env` for the full horizon.
pub fn simulate(env: &EnvironmentInstance, policy: &mut dyn Policy) -> Result<RunRecord> {
    let p = env.problem();
    let horizon = p.horizon;
    let mut rewards = stream_rng(env.seed(), REWARD_STREAM);
    let mut all_arms = DesignState::new(p.dim, p.ridge())?;
    let mut chosen = DesignState::new(p.dim, p.ridge())?;
    let mut rec = RunRecord {
        seed: env.seed(),
        actions: Vec::with_capacity(horizon),
        levels: Vec::with_capacity(horizon),
        branches: Vec::with_capacity(horizon),
        instant_regret: Vec::with_capacity(horizon),
        cumulative_regret: Vec::with_capacity(horizon),
        logdet_all_arms: Vec::with_capacity(horizon),
        logdet_chosen: Vec::with_capacity(horizon),
        noise: Vec::with_capacity(horizon),
        elliptical_potential: 0.0,
        buckets: BucketSizes::default(),
        violations: Vec::new(),
        realized_kappa: env.realized_kappa(),
        instance_hash: env.content_hash(),
    };
    let mut total = 0.0;
    for t in 1..=horizon {
        let contexts = env.contexts(t)?;
        for x in contexts {
            all_arms.insert(x)?;
        }
        let decision = policy.select(t, contexts)?;
        let a = decision.action;
        let reward = env.sample_reward(t, a, &mut rewards)?;
        let regret = env.instant_regret(t, a)?;
        total += regret;
        let x = &contexts[a];
        rec.elliptical_potential += chosen.insert(x)?.min(1.0);

        rec.actions.push(a);
        rec.levels.push(decision.level);
        rec.branches.push(decision.branch);
        rec.instant_regret.push(regret);
        rec.cumulative_regret.push(total);
        rec.logdet_all_arms.push(all_arms.logdet_ratio());
        rec.logdet_chosen.push(chosen.logdet_ratio());
        rec.noise.push(f64::from(reward) - env.mean_reward(t, a)?);

        policy.observe(&decision, Sample::new(x.clone(), reward, t)?)?;
    }
    rec.buckets = policy.bucket_sizes();
    rec.violations = policy.audit();
    rec.violations.extend(run_violations(&rec, p));
    Ok(rec)
}

fn run_violations(rec: &RunRecord, p: &ProblemConfig) -> Vec<String> {
    let mut out = Vec::new();
    let slack = 1e-9;
    let logdet = rec.logdet_chosen.last().copied().unwrap_or(0.0);
    let bound = logdet_ratio_bound(p.dim, p.ridge(), p.horizon, 1.0);
    if logdet > bound * (1.0 + slack) {
        out.push(format!("chosen-arm log-det {logdet:.6e} exceeds {bound:.6e}"));
    }
    if rec.elliptical_potential > 2.0 * logdet * (1.0 + slack) + slack {
        out.push(format!(
            "elliptical potential {:.6e} exceeds 2·logdet = {:.6e}",
            rec.elliptical_potential,
            2.0 * logdet
        ));
    }
    let lipschitz = p.l_mu * 2.0 * p.radius;
    if let Some(t) = rec
        .instant_regret
        .iter()
        .position(|&r| !(0.0..=lipschitz + slack).contains(&r))
    {
        out.push(format!("instant regret at round {} outside [0, 2·L_mu·B]", t + 1));
    }
    out
}

/// Runs every seed (in parallel), aggregates in seed order and, when
/// auditing, fails on the first seed with a violated invariant.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<AggregateResult> {
    Ok(run_experiment_with_records(spec)?.0)
}

/// [`run_experiment`] that also hands back the per-seed traces.
pub fn run_experiment_with_records(spec: &ExperimentSpec) -> Result<(AggregateResult, Vec<RunRecord>)> {
    spec.validate()?;
    let records = spec
        .seeds
        .par_iter()
        .map(|&seed| run_seed(spec, seed))
        .collect::<Result<Vec<_>>>()?;
    if spec.audit {
        if let Some(bad) = records.iter().find(|r| !r.violations.is_empty()) {
            return Err(Error::Audit {
                seed: bad.seed,
                invariant: bad.violations.join("; "),
            });
        }
    }
    Ok((aggregate(spec, &records), records))
}

fn aggregate(spec: &ExperimentSpec, records: &[RunRecord]) -> AggregateResult {
    let horizon = spec.problem.horizon;
    let n = records.len() as f64;
    let column_mean = |f: &dyn Fn(&RunRecord) -> &Vec<f64>, t: usize| {
        records.iter().map(|r| f(r)[t]).sum::<f64>() / n
    };
    let mut regret_mean = Vec::with_capacity(horizon);
    let mut regret_std = Vec::with_capacity(horizon);
    let mut logdet_all_arms_mean = Vec::with_capacity(horizon);
    let mut logdet_chosen_mean = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let m = column_mean(&|r| &r.cumulative_regret, t);
        let var = records
            .iter()
            .map(|r| (r.cumulative_regret[t] - m).powi(2))
            .sum::<f64>()
            / n;
        regret_mean.push(m);
        regret_std.push(var.sqrt());
        logdet_all_arms_mean.push(column_mean(&|r| &r.logdet_all_arms, t));
        logdet_chosen_mean.push(column_mean(&|r| &r.logdet_chosen, t));
    }
    AggregateResult {
        algo: spec.algo,
        problem: spec.effective_problem(),
        regime: spec.regime,
        seeds: spec.seeds.clone(),
        regret_mean,
        regret_std,
        logdet_all_arms_mean,
        logdet_chosen_mean,
        runs: records.iter().map(RunRecord::summary).collect(),
    }
}

/// CSV header of [`emit_results`].
pub const CSV_COLUMNS: [&str; 5] = [
    "t",
    "regret_mean",
    "regret_std",
    "logdet_all_arms_mean",
    "logdet_chosen_mean",
];

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes the per-round table (CSV) or the whole result (JSON).
pub fn emit_results(result: &AggregateResult, path: &Path, format: OutputFormat) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    match format {
        OutputFormat::Csv => {
            let file = std::fs::File::create(path).map_err(io)?;
            let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
            w.write_record(CSV_COLUMNS)?;
            for t in 0..result.regret_mean.len() {
                w.write_record([
                    (t + 1).to_string(),
                    sci(result.regret_mean[t]),
                    sci(result.regret_std[t]),
                    sci(result.logdet_all_arms_mean[t]),
                    sci(result.logdet_chosen_mean[t]),
                ])?;
            }
            w.flush().map_err(io)?;
        }
        OutputFormat::Json => {
            let text = serde_json::to_string_pretty(result)?;
            std::fs::write(path, text + "\n").map_err(io)?;
        }
    }
    Ok(())
}

pub fn read_json_result(path: &Path) -> Result<AggregateResult> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(algo: Algo, horizon: usize, arms: usize, seeds: Vec<u64>) -> ExperimentSpec {
        ExperimentSpec::new(
            algo,
            ProblemConfig {
                dim: 2,
                horizon,
                arms,
                ..ProblemConfig::default()
            },
            Regime::High,
            seeds,
        )
    }

    #[test]
    fn single_arm_has_zero_regret() {
        for algo in Algo::ALL {
            let res = run_experiment(&tiny(algo, 10, 1, vec![3])).unwrap();
            assert_eq!(res.final_regret_mean(), 0.0, "{algo}");
        }
    }

    #[test]
    fn duplicated_seed_has_zero_std() {
        let (res, recs) = run_experiment_with_records(&tiny(Algo::SupCbGlm, 40, 3, vec![7, 7])).unwrap();
        assert_eq!(recs[0], recs[1]);
        assert!(res.regret_std.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn mean_curve_is_nondecreasing() {
        let res = run_experiment(&tiny(Algo::DdrtsGlm, 60, 4, vec![1, 2, 3])).unwrap();
        assert!(res.regret_mean.windows(2).all(|w| w[1] >= w[0]));
        assert!(res.regret_std.iter().all(|&s| s >= 0.0));
    }

    #[test]
    fn names_parse_back() {
        for algo in Algo::ALL {
            assert_eq!(algo.name().parse::<Algo>().unwrap(), algo);
            assert_eq!(serde_json::to_value(algo).unwrap(), algo.name());
        }
        assert!("ucb".parse::<Algo>().is_err());
        assert_eq!("JSON".parse::<OutputFormat>().unwrap(), OutputFormat::Json);
    }

    #[test]
    fn empty_seed_list_rejected() {
        assert!(matches!(
            run_experiment(&tiny(Algo::SupSplitLog, 10, 2, vec![])),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn algo_fixes_variant() {
        let mut spec = tiny(Algo::SupSplitLog, 10, 2, vec![0]);
        spec.problem.variant = Variant::DataDependent;
        assert_eq!(spec.effective_problem().variant, Variant::Fixed);
        spec.algo = Algo::SupSplitLogDd;
        spec.problem.variant = Variant::Fixed;
        assert_eq!(spec.effective_problem().variant, Variant::DataDependent);
    }
}
