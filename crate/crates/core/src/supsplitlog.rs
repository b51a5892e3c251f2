//! Level-wise elimination with sample splitting and one-step correction.
//!
//! Each level `s` keeps a bucket of explored rounds, split into a *pilot*
//! set (fits the initial estimate `θ̄`) and an *estimation* set (supplies the
//! Newton correction `θ̂`). Widths come from the estimation design
//! `V_E = κλI + Σ_E x xᵀ`; the pilot/estimation routing compares the pilot
//! width of the chosen arm with a level threshold `τ`.
//!
//! Two threshold schedules are provided: [`Variant::Fixed`] computes `β`
//! and every `τ^{(s)}` once from `d` and `T`; [`Variant::DataDependent`]
//! replaces `d·log(1 + T/(κλd))` with the running log-determinants of the
//! level designs.

use nalgebra::DVector;

use crate::config::{ProblemConfig, Variant};
use crate::error::{config, usage, Result};
use crate::logistic::{fit_pilot, NewtonAccumulator, Sample, SampleSet};
use crate::numerics::DesignState;
use crate::policy::{argmax, check_contexts, BucketSizes, Branch, FitSchedule, Policy, PolicyDecision};

/// Number of levels: `⌊0.5·log₂T⌋` for the fixed schedule and `⌊log₂T⌋`
/// for the data-dependent one, never below one.
pub fn compute_levels(horizon: usize, variant: Variant) -> Result<usize> {
    if horizon < 2 {
        return Err(config(format!("T must be at least 2, got {horizon}")));
    }
    let floor_log2 = horizon.ilog2() as usize;
    let levels = match variant {
        // ⌊x/2⌋ = ⌊⌊x⌋/2⌋ for x ≥ 0
        Variant::Fixed => floor_log2 / 2,
        Variant::DataDependent => floor_log2,
    };
    Ok(levels.max(1))
}

fn confidence_log(cfg: &ProblemConfig, levels: usize) -> f64 {
    (4.0 * cfg.horizon as f64 * levels as f64 * cfg.arms as f64 / cfg.delta).ln()
}

/// Width multiplier `α = 2(α₁ + α₂)`.
pub fn compute_alpha(cfg: &ProblemConfig, levels: usize) -> f64 {
    let l = confidence_log(cfg, levels);
    let alpha1 = (2.0 * cfg.l_mu * cfg.kappa * cfg.kappa * l).sqrt()
        + (cfg.kappa / (9.0 * cfg.lambda)).sqrt() * l;
    let alpha2 = cfg.radius * cfg.ridge().sqrt();
    2.0 * (alpha1 + alpha2)
}

/// Pilot confidence radius for the fixed schedule.
pub fn compute_beta_fixed(cfg: &ProblemConfig, levels: usize) -> f64 {
    let d = cfg.dim as f64;
    let inner = 0.5 * d * cfg.log_horizon_term() + 0.5 * (2.0 * levels as f64 / cfg.delta).ln();
    cfg.kappa * inner.sqrt() + cfg.radius * cfg.ridge().sqrt()
}

/// Pilot routing threshold `τ^{(s)}` of the fixed schedule.
pub fn compute_tau_fixed(cfg: &ProblemConfig, level: usize, beta: f64) -> f64 {
    let d = cfg.dim as f64;
    let denom = (32.0 * cfg.l_mu * cfg.kappa * d * cfg.log_horizon_term()).sqrt();
    let scale = 0.5f64.powi(level as i32) / denom;
    scale.min(1.0) / (beta * beta)
}

/// Pilot confidence radius `β_t^{(s)}` from the current pilot design.
pub fn compute_beta_adaptive(v_pilot: &DesignState, cfg: &ProblemConfig, levels: usize) -> f64 {
    let inner = v_pilot.logdet_ratio() + (2.0 * levels as f64 / cfg.delta).ln();
    cfg.kappa / 2f64.sqrt() * inner.sqrt() + cfg.radius * cfg.ridge().sqrt()
}

/// Pilot routing threshold `τ_t^{(s)}` from the current estimation design.
pub fn compute_tau_adaptive(v_est: &DesignState, beta: f64, cfg: &ProblemConfig, level: usize) -> f64 {
    let logdet = v_est.logdet_ratio();
    let scale = if logdet > 0.0 {
        0.5f64.powi(level as i32) / (32.0 * cfg.l_mu * cfg.kappa * logdet).sqrt()
    } else {
        f64::INFINITY
    };
    scale.min(1.0) / (beta * beta)
}

/// Bookkeeping for one level: its pilot/estimation split, their designs,
/// and the cached estimates.
#[derive(Debug, Clone)]
pub struct LevelState {
    level: usize,
    pilot: SampleSet,
    estimation: SampleSet,
    v_pilot: DesignState,
    v_est: DesignState,
    theta_bar: DVector<f64>,
    theta_hat: DVector<f64>,
    newton: NewtonAccumulator,
    pilot_dirty: bool,
    est_dirty: bool,
}

impl LevelState {
    fn new(level: usize, cfg: &ProblemConfig) -> Result<Self> {
        let zero = DVector::zeros(cfg.dim);
        Ok(Self {
            level,
            pilot: SampleSet::new(cfg.dim),
            estimation: SampleSet::new(cfg.dim),
            v_pilot: DesignState::new(cfg.dim, cfg.ridge())?,
            v_est: DesignState::new(cfg.dim, cfg.ridge())?,
            theta_bar: zero.clone(),
            theta_hat: zero.clone(),
            newton: NewtonAccumulator::new(zero, cfg.lambda),
            pilot_dirty: false,
            est_dirty: false,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn pilot(&self) -> &SampleSet {
        &self.pilot
    }

    pub fn estimation(&self) -> &SampleSet {
        &self.estimation
    }

    pub fn v_pilot(&self) -> &DesignState {
        &self.v_pilot
    }

    pub fn v_est(&self) -> &DesignState {
        &self.v_est
    }

    /// Last computed pilot estimate; stale while [`Self::is_dirty`].
    pub fn theta_bar(&self) -> &DVector<f64> {
        &self.theta_bar
    }

    /// Last computed corrected estimate; stale while [`Self::is_dirty`].
    pub fn theta_hat(&self) -> &DVector<f64> {
        &self.theta_hat
    }

    pub fn is_dirty(&self) -> bool {
        self.pilot_dirty || self.est_dirty
    }

    fn refresh(&mut self, cfg: &ProblemConfig, fit: &FitSchedule) -> Result<()> {
        if self.pilot_dirty {
            let opts = fit.options(cfg.radius, cfg.lambda, &self.theta_bar);
            self.theta_bar = fit_pilot(&self.pilot, &opts)?;
            self.newton = NewtonAccumulator::rebuild(self.theta_bar.clone(), &self.estimation, cfg.lambda)?;
            self.theta_hat = self.newton.corrected()?;
        } else if self.est_dirty {
            self.theta_hat = self.newton.corrected()?;
        }
        self.pilot_dirty = false;
        self.est_dirty = false;
        Ok(())
    }

    fn push_pilot(&mut self, sample: &Sample) -> Result<()> {
        self.pilot.push(sample)?;
        self.v_pilot.insert(&sample.x)?;
        self.pilot_dirty = true;
        Ok(())
    }

    fn push_estimation(&mut self, sample: &Sample) -> Result<()> {
        self.estimation.push(sample)?;
        self.v_est.insert(&sample.x)?;
        if !self.pilot_dirty {
            self.newton.push(sample)?;
        }
        self.est_dirty = true;
        Ok(())
    }
}

/// Mean and width an arm received at one level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quote {
    pub round: usize,
    pub level: usize,
    pub arm: usize,
    pub mean: f64,
    pub width: f64,
}

#[derive(Debug, Clone)]
pub struct SupSplitLog {
    cfg: ProblemConfig,
    fit: FitSchedule,
    levels: Vec<LevelState>,
    alpha: f64,
    beta_fixed: f64,
    tau_fixed: Vec<f64>,
    explored: usize,
}

impl SupSplitLog {
    pub fn new(cfg: ProblemConfig, fit: FitSchedule) -> Result<Self> {
        let levels = compute_levels(cfg.horizon, cfg.variant)?;
        Self::with_levels(cfg, fit, levels)
    }

    /// Same as [`Self::new`] but with an explicit number of levels.
    pub fn with_levels(cfg: ProblemConfig, fit: FitSchedule, levels: usize) -> Result<Self> {
        cfg.validate()?;
        if levels == 0 {
            return Err(config("number of levels must be at least 1"));
        }
        if fit.steps == 0 || !(fit.learning_rate > 0.0) {
            return Err(config("fit schedule needs at least one step and a positive rate"));
        }
        let alpha = compute_alpha(&cfg, levels);
        let beta_fixed = compute_beta_fixed(&cfg, levels);
        let tau_fixed = (1..=levels)
            .map(|s| compute_tau_fixed(&cfg, s, beta_fixed))
            .collect();
        let states = (1..=levels)
            .map(|s| LevelState::new(s, &cfg))
            .collect::<Result<_>>()?;
        Ok(Self {
            cfg,
            fit,
            levels: states,
            alpha,
            beta_fixed,
            tau_fixed,
            explored: 0,
        })
    }

    pub fn config(&self) -> &ProblemConfig {
        &self.cfg
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta_fixed(&self) -> f64 {
        self.beta_fixed
    }

    /// Fixed-schedule thresholds, one per level.
    pub fn tau_fixed(&self) -> &[f64] {
        &self.tau_fixed
    }

    pub fn levels(&self) -> &[LevelState] {
        &self.levels
    }

    /// Level `s` (1-based).
    pub fn level(&self, s: usize) -> &LevelState {
        &self.levels[s - 1]
    }

    /// Brings the cached estimates of level `s` up to date with its buckets.
    pub fn refresh_level(&mut self, s: usize) -> Result<()> {
        if s == 0 || s > self.levels.len() {
            return Err(usage(format!("level {s} out of range")));
        }
        let (cfg, fit) = (&self.cfg, &self.fit);
        self.levels[s - 1].refresh(cfg, fit)
    }

    /// Pilot radius currently in force at level `s`.
    pub fn beta(&self, s: usize) -> f64 {
        match self.cfg.variant {
            Variant::Fixed => self.beta_fixed,
            Variant::DataDependent => {
                compute_beta_adaptive(&self.levels[s - 1].v_pilot, &self.cfg, self.levels.len())
            }
        }
    }

    /// Pilot routing threshold currently in force at level `s`.
    pub fn tau(&self, s: usize) -> f64 {
        match self.cfg.variant {
            Variant::Fixed => self.tau_fixed[s - 1],
            Variant::DataDependent => {
                let beta = self.beta(s);
                compute_tau_adaptive(&self.levels[s - 1].v_est, beta, &self.cfg, s)
            }
        }
    }

    fn width(&self, s: usize, x: &DVector<f64>) -> Result<f64> {
        Ok(self.alpha * self.levels[s - 1].v_est.mahalanobis_sq(x)?.sqrt())
    }

    /// Walks the levels and picks an arm.
    pub fn select_action(&mut self, contexts: &[DVector<f64>]) -> Result<PolicyDecision> {
        check_contexts(contexts, self.cfg.arms, self.cfg.dim)?;
        let exploit_cut = 1.0 / (self.cfg.horizon as f64).sqrt();
        let last = self.levels.len();
        let mut active: Vec<usize> = (0..self.cfg.arms).collect();
        for s in 1..=last {
            self.refresh_level(s)?;
            let theta_hat = &self.levels[s - 1].theta_hat;
            let means: Vec<f64> = active.iter().map(|&a| contexts[a].dot(theta_hat)).collect();
            let widths = active
                .iter()
                .map(|&a| self.width(s, &contexts[a]))
                .collect::<Result<Vec<_>>>()?;
            let level_conf = 0.5f64.powi(s as i32);

            if widths.iter().any(|&w| w > level_conf) {
                let i = argmax(widths.iter().copied()).expect("active set is nonempty");
                let action = active[i];
                let pilot_width = self.levels[s - 1].v_pilot.mahalanobis_sq(&contexts[action])?;
                let branch = if pilot_width > self.tau(s) {
                    Branch::ExploreToPilot
                } else {
                    Branch::ExploreToEstimation
                };
                return Ok(PolicyDecision {
                    action,
                    level: s,
                    branch,
                    width: widths[i],
                    mean: means[i],
                });
            }

            let all_narrow = widths.iter().all(|&w| w <= exploit_cut);
            if all_narrow || s == last {
                let i = argmax(means.iter().copied()).expect("active set is nonempty");
                return Ok(PolicyDecision {
                    action: active[i],
                    level: s,
                    branch: if all_narrow { Branch::Exploit } else { Branch::ExploitCapped },
                    width: widths[i],
                    mean: means[i],
                });
            }

            let best = means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let keep = best - 2.0 * level_conf;
            active = active
                .iter()
                .zip(&means)
                .filter(|&(_, &m)| m >= keep)
                .map(|(&a, _)| a)
                .collect();
        }
        unreachable!("the last level always returns")
    }

    /// Stores an explored sample in the bucket its decision named.
    pub fn record_reward(&mut self, decision: &PolicyDecision, sample: Sample) -> Result<()> {
        if decision.level == 0 || decision.level > self.levels.len() {
            return Err(usage(format!("decision level {} out of range", decision.level)));
        }
        let level = &mut self.levels[decision.level - 1];
        match decision.branch {
            Branch::ExploreToPilot => level.push_pilot(&sample)?,
            Branch::ExploreToEstimation => level.push_estimation(&sample)?,
            other => {
                return Err(usage(format!(
                    "{} rounds do not update any bucket",
                    other.name()
                )))
            }
        }
        self.explored += 1;
        Ok(())
    }

    /// Means and widths of every arm at every level, computed from the
    /// current buckets (used to check the uniform concentration event).
    pub fn quote_all(&mut self, round: usize, contexts: &[DVector<f64>]) -> Result<Vec<Quote>> {
        check_contexts(contexts, self.cfg.arms, self.cfg.dim)?;
        let mut quotes = Vec::with_capacity(self.levels.len() * contexts.len());
        for s in 1..=self.levels.len() {
            self.refresh_level(s)?;
            for (arm, x) in contexts.iter().enumerate() {
                quotes.push(Quote {
                    round,
                    level: s,
                    arm,
                    mean: x.dot(&self.levels[s - 1].theta_hat),
                    width: self.width(s, x)?,
                });
            }
        }
        Ok(quotes)
    }

    /// `‖θ̄^{(s)} − θ*‖_{V_P^{(s)}}` for every level, after refreshing.
    pub fn pilot_errors(&mut self, theta_star: &DVector<f64>) -> Result<Vec<f64>> {
        (1..=self.levels.len())
            .map(|s| {
                self.refresh_level(s)?;
                let level = &self.levels[s - 1];
                let diff = &level.theta_bar - theta_star;
                Ok(crate::numerics::quad_form(level.v_pilot.matrix(), &diff).sqrt())
            })
            .collect()
    }

    /// Deterministic bucket bounds at the current round; see [`Policy::audit`].
    pub fn audit_levels(&self) -> Vec<String> {
        let cfg = &self.cfg;
        let d = cfg.dim as f64;
        let horizon_term = cfg.log_horizon_term();
        let mut violations = Vec::new();
        let mut seen = std::collections::HashSet::new();
        let mut stored = 0usize;
        // 1e-9 relative slack for floating-point evaluation of the bounds
        let over = |count: usize, bound: f64| count as f64 > bound * (1.0 + 1e-9);

        for level in &self.levels {
            let s = level.level;
            let n_pilot = level.pilot.len();
            let n_est = level.estimation.len();

            let pilot_bound = 2.0 * d * horizon_term / self.tau_fixed[s - 1];
            if over(n_pilot, pilot_bound) {
                violations.push(format!(
                    "pilot cardinality at level {s}: {n_pilot} > {pilot_bound:.6e}"
                ));
            }
            let est_bound = 2.0 * self.alpha.powi(2) * d * 4f64.powi(s as i32) * horizon_term;
            if over(n_est, est_bound) {
                violations.push(format!(
                    "estimation cardinality at level {s}: {n_est} > {est_bound:.6e}"
                ));
            }
            if cfg.variant == Variant::DataDependent {
                let pilot_bound = 2.0 * level.v_pilot.logdet_ratio() / self.tau(s);
                if over(n_pilot, pilot_bound) {
                    violations.push(format!(
                        "log-det pilot cardinality at level {s}: {n_pilot} > {pilot_bound:.6e}"
                    ));
                }
                let est_bound =
                    2.0 * self.alpha.powi(2) * 4f64.powi(s as i32) * level.v_est.logdet_ratio();
                if over(n_est, est_bound) {
                    violations.push(format!(
                        "log-det estimation cardinality at level {s}: {n_est} > {est_bound:.6e}"
                    ));
                }
            }

            for &t in level.pilot.rounds().iter().chain(level.estimation.rounds()) {
                if !seen.insert(t) {
                    violations.push(format!("round {t} stored twice (level {s})"));
                }
            }
            stored += n_pilot + n_est;
            if level.v_pilot.count() != n_pilot || level.v_est.count() != n_est {
                violations.push(format!("design counts out of sync at level {s}"));
            }
        }
        if stored != self.explored {
            violations.push(format!(
                "bucket coverage: {stored} stored samples but {} explored rounds",
                self.explored
            ));
        }
        violations
    }
}

impl Policy for SupSplitLog {
    fn name(&self) -> &'static str {
        match self.cfg.variant {
            Variant::Fixed => "supsplitlog",
            Variant::DataDependent => "supsplitlog-dd",
        }
    }

    fn select(&mut self, _round: usize, contexts: &[DVector<f64>]) -> Result<PolicyDecision> {
        self.select_action(contexts)
    }

    fn observe(&mut self, decision: &PolicyDecision, sample: Sample) -> Result<()> {
        if decision.branch.fills_bucket() {
            self.record_reward(decision, sample)
        } else {
            Ok(())
        }
    }

    fn bucket_sizes(&self) -> BucketSizes {
        BucketSizes {
            pilot: self.levels.iter().map(|l| l.pilot.len()).collect(),
            estimation: self.levels.iter().map(|l| l.estimation.len()).collect(),
        }
    }

    fn audit(&self) -> Vec<String> {
        self.audit_levels()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn appendix_cfg(dim: usize, variant: Variant) -> ProblemConfig {
        ProblemConfig {
            dim,
            variant,
            ..ProblemConfig::default()
        }
    }

    #[test]
    fn level_counts() {
        assert_eq!(compute_levels(2000, Variant::Fixed).unwrap(), 5);
        assert_eq!(compute_levels(2000, Variant::DataDependent).unwrap(), 10);
        assert_eq!(compute_levels(4, Variant::Fixed).unwrap(), 1);
        assert_eq!(compute_levels(2, Variant::Fixed).unwrap(), 1);
        assert_eq!(compute_levels(1024, Variant::DataDependent).unwrap(), 10);
        assert_eq!(compute_levels(1023, Variant::DataDependent).unwrap(), 9);
        assert!(compute_levels(1, Variant::Fixed).is_err());
    }

    #[test]
    fn level_count_matches_real_logarithm() {
        for t in 2..5000usize {
            let l = (t as f64).log2();
            assert_eq!(compute_levels(t, Variant::Fixed).unwrap(), ((0.5 * l).floor() as usize).max(1));
            assert_eq!(compute_levels(t, Variant::DataDependent).unwrap(), l.floor() as usize);
        }
    }

    #[test]
    fn alpha_structure() {
        let cfg = appendix_cfg(3, Variant::Fixed);
        let a = compute_alpha(&cfg, 5);
        assert!(a >= 2.0 * cfg.radius * cfg.ridge().sqrt());
        let doubled = ProblemConfig { radius: 2.0, ..cfg.clone() };
        let diff = compute_alpha(&doubled, 5) - a;
        assert!((diff - 2.0 * cfg.ridge().sqrt()).abs() < 1e-9);
    }

    #[test]
    fn tau_halves_per_level_when_second_argument_binds() {
        let cfg = appendix_cfg(3, Variant::Fixed);
        let beta = compute_beta_fixed(&cfg, 5);
        for s in 1..5 {
            let r = compute_tau_fixed(&cfg, s + 1, beta) / compute_tau_fixed(&cfg, s, beta);
            assert!((r - 0.5).abs() < 1e-12);
            assert!(compute_tau_fixed(&cfg, s, beta) <= 1.0 / (beta * beta));
        }
    }

    #[test]
    fn adaptive_quantities_on_fresh_designs() {
        let cfg = appendix_cfg(4, Variant::DataDependent);
        let fresh = DesignState::new(4, cfg.ridge()).unwrap();
        let beta = compute_beta_adaptive(&fresh, &cfg, 10);
        let expect = cfg.kappa / 2f64.sqrt() * (20.0f64 / cfg.delta).ln().sqrt() + cfg.ridge().sqrt();
        assert!((beta - expect).abs() < 1e-12);
        assert_eq!(compute_tau_adaptive(&fresh, beta, &cfg, 3), 1.0 / (beta * beta));
    }

    #[test]
    fn first_round_explores_into_pilot() {
        let cfg = appendix_cfg(3, Variant::Fixed);
        let mut p = SupSplitLog::new(cfg, FitSchedule::default()).unwrap();
        let contexts: Vec<_> = (0..5)
            .map(|a| {
                let mut x = DVector::zeros(3);
                x[a % 3] = if a == 2 { 1.0 } else { 0.5 };
                x
            })
            .collect();
        let dec = p.select_action(&contexts).unwrap();
        assert_eq!(dec.level, 1);
        assert_eq!(dec.action, 2);
        assert_eq!(dec.branch, Branch::ExploreToPilot);
        let expect_width = p.alpha() / 20f64.sqrt();
        assert!((dec.width - expect_width).abs() < 1e-9);
    }

    #[test]
    fn exploit_rounds_reject_bucket_updates() {
        let cfg = appendix_cfg(2, Variant::Fixed);
        let mut p = SupSplitLog::new(cfg, FitSchedule::default()).unwrap();
        let dec = PolicyDecision {
            action: 0,
            level: 1,
            branch: Branch::Exploit,
            width: 0.0,
            mean: 0.0,
        };
        let s = Sample::new(DVector::zeros(2), 1, 1).unwrap();
        assert!(matches!(p.record_reward(&dec, s.clone()), Err(crate::Error::Usage(_))));
        // the trait hook silently ignores non-bucket rounds
        p.observe(&dec, s).unwrap();
        assert_eq!(p.bucket_sizes().pilot, vec![0; p.num_levels()]);
    }

    #[test]
    fn record_routes_to_named_bucket() {
        let cfg = appendix_cfg(2, Variant::DataDependent);
        let mut p = SupSplitLog::new(cfg, FitSchedule::default()).unwrap();
        let x = DVector::from_vec(vec![0.6, 0.0]);
        let mut dec = PolicyDecision {
            action: 0,
            level: 2,
            branch: Branch::ExploreToPilot,
            width: 1.0,
            mean: 0.0,
        };
        p.record_reward(&dec, Sample::new(x.clone(), 1, 1).unwrap()).unwrap();
        assert_eq!(p.level(2).pilot().len(), 1);
        assert_eq!(p.level(2).estimation().len(), 0);

        dec.branch = Branch::ExploreToEstimation;
        let before = p.level(2).v_est().logdet_ratio();
        p.record_reward(&dec, Sample::new(x, 0, 2).unwrap()).unwrap();
        assert!(p.level(2).v_est().logdet_ratio() > before);
        assert!(p.level(2).is_dirty());
        assert!(p.audit().is_empty());
    }

    #[test]
    fn cached_estimates_match_direct_computation() {
        use crate::logistic::{one_step_correct, FitOptions};

        let cfg = appendix_cfg(3, Variant::Fixed);
        let mut p = SupSplitLog::new(cfg.clone(), FitSchedule::default()).unwrap();
        let decision = |branch| PolicyDecision {
            action: 0,
            level: 1,
            branch,
            width: 1.0,
            mean: 0.0,
        };
        let x = |t: usize| {
            let u = t as f64;
            DVector::from_vec(vec![u.sin(), (1.3 * u).cos(), 0.4]) * 0.6
        };
        for t in 1..=30 {
            let branch = if t % 3 == 0 { Branch::ExploreToEstimation } else { Branch::ExploreToPilot };
            p.record_reward(&decision(branch), Sample::new(x(t), (t % 2) as u8, t).unwrap())
                .unwrap();
        }
        p.refresh_level(1).unwrap();
        let level = p.level(1);
        let opts = FitOptions::new(cfg.radius, cfg.lambda);
        let bar = fit_pilot(level.pilot(), &opts).unwrap();
        assert_eq!(level.theta_bar(), &bar);
        let hat = one_step_correct(&bar, level.estimation(), cfg.lambda).unwrap();
        assert!((level.theta_hat() - &hat).amax() < 1e-12);

        // estimation-only updates reuse the anchor
        for t in 31..=40 {
            p.record_reward(&decision(Branch::ExploreToEstimation), Sample::new(x(t), 1, t).unwrap())
                .unwrap();
        }
        p.refresh_level(1).unwrap();
        let level = p.level(1);
        assert_eq!(level.theta_bar(), &bar);
        let hat = one_step_correct(&bar, level.estimation(), cfg.lambda).unwrap();
        assert!((level.theta_hat() - &hat).amax() < 1e-12);
        assert!(p.audit().is_empty());
    }

    #[test]
    fn single_arm_is_always_chosen() {
        let cfg = ProblemConfig {
            arms: 1,
            horizon: 64,
            ..appendix_cfg(2, Variant::Fixed)
        };
        let mut p = SupSplitLog::new(cfg, FitSchedule::default()).unwrap();
        for t in 1..=64 {
            let x = DVector::from_vec(vec![(t as f64).sin(), (t as f64).cos()]) * 0.7;
            let dec = p.select_action(std::slice::from_ref(&x)).unwrap();
            assert_eq!(dec.action, 0);
            p.observe(&dec, Sample::new(x, (t % 2) as u8, t).unwrap()).unwrap();
        }
        assert!(p.audit().is_empty());
    }

    #[test]
    fn wrong_context_count_is_usage_error() {
        let cfg = appendix_cfg(2, Variant::Fixed);
        let mut p = SupSplitLog::new(cfg, FitSchedule::default()).unwrap();
        assert!(p.select_action(&[DVector::zeros(2)]).is_err());
        assert!(p.select_action(&vec![DVector::zeros(3); 5]).is_err());
    }
}
