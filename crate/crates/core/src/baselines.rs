//! Comparison policies: two Sup-style elimination schemes with per-level
//! logistic fits (SupCB-GLM, SupLogistic) and Hessian-covariance Thompson
//! sampling (DDRTS-GLM).

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::ProblemConfig;
use crate::error::{config, Result};
use crate::logistic::{fit_pilot, level_hessian, Sample, SampleSet};
use crate::numerics::{quad_form, DesignState};
use crate::policy::{argmax, check_contexts, BucketSizes, Branch, FitSchedule, Policy, PolicyDecision};
use crate::supsplitlog::compute_alpha;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub problem: ProblemConfig,
    /// Forced-exploration samples per level before widths are trusted.
    pub warmup: f64,
    pub fit: FitSchedule,
    /// Parameter draws per round for DDRTS-GLM.
    pub mc_samples: usize,
}

impl BaselineConfig {
    /// Defaults: warm-up `√(dT)`, 20 fit steps at rate 0.3, one draw.
    pub fn new(problem: ProblemConfig) -> Self {
        let warmup = ((problem.dim * problem.horizon) as f64).sqrt();
        Self {
            problem,
            warmup,
            fit: FitSchedule::default(),
            mc_samples: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        if !(self.warmup >= 1.0 && self.warmup.is_finite()) {
            return Err(config(format!("warmup must be at least 1, got {}", self.warmup)));
        }
        if self.fit.steps == 0 || !(self.fit.learning_rate > 0.0) {
            return Err(config("fit schedule needs at least one step and a positive rate"));
        }
        if self.mc_samples == 0 {
            return Err(config("mc_samples must be at least 1"));
        }
        Ok(())
    }

    /// `⌈warmup⌉`.
    pub fn warmup_len(&self) -> usize {
        self.warmup.ceil() as usize
    }

    /// Levels of the Sup-style baselines: `⌊log₂T⌋`.
    pub fn levels(&self) -> usize {
        (self.problem.horizon.ilog2() as usize).max(1)
    }
}

/// Which confidence width a Sup-style baseline uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SupWidth {
    /// `α‖x‖_{V⁻¹}` with `V = λI + Σ x xᵀ` over the level bucket.
    Gram,
    /// `(α/√κ)‖x‖_{W⁻¹}` with the curvature-weighted
    /// `W = λI + Σ μ̇(xᵀθ̃) x xᵀ` at the level's fit.
    Hessian,
}

#[derive(Debug, Clone)]
struct BaselineLevel {
    bucket: SampleSet,
    gram: DesignState,
    weighted_inv: Option<DMatrix<f64>>,
    theta: DVector<f64>,
    dirty: bool,
    early_decisions: usize,
}

/// Auer-style level walk with independent buckets, shared by SupCB-GLM and
/// SupLogistic.
#[derive(Debug, Clone)]
pub struct SupBaseline {
    cfg: BaselineConfig,
    kind: SupWidth,
    alpha: f64,
    warmup: usize,
    levels: Vec<BaselineLevel>,
    rng: ChaCha20Rng,
    explored: usize,
}

impl SupBaseline {
    pub fn new(cfg: BaselineConfig, kind: SupWidth, rng: ChaCha20Rng) -> Result<Self> {
        cfg.validate()?;
        let p = &cfg.problem;
        let n_levels = cfg.levels();
        let alpha = compute_alpha(p, n_levels);
        let levels = (0..n_levels)
            .map(|_| {
                Ok(BaselineLevel {
                    bucket: SampleSet::new(p.dim),
                    gram: DesignState::new(p.dim, p.lambda)?,
                    weighted_inv: None,
                    theta: DVector::zeros(p.dim),
                    dirty: false,
                    early_decisions: 0,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            warmup: cfg.warmup_len(),
            cfg,
            kind,
            alpha,
            levels,
            rng,
            explored: 0,
        })
    }

    pub fn supcb_glm(cfg: BaselineConfig, rng: ChaCha20Rng) -> Result<Self> {
        Self::new(cfg, SupWidth::Gram, rng)
    }

    pub fn suplogistic(cfg: BaselineConfig, rng: ChaCha20Rng) -> Result<Self> {
        Self::new(cfg, SupWidth::Hessian, rng)
    }

    pub fn kind(&self) -> SupWidth {
        self.kind
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    /// Fit of level `s` (1-based), refreshed if stale.
    pub fn level_theta(&mut self, s: usize) -> Result<&DVector<f64>> {
        self.refresh(s)?;
        Ok(&self.levels[s - 1].theta)
    }

    fn refresh(&mut self, s: usize) -> Result<()> {
        let p = &self.cfg.problem;
        let level = &mut self.levels[s - 1];
        if !level.dirty {
            return Ok(());
        }
        let opts = self.cfg.fit.options(p.radius, p.lambda, &level.theta);
        level.theta = fit_pilot(&level.bucket, &opts)?;
        if self.kind == SupWidth::Hessian {
            let w = level_hessian(&level.theta, &level.bucket, p.lambda)?;
            level.weighted_inv = w.cholesky().map(|c| c.inverse());
        }
        level.dirty = false;
        Ok(())
    }

    fn width(&self, s: usize, x: &DVector<f64>) -> Result<f64> {
        let level = &self.levels[s - 1];
        match (self.kind, &level.weighted_inv) {
            (SupWidth::Hessian, Some(inv)) => {
                Ok(self.alpha / self.cfg.problem.kappa.sqrt() * quad_form(inv, x).sqrt())
            }
            // before the first fit W = λI, which is the Gram matrix
            (SupWidth::Hessian, None) => {
                Ok(self.alpha / self.cfg.problem.kappa.sqrt() * level.gram.mahalanobis_sq(x)?.sqrt())
            }
            (SupWidth::Gram, _) => Ok(self.alpha * level.gram.mahalanobis_sq(x)?.sqrt()),
        }
    }

    pub fn select_action(&mut self, contexts: &[DVector<f64>]) -> Result<PolicyDecision> {
        let p = &self.cfg.problem;
        check_contexts(contexts, p.arms, p.dim)?;
        let exploit_cut = 1.0 / (p.horizon as f64).sqrt();
        let last = self.levels.len();
        let mut active: Vec<usize> = (0..p.arms).collect();
        for s in 1..=last {
            if self.levels[s - 1].bucket.len() < self.warmup {
                let action = active[self.rng.random_range(0..active.len())];
                return Ok(PolicyDecision {
                    action,
                    level: s,
                    branch: Branch::Warmup,
                    width: f64::INFINITY,
                    mean: 0.0,
                });
            }
            self.refresh(s)?;
            let theta = &self.levels[s - 1].theta;
            let means: Vec<f64> = active.iter().map(|&a| contexts[a].dot(theta)).collect();
            let widths = active
                .iter()
                .map(|&a| self.width(s, &contexts[a]))
                .collect::<Result<Vec<_>>>()?;
            let level_conf = 0.5f64.powi(s as i32);

            if widths.iter().any(|&w| w > level_conf) {
                let i = argmax(widths.iter().copied()).expect("active set is nonempty");
                return Ok(PolicyDecision {
                    action: active[i],
                    level: s,
                    branch: Branch::Explore,
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
            let keep = means.iter().copied().fold(f64::NEG_INFINITY, f64::max) - 2.0 * level_conf;
            active = active
                .iter()
                .zip(&means)
                .filter(|&(_, &m)| m >= keep)
                .map(|(&a, _)| a)
                .collect();
        }
        unreachable!("the last level always returns")
    }
}

impl Policy for SupBaseline {
    fn name(&self) -> &'static str {
        match self.kind {
            SupWidth::Gram => "supcb-glm",
            SupWidth::Hessian => "suplogistic",
        }
    }

    fn select(&mut self, _round: usize, contexts: &[DVector<f64>]) -> Result<PolicyDecision> {
        let decision = self.select_action(contexts)?;
        if decision.branch != Branch::Warmup {
            let level = &mut self.levels[decision.level - 1];
            if level.bucket.len() < self.warmup {
                level.early_decisions += 1;
            }
        }
        Ok(decision)
    }

    fn observe(&mut self, decision: &PolicyDecision, sample: Sample) -> Result<()> {
        if !decision.branch.fills_bucket() {
            return Ok(());
        }
        let level = &mut self.levels[decision.level - 1];
        level.bucket.push(&sample)?;
        level.gram.insert(&sample.x)?;
        level.dirty = true;
        self.explored += 1;
        Ok(())
    }

    fn bucket_sizes(&self) -> BucketSizes {
        BucketSizes {
            pilot: vec![0; self.levels.len()],
            estimation: self.levels.iter().map(|l| l.bucket.len()).collect(),
        }
    }

    fn audit(&self) -> Vec<String> {
        let mut violations = Vec::new();
        let mut seen = HashSet::new();
        let mut stored = 0;
        for (i, level) in self.levels.iter().enumerate() {
            for &t in level.bucket.rounds() {
                if !seen.insert(t) {
                    violations.push(format!("round {t} stored twice (level {})", i + 1));
                }
            }
            stored += level.bucket.len();
            if level.early_decisions > 0 {
                violations.push(format!(
                    "level {} made {} width-based decisions before warm-up finished",
                    i + 1,
                    level.early_decisions
                ));
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

/// Arm most often chosen by the parameters `mean + root·zᵢ`; ties go to the
/// lowest index. An empty `offsets` slice scores the mean alone.
pub fn ddrts_choose(
    contexts: &[DVector<f64>],
    mean: &DVector<f64>,
    root: &DMatrix<f64>,
    offsets: &[DVector<f64>],
) -> usize {
    if offsets.is_empty() {
        return argmax(contexts.iter().map(|x| x.dot(mean))).unwrap_or(0);
    }
    let mut votes = vec![0usize; contexts.len()];
    for z in offsets {
        let theta = mean + root * z;
        if let Some(a) = argmax(contexts.iter().map(|x| x.dot(&theta))) {
            votes[a] += 1;
        }
    }
    argmax(votes.iter().map(|&v| v as f64)).unwrap_or(0)
}

/// Symmetric inverse square root `H^{-1/2}` of a positive-definite matrix.
pub fn inverse_sqrt(h: DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(h);
    let scale = eig.eigenvalues.map(|v| 1.0 / v.max(f64::MIN_POSITIVE).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&scale) * eig.eigenvectors.transpose()
}

/// Thompson sampling with a Gaussian around the regularized fit and
/// covariance `H(θ̃)⁻¹`.
#[derive(Debug, Clone)]
pub struct DdrtsGlm {
    cfg: BaselineConfig,
    samples: SampleSet,
    theta: DVector<f64>,
    dirty: bool,
    root: DMatrix<f64>,
    rng: ChaCha20Rng,
}

impl DdrtsGlm {
    pub fn new(cfg: BaselineConfig, rng: ChaCha20Rng) -> Result<Self> {
        cfg.validate()?;
        let d = cfg.problem.dim;
        let root = DMatrix::identity(d, d) / cfg.problem.lambda.sqrt();
        Ok(Self {
            samples: SampleSet::new(d),
            theta: DVector::zeros(d),
            dirty: false,
            root,
            cfg,
            rng,
        })
    }

    /// Current sampling mean `θ̃` and covariance root `H(θ̃)^{-1/2}`.
    pub fn posterior(&mut self) -> Result<(&DVector<f64>, &DMatrix<f64>)> {
        if self.dirty {
            let p = &self.cfg.problem;
            let opts = self.cfg.fit.options(p.radius, p.lambda, &self.theta);
            self.theta = fit_pilot(&self.samples, &opts)?;
            let h = level_hessian(&self.theta, &self.samples, p.lambda)?;
            self.root = inverse_sqrt(h);
            self.dirty = false;
        }
        Ok((&self.theta, &self.root))
    }

    pub fn num_samples(&self) -> usize {
        self.samples.len()
    }

    fn draw_offset(&mut self) -> DVector<f64> {
        let rng = &mut self.rng;
        DVector::from_fn(self.cfg.problem.dim, |_, _| rng.sample(StandardNormal))
    }

    /// One draw `θ̃ + H(θ̃)^{-1/2} z` from the policy's own stream.
    pub fn sample_parameter(&mut self) -> Result<DVector<f64>> {
        self.posterior()?;
        let z = self.draw_offset();
        Ok(&self.theta + &self.root * z)
    }
}

impl Policy for DdrtsGlm {
    fn name(&self) -> &'static str {
        "ddrts-glm"
    }

    fn select(&mut self, _round: usize, contexts: &[DVector<f64>]) -> Result<PolicyDecision> {
        let p = &self.cfg.problem;
        check_contexts(contexts, p.arms, p.dim)?;
        let draws = self.cfg.mc_samples;
        self.posterior()?;
        let offsets: Vec<DVector<f64>> = (0..draws).map(|_| self.draw_offset()).collect();
        let action = ddrts_choose(contexts, &self.theta, &self.root, &offsets);
        Ok(PolicyDecision {
            action,
            level: 0,
            branch: Branch::Sampled,
            width: quad_form(&(&self.root * &self.root), &contexts[action]).sqrt(),
            mean: contexts[action].dot(&self.theta),
        })
    }

    fn observe(&mut self, _decision: &PolicyDecision, sample: Sample) -> Result<()> {
        self.samples.push(&sample)?;
        self.dirty = true;
        Ok(())
    }

    fn bucket_sizes(&self) -> BucketSizes {
        BucketSizes {
            pilot: Vec::new(),
            estimation: vec![self.samples.len()],
        }
    }

    fn audit(&self) -> Vec<String> {
        let mut seen = HashSet::new();
        self.samples
            .rounds()
            .iter()
            .filter(|&&t| !seen.insert(t))
            .map(|t| format!("round {t} stored twice"))
            .collect()
    }
}
