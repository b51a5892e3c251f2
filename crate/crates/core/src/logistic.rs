//! Logistic link, the regularized pilot fit, and the one-step Newton correction.
//!
//! The pilot estimate minimizes the ridge-penalized negative log-likelihood
//!
//! ```text
//! L(θ) = Σ [−r log μ(xᵀθ) − (1−r) log(1 − μ(xᵀθ))] + (λ/2)‖θ‖²
//! ```
//!
//! over the ball `‖θ‖ ≤ B` by projected gradient descent. A second, disjoint
//! sample set then refines it with a single Newton step
//! `θ̂ = θ̄ + H(θ̄)⁻¹ g(θ̄)` where `g` and `H` are the score and curvature of
//! that second set.

use nalgebra::{DMatrix, DMatrixView, DVector, DVectorView};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, config, usage, Result};

/// Logistic function `1 / (1 + e^{−z})`, evaluated without overflow.
pub fn mu(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Derivative of [`mu`]: `μ(z)(1 − μ(z))`, at most `1/4`. Exactly even in `z`.
pub fn dmu(z: f64) -> f64 {
    let e = (-z.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// One observed (context, reward) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: DVector<f64>,
    pub reward: u8,
    pub round: usize,
}

impl Sample {
    pub fn new(x: DVector<f64>, reward: u8, round: usize) -> Result<Self> {
        if reward > 1 {
            return Err(usage(format!("reward must be 0 or 1, got {reward}")));
        }
        let norm = x.norm();
        if !(norm <= 1.0 + 1e-9) {
            return Err(usage(format!("feature norm {norm} exceeds 1")));
        }
        Ok(Self { x, reward, round })
    }
}

/// A list of samples stored column-major (`d × n`) so that scores and
/// curvatures reduce to matrix–vector and matrix–matrix products.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    dim: usize,
    features: Vec<f64>,
    rewards: Vec<f64>,
    rounds: Vec<usize>,
}

impl SampleSet {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ..Self::default()
        }
    }

    pub fn from_samples(dim: usize, samples: &[Sample]) -> Result<Self> {
        let mut set = Self::new(dim);
        for s in samples {
            set.push(s)?;
        }
        Ok(set)
    }

    pub fn push(&mut self, sample: &Sample) -> Result<()> {
        check_dim(self.dim, sample.x.len(), "sample")?;
        self.features.extend(sample.x.iter());
        self.rewards.push(f64::from(sample.reward));
        self.rounds.push(sample.round);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Round indices in insertion order.
    pub fn rounds(&self) -> &[usize] {
        &self.rounds
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    /// Features as a `d × n` matrix view, one column per sample.
    pub fn features(&self) -> DMatrixView<'_, f64> {
        DMatrixView::from_slice(&self.features, self.dim, self.len())
    }

    pub fn feature(&self, i: usize) -> DVectorView<'_, f64> {
        DVectorView::from_slice(&self.features[i * self.dim..(i + 1) * self.dim], self.dim)
    }

    fn logits(&self, theta: &DVector<f64>) -> DVector<f64> {
        self.features().tr_mul(theta)
    }
}

/// Projected-gradient schedule and constraint for the pilot fit.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub steps: usize,
    pub learning_rate: f64,
    /// Radius `B` of the admissible parameter ball.
    pub radius: f64,
    /// Ridge weight `λ`.
    pub reg: f64,
    pub warm_start: Option<DVector<f64>>,
}

impl FitOptions {
    pub const DEFAULT_STEPS: usize = 20;
    pub const DEFAULT_LEARNING_RATE: f64 = 0.3;

    pub fn new(radius: f64, reg: f64) -> Self {
        Self {
            steps: Self::DEFAULT_STEPS,
            learning_rate: Self::DEFAULT_LEARNING_RATE,
            radius,
            reg,
            warm_start: None,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_warm_start(mut self, theta: DVector<f64>) -> Self {
        self.warm_start = Some(theta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(config("fit steps must be at least 1"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(config("fit learning rate must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(config("fit radius must be positive"));
        }
        if !(self.reg > 0.0) {
            return Err(config("fit regularization must be positive"));
        }
        Ok(())
    }
}

/// Euclidean projection onto `{‖θ‖ ≤ radius}`.
pub fn project_to_ball(theta: &mut DVector<f64>, radius: f64) {
    let norm = theta.norm();
    if norm > radius {
        *theta *= radius / norm;
        // rounding can leave the rescaled norm a few ulps above the radius
        let mut n = theta.norm();
        while n > radius {
            *theta *= 1.0 - f64::EPSILON;
            n = theta.norm();
        }
    }
}

/// Ridge-penalized negative log-likelihood `L(θ)` of the set.
pub fn penalized_loss(theta: &DVector<f64>, set: &SampleSet, reg: f64) -> Result<f64> {
    check_dim(set.dim(), theta.len(), "loss")?;
    let z = set.logits(theta);
    let nll: f64 = z
        .iter()
        .zip(set.rewards())
        .map(|(&z, &r)| r * softplus(-z) + (1.0 - r) * softplus(z))
        .sum();
    Ok(nll + 0.5 * reg * theta.norm_squared())
}

/// Pilot estimate: `opts.steps` projected gradient steps on `L(θ) / max(n, 1)`.
///
/// Dividing the objective by the sample count leaves its constrained
/// minimizer unchanged and keeps a fixed learning rate stable however large
/// the set grows.
pub fn fit_pilot(set: &SampleSet, opts: &FitOptions) -> Result<DVector<f64>> {
    opts.validate()?;
    let dim = set.dim();
    let mut theta = match &opts.warm_start {
        Some(w) => {
            check_dim(dim, w.len(), "warm start")?;
            w.clone()
        }
        None => DVector::zeros(dim),
    };
    let step = opts.learning_rate / set.len().max(1) as f64;
    let x = set.features();
    let mut residual = DVector::zeros(set.len());
    let mut grad = DVector::zeros(dim);
    for _ in 0..opts.steps {
        residual.gemv_tr(1.0, &x, &theta, 0.0);
        for (p, &r) in residual.iter_mut().zip(set.rewards()) {
            *p = mu(*p) - r;
        }
        grad.copy_from(&theta);
        grad.gemv(1.0, &x, &residual, opts.reg);
        theta.axpy(-step, &grad, 1.0);
        project_to_ball(&mut theta, opts.radius);
    }
    Ok(theta)
}

/// Score of the set: `Σ (r_i − μ(x_iᵀθ)) x_i − λθ`.
pub fn level_gradient(theta: &DVector<f64>, set: &SampleSet, reg: f64) -> Result<DVector<f64>> {
    check_dim(set.dim(), theta.len(), "gradient")?;
    let mut residual = set.logits(theta);
    for (p, &r) in residual.iter_mut().zip(set.rewards()) {
        *p = r - mu(*p);
    }
    let mut g = theta * -reg;
    g.gemv(1.0, &set.features(), &residual, 1.0);
    Ok(g)
}

/// Curvature of the set: `λI + Σ μ̇(x_iᵀθ) x_i x_iᵀ`.
pub fn level_hessian(theta: &DVector<f64>, set: &SampleSet, reg: f64) -> Result<DMatrix<f64>> {
    check_dim(set.dim(), theta.len(), "hessian")?;
    let mut h = weighted_gram(set, theta);
    for i in 0..set.dim() {
        h[(i, i)] += reg;
    }
    Ok(h)
}

/// `Σ μ̇(x_iᵀθ) x_i x_iᵀ` via one dense product.
fn weighted_gram(set: &SampleSet, theta: &DVector<f64>) -> DMatrix<f64> {
    let dim = set.dim();
    if set.is_empty() {
        return DMatrix::zeros(dim, dim);
    }
    let z = set.logits(theta);
    let mut scaled = set.features().clone_owned();
    for (mut col, &zi) in scaled.column_iter_mut().zip(z.iter()) {
        col *= dmu(zi).sqrt();
    }
    &scaled * scaled.transpose()
}

fn newton_step(
    anchor: &DVector<f64>,
    curvature: &DMatrix<f64>,
    score: &DVector<f64>,
    reg: f64,
) -> Result<DVector<f64>> {
    let mut h = curvature.clone();
    for i in 0..h.nrows() {
        h[(i, i)] += reg;
    }
    let rhs = score - anchor * reg;
    let chol = h
        .cholesky()
        .ok_or_else(|| usage("correction Hessian is not positive definite"))?;
    Ok(anchor + chol.solve(&rhs))
}

/// One Newton step from `theta_bar` on the set: `θ̄ + H(θ̄)⁻¹ g(θ̄)`.
///
/// The result is not projected back onto the parameter ball.
pub fn one_step_correct(theta_bar: &DVector<f64>, set: &SampleSet, reg: f64) -> Result<DVector<f64>> {
    let g = level_gradient(theta_bar, set, reg)?;
    let h = level_hessian(theta_bar, set, reg)?;
    let chol = h
        .cholesky()
        .ok_or_else(|| usage("correction Hessian is not positive definite"))?;
    Ok(theta_bar + chol.solve(&g))
}

/// Score and curvature sums at a fixed anchor, kept current as samples
/// arrive so that a new correction costs one `d × d` solve.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonAccumulator {
    anchor: DVector<f64>,
    score: DVector<f64>,
    curvature: DMatrix<f64>,
    reg: f64,
}

impl NewtonAccumulator {
    pub fn new(anchor: DVector<f64>, reg: f64) -> Self {
        let d = anchor.len();
        Self {
            anchor,
            score: DVector::zeros(d),
            curvature: DMatrix::zeros(d, d),
            reg,
        }
    }

    /// Recomputes both sums over `set` at a new anchor.
    pub fn rebuild(anchor: DVector<f64>, set: &SampleSet, reg: f64) -> Result<Self> {
        check_dim(set.dim(), anchor.len(), "newton anchor")?;
        let mut residual = set.logits(&anchor);
        for (p, &r) in residual.iter_mut().zip(set.rewards()) {
            *p = r - mu(*p);
        }
        let score = set.features() * residual;
        let curvature = weighted_gram(set, &anchor);
        Ok(Self {
            anchor,
            score,
            curvature,
            reg,
        })
    }

    pub fn anchor(&self) -> &DVector<f64> {
        &self.anchor
    }

    pub fn push(&mut self, sample: &Sample) -> Result<()> {
        check_dim(self.anchor.len(), sample.x.len(), "newton sample")?;
        let z = sample.x.dot(&self.anchor);
        self.score
            .axpy(f64::from(sample.reward) - mu(z), &sample.x, 1.0);
        self.curvature.ger(dmu(z), &sample.x, &sample.x, 1.0);
        Ok(())
    }

    /// The corrected estimate `anchor + (λI + Σ μ̇ x xᵀ)⁻¹ (Σ (r − μ) x − λ·anchor)`.
    pub fn corrected(&self) -> Result<DVector<f64>> {
        newton_step(&self.anchor, &self.curvature, &self.score, self.reg)
    }
}
