//! Synthetic logistic-bandit instances.
//!
//! An instance fixes `θ*` and the whole `T×K` context tensor up front from
//! a seeded stream, so every policy run on the same seed sees the same
//! contexts. Rewards come from a separate stream.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ProblemConfig;
use crate::error::{config, usage, Error, Result};
use crate::logistic::{dmu, mu};

/// Stream ids carved out of one seed.
pub const INSTANCE_STREAM: u64 = 0;
pub const REWARD_STREAM: u64 = 1;
pub const POLICY_STREAM: u64 = 2;

/// ChaCha20 generator for `seed` on the given stream.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Context geometry: subspace rank and norm range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Low,
    Middle,
    High,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::Low, Regime::Middle, Regime::High];

    /// Subspace rank, capped at `dim`.
    pub fn rank(self, dim: usize) -> usize {
        let r = match self {
            Regime::Low => 2,
            Regime::Middle => 10,
            Regime::High => dim,
        };
        r.min(dim)
    }

    pub fn norm_range(self) -> (f64, f64) {
        match self {
            Regime::Low => (0.0, 0.05),
            Regime::Middle => (0.3, 0.5),
            Regime::High => (0.8, 1.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Regime::Low => "low",
            Regime::Middle => "middle",
            Regime::High => "high",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "low" => Ok(Regime::Low),
            "middle" => Ok(Regime::Middle),
            "high" => Ok(Regime::High),
            other => Err(config(format!("unknown regime {other:?}"))),
        }
    }
}

/// The logit `z_κ > 0` at which `μ̇(z_κ) = 1/κ`.
pub fn kappa_logit(kappa: f64) -> f64 {
    let p = 0.5 * (1.0 + (1.0 - 4.0 / kappa).sqrt());
    (p / (1.0 - p)).ln()
}

const MAX_REDRAWS: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct EnvironmentInstance {
    problem: ProblemConfig,
    regime: Regime,
    seed: u64,
    axis_aligned: bool,
    theta_star: DVector<f64>,
    basis: DMatrix<f64>,
    contexts: Vec<DVector<f64>>,
    realized_kappa: f64,
    shrunk: usize,
}

impl EnvironmentInstance {
    /// Draws an instance with a random orthonormal subspace.
    pub fn generate(problem: &ProblemConfig, regime: Regime, seed: u64) -> Result<Self> {
        Self::generate_with(problem, regime, seed, false)
    }

    /// Like [`Self::generate`]; `axis_aligned` uses the first `r` coordinate
    /// axes as the subspace.
    pub fn generate_with(
        problem: &ProblemConfig,
        regime: Regime,
        seed: u64,
        axis_aligned: bool,
    ) -> Result<Self> {
        problem.validate()?;
        let (d, k, horizon) = (problem.dim, problem.arms, problem.horizon);
        let r = regime.rank(d);
        let (lo, hi) = regime.norm_range();
        let mut rng = stream_rng(seed, INSTANCE_STREAM);

        let basis = if axis_aligned {
            DMatrix::identity(d, r)
        } else {
            let g = DMatrix::from_fn(d, r, |_, _| rng.sample::<f64, _>(StandardNormal));
            g.qr().q()
        };

        let z_kappa = kappa_logit(problem.kappa);
        let mut theta_star = gaussian_direction(&mut rng, d) * problem.radius;
        if problem.radius * hi > z_kappa {
            theta_star *= z_kappa / (problem.radius * hi);
        }

        let mut contexts = Vec::with_capacity(horizon * k);
        let mut shrunk = 0;
        for _ in 0..horizon * k {
            let mut x = draw_context(&mut rng, &basis, lo, hi);
            let mut tries = 0;
            while x.dot(&theta_star).abs() > z_kappa && tries < MAX_REDRAWS {
                x = draw_context(&mut rng, &basis, lo, hi);
                tries += 1;
            }
            let z = x.dot(&theta_star).abs();
            if z > z_kappa {
                x *= z_kappa / z;
                shrunk += 1;
            }
            contexts.push(x);
        }

        let realized_kappa = contexts
            .iter()
            .map(|x| 1.0 / dmu(x.dot(&theta_star)))
            .fold(1.0, f64::max);

        Ok(Self {
            problem: problem.clone(),
            regime,
            seed,
            axis_aligned,
            theta_star,
            basis,
            contexts,
            realized_kappa,
            shrunk,
        })
    }

    pub fn problem(&self) -> &ProblemConfig {
        &self.problem
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn theta_star(&self) -> &DVector<f64> {
        &self.theta_star
    }

    /// Orthonormal `d×r` frame spanning every context.
    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn effective_rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn norm_range(&self) -> (f64, f64) {
        self.regime.norm_range()
    }

    /// `max 1/μ̇(xᵀθ*)` over the whole tensor.
    pub fn realized_kappa(&self) -> f64 {
        self.realized_kappa
    }

    /// Contexts that had to be shrunk to satisfy the curvature constraint.
    pub fn shrunk_contexts(&self) -> usize {
        self.shrunk
    }

    pub fn horizon(&self) -> usize {
        self.problem.horizon
    }

    pub fn arms(&self) -> usize {
        self.problem.arms
    }

    /// The `K` contexts of round `t` (1-based).
    pub fn contexts(&self, t: usize) -> Result<&[DVector<f64>]> {
        self.check_round(t)?;
        let k = self.problem.arms;
        Ok(&self.contexts[(t - 1) * k..t * k])
    }

    fn check_round(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.problem.horizon {
            return Err(usage(format!("round {t} outside 1..={}", self.problem.horizon)));
        }
        Ok(())
    }

    fn context(&self, t: usize, a: usize) -> Result<&DVector<f64>> {
        self.check_round(t)?;
        if a >= self.problem.arms {
            return Err(usage(format!("arm {a} outside 0..{}", self.problem.arms)));
        }
        Ok(&self.contexts[(t - 1) * self.problem.arms + a])
    }

    /// `μ(x_{t,a}ᵀθ*)`.
    pub fn mean_reward(&self, t: usize, a: usize) -> Result<f64> {
        Ok(mu(self.context(t, a)?.dot(&self.theta_star)))
    }

    /// Bernoulli reward for arm `a` at round `t`.
    pub fn sample_reward<R: Rng + ?Sized>(&self, t: usize, a: usize, rng: &mut R) -> Result<u8> {
        let p = self.mean_reward(t, a)?;
        Ok(u8::from(rng.random::<f64>() < p))
    }

    /// Best arm of round `t`; ties go to the lowest index.
    pub fn best_arm(&self, t: usize) -> Result<usize> {
        let ctx = self.contexts(t)?;
        let mut best = 0;
        for a in 1..ctx.len() {
            if ctx[a].dot(&self.theta_star) > ctx[best].dot(&self.theta_star) {
                best = a;
            }
        }
        Ok(best)
    }

    /// `μ(x_{t,a*}ᵀθ*) − μ(x_{t,a}ᵀθ*)`.
    pub fn instant_regret(&self, t: usize, a: usize) -> Result<f64> {
        let best = self.mean_reward(t, self.best_arm(t)?)?;
        Ok((best - self.mean_reward(t, a)?).max(0.0))
    }

    /// SHA-256 over `θ*` and the context tensor, little-endian.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        for v in self.theta_star.iter() {
            h.update(v.to_le_bytes());
        }
        for x in &self.contexts {
            for v in x.iter() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }

    pub fn export(&self) -> InstanceFile {
        InstanceFile {
            problem: self.problem.clone(),
            regime: self.regime,
            seed: self.seed,
            axis_aligned: self.axis_aligned,
            theta_star: self.theta_star.iter().copied().collect(),
            basis: self.basis.as_slice().to_vec(),
            effective_rank: self.effective_rank(),
            realized_kappa: self.realized_kappa,
            content_hash: self.content_hash(),
        }
    }

    /// Regenerates the instance from the file's seed and checks it against
    /// the stored parameter, basis and hash.
    pub fn import(file: &InstanceFile) -> Result<Self> {
        let inst = Self::generate_with(&file.problem, file.regime, file.seed, file.axis_aligned)?;
        let mismatch = |what: &str| Error::Verification(format!("{what} differs from regenerated instance"));
        if inst.theta_star.as_slice() != file.theta_star.as_slice() {
            return Err(mismatch("theta_star"));
        }
        if inst.basis.as_slice() != file.basis.as_slice() || inst.effective_rank() != file.effective_rank {
            return Err(mismatch("basis"));
        }
        if inst.content_hash() != file.content_hash {
            return Err(mismatch("content hash"));
        }
        Ok(inst)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.export())?;
        std::fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::import(&serde_json::from_str(&text)?)
    }
}

/// Serialized form of an instance; contexts are regenerated on import.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub problem: ProblemConfig,
    pub regime: Regime,
    pub seed: u64,
    pub axis_aligned: bool,
    pub theta_star: Vec<f64>,
    /// Column-major `d×r` frame.
    pub basis: Vec<f64>,
    pub effective_rank: usize,
    pub realized_kappa: f64,
    pub content_hash: String,
}

fn gaussian_direction<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let g = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
        let norm = g.norm();
        if norm > 1e-12 {
            return g / norm;
        }
    }
}

fn draw_context<R: Rng + ?Sized>(rng: &mut R, basis: &DMatrix<f64>, lo: f64, hi: f64) -> DVector<f64> {
    let dir = gaussian_direction(rng, basis.ncols());
    let norm = rng.random_range(lo..=hi);
    basis * (dir * norm)
}
