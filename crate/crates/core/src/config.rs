use serde::{Deserialize, Serialize};

use crate::error::{config, Result};

/// Which threshold schedule the splitting policy uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Thresholds fixed at start-up from the ambient dimension.
    Fixed,
    /// Thresholds recomputed from the log-determinants of the level designs.
    DataDependent,
}

/// Scalar hyperparameters shared by policies and environments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProblemConfig {
    #[serde(rename = "d")]
    pub dim: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    #[serde(rename = "K")]
    pub arms: usize,
    /// Norm bound `B` on the unknown parameter.
    #[serde(rename = "B")]
    pub radius: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub delta: f64,
    #[serde(rename = "L_mu")]
    pub l_mu: f64,
    pub variant: Variant,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            dim: 3,
            horizon: 2000,
            arms: 5,
            radius: 1.0,
            kappa: 20.0,
            lambda: 1.0,
            delta: 0.1,
            l_mu: 0.25,
            variant: Variant::DataDependent,
        }
    }
}

impl ProblemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(config("d must be at least 1"));
        }
        if self.horizon < 2 {
            return Err(config(format!("T must be at least 2, got {}", self.horizon)));
        }
        if self.arms == 0 {
            return Err(config("K must be at least 1"));
        }
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(config(format!("B must be positive, got {}", self.radius)));
        }
        if !(self.kappa >= 4.0 && self.kappa.is_finite()) {
            return Err(config(format!("kappa must be at least 4, got {}", self.kappa)));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(config(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.lambda < 1.0 / self.kappa {
            return Err(config(format!(
                "lambda must be at least 1/kappa = {}, got {}",
                1.0 / self.kappa,
                self.lambda
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.l_mu > 0.0 && self.l_mu >= 1.0 / self.kappa) {
            return Err(config(format!(
                "L_mu must be positive and at least 1/kappa, got {}",
                self.l_mu
            )));
        }
        Ok(())
    }

    /// `κλ`, the ridge of every design matrix.
    pub fn ridge(&self) -> f64 {
        self.kappa * self.lambda
    }

    /// `log(1 + T/(κλd))`, the per-dimension log-det scale.
    pub fn log_horizon_term(&self) -> f64 {
        (self.horizon as f64 / (self.ridge() * self.dim as f64)).ln_1p()
    }
}
