use std::path::{Path as FsPath, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CuspError, Result};
use crate::estimators::{EstimatorKind, Prior, PriorKind};
use crate::limit_law::MAX_GRID_NODES;
use crate::model::{validate_model_with, CuspModel, ValidationOptions, ValidationReport};

/// Largest number of time steps per path (`dt ≥ T / 10⁶`).
pub const MAX_STEPS: usize = 1_000_000;
const MIN_STEPS: usize = 100;

/// How the time step is tied to the noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DtRule {
    /// `dt ≤ factor · ε²`, floored at `T / 10⁶`.
    EpsSquared {
        #[serde(default = "one")]
        factor: f64,
    },
    Explicit {
        n_steps: usize,
    },
}

fn one() -> f64 {
    1.0
}

impl Default for DtRule {
    fn default() -> Self {
        DtRule::EpsSquared { factor: 1.0 }
    }
}

impl DtRule {
    pub fn n_steps(&self, horizon: f64, eps: f64) -> usize {
        match *self {
            DtRule::EpsSquared { factor } => {
                let n = (horizon / (factor * eps * eps)).ceil();
                if n.is_finite() {
                    (n as usize).clamp(MIN_STEPS, MAX_STEPS)
                } else {
                    MAX_STEPS
                }
            }
            DtRule::Explicit { n_steps } => n_steps,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitSpec {
    #[serde(rename = "U")]
    pub half_width: f64,
    pub n_per_side: usize,
    pub n_samples: usize,
}

impl Default for LimitSpec {
    fn default() -> Self {
        Self {
            half_width: 15.0,
            n_per_side: 600,
            n_samples: 10_000,
        }
    }
}

/// Monte Carlo sizes for the property checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropertySpec {
    pub deviation_replicates: usize,
    pub holder_replicates: usize,
    pub holder_eps: f64,
    pub moment_replicates: usize,
    pub occupation_replicates: usize,
    pub anchor_replicates: usize,
    pub fbm_samples: usize,
    pub uniformity_replicates: usize,
}

impl Default for PropertySpec {
    fn default() -> Self {
        Self {
            deviation_replicates: 1000,
            holder_replicates: 2000,
            holder_eps: 0.02,
            moment_replicates: 2000,
            occupation_replicates: 200,
            anchor_replicates: 50,
            fbm_samples: 10_000,
            uniformity_replicates: 200,
        }
    }
}

fn default_estimators() -> Vec<EstimatorKind> {
    vec![EstimatorKind::Mle, EstimatorKind::Bayes, EstimatorKind::Mde]
}

fn default_prior() -> PriorKind {
    PriorKind::Uniform
}

/// A Monte Carlo experiment, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model: CuspModel,
    pub theta0: f64,
    pub eps_list: Vec<f64>,
    pub n_replicates: usize,
    #[serde(default)]
    pub dt_rule: DtRule,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_prior")]
    pub prior: PriorKind,
    #[serde(default)]
    pub limit: LimitSpec,
    pub master_seed: u64,
    pub out_dir: PathBuf,
    /// Worker threads; 0 uses every available core.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub properties: PropertySpec,
    /// Extra true values for the uniformity check, e.g. `[0.8, 1.0, 1.2]`.
    #[serde(default)]
    pub uniformity_thetas: Option<Vec<f64>>,
    /// Check `θ_hi < x_T(θ)` on a dense θ grid rather than the two ends.
    #[serde(default)]
    pub dense_theta_check: bool,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| CuspError::Config(e.to_string()))
    }

    pub fn load(path: &FsPath) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CuspError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// The baseline experiment: κ = 1/4, a = 1, h ≡ 1, θ₀ = 1, x₀ = 0,
    /// T = 3, Θ = (0.5, 1.5), ε ∈ {0.1, 0.05, 0.02, 0.01}, 2000 replicates.
    pub fn reference(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            model: CuspModel::reference(),
            theta0: 1.0,
            eps_list: vec![0.1, 0.05, 0.02, 0.01],
            n_replicates: 2000,
            dt_rule: DtRule::default(),
            estimators: default_estimators(),
            prior: PriorKind::Uniform,
            limit: LimitSpec::default(),
            master_seed: 20_240_601,
            out_dir: out_dir.into(),
            workers: 0,
            properties: PropertySpec::default(),
            uniformity_thetas: None,
            dense_theta_check: false,
        }
    }

    pub fn n_steps(&self, eps: f64) -> usize {
        self.dt_rule.n_steps(self.model.horizon, eps)
    }

    pub fn prior(&self) -> Result<Prior> {
        Prior::new(self.prior, self.model.theta_lo, self.model.theta_hi)
    }

    /// Model validation with the catalog bounds of `h`.
    pub fn model_report(&self) -> Result<ValidationReport> {
        let b = self.model.h.lower_bound().unwrap_or(f64::MIN_POSITIVE);
        let h1 = self.model.h.derivative_bound();
        let opts = ValidationOptions {
            dense_theta: self.dense_theta_check.then_some(51),
            ..ValidationOptions::default()
        };
        validate_model_with(&self.model, b.max(f64::MIN_POSITIVE), h1.max(f64::MIN_POSITIVE), opts)
    }

    /// Every problem with the configuration, empty when it is usable.
    pub fn problems(&self) -> Result<Vec<String>> {
        let mut out: Vec<String> = self
            .model_report()?
            .violations
            .into_iter()
            .map(|v| format!("model: {} ({})", v.clause, v.detail))
            .collect();
        let m = &self.model;
        if !(self.theta0 > m.theta_lo && self.theta0 < m.theta_hi) {
            out.push(format!(
                "theta0 = {} outside Θ = ({}, {})",
                self.theta0, m.theta_lo, m.theta_hi
            ));
        }
        if self.eps_list.is_empty() {
            out.push("eps_list is empty".into());
        }
        if self.eps_list.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            out.push("eps_list entries must be positive".into());
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            out.push("eps_list must be strictly decreasing".into());
        }
        if self.n_replicates < 1 {
            out.push("n_replicates must be >= 1".into());
        }
        if self.n_replicates > u32::MAX as usize {
            out.push("n_replicates must fit in 32 bits".into());
        }
        if self.estimators.is_empty() {
            out.push("no estimators requested".into());
        }
        match self.dt_rule {
            DtRule::EpsSquared { factor } if !(factor > 0.0 && factor <= 1.0) => {
                out.push(format!("dt_rule factor {factor} must lie in (0, 1]"))
            }
            DtRule::Explicit { n_steps } if !(MIN_STEPS..=MAX_STEPS).contains(&n_steps) => {
                out.push(format!("dt_rule n_steps {n_steps} outside [{MIN_STEPS}, {MAX_STEPS}]"))
            }
            _ => {}
        }
        if let Err(e) = self.prior() {
            out.push(format!("prior: {e}"));
        }
        let l = &self.limit;
        if !(l.half_width > 0.0) || l.n_per_side < 8 || 2 * l.n_per_side + 1 > MAX_GRID_NODES {
            out.push(format!(
                "limit grid U = {}, n_per_side = {} invalid (need U > 0, 8 <= n_per_side, 2n+1 <= {MAX_GRID_NODES})",
                l.half_width, l.n_per_side
            ));
        }
        if l.n_samples < 1 {
            out.push("limit.n_samples must be >= 1".into());
        }
        if let Some(ts) = &self.uniformity_thetas {
            if let Some(t) = ts.iter().find(|t| !(**t > m.theta_lo && **t < m.theta_hi)) {
                out.push(format!("uniformity theta {t} outside Θ"));
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<()> {
        let problems = self.problems()?;
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CuspError::Config(problems.join("; ")))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
theta0 = 1.0
eps_list = [0.1, 0.05]
n_replicates = 10
estimators = ["mle", "bayes"]
master_seed = 7
out_dir = "out"

[model]
a = 1.0
kappa = 0.25
x0 = 0.0
T = 3.0
theta_lo = 0.5
theta_hi = 1.5

[model.h]
name = "constant"
params = { c = 1.0 }

[dt_rule]
kind = "eps_squared"

[prior]
name = "truncated_gaussian"
params = { mu = 1.0, sigma = 0.2 }

[limit]
U = 15.0
n_per_side = 400
n_samples = 1000
"#;

    #[test]
    fn parses_documented_schema() {
        let c = ExperimentConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(c.model, CuspModel::reference());
        assert_eq!(c.prior, PriorKind::TruncatedGaussian { mu: 1.0, sigma: 0.2 });
        assert_eq!(c.limit.n_per_side, 400);
        assert_eq!(c.properties, PropertySpec::default());
        c.validate().unwrap();
    }

    #[test]
    fn step_rule() {
        let r = DtRule::default();
        assert_eq!(r.n_steps(3.0, 0.01), 30_000);
        assert_eq!(r.n_steps(3.0, 0.1), 300);
        assert_eq!(r.n_steps(3.0, 1e-5), MAX_STEPS);
        assert_eq!(r.n_steps(3.0, 10.0), MIN_STEPS);
    }

    #[test]
    fn rejects_bad_lists() {
        let mut c = ExperimentConfig::reference("out");
        c.eps_list = vec![0.01, 0.1];
        c.theta0 = 2.0;
        let p = c.problems().unwrap();
        assert!(p.iter().any(|s| s.contains("decreasing")));
        assert!(p.iter().any(|s| s.contains("theta0")));
    }

    #[test]
    fn reference_is_valid() {
        ExperimentConfig::reference("out").validate().unwrap();
    }
}
