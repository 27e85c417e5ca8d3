//! Experiment configuration files (TOML).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::domain::{AxisSpec, GridDomain, LipschitzConfig};
use crate::gp::{BetaSchedule, Kernel};
use crate::optimizer::{OptimizerSettings, Problem};
use crate::simulate::{default_eta, interrupt_registry, system_registry};
use crate::{Error, Result};

/// A component chosen by name from a registry, with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Named {
    pub name: String,
    #[serde(default, skip_serializing_if = "toml::Table::is_empty")]
    pub params: toml::Table,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub mu: f64,
    pub params: Vec<AxisSpec>,
    pub states: Vec<AxisSpec>,
    /// Snapped to the nearest state grid point.
    pub nominal_x0: Vec<f64>,
    /// Parameter vectors of `S_0` at the nominal state, snapped to the grid.
    /// A seed outside the parameter box is a `NoSafeSeed` error.
    pub seeds: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpConfig {
    /// Standard deviation of the measurement noise, also assumed by the GPs.
    pub noise_std: f64,
    /// Reward kernel first, then one per constraint.
    pub kernels: Vec<Kernel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    pub l_a: f64,
    pub l_x: f64,
    pub epsilon: f64,
    /// Defaults to `2 · v_max · monitor_period + μ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
}

fn default_stride() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Export every n-th monitor sample to `trajectories.csv`.
    #[serde(default = "default_stride")]
    pub trajectory_stride: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            trajectory_stride: default_stride(),
        }
    }
}

fn default_monitor() -> Named {
    Named {
        name: "border".into(),
        params: toml::Table::new(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    pub system: Named,
    pub grid: GridConfig,
    pub gp: GpConfig,
    pub beta: BetaSchedule,
    pub safety: SafetyConfig,
    #[serde(default = "default_monitor")]
    pub monitor: Named,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    #[serde(default)]
    pub output: OutputConfig,
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be positive, got {v}")))
    }
}

fn nonnegative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::config(field, format!("must be nonnegative, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("bytes {}..{}", s.start, s.end))
                .unwrap_or_else(|| "<document>".into());
            Error::config(field, e.message().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<document>", e.to_string()))
    }

    /// Range checks that serde cannot express.
    pub fn validate(&self) -> Result<()> {
        positive("grid.mu", self.grid.mu)?;
        if self.grid.params.is_empty() || self.grid.states.is_empty() {
            return Err(Error::config("grid", "needs parameter and state axes"));
        }
        for (k, axis) in self.grid.params.iter().chain(&self.grid.states).enumerate() {
            axis.values()
                .map_err(|e| Error::config(format!("grid axis {k}"), e.to_string()))?;
        }
        if self.grid.nominal_x0.len() != self.grid.states.len() {
            return Err(Error::config("grid.nominal_x0", "dimension must match the state axes"));
        }
        if self.grid.seeds.is_empty() {
            return Err(Error::config("grid.seeds", "at least one seed is required"));
        }
        if self.grid.seeds.iter().any(|s| s.len() != self.grid.params.len()) {
            return Err(Error::config("grid.seeds", "dimension must match the parameter axes"));
        }
        nonnegative("gp.noise_std", self.gp.noise_std)?;
        let dim = self.grid.params.len() + self.grid.states.len();
        for (i, k) in self.gp.kernels.iter().enumerate() {
            k.validate()
                .map_err(|e| Error::config(format!("gp.kernels[{i}]"), e.to_string()))?;
            if k.dim() != dim {
                return Err(Error::config(
                    format!("gp.kernels[{i}].lengthscales"),
                    format!("needs {dim} entries (parameters then states)"),
                ));
            }
        }
        if self.gp.kernels.len() < 2 {
            return Err(Error::config("gp.kernels", "need a reward and a constraint kernel"));
        }
        self.beta.validate().map_err(|e| Error::config("beta", e.to_string()))?;
        nonnegative("safety.l_a", self.safety.l_a)?;
        nonnegative("safety.l_x", self.safety.l_x)?;
        positive("safety.epsilon", self.safety.epsilon)?;
        if let Some(eta) = self.safety.eta {
            nonnegative("safety.eta", eta)?;
        }
        if self.optimizer.max_iterations == 0 {
            return Err(Error::config("optimizer.max_iterations", "must be at least 1"));
        }
        if self.output.trajectory_stride == 0 {
            return Err(Error::config("output.trajectory_stride", "must be at least 1"));
        }
        if !system_registry().contains(&self.system.name) {
            return Err(Error::config(
                "system.name",
                format!(
                    "unknown system `{}` (available: {})",
                    self.system.name,
                    system_registry().names().join(", ")
                ),
            ));
        }
        if !interrupt_registry().contains(&self.monitor.name) {
            return Err(Error::config(
                "monitor.name",
                format!(
                    "unknown interrupt rule `{}` (available: {})",
                    self.monitor.name,
                    interrupt_registry().names().join(", ")
                ),
            ));
        }
        system_registry().build(&self.system.name, &self.system.params)?;
        interrupt_registry().build(&self.monitor.name, &self.monitor.params)?;
        Ok(())
    }

    pub fn domain(&self) -> Result<GridDomain> {
        GridDomain::from_specs(&self.grid.params, &self.grid.states, self.grid.mu)
            .map_err(|e| Error::config("grid", e.to_string()))
    }

    /// Assembles the optimization problem described by this file.
    pub fn build_problem(&self) -> Result<Problem> {
        self.validate()?;
        let domain = self.domain()?;
        let system = system_registry().build(&self.system.name, &self.system.params)?;
        if system.param_dim() != domain.param_dim() || system.state_dim() != domain.state_dim() {
            return Err(Error::config(
                "grid",
                format!(
                    "system `{}` has {} parameters and {} states",
                    self.system.name,
                    system.param_dim(),
                    system.state_dim()
                ),
            ));
        }
        if self.gp.kernels.len() != system.num_constraints() + 1 {
            return Err(Error::config(
                "gp.kernels",
                format!(
                    "system has {} constraint(s); expected {} kernels",
                    system.num_constraints(),
                    system.num_constraints() + 1
                ),
            ));
        }
        let interrupt = interrupt_registry().build(&self.monitor.name, &self.monitor.params)?;
        let nominal_x0 = domain
            .quantize_flat(&self.grid.nominal_x0)
            .map_err(|e| Error::config("grid.nominal_x0", e.to_string()))?;
        let mut seeds = Vec::new();
        for s in &self.grid.seeds {
            let inside = s
                .iter()
                .zip(&self.grid.params)
                .all(|(v, axis)| *v >= axis.min && *v <= axis.max);
            if !inside {
                return Err(Error::NoSafeSeed(format!("seed {s:?} lies outside the parameter grid")));
            }
            let a = domain.nearest_param(s)?;
            seeds.push(domain.cell(a, nominal_x0));
        }
        seeds.sort_unstable();
        seeds.dedup();
        let eta = match self.safety.eta {
            Some(eta) => eta,
            None => default_eta(system.as_ref(), &domain),
        };
        let lipschitz = LipschitzConfig::new(self.safety.l_a, self.safety.l_x, self.safety.epsilon, eta)
            .map_err(|e| Error::config("safety", e.to_string()))?;
        Ok(Problem {
            domain,
            system,
            kernels: self.gp.kernels.clone(),
            noise_std: self.gp.noise_std,
            beta: self.beta.clone(),
            lipschitz,
            nominal_x0,
            seeds,
            interrupt,
        })
    }
}
