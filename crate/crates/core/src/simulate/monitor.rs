use serde::Deserialize;

use crate::domain::{GridDomain, LipschitzConfig};
use crate::registry::{parse_params, Registry};
use crate::safeset::{ConfidenceTable, SafeState};
use crate::{Error, Result};

/// What an interrupt rule may inspect during a rollout.
pub struct MonitorContext<'a> {
    pub domain: &'a GridDomain,
    pub safe: &'a SafeState,
    pub table: &'a ConfidenceTable,
    pub cfg: &'a LipschitzConfig,
    border_states: Vec<usize>,
}

impl<'a> MonitorContext<'a> {
    pub fn new(
        domain: &'a GridDomain,
        safe: &'a SafeState,
        table: &'a ConfidenceTable,
        cfg: &'a LipschitzConfig,
    ) -> Self {
        MonitorContext {
            domain,
            safe,
            table,
            cfg,
            border_states: safe.border.iter().collect(),
        }
    }

    /// Euclidean distance from `x` to the nearest border state.
    pub fn border_distance(&self, x: &[f64]) -> f64 {
        self.border_states
            .iter()
            .map(|s| self.domain.distance_to_state(x, *s))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Decides when a monitored rollout must switch to its backup.
pub trait InterruptRule: Send + Sync {
    fn name(&self) -> &'static str;
    fn triggers(&self, ctx: &MonitorContext<'_>, a_flat: usize, x: &[f64]) -> Result<bool>;
}

/// Interrupts when `[x]_μ ∈ ∂S` or `x` is closer than η to the border.
#[derive(Clone, Debug, Default)]
pub struct BorderRule;

impl InterruptRule for BorderRule {
    fn name(&self) -> &'static str {
        "border"
    }

    fn triggers(&self, ctx: &MonitorContext<'_>, _a_flat: usize, x: &[f64]) -> Result<bool> {
        let q = match ctx.domain.quantize_flat(x) {
            Ok(q) => q,
            Err(Error::OutOfDomain { .. }) => return Ok(true),
            Err(e) => return Err(e),
        };
        Ok(ctx.safe.border.contains(q) || ctx.border_distance(x) < ctx.cfg.eta)
    }
}

/// Interrupts when the smallest constraint lower bound at the commanded
/// parameters and `[x]_μ` drops below `threshold`.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LowerBoundRule {
    #[serde(default)]
    pub threshold: f64,
}

impl InterruptRule for LowerBoundRule {
    fn name(&self) -> &'static str {
        "lower_bound"
    }

    fn triggers(&self, ctx: &MonitorContext<'_>, a_flat: usize, x: &[f64]) -> Result<bool> {
        let q = match ctx.domain.quantize_flat(x) {
            Ok(q) => q,
            Err(Error::OutOfDomain { .. }) => return Ok(true),
            Err(e) => return Err(e),
        };
        let cell = ctx.domain.cell(a_flat, q);
        Ok(ctx.table.min_constraint_lower(cell) < self.threshold)
    }
}

pub fn interrupt_registry() -> Registry<dyn InterruptRule> {
    let mut r: Registry<dyn InterruptRule> = Registry::new("interrupt rule");
    r.register("border", |p| {
        if !p.is_empty() {
            return Err(Error::config("monitor.params", "the border rule takes no parameters"));
        }
        Ok(Box::new(BorderRule))
    });
    r.register("lower_bound", |p| {
        Ok(Box::new(parse_params::<LowerBoundRule>("monitor.params", p)?))
    });
    r
}
