//! Dynamical systems, fixed-step integration and monitored rollouts with
//! backup-policy switching.

mod monitor;
mod systems;

pub use monitor::{interrupt_registry, BorderRule, InterruptRule, LowerBoundRule, MonitorContext};
pub use systems::{system_registry, Fig1Params, Fig1System, PendulumParams, PendulumSystem};

use serde::{Deserialize, Serialize};

use crate::domain::{GridDomain, LipschitzConfig};
use crate::safeset::{ConfidenceTable, SafeState};
use crate::{Error, Result};

/// A controlled system `ẋ = z(x, u)` with state-feedback policy `u = π(x; a)`.
pub trait SystemModel: Send + Sync {
    fn name(&self) -> &str;
    fn state_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn num_constraints(&self) -> usize;
    fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64>;
    fn policy(&self, x: &[f64], a: &[f64]) -> Vec<f64>;
    /// `ḡ_i(x)`; nonnegative means safe.
    fn immediate_constraints(&self, x: &[f64]) -> Vec<f64>;
    /// Reward of a completed experiment from its monitor samples.
    fn reward(&self, a: &[f64], samples: &[Sample]) -> f64;
    fn horizon(&self) -> f64;
    fn dt(&self) -> f64;
    /// Integration steps between monitor samples.
    fn monitor_stride(&self) -> usize;

    fn monitor_period(&self) -> f64 {
        self.dt() * self.monitor_stride() as f64
    }
}

/// One monitor sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub gbar: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RolloutRecord {
    pub trajectory: Vec<Sample>,
    pub safe: bool,
    pub x_fail: Option<Vec<f64>>,
    /// Zero for interrupted experiments.
    pub reward: f64,
    /// Minimum of each `ḡ_i` over the recorded samples.
    pub g_min: Vec<f64>,
    /// Minimum of each `ḡ_i` over every integration step.
    pub dense_g_min: Vec<f64>,
    pub switched_at: Option<f64>,
    pub backup_used: Option<Vec<f64>>,
    /// Whether the monitor was armed (the commanded pair was not in S).
    pub monitored: bool,
}

impl RolloutRecord {
    /// Constraint values reported to the model: `g_min`, or zeros when the
    /// experiment was interrupted.
    pub fn observed_constraints(&self) -> Vec<f64> {
        if self.safe {
            self.g_min.clone()
        } else {
            vec![0.0; self.g_min.len()]
        }
    }
}

fn finite_or_diverged(x: Vec<f64>, time: f64) -> Result<Vec<f64>> {
    if x.iter().all(|v| v.is_finite() && v.abs() < 1e12) {
        Ok(x)
    } else {
        Err(Error::IntegrationDiverged { time })
    }
}

/// One classical RK4 step of `ẋ = z(x, π(x; a))`.
pub fn integrate_step(system: &dyn SystemModel, x: &[f64], a: &[f64], dt: f64) -> Result<Vec<f64>> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidArgument(format!("dt {dt} must be positive")));
    }
    if x.len() != system.state_dim() || a.len() != system.param_dim() {
        return Err(Error::InvalidArgument("state or parameter dimension mismatch".into()));
    }
    let f = |y: &[f64]| system.dynamics(y, &system.policy(y, a));
    let axpy = |y: &[f64], k: &[f64], h: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = f(x);
    let k2 = f(&axpy(x, &k1, dt / 2.0));
    let k3 = f(&axpy(x, &k2, dt / 2.0));
    let k4 = f(&axpy(x, &k3, dt));
    let next = (0..x.len())
        .map(|j| x[j] + dt / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]))
        .collect();
    finite_or_diverged(next, f64::NAN)
}

/// Frozen view of the optimizer handed to a rollout.
#[derive(Clone, Copy)]
pub struct Snapshot<'a> {
    pub domain: &'a GridDomain,
    pub safe: &'a SafeState,
    pub table: &'a ConfidenceTable,
    pub cfg: &'a LipschitzConfig,
}

/// The safe parameter at `[x]_μ` with the largest smallest constraint lower
/// bound; ties go to the smallest id.
pub fn select_backup(safe: &SafeState, x: &[f64], table: &ConfidenceTable, domain: &GridDomain) -> Result<usize> {
    let xq = domain
        .quantize_flat(x)
        .map_err(|_| Error::NoBackup { state: x.to_vec() })?;
    let mut best: Option<(usize, f64)> = None;
    for a in 0..domain.n_params() {
        let cell = domain.cell(a, xq);
        if !safe.is_safe(cell) {
            continue;
        }
        let score = table.min_constraint_lower(cell);
        if best.is_none_or(|(_, b)| score > b) {
            best = Some((a, score));
        }
    }
    best.map(|(a, _)| a)
        .ok_or_else(|| Error::NoBackup { state: x.to_vec() })
}

struct Integrator<'s> {
    system: &'s dyn SystemModel,
    samples: Vec<Sample>,
    dense_min: Vec<f64>,
}

impl<'s> Integrator<'s> {
    fn new(system: &'s dyn SystemModel) -> Self {
        Integrator {
            system,
            samples: Vec::new(),
            dense_min: vec![f64::INFINITY; system.num_constraints()],
        }
    }

    fn observe(&mut self, x: &[f64]) -> Vec<f64> {
        let g = self.system.immediate_constraints(x);
        for (m, v) in self.dense_min.iter_mut().zip(&g) {
            *m = m.min(*v);
        }
        g
    }

    fn record(&mut self, t: f64, x: &[f64], a: &[f64], gbar: Vec<f64>) {
        self.samples.push(Sample {
            t,
            x: x.to_vec(),
            u: self.system.policy(x, a),
            gbar,
        });
    }

    fn g_min(&self) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; self.system.num_constraints()];
        for s in &self.samples {
            for (m, v) in out.iter_mut().zip(&s.gbar) {
                *m = m.min(*v);
            }
        }
        out
    }
}

fn step_count(system: &dyn SystemModel) -> Result<usize> {
    let (t, dt) = (system.horizon(), system.dt());
    if !(t > 0.0 && dt > 0.0 && t.is_finite()) || system.monitor_stride() == 0 {
        return Err(Error::InvalidArgument("invalid horizon, dt or monitor stride".into()));
    }
    Ok((t / dt).round().max(1.0) as usize)
}

/// Unmonitored simulation of the true system (used for ground truth).
pub fn simulate(system: &dyn SystemModel, a: &[f64], x0: &[f64]) -> Result<RolloutRecord> {
    let steps = step_count(system)?;
    let stride = system.monitor_stride();
    let dt = system.dt();
    let mut sim = Integrator::new(system);
    let mut x = x0.to_vec();
    for k in 0..=steps {
        let g = sim.observe(&x);
        if k % stride == 0 || k == steps {
            sim.record(k as f64 * dt, &x, a, g);
        }
        if k < steps {
            x = integrate_step(system, &x, a, dt).map_err(|_| Error::IntegrationDiverged { time: k as f64 * dt })?;
        }
    }
    let reward = system.reward(a, &sim.samples);
    Ok(RolloutRecord {
        g_min: sim.g_min(),
        dense_g_min: sim.dense_min.clone(),
        trajectory: sim.samples,
        safe: true,
        x_fail: None,
        reward,
        switched_at: None,
        backup_used: None,
        monitored: false,
    })
}

/// Runs one experiment with parameters `a_flat` from `x0`.
///
/// When `(a, [x0]_μ)` is not in the safe set, the monitor checks `rule` at
/// every sample and on the first trigger switches to [`select_backup`] for the
/// rest of the horizon. Such experiments report reward 0.
pub fn rollout(
    system: &dyn SystemModel,
    a_flat: usize,
    x0: &[f64],
    snapshot: Snapshot<'_>,
    rule: &dyn InterruptRule,
) -> Result<RolloutRecord> {
    let Snapshot {
        domain,
        safe,
        table,
        cfg,
    } = snapshot;
    if a_flat >= domain.n_params() {
        return Err(Error::InvalidArgument(format!("parameter id {a_flat} out of range")));
    }
    let x0q = domain.quantize_flat(x0)?;
    let monitored = !safe.is_safe(domain.cell(a_flat, x0q));
    if monitored && !(0..domain.n_params()).any(|a| safe.is_safe(domain.cell(a, x0q))) {
        return Err(Error::NoBackup { state: x0.to_vec() });
    }
    let ctx = MonitorContext::new(domain, safe, table, cfg);
    let steps = step_count(system)?;
    let stride = system.monitor_stride();
    let dt = system.dt();
    let mut sim = Integrator::new(system);
    let mut params = domain.param(a_flat).to_vec();
    let mut x = x0.to_vec();
    let mut armed = monitored;
    let mut x_fail = None;
    let mut switched_at = None;
    let mut backup_used = None;
    for k in 0..=steps {
        let t = k as f64 * dt;
        let g = sim.observe(&x);
        if k % stride == 0 || k == steps {
            if armed && rule.triggers(&ctx, a_flat, &x)? {
                let backup = select_backup(safe, &x, table, domain)?;
                params = domain.param(backup).to_vec();
                backup_used = Some(params.clone());
                x_fail = Some(x.clone());
                switched_at = Some(t);
                armed = false;
            }
            sim.record(t, &x, &params, g);
        }
        if k < steps {
            x = integrate_step(system, &x, &params, dt).map_err(|_| Error::IntegrationDiverged { time: t })?;
        }
    }
    let safe_outcome = x_fail.is_none();
    let reward = if safe_outcome {
        system.reward(&params, &sim.samples)
    } else {
        0.0
    };
    Ok(RolloutRecord {
        g_min: sim.g_min(),
        dense_g_min: sim.dense_min.clone(),
        trajectory: sim.samples,
        safe: safe_outcome,
        x_fail,
        reward,
        switched_at,
        backup_used,
        monitored,
    })
}

/// Largest state speed `‖z(x, π(x; a))‖` over all grid cells.
pub fn max_state_speed(system: &dyn SystemModel, domain: &GridDomain) -> f64 {
    let mut vmax: f64 = 0.0;
    for a in 0..domain.n_params() {
        for x in 0..domain.n_states() {
            let xs = domain.state(x);
            let dx = system.dynamics(xs, &system.policy(xs, domain.param(a)));
            vmax = vmax.max(dx.iter().map(|v| v * v).sum::<f64>().sqrt());
        }
    }
    vmax
}

/// Default interruption margin: `2 · v_max · monitor_period + μ`.
pub fn default_eta(system: &dyn SystemModel, domain: &GridDomain) -> f64 {
    2.0 * max_state_speed(system, domain) * system.monitor_period() + domain.mu()
}
