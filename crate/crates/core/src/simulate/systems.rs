use serde::{Deserialize, Serialize};

use super::{Sample, SystemModel};
use crate::registry::{parse_params, Registry};
use crate::{Error, Result};

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().fold(0.0, |acc, c| acc * x + c)
}

const FIG1_REWARD: [f64; 5] = [-2.26666667, -0.26666667, 1.76666667, 0.26666667, 0.5];
const FIG1_CONSTRAINT: [f64; 11] = [
    19.3137,
    -1.75115,
    -34.2007,
    4.18593,
    19.9015,
    -2.74682,
    -7.90079,
    0.320741,
    2.78633,
    -0.00869814,
    0.3,
];

fn check_timing(horizon: f64, dt: f64, stride: usize) -> Result<()> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::config("system.params.horizon", "must be positive"));
    }
    if !(dt.is_finite() && dt > 0.0 && dt <= horizon) {
        return Err(Error::config(
            "system.params.dt",
            "must be positive and at most the horizon",
        ));
    }
    if stride == 0 {
        return Err(Error::config("system.params.monitor_stride", "must be at least 1"));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Fig1Params {
    /// Rate at which the state relaxes towards `c(a) − threshold`; 0 freezes it.
    pub settle_rate: f64,
    pub threshold: f64,
    pub horizon: f64,
    pub dt: f64,
    pub monitor_stride: usize,
}

impl Default for Fig1Params {
    fn default() -> Self {
        Fig1Params {
            settle_rate: 1.0,
            threshold: 0.6,
            horizon: 20.0,
            dt: 0.01,
            monitor_stride: 1,
        }
    }
}

/// The one-dimensional polynomial example.
///
/// The single state `h` doubles as the immediate constraint `ḡ(h) = h` and
/// relaxes towards the policy output `c(a) − threshold`, so for a nominal
/// `h0` above every reachable margin `g(a, h0) = c(a) − threshold`. The reward
/// is `f(a)`. With `settle_rate = 0` the state is frozen.
#[derive(Clone, Debug)]
pub struct Fig1System {
    params: Fig1Params,
}

impl Fig1System {
    pub fn new(params: Fig1Params) -> Result<Self> {
        check_timing(params.horizon, params.dt, params.monitor_stride)?;
        if !(params.settle_rate.is_finite() && params.settle_rate >= 0.0) {
            return Err(Error::config("system.params.settle_rate", "must be nonnegative"));
        }
        Ok(Fig1System { params })
    }

    pub fn reward_poly(a: f64) -> f64 {
        horner(&FIG1_REWARD, a)
    }

    pub fn constraint_poly(a: f64) -> f64 {
        horner(&FIG1_CONSTRAINT, a)
    }

    pub fn params(&self) -> &Fig1Params {
        &self.params
    }
}

impl SystemModel for Fig1System {
    fn name(&self) -> &str {
        "fig1"
    }
    fn state_dim(&self) -> usize {
        1
    }
    fn param_dim(&self) -> usize {
        1
    }
    fn num_constraints(&self) -> usize {
        1
    }
    fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![self.params.settle_rate * (u[0] - x[0])]
    }
    fn policy(&self, _x: &[f64], a: &[f64]) -> Vec<f64> {
        vec![Self::constraint_poly(a[0]) - self.params.threshold]
    }
    fn immediate_constraints(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0]]
    }
    fn reward(&self, a: &[f64], _samples: &[Sample]) -> f64 {
        Self::reward_poly(a[0])
    }
    fn horizon(&self) -> f64 {
        self.params.horizon
    }
    fn dt(&self) -> f64 {
        self.params.dt
    }
    fn monitor_stride(&self) -> usize {
        self.params.monitor_stride
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendulumParams {
    pub gravity: f64,
    pub torque_limit: f64,
    /// Angle gain range mapped from the first parameter in `[0, 1]`.
    pub k_theta: (f64, f64),
    /// Rate gain range mapped from the second parameter.
    pub k_omega: (f64, f64),
    /// Rate scale of the secondary reward angle `π·tanh(ω / omega_ref)`.
    pub omega_ref: f64,
    pub horizon: f64,
    pub dt: f64,
    pub monitor_stride: usize,
}

impl Default for PendulumParams {
    fn default() -> Self {
        PendulumParams {
            gravity: 9.81,
            torque_limit: 12.0,
            k_theta: (10.0, 30.0),
            k_omega: (0.0, 5.0),
            omega_ref: 2.0,
            horizon: 10.0,
            dt: 1e-3,
            monitor_stride: 20,
        }
    }
}

/// Torque-limited inverted pendulum, `θ̈ = g sin θ + u`, with
/// `u = clamp(−(K_θ θ + K_ω ω))` and gains mapped affinely from `a ∈ [0, 1]²`.
/// One constraint, `ḡ = π/2 − |θ|`.
#[derive(Clone, Debug)]
pub struct PendulumSystem {
    params: PendulumParams,
}

impl PendulumSystem {
    pub fn new(params: PendulumParams) -> Result<Self> {
        check_timing(params.horizon, params.dt, params.monitor_stride)?;
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(params.gravity) || !pos(params.torque_limit) || !pos(params.omega_ref) {
            return Err(Error::config(
                "system.params",
                "gravity, torque_limit and omega_ref must be positive",
            ));
        }
        for (name, (lo, hi)) in [("k_theta", params.k_theta), ("k_omega", params.k_omega)] {
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return Err(Error::config(
                    format!("system.params.{name}"),
                    "range must be finite and ordered",
                ));
            }
        }
        Ok(PendulumSystem { params })
    }

    pub fn params(&self) -> &PendulumParams {
        &self.params
    }

    pub fn gains(&self, a: &[f64]) -> (f64, f64) {
        let p = &self.params;
        (
            p.k_theta.0 + a[0] * (p.k_theta.1 - p.k_theta.0),
            p.k_omega.0 + a[1] * (p.k_omega.1 - p.k_omega.0),
        )
    }
}

impl SystemModel for PendulumSystem {
    fn name(&self) -> &str {
        "pendulum"
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn num_constraints(&self) -> usize {
        1
    }
    fn dynamics(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        vec![x[1], self.params.gravity * x[0].sin() + u[0]]
    }
    fn policy(&self, x: &[f64], a: &[f64]) -> Vec<f64> {
        let (kt, kw) = self.gains(a);
        let lim = self.params.torque_limit;
        vec![(-(kt * x[0] + kw * x[1])).clamp(-lim, lim)]
    }
    fn immediate_constraints(&self, x: &[f64]) -> Vec<f64> {
        vec![std::f64::consts::FRAC_PI_2 - x[0].abs()]
    }
    fn reward(&self, _a: &[f64], samples: &[Sample]) -> f64 {
        use std::f64::consts::PI;
        if samples.is_empty() {
            return 0.0;
        }
        let total: f64 = samples
            .iter()
            .map(|s| {
                let alpha = PI * (s.x[1] / self.params.omega_ref).tanh();
                1.0 - (0.8 * s.x[0].abs() + 0.2 * alpha.abs()) / PI
            })
            .sum();
        total / samples.len() as f64
    }
    fn horizon(&self) -> f64 {
        self.params.horizon
    }
    fn dt(&self) -> f64 {
        self.params.dt
    }
    fn monitor_stride(&self) -> usize {
        self.params.monitor_stride
    }
}

/// Benchmark systems by name.
pub fn system_registry() -> Registry<dyn SystemModel> {
    let mut r: Registry<dyn SystemModel> = Registry::new("system");
    r.register("fig1", |p| {
        Ok(Box::new(Fig1System::new(parse_params("system.params", p)?)?))
    });
    r.register("pendulum", |p| {
        Ok(Box::new(PendulumSystem::new(parse_params("system.params", p)?)?))
    });
    r
}
