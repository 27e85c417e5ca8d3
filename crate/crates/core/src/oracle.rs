//! Brute-force reachability operators and true optima for small grids.
//!
//! These exist to check the optimizer's convergence claims; every operator
//! enumerates the whole grid and refuses grids above [`MAX_ORACLE_CELLS`].

use std::fmt::Write as _;

use crate::config::ExperimentConfig;
use crate::domain::{GridDomain, LipschitzConfig};
use crate::safeset::{Mask, SafeState};
use crate::simulate::{simulate, SystemModel};
use crate::{Error, Result};

pub const MAX_ORACLE_CELLS: usize = 500;

fn check_size(domain: &GridDomain) -> Result<()> {
    if domain.n_cells() > MAX_ORACLE_CELLS {
        return Err(Error::Oracle(format!(
            "grid has {} cells; the oracle is limited to {MAX_ORACLE_CELLS}",
            domain.n_cells()
        )));
    }
    Ok(())
}

/// Exact constraint values, rewards and monitor-rate trajectories per cell.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    g: Vec<Vec<f64>>,
    f: Vec<f64>,
    trajectories: Vec<Vec<Vec<f64>>>,
}

impl GroundTruth {
    /// Simulates every cell of the grid without a monitor.
    pub fn from_system(system: &dyn SystemModel, domain: &GridDomain) -> Result<Self> {
        check_size(domain)?;
        let mut g = Vec::with_capacity(domain.n_cells());
        let mut f = Vec::with_capacity(domain.n_cells());
        let mut trajectories = Vec::with_capacity(domain.n_cells());
        for cell in 0..domain.n_cells() {
            let (a, x) = domain.split(cell);
            let ro = simulate(system, domain.param(a), domain.state(x))?;
            g.push(ro.g_min.clone());
            f.push(ro.reward);
            trajectories.push(ro.trajectory.into_iter().map(|s| s.x).collect());
        }
        Ok(GroundTruth { g, f, trajectories })
    }

    /// Ground truth from explicit per-cell functions.
    pub fn from_fns(
        domain: &GridDomain,
        true_g: impl Fn(usize) -> Vec<f64>,
        true_f: impl Fn(usize) -> f64,
        trajectory_fn: impl Fn(usize) -> Vec<Vec<f64>>,
    ) -> Result<Self> {
        check_size(domain)?;
        let n = domain.n_cells();
        Ok(GroundTruth {
            g: (0..n).map(&true_g).collect(),
            f: (0..n).map(&true_f).collect(),
            trajectories: (0..n).map(&trajectory_fn).collect(),
        })
    }

    pub fn g(&self, cell: usize) -> &[f64] {
        &self.g[cell]
    }

    pub fn f(&self, cell: usize) -> f64 {
        self.f[cell]
    }

    /// States sampled at the monitor rate.
    pub fn trajectory(&self, cell: usize) -> &[Vec<f64>] {
        &self.trajectories[cell]
    }

    pub fn num_constraints(&self) -> usize {
        self.g.first().map_or(0, Vec::len)
    }
}

/// `R^c_ε(S)`: `S` plus every cell that, for each constraint, some member of
/// `S` certifies with its true value less ε.
pub fn reach_conn(s: &Mask, truth: &GroundTruth, cfg: &LipschitzConfig, domain: &GridDomain) -> Result<Mask> {
    check_size(domain)?;
    let n = domain.n_cells();
    let mut out = s.clone();
    if s.none() {
        return Ok(out);
    }
    for c in 0..n {
        if out.contains(c) {
            continue;
        }
        let certified = (0..truth.num_constraints()).all(|i| {
            s.iter()
                .any(|w| truth.g(w)[i] - cfg.epsilon - domain.slack(cfg, w, c) >= 0.0)
        });
        if certified {
            out.insert(c);
        }
    }
    Ok(out)
}

fn border_of(s: &Mask, domain: &GridDomain) -> Mask {
    let state = SafeState {
        safe: s.clone(),
        border: Mask::new(domain.n_states()),
        expanders: Mask::new(s.len()),
        maximizers: Mask::new(s.len()),
        failed_pairs: Mask::new(s.len()),
        fail_states: Vec::new(),
    };
    crate::safeset::compute_border(&state, domain)
}

/// `R_ε(S)`: `R^c_ε(S)` plus pairs `(a, x̃0)` where `x̃0` has a parameter in
/// `S` and the true trajectory never quantizes into `∂R^c_ε(S)`.
pub fn reach_global(s: &Mask, truth: &GroundTruth, cfg: &LipschitzConfig, domain: &GridDomain) -> Result<Mask> {
    let conn = reach_conn(s, truth, cfg, domain)?;
    let border = border_of(&conn, domain);
    let ns = domain.n_states();
    let mut occupied = Mask::new(ns);
    for c in s.iter() {
        occupied.insert(c % ns);
    }
    let mut out = conn.clone();
    for c in 0..domain.n_cells() {
        if out.contains(c) || !occupied.contains(c % ns) {
            continue;
        }
        let clear = truth.trajectory(c).iter().all(|x| match domain.quantize_flat(x) {
            Ok(q) => !border.contains(q),
            Err(_) => false,
        });
        if clear {
            out.insert(c);
        }
    }
    Ok(out)
}

/// `R̄_ε(S)`: [`reach_global`] iterated to its fixed point.
pub fn closure(s: &Mask, truth: &GroundTruth, cfg: &LipschitzConfig, domain: &GridDomain) -> Result<Mask> {
    let mut current = s.clone();
    loop {
        let next = reach_global(&current, truth, cfg, domain)?;
        if next == current {
            return Ok(current);
        }
        current = next;
    }
}

/// Best true reward within `set` at the nominal state (ties: smallest id).
pub fn oracle_optimum(truth: &GroundTruth, domain: &GridDomain, nominal_x0: usize, set: &Mask) -> Result<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for a in 0..domain.n_params() {
        let c = domain.cell(a, nominal_x0);
        if set.contains(c) && best.is_none_or(|(_, b)| truth.f(c) > b) {
            best = Some((c, truth.f(c)));
        }
    }
    best.ok_or_else(|| Error::Oracle("no safe optimum at the nominal state".into()))
}

/// Smallest constants `(L_a, L_x)` that bound every constraint's change
/// between grid cells sharing a state (for `L_a`) or a parameter (for `L_x`).
pub fn estimate_lipschitz(truth: &GroundTruth, domain: &GridDomain) -> Result<(f64, f64)> {
    check_size(domain)?;
    let q = truth.num_constraints();
    let slope = |c1: usize, c2: usize, dist: f64| -> f64 {
        (0..q)
            .map(|i| (truth.g(c1)[i] - truth.g(c2)[i]).abs() / dist)
            .fold(0.0, f64::max)
    };
    let mut l_a: f64 = 0.0;
    let mut l_x: f64 = 0.0;
    for x in 0..domain.n_states() {
        for a1 in 0..domain.n_params() {
            for a2 in a1 + 1..domain.n_params() {
                let d = domain.param_distance(a1, a2);
                l_a = l_a.max(slope(domain.cell(a1, x), domain.cell(a2, x), d));
            }
        }
    }
    for a in 0..domain.n_params() {
        for x1 in 0..domain.n_states() {
            for x2 in x1 + 1..domain.n_states() {
                let d = domain.state_distance(x1, x2);
                l_x = l_x.max(slope(domain.cell(a, x1), domain.cell(a, x2), d));
            }
        }
    }
    Ok((l_a, l_x))
}

/// Human-readable closure and optimum for a configuration's grid.
pub fn oracle_report(config: &ExperimentConfig) -> Result<String> {
    let problem = config.build_problem()?;
    let d = &problem.domain;
    let truth = GroundTruth::from_system(problem.system.as_ref(), d)?;
    let seeds = Mask::from_indices(d.n_cells(), problem.seeds.iter().copied());
    let closed = closure(&seeds, &truth, &problem.lipschitz, d)?;
    let (l_a, l_x) = estimate_lipschitz(&truth, d)?;
    let mut out = String::new();
    let _ = writeln!(out, "grid cells: {}", d.n_cells());
    let _ = writeln!(out, "seed cells: {}", seeds.count());
    let _ = writeln!(out, "closure cells: {}", closed.count());
    let nominal: Vec<String> = (0..d.n_params())
        .filter(|a| closed.contains(d.cell(*a, problem.nominal_x0)))
        .map(|a| format!("{:?}", d.param(a)))
        .collect();
    let _ = writeln!(out, "closure at nominal x0: {}", nominal.join(" "));
    match oracle_optimum(&truth, d, problem.nominal_x0, &closed) {
        Ok((cell, f)) => {
            let _ = writeln!(out, "optimum: params {:?} reward {f:.6}", d.param(d.split(cell).0));
        }
        Err(e) => {
            let _ = writeln!(out, "optimum: {e}");
        }
    }
    let _ = writeln!(out, "grid Lipschitz estimates: l_a {l_a:.6} l_x {l_x:.6}");
    Ok(out)
}
