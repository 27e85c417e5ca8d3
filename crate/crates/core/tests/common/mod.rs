//! Helpers shared by the integration tests: a small test system with known
//! behaviour, random instances, and brute-force reference implementations.

#![allow(dead_code)]

use gosafe::domain::{GridDomain, LipschitzConfig};
use gosafe::gp::{BetaSchedule, Kernel, KernelFamily};
use gosafe::optimizer::{FailedObservations, GoSafe, Mode, OptimizerSettings, Problem, StageBudgets};
use gosafe::oracle::{estimate_lipschitz, GroundTruth};
use gosafe::safeset::{ConfidenceTable, Mask};
use gosafe::simulate::{BorderRule, Sample, SystemModel};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// First-order lag `ḣ = rate (c(a) − h)` with `ḡ = h`, so `g(a, h0)` is the
/// lowest level reached on the way from `h0` towards `c(a)`. The reward
/// depends on the parameters only.
#[derive(Clone, Debug)]
pub struct SettleSystem {
    pub rate: f64,
    pub horizon: f64,
    pub dt: f64,
    /// `c(a) = c[0] + Σ c[k] sin(w[k] a + p[k])`.
    pub target: Vec<(f64, f64, f64)>,
    pub offset: f64,
    pub reward_terms: Vec<(f64, f64, f64)>,
}

fn trig(terms: &[(f64, f64, f64)], a: f64) -> f64 {
    terms.iter().map(|(c, w, p)| c * (w * a + p).sin()).sum()
}

impl SettleSystem {
    pub fn random(r: &mut ChaCha8Rng) -> Self {
        let target = (0..3)
            .map(|_| {
                (
                    r.random_range(0.1..0.5),
                    r.random_range(1.0..4.0),
                    r.random_range(0.0..6.3),
                )
            })
            .collect();
        let reward_terms = (0..2)
            .map(|_| {
                (
                    r.random_range(0.2..0.6),
                    r.random_range(1.0..3.0),
                    r.random_range(0.0..6.3),
                )
            })
            .collect();
        SettleSystem {
            rate: 0.75,
            horizon: 2.0,
            dt: 0.02,
            target,
            offset: r.random_range(0.2..0.6),
            reward_terms,
        }
    }

    pub fn c(&self, a: f64) -> f64 {
        self.offset + trig(&self.target, a)
    }

    pub fn f(&self, a: f64) -> f64 {
        trig(&self.reward_terms, a)
    }

    /// Closed-form `min_t h(t)` over the horizon.
    pub fn g_exact(&self, a: f64, h0: f64) -> f64 {
        let c = self.c(a);
        if c >= h0 {
            h0
        } else {
            c + (h0 - c) * (-self.rate * self.horizon).exp()
        }
    }
}

impl SystemModel for SettleSystem {
    fn name(&self) -> &str {
        "settle"
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
        vec![self.rate * (u[0] - x[0])]
    }
    fn policy(&self, _x: &[f64], a: &[f64]) -> Vec<f64> {
        vec![self.c(a[0])]
    }
    fn immediate_constraints(&self, x: &[f64]) -> Vec<f64> {
        vec![x[0]]
    }
    fn reward(&self, a: &[f64], _samples: &[Sample]) -> f64 {
        self.f(a[0])
    }
    fn horizon(&self) -> f64 {
        self.horizon
    }
    fn dt(&self) -> f64 {
        self.dt
    }
    fn monitor_stride(&self) -> usize {
        1
    }
}

pub struct MicroInstance {
    pub system: SettleSystem,
    pub domain: GridDomain,
    pub truth: GroundTruth,
    pub cfg: LipschitzConfig,
    pub nominal_x0: usize,
    pub seeds: Vec<usize>,
}

pub const MICRO_EPSILON: f64 = 0.05;

/// Random settle instance with at most 200 cells, grid Lipschitz constants
/// and a seed at the most robust parameter of the nominal (top) state.
pub fn micro_instance(seed: u64) -> MicroInstance {
    let mut r = rng(seed);
    loop {
        let system = SettleSystem::random(&mut r);
        let na = r.random_range(8..=20usize);
        let nx = r.random_range(4..=(200 / na).min(10));
        let params: Vec<f64> = (0..na).map(|i| -1.0 + 2.0 * i as f64 / (na - 1) as f64).collect();
        let states: Vec<f64> = (0..nx).map(|i| i as f64 / (nx - 1) as f64).collect();
        let mu = 0.51 / (nx - 1) as f64;
        let domain = GridDomain::new(vec![params], vec![states], mu).unwrap();
        let truth = GroundTruth::from_system(&system, &domain).unwrap();
        let (l_a, l_x) = estimate_lipschitz(&truth, &domain).unwrap();
        let cfg = LipschitzConfig::new(l_a, l_x, MICRO_EPSILON, 0.0).unwrap();
        let nominal_x0 = nx - 1;
        let best = (0..na)
            .map(|a| domain.cell(a, nominal_x0))
            .max_by(|p, q| truth.g(*p)[0].total_cmp(&truth.g(*q)[0]))
            .unwrap();
        // The seed's initial bound must be valid, and some of the grid unsafe.
        let unsafe_cells = (0..domain.n_cells()).filter(|c| truth.g(*c)[0] < 0.0).count();
        if truth.g(best)[0] < l_x * mu || unsafe_cells == 0 {
            continue;
        }
        return MicroInstance {
            system,
            domain,
            truth,
            cfg,
            nominal_x0,
            seeds: vec![best],
        };
    }
}

impl MicroInstance {
    pub fn problem(&self, beta: f64) -> Problem {
        let kernel = |variance| Kernel::new(KernelFamily::Matern32, vec![0.2, 0.4], variance).unwrap();
        Problem {
            domain: self.domain.clone(),
            system: Box::new(self.system.clone()),
            kernels: vec![kernel(1.0), kernel(1.0)],
            noise_std: 0.0,
            beta: BetaSchedule::constant(beta),
            lipschitz: self.cfg.clone(),
            nominal_x0: self.nominal_x0,
            seeds: self.seeds.clone(),
            interrupt: Box::new(BorderRule),
        }
    }

    pub fn optimizer(&self, mode: Mode, seed: u64) -> GoSafe {
        let settings = OptimizerSettings {
            mode,
            practical_mode: false,
            budgets: StageBudgets::default(),
            max_iterations: 2000,
            failed_observations: FailedObservations::Skip,
        };
        GoSafe::new(self.problem(16.0), settings, seed).unwrap()
    }

    pub fn seed_mask(&self) -> Mask {
        Mask::from_indices(self.domain.n_cells(), self.seeds.iter().copied())
    }
}

/// A random grid of at most `max_cells` cells with uniform axes.
pub fn random_domain(r: &mut ChaCha8Rng, max_cells: usize) -> GridDomain {
    loop {
        let pd = r.random_range(1..=2usize);
        let sd = r.random_range(1..=2usize);
        let axis = |r: &mut ChaCha8Rng| {
            let n = r.random_range(1..=6usize);
            let lo = r.random_range(-1.0..0.0);
            let step = r.random_range(0.1..0.5);
            (0..n).map(|i| lo + step * i as f64).collect::<Vec<f64>>()
        };
        let params: Vec<Vec<f64>> = (0..pd).map(|_| axis(r)).collect();
        let states: Vec<Vec<f64>> = (0..sd).map(|_| axis(r)).collect();
        let cells: usize = params.iter().chain(&states).map(Vec::len).product();
        if cells > max_cells || cells < 2 {
            continue;
        }
        // μ just large enough for the state grid, times a random factor.
        let steps: Vec<f64> = states.iter().filter(|s| s.len() > 1).map(|s| s[1] - s[0]).collect();
        let max_step = steps.iter().cloned().fold(0.0, f64::max);
        let radius = 0.5 * steps.iter().map(|s| s * s).sum::<f64>().sqrt();
        let base = radius.max(0.5 * max_step * 1.001).max(0.01);
        let mu = base * r.random_range(1.0..2.5);
        if let Ok(d) = GridDomain::new(params, states, mu) {
            return d;
        }
    }
}

pub fn random_mask(r: &mut ChaCha8Rng, len: usize, p: f64) -> Mask {
    let mut m = Mask::from_bools((0..len).map(|_| r.random_bool(p)).collect());
    if m.none() {
        m.insert(r.random_range(0..len));
    }
    m
}

/// Random bounds with `l ≤ u`, some of them infinite.
pub fn random_table(r: &mut ChaCha8Rng, cells: usize, q: usize) -> ConfidenceTable {
    let mut lower = Vec::with_capacity(cells * q);
    let mut upper = Vec::with_capacity(cells * q);
    for _ in 0..cells * q {
        let l: f64 = if r.random_bool(0.1) {
            f64::NEG_INFINITY
        } else {
            r.random_range(-1.0..2.0)
        };
        let u = if r.random_bool(0.05) {
            f64::INFINITY
        } else if l.is_finite() {
            l + r.random_range(0.0..1.5)
        } else {
            r.random_range(-1.0..2.0)
        };
        lower.push(l);
        upper.push(u);
    }
    ConfidenceTable::from_bounds(q, lower, upper).unwrap()
}

pub fn random_cfg(r: &mut ChaCha8Rng) -> LipschitzConfig {
    LipschitzConfig::new(
        r.random_range(0.2..3.0),
        r.random_range(0.2..3.0),
        r.random_range(0.01..0.2),
        0.0,
    )
    .unwrap()
}

/// Random grid, safe set, confidence table and constants for checking the
/// set machinery against brute force.
pub struct SetCase {
    pub d: GridDomain,
    pub safe: Mask,
    pub table: ConfidenceTable,
    pub cfg: LipschitzConfig,
    pub nominal: usize,
}

pub fn set_case(seed: u64) -> SetCase {
    let mut r = rng(seed);
    let d = random_domain(&mut r, 200);
    let p = r.random_range(0.05..0.6);
    let safe = random_mask(&mut r, d.n_cells(), p);
    let q = r.random_range(2..=3usize);
    let table = random_table(&mut r, d.n_cells(), q);
    let cfg = random_cfg(&mut r);
    let nominal = r.random_range(0..d.n_states());
    SetCase {
        d,
        safe,
        table,
        cfg,
        nominal,
    }
}

fn norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Slack computed from raw coordinates.
pub fn brute_slack(d: &GridDomain, cfg: &LipschitzConfig, from: usize, to: usize) -> f64 {
    let (a1, x1) = d.split(from);
    let (a2, x2) = d.split(to);
    cfg.l_a * norm(d.param(a1), d.param(a2)) + cfg.l_x * (norm(d.state(x1), d.state(x2)) + d.mu())
}

/// Safe-set update by definition: every cell for which each constraint has
/// some certifying witness in `safe`.
pub fn brute_update(safe: &Mask, t: &ConfidenceTable, cfg: &LipschitzConfig, d: &GridDomain) -> Mask {
    let mut out = safe.clone();
    for c in 0..d.n_cells() {
        let ok = (1..t.num_indices()).all(|i| safe.iter().any(|w| t.lower(w, i) - brute_slack(d, cfg, w, c) >= 0.0));
        if ok {
            out.insert(c);
        }
    }
    out
}

/// State indices with a safe parameter.
pub fn occupied(safe: &Mask, d: &GridDomain) -> Vec<bool> {
    let mut occ = vec![false; d.n_states()];
    for c in safe.iter() {
        occ[d.split(c).1] = true;
    }
    occ
}

/// Border by scanning integer offsets of the (uniform) state lattice,
/// including positions beyond the grid.
pub fn brute_border(safe: &Mask, d: &GridDomain) -> Mask {
    let occ = occupied(safe, d);
    let axes = d.state_axes();
    let steps: Vec<f64> = axes
        .iter()
        .map(|a| if a.len() > 1 { a[1] - a[0] } else { f64::INFINITY })
        .collect();
    let reach: Vec<i64> = steps
        .iter()
        .map(|s| {
            if s.is_finite() {
                (2.0 * d.mu() / s).ceil() as i64 + 1
            } else {
                0
            }
        })
        .collect();
    let mut border = Mask::new(d.n_states());
    for x in 0..d.n_states() {
        if !occ[x] {
            continue;
        }
        let idx = d.state_multi_index(x);
        let mut offsets = vec![vec![]];
        for r in &reach {
            offsets = offsets
                .into_iter()
                .flat_map(|p: Vec<i64>| (-r..=*r).map(move |o| [p.clone(), vec![o]].concat()))
                .collect();
        }
        let exposed = offsets.iter().any(|off| {
            if off.iter().all(|o| *o == 0) {
                return false;
            }
            let l1: f64 = off
                .iter()
                .zip(&steps)
                .map(|(o, s)| if *o == 0 { 0.0 } else { (*o as f64).abs() * s })
                .sum();
            if l1 >= 2.0 * d.mu() {
                return false;
            }
            let target: Option<Vec<usize>> = off
                .iter()
                .zip(&idx)
                .zip(axes)
                .map(|((o, i), axis)| {
                    let j = *i as i64 + o;
                    (j >= 0 && (j as usize) < axis.len()).then_some(j as usize)
                })
                .collect();
            match target.and_then(|t| d.state_index(&t)) {
                Some(y) => !occ[y],
                None => true,
            }
        });
        if exposed {
            border.insert(x);
        }
    }
    border
}

/// Expander counts by the exhaustive double loop.
pub fn brute_expander_counts(safe: &Mask, t: &ConfidenceTable, cfg: &LipschitzConfig, d: &GridDomain) -> Vec<usize> {
    (0..d.n_cells())
        .map(|w| {
            if !safe.contains(w) {
                return 0;
            }
            (0..d.n_cells())
                .filter(|c| !safe.contains(*c))
                .filter(|c| (1..t.num_indices()).any(|i| t.upper(w, i) - brute_slack(d, cfg, w, *c) >= 0.0))
                .count()
        })
        .collect()
}

pub fn brute_maximizers(safe: &Mask, t: &ConfidenceTable, nominal: usize, d: &GridDomain) -> Mask {
    let slice: Vec<usize> = (0..d.n_params())
        .map(|a| d.cell(a, nominal))
        .filter(|c| safe.contains(*c))
        .collect();
    let best = slice.iter().map(|c| t.lower(*c, 0)).fold(f64::NEG_INFINITY, f64::max);
    Mask::from_indices(d.n_cells(), slice.into_iter().filter(|c| t.upper(*c, 0) >= best))
}

pub fn brute_best_guess(safe: &Mask, t: &ConfidenceTable, nominal: usize, d: &GridDomain) -> Option<usize> {
    let mut best: Option<usize> = None;
    for a in 0..d.n_params() {
        let c = d.cell(a, nominal);
        if safe.contains(c) && best.is_none_or(|b| t.lower(c, 0) > t.lower(b, 0)) {
            best = Some(c);
        }
    }
    best
}

/// Matérn 3/2 or squared-exponential covariance written out directly.
pub fn reference_kernel(family: KernelFamily, ls: &[f64], var: f64, a: &[f64], b: &[f64]) -> f64 {
    let r = a
        .iter()
        .zip(b)
        .zip(ls)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum::<f64>()
        .sqrt();
    match family {
        KernelFamily::Matern32 => var * (1.0 + 3f64.sqrt() * r) * (-(3f64.sqrt()) * r).exp(),
        KernelFamily::SquaredExponential => var * (-0.5 * r * r).exp(),
    }
}

/// Posterior mean and variance by a dense Cholesky solve.
pub fn dense_posterior(kernel: &Kernel, noise: f64, xs: &[Vec<f64>], ys: &[f64], query: &[f64]) -> (f64, f64) {
    let k = |a: &[f64], b: &[f64]| reference_kernel(kernel.family, &kernel.lengthscales, kernel.variance, a, b);
    let prior = k(query, query);
    if xs.is_empty() {
        return (0.0, prior);
    }
    let n = xs.len();
    let gram = DMatrix::from_fn(n, n, |i, j| {
        k(&xs[i], &xs[j]) + if i == j { noise * noise } else { 0.0 }
    });
    let chol = gram.cholesky().expect("gram matrix is positive definite");
    let kq = DVector::from_fn(n, |i, _| k(&xs[i], query));
    let alpha = chol.solve(&DVector::from_column_slice(ys));
    let v = chol.solve(&kq);
    (kq.dot(&alpha), (prior - kq.dot(&v)).max(0.0))
}
