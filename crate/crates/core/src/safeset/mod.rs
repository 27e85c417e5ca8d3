//! Confidence bookkeeping and the sets derived from it: safe set, border,
//! expanders and maximizers.

mod confidence;
mod mask;

pub use confidence::{update_confidence, ConfidenceTable};
pub use mask::Mask;

use serde::{Deserialize, Serialize};

use crate::domain::{GridDomain, GridPoint, LipschitzConfig};
use crate::{Error, Result};

/// A state where an interrupted experiment switched to its backup, together
/// with the commanded cell it was evaluating.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailRecord {
    pub state: Vec<f64>,
    pub cell: usize,
}

/// `S_n` with its border, expanders, maximizers and failure bookkeeping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeState {
    pub safe: Mask,
    /// Over state indices.
    pub border: Mask,
    pub expanders: Mask,
    pub maximizers: Mask,
    /// `E_f`.
    pub failed_pairs: Mask,
    /// `X_fail`.
    pub fail_states: Vec<FailRecord>,
}

impl SafeState {
    pub fn new(domain: &GridDomain, init_safe: Mask) -> Result<Self> {
        if init_safe.len() != domain.n_cells() {
            return Err(Error::InvalidArgument("seed mask does not match grid".into()));
        }
        if init_safe.none() {
            return Err(Error::NoSafeSeed("initial safe set is empty".into()));
        }
        let n = domain.n_cells();
        let mut state = SafeState {
            safe: init_safe,
            border: Mask::new(domain.n_states()),
            expanders: Mask::new(n),
            maximizers: Mask::new(n),
            failed_pairs: Mask::new(n),
            fail_states: Vec::new(),
        };
        state.border = compute_border(&state, domain);
        Ok(state)
    }

    pub fn is_safe(&self, cell: usize) -> bool {
        self.safe.contains(cell)
    }

    /// State indices that have at least one safe parameter.
    pub fn safe_states(&self, domain: &GridDomain) -> Mask {
        let ns = domain.n_states();
        let mut out = Mask::new(ns);
        for cell in self.safe.iter() {
            out.insert(cell % ns);
        }
        out
    }
}

#[inline]
fn budget_box(cfg: &LipschitzConfig, budget: f64) -> (f64, f64) {
    let widen = |r: f64| r * (1.0 + 1e-9) + 1e-12;
    let ra = if cfg.l_a > 0.0 {
        widen(budget / cfg.l_a)
    } else {
        f64::INFINITY
    };
    let rx = if cfg.l_x > 0.0 {
        widen(budget / cfg.l_x)
    } else {
        f64::INFINITY
    };
    (ra, rx)
}

/// Cells certified by Lipschitz propagation from the given witnesses:
/// `⋂_i ⋃_{w ∈ S} {c : l(w, i) − slack(w, c) ≥ 0}`.
pub fn certified_cells(safe: &Mask, table: &ConfidenceTable, cfg: &LipschitzConfig, domain: &GridDomain) -> Mask {
    let n = domain.n_cells();
    let q = table.num_indices();
    let floor = cfg.l_x * domain.mu();
    let mut all: Option<Mask> = None;
    for i in 1..q {
        let mut reach = Mask::new(n);
        for w in safe.iter() {
            let l = table.lower(w, i);
            if !(l >= floor) {
                continue;
            }
            let (ra, rx) = budget_box(cfg, l - floor);
            domain.for_each_in_box(w, ra, rx, |c| {
                if !reach.contains(c) && l - domain.slack(cfg, w, c) >= 0.0 {
                    reach.insert(c);
                }
                true
            });
        }
        all = Some(match all {
            None => reach,
            Some(mut acc) => {
                for c in 0..n {
                    if acc.contains(c) && !reach.contains(c) {
                        acc.remove(c);
                    }
                }
                acc
            }
        });
    }
    all.unwrap_or_else(|| Mask::new(n))
}

/// Safe-set update `S_n = S_{n−1} ∪ certified_cells(S_{n−1})`.
///
/// Failed pairs that become certified leave `E_f`. The border is refreshed.
pub fn expand_safe_set(
    state: &SafeState,
    table: &ConfidenceTable,
    cfg: &LipschitzConfig,
    domain: &GridDomain,
) -> SafeState {
    let mut next = state.clone();
    let cert = certified_cells(&state.safe, table, cfg, domain);
    for c in cert.iter() {
        next.safe.insert(c);
        next.failed_pairs.remove(c);
    }
    next.border = compute_border(&next, domain);
    next
}

/// Adds one cell after a successful global experiment, without propagation.
pub fn add_global_point(state: &SafeState, point: &GridPoint, domain: &GridDomain) -> Result<SafeState> {
    let cell = domain.flat_id(point)?;
    let mut next = state.clone();
    next.safe.insert(cell);
    next.failed_pairs.remove(cell);
    next.border = compute_border(&next, domain);
    Ok(next)
}

/// `∂S`: states with a safe parameter and at least one border neighbour
/// (within L1 distance `< 2μ`) that has none. Off-grid neighbours count as
/// unsafe.
pub fn compute_border(state: &SafeState, domain: &GridDomain) -> Mask {
    let occupied = state.safe_states(domain);
    let mut border = Mask::new(domain.n_states());
    for x in occupied.iter() {
        let exposed = domain
            .border_neighbours(x)
            .iter()
            .any(|nb| nb.is_none_or(|y| !occupied.contains(y)));
        if exposed {
            border.insert(x);
        }
    }
    border
}

/// Largest optimistic certification budget `max_i u(w, i) − L_x μ`.
fn optimistic_budget(table: &ConfidenceTable, floor: f64, w: usize) -> f64 {
    (1..table.num_indices())
        .map(|i| table.upper(w, i) - floor)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `e_n` for every cell: the number of unsafe cells that some constraint's
/// upper bound at the cell could certify. Zero outside the safe set.
pub fn expander_counts(
    state: &SafeState,
    table: &ConfidenceTable,
    cfg: &LipschitzConfig,
    domain: &GridDomain,
) -> Vec<usize> {
    let floor = cfg.l_x * domain.mu();
    let q = table.num_indices();
    let mut counts = vec![0; domain.n_cells()];
    for w in state.safe.iter() {
        let budget = optimistic_budget(table, floor, w);
        if !(budget >= 0.0) {
            continue;
        }
        let (ra, rx) = budget_box(cfg, budget);
        let mut count = 0;
        domain.for_each_in_box(w, ra, rx, |c| {
            if !state.safe.contains(c) {
                let slack = domain.slack(cfg, w, c);
                if (1..q).any(|i| table.upper(w, i) - slack >= 0.0) {
                    count += 1;
                }
            }
            true
        });
        counts[w] = count;
    }
    counts
}

/// `G_n`, stopping at the first witness per cell.
pub fn compute_expanders(
    state: &SafeState,
    table: &ConfidenceTable,
    cfg: &LipschitzConfig,
    domain: &GridDomain,
) -> Mask {
    let floor = cfg.l_x * domain.mu();
    let q = table.num_indices();
    let mut out = Mask::new(domain.n_cells());
    for w in state.safe.iter() {
        let budget = optimistic_budget(table, floor, w);
        if !(budget >= 0.0) {
            continue;
        }
        let (ra, rx) = budget_box(cfg, budget);
        let exhausted = domain.for_each_in_box(w, ra, rx, |c| {
            if state.safe.contains(c) {
                return true;
            }
            let slack = domain.slack(cfg, w, c);
            !(1..q).any(|i| table.upper(w, i) - slack >= 0.0)
        });
        if !exhausted {
            out.insert(w);
        }
    }
    out
}

/// `M_n`: safe cells at the nominal state whose reward upper bound reaches
/// the best reward lower bound there.
pub fn compute_maximizers(state: &SafeState, table: &ConfidenceTable, nominal_x0: usize, domain: &GridDomain) -> Mask {
    let mut out = Mask::new(domain.n_cells());
    let slice: Vec<usize> = (0..domain.n_params())
        .map(|a| domain.cell(a, nominal_x0))
        .filter(|c| state.safe.contains(*c))
        .collect();
    let best = slice
        .iter()
        .map(|c| table.lower(*c, 0))
        .fold(f64::NEG_INFINITY, f64::max);
    for c in slice {
        if table.upper(c, 0) >= best {
            out.insert(c);
        }
    }
    out
}

/// Safe cell at the nominal state with the largest reward lower bound.
pub fn best_guess(state: &SafeState, table: &ConfidenceTable, nominal_x0: usize, domain: &GridDomain) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for a in 0..domain.n_params() {
        let c = domain.cell(a, nominal_x0);
        if !state.safe.contains(c) {
            continue;
        }
        let l = table.lower(c, 0);
        if best.is_none_or(|(_, b)| l > b) {
            best = Some((c, l));
        }
    }
    best.map(|(c, _)| c).ok_or(Error::NoSafePolicy)
}
