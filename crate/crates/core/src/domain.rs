//! The finite search grid `A × X_μ`: policy parameters crossed with
//! discretized initial conditions.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A uniformly spaced axis, `count` points from `min` to `max` inclusive.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisSpec {
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

impl AxisSpec {
    pub fn new(min: f64, max: f64, count: usize) -> Self {
        AxisSpec { min, max, count }
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("axis needs at least one point".into()));
        }
        if !(self.min.is_finite() && self.max.is_finite()) {
            return Err(Error::InvalidArgument("axis bounds must be finite".into()));
        }
        if self.count == 1 {
            return Ok(vec![self.min]);
        }
        if !(self.max > self.min) {
            return Err(Error::InvalidArgument(format!(
                "axis max {} must exceed min {}",
                self.max, self.min
            )));
        }
        let step = (self.max - self.min) / (self.count - 1) as f64;
        Ok((0..self.count)
            .map(|i| {
                if i + 1 == self.count {
                    self.max
                } else {
                    self.min + step * i as f64
                }
            })
            .collect())
    }
}

/// Lipschitz constants and tolerances shared by every set operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LipschitzConfig {
    pub l_a: f64,
    pub l_x: f64,
    pub epsilon: f64,
    /// Rollout interruption margin in state units.
    pub eta: f64,
}

impl LipschitzConfig {
    pub fn new(l_a: f64, l_x: f64, epsilon: f64, eta: f64) -> Result<Self> {
        let cfg = LipschitzConfig { l_a, l_x, epsilon, eta };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.l_a) || !ok(self.l_x) || !ok(self.eta) {
            return Err(Error::InvalidArgument(
                "Lipschitz constants and eta must be finite and nonnegative".into(),
            ));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::InvalidArgument("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// A grid cell `(a, x̃0)` as a pair of multi-indices.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GridPoint {
    pub a_idx: Vec<usize>,
    pub x_idx: Vec<usize>,
}

/// Rectangular tensor-product grid over parameters and initial states.
///
/// Cells are numbered `a_flat * n_states + x_flat`, with the last axis of
/// each block varying fastest.
#[derive(Clone, Debug)]
pub struct GridDomain {
    param_axes: Vec<Vec<f64>>,
    state_axes: Vec<Vec<f64>>,
    mu: f64,
    state_bounds: Vec<(f64, f64)>,
    params: Vec<Vec<f64>>,
    states: Vec<Vec<f64>>,
    /// Per state: grid neighbours within L1 distance `< 2μ`; `None` marks a
    /// neighbour position outside the grid.
    neighbours: Vec<Vec<Option<usize>>>,
}

fn check_axes(axes: &[Vec<f64>], what: &str) -> Result<()> {
    if axes.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} grid needs at least one axis")));
    }
    for axis in axes {
        if axis.is_empty() {
            return Err(Error::InvalidArgument(format!("{what} axis is empty")));
        }
        if axis.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("{what} axis has non-finite values")));
        }
        if axis.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "{what} axis must be strictly increasing"
            )));
        }
    }
    Ok(())
}

fn tensor(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in axes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    out
}

fn unflatten(mut flat: usize, axes: &[Vec<f64>]) -> Vec<usize> {
    let mut idx = vec![0; axes.len()];
    for (k, axis) in axes.iter().enumerate().rev() {
        idx[k] = flat % axis.len();
        flat /= axis.len();
    }
    idx
}

fn flatten(idx: &[usize], axes: &[Vec<f64>]) -> Option<usize> {
    if idx.len() != axes.len() {
        return None;
    }
    let mut flat = 0;
    for (i, axis) in idx.iter().zip(axes) {
        if *i >= axis.len() {
            return None;
        }
        flat = flat * axis.len() + i;
    }
    Some(flat)
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl GridDomain {
    /// Builds a grid whose continuous state bounds are the state axis extents.
    pub fn new(param_axes: Vec<Vec<f64>>, state_axes: Vec<Vec<f64>>, mu: f64) -> Result<Self> {
        let bounds = state_axes.iter().map(|a| (a[0], a[a.len() - 1])).collect::<Vec<_>>();
        if state_axes.iter().any(|a| a.is_empty()) {
            return Err(Error::InvalidArgument("state axis is empty".into()));
        }
        Self::with_bounds(param_axes, state_axes, mu, bounds)
    }

    pub fn from_specs(params: &[AxisSpec], states: &[AxisSpec], mu: f64) -> Result<Self> {
        let p = params.iter().map(AxisSpec::values).collect::<Result<Vec<_>>>()?;
        let s = states.iter().map(AxisSpec::values).collect::<Result<Vec<_>>>()?;
        Self::new(p, s, mu)
    }

    pub fn with_bounds(
        param_axes: Vec<Vec<f64>>,
        state_axes: Vec<Vec<f64>>,
        mu: f64,
        state_bounds: Vec<(f64, f64)>,
    ) -> Result<Self> {
        check_axes(&param_axes, "parameter")?;
        check_axes(&state_axes, "state")?;
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::InvalidArgument(format!("mu {mu} must be positive")));
        }
        if state_bounds.len() != state_axes.len() {
            return Err(Error::InvalidArgument("one bound per state axis required".into()));
        }
        // Worst-case distance from a point in the box to its nearest grid value.
        let mut worst = 0.0;
        for (axis, (lo, hi)) in state_axes.iter().zip(&state_bounds) {
            if axis[0] < *lo || axis[axis.len() - 1] > *hi {
                return Err(Error::InvalidArgument("state grid point outside bounds".into()));
            }
            let mut gap: f64 = (axis[0] - lo).max(hi - axis[axis.len() - 1]);
            for w in axis.windows(2) {
                gap = gap.max((w[1] - w[0]) / 2.0);
                if !(w[1] - w[0] < 2.0 * mu) {
                    return Err(Error::InvalidArgument(format!(
                        "state spacing {} must be below 2·mu = {} so that adjacent cells are border neighbours",
                        w[1] - w[0],
                        2.0 * mu
                    )));
                }
            }
            worst += gap * gap;
        }
        if worst.sqrt() > mu * (1.0 + 1e-12) {
            return Err(Error::InvalidArgument(format!(
                "mu {mu} is below the quantization radius {} of the state grid",
                worst.sqrt()
            )));
        }
        let params = tensor(&param_axes);
        let states = tensor(&state_axes);
        let mut domain = GridDomain {
            param_axes,
            state_axes,
            mu,
            state_bounds,
            params,
            states,
            neighbours: Vec::new(),
        };
        domain.neighbours = (0..domain.n_states()).map(|s| domain.find_neighbours(s)).collect();
        Ok(domain)
    }

    fn find_neighbours(&self, state: usize) -> Vec<Option<usize>> {
        let idx = unflatten(state, &self.state_axes);
        let limit = 2.0 * self.mu;
        // Per axis: reachable offsets with their coordinate distance, including
        // virtual positions past either edge (spaced like the edge cell).
        let per_axis: Vec<Vec<(isize, f64, bool)>> = self
            .state_axes
            .iter()
            .zip(&idx)
            .map(|(axis, &i)| {
                let mut out = vec![(0isize, 0.0, true)];
                if axis.len() < 2 {
                    return out;
                }
                for dir in [-1isize, 1] {
                    let mut step = 1isize;
                    loop {
                        let j = i as isize + dir * step;
                        let (dist, inside) = if j >= 0 && (j as usize) < axis.len() {
                            ((axis[j as usize] - axis[i]).abs(), true)
                        } else {
                            let (edge, gap) = if j < 0 {
                                (0usize, axis[1] - axis[0])
                            } else {
                                (axis.len() - 1, axis[axis.len() - 1] - axis[axis.len() - 2])
                            };
                            let beyond = if j < 0 { (-j) as f64 } else { (j as usize - edge) as f64 };
                            ((axis[edge] - axis[i]).abs() + beyond * gap, false)
                        };
                        if dist >= limit {
                            break;
                        }
                        out.push((dir * step, dist, inside));
                        step += 1;
                    }
                }
                out
            })
            .collect();
        let mut result = Vec::new();
        let mut combo = vec![0usize; per_axis.len()];
        loop {
            let mut dist = 0.0;
            let mut inside = true;
            let mut zero = true;
            let mut target = Vec::with_capacity(per_axis.len());
            for (k, c) in combo.iter().enumerate() {
                let (off, d, ins) = per_axis[k][*c];
                dist += d;
                inside &= ins;
                zero &= off == 0;
                target.push(idx[k] as isize + off);
            }
            if !zero && dist < limit {
                if inside {
                    let t: Vec<usize> = target.iter().map(|v| *v as usize).collect();
                    result.push(flatten(&t, &self.state_axes));
                } else {
                    result.push(None);
                }
            }
            // odometer increment
            let mut k = 0;
            loop {
                if k == combo.len() {
                    return result;
                }
                combo[k] += 1;
                if combo[k] < per_axis[k].len() {
                    break;
                }
                combo[k] = 0;
                k += 1;
            }
        }
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn param_axes(&self) -> &[Vec<f64>] {
        &self.param_axes
    }

    pub fn state_axes(&self) -> &[Vec<f64>] {
        &self.state_axes
    }

    pub fn state_bounds(&self) -> &[(f64, f64)] {
        &self.state_bounds
    }

    pub fn param_dim(&self) -> usize {
        self.param_axes.len()
    }

    pub fn state_dim(&self) -> usize {
        self.state_axes.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn n_cells(&self) -> usize {
        self.params.len() * self.states.len()
    }

    pub fn cell(&self, a_flat: usize, x_flat: usize) -> usize {
        a_flat * self.n_states() + x_flat
    }

    /// `(a_flat, x_flat)` of a cell id.
    pub fn split(&self, cell: usize) -> (usize, usize) {
        (cell / self.n_states(), cell % self.n_states())
    }

    pub fn param(&self, a_flat: usize) -> &[f64] {
        &self.params[a_flat]
    }

    pub fn state(&self, x_flat: usize) -> &[f64] {
        &self.states[x_flat]
    }

    pub fn point(&self, cell: usize) -> GridPoint {
        let (a, x) = self.split(cell);
        GridPoint {
            a_idx: unflatten(a, &self.param_axes),
            x_idx: unflatten(x, &self.state_axes),
        }
    }

    pub fn flat_id(&self, point: &GridPoint) -> Result<usize> {
        let a = flatten(&point.a_idx, &self.param_axes);
        let x = flatten(&point.x_idx, &self.state_axes);
        match (a, x) {
            (Some(a), Some(x)) => Ok(self.cell(a, x)),
            _ => Err(Error::InvalidArgument(format!("grid point {point:?} out of range"))),
        }
    }

    pub fn param_index(&self, idx: &[usize]) -> Option<usize> {
        flatten(idx, &self.param_axes)
    }

    pub fn state_index(&self, idx: &[usize]) -> Option<usize> {
        flatten(idx, &self.state_axes)
    }

    pub fn state_multi_index(&self, x_flat: usize) -> Vec<usize> {
        unflatten(x_flat, &self.state_axes)
    }

    /// Flat id of the parameter grid value closest to `a` (per-axis nearest).
    pub fn nearest_param(&self, a: &[f64]) -> Result<usize> {
        if a.len() != self.param_dim() {
            return Err(Error::InvalidArgument("parameter dimension mismatch".into()));
        }
        let idx: Vec<usize> = a
            .iter()
            .zip(&self.param_axes)
            .map(|(v, axis)| nearest_on_axis(axis, *v))
            .collect();
        Ok(flatten(&idx, &self.param_axes).expect("nearest index in range"))
    }

    /// Cell inputs mapped into `[0, 1]` per dimension (parameters first).
    pub fn normalized_input(&self, cell: usize) -> Vec<f64> {
        let (a, x) = self.split(cell);
        let norm = |v: f64, axis: &Vec<f64>| {
            let (lo, hi) = (axis[0], axis[axis.len() - 1]);
            if hi > lo {
                (v - lo) / (hi - lo)
            } else {
                0.0
            }
        };
        self.params[a]
            .iter()
            .zip(&self.param_axes)
            .map(|(v, ax)| norm(*v, ax))
            .chain(self.states[x].iter().zip(&self.state_axes).map(|(v, ax)| norm(*v, ax)))
            .collect()
    }

    pub fn normalized_inputs(&self) -> Vec<Vec<f64>> {
        (0..self.n_cells()).map(|c| self.normalized_input(c)).collect()
    }

    /// `[x]_μ`: the state grid multi-index with the smallest L1 distance to `x`.
    ///
    /// States outside the bounds by at most μ (Euclidean) are clamped first.
    /// Ties go to the lower index on each axis.
    pub fn quantize(&self, x: &[f64]) -> Result<Vec<usize>> {
        if x.len() != self.state_dim() {
            return Err(Error::InvalidArgument(format!(
                "state has dimension {}, grid expects {}",
                x.len(),
                self.state_dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::OutOfDomain { state: x.to_vec() });
        }
        let mut excess = 0.0;
        let clamped: Vec<f64> = x
            .iter()
            .zip(&self.state_bounds)
            .map(|(v, (lo, hi))| {
                let c = v.clamp(*lo, *hi);
                excess += (v - c) * (v - c);
                c
            })
            .collect();
        if excess.sqrt() > self.mu {
            return Err(Error::OutOfDomain { state: x.to_vec() });
        }
        // L1 distance separates over axes, so per-axis nearest is optimal.
        Ok(clamped
            .iter()
            .zip(&self.state_axes)
            .map(|(v, axis)| nearest_on_axis(axis, *v))
            .collect())
    }

    pub fn quantize_flat(&self, x: &[f64]) -> Result<usize> {
        let idx = self.quantize(x)?;
        Ok(flatten(&idx, &self.state_axes).expect("quantized index in range"))
    }

    /// Grid neighbours of a state used by the border test (`None` = off-grid).
    pub fn border_neighbours(&self, x_flat: usize) -> &[Option<usize>] {
        &self.neighbours[x_flat]
    }

    pub fn param_distance(&self, a: usize, b: usize) -> f64 {
        euclid(&self.params[a], &self.params[b])
    }

    pub fn state_distance(&self, a: usize, b: usize) -> f64 {
        euclid(&self.states[a], &self.states[b])
    }

    /// Euclidean distance between a continuous state and a grid state.
    pub fn distance_to_state(&self, x: &[f64], x_flat: usize) -> f64 {
        euclid(x, &self.states[x_flat])
    }

    /// [`lipschitz_slack`] on cell ids.
    pub fn slack(&self, cfg: &LipschitzConfig, from: usize, to: usize) -> f64 {
        let (a1, x1) = self.split(from);
        let (a2, x2) = self.split(to);
        cfg.l_a * self.param_distance(a1, a2) + cfg.l_x * (self.state_distance(x1, x2) + self.mu)
    }
}

impl GridDomain {
    /// Visits every cell whose parameters lie within `ra` and whose state lies
    /// within `rx` of the given cell on each axis (a bounding box; callers
    /// apply the exact test). Stops early when `visit` returns false.
    pub(crate) fn for_each_in_box(&self, cell: usize, ra: f64, rx: f64, mut visit: impl FnMut(usize) -> bool) -> bool {
        let (a, x) = self.split(cell);
        let pa = box_flat(&self.param_axes, &self.params[a], ra);
        let px = box_flat(&self.state_axes, &self.states[x], rx);
        for &ai in &pa {
            let base = ai * self.n_states();
            for &xi in &px {
                if !visit(base + xi) {
                    return false;
                }
            }
        }
        true
    }
}

/// Flat indices of grid points within `radius` of `centre` on every axis.
fn box_flat(axes: &[Vec<f64>], centre: &[f64], radius: f64) -> Vec<usize> {
    let ranges: Vec<(usize, usize)> = axes
        .iter()
        .zip(centre)
        .map(|(axis, c)| {
            if !radius.is_finite() {
                return (0, axis.len());
            }
            let lo = axis.partition_point(|v| *v < c - radius);
            let hi = axis.partition_point(|v| *v <= c + radius);
            (lo, hi)
        })
        .collect();
    if ranges.iter().any(|(lo, hi)| lo >= hi) {
        return Vec::new();
    }
    let mut out = vec![0usize];
    for ((lo, hi), axis) in ranges.iter().zip(axes) {
        out = out
            .into_iter()
            .flat_map(|prefix| (*lo..*hi).map(move |j| prefix * axis.len() + j))
            .collect();
    }
    out
}

fn nearest_on_axis(axis: &[f64], v: f64) -> usize {
    // first index whose value is >= v
    let hi = axis.partition_point(|a| *a < v);
    if hi == 0 {
        0
    } else if hi == axis.len() {
        axis.len() - 1
    } else if (v - axis[hi - 1]) <= (axis[hi] - v) {
        hi - 1
    } else {
        hi
    }
}

/// Amount subtracted from a lower bound when certifying `to` from `from`:
/// `L_a‖a − a'‖ + L_x(‖x̃0 − x̃0'‖ + μ)`, Euclidean norms in raw units.
pub fn lipschitz_slack(cfg: &LipschitzConfig, from: &GridPoint, to: &GridPoint, domain: &GridDomain) -> Result<f64> {
    let a = domain.flat_id(from)?;
    let b = domain.flat_id(to)?;
    Ok(domain.slack(cfg, a, b))
}

/// `[x]_μ` as a state multi-index.
pub fn quantize(domain: &GridDomain, x: &[f64]) -> Result<Vec<usize>> {
    domain.quantize(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64], mu: f64) -> GridDomain {
        GridDomain::new(vec![vec![0.0, 1.0]], vec![values.to_vec()], mu).unwrap()
    }

    #[test]
    fn quantize_nearest_and_ties() {
        let d = line(&[-1.0, 0.0, 1.0], 0.6);
        assert_eq!(d.quantize(&[0.2]).unwrap(), vec![1]);
        assert_eq!(d.quantize(&[0.5]).unwrap(), vec![1]);
        assert_eq!(d.quantize(&[-0.5]).unwrap(), vec![0]);
    }

    #[test]
    fn quantize_two_dimensional() {
        let d = GridDomain::new(vec![vec![0.0]], vec![vec![0.0, 1.0], vec![0.0, 1.0]], 0.75).unwrap();
        assert_eq!(d.quantize(&[0.6, 0.4]).unwrap(), vec![1, 0]);
    }

    #[test]
    fn quantize_clamps_or_rejects() {
        let d = line(&[-1.0, 0.0, 1.0], 0.6);
        assert_eq!(d.quantize(&[1.5]).unwrap(), vec![2]);
        assert!(matches!(d.quantize(&[1.7]), Err(Error::OutOfDomain { .. })));
        assert!(d.quantize(&[f64::NAN]).is_err());
        assert!(d.quantize(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn mu_must_cover_grid() {
        assert!(GridDomain::new(vec![vec![0.0]], vec![vec![0.0, 1.0]], 0.4).is_err());
        // exactly half the spacing leaves no border neighbours
        assert!(GridDomain::new(vec![vec![0.0]], vec![vec![0.0, 1.0]], 0.5).is_err());
        assert!(GridDomain::new(vec![vec![0.0]], vec![vec![0.0, 1.0]], 0.51).is_ok());
        assert!(GridDomain::new(vec![vec![1.0, 0.0]], vec![vec![0.0]], 0.5).is_err());
    }

    #[test]
    fn slack_examples() {
        let d = GridDomain::new(vec![vec![0.0, 0.1, 0.5]], vec![vec![0.0, 0.2]], 0.15).unwrap();
        let cfg = LipschitzConfig::new(1.0, 3.0, 0.1, 0.0).unwrap();
        let same = d.slack(&cfg, 0, 0);
        assert!((same - 3.0 * 0.15).abs() < 1e-15);
        let p = |a: usize, x: usize| GridPoint {
            a_idx: vec![a],
            x_idx: vec![x],
        };
        let s = lipschitz_slack(&cfg, &p(0, 0), &p(1, 1), &d).unwrap();
        assert!((s - (0.1 + 3.0 * (0.2 + 0.15))).abs() < 1e-12);

        let cfg = LipschitzConfig::new(2.0, 0.0, 0.1, 0.0).unwrap();
        let s = lipschitz_slack(&cfg, &p(0, 0), &p(2, 0), &d).unwrap();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn spec_slack_example() {
        // ‖Δa‖ = 0.1, ‖Δx‖ = 0.2, μ = 0.05 with L_a = 1, L_x = 3.
        let d = GridDomain::new(vec![vec![0.0, 0.1]], vec![vec![0.0, 0.05, 0.1, 0.15, 0.2]], 0.05).unwrap();
        let cfg = LipschitzConfig::new(1.0, 3.0, 0.1, 0.0).unwrap();
        let s = d.slack(&cfg, d.cell(0, 0), d.cell(1, 4));
        assert!((s - 0.85).abs() < 1e-12);
    }

    #[test]
    fn neighbours_include_off_grid() {
        let d = line(&[0.0, 1.0, 2.0, 3.0], 0.6);
        assert_eq!(d.border_neighbours(0), &[None, Some(1)]);
        assert_eq!(d.border_neighbours(1), &[Some(0), Some(2)]);
        let d2 = GridDomain::new(vec![vec![0.0]], vec![vec![0.0, 1.0, 2.0]; 2], 0.75).unwrap();
        // 2μ = 1.5: only axis-aligned steps qualify (diagonal L1 offset is 2).
        let centre = d2.state_index(&[1, 1]).unwrap();
        assert_eq!(d2.border_neighbours(centre).len(), 4);
        let d3 = GridDomain::new(vec![vec![0.0]], vec![vec![0.0, 1.0, 2.0]; 2], 1.01).unwrap();
        assert_eq!(d3.border_neighbours(centre).len(), 12);
    }

    #[test]
    fn axis_spec_values() {
        assert_eq!(AxisSpec::new(-1.0, 1.0, 3).values().unwrap(), vec![-1.0, 0.0, 1.0]);
        assert_eq!(AxisSpec::new(2.0, 2.0, 1).values().unwrap(), vec![2.0]);
        assert!(AxisSpec::new(1.0, 0.0, 3).values().is_err());
        assert!(AxisSpec::new(0.0, 1.0, 0).values().is_err());
    }
}
