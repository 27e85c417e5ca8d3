use log::warn;
use serde::{Deserialize, Serialize};

use super::Mask;
use crate::domain::{GridDomain, LipschitzConfig};
use crate::gp::SurrogateModel;
use crate::{Error, Result};

/// Running intersection of confidence intervals, one per grid cell and index.
///
/// Index 0 is the reward; indices `1..` are constraints.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceTable {
    num_indices: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ConfidenceTable {
    /// `C_0`: `[L_x μ, ∞)` on seed cells for constraints, unbounded elsewhere.
    pub fn initial(domain: &GridDomain, num_indices: usize, init_safe: &Mask, cfg: &LipschitzConfig) -> Result<Self> {
        if num_indices < 2 {
            return Err(Error::InvalidArgument(
                "confidence table needs a reward and at least one constraint".into(),
            ));
        }
        let n = domain.n_cells();
        if init_safe.len() != n {
            return Err(Error::InvalidArgument("seed mask does not match grid".into()));
        }
        let mut lower = vec![f64::NEG_INFINITY; n * num_indices];
        let upper = vec![f64::INFINITY; n * num_indices];
        let floor = cfg.l_x * domain.mu();
        for cell in init_safe.iter() {
            for i in 1..num_indices {
                lower[cell * num_indices + i] = floor;
            }
        }
        Ok(ConfidenceTable {
            num_indices,
            lower,
            upper,
        })
    }

    /// Builds a table from explicit bounds laid out as `[cell][index]`.
    pub fn from_bounds(num_indices: usize, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if num_indices == 0 || lower.len() != upper.len() || lower.len() % num_indices != 0 {
            return Err(Error::InvalidArgument("inconsistent bound arrays".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| l > u || l.is_nan() || u.is_nan()) {
            return Err(Error::InvalidArgument("lower bound exceeds upper bound".into()));
        }
        Ok(ConfidenceTable {
            num_indices,
            lower,
            upper,
        })
    }

    pub fn num_indices(&self) -> usize {
        self.num_indices
    }

    pub fn num_cells(&self) -> usize {
        self.lower.len() / self.num_indices
    }

    #[inline]
    pub fn lower(&self, cell: usize, i: usize) -> f64 {
        self.lower[cell * self.num_indices + i]
    }

    #[inline]
    pub fn upper(&self, cell: usize, i: usize) -> f64 {
        self.upper[cell * self.num_indices + i]
    }

    #[inline]
    pub fn width(&self, cell: usize, i: usize) -> f64 {
        self.upper(cell, i) - self.lower(cell, i)
    }

    /// Smallest constraint lower bound at a cell.
    pub fn min_constraint_lower(&self, cell: usize) -> f64 {
        (1..self.num_indices)
            .map(|i| self.lower(cell, i))
            .fold(f64::INFINITY, f64::min)
    }

    /// Intersects index `i` with `[m ± β^{1/2} s]` given posterior means and
    /// variances per cell. Returns the number of cells where the intersection
    /// was empty and had to be clamped.
    pub fn intersect(&mut self, i: usize, mean: &[f64], var: &[f64], beta: f64) -> usize {
        assert!(i < self.num_indices, "index out of range");
        assert_eq!(mean.len(), self.num_cells());
        assert_eq!(var.len(), self.num_cells());
        let scale = beta.sqrt();
        let mut clamped = 0;
        for cell in 0..mean.len() {
            let k = cell * self.num_indices + i;
            let half = scale * var[cell].max(0.0).sqrt();
            let (prev_l, prev_u) = (self.lower[k], self.upper[k]);
            let l = prev_l.max(mean[cell] - half);
            let u = prev_u.min(mean[cell] + half);
            if u < l {
                clamped += 1;
                self.lower[k] = prev_l;
                self.upper[k] = prev_l;
            } else {
                self.lower[k] = l;
                self.upper[k] = u;
            }
        }
        if clamped > 0 {
            warn!(
                "confidence intervals for index {i} became empty at {clamped} cell(s); \
                 the model may be misspecified"
            );
        }
        clamped
    }
}

/// One `C_n = C_{n−1} ∩ Q_n` update evaluated with direct posterior queries.
///
/// The optimizer uses cached grid posteriors instead; this form serves
/// one-off and test use.
pub fn update_confidence(
    table: &ConfidenceTable,
    surrogate: &SurrogateModel,
    beta_n: f64,
    domain: &GridDomain,
) -> Result<ConfidenceTable> {
    if !(beta_n.is_finite() && beta_n > 0.0) {
        return Err(Error::InvalidArgument(format!("beta {beta_n} must be positive")));
    }
    if surrogate.num_indices() != table.num_indices() || table.num_cells() != domain.n_cells() {
        return Err(Error::InvalidArgument("table, model and grid disagree".into()));
    }
    let inputs = domain.normalized_inputs();
    let mut next = table.clone();
    for i in 0..table.num_indices() {
        let mut mean = Vec::with_capacity(inputs.len());
        let mut var = Vec::with_capacity(inputs.len());
        for z in &inputs {
            let (m, v) = surrogate.posterior(z, i)?;
            mean.push(m);
            var.push(v);
        }
        next.intersect(i, &mean, &var, beta_n);
    }
    Ok(next)
}
