use super::kernel::Kernel;
use crate::{Error, Result};

/// Diagonal jitter schedule, relative to the kernel variance.
const JITTER_START: f64 = 1e-8;
const JITTER_MAX: f64 = 1e-4;
/// A pivot at or below this (relative to the variance) counts as a failed factorization.
const PIVOT_FLOOR: f64 = 1e-12;

/// Exact GP regression with an incrementally grown Cholesky factor of
/// `K + σ²I`.
///
/// Adding an observation appends one row to the factor (O(n²)); removing
/// observations refits every row after the first one dropped.
#[derive(Clone, Debug)]
pub struct GpModel {
    kernel: Kernel,
    noise_std: f64,
    inputs: Vec<Vec<f64>>,
    targets: Vec<f64>,
    /// Lower-triangular factor, row `i` holds `i + 1` entries.
    chol: Vec<Vec<f64>>,
    /// `L⁻¹ y`.
    whitened: Vec<f64>,
    jitter: Vec<f64>,
    /// Identity of each factor row; a row keeps its id until it is recomputed.
    row_ids: Vec<u64>,
    next_id: u64,
}

impl GpModel {
    pub fn new(kernel: Kernel, noise_std: f64) -> Result<Self> {
        kernel.validate()?;
        if !(noise_std.is_finite() && noise_std >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "noise_std {noise_std} must be nonnegative"
            )));
        }
        Ok(GpModel {
            kernel,
            noise_std,
            inputs: Vec::new(),
            targets: Vec::new(),
            chol: Vec::new(),
            whitened: Vec::new(),
            jitter: Vec::new(),
            row_ids: Vec::new(),
            next_id: 0,
        })
    }

    /// Fits a model to a batch of observations.
    pub fn fit(kernel: Kernel, noise_std: f64, data: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut model = Self::new(kernel, noise_std)?;
        for (x, y) in data {
            model.add(x.clone(), *y)?;
        }
        Ok(model)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn noise_std(&self) -> f64 {
        self.noise_std
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    /// Jitter that had to be added to each diagonal entry.
    pub fn jitter(&self) -> &[f64] {
        &self.jitter
    }

    /// Lets cached projections tell which leading rows are still valid.
    pub(crate) fn row_ids(&self) -> &[u64] {
        &self.row_ids
    }

    pub(crate) fn chol_row(&self, i: usize) -> &[f64] {
        &self.chol[i]
    }

    pub(crate) fn whitened(&self) -> &[f64] {
        &self.whitened
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.kernel.dim() {
            return Err(Error::InvalidArgument(format!(
                "input has dimension {}, model expects {}",
                x.len(),
                self.kernel.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Solves `L v = k(X, query)`.
    fn project(&self, query: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut v = Vec::with_capacity(n);
        for i in 0..n {
            let row = &self.chol[i];
            let mut s = self.kernel.eval_unchecked(&self.inputs[i], query);
            for j in 0..i {
                s -= row[j] * v[j];
            }
            v.push(s / row[i]);
        }
        v
    }

    pub fn add(&mut self, input: Vec<f64>, target: f64) -> Result<()> {
        self.check_dim(&input)?;
        if !target.is_finite() {
            return Err(Error::InvalidArgument(format!("observation {target} is not finite")));
        }
        let mut row = self.project(&input);
        let quad: f64 = row.iter().map(|v| v * v).sum();
        let prior = self.kernel.eval_unchecked(&input, &input) + self.noise_std * self.noise_std;
        let pivot = prior - quad;
        let variance = self.kernel.variance;
        let mut jitter = 0.0;
        if !(pivot > PIVOT_FLOOR * variance) {
            jitter = JITTER_START * variance;
            while !(pivot + jitter > PIVOT_FLOOR * variance) && jitter < JITTER_MAX * variance {
                jitter *= 2.0;
            }
            jitter = jitter.min(JITTER_MAX * variance);
            log::debug!("gram pivot {pivot:e} not positive, adding jitter {jitter:e}");
        }
        let diag = (pivot + jitter).max(PIVOT_FLOOR * variance).sqrt();
        let prev: f64 = row.iter().zip(&self.whitened).map(|(l, w)| l * w).sum();
        self.whitened.push((target - prev) / diag);
        row.push(diag);
        self.chol.push(row);
        self.inputs.push(input);
        self.targets.push(target);
        self.jitter.push(jitter);
        self.row_ids.push(self.next_id);
        self.next_id += 1;
        Ok(())
    }

    /// Keeps only the observations whose position satisfies `keep`. Rows
    /// before the first dropped one are untouched; the rest are refitted.
    pub fn retain(&mut self, mut keep: impl FnMut(usize) -> bool) -> Result<()> {
        let flags: Vec<bool> = (0..self.len()).map(&mut keep).collect();
        let Some(first) = flags.iter().position(|k| !k) else {
            return Ok(());
        };
        let tail: Vec<(Vec<f64>, f64)> = self
            .inputs
            .drain(first..)
            .zip(self.targets.drain(first..))
            .zip(&flags[first..])
            .filter_map(|(d, k)| k.then_some(d))
            .collect();
        self.chol.truncate(first);
        self.whitened.truncate(first);
        self.jitter.truncate(first);
        self.row_ids.truncate(first);
        for (x, y) in tail {
            self.add(x, y)?;
        }
        Ok(())
    }

    /// Posterior mean and variance at `query`.
    pub fn posterior(&self, query: &[f64]) -> Result<(f64, f64)> {
        self.check_dim(query)?;
        let v = self.project(query);
        let mean = v.iter().zip(&self.whitened).map(|(a, b)| a * b).sum();
        let var = self.kernel.eval_unchecked(query, query) - v.iter().map(|x| x * x).sum::<f64>();
        Ok((mean, var.max(0.0)))
    }
}

/// Posterior mean and variance of `model` at `query`.
pub fn posterior(model: &GpModel, query: &[f64]) -> Result<(f64, f64)> {
    model.posterior(query)
}
