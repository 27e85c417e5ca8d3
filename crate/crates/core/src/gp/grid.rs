use super::model::GpModel;

/// Posterior of one GP over a fixed set of query points, kept in sync with
/// the model incrementally.
///
/// For every query point the projection `v = L⁻¹ k(X, x*)` is stored one row
/// per observation, so appending an observation costs O(n) per point instead
/// of a fresh O(n²) triangular solve.
#[derive(Clone, Debug)]
pub struct GridPosterior {
    inputs: Vec<Vec<f64>>,
    /// `rows[j][p]` is the `j`-th entry of the projection for point `p`.
    rows: Vec<Vec<f64>>,
    mean: Vec<f64>,
    var: Vec<f64>,
    prior: Vec<f64>,
    /// Model row id behind each cached row.
    ids: Vec<u64>,
}

impl GridPosterior {
    pub fn new(inputs: Vec<Vec<f64>>, model: &GpModel) -> Self {
        let prior: Vec<f64> = inputs.iter().map(|x| model.kernel().eval_unchecked(x, x)).collect();
        let mut grid = GridPosterior {
            mean: vec![0.0; inputs.len()],
            var: prior.clone(),
            prior,
            inputs,
            rows: Vec::new(),
            ids: Vec::new(),
        };
        grid.sync(model);
        grid
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Posterior variances, clamped at zero.
    pub fn var(&self) -> &[f64] {
        &self.var
    }

    /// Drops cached rows from `keep` on and rebuilds mean and variance.
    fn truncate(&mut self, keep: usize, model: &GpModel) {
        self.rows.truncate(keep);
        self.ids.truncate(keep);
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.var.copy_from_slice(&self.prior);
        for (row, w) in self.rows.iter().zip(model.whitened()) {
            for ((r, m), v) in row.iter().zip(&mut self.mean).zip(&mut self.var) {
                *m += r * w;
                *v -= r * r;
            }
        }
        self.var.iter_mut().for_each(|v| *v = v.max(0.0));
    }

    /// Brings the cache up to date with `model`.
    pub fn sync(&mut self, model: &GpModel) {
        let valid = self.ids.iter().zip(model.row_ids()).take_while(|(a, b)| a == b).count();
        if valid < self.rows.len() {
            self.truncate(valid, model);
        }
        let kernel = model.kernel();
        for n in self.rows.len()..model.len() {
            let z = &model.inputs()[n];
            let chol = model.chol_row(n);
            let mut row: Vec<f64> = self.inputs.iter().map(|x| kernel.eval_unchecked(x, z)).collect();
            for (j, prev) in self.rows.iter().enumerate() {
                let c = chol[j];
                if c != 0.0 {
                    row.iter_mut().zip(prev).for_each(|(r, p)| *r -= c * p);
                }
            }
            let diag = chol[n];
            let w = model.whitened()[n];
            for ((r, m), v) in row.iter_mut().zip(&mut self.mean).zip(&mut self.var) {
                *r /= diag;
                *m += *r * w;
                *v = (*v - *r * *r).max(0.0);
            }
            self.rows.push(row);
            self.ids.push(model.row_ids()[n]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gp::Kernel;

    #[test]
    fn matches_direct_posterior() {
        let k = Kernel::matern32(vec![0.3, 0.5], 1.5).unwrap();
        let mut gp = GpModel::new(k, 0.05).unwrap();
        let grid: Vec<Vec<f64>> = (0..5)
            .flat_map(|i| (0..4).map(move |j| vec![i as f64 / 4.0, j as f64 / 3.0]))
            .collect();
        let mut cache = GridPosterior::new(grid.clone(), &gp);
        for (t, x) in grid.iter().enumerate().step_by(3) {
            gp.add(x.clone(), (t as f64).sin()).unwrap();
            cache.sync(&gp);
        }
        gp.add(grid[2].clone(), 0.7).unwrap();
        cache.sync(&gp);
        for (p, x) in grid.iter().enumerate() {
            let (m, v) = gp.posterior(x).unwrap();
            assert!((cache.mean()[p] - m).abs() < 1e-10);
            assert!((cache.var()[p] - v).abs() < 1e-10);
        }
        gp.retain(|i| i % 2 == 0).unwrap();
        cache.sync(&gp);
        for (p, x) in grid.iter().enumerate() {
            let (m, v) = gp.posterior(x).unwrap();
            assert!((cache.mean()[p] - m).abs() < 1e-10);
            assert!((cache.var()[p] - v).abs() < 1e-10);
        }
    }
}
