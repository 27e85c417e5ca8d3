use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const SQRT_3: f64 = 1.732_050_807_568_877_2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Matern32,
    SquaredExponential,
}

/// Stationary ARD kernel. Lengthscales are in normalized input units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Kernel {
    pub family: KernelFamily,
    pub lengthscales: Vec<f64>,
    pub variance: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        let kernel = Kernel {
            family,
            lengthscales,
            variance,
        };
        kernel.validate()?;
        Ok(kernel)
    }

    pub fn matern32(lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern32, lengthscales, variance)
    }

    pub fn squared_exponential(lengthscales: Vec<f64>, variance: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscales, variance)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lengthscales.is_empty() {
            return Err(Error::InvalidArgument("kernel needs at least one lengthscale".into()));
        }
        if let Some(l) = self.lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::InvalidArgument(format!("lengthscale {l} must be positive")));
        }
        if !(self.variance.is_finite() && self.variance > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "kernel variance {} must be positive",
                self.variance
            )));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        if a.len() != self.dim() || b.len() != self.dim() {
            return Err(Error::InvalidArgument(format!(
                "kernel expects {}-dimensional inputs, got {} and {}",
                self.dim(),
                a.len(),
                b.len()
            )));
        }
        Ok(self.eval_unchecked(a, b))
    }

    /// Covariance without the dimension check. Callers guarantee matching lengths.
    pub(crate) fn eval_unchecked(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .zip(&self.lengthscales)
            .map(|((x, y), l)| {
                let d = (x - y) / l;
                d * d
            })
            .sum();
        match self.family {
            KernelFamily::Matern32 => {
                let s = SQRT_3 * r2.sqrt();
                self.variance * (1.0 + s) * (-s).exp()
            }
            KernelFamily::SquaredExponential => self.variance * (-0.5 * r2).exp(),
        }
    }
}

/// Covariance between `a` and `b`.
pub fn kernel_eval(kernel: &Kernel, a: &[f64], b: &[f64]) -> Result<f64> {
    kernel.eval(a, b)
}
