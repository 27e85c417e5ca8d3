use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Confidence scaling `β_n` for the intervals `μ ± β_n^{1/2} σ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum BetaSchedule {
    Constant {
        value: f64,
    },
    /// `β_n^{1/2} = B + 4σ sqrt(γ_{(n-1)|I|} + 1 + ln(1/δ))`.
    ///
    /// `gamma[k]` is the information capacity after `k` observations; indices
    /// past the end reuse the last entry, an empty table means `γ ≡ 0`.
    Theoretical {
        b: f64,
        sigma: f64,
        delta: f64,
        num_indices: usize,
        #[serde(default)]
        gamma: Vec<f64>,
    },
}

impl BetaSchedule {
    pub fn constant(value: f64) -> Self {
        BetaSchedule::Constant { value }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BetaSchedule::Constant { value } => {
                if !(value.is_finite() && *value > 0.0) {
                    return Err(Error::InvalidArgument(format!("beta {value} must be positive")));
                }
            }
            BetaSchedule::Theoretical {
                b,
                sigma,
                delta,
                num_indices,
                gamma,
            } => {
                if !(b.is_finite() && *b > 0.0) || !(sigma.is_finite() && *sigma >= 0.0) {
                    return Err(Error::InvalidArgument(
                        "theoretical beta needs B > 0 and sigma >= 0".into(),
                    ));
                }
                if !(*delta > 0.0 && *delta < 1.0) {
                    return Err(Error::InvalidArgument(format!("delta {delta} not in (0, 1)")));
                }
                if *num_indices == 0 {
                    return Err(Error::InvalidArgument("num_indices must be positive".into()));
                }
                if gamma.iter().any(|g| !(g.is_finite() && *g >= 0.0)) {
                    return Err(Error::InvalidArgument("gamma must be finite and >= 0".into()));
                }
            }
        }
        Ok(())
    }

    /// `β_n` for iteration `n >= 1` (`n = 0` is treated as 1).
    pub fn at(&self, n: usize) -> f64 {
        match self {
            BetaSchedule::Constant { value } => *value,
            BetaSchedule::Theoretical {
                b,
                sigma,
                delta,
                num_indices,
                gamma,
            } => {
                let k = n.max(1).saturating_sub(1).saturating_mul(*num_indices);
                let g = gamma.get(k).or_else(|| gamma.last()).copied().unwrap_or(0.0);
                let root = b + 4.0 * sigma * (g + 1.0 + (1.0 / delta).ln()).sqrt();
                root * root
            }
        }
    }
}

pub fn beta(schedule: &BetaSchedule, n: usize) -> f64 {
    schedule.at(n)
}
