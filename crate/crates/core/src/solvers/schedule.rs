use serde::{Deserialize, Serialize};

use crate::error::{AdmmError, Result};
use crate::types::ProblemSpec;

/// Stepsize rule for the proximal term of stochastic ADMM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSchedule {
    /// `eta_k = D_X / (M sqrt(2k))`
    Convex,
    /// `eta_k = 1 / (k mu)`
    StronglyConvex,
    /// `eta_k = 1 / (L + sigma sqrt(2k) / D_X)`
    Smooth,
    /// Fixed user stepsize.
    Constant { eta: f64 },
}

impl StepSchedule {
    /// Stepsize `eta_k` for `k >= 1`. The update from iterate `k` to `k+1` uses `eta_{k+1}`.
    pub fn eta(&self, k: usize, spec: &ProblemSpec) -> f64 {
        debug_assert!(k >= 1, "stepsizes are indexed from 1");
        let k = k as f64;
        let c = &spec.constants;
        match self {
            StepSchedule::Convex => spec.d_x() / (c.m_bound * (2.0 * k).sqrt()),
            StepSchedule::StronglyConvex => 1.0 / (k * c.mu),
            StepSchedule::Smooth => {
                let l = c.lipschitz.unwrap_or(f64::NAN);
                1.0 / (l + c.sigma * (2.0 * k).sqrt() / spec.d_x())
            }
            StepSchedule::Constant { eta } => *eta,
        }
    }

    pub fn validate(&self, spec: &ProblemSpec) -> Result<()> {
        let c = &spec.constants;
        match self {
            StepSchedule::Convex => Ok(()),
            StepSchedule::StronglyConvex => {
                if c.mu > 0.0 {
                    Ok(())
                } else {
                    Err(AdmmError::InvalidConfig(format!(
                        "strongly-convex schedule eta_k = 1/(k mu) needs a strongly convex theta1 (mu > 0), got mu = {}",
                        c.mu
                    )))
                }
            }
            StepSchedule::Smooth => {
                if c.lipschitz.is_some() {
                    Ok(())
                } else {
                    Err(AdmmError::InvalidConfig(
                        "smooth schedule needs the Lipschitz constant L of grad theta1".into(),
                    ))
                }
            }
            StepSchedule::Constant { eta } => {
                if eta.is_finite() && *eta > 0.0 {
                    Ok(())
                } else {
                    Err(AdmmError::InvalidConfig(format!(
                        "constant stepsize must be positive, got {eta}"
                    )))
                }
            }
        }
    }
}
