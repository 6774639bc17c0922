//! Manufactured-solution cases for order-of-accuracy studies.
//!
//! Each case pins an exact solution pair and the matching additive sources.
//! Estimate audits are disabled whenever sources are active.

use crate::error::{KymoError, Result};
use crate::grid::{Field, GridSpec};
use crate::motility::MotilitySpec;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "case", rename_all = "snake_case")]
pub enum MmsCase {
    /// 1D, constant motility, tau = 0:
    ///   u*(x,t) = 2 + cos(pi x / L) e^{-t}
    ///   v*(x,t) = 2 + (1/2) cos(pi x / L) e^{-t}
    #[serde(rename = "cosine_decay_1d")]
    CosineDecay1d,
}

/// Closed-form exact solution and sources for one case, specialized to a run's
/// motility constant, cut-off strength and domain length.
#[derive(Debug, Clone, Copy)]
pub struct MmsFunctions {
    g0: f64,
    epsilon: f64,
    length: f64,
}

impl MmsCase {
    pub fn validate(&self, grid: &GridSpec, motility: &MotilitySpec, tau: f64) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            MmsCase::CosineDecay1d => {
                if grid.dim != 1 {
                    errs.push("mms case cosine_decay_1d requires a 1D grid".into());
                }
                if !matches!(motility, MotilitySpec::Constant { .. }) {
                    errs.push("mms case cosine_decay_1d requires the constant motility family".into());
                }
                if tau != 0.0 {
                    errs.push("mms case cosine_decay_1d requires tau = 0".into());
                }
            }
        }
        errs
    }

    pub fn functions(&self, motility: &MotilitySpec, epsilon: f64, length: f64) -> Result<MmsFunctions> {
        match motility {
            MotilitySpec::Constant { g0 } => Ok(MmsFunctions { g0: *g0, epsilon, length }),
            other => Err(KymoError::MmsInconsistent(format!(
                "case needs constant motility, got {other:?}"
            ))),
        }
    }
}

impl MmsFunctions {
    fn lambda(&self) -> f64 {
        (PI / self.length) * (PI / self.length)
    }

    pub fn exact_u(&self, x: f64, t: f64) -> f64 {
        2.0 + (PI * x / self.length).cos() * (-t).exp()
    }

    pub fn exact_v(&self, x: f64, t: f64) -> f64 {
        2.0 + 0.5 * (PI * x / self.length).cos() * (-t).exp()
    }

    /// S_u = d/dt u* - (g0 + eps) Lap u*
    pub fn source_u(&self, x: f64, t: f64) -> f64 {
        (-1.0 + (self.g0 + self.epsilon) * self.lambda())
            * (PI * x / self.length).cos()
            * (-t).exp()
    }

    /// S_v = v* - Lap v* - f_eps(u*)
    pub fn source_v(&self, x: f64, t: f64) -> f64 {
        let u = self.exact_u(x, t);
        let cos = (PI * x / self.length).cos() * (-t).exp();
        2.0 + (1.0 + self.lambda()) * 0.5 * cos - u / (1.0 + self.epsilon * u)
    }

    pub fn exact_u_field(&self, grid: GridSpec, t: f64) -> Field {
        Field::from_fn(grid, |x| self.exact_u(x[0], t))
    }

    pub fn exact_v_field(&self, grid: GridSpec, t: f64) -> Field {
        Field::from_fn(grid, |x| self.exact_v(x[0], t))
    }

    pub fn source_u_field(&self, grid: GridSpec, t: f64) -> Field {
        Field::from_fn(grid, |x| self.source_u(x[0], t))
    }

    pub fn source_v_field(&self, grid: GridSpec, t: f64) -> Field {
        Field::from_fn(grid, |x| self.source_v(x[0], t))
    }

    /// Spot check: the closed-form sources must agree with finite differences
    /// of the exact solution inserted into the PDE.
    pub fn verify(&self) -> Result<()> {
        let d = 1e-5;
        for &(x, t) in &[(0.21, 0.1), (0.53, 0.4), (0.87, 0.9)] {
            let x = x * self.length;
            let ut = (self.exact_u(x, t + d) - self.exact_u(x, t - d)) / (2.0 * d);
            let uxx = (self.exact_u(x + d, t) - 2.0 * self.exact_u(x, t) + self.exact_u(x - d, t))
                / (d * d);
            let res_u = ut - (self.g0 + self.epsilon) * uxx - self.source_u(x, t);
            let v = self.exact_v(x, t);
            let vxx = (self.exact_v(x + d, t) - 2.0 * v + self.exact_v(x - d, t)) / (d * d);
            let u = self.exact_u(x, t);
            let res_v = v - vxx - u / (1.0 + self.epsilon * u) - self.source_v(x, t);
            if res_u.abs() > 1e-4 || res_v.abs() > 1e-4 {
                return Err(KymoError::MmsInconsistent(format!(
                    "source spot check failed at (x={x}, t={t}): residuals ({res_u:.3e}, {res_v:.3e})"
                )));
            }
        }
        Ok(())
    }
}
