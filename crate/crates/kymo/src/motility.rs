//! The motility function, its derivative, and certified bounds over the
//! range of signal values a run can reach.
//!
//! Boundedness from above is required; monotonicity is not. Audits therefore
//! never assume a sign for the derivative. The power-law family is singular
//! at zero and is only admissible behind a positivity floor on the signal.

use crate::error::{KymoError, Result};
use crate::grid::Field;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MotilitySpec {
    /// gamma(v) = e^{-v}
    ExpDecay,
    /// gamma(v) = 1/(c + v^k), c > 0, k > 0
    Algebraic { c: f64, k: f64 },
    /// gamma(v) = c0 v^{-k}, singular at v = 0; admissible only with v >= v_min > 0
    PowerLaw { c0: f64, k: f64, v_min: f64 },
    /// gamma == g0 > 0
    Constant { g0: f64 },
    /// piecewise-linear interpolant of strictly positive (v, gamma) knots on [0, v_max]
    Tabulated { knots: Vec<(f64, f64)> },
}

/// Certified bounds of gamma and |gamma'| over [0, v_star].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct MotilityBounds {
    pub v_star: f64,
    pub gamma_inf: f64,
    pub gamma_sup: f64,
    pub gamma_prime_sup: f64,
    /// Set for the tabulated family: spacing of the scan that produced the bounds.
    pub scan_resolution: Option<f64>,
}

impl MotilitySpec {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        match self {
            MotilitySpec::ExpDecay => {}
            MotilitySpec::Algebraic { c, k } => {
                if !(*c > 0.0) {
                    errs.push(format!("algebraic motility requires c > 0, got {c}"));
                }
                if !(*k > 0.0) {
                    errs.push(format!("algebraic motility requires k > 0, got {k}"));
                }
            }
            MotilitySpec::PowerLaw { c0, k, v_min } => {
                if !(*c0 > 0.0) {
                    errs.push(format!("power-law motility requires c0 > 0, got {c0}"));
                }
                if !(*k > 0.0) {
                    errs.push(format!("power-law motility requires k > 0, got {k}"));
                }
                if !(*v_min > 0.0) {
                    errs.push(format!(
                        "power-law motility is singular at v=0 and needs v_min > 0, got {v_min}"
                    ));
                }
            }
            MotilitySpec::Constant { g0 } => {
                if !(*g0 > 0.0) {
                    errs.push(format!("constant motility requires g0 > 0, got {g0}"));
                }
            }
            MotilitySpec::Tabulated { knots } => {
                if knots.len() < 2 {
                    errs.push("tabulated motility needs at least 2 knots".into());
                }
                if knots.first().map(|k| k.0) != Some(0.0) {
                    errs.push("tabulated motility must start at v = 0".into());
                }
                for w in knots.windows(2) {
                    if w[1].0 <= w[0].0 {
                        errs.push(format!("tabulated knots not strictly increasing at v = {}", w[1].0));
                    }
                }
                if knots.iter().any(|k| !(k.1 > 0.0)) {
                    errs.push("tabulated gamma values must be strictly positive".into());
                }
            }
        }
        errs
    }

    /// Certified sup of gamma over its admissible domain.
    pub fn k_gamma(&self) -> f64 {
        match self {
            MotilitySpec::ExpDecay => 1.0,
            MotilitySpec::Algebraic { c, .. } => 1.0 / c,
            MotilitySpec::PowerLaw { c0, k, v_min } => c0 * v_min.powf(-k),
            MotilitySpec::Constant { g0 } => *g0,
            MotilitySpec::Tabulated { knots } => {
                knots.iter().map(|k| k.1).fold(0.0f64, f64::max)
            }
        }
    }

    /// Lowest admissible signal value (positive only for the power-law family).
    pub fn v_floor(&self) -> f64 {
        match self {
            MotilitySpec::PowerLaw { v_min, .. } => *v_min,
            _ => 0.0,
        }
    }

    fn check_point(&self, v: f64) -> Result<()> {
        if v < 0.0 {
            return Err(KymoError::DomainViolation(format!("negative signal value {v}")));
        }
        if let MotilitySpec::PowerLaw { v_min, .. } = self {
            if v < *v_min {
                return Err(KymoError::DomainViolation(format!(
                    "power-law motility evaluated at v = {v} below its floor v_min = {v_min}"
                )));
            }
        }
        Ok(())
    }

    pub fn gamma(&self, v: f64) -> Result<f64> {
        self.check_point(v)?;
        Ok(match self {
            MotilitySpec::ExpDecay => (-v).exp(),
            MotilitySpec::Algebraic { c, k } => 1.0 / (c + v.powf(*k)),
            MotilitySpec::PowerLaw { c0, k, .. } => c0 * v.powf(-k),
            MotilitySpec::Constant { g0 } => *g0,
            MotilitySpec::Tabulated { knots } => tabulated_eval(knots, v).0,
        })
    }

    pub fn gamma_prime(&self, v: f64) -> Result<f64> {
        self.check_point(v)?;
        Ok(match self {
            MotilitySpec::ExpDecay => -(-v).exp(),
            MotilitySpec::Algebraic { c, k } => {
                let d = c + v.powf(*k);
                -k * v.powf(k - 1.0) / (d * d)
            }
            MotilitySpec::PowerLaw { c0, k, .. } => -c0 * k * v.powf(-k - 1.0),
            MotilitySpec::Constant { .. } => 0.0,
            MotilitySpec::Tabulated { knots } => tabulated_eval(knots, v).1,
        })
    }

    /// Pointwise gamma(v) over a field.
    pub fn eval_gamma(&self, v: &Field) -> Result<Field> {
        let mut out = Vec::with_capacity(v.grid.cell_count());
        for &vi in v.values() {
            out.push(self.gamma(vi)?);
        }
        Field::from_values(v.grid, out)
    }

    /// Pointwise gamma'(v) over a field.
    pub fn eval_gamma_prime(&self, v: &Field) -> Result<Field> {
        let mut out = Vec::with_capacity(v.grid.cell_count());
        for &vi in v.values() {
            out.push(self.gamma_prime(vi)?);
        }
        Field::from_values(v.grid, out)
    }

    /// Bounds of gamma and |gamma'| over [0, v_star] (resp. [v_min, v_star]).
    ///
    /// Closed forms for the analytic families; a fine scan for tabulated data
    /// and for the algebraic derivative, whose extremum has no tidy formula.
    pub fn certify_bounds(&self, v_star: f64) -> Result<MotilityBounds> {
        if !(v_star >= 0.0) {
            return Err(KymoError::DomainViolation(format!("v_star must be >= 0, got {v_star}")));
        }
        let bounds = match self {
            MotilitySpec::ExpDecay => MotilityBounds {
                v_star,
                gamma_inf: (-v_star).exp(),
                gamma_sup: 1.0,
                gamma_prime_sup: 1.0,
                scan_resolution: None,
            },
            MotilitySpec::Constant { g0 } => MotilityBounds {
                v_star,
                gamma_inf: *g0,
                gamma_sup: *g0,
                gamma_prime_sup: 0.0,
                scan_resolution: None,
            },
            MotilitySpec::Algebraic { c, k } => {
                // gamma is decreasing, so the range bounds are closed-form;
                // |gamma'| peaks in the interior when k > 1, scan for it.
                let prime_sup = scan_sup(|v| self.gamma_prime(v).unwrap().abs(), 0.0, v_star);
                MotilityBounds {
                    v_star,
                    gamma_inf: 1.0 / (c + v_star.powf(*k)),
                    gamma_sup: 1.0 / c,
                    gamma_prime_sup: prime_sup,
                    scan_resolution: None,
                }
            }
            MotilitySpec::PowerLaw { c0, k, v_min } => {
                if v_star < *v_min {
                    return Err(KymoError::DomainViolation(format!(
                        "power-law range [{v_min}, {v_star}] is empty"
                    )));
                }
                MotilityBounds {
                    v_star,
                    gamma_inf: c0 * v_star.powf(-k),
                    gamma_sup: c0 * v_min.powf(-k),
                    gamma_prime_sup: c0 * k * v_min.powf(-k - 1.0),
                    scan_resolution: None,
                }
            }
            MotilitySpec::Tabulated { knots } => {
                let hi = v_star.min(knots.last().unwrap().0);
                let res = (hi / 4096.0).max(1e-12);
                MotilityBounds {
                    v_star,
                    gamma_inf: -scan_sup(|v| -tabulated_eval(knots, v).0, 0.0, hi),
                    gamma_sup: scan_sup(|v| tabulated_eval(knots, v).0, 0.0, hi),
                    gamma_prime_sup: scan_sup(|v| tabulated_eval(knots, v).1.abs(), 0.0, hi),
                    scan_resolution: Some(res),
                }
            }
        };
        Ok(bounds)
    }

    /// Parse tabulated knots from CSV text with `v,gamma` rows.
    pub fn tabulated_from_csv(text: &str) -> Result<MotilitySpec> {
        let mut knots = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|t| t.trim().parse::<f64>().ok()).ok_or_else(|| {
                    KymoError::ParseError(format!("bad knot row at line {}", lineno + 1))
                })
            };
            knots.push((parse(parts.next())?, parse(parts.next())?));
        }
        let spec = MotilitySpec::Tabulated { knots };
        let errs = spec.validate();
        if errs.is_empty() {
            Ok(spec)
        } else {
            Err(KymoError::ConfigInvalid { violations: errs })
        }
    }
}

fn tabulated_eval(knots: &[(f64, f64)], v: f64) -> (f64, f64) {
    let last = knots.len() - 1;
    if v >= knots[last].0 {
        return (knots[last].1, 0.0);
    }
    let seg = knots.windows(2).position(|w| v < w[1].0).unwrap_or(last - 1);
    let (v0, g0) = knots[seg];
    let (v1, g1) = knots[seg + 1];
    let slope = (g1 - g0) / (v1 - v0);
    (g0 + slope * (v - v0), slope)
}

fn scan_sup(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> f64 {
    const SAMPLES: usize = 4096;
    if hi <= lo {
        return f(lo);
    }
    let mut best = f64::NEG_INFINITY;
    for i in 0..=SAMPLES {
        let v = lo + (hi - lo) * i as f64 / SAMPLES as f64;
        best = best.max(f(v));
    }
    best
}
