//! Energy density `F` of the nonlinear term and its derivatives.
//!
//! The power family `f(t) = zeta * t^sigma`, `F(t) = zeta * t^(sigma+1) / (sigma+1)`
//! covers the cubic Gross-Pitaevskii term (`sigma = 1`).

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Nonlinearity {
    Power { zeta: f64, sigma: u32 },
}

impl Nonlinearity {
    pub fn power(zeta: f64, sigma: u32) -> Result<Self> {
        if !(zeta >= 0.0) || !zeta.is_finite() {
            return Err(Error::Config(format!("coupling zeta must be finite and >= 0, got {zeta}")));
        }
        if sigma < 1 {
            return Err(Error::Config("power sigma must be >= 1".into()));
        }
        Ok(Nonlinearity::Power { zeta, sigma })
    }

    /// Cubic Gross-Pitaevskii nonlinearity `zeta |u|^2 u`.
    pub fn cubic(zeta: f64) -> Result<Self> {
        Self::power(zeta, 1)
    }

    pub fn zeta(&self) -> f64 {
        match *self {
            Nonlinearity::Power { zeta, .. } => zeta,
        }
    }

    /// True when `F'' > 0` on `(0, inf)`, the strict convexity the Newton
    /// linearization relies on for coercivity.
    pub fn is_strictly_convex(&self) -> bool {
        self.zeta() > 0.0
    }

    /// `F(t)`, unchecked.
    #[inline]
    pub fn big_f(&self, t: f64) -> f64 {
        match *self {
            Nonlinearity::Power { zeta, sigma } => zeta * t.powi(sigma as i32 + 1) / (sigma as f64 + 1.0),
        }
    }

    /// `f(t) = F'(t)`, unchecked.
    #[inline]
    pub fn f(&self, t: f64) -> f64 {
        match *self {
            Nonlinearity::Power { zeta, sigma } => zeta * t.powi(sigma as i32),
        }
    }

    /// `f'(t)`, unchecked.
    #[inline]
    pub fn fprime(&self, t: f64) -> f64 {
        match *self {
            Nonlinearity::Power { zeta, sigma } => zeta * sigma as f64 * t.powi(sigma as i32 - 1),
        }
    }

    /// `f''(t)`, unchecked.
    #[inline]
    pub fn fsecond(&self, t: f64) -> f64 {
        match *self {
            Nonlinearity::Power { zeta, sigma } => {
                if sigma < 2 {
                    0.0
                } else {
                    zeta * (sigma * (sigma - 1)) as f64 * t.powi(sigma as i32 - 2)
                }
            }
        }
    }

    pub fn f_eval(&self, t: f64) -> Result<f64> {
        check_nonnegative(t)?;
        Ok(self.f(t))
    }

    pub fn fprime_eval(&self, t: f64) -> Result<f64> {
        check_nonnegative(t)?;
        Ok(self.fprime(t))
    }

    /// Sampled diagnostics of the structural assumptions on `F`. Never fails;
    /// violations are reported in the returned value.
    pub fn check_assumptions(&self, t_samples: &[f64]) -> AssumptionReport {
        let mut report = AssumptionReport {
            f_second_positive: true,
            growth_exponent: 0.0,
            growth_ok: true,
            f_second_t_bounded: true,
            violations: Vec::new(),
        };
        let samples: Vec<f64> = t_samples.iter().copied().filter(|t| *t > 0.0 && t.is_finite()).collect();
        // F'' = f'.
        if let Some(t) = samples.iter().find(|&&t| !(self.fprime(t) > 0.0)) {
            report.f_second_positive = false;
            report
                .violations
                .push(format!("F''({t}) = {} is not positive", self.fprime(*t)));
        }
        // Growth exponent of |F'| from the two largest samples.
        let mut sorted = samples.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if sorted.len() >= 2 {
            let (t1, t2) = (sorted[sorted.len() - 2], sorted[sorted.len() - 1]);
            let (g1, g2) = (self.f(t1).abs(), self.f(t2).abs());
            if g1 > 0.0 && g2 > 0.0 && t2 > t1 {
                report.growth_exponent = (g2 / g1).ln() / (t2 / t1).ln();
            }
        }
        if report.growth_exponent >= 2.0 - 1e-9 {
            report.growth_ok = false;
            report.violations.push(format!(
                "|F'(t)| grows like t^{:.3}, exponent must be below 2",
                report.growth_exponent
            ));
        }
        if let Some(t) = samples.iter().find(|&&t| !(self.fprime(t) * t).is_finite()) {
            report.f_second_t_bounded = false;
            report.violations.push(format!("F''(t) t is not finite at t = {t}"));
        }
        report
    }
}

fn check_nonnegative(t: f64) -> Result<()> {
    if t < 0.0 || t.is_nan() {
        return Err(Error::Domain(format!("density argument must be >= 0, got {t}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub f_second_positive: bool,
    pub growth_exponent: f64,
    pub growth_ok: bool,
    pub f_second_t_bounded: bool,
    pub violations: Vec<String>,
}

impl AssumptionReport {
    pub fn all_pass(&self) -> bool {
        self.violations.is_empty()
    }
}
