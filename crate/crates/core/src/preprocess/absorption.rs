//! Absorption curves for insulin boluses and carbohydrate intake. Time is
//! measured in 15-minute steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BergerParams {
    pub s: f64,
    pub a: f64,
    pub b: f64,
    /// Half-absorption time as the literal product `a·D·b` minutes instead
    /// of `a·D + b`.
    pub literal_product: bool,
}

impl Default for BergerParams {
    fn default() -> Self {
        BergerParams {
            s: 1.6,
            a: 5.2,
            b: 41.0,
            literal_product: false,
        }
    }
}

impl BergerParams {
    /// Time to absorb half of `dose`, in steps.
    pub fn half_time(&self, dose: f64) -> f64 {
        let minutes = if self.literal_product {
            self.a * dose * self.b
        } else {
            self.a * dose + self.b
        };
        minutes / crate::data::STEP_MINUTES as f64
    }

    /// Right-hand side source term of the absorption ODE at time `t`.
    pub fn source(&self, dose: f64, t: f64) -> f64 {
        if dose == 0.0 || t <= 0.0 {
            return 0.0;
        }
        let s = self.s;
        let ts = self.half_time(dose).powf(s);
        let denom = ts + t.powf(s);
        s * t.powf(s - 1.0) * ts * dose / (denom * denom)
    }

    fn validate(&self) -> Result<()> {
        if !(self.s > 0.0) || !(self.a > 0.0) || !(self.b > 0.0) {
            return Err(Error::Config("Berger parameters s, a, b must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BatemanParams {
    pub k_a: f64,
    pub k_e: f64,
    pub v: f64,
    pub f: f64,
}

impl Default for BatemanParams {
    fn default() -> Self {
        BatemanParams {
            k_a: 0.1,
            k_e: 0.2,
            v: 0.5,
            f: 0.5,
        }
    }
}

impl BatemanParams {
    fn validate(&self) -> Result<()> {
        if self.k_a == self.k_e {
            return Err(Error::Config("Bateman k_a and k_e must differ".into()));
        }
        if !(self.k_a > 0.0 && self.k_e > 0.0) {
            return Err(Error::Config("Bateman rates must be positive".into()));
        }
        if !(self.v > 0.0) || !(self.f > 0.0 && self.f <= 1.0) {
            return Err(Error::Config("Bateman needs V > 0 and 0 < f <= 1".into()));
        }
        Ok(())
    }

    /// Concentration at time `t`, sign-normalised so it is never negative.
    pub fn concentration(&self, dose: f64, t: f64) -> f64 {
        let prefactor = (self.k_a / (self.k_a - self.k_e)).abs();
        let bracket = ((-self.k_a * t).exp() - (-self.k_e * t).exp()).abs();
        self.f * dose / self.v * prefactor * bracket
    }

    /// Time of maximum concentration.
    pub fn peak_time(&self) -> f64 {
        (self.k_a / self.k_e).ln() / (self.k_a - self.k_e)
    }
}

fn check_dose(dose: f64) -> Result<()> {
    if dose < 0.0 || !dose.is_finite() {
        return Err(Error::Domain(format!("dose must be finite and >= 0, got {dose}")));
    }
    Ok(())
}

/// Absorbed amount at steps `0..=horizon` after a bolus of `dose`, by
/// explicit Euler with a step of one sample on `dA/dt = source(t) − A`.
pub fn berger_absorption(dose: f64, params: &BergerParams, horizon: usize) -> Result<Vec<f64>> {
    check_dose(dose)?;
    params.validate()?;
    let mut out = Vec::with_capacity(horizon + 1);
    let mut a = 0.0;
    out.push(a);
    for n in 0..horizon {
        a += params.source(dose, n as f64) - a;
        out.push(a.max(0.0));
    }
    Ok(out)
}

/// Concentration at steps `0..=horizon` after an intake of `dose`.
pub fn bateman_absorption(dose: f64, params: &BatemanParams, horizon: usize) -> Result<Vec<f64>> {
    check_dose(dose)?;
    params.validate()?;
    Ok((0..=horizon).map(|t| params.concentration(dose, t as f64)).collect())
}
