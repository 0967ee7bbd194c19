//! Carryover (adstock) and Weibull saturation transforms for media variables.
//!
//! Series are indexed from zero here; output element `k` of [`adstock`]
//! corresponds to week `ell + k` in one-based week numbering. The first
//! `ell - 1` weeks have an incomplete carryover window and are dropped
//! rather than padded.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{exp, ln};
use crate::{Error, Result};

/// Geometric carryover: decay rate per week and window length in weeks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdstockParams {
    pub alpha: f64,
    pub ell: usize,
}

impl AdstockParams {
    pub fn new(alpha: f64, ell: usize) -> Result<Self> {
        let p = Self { alpha, ell };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.alpha) {
            return Err(Error::Domain(format!(
                "decay rate {} outside [0, 1)",
                self.alpha
            )));
        }
        if self.ell == 0 {
            return Err(Error::Domain(
                "carryover window must be at least one week".into(),
            ));
        }
        Ok(())
    }
}

/// Weibull CDF shape `k` and scale `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SaturationParams {
    pub k: f64,
    pub lambda: f64,
}

impl SaturationParams {
    pub fn new(k: f64, lambda: f64) -> Result<Self> {
        let p = Self { k, lambda };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        // Written so that NaN fails too.
        if !(self.k > 0.0 && self.k.is_finite()) {
            return Err(Error::Domain(format!(
                "Weibull shape {} must be positive",
                self.k
            )));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(Error::Domain(format!(
                "Weibull scale {} must be positive",
                self.lambda
            )));
        }
        Ok(())
    }
}

fn check_series(x: &[f64], ell: usize) -> Result<()> {
    if x.len() < ell {
        return Err(Error::Dimension(format!(
            "series of length {} is shorter than the carryover window {ell}",
            x.len()
        )));
    }
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!(
            "non-finite activity level at index {pos}"
        )));
    }
    Ok(())
}

/// `c_t = Σ_{τ<ell} alpha^τ x_{t-τ}` for every week with a full window.
pub fn adstock(x: &[f64], p: &AdstockParams) -> Result<Vec<f64>> {
    p.validate()?;
    check_series(x, p.ell)?;
    let mut out = Vec::new();
    adstock_into(x, p.alpha, p.ell, &mut out);
    Ok(out)
}

/// `∂c_t/∂alpha = Σ_{1≤τ<ell} τ alpha^{τ-1} x_{t-τ}`.
pub fn adstock_dalpha(x: &[f64], p: &AdstockParams) -> Result<Vec<f64>> {
    p.validate()?;
    check_series(x, p.ell)?;
    let mut value = Vec::new();
    let mut deriv = Vec::new();
    adstock_with_dalpha_into(x, p.alpha, p.ell, &mut value, &mut deriv);
    Ok(deriv)
}

/// Unchecked adstock into a reusable buffer. `x.len() >= ell` is assumed.
pub(crate) fn adstock_into(x: &[f64], alpha: f64, ell: usize, out: &mut Vec<f64>) {
    out.clear();
    for t in (ell - 1)..x.len() {
        // Horner over lags, oldest first: x_t + α(x_{t-1} + α(...)).
        let mut acc = 0.0;
        for tau in (0..ell).rev() {
            acc = acc * alpha + x[t - tau];
        }
        out.push(acc);
    }
}

/// Unchecked adstock and its alpha-derivative in one pass.
pub(crate) fn adstock_with_dalpha_into(
    x: &[f64],
    alpha: f64,
    ell: usize,
    value: &mut Vec<f64>,
    deriv: &mut Vec<f64>,
) {
    value.clear();
    deriv.clear();
    for t in (ell - 1)..x.len() {
        let mut c = 0.0;
        let mut dc = 0.0;
        for tau in (0..ell).rev() {
            // d/dα (c·α + x) = c + α·dc
            dc = dc * alpha + c;
            c = c * alpha + x[t - tau];
        }
        value.push(c);
        deriv.push(dc);
    }
}

/// `1 - exp(-(x/lambda)^k)`.
pub fn weibull_cdf(x: f64, p: &SaturationParams) -> Result<f64> {
    p.validate()?;
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!(
            "saturation input {x} must be finite and nonnegative"
        )));
    }
    Ok(weibull_partials(x, p.k, p.lambda).value)
}

/// Value of the Weibull CDF and its partial derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeibullPartials {
    pub value: f64,
    pub d_x: f64,
    pub d_k: f64,
    pub d_lambda: f64,
}

/// Unchecked Weibull CDF with analytic partials. At `x = 0` every partial in
/// `k` and `lambda` is zero (the CDF is identically zero there).
pub fn weibull_partials(x: f64, k: f64, lambda: f64) -> WeibullPartials {
    if x <= 0.0 {
        // d/dx at the origin is infinite for k < 1; nothing differentiates
        // through x = 0 because adstocked inputs are never negative.
        let d_x = if k == 1.0 {
            1.0 / lambda
        } else if k > 1.0 {
            0.0
        } else {
            f64::INFINITY
        };
        return WeibullPartials {
            value: 0.0,
            d_x,
            d_k: 0.0,
            d_lambda: 0.0,
        };
    }
    let log_ratio = ln(x / lambda);
    let u = exp(k * log_ratio);
    let survival = exp(-u);
    // -expm1(-u) keeps precision when u is small.
    let value = -libm::expm1(-u);
    // Fully saturated: u may be infinite, every partial vanishes.
    let common = if survival == 0.0 { 0.0 } else { survival * u };
    WeibullPartials {
        value,
        d_x: common * k / x,
        d_k: common * log_ratio,
        d_lambda: -common * k / lambda,
    }
}

/// `beta · s(c(x))` for every week with a full carryover window.
pub fn response(x: &[f64], beta: f64, a: &AdstockParams, s: &SaturationParams) -> Result<Vec<f64>> {
    s.validate()?;
    let c = adstock(x, a)?;
    if let Some(pos) = c.iter().position(|&v| v < 0.0) {
        return Err(Error::Domain(format!(
            "adstocked level at output index {pos} is negative; activity must be nonnegative"
        )));
    }
    Ok(c.into_iter()
        .map(|v| beta * weibull_partials(v, s.k, s.lambda).value)
        .collect())
}
