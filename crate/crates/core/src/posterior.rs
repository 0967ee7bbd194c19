//! Log-densities of the model and their analytic gradients.
//!
//! Three quantities are exposed:
//!
//! * the constrained likelihood, where each sign-constrained random
//!   coefficient follows a normal distribution truncated at zero, so its
//!   density carries a mean-dependent normalising factor;
//! * the untruncated likelihood, where the random coefficients use plain
//!   normal densities and the constraints live in the prior instead;
//! * the sampler's log-posterior, untruncated likelihood plus log-prior, in
//!   the coordinates the sampler moves in (decay rates on the logit scale,
//!   everything else on its original scale).
//!
//! All three include their normalising constants.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{
    exp, inverse_mills, ln, ln_gamma, ln_norm_cdf, logistic, logit, norm_ln_pdf, LN_SQRT_2PI,
};
use crate::model::{ModelSpec, PanelDataset, ParamKind, ParamLayout, Params, Reparam};
use crate::transforms::{adstock_with_dalpha_into, weibull_partials};
use crate::{Error, Result};

/// A univariate prior family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Prior {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Normal(mean, sd²) truncated to `[0, ∞)`.
    TruncatedNormal {
        mean: f64,
        sd: f64,
    },
    /// Shape / rate parameterisation; mean `shape / rate`.
    Gamma {
        shape: f64,
        rate: f64,
    },
    /// Shape / scale parameterisation; density ∝ x^{-shape-1} e^{-scale/x}.
    InverseGamma {
        shape: f64,
        scale: f64,
    },
    /// Improper constant density. Sign constraints still apply.
    Flat,
}

impl Prior {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Prior::Normal { mean, sd } | Prior::TruncatedNormal { mean, sd } => {
                mean.is_finite() && sd > 0.0
            }
            Prior::Gamma { shape, rate } => shape > 0.0 && rate > 0.0,
            Prior::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Prior::Flat => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "invalid prior hyperparameters: {self:?}"
            )))
        }
    }

    pub fn ln_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } => norm_ln_pdf((x - mean) / sd) - ln(sd),
            Prior::TruncatedNormal { mean, sd } => log_trunc_normal(x, mean, sd),
            Prior::Gamma { shape, rate } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * ln(rate) - ln_gamma(shape) + (shape - 1.0) * ln(x) - rate * x
            }
            Prior::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                shape * ln(scale) - ln_gamma(shape) - (shape + 1.0) * ln(x) - scale / x
            }
            Prior::Flat => 0.0,
        }
    }

    /// d/dx of [`Prior::ln_density`] on the interior of the support.
    pub fn d_ln_density(&self, x: f64) -> f64 {
        match *self {
            Prior::Normal { mean, sd } | Prior::TruncatedNormal { mean, sd } => {
                -(x - mean) / (sd * sd)
            }
            Prior::Gamma { shape, rate } => (shape - 1.0) / x - rate,
            Prior::InverseGamma { shape, scale } => -(shape + 1.0) / x + scale / (x * x),
            Prior::Flat => 0.0,
        }
    }

    /// Central value and spread used to place optimizer starting points:
    /// `[centre - 2·spread, centre + 2·spread]`.
    pub fn centre_spread(&self) -> (f64, f64) {
        match *self {
            Prior::Normal { mean, sd } | Prior::TruncatedNormal { mean, sd } => (mean, sd),
            Prior::Gamma { shape, rate } => (shape / rate, libm::sqrt(shape) / rate),
            // The mean and variance of IG(1, 1) do not exist; use the mode
            // with a spread of the same size.
            Prior::InverseGamma { shape, scale } => {
                let mode = scale / (shape + 1.0);
                (mode, mode)
            }
            Prior::Flat => (1.0, 0.5),
        }
    }
}

/// Standalone prior on the region-level coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RandomCoefficientPrior {
    /// Only the sign constraint (density 1 on the feasible side). The
    /// hierarchy density is the sole distributional term.
    Indicator,
    /// The same prior as the fixed means, multiplied in on top of the
    /// hierarchy density.
    Literal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    /// Prior on `logit(alpha)`.
    pub alpha_logit: Prior,
    pub shape: Prior,
    pub scale: Prior,
    /// Fixed means (or base-model coefficients) with a sign constraint.
    pub constrained_coefficient: Prior,
    pub unconstrained_coefficient: Prior,
    /// `eta2` and `xi2`.
    pub random_effect_variance: Prior,
    pub sigma2: Prior,
    pub random_coefficients: RandomCoefficientPrior,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha_logit: Prior::Normal { mean: 0.0, sd: 0.5 },
            shape: Prior::Gamma {
                shape: 0.5,
                rate: 1.0,
            },
            scale: Prior::Gamma {
                shape: 0.5,
                rate: 1.0,
            },
            constrained_coefficient: Prior::TruncatedNormal { mean: 1.0, sd: 0.5 },
            unconstrained_coefficient: Prior::Normal { mean: 1.0, sd: 0.5 },
            random_effect_variance: Prior::TruncatedNormal { mean: 1.0, sd: 0.5 },
            sigma2: Prior::InverseGamma {
                shape: 1.0,
                scale: 1.0,
            },
            random_coefficients: RandomCoefficientPrior::Indicator,
        }
    }
}

impl PriorConfig {
    /// The simulation-study settings, including the standalone truncated
    /// normal prior on every region-level coefficient.
    pub fn simulation_study() -> Self {
        Self {
            random_coefficients: RandomCoefficientPrior::Literal,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [
            &self.alpha_logit,
            &self.shape,
            &self.scale,
            &self.constrained_coefficient,
            &self.unconstrained_coefficient,
            &self.random_effect_variance,
            &self.sigma2,
        ] {
            p.validate()?;
        }
        if matches!(
            self.alpha_logit,
            Prior::TruncatedNormal { .. } | Prior::Gamma { .. } | Prior::InverseGamma { .. }
        ) {
            return Err(Error::Config(
                "the decay-rate prior lives on the logit scale and must have full support".into(),
            ));
        }
        Ok(())
    }

    /// Prior for flat coordinate `idx`; `None` when the coordinate carries no
    /// standalone prior (indicator-only random coefficients).
    pub fn for_param(&self, kind: ParamKind, spec: &ModelSpec) -> Option<Prior> {
        let coef = |constrained: bool| {
            if constrained {
                self.constrained_coefficient
            } else {
                self.unconstrained_coefficient
            }
        };
        match kind {
            ParamKind::Alpha(_) => Some(self.alpha_logit),
            ParamKind::Shape(_) => Some(self.shape),
            ParamKind::Scale(_) => Some(self.scale),
            ParamKind::Beta(i) => Some(coef(spec.beta_constrained(i))),
            ParamKind::Gamma(j) => Some(coef(spec.gamma_constrained(j))),
            ParamKind::Eta2(_) | ParamKind::Xi2(_) => Some(self.random_effect_variance),
            ParamKind::BetaRegion(i, _) => match self.random_coefficients {
                RandomCoefficientPrior::Literal => Some(coef(spec.beta_constrained(i))),
                RandomCoefficientPrior::Indicator => None,
            },
            ParamKind::GammaRegion(j, _) => match self.random_coefficients {
                RandomCoefficientPrior::Literal => Some(coef(spec.gamma_constrained(j))),
                RandomCoefficientPrior::Indicator => None,
            },
            ParamKind::Sigma2 => Some(self.sigma2),
        }
    }
}

/// A log-density value and its gradient in the caller's coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct LogDensityResult {
    pub value: f64,
    pub gradient: Vec<f64>,
}

/// Log-density of Normal(mean, sd²) truncated to `[0, ∞)`:
/// `ln ζ + ln φ((v - mean)/sd)` with `ζ = 1 / (sd (1 - Φ(-mean/sd)))`.
pub fn log_trunc_normal(v: f64, mean: f64, sd: f64) -> f64 {
    if v < 0.0 {
        return f64::NEG_INFINITY;
    }
    log_scaling_factor(mean, sd) + norm_ln_pdf((v - mean) / sd)
}

/// `ln ζ = -ln sd - ln Φ(mean/sd)`.
pub fn log_scaling_factor(mean: f64, sd: f64) -> f64 {
    -ln(sd) - ln_norm_cdf(mean / sd)
}

/// Sum over sign-constrained region coefficients of `-ln Φ(mean/sd)`, the
/// log of the ratio between the truncated and the untruncated density. The
/// constrained and untruncated log-likelihoods differ by exactly this amount.
/// Zero for the base model.
pub fn log_truncation_factor_sum(theta: &Params, spec: &ModelSpec) -> Result<f64> {
    let flat = theta.pack(spec)?;
    let layout = spec.layout();
    if !spec.hierarchical {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for i in spec.sign_constrained_beta.iter().copied() {
        let sd = libm::sqrt(flat[layout.eta2(i)]);
        total -= spec.g as f64 * ln_norm_cdf(flat[layout.beta(i)] / sd);
    }
    for j in spec.sign_constrained_gamma.iter().copied() {
        let sd = libm::sqrt(flat[layout.xi2(j)]);
        total -= spec.g as f64 * ln_norm_cdf(flat[layout.gamma(j)] / sd);
    }
    Ok(total)
}

/// Constrained log-likelihood (truncated-normal random coefficients).
/// Returns `-inf` when `theta` violates a constraint.
pub fn log_likelihood_constrained(
    theta: &Params,
    data: &PanelDataset,
    spec: &ModelSpec,
) -> Result<f64> {
    let flat = theta.pack(spec)?;
    let mut eval = Evaluator::new(data, spec)?;
    Ok(eval.likelihood(&flat, Hierarchy::Truncated, None))
}

/// [`log_likelihood_constrained`] with its gradient, on the flat original scale.
pub fn log_likelihood_constrained_grad(
    flat: &[f64],
    data: &PanelDataset,
    spec: &ModelSpec,
) -> Result<LogDensityResult> {
    let mut eval = Evaluator::new(data, spec)?;
    eval.check_len(flat)?;
    let mut gradient = vec![0.0; flat.len()];
    let value = eval.likelihood(flat, Hierarchy::Truncated, Some(&mut gradient));
    Ok(LogDensityResult { value, gradient })
}

/// Reusable evaluator of the constrained log-likelihood and its gradient.
#[derive(Debug, Clone)]
pub struct ConstrainedLikelihood<'a> {
    eval: Evaluator<'a>,
}

impl<'a> ConstrainedLikelihood<'a> {
    pub fn new(data: &'a PanelDataset, spec: &'a ModelSpec) -> Result<Self> {
        Ok(Self {
            eval: Evaluator::new(data, spec)?,
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.eval.layout
    }

    /// Value at the original-scale point `flat`; `grad` receives the gradient
    /// when the value is finite.
    pub fn evaluate(&mut self, flat: &[f64], grad: &mut [f64]) -> f64 {
        grad.iter_mut().for_each(|g| *g = 0.0);
        self.eval.likelihood(flat, Hierarchy::Truncated, Some(grad))
    }
}

/// Untruncated log-likelihood (plain normal random coefficients).
/// Returns `-inf` when `theta` violates a constraint.
pub fn log_likelihood_untruncated(
    theta: &Params,
    data: &PanelDataset,
    spec: &ModelSpec,
) -> Result<f64> {
    let flat = theta.pack(spec)?;
    let mut eval = Evaluator::new(data, spec)?;
    Ok(eval.likelihood(&flat, Hierarchy::Untruncated, None))
}

/// Log prior, with the decay-rate prior applied to `logit(alpha)` directly.
pub fn log_prior(theta: &Params, spec: &ModelSpec, priors: &PriorConfig) -> Result<f64> {
    let flat = theta.pack(spec)?;
    let layout = spec.layout();
    if layout.first_infeasible(&flat).is_some() {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(prior_term(
        &to_carried(&flat, &layout),
        &flat,
        &layout,
        spec,
        priors,
        None,
    ))
}

/// Maps original-scale flat parameters to sampler coordinates.
pub fn to_carried(flat: &[f64], layout: &ParamLayout) -> Vec<f64> {
    flat.iter()
        .zip(layout.entries())
        .map(|(&v, e)| match e.reparam {
            Reparam::Logit => logit(v),
            Reparam::Log => ln(v),
            Reparam::Identity => v,
        })
        .collect()
}

/// Inverse of [`to_carried`].
pub fn from_carried(carried: &[f64], layout: &ParamLayout) -> Vec<f64> {
    carried
        .iter()
        .zip(layout.entries())
        .map(|(&v, e)| match e.reparam {
            Reparam::Logit => logistic(v),
            Reparam::Log => exp(v),
            Reparam::Identity => v,
        })
        .collect()
}

/// Sampler log-posterior at `carried` (see [`to_carried`]). Outside the
/// feasible region the value is `-inf` and the gradient is all zeros.
pub fn log_posterior_hmc(
    carried: &[f64],
    data: &PanelDataset,
    spec: &ModelSpec,
    priors: &PriorConfig,
) -> Result<LogDensityResult> {
    let mut density = ModelDensity::new(data, spec, priors)?;
    density.eval.check_len(carried)?;
    let mut gradient = vec![0.0; carried.len()];
    let value = density.evaluate(carried, &mut gradient);
    Ok(LogDensityResult { value, gradient })
}

/// The sampler's target: owns scratch space so repeated evaluations do not allocate.
#[derive(Debug, Clone)]
pub struct ModelDensity<'a> {
    eval: Evaluator<'a>,
    priors: PriorConfig,
    flat: Vec<f64>,
}

impl<'a> ModelDensity<'a> {
    pub fn new(data: &'a PanelDataset, spec: &'a ModelSpec, priors: &PriorConfig) -> Result<Self> {
        priors.validate()?;
        let eval = Evaluator::new(data, spec)?;
        let len = eval.layout.len();
        Ok(Self {
            eval,
            priors: priors.clone(),
            flat: vec![0.0; len],
        })
    }

    pub fn layout(&self) -> &ParamLayout {
        &self.eval.layout
    }

    pub fn spec(&self) -> &ModelSpec {
        self.eval.spec
    }

    /// Carries the saturation shape and scale on the log scale instead of
    /// reflecting them at zero.
    pub fn with_log_transforms(mut self) -> Self {
        self.eval.layout = self.eval.layout.clone().with_log_transforms();
        self
    }

    /// Writes the gradient into `grad` and returns the log-posterior.
    pub fn evaluate(&mut self, carried: &[f64], grad: &mut [f64]) -> f64 {
        for ((dst, &src), e) in self
            .flat
            .iter_mut()
            .zip(carried)
            .zip(self.eval.layout.entries())
        {
            *dst = match e.reparam {
                Reparam::Logit => logistic(src),
                Reparam::Log => exp(src),
                Reparam::Identity => src,
            };
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let flat = core::mem::take(&mut self.flat);
        let mut value = self
            .eval
            .likelihood(&flat, Hierarchy::Untruncated, Some(grad));
        if value == f64::NEG_INFINITY || value.is_nan() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            self.flat = flat;
            return value;
        }
        let layout = &self.eval.layout;
        for ((g, &v), e) in grad.iter_mut().zip(&flat).zip(layout.entries()) {
            match e.reparam {
                Reparam::Logit => *g *= v * (1.0 - v),
                Reparam::Log => *g *= v,
                Reparam::Identity => {}
            }
        }
        value += prior_term(
            carried,
            &flat,
            layout,
            self.eval.spec,
            &self.priors,
            Some(grad),
        );
        self.flat = flat;
        value
    }
}

/// Priors on logit-carried coordinates apply to the carried value; all
/// others apply on the original scale, with the log-Jacobian added for
/// log-carried coordinates.
fn prior_term(
    carried: &[f64],
    flat: &[f64],
    layout: &ParamLayout,
    spec: &ModelSpec,
    priors: &PriorConfig,
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let mut total = 0.0;
    for (idx, e) in layout.entries().iter().enumerate() {
        let Some(prior) = priors.for_param(e.kind, spec) else {
            continue;
        };
        let (value, slope) = match e.reparam {
            Reparam::Logit => (
                prior.ln_density(carried[idx]),
                prior.d_ln_density(carried[idx]),
            ),
            Reparam::Identity => (prior.ln_density(flat[idx]), prior.d_ln_density(flat[idx])),
            Reparam::Log => {
                let v = flat[idx];
                (
                    prior.ln_density(v) + carried[idx],
                    prior.d_ln_density(v) * v + 1.0,
                )
            }
        };
        total += value;
        if let Some(g) = grad.as_deref_mut() {
            g[idx] += slope;
        }
    }
    total
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Hierarchy {
    Truncated,
    Untruncated,
}

#[derive(Debug, Clone)]
struct Evaluator<'a> {
    data: &'a PanelDataset,
    spec: &'a ModelSpec,
    layout: ParamLayout,
    // Per-variable scratch, length w - ell + 1.
    c: Vec<f64>,
    dc: Vec<f64>,
    // Per-region media terms, [i * T + t].
    s: Vec<f64>,
    ds_alpha: Vec<f64>,
    ds_k: Vec<f64>,
    ds_lambda: Vec<f64>,
    resid: Vec<f64>,
}

impl<'a> Evaluator<'a> {
    fn new(data: &'a PanelDataset, spec: &'a ModelSpec) -> Result<Self> {
        spec.check_data(data)?;
        let fitted = data.weeks() + 1 - spec.ell;
        let mt = spec.m * fitted;
        Ok(Self {
            data,
            spec,
            layout: spec.layout(),
            c: Vec::with_capacity(fitted),
            dc: Vec::with_capacity(fitted),
            s: vec![0.0; mt],
            ds_alpha: vec![0.0; mt],
            ds_k: vec![0.0; mt],
            ds_lambda: vec![0.0; mt],
            resid: vec![0.0; fitted],
        })
    }

    fn check_len(&self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.layout.len() {
            return Err(Error::Structure(format!(
                "parameter vector has {} entries, the model has {}",
                flat.len(),
                self.layout.len()
            )));
        }
        Ok(())
    }

    /// Data term plus hierarchy term; `-inf` outside the feasible region.
    fn likelihood(
        &mut self,
        flat: &[f64],
        hierarchy: Hierarchy,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        if self.layout.first_infeasible(flat).is_some() {
            return f64::NEG_INFINITY;
        }
        let data_part = self.data_term(flat, grad.as_deref_mut());
        if !self.spec.hierarchical {
            return data_part;
        }
        data_part + self.hierarchy_term(flat, hierarchy, grad)
    }

    fn data_term(&mut self, flat: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let (m, n, ell) = (self.spec.m, self.spec.n, self.spec.ell);
        let layout = &self.layout;
        let fitted = self.resid.len();
        let sigma2 = flat[layout.sigma2()];
        let mut total = 0.0;
        let mut sum_sq = 0.0;
        for r in 0..self.data.g() {
            // Media transforms and their partials.
            for i in 0..m {
                let (alpha, k, lambda) = (
                    flat[layout.alpha(i)],
                    flat[layout.shape(i)],
                    flat[layout.scale(i)],
                );
                adstock_with_dalpha_into(self.data.x(r, i), alpha, ell, &mut self.c, &mut self.dc);
                let base = i * fitted;
                for t in 0..fitted {
                    let w = weibull_partials(self.c[t], k, lambda);
                    self.s[base + t] = w.value;
                    // dc/dα is zero whenever c is zero, so the infinite d_x
                    // at the origin never multiplies a nonzero value.
                    self.ds_alpha[base + t] = if self.dc[t] == 0.0 {
                        0.0
                    } else {
                        w.d_x * self.dc[t]
                    };
                    self.ds_k[base + t] = w.d_k;
                    self.ds_lambda[base + t] = w.d_lambda;
                }
            }
            let y = &self.data.y(r)[ell - 1..];
            self.resid.copy_from_slice(y);
            for i in 0..m {
                let coef = flat[layout.media_coef(i, r)];
                let s = &self.s[i * fitted..(i + 1) * fitted];
                for (res, &sv) in self.resid.iter_mut().zip(s) {
                    *res -= coef * sv;
                }
            }
            for j in 0..n {
                let coef = flat[layout.nuisance_coef(j, r)];
                for (res, &zv) in self.resid.iter_mut().zip(&self.data.z(r, j)[ell - 1..]) {
                    *res -= coef * zv;
                }
            }
            let ss: f64 = self.resid.iter().map(|e| e * e).sum();
            sum_sq += ss;
            total -= fitted as f64 * (LN_SQRT_2PI + 0.5 * ln(sigma2)) + 0.5 * ss / sigma2;

            if let Some(g) = grad.as_deref_mut() {
                for i in 0..m {
                    let coef_idx = layout.media_coef(i, r);
                    let coef = flat[coef_idx];
                    let base = i * fitted;
                    let (mut gs, mut ga, mut gk, mut gl) = (0.0, 0.0, 0.0, 0.0);
                    for t in 0..fitted {
                        let e = self.resid[t];
                        gs += e * self.s[base + t];
                        ga += e * self.ds_alpha[base + t];
                        gk += e * self.ds_k[base + t];
                        gl += e * self.ds_lambda[base + t];
                    }
                    g[coef_idx] += gs / sigma2;
                    g[layout.alpha(i)] += coef * ga / sigma2;
                    g[layout.shape(i)] += coef * gk / sigma2;
                    g[layout.scale(i)] += coef * gl / sigma2;
                }
                for j in 0..n {
                    let z = &self.data.z(r, j)[ell - 1..];
                    let gz: f64 = self.resid.iter().zip(z).map(|(e, zv)| e * zv).sum();
                    g[layout.nuisance_coef(j, r)] += gz / sigma2;
                }
            }
        }
        if let Some(g) = grad {
            let count = (fitted * self.data.g()) as f64;
            g[layout.sigma2()] += -0.5 * count / sigma2 + 0.5 * sum_sq / (sigma2 * sigma2);
        }
        total
    }

    fn hierarchy_term(
        &self,
        flat: &[f64],
        hierarchy: Hierarchy,
        mut grad: Option<&mut [f64]>,
    ) -> f64 {
        let layout = &self.layout;
        let g_regions = self.spec.g;
        let mut total = 0.0;
        let groups = (0..self.spec.m)
            .map(|i| {
                (
                    layout.beta(i),
                    layout.eta2(i),
                    self.spec.beta_constrained(i),
                    (0..g_regions).map(move |r| layout.beta_region(i, r)),
                )
            })
            .map(|(a, b, c, d)| (a, b, c, d.collect::<Vec<_>>()))
            .chain((0..self.spec.n).map(|j| {
                (
                    layout.gamma(j),
                    layout.xi2(j),
                    self.spec.gamma_constrained(j),
                    (0..g_regions)
                        .map(|r| layout.gamma_region(j, r))
                        .collect::<Vec<_>>(),
                )
            }));
        for (mean_idx, var_idx, constrained, members) in groups {
            let (mean, var) = (flat[mean_idx], flat[var_idx]);
            let sd = libm::sqrt(var);
            for &idx in &members {
                let d = flat[idx] - mean;
                total -= LN_SQRT_2PI + 0.5 * ln(var) + 0.5 * d * d / var;
                if let Some(g) = grad.as_deref_mut() {
                    g[idx] -= d / var;
                    g[mean_idx] += d / var;
                    g[var_idx] += -0.5 / var + 0.5 * d * d / (var * var);
                }
            }
            if constrained && hierarchy == Hierarchy::Truncated {
                let q = mean / sd;
                let count = members.len() as f64;
                total -= count * ln_norm_cdf(q);
                if let Some(g) = grad.as_deref_mut() {
                    let mills = inverse_mills(q);
                    g[mean_idx] -= count * mills / sd;
                    g[var_idx] += count * mills * q / (2.0 * var);
                }
            }
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::{names, sample_params};
    use crate::model::PanelDataset;
    use alloc::string::ToString;

    fn dataset(spec: &ModelSpec, w: usize, seed: u64) -> PanelDataset {
        let mut state = seed ^ 0x9E37_79B9_7F4A_7C15;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let (g, m, n) = (spec.g, spec.m, spec.n);
        let y = (0..g * w).map(|_| 1.0 + 3.0 * next()).collect();
        let x = (0..g * m * w).map(|_| 2.0 * next()).collect();
        let z = (0..g * n * w).map(|_| 2.0 * next()).collect();
        PanelDataset::new(names("r", g), names("x", m), names("z", n), w, y, x, z).unwrap()
    }

    // Fourth-order central difference.
    fn fd<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], i: usize) -> f64 {
        let h = 1e-4 * x[i].abs().max(0.1);
        let mut p = x.to_vec();
        let mut at = |d: f64| {
            p[i] = x[i] + d;
            f(&p)
        };
        (-at(2.0 * h) + 8.0 * at(h) - 8.0 * at(-h) + at(-2.0 * h)) / (12.0 * h)
    }

    #[test]
    fn truncated_normal_at_zero_mean_doubles_the_normal() {
        for &sd in &[0.3, 1.0, 2.5] {
            let ln_zeta = log_scaling_factor(0.0, sd);
            assert!((ln_zeta - ln(2.0 / sd)).abs() < 1e-15);
            let tn = log_trunc_normal(0.7, 0.0, sd);
            let n = Prior::Normal { mean: 0.0, sd }.ln_density(0.7);
            assert!((tn - n - ln(2.0)).abs() < 1e-14);
        }
    }

    #[test]
    fn truncated_normal_reference_value() {
        // 1 - Φ(-2) = Φ(2) = 0.97724986805182079 (tables).
        let expected = ln(1.0 / (0.5 * 0.977_249_868_051_820_8)) - LN_SQRT_2PI;
        assert!((log_trunc_normal(1.0, 1.0, 0.5) - expected).abs() < 1e-14);
        assert_eq!(log_trunc_normal(-1e-12, 1.0, 0.5), f64::NEG_INFINITY);
    }

    #[test]
    fn truncated_normal_integrates_to_one() {
        // Composite Simpson on [0, mean + 20 sd].
        for &(mean, sd) in &[(1.0f64, 0.5f64), (0.0, 1.0), (-1.0, 0.7), (3.0, 2.0)] {
            let upper = mean.max(0.0) + 20.0 * sd;
            let steps = 200_000;
            let h = upper / steps as f64;
            let f = |x: f64| libm::exp(log_trunc_normal(x, mean, sd));
            let mut acc = f(0.0) + f(upper);
            for k in 1..steps {
                acc += if k % 2 == 1 { 4.0 } else { 2.0 } * f(k as f64 * h);
            }
            let integral = acc * h / 3.0;
            assert!(
                (integral - 1.0).abs() < 1e-8,
                "({mean}, {sd}) -> {integral}"
            );
        }
    }

    #[test]
    fn gaussian_at_its_mode() {
        let spec = ModelSpec::new(1, 1, 1, 5);
        let mut p = sample_params(&spec, 4);
        p.beta = vec![0.0];
        p.gamma = vec![1.0];
        p.sigma2 = 0.25;
        let w = 12;
        let z: Vec<f64> = (0..w).map(|t| t as f64 * 0.1).collect();
        let data = PanelDataset::new(
            vec!["r".to_string()],
            names("x", 1),
            names("z", 1),
            w,
            z.clone(),
            vec![1.0; w],
            z,
        )
        .unwrap();
        let v = log_likelihood_constrained(&p, &data, &spec).unwrap();
        let expected =
            (w - 5 + 1) as f64 * ln(1.0 / (libm::sqrt(2.0 * core::f64::consts::PI) * 0.5));
        assert!((v - expected).abs() < 1e-12);

        let mut bumped = data.y(0).to_vec();
        bumped[7] += 0.01;
        let data2 = PanelDataset::new(
            vec!["r".to_string()],
            names("x", 1),
            names("z", 1),
            w,
            bumped,
            vec![1.0; w],
            data.z(0, 0).to_vec(),
        )
        .unwrap();
        assert!(log_likelihood_constrained(&p, &data2, &spec).unwrap() < v);
    }

    #[test]
    fn constrained_minus_untruncated_is_the_truncation_factor() {
        let spec = ModelSpec::new(2, 2, 3, 5).all_constrained();
        let data = dataset(&spec, 20, 1);
        for seed in 0..20 {
            let p = sample_params(&spec, seed);
            let a = log_likelihood_constrained(&p, &data, &spec).unwrap();
            let b = log_likelihood_untruncated(&p, &data, &spec).unwrap();
            let z = log_truncation_factor_sum(&p, &spec).unwrap();
            assert!((a - b - z).abs() < 1e-10);
        }
    }

    #[test]
    fn infeasible_points_have_no_mass() {
        let spec = ModelSpec::new(2, 1, 1, 5).all_constrained();
        let data = dataset(&spec, 15, 2);
        let priors = PriorConfig::default();
        let mut p = sample_params(&spec, 1);
        p.beta[0] = -0.1;
        assert_eq!(
            log_likelihood_constrained(&p, &data, &spec).unwrap(),
            f64::NEG_INFINITY
        );
        let layout = spec.layout();
        let carried = to_carried(&p.pack(&spec).unwrap(), &layout);
        let r = log_posterior_hmc(&carried, &data, &spec, &priors).unwrap();
        assert_eq!(r.value, f64::NEG_INFINITY);
        assert!(r.gradient.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn posterior_gradient_matches_finite_differences() {
        for (spec, literal) in [
            (ModelSpec::new(2, 2, 1, 5).all_constrained(), false),
            (ModelSpec::new(2, 2, 2, 5).all_constrained(), true),
            (ModelSpec::new(2, 1, 3, 4), false),
        ] {
            let data = dataset(&spec, 30, 7);
            let priors = if literal {
                PriorConfig::simulation_study()
            } else {
                PriorConfig::default()
            };
            let layout = spec.layout();
            for seed in 0..5 {
                let p = sample_params(&spec, 100 + seed);
                let x = to_carried(&p.pack(&spec).unwrap(), &layout);
                let r = log_posterior_hmc(&x, &data, &spec, &priors).unwrap();
                for i in 0..x.len() {
                    let num = fd(
                        |q| log_posterior_hmc(q, &data, &spec, &priors).unwrap().value,
                        &x,
                        i,
                    );
                    let rel = (num - r.gradient[i]).abs() / r.gradient[i].abs().max(1.0);
                    assert!(
                        rel < 1e-6,
                        "{} : {} vs {}",
                        layout.entries()[i].name,
                        num,
                        r.gradient[i]
                    );
                }
            }
        }
    }

    #[test]
    fn log_carried_gradient_and_jacobian() {
        for spec in [
            ModelSpec::new(2, 2, 1, 5).all_constrained(),
            ModelSpec::new(2, 2, 2, 5).all_constrained(),
        ] {
            let data = dataset(&spec, 30, 9);
            let priors = PriorConfig::simulation_study();
            let mut plain = ModelDensity::new(&data, &spec, &priors).unwrap();
            let mut logd = ModelDensity::new(&data, &spec, &priors)
                .unwrap()
                .with_log_transforms();
            let layout = logd.layout().clone();
            for seed in 0..5 {
                let flat = sample_params(&spec, 300 + seed).pack(&spec).unwrap();
                let x = to_carried(&flat, &layout);
                let mut g = vec![0.0; x.len()];
                let v = logd.evaluate(&x, &mut g);
                // Same density up to the log-Jacobian of the shape and scale.
                let mut g0 = vec![0.0; x.len()];
                let v0 = plain.evaluate(&to_carried(&flat, plain.layout()), &mut g0);
                let jac: f64 = (spec.m..3 * spec.m).map(|i| x[i]).sum();
                assert!((v - v0 - jac).abs() < 1e-9 * v0.abs().max(1.0));
                for i in 0..x.len() {
                    let num = fd(|q| logd.clone().evaluate(q, &mut vec![0.0; q.len()]), &x, i);
                    let rel = (num - g[i]).abs() / g[i].abs().max(1.0);
                    assert!(
                        rel < 1e-6,
                        "{} : {} vs {}",
                        layout.entries()[i].name,
                        num,
                        g[i]
                    );
                }
            }
        }
    }

    #[test]
    fn constrained_gradient_matches_finite_differences() {
        let spec = ModelSpec::new(2, 2, 2, 5).all_constrained();
        let data = dataset(&spec, 25, 3);
        for seed in 0..5 {
            let p = sample_params(&spec, seed);
            let x = p.pack(&spec).unwrap();
            let r = log_likelihood_constrained_grad(&x, &data, &spec).unwrap();
            for i in 0..x.len() {
                let num = fd(
                    |q| {
                        log_likelihood_constrained_grad(q, &data, &spec)
                            .unwrap()
                            .value
                    },
                    &x,
                    i,
                );
                let rel = (num - r.gradient[i]).abs() / r.gradient[i].abs().max(1.0);
                assert!(rel < 1e-6, "{i}: {num} vs {}", r.gradient[i]);
            }
        }
    }

    #[test]
    fn duplicated_regions_double_the_likelihood() {
        let spec = ModelSpec::new(2, 1, 1, 5);
        let data = dataset(&spec, 20, 5);
        let doubled = data.select_regions(&[0, 0]).unwrap();
        let spec2 = ModelSpec {
            g: 2,
            ..spec.clone()
        }
        .with_hierarchical(false);
        let p = sample_params(&spec, 8);
        let one = log_likelihood_untruncated(&p, &data, &spec).unwrap();
        let two = log_likelihood_untruncated(&p, &doubled, &spec2).unwrap();
        assert_eq!(2.0 * one, two);
    }

    #[test]
    fn posterior_is_continuous_along_segments() {
        let spec = ModelSpec::new(2, 2, 2, 5).all_constrained();
        let data = dataset(&spec, 20, 11);
        let priors = PriorConfig::simulation_study();
        let layout = spec.layout();
        let a = to_carried(&sample_params(&spec, 1).pack(&spec).unwrap(), &layout);
        let b = to_carried(&sample_params(&spec, 2).pack(&spec).unwrap(), &layout);
        let steps = 2000;
        let at = |s: f64| {
            let q: Vec<f64> = a.iter().zip(&b).map(|(u, v)| u + s * (v - u)).collect();
            log_posterior_hmc(&q, &data, &spec, &priors).unwrap()
        };
        let mut prev = at(0.0);
        for k in 1..=steps {
            let cur = at(k as f64 / steps as f64);
            // A jump must be explained by the local slope.
            let dir: f64 = a
                .iter()
                .zip(&b)
                .zip(&cur.gradient)
                .map(|((u, v), g)| (v - u) * g)
                .sum();
            let bound = 4.0 * dir.abs() / steps as f64 + 1e-9 * cur.value.abs();
            assert!(
                (cur.value - prev.value).abs() <= bound.max(1e-6),
                "jump at {k}"
            );
            prev = cur;
        }
    }

    #[test]
    fn gamma_and_inverse_gamma_densities_normalise() {
        for prior in [
            Prior::Gamma {
                shape: 2.5,
                rate: 1.5,
            },
            Prior::InverseGamma {
                shape: 3.0,
                scale: 2.0,
            },
        ] {
            let steps = 2_000_000;
            let upper = 4000.0;
            let h = upper / steps as f64;
            let mut acc = 0.0;
            for k in 1..steps {
                acc +=
                    if k % 2 == 1 { 4.0 } else { 2.0 } * libm::exp(prior.ln_density(k as f64 * h));
            }
            let integral = acc * h / 3.0;
            assert!((integral - 1.0).abs() < 1e-6, "{prior:?}: {integral}");
        }
    }
}
