//! Hamiltonian Monte Carlo with reflective lower/upper bounds.
//!
//! The sampler uses an identity mass matrix, `K(v) = ½ vᵀv`, and a fixed
//! number of leapfrog steps per proposal. Bounded coordinates never leave
//! their box: when a position update crosses a bound the coordinate is
//! mirrored back across it and its velocity is negated, which is the limit
//! of an infinitely steep potential wall. The step size is adapted during
//! burn-in and frozen afterwards.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::{exp, ln};
use crate::model::{ModelSpec, PanelDataset, ParamKind, ParamLayout, Params, Reparam};
use crate::posterior::{from_carried, to_carried, ModelDensity, PriorConfig};
use crate::{Error, Result};

/// Maximum number of reflections applied to one coordinate in one position update.
pub const MAX_REFLECTIONS: usize = 100;

/// Box for one coordinate in the sampler's coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: f64,
    pub upper: f64,
}

impl Bounds {
    pub const UNBOUNDED: Bounds = Bounds {
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
    };

    pub fn lower(lower: f64) -> Self {
        Self {
            lower,
            upper: f64::INFINITY,
        }
    }

    pub fn is_unbounded(&self) -> bool {
        self.lower == f64::NEG_INFINITY && self.upper == f64::INFINITY
    }
}

/// A differentiable log-density with box constraints.
pub trait Target {
    fn dim(&self) -> usize;

    fn bounds(&self) -> Vec<Bounds> {
        vec![Bounds::UNBOUNDED; self.dim()]
    }

    /// Returns `ln P(q)` and writes `∇ ln P(q)` into `grad`. Outside the
    /// support the value is `-inf` and `grad` is left unspecified.
    fn log_density(&mut self, q: &[f64], grad: &mut [f64]) -> f64;
}

impl<F> Target for (usize, F)
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    fn dim(&self) -> usize {
        self.0
    }

    fn log_density(&mut self, q: &[f64], grad: &mut [f64]) -> f64 {
        (self.1)(q, grad)
    }
}

/// Bounces a tentative position off the lower bound: a value below the
/// bound is mirrored (`2·lower - value`) and the velocity negated.
pub fn reflect(value: f64, velocity: f64, lower: f64) -> (f64, f64) {
    if value >= lower {
        (value, velocity)
    } else {
        (2.0 * lower - value, -velocity)
    }
}

/// Reflects off both ends of `bounds` until the position is inside, or
/// gives up after [`MAX_REFLECTIONS`] passes.
pub fn reflect_into(value: f64, velocity: f64, bounds: Bounds) -> Option<(f64, f64)> {
    let (mut q, mut v) = (value, velocity);
    for _ in 0..MAX_REFLECTIONS {
        if q < bounds.lower {
            (q, v) = reflect(q, v, bounds.lower);
        } else if q > bounds.upper {
            q = 2.0 * bounds.upper - q;
            v = -v;
        } else {
            return Some((q, v));
        }
    }
    (q >= bounds.lower && q <= bounds.upper).then_some((q, v))
}

/// Result of one leapfrog step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LeapfrogOutcome {
    /// The step landed at a point with the given finite log-density.
    Moved(f64),
    /// The reflection cap was hit or the new point has zero density.
    Infeasible,
    /// The log-density or its gradient was not finite at a supported point.
    NonFinite,
}

/// One leapfrog step in place.
///
/// On entry `grad` must hold `∇ ln P(theta)`; on a [`LeapfrogOutcome::Moved`]
/// return it holds the gradient at the new position. The momentum is
/// kicked by half a step, the position drifts a full step (with reflection
/// for bounded coordinates), then the momentum takes the second half kick.
pub fn leapfrog_step<F>(
    theta: &mut [f64],
    v: &mut [f64],
    grad: &mut [f64],
    step_size: f64,
    bounds: &[Bounds],
    mut log_density: F,
) -> LeapfrogOutcome
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let half = 0.5 * step_size;
    for (vi, gi) in v.iter_mut().zip(grad.iter()) {
        *vi += half * gi;
    }
    for ((qi, vi), b) in theta.iter_mut().zip(v.iter_mut()).zip(bounds) {
        let tentative = *qi + step_size * *vi;
        if b.is_unbounded() {
            *qi = tentative;
        } else {
            match reflect_into(tentative, *vi, *b) {
                Some((q, vel)) => {
                    *qi = q;
                    *vi = vel;
                }
                None => return LeapfrogOutcome::Infeasible,
            }
        }
    }
    let logp = log_density(theta, grad);
    if logp == f64::NEG_INFINITY {
        return LeapfrogOutcome::Infeasible;
    }
    if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return LeapfrogOutcome::NonFinite;
    }
    for (vi, gi) in v.iter_mut().zip(grad.iter()) {
        *vi += half * gi;
    }
    LeapfrogOutcome::Moved(logp)
}

/// `min(1, P(θ*) e^{-½|v_end|²} / (P(θ) e^{-½|v0|²}))`; zero for an
/// infeasible proposal.
pub fn acceptance_probability(
    logp_current: f64,
    v0: &[f64],
    logp_proposal: f64,
    v_end: &[f64],
) -> f64 {
    if logp_proposal == f64::NEG_INFINITY || logp_proposal.is_nan() {
        return 0.0;
    }
    let k0: f64 = 0.5 * v0.iter().map(|v| v * v).sum::<f64>();
    let k1: f64 = 0.5 * v_end.iter().map(|v| v * v).sum::<f64>();
    let log_ratio = (logp_proposal - k1) - (logp_current - k0);
    if log_ratio >= 0.0 {
        1.0
    } else {
        exp(log_ratio)
    }
}

/// How the sampler carries the saturation shape and scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SaturationCoordinates {
    /// `ln k`, `ln lambda`, with the log-Jacobian added to the density.
    Log,
    /// Original scale, reflected at zero like every other positive parameter.
    Reflect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmcConfig {
    pub iterations: usize,
    pub burn_in: usize,
    pub thinning: usize,
    pub leapfrog_steps: usize,
    /// Initial step size; adapted during burn-in.
    pub step_size: f64,
    pub target_acceptance: f64,
    /// Gain of the burn-in update `ln Δ += gain · (p_accept - target)`.
    pub adaptation_gain: f64,
    pub saturation_coordinates: SaturationCoordinates,
    pub seed: u64,
}

impl Default for HmcConfig {
    fn default() -> Self {
        Self {
            iterations: 20_000,
            burn_in: 10_000,
            thinning: 20,
            leapfrog_steps: 20,
            step_size: 0.01,
            target_acceptance: 0.65,
            adaptation_gain: 0.05,
            saturation_coordinates: SaturationCoordinates::Log,
            seed: 0,
        }
    }
}

impl HmcConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(String::from(msg)));
        if self.burn_in >= self.iterations {
            return fail("burn-in must be smaller than the number of iterations");
        }
        if self.thinning == 0 {
            return fail("thinning must be at least 1");
        }
        if self.leapfrog_steps == 0 {
            return fail("at least one leapfrog step is required");
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return fail("step size must be positive");
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return fail("target acceptance must lie in (0, 1)");
        }
        if !(self.adaptation_gain >= 0.0) {
            return fail("adaptation gain must be nonnegative");
        }
        Ok(())
    }

    pub fn retained_draws(&self) -> usize {
        (self.iterations - self.burn_in) / self.thinning
    }
}

/// Raw output of [`sample`], in the target's own coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub draws: Vec<Vec<f64>>,
    /// Acceptance rate over the post-burn-in iterations.
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    /// Step size used after burn-in.
    pub step_size: f64,
    /// Log-density of the current state after every iteration.
    pub log_density_trace: Vec<f64>,
}

/// Runs one chain on `target` from `init`.
pub fn sample<T: Target>(target: &mut T, init: &[f64], config: &HmcConfig) -> Result<ChainOutput> {
    config.validate()?;
    let d = target.dim();
    if init.len() != d {
        return Err(Error::Dimension(format!(
            "initial point has {} coordinates, target has {d}",
            init.len()
        )));
    }
    let bounds = target.bounds();
    if let Some(i) = init
        .iter()
        .zip(&bounds)
        .position(|(&q, b)| !(q >= b.lower && q <= b.upper))
    {
        return Err(Error::Config(format!(
            "initial coordinate {i} lies outside its bounds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut q = init.to_vec();
    let mut grad = vec![0.0; d];
    let mut logp = target.log_density(&q, &mut grad);
    if !logp.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::Sampler {
            iteration: 0,
            message: "initial point has no finite log-density".into(),
        });
    }

    let mut q_prop = vec![0.0; d];
    let mut v = vec![0.0; d];
    let mut v0 = vec![0.0; d];
    let mut grad_prop = vec![0.0; d];

    let mut ln_step = ln(config.step_size);
    let averaging_start = config.burn_in / 2;
    let (mut ln_step_sum, mut ln_step_count) = (0.0, 0usize);
    let mut step = config.step_size;
    let (mut burn_accepts, mut post_accepts) = (0usize, 0usize);

    let mut draws = Vec::with_capacity(config.retained_draws());
    let mut trace = Vec::with_capacity(config.iterations);

    for iteration in 0..config.iterations {
        let adapting = iteration < config.burn_in;
        if adapting {
            step = exp(ln_step);
        }
        for vi in v0.iter_mut() {
            *vi = rng.sample(StandardNormal);
        }
        v.copy_from_slice(&v0);
        q_prop.copy_from_slice(&q);
        grad_prop.copy_from_slice(&grad);

        let mut logp_prop = f64::NEG_INFINITY;
        for _ in 0..config.leapfrog_steps {
            match leapfrog_step(
                &mut q_prop,
                &mut v,
                &mut grad_prop,
                step,
                &bounds,
                |x, g| target.log_density(x, g),
            ) {
                LeapfrogOutcome::Moved(lp) => logp_prop = lp,
                LeapfrogOutcome::Infeasible => {
                    logp_prop = f64::NEG_INFINITY;
                    break;
                }
                LeapfrogOutcome::NonFinite => {
                    return Err(Error::Sampler {
                        iteration,
                        message: format!(
                            "non-finite log-density or gradient with step size {step:e}"
                        ),
                    });
                }
            }
        }

        let p = acceptance_probability(logp, &v0, logp_prop, &v);
        let accepted = rng.random::<f64>() < p;
        if accepted {
            q.copy_from_slice(&q_prop);
            grad.copy_from_slice(&grad_prop);
            logp = logp_prop;
        }

        if adapting {
            burn_accepts += accepted as usize;
            ln_step += config.adaptation_gain * (p - config.target_acceptance);
            if iteration >= averaging_start {
                ln_step_sum += ln_step;
                ln_step_count += 1;
            }
            if iteration + 1 == config.burn_in {
                let rate = burn_accepts as f64 / config.burn_in as f64;
                if rate < 0.01 {
                    return Err(Error::LowAcceptance {
                        rate,
                        hint: format!(
                            "try a smaller initial step size than {:e} or fewer leapfrog steps than {}",
                            config.step_size, config.leapfrog_steps
                        ),
                    });
                }
                if ln_step_count > 0 {
                    step = exp(ln_step_sum / ln_step_count as f64);
                }
            }
        } else {
            post_accepts += accepted as usize;
            if (iteration - config.burn_in + 1) % config.thinning == 0 {
                draws.push(q.clone());
            }
        }
        trace.push(logp);
    }

    let post = config.iterations - config.burn_in;
    Ok(ChainOutput {
        draws,
        acceptance_rate: post_accepts as f64 / post as f64,
        burn_in_acceptance_rate: if config.burn_in > 0 {
            burn_accepts as f64 / config.burn_in as f64
        } else {
            0.0
        },
        step_size: step,
        log_density_trace: trace,
    })
}

/// Retained posterior draws on the original parameter scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleChain {
    pub names: Vec<String>,
    pub draws: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub step_size: f64,
    pub log_posterior_trace: Vec<f64>,
    pub config: HmcConfig,
}

impl SampleChain {
    /// All retained values of parameter `idx`.
    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[idx]).collect()
    }

    /// Posterior mean of every parameter.
    pub fn mean(&self) -> Vec<f64> {
        let n = self.draws.len() as f64;
        let mut acc = vec![0.0; self.names.len()];
        for d in &self.draws {
            for (a, v) in acc.iter_mut().zip(d) {
                *a += v;
            }
        }
        acc.iter_mut().for_each(|a| *a /= n);
        acc
    }
}

impl Target for ModelDensity<'_> {
    fn dim(&self) -> usize {
        self.layout().len()
    }

    fn bounds(&self) -> Vec<Bounds> {
        sampler_bounds(self.layout())
    }

    fn log_density(&mut self, q: &[f64], grad: &mut [f64]) -> f64 {
        self.evaluate(q, grad)
    }
}

/// Bounds in sampler coordinates: logit- and log-carried coordinates are
/// free, every other bound is reflected.
pub fn sampler_bounds(layout: &ParamLayout) -> Vec<Bounds> {
    layout
        .entries()
        .iter()
        .map(|e| match e.reparam {
            Reparam::Logit | Reparam::Log => Bounds::UNBOUNDED,
            Reparam::Identity => Bounds {
                lower: e.lower,
                upper: e.upper,
            },
        })
        .collect()
}

/// Default starting point: decay rates 0.5, shape and scale 0.5, all
/// coefficients 1, all variances 1.
pub fn default_initial_params(spec: &ModelSpec) -> Params {
    let layout = spec.layout();
    let flat: Vec<f64> = layout
        .entries()
        .iter()
        .map(|e| match e.kind {
            ParamKind::Alpha(_) | ParamKind::Shape(_) | ParamKind::Scale(_) => 0.5,
            _ => 1.0,
        })
        .collect();
    Params::unpack(&flat, spec).expect("layout-sized vector")
}

/// Samples the model posterior starting from [`default_initial_params`]
/// perturbed by Normal(0, 0.01²) noise drawn from the chain's seed.
pub fn run_chain(
    data: &PanelDataset,
    spec: &ModelSpec,
    priors: &PriorConfig,
    config: &HmcConfig,
) -> Result<SampleChain> {
    run_chain_from(data, spec, priors, config, &default_initial_params(spec))
}

pub fn run_chain_from(
    data: &PanelDataset,
    spec: &ModelSpec,
    priors: &PriorConfig,
    config: &HmcConfig,
    init: &Params,
) -> Result<SampleChain> {
    init.check_feasible(spec)?;
    let mut density = ModelDensity::new(data, spec, priors)?;
    if config.saturation_coordinates == SaturationCoordinates::Log {
        density = density.with_log_transforms();
    }
    let layout = density.layout().clone();
    let bounds = sampler_bounds(&layout);

    // Jitter comes from its own stream so the sampler stream is untouched.
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x6a09_e667_f3bc_c908);
    let mut start = to_carried(&init.pack(spec)?, &layout);
    for (q, b) in start.iter_mut().zip(&bounds) {
        let noise: f64 = rng.sample(StandardNormal);
        let moved = *q + 0.01 * noise;
        *q = reflect_into(moved, 0.0, *b).map(|(v, _)| v).unwrap_or(*q);
    }

    let out = sample(&mut density, &start, config)?;
    Ok(SampleChain {
        names: layout.names(),
        draws: out.draws.iter().map(|d| from_carried(d, &layout)).collect(),
        acceptance_rate: out.acceptance_rate,
        burn_in_acceptance_rate: out.burn_in_acceptance_rate,
        step_size: out.step_size,
        log_posterior_trace: out.log_density_trace,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagnostics::effective_sample_size;

    #[test]
    fn leapfrog_on_a_quadratic() {
        let mut theta = [1.0];
        let mut v = [0.0];
        let mut grad = [-1.0];
        let out = leapfrog_step(
            &mut theta,
            &mut v,
            &mut grad,
            0.1,
            &[Bounds::UNBOUNDED],
            |q, g| {
                g[0] = -q[0];
                -0.5 * q[0] * q[0]
            },
        );
        assert!(matches!(out, LeapfrogOutcome::Moved(_)));
        assert!((theta[0] - 0.995).abs() < 1e-15);
        assert!((v[0] - -0.09975).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_pure_translation() {
        let mut theta = [0.3, -1.0];
        let mut v = [0.5, 2.0];
        let mut grad = [0.0, 0.0];
        leapfrog_step(
            &mut theta,
            &mut v,
            &mut grad,
            0.2,
            &[Bounds::UNBOUNDED; 2],
            |_, g| {
                g.iter_mut().for_each(|x| *x = 0.0);
                0.0
            },
        );
        assert!((theta[0] - 0.4).abs() < 1e-15 && (theta[1] - -0.6).abs() < 1e-15);
        assert_eq!(v, [0.5, 2.0]);
    }

    #[test]
    fn reflection_examples() {
        assert_eq!(reflect(-0.3, -1.0, 0.0), (0.3, 1.0));
        assert_eq!(reflect(0.2, -1.0, 0.0), (0.2, -1.0));
        assert_eq!(reflect(0.5, 3.0, 1.0), (1.5, -3.0));
        // Several passes inside a narrow box.
        let (q, v) = reflect_into(
            3.5,
            2.0,
            Bounds {
                lower: 0.0,
                upper: 1.0,
            },
        )
        .unwrap();
        assert!((q - 0.5).abs() < 1e-15 && v == -2.0);
        assert!(reflect_into(
            1e9,
            1.0,
            Bounds {
                lower: 0.0,
                upper: 1.0
            }
        )
        .is_none());
    }

    #[test]
    fn acceptance_examples() {
        assert_eq!(acceptance_probability(-3.0, &[0.5], -3.0, &[0.5]), 1.0);
        assert_eq!(
            acceptance_probability(-3.0, &[0.5], f64::NEG_INFINITY, &[0.5]),
            0.0
        );
        let p = acceptance_probability(-3.0, &[0.5, 1.0], -4.0, &[1.0, 0.5]);
        assert!((p - libm::exp(-1.0)).abs() < 1e-15);
    }

    fn max_energy_error(
        step: f64,
        total_time: f64,
        lower: Option<f64>,
        mut theta: f64,
        mut v: f64,
    ) -> (f64, usize) {
        let bounds = [lower.map(Bounds::lower).unwrap_or(Bounds::UNBOUNDED)];
        let potential = |q: f64| 0.5 * q * q;
        let h0 = potential(theta) + 0.5 * v * v;
        let mut grad = [-theta];
        let mut worst: f64 = 0.0;
        let mut bounces = 0;
        let steps = libm::round(total_time / step) as usize;
        for _ in 0..steps {
            if theta + step * (v + 0.5 * step * grad[0]) < lower.unwrap_or(f64::NEG_INFINITY) {
                bounces += 1;
            }
            let (mut t, mut vv) = ([theta], [v]);
            leapfrog_step(&mut t, &mut vv, &mut grad, step, &bounds, |q, g| {
                g[0] = -q[0];
                -potential(q[0])
            });
            theta = t[0];
            v = vv[0];
            worst = worst.max((potential(theta) + 0.5 * v * v - h0).abs());
        }
        (worst, bounces)
    }

    #[test]
    fn energy_error_is_second_order() {
        let (e1, _) = max_energy_error(0.1, 3.0, None, 1.0, 0.3);
        let (e2, _) = max_energy_error(0.05, 3.0, None, 1.0, 0.3);
        let ratio = e1 / e2;
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn energy_error_is_second_order_through_a_bounce() {
        // Half-normal target: the quadratic truncated at its centre.
        let (e1, b1) = max_energy_error(0.1, 3.0, Some(0.0), 0.35, -1.3);
        let (e2, b2) = max_energy_error(0.05, 3.0, Some(0.0), 0.35, -1.3);
        assert!(b1 > 0 && b2 > 0);
        let ratio = e1 / e2;
        assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn reflection_preserves_speed() {
        for k in 0..200 {
            let q = -5.0 + k as f64 * 0.05;
            let v = 1.7 - k as f64 * 0.02;
            let (q2, v2) = reflect(q, v, 0.0);
            assert!(q2 >= 0.0);
            assert_eq!(v2.abs(), v.abs());
        }
    }

    fn truncated_normal_target() -> impl Target {
        struct Tn;
        impl Target for Tn {
            fn dim(&self) -> usize {
                1
            }
            fn bounds(&self) -> Vec<Bounds> {
                vec![Bounds::lower(0.0)]
            }
            fn log_density(&mut self, q: &[f64], g: &mut [f64]) -> f64 {
                if q[0] < 0.0 {
                    return f64::NEG_INFINITY;
                }
                g[0] = -(q[0] - 1.0) / 0.25;
                -0.5 * (q[0] - 1.0) * (q[0] - 1.0) / 0.25
            }
        }
        Tn
    }

    #[test]
    fn samples_a_truncated_normal() {
        let config = HmcConfig {
            seed: 3,
            ..HmcConfig::default()
        };
        let out = sample(&mut truncated_normal_target(), &[1.0], &config).unwrap();
        assert_eq!(out.draws.len(), 500);
        let xs: Vec<f64> = out.draws.iter().map(|d| d[0]).collect();
        assert!(xs.iter().all(|&x| x >= 0.0));
        // Analytic moments of TN(0, inf; 1, 0.5²).
        let a = -2.0;
        let lambda = libm::exp(crate::math::norm_ln_pdf(a)) / (1.0 - crate::math::norm_cdf(a));
        let mean = 1.0 + 0.5 * lambda;
        let n = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        let mcse = libm::sqrt(var / effective_sample_size(&xs));
        assert!(
            (m - mean).abs() < 3.0 * mcse,
            "mean {m} vs {mean} (mcse {mcse})"
        );
        assert!(
            (0.5..=0.8).contains(&out.acceptance_rate),
            "{}",
            out.acceptance_rate
        );
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let config = HmcConfig {
            iterations: 2000,
            burn_in: 1000,
            seed: 11,
            ..HmcConfig::default()
        };
        let a = sample(&mut truncated_normal_target(), &[0.4], &config).unwrap();
        let b = sample(&mut truncated_normal_target(), &[0.4], &config).unwrap();
        assert_eq!(a, b);
        let c = sample(
            &mut truncated_normal_target(),
            &[0.4],
            &HmcConfig { seed: 12, ..config },
        )
        .unwrap();
        assert_ne!(a.draws, c.draws);
    }

    #[test]
    fn config_validation() {
        let bad = [
            HmcConfig {
                burn_in: 20_000,
                ..HmcConfig::default()
            },
            HmcConfig {
                thinning: 0,
                ..HmcConfig::default()
            },
            HmcConfig {
                leapfrog_steps: 0,
                ..HmcConfig::default()
            },
            HmcConfig {
                step_size: 0.0,
                ..HmcConfig::default()
            },
            HmcConfig {
                target_acceptance: 1.0,
                ..HmcConfig::default()
            },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
        assert_eq!(HmcConfig::default().retained_draws(), 500);
    }

    #[test]
    fn hopeless_step_size_is_diagnosed() {
        // A huge fixed step on a narrow target rejects everything.
        let mut target = (1usize, |q: &[f64], g: &mut [f64]| {
            g[0] = -q[0] * 1e6;
            -0.5 * q[0] * q[0] * 1e6
        });
        let config = HmcConfig {
            iterations: 400,
            burn_in: 200,
            step_size: 10.0,
            adaptation_gain: 0.0,
            ..HmcConfig::default()
        };
        let err = sample(&mut target, &[0.0], &config).unwrap_err();
        assert!(
            matches!(err, Error::LowAcceptance { .. } | Error::Sampler { .. }),
            "{err:?}"
        );
    }

    #[test]
    fn non_finite_gradient_reports_iteration() {
        let mut target = (1usize, |q: &[f64], g: &mut [f64]| {
            g[0] = if q[0].abs() > 3.0 { f64::NAN } else { -q[0] };
            -0.5 * q[0] * q[0]
        });
        let config = HmcConfig {
            iterations: 2000,
            burn_in: 1000,
            step_size: 0.5,
            ..HmcConfig::default()
        };
        match sample(&mut target, &[0.0], &config) {
            Err(Error::Sampler { message, .. }) => assert!(message.contains("non-finite")),
            other => panic!("expected a sampler error, got {other:?}"),
        }
    }
}
