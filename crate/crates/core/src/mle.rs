//! Constrained maximum likelihood by projected L-BFGS with multistart.
//!
//! The minimiser works on `-ln L` inside a box. Each iteration builds a
//! quasi-Newton direction on the free coordinates (those not pinned at a
//! bound with the gradient pushing outward) and backtracks along the
//! projected path until the Armijo condition holds, so the objective never
//! increases and every iterate is feasible.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::math::logistic;
use crate::model::{ModelSpec, PanelDataset, ParamKind, Params, Reparam};
use crate::posterior::{ConstrainedLikelihood, PriorConfig};
use crate::{Error, Result};

/// Offset used for open bounds (`alpha < 1`, strictly positive parameters).
pub const BOUND_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    /// Stop when the projected gradient's largest component is below this.
    pub gradient_tolerance: f64,
    /// Stop when an iteration lowers the objective by less than this, relative.
    pub function_tolerance: f64,
    pub memory: usize,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            gradient_tolerance: 1e-6,
            function_tolerance: 1e-12,
            memory: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    GradientTolerance,
    FunctionTolerance,
    MaxIterations,
    /// No acceptable step along the projected path; the last iterate is kept.
    LineSearchFailed,
    /// The starting point has no finite objective.
    InfeasibleStart,
}

impl Status {
    pub fn converged(self) -> bool {
        matches!(self, Status::GradientTolerance | Status::FunctionTolerance)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    /// Objective after every accepted iteration, starting with the initial value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub status: Status,
}

fn project(x: f64, lo: f64, hi: f64) -> f64 {
    x.max(lo).min(hi)
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    x.iter()
        .zip(g)
        .zip(lower.iter().zip(upper))
        .map(|((&xi, &gi), (&lo, &hi))| (project(xi - gi, lo, hi) - xi).abs())
        .fold(0.0, f64::max)
}

/// Minimises `f` over the box `[lower, upper]`. `f` writes the gradient and
/// returns the value; `+inf` or `NaN` marks points to avoid.
pub fn minimize_box<F>(
    mut f: F,
    x0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &MinimizeOptions,
) -> Minimum
where
    F: FnMut(&[f64], &mut [f64]) -> f64,
{
    let d = x0.len();
    let mut x: Vec<f64> = (0..d).map(|i| project(x0[i], lower[i], upper[i])).collect();
    let mut g = vec![0.0; d];
    let mut fx = f(&x, &mut g);
    if !fx.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Minimum {
            x,
            value: fx,
            trace: vec![fx],
            iterations: 0,
            projected_gradient: f64::INFINITY,
            status: Status::InfeasibleStart,
        };
    }
    let mut trace = vec![fx];
    let mut memory: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut free = vec![true; d];
    let mut dir = vec![0.0; d];
    let mut trial = vec![0.0; d];
    let mut g_trial = vec![0.0; d];
    let mut status = Status::MaxIterations;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg <= opts.gradient_tolerance {
            status = Status::GradientTolerance;
            break;
        }
        for i in 0..d {
            let pinned_low = x[i] <= lower[i] && g[i] > 0.0;
            let pinned_high = x[i] >= upper[i] && g[i] < 0.0;
            free[i] = lower[i] < upper[i] && !pinned_low && !pinned_high;
        }

        let mut accepted = false;
        for attempt in 0..2 {
            if attempt == 1 {
                if memory.is_empty() {
                    break;
                }
                memory.clear();
            }
            two_loop(&g, &free, &memory, &mut dir);
            let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                memory.clear();
                two_loop(&g, &free, &memory, &mut dir);
                slope = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
                if !(slope < 0.0) {
                    break;
                }
            }
            // Unit step for quasi-Newton directions; a scaled one for steepest descent.
            let mut t = if memory.is_empty() {
                1.0 / dir.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0)
            } else {
                1.0
            };
            for _ in 0..60 {
                for i in 0..d {
                    trial[i] = project(x[i] + t * dir[i], lower[i], upper[i]);
                }
                let decrease: f64 = (0..d).map(|i| g[i] * (trial[i] - x[i])).sum();
                let ft = f(&trial, &mut g_trial);
                if ft.is_finite()
                    && g_trial.iter().all(|v| v.is_finite())
                    && ft <= fx + 1e-4 * decrease
                    && decrease <= 0.0
                {
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if accepted {
                break;
            }
        }
        if !accepted {
            status = Status::LineSearchFailed;
            break;
        }

        let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|v| v * v).sum();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        if sy > 1e-10 * libm::sqrt(ss * yy) {
            if memory.len() == opts.memory.max(1) {
                memory.pop_front();
            }
            memory.push_back((s, y, 1.0 / sy));
        }
        let previous = fx;
        x.copy_from_slice(&trial);
        g.copy_from_slice(&g_trial);
        fx = f(&x, &mut g);
        trace.push(fx);
        iterations += 1;
        if previous - fx <= opts.function_tolerance * (1.0 + fx.abs()) {
            status = Status::FunctionTolerance;
            break;
        }
    }
    let projected_gradient = projected_gradient_norm(&x, &g, lower, upper);
    if status == Status::MaxIterations && projected_gradient <= opts.gradient_tolerance {
        status = Status::GradientTolerance;
    }
    Minimum {
        x,
        value: fx,
        trace,
        iterations,
        projected_gradient,
        status,
    }
}

/// L-BFGS two-loop recursion restricted to the free coordinates; writes
/// the search direction `-H g` (zero on pinned coordinates).
fn two_loop(
    g: &[f64],
    free: &[bool],
    memory: &VecDeque<(Vec<f64>, Vec<f64>, f64)>,
    dir: &mut [f64],
) {
    let masked = |v: &[f64], w: &[f64]| -> f64 {
        (0..v.len()).filter(|&i| free[i]).map(|i| v[i] * w[i]).sum()
    };
    for i in 0..g.len() {
        dir[i] = if free[i] { g[i] } else { 0.0 };
    }
    let mut alphas = Vec::with_capacity(memory.len());
    let mut usable = Vec::with_capacity(memory.len());
    for (s, y, _) in memory.iter().rev() {
        let sy = masked(s, y);
        if sy <= 0.0 {
            continue;
        }
        let a = masked(s, dir) / sy;
        for i in 0..g.len() {
            if free[i] {
                dir[i] -= a * y[i];
            }
        }
        alphas.push(a);
        usable.push((s, y, sy));
    }
    // Initial Hessian scaling from the most recent pair.
    if let Some((_, y, sy)) = usable.first() {
        let gamma = sy / masked(y, y);
        dir.iter_mut().for_each(|v| *v *= gamma);
    }
    for ((s, y, sy), a) in usable.iter().rev().zip(alphas.iter().rev()) {
        let b = masked(y, dir) / sy;
        for i in 0..g.len() {
            if free[i] {
                dir[i] += (a - b) * s[i];
            }
        }
    }
    dir.iter_mut().for_each(|v| *v = -*v);
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MleConfig {
    pub restarts: usize,
    pub options: MinimizeOptions,
    pub seed: u64,
    /// Coordinates held at a value, by flat parameter name.
    pub fixed: Vec<(String, f64)>,
}

impl Default for MleConfig {
    fn default() -> Self {
        Self {
            restarts: 20,
            options: MinimizeOptions::default(),
            seed: 0,
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartTrace {
    pub index: usize,
    pub start: Vec<f64>,
    /// Log-likelihood after every accepted iteration (nondecreasing).
    pub log_likelihood_trace: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub projected_gradient: f64,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    pub names: Vec<String>,
    pub estimate: Vec<f64>,
    pub params: Params,
    pub log_likelihood: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
}

/// Box bounds for the optimiser, derived from the parameter layout.
pub fn optimizer_bounds(spec: &ModelSpec) -> (Vec<f64>, Vec<f64>) {
    spec.layout()
        .entries()
        .iter()
        .map(|e| {
            let lo = if e.strict_lower {
                e.lower + BOUND_EPSILON
            } else {
                e.lower
            };
            let hi = if e.upper.is_finite() {
                e.upper - BOUND_EPSILON
            } else {
                e.upper
            };
            (lo, hi)
        })
        .unzip()
}

/// Maximises the constrained log-likelihood from `config.restarts` random
/// starts and keeps the best (ties go to the earliest restart).
pub fn fit_mle(data: &PanelDataset, spec: &ModelSpec, config: &MleConfig) -> Result<MleResult> {
    if config.restarts == 0 {
        return Err(Error::Config("at least one restart is required".into()));
    }
    spec.validate()?;
    let mut lik = ConstrainedLikelihood::new(data, spec)?;
    let layout = lik.layout().clone();
    let names = layout.names();
    let (mut lower, mut upper) = optimizer_bounds(spec);
    for (name, value) in &config.fixed {
        let idx = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Config(format!("cannot fix unknown parameter {name}")))?;
        if !layout.entries()[idx].is_feasible(*value) {
            return Err(Error::Config(format!(
                "fixed value {value} for {name} violates its constraint"
            )));
        }
        lower[idx] = *value;
        upper[idx] = *value;
    }

    // Starting ranges: the box intersected with prior centre ± 2 spread.
    let priors = PriorConfig::default();
    let ranges: Vec<(f64, f64)> = layout
        .entries()
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let prior = priors
                .for_param(e.kind, spec)
                .unwrap_or(priors.constrained_coefficient);
            let (c, s) = prior.centre_spread();
            let (a, b) = match e.reparam {
                Reparam::Logit => (logistic(c - 2.0 * s), logistic(c + 2.0 * s)),
                _ => (c - 2.0 * s, c + 2.0 * s),
            };
            let lo = a.max(lower[i]);
            let hi = b.min(upper[i]);
            if lo <= hi {
                (lo, hi)
            } else {
                (lower[i], lower[i])
            }
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut objective = |x: &[f64], g: &mut [f64]| -> f64 {
        let v = lik.evaluate(x, g);
        g.iter_mut().for_each(|gi| *gi = -*gi);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };

    let mut restarts = Vec::with_capacity(config.restarts);
    let mut best: Option<(usize, Vec<f64>, f64)> = None;
    for index in 0..config.restarts {
        let start: Vec<f64> = ranges
            .iter()
            .zip(layout.entries())
            .map(|(&(lo, hi), e)| {
                let u: f64 = rng.random();
                let v = lo + (hi - lo) * u;
                if matches!(e.kind, ParamKind::Alpha(_)) {
                    v.min(1.0 - BOUND_EPSILON)
                } else {
                    v
                }
            })
            .collect();
        let start: Vec<f64> = start
            .iter()
            .enumerate()
            .map(|(i, &v)| if lower[i] == upper[i] { lower[i] } else { v })
            .collect();
        let min = minimize_box(&mut objective, &start, &lower, &upper, &config.options);
        let ll = -min.value;
        restarts.push(RestartTrace {
            index,
            start,
            log_likelihood_trace: min.trace.iter().map(|v| -v).collect(),
            log_likelihood: ll,
            iterations: min.iterations,
            projected_gradient: min.projected_gradient,
            status: min.status,
        });
        let usable = ll.is_finite()
            && !(min.status == Status::LineSearchFailed && min.iterations == 0)
            && min.status != Status::InfeasibleStart;
        if usable && best.as_ref().is_none_or(|(_, _, b)| ll > *b) {
            best = Some((index, min.x, ll));
        }
    }

    let Some((best_restart, estimate, log_likelihood)) = best else {
        let summary: Vec<String> = restarts
            .iter()
            .map(|r| format!("restart {}: {:?}", r.index, r.status))
            .collect();
        return Err(Error::Optimization(format!(
            "every restart failed before its first step ({})",
            summary.join(", ")
        )));
    };
    let params = Params::unpack(&estimate, spec)?;
    Ok(MleResult {
        names,
        estimate,
        params,
        log_likelihood,
        best_restart,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::names;
    use crate::simulate::{generate, ScenarioConfig};
    use alloc::string::ToString;

    #[test]
    fn rosenbrock_in_a_box() {
        let rosen = |x: &[f64], g: &mut [f64]| {
            g[0] = -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]);
            g[1] = 200.0 * (x[1] - x[0] * x[0]);
            (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
        };
        let opts = MinimizeOptions {
            gradient_tolerance: 1e-9,
            function_tolerance: 0.0,
            ..Default::default()
        };
        let free = minimize_box(rosen, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &opts);
        assert!(
            (free.x[0] - 1.0).abs() < 1e-6 && (free.x[1] - 1.0).abs() < 1e-6,
            "{free:?}"
        );
        // With x0 <= 0.5 the minimum sits on the bound.
        let boxed = minimize_box(rosen, &[-1.2, 1.0], &[-5.0, -5.0], &[0.5, 5.0], &opts);
        assert!(
            (boxed.x[0] - 0.5).abs() < 1e-12 && (boxed.x[1] - 0.25).abs() < 1e-6,
            "{boxed:?}"
        );
        for t in [&free.trace, &boxed.trace] {
            assert!(t.windows(2).all(|w| w[1] <= w[0]));
        }
    }

    #[test]
    fn iterates_stay_in_the_box() {
        let lower = [0.0, 1.0];
        let upper = [2.0, 3.0];
        let mut seen_outside = false;
        minimize_box(
            |x: &[f64], g: &mut [f64]| {
                seen_outside |= x[0] < 0.0 || x[0] > 2.0 || x[1] < 1.0 || x[1] > 3.0;
                g[0] = 2.0 * (x[0] + 4.0);
                g[1] = 2.0 * (x[1] - 10.0);
                (x[0] + 4.0).powi(2) + (x[1] - 10.0).powi(2)
            },
            &[1.0, 2.0],
            &lower,
            &upper,
            &MinimizeOptions::default(),
        );
        assert!(!seen_outside);
    }

    fn linear_panel(noise: bool) -> (PanelDataset, ModelSpec, Vec<f64>) {
        let w = 60;
        let mut s = 17u64;
        let mut u = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let x: Vec<f64> = (0..w).map(|_| u()).collect();
        let z: Vec<f64> = (0..2 * w)
            .map(|t| if t < w { 1.0 } else { 2.0 * u() })
            .collect();
        let y: Vec<f64> = (0..w)
            .map(|t| 1.5 + 0.7 * z[w + t] + if noise { 0.3 * (u() - 0.5) } else { 0.0 })
            .collect();
        let data = PanelDataset::new(
            names("r", 1),
            names("x", 1),
            names("z", 2),
            w,
            y.clone(),
            x,
            z.clone(),
        )
        .unwrap();
        let spec = ModelSpec::new(1, 2, 1, 1).all_constrained();
        // Normal-equations oracle for y ~ 1 + z2.
        let (mut sz, mut szz, mut sy, mut szy) = (0.0, 0.0, 0.0, 0.0);
        for t in 0..w {
            let zt = z[w + t];
            sz += zt;
            szz += zt * zt;
            sy += y[t];
            szy += zt * y[t];
        }
        let n = w as f64;
        let det = n * szz - sz * sz;
        let b0 = (szz * sy - sz * szy) / det;
        let b1 = (n * szy - sz * sy) / det;
        (data, spec, vec![b0, b1])
    }

    fn fixed_media(sigma2: Option<f64>) -> Vec<(String, f64)> {
        let mut f = vec![
            ("alpha[1]".to_string(), 0.5),
            ("k[1]".to_string(), 1.0),
            ("lambda[1]".to_string(), 1.0),
            ("beta[1]".to_string(), 0.0),
        ];
        if let Some(s) = sigma2 {
            f.push(("sigma2".to_string(), s));
        }
        f
    }

    #[test]
    fn linear_model_matches_least_squares() {
        let (data, spec, oracle) = linear_panel(false);
        let config = MleConfig {
            restarts: 3,
            fixed: fixed_media(Some(1.0)),
            ..Default::default()
        };
        let fit = fit_mle(&data, &spec, &config).unwrap();
        assert!(
            (fit.params.gamma[0] - oracle[0]).abs() < 1e-6,
            "{:?} vs {oracle:?}",
            fit.params.gamma
        );
        assert!((fit.params.gamma[1] - oracle[1]).abs() < 1e-6);

        let (data, spec, oracle) = linear_panel(true);
        let fit = fit_mle(
            &data,
            &spec,
            &MleConfig {
                restarts: 3,
                fixed: fixed_media(None),
                ..Default::default()
            },
        )
        .unwrap();
        assert!((fit.params.gamma[0] - oracle[0]).abs() < 1e-6);
        assert!((fit.params.gamma[1] - oracle[1]).abs() < 1e-6);
        // sigma2 at the mean squared residual.
        let rss: f64 = (0..data.weeks())
            .map(|t| (data.y(0)[t] - oracle[0] - oracle[1] * data.z(0, 1)[t]).powi(2))
            .sum();
        assert!((fit.params.sigma2 - rss / data.weeks() as f64).abs() < 1e-6);
    }

    #[test]
    fn traces_never_decrease_and_best_is_the_maximum() {
        let cfg = ScenarioConfig::preset(1, 4).unwrap();
        let (data, _) = generate(&cfg).unwrap();
        let fit = fit_mle(
            &data,
            &cfg.spec(),
            &MleConfig {
                restarts: 4,
                ..Default::default()
            },
        )
        .unwrap();
        for r in &fit.restarts {
            assert!(
                r.log_likelihood_trace.windows(2).all(|w| w[1] >= w[0]),
                "restart {}",
                r.index
            );
        }
        let max = fit
            .restarts
            .iter()
            .map(|r| r.log_likelihood)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(fit.log_likelihood, max);
        fit.params.check_feasible(&cfg.spec()).unwrap();
        let again = fit_mle(
            &data,
            &cfg.spec(),
            &MleConfig {
                restarts: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fit, again);
    }

    #[test]
    fn bad_configs() {
        let (data, spec, _) = linear_panel(false);
        assert!(fit_mle(
            &data,
            &spec,
            &MleConfig {
                restarts: 0,
                ..Default::default()
            }
        )
        .is_err());
        let unknown = MleConfig {
            fixed: vec![("nope".into(), 1.0)],
            ..Default::default()
        };
        assert!(matches!(
            fit_mle(&data, &spec, &unknown),
            Err(Error::Config(_))
        ));
        let infeasible = MleConfig {
            fixed: vec![("sigma2".into(), -1.0)],
            ..Default::default()
        };
        assert!(matches!(
            fit_mle(&data, &spec, &infeasible),
            Err(Error::Config(_))
        ));
    }
}
