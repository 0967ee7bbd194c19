//! Recovery error, posterior summaries, R² and histogram data.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::baseline::AdhocResult;
use crate::hmc::{HmcConfig, SampleChain};
use crate::math::sqrt;
use crate::mle::{MleConfig, MleResult, RestartTrace};
use crate::model::{predict_flat, Effects, ModelSpec, PanelDataset, ParamKind};
use crate::posterior::PriorConfig;
use crate::{Error, Result};

/// Root-mean-square difference between two named parameter vectors.
/// Every truth name must have an estimate with the same name.
pub fn rmse(
    names: &[String],
    estimates: &[f64],
    truth_names: &[String],
    truth: &[f64],
) -> Result<f64> {
    if names.len() != estimates.len() || truth_names.len() != truth.len() {
        return Err(Error::Structure("names and values differ in length".into()));
    }
    if names != truth_names {
        let first = names
            .iter()
            .zip(truth_names)
            .position(|(a, b)| a != b)
            .unwrap_or(names.len().min(truth_names.len()));
        return Err(Error::Structure(format!(
            "estimates and truth are not aligned at position {first} ({:?} vs {:?})",
            names.get(first),
            truth_names.get(first)
        )));
    }
    if truth.is_empty() {
        return Err(Error::Structure("no parameters to compare".into()));
    }
    let sq: f64 = estimates
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(sqrt(sq / truth.len() as f64))
}

/// Flat indices of the parameters reported in recovery tables. In the
/// hierarchical model the intercept's region-level values are reported but
/// its fixed mean and variance are not; everything else is.
pub fn reported_parameters(spec: &ModelSpec, intercept_column: Option<usize>) -> Vec<usize> {
    spec.layout()
        .entries()
        .iter()
        .enumerate()
        .filter(
            |(_, e)| match (spec.hierarchical, intercept_column, e.kind) {
                (true, Some(c), ParamKind::Gamma(j) | ParamKind::Xi2(j)) => j != c,
                _ => true,
            },
        )
        .map(|(i, _)| i)
        .collect()
}

/// [`rmse`] over a subset of flat indices.
pub fn rmse_subset(
    names: &[String],
    estimates: &[f64],
    truth: &[f64],
    indices: &[usize],
) -> Result<f64> {
    let pick = |v: &[f64]| indices.iter().map(|&i| v[i]).collect::<Vec<f64>>();
    let picked: Vec<String> = indices.iter().map(|&i| names[i].clone()).collect();
    if indices
        .iter()
        .any(|&i| i >= names.len() || i >= truth.len() || i >= estimates.len())
    {
        return Err(Error::Structure("parameter index out of range".into()));
    }
    rmse(&picked, &pick(estimates), &picked, &pick(truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub lower: f64,
    pub upper: f64,
    /// The 2.5% quantile is above zero.
    pub significant: bool,
}

/// Linear interpolation between order statistics at position `p·(n-1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = p * (sorted.len() - 1) as f64;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean, sd and central 95% interval per parameter; `draws[d][p]`.
pub fn summarize_chain(names: &[String], draws: &[Vec<f64>]) -> Result<Vec<ParameterSummary>> {
    if draws.is_empty() {
        return Err(Error::Structure("cannot summarise an empty chain".into()));
    }
    if let Some(d) = draws.iter().position(|d| d.len() != names.len()) {
        return Err(Error::Structure(format!(
            "draw {d} has {} values for {} names",
            draws[d].len(),
            names.len()
        )));
    }
    let n = draws.len() as f64;
    Ok(names
        .iter()
        .enumerate()
        .map(|(p, name)| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[p]).collect();
            let mean = col.iter().sum::<f64>() / n;
            let sd = if draws.len() > 1 {
                sqrt(col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0))
            } else {
                0.0
            };
            col.sort_by(f64::total_cmp);
            let (lower, upper) = (quantile(&col, 0.025), quantile(&col, 0.975));
            ParameterSummary {
                name: name.clone(),
                mean,
                sd,
                lower,
                upper,
                significant: lower > 0.0,
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RSquared {
    pub marginal: f64,
    pub conditional: f64,
}

/// Marginal and conditional R² from the fixed-effect variance and the
/// variance components.
pub fn r_squared_from_components(
    fixed_variance: f64,
    random_variance: f64,
    sigma2: f64,
) -> Result<RSquared> {
    if !(fixed_variance >= 0.0 && random_variance >= 0.0 && sigma2 >= 0.0) {
        return Err(Error::UndefinedMetric(
            "variance components must be nonnegative".into(),
        ));
    }
    let total = fixed_variance + random_variance + sigma2;
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::UndefinedMetric("total variance is zero".into()));
    }
    Ok(RSquared {
        marginal: fixed_variance / total,
        conditional: (fixed_variance + random_variance) / total,
    })
}

/// R² of a fitted model at the flat point `estimate`. The fixed-effect
/// variance is the spread of the fixed-effect fitted values over every
/// region and week around their own mean.
pub fn r_squared(estimate: &[f64], data: &PanelDataset, spec: &ModelSpec) -> Result<RSquared> {
    spec.check_data(data)?;
    let layout = spec.layout();
    if estimate.len() != layout.len() {
        return Err(Error::Structure(format!(
            "estimate has {} entries, the model has {}",
            estimate.len(),
            layout.len()
        )));
    }
    if let Some(i) = layout.first_infeasible(estimate) {
        return Err(Error::Domain(format!(
            "{} = {} violates its constraint",
            layout.entries()[i].name,
            estimate[i]
        )));
    }
    let fitted = predict_flat(estimate, &layout, data, spec.ell, Effects::Fixed);
    let all: Vec<f64> = fitted.into_iter().flatten().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let fixed = all.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let random = if spec.hierarchical {
        (0..spec.m).map(|i| estimate[layout.eta2(i)]).sum::<f64>()
            + (0..spec.n).map(|j| estimate[layout.xi2(j)]).sum::<f64>()
    } else {
        0.0
    };
    r_squared_from_components(fixed, random, estimate[layout.sigma2()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over the range of `values`. A constant sample
/// gets a unit-width range centred on the value.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() || bins == 0 {
        return Err(Error::Structure(
            "histogram needs values and at least one bin".into(),
        ));
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, lo + 0.5)
    };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins)
        .map(|b| if b == bins { hi } else { lo + b as f64 * width })
        .collect();
    let mut counts = vec![0; bins];
    for v in values {
        let b = (((v - lo) / width) as usize).min(bins - 1);
        counts[b] += 1;
    }
    Ok(Histogram { edges, counts })
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Hmc,
    Mle,
    Adhoc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerStats {
    pub draws: usize,
    pub acceptance_rate: f64,
    pub burn_in_acceptance_rate: f64,
    pub step_size: f64,
    pub config: HmcConfig,
    pub priors: PriorConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerStats {
    pub log_likelihood: f64,
    pub best_restart: usize,
    pub restarts: Vec<RestartTrace>,
    pub config: MleConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recovery {
    /// Over the parameters of [`reported_parameters`].
    pub rmse: f64,
    /// Over every flat parameter.
    pub rmse_all: f64,
    pub truth: Vec<f64>,
}

/// Everything a fit produces apart from raw draws. Wall-clock time is
/// deliberately absent so that reports are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub method: Method,
    pub model: ModelSpec,
    pub parameter_names: Vec<String>,
    pub estimates: Vec<f64>,
    pub summary: Option<Vec<ParameterSummary>>,
    pub recovery: Option<Recovery>,
    pub r_squared: Option<RSquared>,
    pub sampler: Option<SamplerStats>,
    pub optimizer: Option<OptimizerStats>,
    pub adhoc: Option<AdhocResult>,
}

/// Index of the first all-ones nuisance column, if any.
pub fn intercept_column(data: &PanelDataset) -> Option<usize> {
    (0..data.n()).find(|&j| (0..data.g()).all(|r| data.z(r, j).iter().all(|&v| v == 1.0)))
}

fn recovery(
    names: &[String],
    estimates: &[f64],
    truth: Option<&[f64]>,
    data: &PanelDataset,
    spec: &ModelSpec,
) -> Result<Option<Recovery>> {
    let Some(truth) = truth else { return Ok(None) };
    let reported = reported_parameters(spec, intercept_column(data));
    Ok(Some(Recovery {
        rmse: rmse_subset(names, estimates, truth, &reported)?,
        rmse_all: rmse(names, estimates, names, truth)?,
        truth: truth.to_vec(),
    }))
}

impl FitReport {
    /// Posterior-mean report for a chain; `truth` is a flat vector in layout order.
    pub fn from_chain(
        chain: &SampleChain,
        data: &PanelDataset,
        spec: &ModelSpec,
        priors: &PriorConfig,
        truth: Option<&[f64]>,
    ) -> Result<Self> {
        let summary = summarize_chain(&chain.names, &chain.draws)?;
        let estimates: Vec<f64> = summary.iter().map(|s| s.mean).collect();
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: Method::Hmc,
            model: spec.clone(),
            recovery: recovery(&chain.names, &estimates, truth, data, spec)?,
            r_squared: Some(r_squared(&estimates, data, spec)?),
            parameter_names: chain.names.clone(),
            estimates,
            summary: Some(summary),
            sampler: Some(SamplerStats {
                draws: chain.draws.len(),
                acceptance_rate: chain.acceptance_rate,
                burn_in_acceptance_rate: chain.burn_in_acceptance_rate,
                step_size: chain.step_size,
                config: chain.config.clone(),
                priors: priors.clone(),
            }),
            optimizer: None,
            adhoc: None,
        })
    }

    pub fn from_mle(
        fit: &MleResult,
        config: &MleConfig,
        data: &PanelDataset,
        spec: &ModelSpec,
        truth: Option<&[f64]>,
    ) -> Result<Self> {
        Ok(Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: Method::Mle,
            model: spec.clone(),
            recovery: recovery(&fit.names, &fit.estimate, truth, data, spec)?,
            r_squared: Some(r_squared(&fit.estimate, data, spec)?),
            parameter_names: fit.names.clone(),
            estimates: fit.estimate.clone(),
            summary: None,
            sampler: None,
            optimizer: Some(OptimizerStats {
                log_likelihood: fit.log_likelihood,
                best_restart: fit.best_restart,
                restarts: fit.restarts.clone(),
                config: config.clone(),
            }),
            adhoc: None,
        })
    }

    /// The ad hoc fit has its own parameterisation, so no recovery or R².
    pub fn from_adhoc(fit: &AdhocResult, spec: &ModelSpec) -> Self {
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            method: Method::Adhoc,
            model: spec.clone(),
            parameter_names: fit.coefficient_names.clone(),
            estimates: fit.coefficients.clone(),
            summary: None,
            recovery: None,
            r_squared: None,
            sampler: None,
            optimizer: None,
            adhoc: Some(fit.clone()),
        }
    }
}

/// Effective sample size from the initial positive sequence of
/// autocorrelation pair sums.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n as f64;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = xs.iter().map(|x| x - mean).collect();
    let c0 = dev.iter().map(|d| d * d).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return n as f64;
    }
    let rho = |lag: usize| {
        dev[..n - lag]
            .iter()
            .zip(&dev[lag..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / (n as f64 * c0)
    };
    let mut tau = -1.0;
    let mut lag = 0;
    while lag + 1 < n {
        let pair = rho(lag) + rho(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (n as f64 / tau.max(1.0 / n as f64)).min(n as f64 * libm::log10(n as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::tests::names;
    use crate::simulate::{generate, ScenarioConfig};
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn rmse_examples() {
        let nm = names("p", 11);
        let truth = vec![1.0; 11];
        assert_eq!(rmse(&nm, &truth, &nm, &truth).unwrap(), 0.0);
        let mut est = truth.clone();
        est[3] += 0.5;
        let r = rmse(&nm, &est, &nm, &truth).unwrap();
        assert!((r - libm::sqrt(0.25 / 11.0)).abs() < 1e-15);
        assert!((r - 0.1508).abs() < 1e-4);
        let other = names("q", 11);
        assert!(matches!(
            rmse(&nm, &est, &other, &truth),
            Err(Error::Structure(_))
        ));
    }

    #[test]
    fn reported_set_drops_intercept_hyperparameters() {
        let spec = ScenarioConfig::preset(5, 0).unwrap().spec();
        let idx = reported_parameters(&spec, Some(0));
        let layout = spec.layout();
        let picked: Vec<String> = idx
            .iter()
            .map(|&i| layout.entries()[i].name.clone())
            .collect();
        assert_eq!(picked.len(), 21);
        assert!(!picked.contains(&"gamma[1]".into()) && !picked.contains(&"xi2[1]".into()));
        assert!(picked.contains(&"gamma[1,2]".into()));
        let base = ScenarioConfig::preset(1, 0).unwrap().spec();
        assert_eq!(reported_parameters(&base, Some(0)).len(), 11);
    }

    #[test]
    fn constant_chain() {
        let s = summarize_chain(&names("c", 1), &vec![vec![2.5]; 40]).unwrap();
        assert_eq!(
            (s[0].mean, s[0].lower, s[0].upper, s[0].sd),
            (2.5, 2.5, 2.5, 0.0)
        );
        assert!(s[0].significant);
        assert!(summarize_chain(&names("c", 1), &[]).is_err());
    }

    #[test]
    fn normal_quantiles() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let draws: Vec<Vec<f64>> = (0..500)
            .map(|_| vec![StandardNormal.sample(&mut rng)])
            .collect();
        let s = &summarize_chain(&names("z", 1), &draws).unwrap()[0];
        // The 2.5% order statistic of 500 normals has sd about 0.12.
        assert!(
            (s.lower + 1.96).abs() < 0.36 && (s.upper - 1.96).abs() < 0.36,
            "{s:?}"
        );
        assert!(!s.significant && s.lower < s.upper);
    }

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert!((quantile(&v, 0.1) - 0.4).abs() < 1e-15);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn mean_minimises_squared_error() {
        let draws: Vec<Vec<f64>> = (0..50).map(|i| vec![libm::sin(i as f64) + 0.3]).collect();
        let m = summarize_chain(&names("a", 1), &draws).unwrap()[0].mean;
        let loss = |c: f64| draws.iter().map(|d| (d[0] - c) * (d[0] - c)).sum::<f64>();
        assert!(loss(m) <= loss(m + 1e-4) && loss(m) <= loss(m - 1e-4));
    }

    #[test]
    fn r_squared_examples() {
        let r = r_squared_from_components(1.0, 0.5, 0.5).unwrap();
        assert_eq!((r.marginal, r.conditional), (0.5, 0.75));
        let r = r_squared_from_components(2.0, 0.0, 1.0).unwrap();
        assert_eq!(r.marginal, r.conditional);
        assert!(matches!(
            r_squared_from_components(0.0, 0.0, 0.0),
            Err(Error::UndefinedMetric(_))
        ));
    }

    #[test]
    fn r_squared_on_simulated_truth() {
        for case in [1, 5] {
            let cfg = ScenarioConfig::preset(case, 2).unwrap();
            let (data, truth) = generate(&cfg).unwrap();
            let spec = cfg.spec();
            let r = r_squared(&truth.pack(&spec).unwrap(), &data, &spec).unwrap();
            assert!(0.0 <= r.marginal && r.marginal <= r.conditional && r.conditional <= 1.0);
            assert_eq!(r.marginal == r.conditional, case == 1);
        }
    }

    #[test]
    fn histogram_counts_everything() {
        let v: Vec<f64> = (0..100).map(|i| i as f64 / 7.0).collect();
        let h = histogram(&v, 30).unwrap();
        assert_eq!(h.counts.iter().sum::<usize>(), 100);
        assert_eq!(h.edges.len(), 31);
        assert_eq!(*h.edges.last().unwrap(), 99.0 / 7.0);
        let c = histogram(&[3.0; 5], 4).unwrap();
        assert_eq!(c.counts.iter().sum::<usize>(), 5);
    }

    #[test]
    fn ess_of_independent_and_sticky_chains() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let iid: Vec<f64> = (0..2000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let ess = effective_sample_size(&iid);
        assert!(ess > 1500.0, "{ess}");
        let mut ar = vec![0.0; 2000];
        for t in 1..2000 {
            ar[t] = 0.9 * ar[t - 1] + iid[t];
        }
        // AR(1) with phi = 0.9: ESS about n (1 - phi) / (1 + phi).
        let ess = effective_sample_size(&ar);
        assert!((50.0..250.0).contains(&ess), "{ess}");
    }
}
