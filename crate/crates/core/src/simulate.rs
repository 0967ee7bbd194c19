//! Synthetic panels with known parameters.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math::sqrt;
use crate::model::{ModelSpec, PanelDataset, Params};
use crate::transforms::weibull_partials;
use crate::{Error, Result};

/// Distribution of simulated covariates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum CovariateLaw {
    Uniform { low: f64, high: f64 },
}

impl CovariateLaw {
    fn validate(&self, nonnegative: bool) -> Result<()> {
        match *self {
            CovariateLaw::Uniform { low, high } => {
                if !(low.is_finite() && high.is_finite() && low < high) {
                    return Err(Error::Config(format!(
                        "uniform covariate law needs low < high, got [{low}, {high}]"
                    )));
                }
                if nonnegative && low < 0.0 {
                    return Err(Error::Config(
                        "media covariates must be drawn nonnegative".into(),
                    ));
                }
                Ok(())
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            CovariateLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
        }
    }
}

/// A simulation scenario. `n` counts every nuisance column, including the
/// intercept when `intercept` is set (it becomes column 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub case: Option<u8>,
    pub m: usize,
    pub n: usize,
    pub w: usize,
    pub g: usize,
    pub ell: usize,
    pub hierarchical: bool,
    pub intercept: bool,
    pub truth: Params,
    pub media_law: CovariateLaw,
    pub nuisance_law: CovariateLaw,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Cases 1-4 are base-model panels with one region; Cases 5-8 repeat
    /// the same sizes with two regions and the hierarchical model.
    pub fn preset(case: u8, seed: u64) -> Result<Self> {
        let (m, w) = match case {
            1 | 5 => (2, 52),
            2 | 6 => (2, 104),
            3 | 7 => (4, 104),
            4 | 8 => (4, 208),
            _ => {
                return Err(Error::Config(format!(
                    "unknown simulation case {case}; expected 1-8"
                )))
            }
        };
        let hierarchical = case >= 5;
        let (n, g) = (2, if hierarchical { 2 } else { 1 });
        let truth = Params {
            alpha: vec![0.5; m],
            k: vec![0.2; m],
            lambda: vec![0.8; m],
            beta: vec![1.0; m],
            gamma: vec![1.0; n],
            eta2: if hierarchical {
                vec![0.25; m]
            } else {
                Vec::new()
            },
            xi2: if hierarchical {
                vec![0.25; n]
            } else {
                Vec::new()
            },
            beta_region: if hierarchical {
                vec![vec![1.0; g]; m]
            } else {
                Vec::new()
            },
            gamma_region: if hierarchical {
                vec![vec![1.0; g]; n]
            } else {
                Vec::new()
            },
            sigma2: 0.25,
        };
        Ok(Self {
            case: Some(case),
            m,
            n,
            w,
            g,
            ell: 5,
            hierarchical,
            intercept: true,
            truth,
            media_law: CovariateLaw::Uniform {
                low: 0.0,
                high: 2.0,
            },
            nuisance_law: CovariateLaw::Uniform {
                low: 0.0,
                high: 2.0,
            },
            seed,
        })
    }

    /// Model spec matching the scenario, every coefficient sign-constrained.
    pub fn spec(&self) -> ModelSpec {
        ModelSpec::new(self.m, self.n, self.g, self.ell)
            .with_hierarchical(self.hierarchical)
            .all_constrained()
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.spec();
        spec.validate()?;
        if self.w < self.ell {
            return Err(Error::Config(format!(
                "{} weeks cannot hold a carryover window of {}",
                self.w, self.ell
            )));
        }
        if self.intercept && self.n == 0 {
            return Err(Error::Config(
                "an intercept needs at least one nuisance column".into(),
            ));
        }
        self.media_law.validate(true)?;
        self.nuisance_law.validate(false)?;
        // Zero noise is allowed when simulating.
        let mut truth = self.truth.clone();
        truth.sigma2 = if self.truth.sigma2 == 0.0 {
            1.0
        } else {
            self.truth.sigma2
        };
        truth.check_feasible(&spec)
    }
}

/// Draws a panel from the scenario and returns it with the true parameters.
///
/// Weeks before the carryover window is full use the adstock of the weeks
/// available so far; the model only ever looks at weeks `ell..=w`.
pub fn generate(config: &ScenarioConfig) -> Result<(PanelDataset, Params)> {
    config.validate()?;
    let (m, n, g, w) = (config.m, config.n, config.g, config.w);
    let truth = &config.truth;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut x = vec![0.0; g * m * w];
    let mut z = vec![0.0; g * n * w];
    for r in 0..g {
        for i in 0..m {
            for t in 0..w {
                x[(r * m + i) * w + t] = config.media_law.draw(&mut rng);
            }
        }
        for j in 0..n {
            for t in 0..w {
                z[(r * n + j) * w + t] = if config.intercept && j == 0 {
                    1.0
                } else {
                    config.nuisance_law.draw(&mut rng)
                };
            }
        }
    }

    let sd = sqrt(truth.sigma2);
    let mut y = vec![0.0; g * w];
    for r in 0..g {
        for t in 0..w {
            let mut mean = 0.0;
            for i in 0..m {
                let series = &x[(r * m + i) * w..(r * m + i + 1) * w];
                let lags = (t + 1).min(config.ell);
                let mut c = 0.0;
                for tau in (0..lags).rev() {
                    c = c * truth.alpha[i] + series[t - tau];
                }
                let coef = if config.hierarchical {
                    truth.beta_region[i][r]
                } else {
                    truth.beta[i]
                };
                mean += coef * weibull_partials(c, truth.k[i], truth.lambda[i]).value;
            }
            for j in 0..n {
                let coef = if config.hierarchical {
                    truth.gamma_region[j][r]
                } else {
                    truth.gamma[j]
                };
                mean += coef * z[(r * n + j) * w + t];
            }
            let noise: f64 = rng.sample(StandardNormal);
            y[r * w + t] = mean + sd * noise;
        }
    }

    let names = |prefix: &str, count: usize| {
        (1..=count)
            .map(|i| format!("{prefix}{i}"))
            .collect::<Vec<String>>()
    };
    let regions = (1..=g).map(|r| format!("{r}")).collect();
    let data = PanelDataset::new(regions, names("x", m), names("z", n), w, y, x, z)?;
    Ok((data, truth.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::predict;

    #[test]
    fn presets_match_the_study_design() {
        for (case, m, w, g) in [
            (1, 2, 52, 1),
            (2, 2, 104, 1),
            (3, 4, 104, 1),
            (4, 4, 208, 1),
            (5, 2, 52, 2),
            (8, 4, 208, 2),
        ] {
            let cfg = ScenarioConfig::preset(case, 7).unwrap();
            let (data, truth) = generate(&cfg).unwrap();
            assert_eq!((data.m(), data.weeks(), data.g(), data.n()), (m, w, g, 2));
            assert_eq!(truth.sigma2, 0.25);
            assert!(data.z(0, 0).iter().all(|&v| v == 1.0));
            assert_eq!(cfg.spec().hierarchical, g > 1);
        }
        assert!(ScenarioConfig::preset(9, 0).is_err());
    }

    #[test]
    fn zero_noise_reproduces_the_mean() {
        for case in [1, 5] {
            let mut cfg = ScenarioConfig::preset(case, 3).unwrap();
            cfg.truth.sigma2 = 0.0;
            let (data, truth) = generate(&cfg).unwrap();
            let mut feasible = truth.clone();
            feasible.sigma2 = 1.0;
            let fitted = predict(&feasible, &data, &cfg.spec()).unwrap();
            for (r, yhat) in fitted.iter().enumerate() {
                for (t, v) in yhat.iter().enumerate() {
                    assert!((data.y(r)[t + cfg.ell - 1] - v).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn noise_variance_matches_sigma2() {
        let mut cfg = ScenarioConfig::preset(1, 99).unwrap();
        cfg.w = 10_004;
        let (data, truth) = generate(&cfg).unwrap();
        let fitted = predict(&truth, &data, &cfg.spec()).unwrap();
        let resid: Vec<f64> = fitted[0]
            .iter()
            .enumerate()
            .map(|(t, v)| data.y(0)[t + 4] - v)
            .collect();
        let n = resid.len() as f64;
        let mean = resid.iter().sum::<f64>() / n;
        let var = resid.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0);
        assert!((var - 0.25).abs() < 0.05 * 0.25, "{var}");
    }

    #[test]
    fn same_seed_same_panel() {
        let cfg = ScenarioConfig::preset(6, 5).unwrap();
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        let other = ScenarioConfig {
            seed: 6,
            ..cfg.clone()
        };
        assert_ne!(generate(&cfg).unwrap().0, generate(&other).unwrap().0);
    }

    #[test]
    fn media_are_nonnegative_and_laws_are_checked() {
        let (data, _) = generate(&ScenarioConfig::preset(3, 1).unwrap()).unwrap();
        for i in 0..data.m() {
            assert!(data.x(0, i).iter().all(|&v| (0.0..2.0).contains(&v)));
        }
        let mut cfg = ScenarioConfig::preset(1, 1).unwrap();
        cfg.media_law = CovariateLaw::Uniform {
            low: -1.0,
            high: 1.0,
        };
        assert!(generate(&cfg).is_err());
    }
}
