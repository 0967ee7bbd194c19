//! The two-stage ad hoc procedure: pick each decay rate from a grid by its
//! correlation with the residuals of a nuisance-only regression, then run
//! an unconstrained OLS on the adstocked media and the nuisance columns.
//!
//! Saturation is not modelled. With several regions the panel is pooled
//! and each region gets its own intercept.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::linalg::least_squares;
use crate::math::sqrt;
use crate::model::{ModelSpec, PanelDataset};
use crate::transforms::adstock_into;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdhocConfig {
    pub alpha_grid: Vec<f64>,
    /// Carryover window; the model spec's window when absent.
    pub ell: Option<usize>,
}

impl Default for AdhocConfig {
    fn default() -> Self {
        Self {
            alpha_grid: (1..=9).map(|i| i as f64 / 10.0).collect(),
            ell: None,
        }
    }
}

impl AdhocConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_grid.is_empty() {
            return Err(Error::Config("the decay-rate grid is empty".into()));
        }
        if let Some(a) = self.alpha_grid.iter().find(|a| !(**a >= 0.0 && **a < 1.0)) {
            return Err(Error::Config(format!(
                "grid decay rate {a} is outside [0, 1)"
            )));
        }
        if self.ell == Some(0) {
            return Err(Error::Config("carryover window must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdhocResult {
    /// Chosen decay rate per media variable.
    pub alpha: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// `correlations[i][a]`: media `i` against grid value `a`.
    pub correlations: Vec<Vec<f64>>,
    /// Final regression: media first, then nuisance columns, then intercepts.
    pub coefficient_names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Coefficients that break a sign constraint, by name.
    pub sign_violations: Vec<String>,
    /// Regions were pooled with region-specific intercepts.
    pub pooled: bool,
    pub residual_variance: f64,
}

impl AdhocResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.coefficient_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.coefficients[i])
    }
}

/// Pearson correlation; `NaN` when either series is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    sab / sqrt(saa * sbb)
}

pub fn fit_adhoc(
    data: &PanelDataset,
    spec: &ModelSpec,
    config: &AdhocConfig,
) -> Result<AdhocResult> {
    config.validate()?;
    spec.validate()?;
    let ell = config.ell.unwrap_or(spec.ell);
    let spec = ModelSpec {
        ell,
        ..spec.clone()
    };
    spec.check_data(data)?;
    let (g, m, n, w) = (data.g(), data.m(), data.n(), data.weeks());
    let pooled = g > 1;

    let stack =
        |series: &dyn Fn(usize) -> Vec<f64>| -> Vec<f64> { (0..g).flat_map(series).collect() };
    let y = stack(&|r| data.y(r)[ell - 1..].to_vec());

    // Nuisance design. Constant columns become the intercept (one, or one per region).
    let mut nuisance: Vec<Vec<f64>> = Vec::new();
    let mut nuisance_names: Vec<String> = Vec::new();
    let mut constant_constrained = false;
    let mut has_constant = false;
    for j in 0..n {
        let col = stack(&|r| data.z(r, j)[ell - 1..].to_vec());
        let constant = col.iter().all(|v| *v == col[0]) && col[0] != 0.0;
        if constant {
            constant_constrained |= spec.gamma_constrained(j);
            if pooled || has_constant {
                has_constant = true;
                continue;
            }
            has_constant = true;
        }
        nuisance.push(col);
        nuisance_names.push(data.nuisance_names()[j].clone());
    }
    let mut intercept_names = Vec::new();
    if pooled {
        let len = w + 1 - ell;
        for r in 0..g {
            nuisance.push(
                (0..g * len)
                    .map(|row| if row / len == r { 1.0 } else { 0.0 })
                    .collect(),
            );
            intercept_names.push(format!("intercept[{}]", data.regions()[r]));
        }
    } else if !has_constant {
        nuisance.push(alloc::vec![1.0; y.len()]);
        intercept_names.push(String::from("intercept"));
    }
    let mut all_nuisance_names = nuisance_names.clone();
    all_nuisance_names.extend(intercept_names.iter().cloned());

    let step1 = least_squares(&nuisance, &all_nuisance_names, &y)?;

    let mut buf = Vec::new();
    let mut adstocked = |i: usize, alpha: f64| -> Vec<f64> {
        (0..g)
            .flat_map(|r| {
                adstock_into(data.x(r, i), alpha, ell, &mut buf);
                buf.clone()
            })
            .collect()
    };
    let mut chosen = Vec::with_capacity(m);
    let mut correlations = Vec::with_capacity(m);
    let mut media_cols = Vec::with_capacity(m);
    for i in 0..m {
        let row: Vec<f64> = config
            .alpha_grid
            .iter()
            .map(|&a| pearson(&adstocked(i, a), &step1.residuals))
            .collect();
        let mut best: Option<usize> = None;
        for (idx, &r) in row.iter().enumerate() {
            if r.is_nan() {
                continue;
            }
            best = match best {
                None => Some(idx),
                Some(b)
                    if r > row[b]
                        || (r == row[b] && config.alpha_grid[idx] < config.alpha_grid[b]) =>
                {
                    Some(idx)
                }
                keep => keep,
            };
        }
        let Some(best) = best else {
            return Err(Error::Singular {
                columns: alloc::vec![data.media_names()[i].clone()],
            });
        };
        let alpha = config.alpha_grid[best];
        chosen.push(alpha);
        media_cols.push(adstocked(i, alpha));
        correlations.push(row);
    }

    let mut columns = media_cols;
    columns.extend(nuisance);
    let mut names: Vec<String> = data.media_names().to_vec();
    names.extend(all_nuisance_names);
    let fit = least_squares(&columns, &names, &y)?;

    let mut sign_violations = Vec::new();
    for i in 0..m {
        if spec.beta_constrained(i) && fit.coefficients[i] < 0.0 {
            sign_violations.push(names[i].clone());
        }
    }
    let mut gamma_idx = 0;
    for j in 0..n {
        if let Some(pos) = nuisance_names
            .iter()
            .position(|nm| *nm == data.nuisance_names()[j])
        {
            let k = m + pos;
            if spec.gamma_constrained(j) && fit.coefficients[k] < 0.0 {
                sign_violations.push(names[k].clone());
            }
            gamma_idx += 1;
        }
    }
    if constant_constrained {
        for k in m + gamma_idx..names.len() {
            if fit.coefficients[k] < 0.0 {
                sign_violations.push(names[k].clone());
            }
        }
    }

    let dof = (y.len() - columns.len()).max(1) as f64;
    let residual_variance = fit.residuals.iter().map(|e| e * e).sum::<f64>() / dof;
    Ok(AdhocResult {
        alpha: chosen,
        alpha_grid: config.alpha_grid.clone(),
        correlations,
        coefficient_names: names,
        coefficients: fit.coefficients,
        sign_violations,
        pooled,
        residual_variance,
    })
}
