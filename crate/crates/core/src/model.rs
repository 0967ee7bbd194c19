//! Model specification, panel data, and the flat parameter layout shared by
//! the likelihoods, the sampler and the optimizer.
//!
//! # Flat packing order
//!
//! With `m` media variables, `n` nuisance columns and `g` regions the flat
//! vector is laid out as
//!
//! ```text
//! alpha[1..m] k[1..m] lambda[1..m] beta[1..m] gamma[1..n]
//! (hierarchical only) eta2[1..m] xi2[1..n]
//!                     beta[1,1..g] .. beta[m,1..g]
//!                     gamma[1,1..g] .. gamma[n,1..g]
//! sigma2
//! ```
//!
//! Names use one-based indices; `beta[i,r]` is the coefficient of media
//! variable `i` in region `r`.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::transforms::{adstock_into, weibull_partials};
use crate::{Error, Result};

/// Declarative description of the model to fit.
///
/// Index sets are zero-based. An intercept is simply a nuisance column of
/// ones; in the hierarchical model it then receives one coefficient per
/// region like every other column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub m: usize,
    pub n: usize,
    pub g: usize,
    pub ell: usize,
    pub sign_constrained_beta: Vec<usize>,
    pub sign_constrained_gamma: Vec<usize>,
    pub hierarchical: bool,
}

impl ModelSpec {
    /// Unconstrained spec; hierarchical whenever there is more than one region.
    pub fn new(m: usize, n: usize, g: usize, ell: usize) -> Self {
        Self {
            m,
            n,
            g,
            ell,
            sign_constrained_beta: Vec::new(),
            sign_constrained_gamma: Vec::new(),
            hierarchical: g > 1,
        }
    }

    /// Every media and nuisance coefficient constrained nonnegative.
    pub fn all_constrained(mut self) -> Self {
        self.sign_constrained_beta = (0..self.m).collect();
        self.sign_constrained_gamma = (0..self.n).collect();
        self
    }

    pub fn with_hierarchical(mut self, hierarchical: bool) -> Self {
        self.hierarchical = hierarchical;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 {
            return Err(Error::Config(
                "at least one media variable is required".into(),
            ));
        }
        if self.g == 0 {
            return Err(Error::Config("at least one region is required".into()));
        }
        if self.ell == 0 {
            return Err(Error::Config(
                "carryover window must be at least one week".into(),
            ));
        }
        if self.hierarchical && self.g < 2 {
            return Err(Error::Config(
                "the hierarchical model needs at least two regions".into(),
            ));
        }
        if let Some(i) = self.sign_constrained_beta.iter().find(|&&i| i >= self.m) {
            return Err(Error::Config(format!(
                "constrained media index {} out of range",
                i + 1
            )));
        }
        if let Some(j) = self.sign_constrained_gamma.iter().find(|&&j| j >= self.n) {
            return Err(Error::Config(format!(
                "constrained nuisance index {} out of range",
                j + 1
            )));
        }
        Ok(())
    }

    pub fn beta_constrained(&self, i: usize) -> bool {
        self.sign_constrained_beta.contains(&i)
    }

    pub fn gamma_constrained(&self, j: usize) -> bool {
        self.sign_constrained_gamma.contains(&j)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(self)
    }

    pub(crate) fn check_data(&self, data: &PanelDataset) -> Result<()> {
        self.validate()?;
        if data.m() != self.m || data.n() != self.n || data.g() != self.g {
            return Err(Error::Dimension(format!(
                "dataset has m={}, n={}, g={} but the model expects m={}, n={}, g={}",
                data.m(),
                data.n(),
                data.g(),
                self.m,
                self.n,
                self.g
            )));
        }
        if data.weeks() < self.ell {
            return Err(Error::Dimension(format!(
                "{} weeks of data is shorter than the carryover window {}",
                data.weeks(),
                self.ell
            )));
        }
        Ok(())
    }
}

/// Rectangular region × week panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelDataset {
    regions: Vec<String>,
    media_names: Vec<String>,
    nuisance_names: Vec<String>,
    weeks: usize,
    // y[r*w + t], x[(r*m + i)*w + t], z[(r*n + j)*w + t]
    y: Vec<f64>,
    x: Vec<f64>,
    z: Vec<f64>,
}

impl PanelDataset {
    pub fn new(
        regions: Vec<String>,
        media_names: Vec<String>,
        nuisance_names: Vec<String>,
        weeks: usize,
        y: Vec<f64>,
        x: Vec<f64>,
        z: Vec<f64>,
    ) -> Result<Self> {
        let (g, m, n) = (regions.len(), media_names.len(), nuisance_names.len());
        if g == 0 || weeks == 0 {
            return Err(Error::Dimension(
                "panel needs at least one region and one week".into(),
            ));
        }
        if y.len() != g * weeks || x.len() != g * m * weeks || z.len() != g * n * weeks {
            return Err(Error::Dimension(format!(
                "panel arrays do not match {g} regions x {weeks} weeks with {m} media and {n} nuisance columns"
            )));
        }
        for (name, vals) in [("y", &y), ("x", &x), ("z", &z)] {
            if let Some(p) = vals.iter().position(|v| !v.is_finite()) {
                return Err(Error::Domain(format!(
                    "non-finite {name} value at flat position {p}"
                )));
            }
        }
        if let Some(p) = x.iter().position(|&v| v < 0.0) {
            let (r, rest) = (p / (m * weeks), p % (m * weeks));
            return Err(Error::Domain(format!(
                "media activity must be nonnegative: region {}, variable {}, week {} is {}",
                regions[r],
                media_names[rest / weeks],
                rest % weeks + 1,
                x[p]
            )));
        }
        Ok(Self {
            regions,
            media_names,
            nuisance_names,
            weeks,
            y,
            x,
            z,
        })
    }

    pub fn g(&self) -> usize {
        self.regions.len()
    }
    pub fn m(&self) -> usize {
        self.media_names.len()
    }
    pub fn n(&self) -> usize {
        self.nuisance_names.len()
    }
    pub fn weeks(&self) -> usize {
        self.weeks
    }
    pub fn regions(&self) -> &[String] {
        &self.regions
    }
    pub fn media_names(&self) -> &[String] {
        &self.media_names
    }
    pub fn nuisance_names(&self) -> &[String] {
        &self.nuisance_names
    }

    pub fn y(&self, region: usize) -> &[f64] {
        let w = self.weeks;
        &self.y[region * w..(region + 1) * w]
    }

    pub fn x(&self, region: usize, i: usize) -> &[f64] {
        let w = self.weeks;
        let o = (region * self.m() + i) * w;
        &self.x[o..o + w]
    }

    pub fn z(&self, region: usize, j: usize) -> &[f64] {
        let w = self.weeks;
        let o = (region * self.n() + j) * w;
        &self.z[o..o + w]
    }

    /// A new panel made of the listed regions, in that order. Indices may repeat.
    pub fn select_regions(&self, order: &[usize]) -> Result<Self> {
        if let Some(&r) = order.iter().find(|&&r| r >= self.g()) {
            return Err(Error::Dimension(format!("region index {r} out of range")));
        }
        let mut y = Vec::new();
        let mut x = Vec::new();
        let mut z = Vec::new();
        for &r in order {
            y.extend_from_slice(self.y(r));
            for i in 0..self.m() {
                x.extend_from_slice(self.x(r, i));
            }
            for j in 0..self.n() {
                z.extend_from_slice(self.z(r, j));
            }
        }
        let regions = order.iter().map(|&r| self.regions[r].clone()).collect();
        Self::new(
            regions,
            self.media_names.clone(),
            self.nuisance_names.clone(),
            self.weeks,
            y,
            x,
            z,
        )
    }
}

/// How a coordinate is carried by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reparam {
    Identity,
    Logit,
    /// Carried as `ln v`; the density picks up the Jacobian `v`.
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamKind {
    Alpha(usize),
    Shape(usize),
    Scale(usize),
    Beta(usize),
    Gamma(usize),
    Eta2(usize),
    Xi2(usize),
    BetaRegion(usize, usize),
    GammaRegion(usize, usize),
    Sigma2,
}

/// Per-coordinate metadata on the original scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamInfo {
    pub name: String,
    pub kind: ParamKind,
    /// Lower bound, `-inf` when unbounded.
    pub lower: f64,
    /// Whether the lower bound itself is excluded.
    pub strict_lower: bool,
    /// Exclusive upper bound, `+inf` when unbounded.
    pub upper: f64,
    pub reparam: Reparam,
}

impl ParamInfo {
    pub fn is_feasible(&self, v: f64) -> bool {
        if v.is_nan() {
            return false;
        }
        let above = if self.strict_lower {
            v > self.lower
        } else {
            v >= self.lower
        };
        above && v < self.upper
    }
}

/// Flat index arithmetic for one [`ModelSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamLayout {
    pub m: usize,
    pub n: usize,
    pub g: usize,
    pub hierarchical: bool,
    entries: Vec<ParamInfo>,
}

impl ParamLayout {
    fn new(spec: &ModelSpec) -> Self {
        let (m, n, g) = (spec.m, spec.n, spec.g);
        let mut entries = Vec::new();
        let positive = |name: String, kind| ParamInfo {
            name,
            kind,
            lower: 0.0,
            strict_lower: true,
            upper: f64::INFINITY,
            reparam: Reparam::Identity,
        };
        let coef = |name: String, kind, constrained: bool| ParamInfo {
            name,
            kind,
            lower: if constrained { 0.0 } else { f64::NEG_INFINITY },
            strict_lower: false,
            upper: f64::INFINITY,
            reparam: Reparam::Identity,
        };
        for i in 0..m {
            entries.push(ParamInfo {
                name: format!("alpha[{}]", i + 1),
                kind: ParamKind::Alpha(i),
                lower: 0.0,
                strict_lower: false,
                upper: 1.0,
                reparam: Reparam::Logit,
            });
        }
        for i in 0..m {
            entries.push(positive(format!("k[{}]", i + 1), ParamKind::Shape(i)));
        }
        for i in 0..m {
            entries.push(positive(format!("lambda[{}]", i + 1), ParamKind::Scale(i)));
        }
        for i in 0..m {
            entries.push(coef(
                format!("beta[{}]", i + 1),
                ParamKind::Beta(i),
                spec.beta_constrained(i),
            ));
        }
        for j in 0..n {
            entries.push(coef(
                format!("gamma[{}]", j + 1),
                ParamKind::Gamma(j),
                spec.gamma_constrained(j),
            ));
        }
        if spec.hierarchical {
            for i in 0..m {
                entries.push(positive(format!("eta2[{}]", i + 1), ParamKind::Eta2(i)));
            }
            for j in 0..n {
                entries.push(positive(format!("xi2[{}]", j + 1), ParamKind::Xi2(j)));
            }
            for i in 0..m {
                for r in 0..g {
                    entries.push(coef(
                        format!("beta[{},{}]", i + 1, r + 1),
                        ParamKind::BetaRegion(i, r),
                        spec.beta_constrained(i),
                    ));
                }
            }
            for j in 0..n {
                for r in 0..g {
                    entries.push(coef(
                        format!("gamma[{},{}]", j + 1, r + 1),
                        ParamKind::GammaRegion(j, r),
                        spec.gamma_constrained(j),
                    ));
                }
            }
        }
        entries.push(positive("sigma2".to_string(), ParamKind::Sigma2));
        Self {
            m,
            n,
            g,
            hierarchical: spec.hierarchical,
            entries,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Same layout with the saturation shape and scale carried on the log scale.
    pub fn with_log_transforms(mut self) -> Self {
        for e in &mut self.entries {
            if matches!(e.kind, ParamKind::Shape(_) | ParamKind::Scale(_)) {
                e.reparam = Reparam::Log;
            }
        }
        self
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[ParamInfo] {
        &self.entries
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.name.clone()).collect()
    }

    pub fn alpha(&self, i: usize) -> usize {
        i
    }
    pub fn shape(&self, i: usize) -> usize {
        self.m + i
    }
    pub fn scale(&self, i: usize) -> usize {
        2 * self.m + i
    }
    pub fn beta(&self, i: usize) -> usize {
        3 * self.m + i
    }
    pub fn gamma(&self, j: usize) -> usize {
        4 * self.m + j
    }
    pub fn eta2(&self, i: usize) -> usize {
        debug_assert!(self.hierarchical);
        4 * self.m + self.n + i
    }
    pub fn xi2(&self, j: usize) -> usize {
        debug_assert!(self.hierarchical);
        5 * self.m + self.n + j
    }
    pub fn beta_region(&self, i: usize, r: usize) -> usize {
        debug_assert!(self.hierarchical);
        5 * self.m + 2 * self.n + i * self.g + r
    }
    pub fn gamma_region(&self, j: usize, r: usize) -> usize {
        debug_assert!(self.hierarchical);
        5 * self.m + 2 * self.n + self.m * self.g + j * self.g + r
    }
    pub fn sigma2(&self) -> usize {
        self.entries.len() - 1
    }

    /// Index of the media coefficient that multiplies variable `i` in region `r`.
    pub(crate) fn media_coef(&self, i: usize, r: usize) -> usize {
        if self.hierarchical {
            self.beta_region(i, r)
        } else {
            self.beta(i)
        }
    }

    pub(crate) fn nuisance_coef(&self, j: usize, r: usize) -> usize {
        if self.hierarchical {
            self.gamma_region(j, r)
        } else {
            self.gamma(j)
        }
    }

    /// First infeasible coordinate, if any.
    pub fn first_infeasible(&self, flat: &[f64]) -> Option<usize> {
        self.entries
            .iter()
            .zip(flat)
            .position(|(e, &v)| !e.is_feasible(v))
    }
}

/// Structured parameter values. Region-level vectors are empty for the base model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub alpha: Vec<f64>,
    pub k: Vec<f64>,
    pub lambda: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub eta2: Vec<f64>,
    pub xi2: Vec<f64>,
    /// `beta_region[i][r]`
    pub beta_region: Vec<Vec<f64>>,
    /// `gamma_region[j][r]`
    pub gamma_region: Vec<Vec<f64>>,
    pub sigma2: f64,
}

impl Params {
    pub fn pack(&self, spec: &ModelSpec) -> Result<Vec<f64>> {
        let (m, n, g) = (spec.m, spec.n, spec.g);
        let base_ok = self.alpha.len() == m
            && self.k.len() == m
            && self.lambda.len() == m
            && self.beta.len() == m
            && self.gamma.len() == n;
        let hier_ok = if spec.hierarchical {
            self.eta2.len() == m
                && self.xi2.len() == n
                && self.beta_region.len() == m
                && self.gamma_region.len() == n
                && self
                    .beta_region
                    .iter()
                    .chain(&self.gamma_region)
                    .all(|v| v.len() == g)
        } else {
            self.eta2.is_empty()
                && self.xi2.is_empty()
                && self.beta_region.is_empty()
                && self.gamma_region.is_empty()
        };
        if !(base_ok && hier_ok) {
            return Err(Error::Structure(format!(
                "parameter blocks do not match a {} spec with m={m}, n={n}, g={g}",
                if spec.hierarchical {
                    "hierarchical"
                } else {
                    "base"
                }
            )));
        }
        let mut flat = Vec::with_capacity(spec.layout().len());
        for block in [&self.alpha, &self.k, &self.lambda, &self.beta, &self.gamma] {
            flat.extend_from_slice(block);
        }
        if spec.hierarchical {
            flat.extend_from_slice(&self.eta2);
            flat.extend_from_slice(&self.xi2);
            for v in self.beta_region.iter().chain(&self.gamma_region) {
                flat.extend_from_slice(v);
            }
        }
        flat.push(self.sigma2);
        Ok(flat)
    }

    pub fn unpack(flat: &[f64], spec: &ModelSpec) -> Result<Self> {
        let layout = spec.layout();
        if flat.len() != layout.len() {
            return Err(Error::Structure(format!(
                "flat vector has {} entries, the model has {}",
                flat.len(),
                layout.len()
            )));
        }
        let (m, n, g) = (spec.m, spec.n, spec.g);
        let block = |start: usize, len: usize| flat[start..start + len].to_vec();
        let mut p = Params {
            alpha: block(layout.alpha(0), m),
            k: block(layout.shape(0), m),
            lambda: block(layout.scale(0), m),
            beta: block(layout.beta(0), m),
            gamma: block(layout.gamma(0), n),
            eta2: Vec::new(),
            xi2: Vec::new(),
            beta_region: Vec::new(),
            gamma_region: Vec::new(),
            sigma2: flat[layout.sigma2()],
        };
        if spec.hierarchical {
            p.eta2 = block(4 * m + n, m);
            p.xi2 = block(5 * m + n, n);
            p.beta_region = (0..m).map(|i| block(layout.beta_region(i, 0), g)).collect();
            p.gamma_region = (0..n)
                .map(|j| block(layout.gamma_region(j, 0), g))
                .collect();
        }
        Ok(p)
    }

    /// Checks every box and sign constraint.
    pub fn check_feasible(&self, spec: &ModelSpec) -> Result<()> {
        let flat = self.pack(spec)?;
        let layout = spec.layout();
        match layout.first_infeasible(&flat) {
            Some(idx) => Err(Error::Domain(format!(
                "parameter {} = {} violates its constraint",
                layout.entries()[idx].name,
                flat[idx]
            ))),
            None => Ok(()),
        }
    }
}

/// Which coefficients multiply the regressors when predicting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effects {
    /// Region-level coefficients in the hierarchical model, shared ones otherwise.
    Full,
    /// Fixed means only, shared by every region.
    Fixed,
}

/// Fitted values `ŷ[r][t - ell]` for weeks `ell..=w` (no noise term).
pub fn predict(theta: &Params, data: &PanelDataset, spec: &ModelSpec) -> Result<Vec<Vec<f64>>> {
    predict_with(theta, data, spec, Effects::Full)
}

pub fn predict_with(
    theta: &Params,
    data: &PanelDataset,
    spec: &ModelSpec,
    effects: Effects,
) -> Result<Vec<Vec<f64>>> {
    spec.check_data(data)?;
    theta.check_feasible(spec)?;
    let flat = theta.pack(spec)?;
    let layout = spec.layout();
    Ok(predict_flat(&flat, &layout, data, spec.ell, effects))
}

pub(crate) fn predict_flat(
    flat: &[f64],
    layout: &ParamLayout,
    data: &PanelDataset,
    ell: usize,
    effects: Effects,
) -> Vec<Vec<f64>> {
    let fitted_len = data.weeks() + 1 - ell;
    let mut c = Vec::with_capacity(fitted_len);
    (0..data.g())
        .map(|r| {
            let mut yhat = vec![0.0; fitted_len];
            for i in 0..layout.m {
                let coef = match effects {
                    Effects::Full => flat[layout.media_coef(i, r)],
                    Effects::Fixed => flat[layout.beta(i)],
                };
                let (k, lambda) = (flat[layout.shape(i)], flat[layout.scale(i)]);
                adstock_into(data.x(r, i), flat[layout.alpha(i)], ell, &mut c);
                for (yh, &ci) in yhat.iter_mut().zip(&c) {
                    *yh += coef * weibull_partials(ci, k, lambda).value;
                }
            }
            for j in 0..layout.n {
                let coef = match effects {
                    Effects::Full => flat[layout.nuisance_coef(j, r)],
                    Effects::Fixed => flat[layout.gamma(j)],
                };
                for (yh, &zv) in yhat.iter_mut().zip(&data.z(r, j)[ell - 1..]) {
                    *yh += coef * zv;
                }
            }
            yhat
        })
        .collect()
}
