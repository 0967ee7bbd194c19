//! Run configuration, read from a TOML document and overridden by flags.
//!
//! ```toml
//! method = "hmc"
//! seed = 7
//!
//! [model]
//! ell = 5
//! constrained_media = ["x1", "x2"]   # default: every media column
//! constrained_nuisance = []          # default: every nuisance column
//!
//! [priors.shape]
//! family = "gamma"
//! shape = 0.5
//! rate = 1.0
//!
//! [hmc]
//! iterations = 20000
//! ```
//!
//! Omitted prior entries keep the simulation-study settings.

use std::path::{Path, PathBuf};

use mmm_core::baseline::AdhocConfig;
use mmm_core::hmc::HmcConfig;
use mmm_core::mle::MleConfig;
use mmm_core::model::{ModelSpec, PanelDataset};
use mmm_core::posterior::PriorConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::io::ColumnSelection;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Hmc,
    Mle,
    Adhoc,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub ell: Option<usize>,
    /// Defaults to true whenever the panel has more than one region.
    pub hierarchical: Option<bool>,
    pub media: Option<Vec<String>>,
    pub nuisance: Option<Vec<String>>,
    pub constrained_media: Option<Vec<String>>,
    pub constrained_nuisance: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub histogram_bins: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self { histogram_bins: 30 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub method: MethodChoice,
    pub seed: Option<u64>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Flat true parameters; `truth.json` next to the data is used when absent.
    pub truth: Option<PathBuf>,
    pub model: ModelSection,
    pub priors: PriorConfig,
    pub hmc: HmcConfig,
    pub mle: MleConfig,
    pub adhoc: AdhocConfig,
    pub output: OutputSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: MethodChoice::Hmc,
            seed: None,
            data: None,
            out: None,
            truth: None,
            model: ModelSection::default(),
            priors: PriorConfig::simulation_study(),
            hmc: HmcConfig::default(),
            mle: MleConfig::default(),
            adhoc: AdhocConfig::default(),
            output: OutputSection::default(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let mut doc: toml::Table = text
            .parse()
            .map_err(|e| CliError::config(format!("config is not valid TOML: {e}")))?;
        // Overlay the prior table on the simulation-study defaults.
        let mut priors =
            toml::Table::try_from(PriorConfig::simulation_study()).expect("priors serialise");
        if let Some(user) = doc.remove("priors") {
            let toml::Value::Table(user) = user else {
                return Err(CliError::config("`priors` must be a table"));
            };
            for (k, v) in user {
                if !priors.contains_key(&k) {
                    return Err(CliError::config(format!("unknown prior entry `{k}`")));
                }
                priors.insert(k, v);
            }
        }
        doc.insert("priors".into(), toml::Value::Table(priors));
        let cfg: RunConfig = doc
            .try_into()
            .map_err(|e| CliError::config(format!("invalid config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        self.hmc.validate()?;
        self.adhoc.validate()?;
        if self.mle.restarts == 0 {
            return Err(CliError::config("mle.restarts must be at least 1"));
        }
        if self.output.histogram_bins == 0 {
            return Err(CliError::config("output.histogram_bins must be at least 1"));
        }
        Ok(())
    }

    /// Pushes the shared seed into every method section.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.hmc.seed = seed;
        self.mle.seed = seed;
    }

    pub fn columns(&self) -> ColumnSelection {
        ColumnSelection {
            media: self.model.media.clone(),
            nuisance: self.model.nuisance.clone(),
        }
    }

    /// Model spec for a loaded panel; every column is sign-constrained
    /// unless the config lists a subset.
    pub fn spec_for(&self, data: &PanelDataset) -> Result<ModelSpec> {
        let ell = self.model.ell.unwrap_or(5);
        let mut spec = ModelSpec::new(data.m(), data.n(), data.g(), ell).all_constrained();
        if let Some(h) = self.model.hierarchical {
            spec.hierarchical = h;
        }
        let lookup = |names: &Option<Vec<String>>,
                      available: &[String],
                      what: &str|
         -> Result<Option<Vec<usize>>> {
            names
                .as_ref()
                .map(|list| {
                    list.iter()
                        .map(|n| {
                            available.iter().position(|a| a == n).ok_or_else(|| {
                                CliError::config(format!(
                                    "constrained {what} column `{n}` is not in the panel"
                                ))
                            })
                        })
                        .collect()
                })
                .transpose()
        };
        if let Some(idx) = lookup(&self.model.constrained_media, data.media_names(), "media")? {
            spec.sign_constrained_beta = idx;
        }
        if let Some(idx) = lookup(
            &self.model.constrained_nuisance,
            data.nuisance_names(),
            "nuisance",
        )? {
            spec.sign_constrained_gamma = idx;
        }
        spec.validate()?;
        if data.weeks() < ell {
            return Err(CliError::config(format!(
                "panel has {} weeks, fewer than the carryover window {ell}",
                data.weeks()
            )));
        }
        Ok(spec)
    }
}
