//! Subcommands of the `mmm` binary.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mmm_core::baseline::fit_adhoc;
use mmm_core::diagnostics::{histogram, FitReport};
use mmm_core::hmc::run_chain;
use mmm_core::mle::fit_mle;
use mmm_core::model::{ModelSpec, Params};
use mmm_core::simulate::{generate, ScenarioConfig};
use serde::{Deserialize, Serialize};

use crate::config::{MethodChoice, RunConfig};
use crate::error::{CliError, ErrorCode, Result};
use crate::io;

#[derive(Debug, Parser)]
#[command(
    name = "mmm",
    version,
    about = "Sign-constrained hierarchical marketing mix models"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a simulation case as panel.csv and truth.json.
    Simulate(SimulateArgs),
    /// Fit a model to a panel.
    Fit(FitArgs),
    /// Fit the ad hoc least-squares baseline (same as `fit --method adhoc`).
    Baseline(FitArgs),
    /// Print a summary table of a report.json.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=8))]
    pub case: u8,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Default)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub method: Option<MethodChoice>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Output directory; defaults to the directory holding the data.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long = "burn-in")]
    pub burn_in: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// A report.json, or a directory containing one.
    pub path: PathBuf,
}

/// Contents of `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub params: Params,
    pub scenario: ScenarioConfig,
}

#[derive(Debug, Clone, Serialize)]
struct Timing {
    seconds: f64,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => simulate(&args),
        Command::Fit(args) => fit(&args, None),
        Command::Baseline(args) => fit(&args, Some(MethodChoice::Adhoc)),
        Command::Report(args) => {
            print!("{}", report_table(&args.path)?);
            Ok(())
        }
    }
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let scenario = ScenarioConfig::preset(args.case, args.seed)?;
    let (data, params) = generate(&scenario)?;
    let spec = scenario.spec();
    let truth = TruthFile {
        names: spec.layout().names(),
        values: params.pack(&spec)?,
        params,
        scenario,
    };
    create_dir(&args.out)?;
    io::save_panel(&args.out.join("panel.csv"), &data)?;
    io::write_json(&args.out.join("truth.json"), &truth)
}

/// Merges the config file and command-line flags; flags win.
pub fn resolve_config(args: &FitArgs, forced: Option<MethodChoice>) -> Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(path) => RunConfig::from_path(path)?,
        None => RunConfig::default(),
    };
    if let Some(m) = forced.or(args.method) {
        cfg.method = m;
    }
    if let Some(seed) = args.seed.or(cfg.seed) {
        cfg.apply_seed(seed);
    }
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(r) = args.restarts {
        cfg.mle.restarts = r;
    }
    if let Some(i) = args.iterations {
        cfg.hmc.iterations = i;
    }
    if let Some(b) = args.burn_in {
        cfg.hmc.burn_in = b;
    }
    if let Some(t) = args.thin {
        cfg.hmc.thinning = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn fit(args: &FitArgs, forced: Option<MethodChoice>) -> Result<()> {
    let cfg = resolve_config(args, forced)?;
    let data_path = cfg
        .data
        .clone()
        .ok_or_else(|| CliError::config("no data file: pass --data or set `data`"))?;
    let out = match &cfg.out {
        Some(o) => o.clone(),
        None => data_path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_default(),
    };
    let data = io::load_panel_with(&data_path, &cfg.columns())?;
    let spec = cfg.spec_for(&data)?;
    let truth = load_truth(&cfg, &data_path, &spec)?;

    create_dir(&out)?;
    let started = Instant::now();
    let report = match cfg.method {
        MethodChoice::Hmc => {
            let chain = run_chain(&data, &spec, &cfg.priors, &cfg.hmc)?;
            io::write_draws(&out.join("draws.csv"), &chain.names, &chain.draws)?;
            for (idx, name) in chain.names.iter().enumerate() {
                let h = histogram(&chain.column(idx), cfg.output.histogram_bins)?;
                io::write_histogram(
                    &out.join(format!("histogram_{}.csv", io::file_stem(name))),
                    &h,
                )?;
            }
            FitReport::from_chain(&chain, &data, &spec, &cfg.priors, truth.as_deref())?
        }
        MethodChoice::Mle => {
            let fit = fit_mle(&data, &spec, &cfg.mle)?;
            FitReport::from_mle(&fit, &cfg.mle, &data, &spec, truth.as_deref())?
        }
        MethodChoice::Adhoc => {
            let fit = fit_adhoc(&data, &spec, &cfg.adhoc)?;
            FitReport::from_adhoc(&fit, &spec)
        }
    };
    let seconds = started.elapsed().as_secs_f64();
    io::write_json(&out.join("report.json"), &report)?;
    // Kept apart from the report so that the report is reproducible.
    io::write_json(&out.join("timing.json"), &Timing { seconds })
}

/// Truth from `truth` in the config, else a `truth.json` beside the data.
/// An explicitly named file must match the fitted layout; a sibling file
/// that does not (say, a base-model fit to hierarchical data) is ignored.
fn load_truth(cfg: &RunConfig, data_path: &Path, spec: &ModelSpec) -> Result<Option<Vec<f64>>> {
    let names = spec.layout().names();
    if let Some(path) = &cfg.truth {
        let truth: TruthFile = io::read_json(path)?;
        if truth.names != names {
            return Err(CliError::config(format!(
                "truth file {} has parameters [{}], the model has [{}]",
                path.display(),
                truth.names.join(", "),
                names.join(", ")
            )));
        }
        return Ok(Some(truth.values));
    }
    let sibling = data_path.with_file_name("truth.json");
    if !sibling.is_file() {
        return Ok(None);
    }
    let truth: TruthFile = io::read_json(&sibling)?;
    Ok((truth.names == names).then_some(truth.values))
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub fn report_table(path: &Path) -> Result<String> {
    use std::fmt::Write;

    let file = if path.is_dir() {
        path.join("report.json")
    } else {
        path.to_path_buf()
    };
    let report: FitReport = io::read_json(&file)?;
    let mut out = String::new();
    let method = serde_json::to_value(report.method).expect("method serialises");
    writeln!(out, "method: {}", method.as_str().unwrap_or("?")).unwrap();
    let truth = report.recovery.as_ref().map(|r| &r.truth);
    match &report.summary {
        Some(summary) => {
            writeln!(
                out,
                "{:<14} {:>10} {:>10} {:>10} {:>10} {:>4} {:>10}",
                "parameter", "mean", "sd", "q2.5", "q97.5", "sig", "truth"
            )
            .unwrap();
            for (i, s) in summary.iter().enumerate() {
                let t = truth.map(|t| format!("{:.4}", t[i])).unwrap_or_default();
                let sig = if s.significant { "*" } else { "" };
                writeln!(
                    out,
                    "{:<14} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>4} {:>10}",
                    s.name, s.mean, s.sd, s.lower, s.upper, sig, t
                )
                .unwrap();
            }
        }
        None => {
            writeln!(
                out,
                "{:<20} {:>12} {:>10}",
                "parameter", "estimate", "truth"
            )
            .unwrap();
            for (i, (name, v)) in report
                .parameter_names
                .iter()
                .zip(&report.estimates)
                .enumerate()
            {
                let t = truth.map(|t| format!("{:.4}", t[i])).unwrap_or_default();
                writeln!(out, "{name:<20} {v:>12.4} {t:>10}").unwrap();
            }
        }
    }
    if let Some(r) = &report.recovery {
        writeln!(
            out,
            "rmse: {:.4} (all parameters: {:.4})",
            r.rmse, r.rmse_all
        )
        .unwrap();
    }
    if let Some(r2) = &report.r_squared {
        writeln!(
            out,
            "r2 marginal: {:.4}  conditional: {:.4}",
            r2.marginal, r2.conditional
        )
        .unwrap();
    }
    if let Some(s) = &report.sampler {
        writeln!(
            out,
            "draws: {}  acceptance: {:.3}  step size: {:.5}",
            s.draws, s.acceptance_rate, s.step_size
        )
        .unwrap();
    }
    if let Some(o) = &report.optimizer {
        writeln!(
            out,
            "log-likelihood: {:.4}  best restart: {} of {}",
            o.log_likelihood,
            o.best_restart,
            o.restarts.len()
        )
        .unwrap();
    }
    if let Some(a) = &report.adhoc {
        writeln!(out, "alpha: {:?}", a.alpha).unwrap();
        if a.sign_violations.is_empty() {
            writeln!(out, "sign violations: none").unwrap();
        } else {
            writeln!(out, "sign violations: {}", a.sign_violations.join(", ")).unwrap();
        }
    }
    Ok(out)
}

/// Exit code for a failed command.
pub fn exit_code(err: &CliError) -> i32 {
    match err.code {
        ErrorCode::Config => 2,
        _ => 1,
    }
}
