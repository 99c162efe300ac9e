//! Command-line front end. Every command writes its outputs and a
//! `manifest.json` into a fresh run directory under `--out` and prints that
//! directory on stdout.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::{run_monte_carlo, write_run, ExperimentConfig};
use crate::filter::{run_filter, run_filter_with_sensitivities, InitialBelief};
use crate::fisher::{fisher_by_ergodic_average, ErgodicOptions, FisherReport, InvariantDensity};
use crate::io::{self, RunManifest};
use crate::mle::{one_step_process, two_step_process, EstimationConfig, Method};
use crate::model::{validate_model, ModelSpec};
use crate::moments::estimate_moments;
use crate::sim::{simulate_observations, simulate_telegraph, ObservationPath};

#[derive(Debug, Parser)]
#[command(
    name = "telegraph",
    version,
    about = "Simulate, filter and estimate a hidden telegraph signal in white noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON configuration file; defaults apply to omitted fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root directory for run directories.
    #[arg(long, env = "TELEGRAPH_OUT", default_value = ".")]
    pub out: PathBuf,
    /// Overrides the seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an observation path and write `path.csv`.
    Simulate(Common),
    /// Run the filter on `--path` and write `filter.csv`.
    Filter {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        path: PathBuf,
        /// Also propagate the rate sensitivities.
        #[arg(long)]
        sensitivities: bool,
    },
    /// Estimate the rates from `--path`.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        path: PathBuf,
        #[arg(long, default_value = "moments")]
        method: Method,
    },
    /// Run the Monte Carlo harness.
    Mc(Common),
    /// Estimate the Fisher matrix by an ergodic average; writes `fisher.json`.
    Fisher(Common),
    /// Tabulate the stationary density of the filter; writes `density.csv`.
    Density(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Simulate(c) | Command::Mc(c) | Command::Fisher(c) | Command::Density(c) => c,
            Command::Filter { common, .. } | Command::Estimate { common, .. } => common,
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Filter { .. } => "filter",
            Command::Estimate { .. } => "estimate",
            Command::Mc(_) => "mc",
            Command::Fisher(_) => "fisher",
            Command::Density(_) => "density",
        }
    }
}

fn default_horizon() -> f64 {
    1000.0
}
fn default_step() -> f64 {
    0.01
}
fn default_seed() -> u64 {
    1
}
fn default_fisher_horizon() -> f64 {
    1e4
}
fn default_burn_in() -> f64 {
    0.1
}
fn default_points() -> usize {
    999
}

/// Configuration shared by the single-path commands; each command reads
/// the fields it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Keep per-step hidden integrals in `path.csv`.
    #[serde(default)]
    pub keep_hidden: bool,
    #[serde(default)]
    pub one_step: Option<EstimationConfig>,
    #[serde(default)]
    pub two_step: Option<EstimationConfig>,
    #[serde(default = "default_fisher_horizon")]
    pub fisher_horizon: f64,
    #[serde(default = "default_burn_in")]
    pub burn_in: f64,
    /// Interior grid points of the density table.
    #[serde(default = "default_points")]
    pub points: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn load<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => io::read_json(p),
        None => Ok(T::default()),
    }
}

fn read_path(path: &Path) -> Result<ObservationPath> {
    let file = std::fs::File::open(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })?;
    ObservationPath::read_csv(file)
}

fn start_run<T: Serialize>(common: &Common, command: &str, seed: u64, config: &T) -> Result<PathBuf> {
    let manifest = RunManifest::new(command, seed, config)?;
    let dir = io::run_directory(&common.out, &manifest.config_hash);
    io::create_dir(&dir)?;
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

fn execute(cmd: &Command) -> Result<PathBuf> {
    let common = cmd.common();
    match cmd {
        Command::Mc(_) => {
            let mut cfg: ExperimentConfig = load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.base_seed = s;
            }
            for w in cfg.validate()? {
                log::warn!("model check: {w}");
            }
            log::info!("running {} replications", cfg.replications);
            let run = run_monte_carlo(&cfg)?;
            write_run(&common.out, &cfg, &run)
        }
        _ => {
            let mut cfg: RunConfig = load(common.config.as_deref())?;
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            let validated = validate_model(&cfg.model)?;
            for w in &validated.warnings {
                log::info!("model check: {w}");
            }
            execute_single(cmd, &cfg)
        }
    }
}

fn execute_single(cmd: &Command, cfg: &RunConfig) -> Result<PathBuf> {
    let common = cmd.common();
    let spec = &cfg.model;
    match cmd {
        Command::Simulate(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let events = simulate_telegraph(&spec.theta, cfg.horizon, &mut rng)?;
            let path = simulate_observations(&events, &spec.states, cfg.step, cfg.keep_hidden, &mut rng)?;
            let dir = start_run(common, cmd.name(), cfg.seed, cfg)?;
            path.write_csv(io::create_file(&dir.join("path.csv"))?)?;
            Ok(dir)
        }
        Command::Filter {
            path,
            sensitivities,
            ..
        } => {
            let obs = read_path(path)?;
            let traj = if *sensitivities {
                run_filter_with_sensitivities(&spec.theta, &spec.states, &obs)?
            } else {
                run_filter(&spec.theta, &spec.states, &obs, InitialBelief::Stationary)?
            };
            if traj.clamp_count > 0 {
                log::warn!("filter clamped pi {} times", traj.clamp_count);
            }
            let inputs = serde_json::json!({ "config": cfg, "path": path, "sensitivities": sensitivities });
            let dir = start_run(common, cmd.name(), cfg.seed, &inputs)?;
            traj.write_csv(io::create_file(&dir.join("filter.csv"))?)?;
            Ok(dir)
        }
        Command::Estimate { path, method, .. } => {
            let obs = read_path(path)?;
            let inputs = serde_json::json!({ "config": cfg, "path": path, "method": method });
            match method {
                Method::Moments => {
                    let est = estimate_moments(&obs, &spec.states, &spec.domain)?;
                    let dir = start_run(common, cmd.name(), cfg.seed, &inputs)?;
                    est.write_csv(io::create_file(&dir.join("estimate.csv"))?)?;
                    Ok(dir)
                }
                Method::OneStep | Method::TwoStep => {
                    let est_cfg = match method {
                        Method::OneStep => cfg.one_step.clone(),
                        _ => cfg.two_step.clone(),
                    }
                    .unwrap_or_else(|| EstimationConfig::default_for(*method));
                    let proc = if *method == Method::OneStep {
                        one_step_process(&obs, &spec.states, &spec.domain, &est_cfg)?
                    } else {
                        two_step_process(&obs, &spec.states, &spec.domain, &est_cfg)?
                    };
                    let dir = start_run(common, cmd.name(), cfg.seed, &inputs)?;
                    proc.write_csv(io::create_file(&dir.join("process.csv"))?)?;
                    io::write_json(&dir.join("process.json"), &proc)?;
                    Ok(dir)
                }
            }
        }
        Command::Fisher(_) => {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let opts = ErgodicOptions {
                horizon: cfg.fisher_horizon,
                step: cfg.step,
                burn_in: cfg.burn_in,
            };
            let fisher = fisher_by_ergodic_average(&spec.theta, &spec.states, &opts, &mut rng)?;
            let dir = start_run(common, cmd.name(), cfg.seed, cfg)?;
            io::write_json(
                &dir.join("fisher.json"),
                &FisherReport::new(spec.theta, spec.states, &fisher),
            )?;
            Ok(dir)
        }
        Command::Density(_) => {
            if cfg.points == 0 {
                return Err(Error::invalid("points", "must be positive"));
            }
            let den = InvariantDensity::new(spec.theta, spec.states)?;
            log::info!("log normalizer {}", den.log_normalizer);
            let dir = start_run(common, cmd.name(), cfg.seed, cfg)?;
            den.write_csv(io::create_file(&dir.join("density.csv"))?, cfg.points)?;
            Ok(dir)
        }
        Command::Mc(_) => unreachable!("handled by execute"),
    }
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    // A second initialization (tests call `run` repeatedly) is harmless.
    let _ = env_logger::Builder::new().filter_level(level).try_init();
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status: 0 on success, 2 for usage or input errors, 1 otherwise.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.command.common().verbose);
    match execute(&cli.command) {
        Ok(dir) => {
            println!("{}", dir.display());
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_input_error() {
                2
            } else {
                1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_config_defaults_round_trip() {
        let cfg = RunConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&text).unwrap(), cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"horizon": 5, "nope": 1}"#).is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(run(["telegraph", "frobnicate"]), 2);
        assert_eq!(run(["telegraph", "estimate", "--path", "x.csv", "--method", "newton"]), 2);
    }

    #[test]
    fn missing_config_exits_2() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().to_str().unwrap();
        let code = run(["telegraph", "density", "--config", "/no/such/config.json", "--out", out]);
        assert_eq!(code, 2);
    }
}
