//! Monte Carlo harness: replicated simulation and estimation with
//! per-replication seeds, index-ordered aggregation and on-disk artifacts.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::filter::{InitialBelief, WonhamFilter};
use crate::fisher::{fisher_by_ergodic_average, ErgodicOptions};
use crate::io::{self, fmt_f64, RunManifest};
use crate::linalg::FisherMatrix;
use crate::mle::{
    one_step_process, standardized_error, standardized_process, two_step_process,
    EstimationConfig, EstimatorProcess, Method, StandardizedRecord,
};
use crate::model::{validate_model, ModelSpec, ParameterDomain, StateSpace, ThetaParams};
use crate::moments::estimate_moments;
use crate::sim::{grid_steps, simulate_observations, simulate_telegraph, ObservationPath};

fn default_horizons() -> Vec<f64> {
    vec![250.0, 1000.0, 4000.0]
}
fn default_step() -> f64 {
    0.01
}
fn default_replications() -> usize {
    400
}
fn default_seed() -> u64 {
    20_240_601
}
fn default_methods() -> Vec<Method> {
    vec![Method::Moments, Method::OneStep]
}
fn default_one_step() -> EstimationConfig {
    EstimationConfig::default_for(Method::OneStep)
}
fn default_two_step() -> EstimationConfig {
    EstimationConfig::default_for(Method::TwoStep)
}
fn default_fisher_horizon() -> f64 {
    1e4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "default_horizons")]
    pub horizons: Vec<f64>,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_seed")]
    pub base_seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default = "default_one_step")]
    pub one_step: EstimationConfig,
    #[serde(default = "default_two_step")]
    pub two_step: EstimationConfig,
    /// Simulation length for the reference Fisher matrix used by the
    /// standardized process.
    #[serde(default = "default_fisher_horizon")]
    pub fisher_horizon: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            horizons: default_horizons(),
            step: default_step(),
            replications: default_replications(),
            base_seed: default_seed(),
            methods: default_methods(),
            one_step: default_one_step(),
            two_step: default_two_step(),
            fisher_horizon: default_fisher_horizon(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Returns the model warnings on success.
    pub fn validate(&self) -> Result<Vec<String>> {
        let validated = validate_model(&self.model)?;
        if self.replications < 2 {
            return Err(Error::invalid("replications", format!("need at least 2, got {}", self.replications)));
        }
        if self.horizons.is_empty() {
            return Err(Error::invalid("horizons", "must not be empty"));
        }
        for &t in &self.horizons {
            if !(t >= 1.0 && t.fract() == 0.0 && t.is_finite()) {
                return Err(Error::invalid("horizons", format!("each T must be a positive integer, got {t}")));
            }
            grid_steps(t, self.step)?;
        }
        grid_steps(1.0, self.step).map_err(|_| {
            Error::invalid("step", format!("1/h must be an integer, got h = {}", self.step))
        })?;
        if self.methods.is_empty() {
            return Err(Error::invalid("methods", "must not be empty"));
        }
        if self.methods.contains(&Method::OneStep) {
            self.one_step.validate(Method::OneStep)?;
        }
        if self.methods.contains(&Method::TwoStep) {
            self.two_step.validate(Method::TwoStep)?;
        }
        if self.uses_mle() && !(self.fisher_horizon > 0.0) {
            return Err(Error::invalid("fisher_horizon", "must be positive"));
        }
        Ok(validated.warnings.iter().map(ToString::to_string).collect())
    }

    fn uses_mle(&self) -> bool {
        self.methods.iter().any(|m| *m != Method::Moments)
    }

    fn max_horizon(&self) -> f64 {
        self.horizons.iter().copied().fold(0.0, f64::max)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replication `index`; distinct indices give unrelated streams.
pub fn replication_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

/// Stream reserved for the reference Fisher simulation.
const FISHER_STREAM: u64 = u64::MAX;

/// Results of one method at one horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub horizon: f64,
    pub method: Method,
    /// Terminal estimate `(lambda, mu)`.
    pub estimate: Option<[f64; 2]>,
    /// Solvability of the root equation: of the estimate itself for the
    /// moment method, of the preliminary estimate otherwise.
    pub solvable: Option<bool>,
    /// `G_T^{1/2} (theta - theta0)` at the terminal time.
    pub standardized: Option<[f64; 2]>,
    /// `eta_T(tau)` against the reference Fisher matrix.
    pub eta: Vec<StandardizedRecord>,
    pub failure: Option<String>,
}

impl MethodOutcome {
    fn failed(horizon: f64, method: Method, reason: String) -> Self {
        Self {
            horizon,
            method,
            estimate: None,
            solvable: None,
            standardized: None,
            eta: Vec::new(),
            failure: Some(reason),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub index: usize,
    pub seed: u64,
    pub outcomes: Vec<MethodOutcome>,
    /// Wall-clock seconds; excluded from equality.
    pub elapsed_secs: f64,
}

impl PartialEq for ReplicationRecord {
    fn eq(&self, other: &Self) -> bool {
        self.index == other.index && self.seed == other.seed && self.outcomes == other.outcomes
    }
}

fn outcome_from_process(
    proc: &EstimatorProcess,
    theta0: &ThetaParams,
    fisher_ref: Option<&FisherMatrix>,
) -> Result<MethodOutcome> {
    let last = proc
        .terminal()
        .ok_or_else(|| Error::Grid("estimator process has no records".into()))?;
    let eta = match fisher_ref {
        Some(f) => standardized_process(proc, theta0, f)?,
        None => Vec::new(),
    };
    Ok(MethodOutcome {
        horizon: proc.horizon,
        method: proc.method,
        estimate: Some(last.theta),
        solvable: Some(proc.preliminary.stats.solvable),
        standardized: Some(standardized_error(last, theta0)?),
        eta,
        failure: None,
    })
}

fn apply_method(
    config: &ExperimentConfig,
    method: Method,
    path: &ObservationPath,
    fisher_ref: Option<&FisherMatrix>,
) -> MethodOutcome {
    let spec = &config.model;
    let horizon = path.horizon();
    let result = match method {
        Method::Moments => estimate_moments(path, &spec.states, &spec.domain).map(|e| MethodOutcome {
            horizon,
            method,
            estimate: Some([e.lambda_hat, e.mu_hat]),
            solvable: Some(e.stats.solvable),
            standardized: None,
            eta: Vec::new(),
            failure: None,
        }),
        Method::OneStep => one_step_process(path, &spec.states, &spec.domain, &config.one_step)
            .and_then(|p| outcome_from_process(&p, &spec.theta, fisher_ref)),
        Method::TwoStep => two_step_process(path, &spec.states, &spec.domain, &config.two_step)
            .and_then(|p| outcome_from_process(&p, &spec.theta, fisher_ref)),
    };
    result.unwrap_or_else(|e| MethodOutcome::failed(horizon, method, e.to_string()))
}

/// Simulates replication `index` once at the longest horizon and applies
/// every method to each prefix of length `T`.
pub fn run_replication(config: &ExperimentConfig, index: usize) -> Result<ReplicationRecord> {
    run_replication_with(config, index, None)
}

pub fn run_replication_with(
    config: &ExperimentConfig,
    index: usize,
    fisher_ref: Option<&FisherMatrix>,
) -> Result<ReplicationRecord> {
    if index >= config.replications {
        return Err(Error::invalid(
            "index",
            format!("replication {index} is out of range for M = {}", config.replications),
        ));
    }
    let start = Instant::now();
    let seed = replication_seed(config.base_seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = &config.model;
    let mut outcomes = Vec::new();
    let simulated = simulate_telegraph(&spec.theta, config.max_horizon(), &mut rng)
        .and_then(|ev| simulate_observations(&ev, &spec.states, config.step, false, &mut rng));
    let mut horizons = config.horizons.clone();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    for &t in &horizons {
        let path = simulated.as_ref().map_err(|e| e.to_string()).and_then(|full| {
            grid_steps(t, config.step)
                .and_then(|n| full.truncated(n))
                .map_err(|e| e.to_string())
        });
        for &method in &config.methods {
            outcomes.push(match &path {
                Ok(p) => apply_method(config, method, p, fisher_ref),
                Err(msg) => MethodOutcome::failed(t, method, msg.clone()),
            });
        }
    }
    Ok(ReplicationRecord {
        index,
        seed,
        outcomes,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

/// Summary of `eta_T(tau)` at one `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtaSummary {
    pub tau: f64,
    pub mean: [f64; 2],
    pub variance: [f64; 2],
    pub correlation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub horizon: f64,
    pub method: Method,
    pub succeeded: usize,
    pub failed: usize,
    pub bias: [f64; 2],
    pub mse: [f64; 2],
    pub t_mse: [f64; 2],
    /// `T · (MSE(lambda) + MSE(mu))`.
    pub t_mse_total: f64,
    /// Sample covariance of `sqrt(T) (theta - theta0)`.
    pub covariance: FisherMatrix,
    /// Fraction of replications where the root equation had no solution.
    pub unsolvable_fraction: f64,
    /// Mean and variance of `G^{1/2} (theta - theta0)` per coordinate.
    pub standardized_mean: Option<[f64; 2]>,
    pub standardized_variance: Option<[f64; 2]>,
    /// Fraction inside the nominal 95% ellipse `|G^{1/2} err|² <= chi2_2(0.95)`.
    pub coverage: Option<f64>,
    pub eta: Vec<EtaSummary>,
    /// Per-coordinate variance of `eta(1) - eta(1/2)` when both are present.
    pub eta_increment_variance: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub replications: usize,
    pub base_seed: u64,
    pub warnings: Vec<String>,
    pub fisher_reference: Option<FisherMatrix>,
    pub summaries: Vec<MethodSummary>,
}

impl McReport {
    pub fn summary(&self, horizon: f64, method: Method) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.horizon == horizon && s.method == method)
    }
}

/// Records in index order plus their aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloRun {
    pub records: Vec<ReplicationRecord>,
    pub report: McReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    Serial,
    Parallel,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

fn covariance(xs: &[f64], ys: &[f64]) -> f64 {
    let (mx, my) = (mean(xs), mean(ys));
    xs.iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / (xs.len() as f64 - 1.0)
}

fn chi2_2_quantile_95() -> f64 {
    ChiSquared::new(2.0).expect("two degrees of freedom").inverse_cdf(0.95)
}

fn summarize(
    records: &[ReplicationRecord],
    horizon: f64,
    method: Method,
    theta0: &ThetaParams,
) -> MethodSummary {
    let outcomes: Vec<&MethodOutcome> = records
        .iter()
        .filter_map(|r| r.outcomes.iter().find(|o| o.horizon == horizon && o.method == method))
        .collect();
    let ok: Vec<&MethodOutcome> = outcomes.iter().copied().filter(|o| o.failure.is_none()).collect();
    let truth = theta0.as_array();
    let errs: [Vec<f64>; 2] = [0, 1].map(|c| {
        ok.iter()
            .filter_map(|o| o.estimate.map(|e| e[c] - truth[c]))
            .collect()
    });
    let n = errs[0].len().max(1) as f64;
    let bias = [0, 1].map(|c| errs[c].iter().sum::<f64>() / n);
    let mse = [0, 1].map(|c| errs[c].iter().map(|e| e * e).sum::<f64>() / n);
    let t_mse = mse.map(|m| horizon * m);
    let scaled: [Vec<f64>; 2] = [0, 1].map(|c| errs[c].iter().map(|e| horizon.sqrt() * e).collect());
    let cov = if scaled[0].len() >= 2 {
        FisherMatrix::new(
            variance(&scaled[0]),
            covariance(&scaled[0], &scaled[1]),
            variance(&scaled[1]),
        )
    } else {
        FisherMatrix::new(f64::NAN, f64::NAN, f64::NAN)
    };
    let flags: Vec<bool> = ok.iter().filter_map(|o| o.solvable).collect();
    let unsolvable_fraction = if flags.is_empty() {
        f64::NAN
    } else {
        flags.iter().filter(|s| !**s).count() as f64 / flags.len() as f64
    };
    let z: Vec<[f64; 2]> = ok.iter().filter_map(|o| o.standardized).collect();
    let (standardized_mean, standardized_variance, coverage) = if z.len() >= 2 {
        let cols = [0, 1].map(|c| z.iter().map(|v| v[c]).collect::<Vec<_>>());
        let q = chi2_2_quantile_95();
        let inside = z.iter().filter(|v| v[0] * v[0] + v[1] * v[1] <= q).count();
        (
            Some([mean(&cols[0]), mean(&cols[1])]),
            Some([variance(&cols[0]), variance(&cols[1])]),
            Some(inside as f64 / z.len() as f64),
        )
    } else {
        (None, None, None)
    };
    let mut taus: Vec<f64> = ok.iter().flat_map(|o| o.eta.iter().map(|e| e.tau)).collect();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let eta_at = |tau: f64| -> Vec<[f64; 2]> {
        ok.iter()
            .filter_map(|o| o.eta.iter().find(|e| e.tau == tau).map(|e| e.eta))
            .collect()
    };
    let eta: Vec<EtaSummary> = taus
        .iter()
        .filter_map(|&tau| {
            let v = eta_at(tau);
            if v.len() < 2 {
                return None;
            }
            let cols = [0, 1].map(|c| v.iter().map(|x| x[c]).collect::<Vec<_>>());
            let var = [variance(&cols[0]), variance(&cols[1])];
            Some(EtaSummary {
                tau,
                mean: [mean(&cols[0]), mean(&cols[1])],
                variance: var,
                correlation: covariance(&cols[0], &cols[1]) / (var[0] * var[1]).sqrt(),
            })
        })
        .collect();
    let increments: Vec<[f64; 2]> = ok
        .iter()
        .filter_map(|o| {
            let a = o.eta.iter().find(|e| e.tau == 0.5)?;
            let b = o.eta.iter().find(|e| e.tau == 1.0)?;
            Some([b.eta[0] - a.eta[0], b.eta[1] - a.eta[1]])
        })
        .collect();
    let eta_increment_variance = (increments.len() >= 2).then(|| {
        [0, 1].map(|c| variance(&increments.iter().map(|v| v[c]).collect::<Vec<_>>()))
    });
    MethodSummary {
        horizon,
        method,
        succeeded: ok.len(),
        failed: outcomes.len() - ok.len(),
        bias,
        mse,
        t_mse,
        t_mse_total: t_mse[0] + t_mse[1],
        covariance: cov,
        unsolvable_fraction,
        standardized_mean,
        standardized_variance,
        coverage,
        eta,
        eta_increment_variance,
    }
}

/// Aggregates records, which must be in index order, into a report.
pub fn aggregate(
    config: &ExperimentConfig,
    records: &[ReplicationRecord],
    fisher_reference: Option<FisherMatrix>,
    warnings: Vec<String>,
) -> McReport {
    let mut horizons = config.horizons.clone();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    let mut summaries = Vec::new();
    for &t in &horizons {
        for &m in &config.methods {
            summaries.push(summarize(records, t, m, &config.model.theta));
        }
    }
    McReport {
        replications: config.replications,
        base_seed: config.base_seed,
        warnings,
        fisher_reference,
        summaries,
    }
}

/// Reference Fisher matrix at the true parameter, from its own seed stream.
pub fn reference_fisher(config: &ExperimentConfig) -> Result<FisherMatrix> {
    let mut rng = ChaCha8Rng::seed_from_u64(replication_seed(config.base_seed, FISHER_STREAM));
    let opts = ErgodicOptions {
        horizon: config.fisher_horizon,
        step: config.step,
        ..ErgodicOptions::default()
    };
    Ok(fisher_by_ergodic_average(&config.model.theta, &config.model.states, &opts, &mut rng)?.matrix)
}

pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<MonteCarloRun> {
    run_monte_carlo_with(config, Execution::Parallel)
}

pub fn run_monte_carlo_with(config: &ExperimentConfig, execution: Execution) -> Result<MonteCarloRun> {
    let warnings = config.validate()?;
    let fisher_ref = if config.uses_mle() {
        Some(reference_fisher(config)?)
    } else {
        None
    };
    let run = |i: usize| run_replication_with(config, i, fisher_ref.as_ref());
    let records: Vec<ReplicationRecord> = match execution {
        Execution::Serial => (0..config.replications).map(run).collect::<Result<_>>()?,
        Execution::Parallel => (0..config.replications)
            .into_par_iter()
            .map(run)
            .collect::<Result<_>>()?,
    };
    let any_ok = records
        .iter()
        .any(|r| r.outcomes.iter().any(|o| o.failure.is_none()));
    if !any_ok {
        return Err(Error::AllReplicationsFailed(config.replications));
    }
    let report = aggregate(config, &records, fisher_ref, warnings);
    Ok(MonteCarloRun { records, report })
}

const RECORD_CSV_HEADER: [&str; 12] = [
    "index",
    "seed",
    "T",
    "method",
    "lambda",
    "mu",
    "solvable",
    "z1",
    "z2",
    "failure",
    "elapsed_secs",
    "eta",
];

fn opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

/// One row per (replication, horizon, method); `eta` packs `tau:eta1:eta2`
/// triples separated by `;`.
pub fn write_records_csv<W: std::io::Write>(records: &[ReplicationRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(RECORD_CSV_HEADER)?;
    for r in records {
        for o in &r.outcomes {
            let eta = o
                .eta
                .iter()
                .map(|e| format!("{}:{}:{}", fmt_f64(e.tau), fmt_f64(e.eta[0]), fmt_f64(e.eta[1])))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                fmt_f64(o.horizon),
                o.method.to_string(),
                opt(o.estimate.map(|e| e[0])),
                opt(o.estimate.map(|e| e[1])),
                o.solvable.map(|s| s.to_string()).unwrap_or_default(),
                opt(o.standardized.map(|z| z[0])),
                opt(o.standardized.map(|z| z[1])),
                o.failure.clone().unwrap_or_default(),
                fmt_f64(r.elapsed_secs),
                eta,
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Normal QQ points of each standardized coordinate (or of
/// `sqrt(T) (theta - theta0)` for the moment method).
pub fn write_qq_csv<W: std::io::Write>(
    config: &ExperimentConfig,
    records: &[ReplicationRecord],
    writer: W,
) -> Result<()> {
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    let truth = config.model.theta.as_array();
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["T", "method", "coordinate", "normal_quantile", "sample_quantile"])?;
    let mut horizons = config.horizons.clone();
    horizons.sort_by(f64::total_cmp);
    horizons.dedup();
    for &t in &horizons {
        for &m in &config.methods {
            for c in 0..2 {
                let mut xs: Vec<f64> = records
                    .iter()
                    .filter_map(|r| r.outcomes.iter().find(|o| o.horizon == t && o.method == m))
                    .filter(|o| o.failure.is_none())
                    .filter_map(|o| match (o.standardized, o.estimate) {
                        (Some(z), _) => Some(z[c]),
                        (None, Some(e)) => Some(t.sqrt() * (e[c] - truth[c])),
                        _ => None,
                    })
                    .collect();
                xs.sort_by(f64::total_cmp);
                let n = xs.len() as f64;
                for (i, x) in xs.iter().enumerate() {
                    let p = (i as f64 + 0.5) / n;
                    w.write_record([
                        fmt_f64(t),
                        m.to_string(),
                        (c + 1).to_string(),
                        fmt_f64(normal.inverse_cdf(p)),
                        fmt_f64(*x),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `records.csv`, `report.json`, `qq_data.csv` and `manifest.json`
/// into a fresh directory under `root` and returns its path.
pub fn write_run(root: &Path, config: &ExperimentConfig, run: &MonteCarloRun) -> Result<PathBuf> {
    let manifest = RunManifest::new("mc", config.base_seed, config)?;
    let dir = io::run_directory(root, &manifest.config_hash);
    io::create_dir(&dir)?;
    write_records_csv(&run.records, io::create_file(&dir.join("records.csv"))?)?;
    write_qq_csv(config, &run.records, io::create_file(&dir.join("qq_data.csv"))?)?;
    io::write_json(&dir.join("report.json"), &run.report)?;
    io::write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(dir)
}

/// Maximizer of the log-likelihood over a `grid_n × grid_n` lattice on
/// `[c0 + eps, c1 - eps]²` with `eps = (c1 - c0) / (2 grid_n)`; ties go to
/// the smallest `lambda`, then the smallest `mu`.
pub fn grid_mle_oracle(
    path: &ObservationPath,
    states: &StateSpace,
    domain: &ParameterDomain,
    grid_n: usize,
) -> Result<ThetaParams> {
    let axis = grid_axis(domain, grid_n)?;
    let h = path.step();
    argmax_on_lattice(&axis, |theta| {
        let mut f = WonhamFilter::new(theta, states, h, InitialBelief::Stationary)?;
        let mut ll = 0.0;
        for &dx in path.increments() {
            let mean = f.mean();
            ll += mean * dx - 0.5 * mean * mean * h;
            f.advance(dx)?;
        }
        Ok(ll)
    })
}

/// Scans `lambda` then `mu` in increasing order and keeps the first
/// strict maximum.
fn argmax_on_lattice<F>(axis: &[f64], objective: F) -> Result<ThetaParams>
where
    F: Fn(&ThetaParams) -> Result<f64>,
{
    let mut best: Option<(f64, ThetaParams)> = None;
    for &l in axis {
        for &m in axis {
            let theta = ThetaParams::new(l, m)?;
            let value = objective(&theta)?;
            if best.map_or(true, |(b, _)| value > b) {
                best = Some((value, theta));
            }
        }
    }
    best.map(|b| b.1)
        .ok_or_else(|| Error::invalid("grid_n", "lattice is empty"))
}

/// Lattice points of [`grid_mle_oracle`] along one axis.
pub fn grid_axis(domain: &ParameterDomain, grid_n: usize) -> Result<Vec<f64>> {
    if grid_n < 5 {
        return Err(Error::invalid("grid_n", format!("need at least 5 points, got {grid_n}")));
    }
    let (c0, c1) = (domain.c0(), domain.c1());
    let eps = (c1 - c0) / (2.0 * grid_n as f64);
    let (lo, hi) = (c0 + eps, c1 - eps);
    Ok((0..grid_n)
        .map(|i| lo + (hi - lo) * i as f64 / (grid_n - 1) as f64)
        .collect())
}
