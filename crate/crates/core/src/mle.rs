//! One-step and two-step estimator processes built on a preliminary
//! method-of-moments estimate from a learning interval `[0, T^delta]`.
//!
//! With `G_t = Σ ṁ ṁᵀ h` and `S_t = Σ ṁ (ΔX - m h)` over `[T^delta, t)`,
//! both evaluated at the preliminary estimate `θ̂`, the one-step process is
//! `θ*_t = θ̂ + G_t⁻¹ S_t`. The two-step process reuses `ṁ(θ̂)` and `G_t`
//! but takes its residual against the filter run at `θ*_t`:
//! `θ**_t = θ*_t + G_t⁻¹ Σ ṁ(θ̂) (ΔX - m(θ*_t) h)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{InitialBelief, SensitivityFilter, WonhamFilter};
use crate::io::fmt_f64;
use crate::linalg::FisherMatrix;
use crate::model::{ParameterDomain, StateSpace, ThetaParams};
use crate::moments::{estimate_moments, MomentEstimate};
use crate::sim::ObservationPath;

/// Relative singularity threshold for the accumulated Gram matrix.
pub const GRAM_SINGULAR_TOL: f64 = 1e-12;

pub const PROCESS_CSV_HEADER: [&str; 9] = [
    "tau",
    "t",
    "lambda_star",
    "mu_star",
    "i11",
    "i12",
    "i22",
    "eta1",
    "eta2",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Moments,
    OneStep,
    TwoStep,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Moments => "moments",
            Method::OneStep => "one-step",
            Method::TwoStep => "two-step",
        }
    }

    /// Default learning exponent for the method.
    pub fn default_delta(&self) -> f64 {
        match self {
            Method::TwoStep => 0.4,
            _ => 0.6,
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moments" => Ok(Method::Moments),
            "one-step" => Ok(Method::OneStep),
            "two-step" => Ok(Method::TwoStep),
            other => Err(Error::invalid(
                "method",
                format!("expected moments, one-step or two-step, got `{other}`"),
            )),
        }
    }
}

pub fn default_output_taus() -> Vec<f64> {
    vec![0.25, 0.5, 0.75, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationConfig {
    pub delta: f64,
    #[serde(default = "default_output_taus")]
    pub output_taus: Vec<f64>,
}

impl EstimationConfig {
    pub fn new(delta: f64, output_taus: Vec<f64>) -> Self {
        Self { delta, output_taus }
    }

    pub fn default_for(method: Method) -> Self {
        Self::new(method.default_delta(), default_output_taus())
    }

    /// Checks `delta` against the admissible range of `method` and that every
    /// `tau` lies in `(0, 1]`.
    pub fn validate(&self, method: Method) -> Result<()> {
        let d = self.delta;
        let ok = match method {
            Method::OneStep => d > 0.5 && d < 1.0,
            Method::TwoStep => d > 0.25 && d <= 0.5,
            Method::Moments => true,
        };
        if !ok {
            let range = if method == Method::OneStep {
                "(1/2, 1)"
            } else {
                "(1/4, 1/2]"
            };
            return Err(Error::invalid(
                "delta",
                format!("{method} needs delta in {range}, got {d}"),
            ));
        }
        if self.output_taus.is_empty() {
            return Err(Error::invalid("output_taus", "must not be empty"));
        }
        if let Some(t) = self.output_taus.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(Error::invalid("output_taus", format!("each tau must lie in (0, 1], got {t}")));
        }
        Ok(())
    }

    /// Length of the learning interval, `floor(T^delta)`; the moment
    /// estimator needs an integer horizon.
    pub fn learning_horizon(&self, horizon: f64) -> f64 {
        horizon.powf(self.delta).floor()
    }

    /// `tau_delta = T^delta / T` using the integer learning horizon.
    pub fn tau_delta(&self, horizon: f64) -> f64 {
        self.learning_horizon(horizon) / horizon
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProcessRecord {
    pub tau: f64,
    pub t: f64,
    pub theta: [f64; 2],
    /// `𝕀_t = G_t / t`.
    pub fisher: FisherMatrix,
    /// `G_t`, the unnormalized Gram matrix over `[T^delta, t)`.
    pub gram: FisherMatrix,
    /// The one-step value at the same `t`; equals `theta` for the one-step
    /// process.
    pub one_step: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandardizedRecord {
    pub tau: f64,
    pub eta: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorProcess {
    pub method: Method,
    pub horizon: f64,
    pub learning_horizon: f64,
    pub preliminary: MomentEstimate,
    /// The preliminary estimate projected onto the closed parameter square;
    /// the filter needs strictly positive rates.
    pub preliminary_used: ThetaParams,
    pub records: Vec<ProcessRecord>,
    pub standardized: Vec<StandardizedRecord>,
    /// Number of full sensitivity-filter passes over the path.
    pub sensitivity_passes: u32,
    /// Number of extra `pi`-only passes (two-step residuals).
    pub filter_passes: u32,
}

impl EstimatorProcess {
    /// The record at the largest `tau`.
    pub fn terminal(&self) -> Option<&ProcessRecord> {
        self.records.last()
    }

    /// CSV with header `tau,t,lambda_star,mu_star,i11,i12,i22,eta1,eta2`;
    /// the eta columns are empty when no standardized records exist.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(PROCESS_CSV_HEADER)?;
        for r in &self.records {
            let eta = self
                .standardized
                .iter()
                .find(|s| s.tau == r.tau)
                .map(|s| [fmt_f64(s.eta[0]), fmt_f64(s.eta[1])])
                .unwrap_or_default();
            w.write_record([
                fmt_f64(r.tau),
                fmt_f64(r.t),
                fmt_f64(r.theta[0]),
                fmt_f64(r.theta[1]),
                fmt_f64(r.fisher.i11),
                fmt_f64(r.fisher.i12),
                fmt_f64(r.fisher.i22),
                eta[0].clone(),
                eta[1].clone(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn project(estimate: &MomentEstimate, domain: &ParameterDomain) -> Result<ThetaParams> {
    ThetaParams::new(domain.clamp(estimate.lambda_hat), domain.clamp(estimate.mu_hat))
}

/// Grid indices of the learning horizon and the requested output times.
struct Schedule {
    learning_horizon: f64,
    k_delta: usize,
    outputs: Vec<(f64, usize)>,
}

fn schedule(path: &ObservationPath, config: &EstimationConfig) -> Result<Schedule> {
    schedule_with(path, config.learning_horizon(path.horizon()), &config.output_taus)
}

fn schedule_with(path: &ObservationPath, learning_horizon: f64, output_taus: &[f64]) -> Result<Schedule> {
    let horizon = path.horizon();
    if !(learning_horizon >= 1.0) {
        return Err(Error::invalid(
            "delta",
            format!("learning interval floor(T^delta) = {learning_horizon} is shorter than 1"),
        ));
    }
    if learning_horizon >= horizon {
        return Err(Error::invalid(
            "delta",
            format!("learning horizon {learning_horizon} is not below T = {horizon}"),
        ));
    }
    let k_delta = path.index_of(learning_horizon)?;
    let mut taus = output_taus.to_vec();
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    let mut outputs = Vec::new();
    for tau in taus {
        let k = path.index_of(tau * horizon)?;
        if k > k_delta {
            outputs.push((tau, k));
        }
    }
    if outputs.is_empty() {
        return Err(Error::invalid(
            "output_taus",
            format!(
                "no tau exceeds tau_delta = {}",
                learning_horizon / horizon
            ),
        ));
    }
    Ok(Schedule {
        learning_horizon,
        k_delta,
        outputs,
    })
}

/// Single sensitivity pass at `theta_hat`, returning the Gram matrix and
/// score at each output index, and optionally the gradients `ṁ` on
/// `[k_delta, k_last)`.
struct Pass {
    grams: Vec<FisherMatrix>,
    scores: Vec<[f64; 2]>,
    gradients: Vec<[f64; 2]>,
}

fn sensitivity_pass(
    path: &ObservationPath,
    theta_hat: &ThetaParams,
    states: &StateSpace,
    sched: &Schedule,
    keep_gradients: bool,
) -> Result<Pass> {
    let h = path.step();
    let k_last = sched.outputs.last().map(|o| o.1).unwrap_or(0);
    let mut filter = SensitivityFilter::new(theta_hat, states, h, InitialBelief::Stationary)?;
    let mut gram = FisherMatrix::ZERO;
    let mut score = [0.0; 2];
    let mut grams = Vec::with_capacity(sched.outputs.len());
    let mut scores = Vec::with_capacity(sched.outputs.len());
    let mut gradients = Vec::new();
    if keep_gradients {
        gradients.reserve(k_last - sched.k_delta);
    }
    let mut next = 0;
    for (k, &dx) in path.increments()[..k_last].iter().enumerate() {
        if k >= sched.k_delta {
            let g = filter.mean_gradient();
            let innovation = dx - filter.mean() * h;
            gram.add_outer(g, h);
            score[0] += g[0] * innovation;
            score[1] += g[1] * innovation;
            if keep_gradients {
                gradients.push(g);
            }
        }
        filter.advance(dx)?;
        if k + 1 == sched.outputs[next].1 {
            grams.push(gram);
            scores.push(score);
            next += 1;
        }
    }
    Ok(Pass {
        grams,
        scores,
        gradients,
    })
}

fn newton_update(theta: [f64; 2], gram: &FisherMatrix, score: [f64; 2], t: f64) -> Result<[f64; 2]> {
    let step = gram
        .solve(score, GRAM_SINGULAR_TOL)
        .ok_or(Error::SingularGram { t })?;
    Ok([theta[0] + step[0], theta[1] + step[1]])
}

fn one_step_records(
    path: &ObservationPath,
    theta_hat: &ThetaParams,
    states: &StateSpace,
    sched: &Schedule,
    keep_gradients: bool,
) -> Result<(Vec<ProcessRecord>, Vec<[f64; 2]>)> {
    let pass = sensitivity_pass(path, theta_hat, states, sched, keep_gradients)?;
    let h = path.step();
    let mut records = Vec::with_capacity(sched.outputs.len());
    for (i, &(tau, k)) in sched.outputs.iter().enumerate() {
        let t = k as f64 * h;
        let gram = pass.grams[i];
        let theta = newton_update(theta_hat.as_array(), &gram, pass.scores[i], t)?;
        records.push(ProcessRecord {
            tau,
            t,
            theta,
            fisher: gram.scaled(1.0 / t),
            gram,
            one_step: theta,
        });
    }
    Ok((records, pass.gradients))
}

fn preliminary(
    path: &ObservationPath,
    states: &StateSpace,
    domain: &ParameterDomain,
    sched: &Schedule,
) -> Result<(MomentEstimate, ThetaParams)> {
    let learning = path.truncated(sched.k_delta)?;
    let est = estimate_moments(&learning, states, domain)?;
    let used = project(&est, domain)?;
    Ok((est, used))
}

/// One-step estimator process at each output time `tau T` with `tau` above
/// `tau_delta`. The sensitivity filter runs once, from time 0, at the
/// projected preliminary estimate.
pub fn one_step_process(
    path: &ObservationPath,
    states: &StateSpace,
    domain: &ParameterDomain,
    config: &EstimationConfig,
) -> Result<EstimatorProcess> {
    config.validate(Method::OneStep)?;
    let sched = schedule(path, config)?;
    let (est, theta_hat) = preliminary(path, states, domain, &sched)?;
    let (records, _) = one_step_records(path, &theta_hat, states, &sched, false)?;
    Ok(EstimatorProcess {
        method: Method::OneStep,
        horizon: path.horizon(),
        learning_horizon: sched.learning_horizon,
        preliminary: est,
        preliminary_used: theta_hat,
        records,
        standardized: Vec::new(),
        sensitivity_passes: 1,
        filter_passes: 0,
    })
}

/// One-step records from an arbitrary preliminary estimate, with the
/// integrals taken over `[learning_horizon, tau T)`.
pub fn one_step_from_preliminary(
    path: &ObservationPath,
    states: &StateSpace,
    theta_hat: &ThetaParams,
    learning_horizon: f64,
    output_taus: &[f64],
) -> Result<Vec<ProcessRecord>> {
    let sched = schedule_with(path, learning_horizon, output_taus)?;
    Ok(one_step_records(path, theta_hat, states, &sched, false)?.0)
}

/// Two-step estimator process. Each output time costs one extra `pi`-only
/// filter pass at that time's one-step value, which must have positive
/// rates.
pub fn two_step_process(
    path: &ObservationPath,
    states: &StateSpace,
    domain: &ParameterDomain,
    config: &EstimationConfig,
) -> Result<EstimatorProcess> {
    config.validate(Method::TwoStep)?;
    let sched = schedule(path, config)?;
    let (est, theta_hat) = preliminary(path, states, domain, &sched)?;
    let (mut records, gradients) = one_step_records(path, &theta_hat, states, &sched, true)?;
    let h = path.step();
    let incs = path.increments();
    for (rec, &(_, k)) in records.iter_mut().zip(&sched.outputs) {
        let [l, m] = rec.one_step;
        let theta_star = ThetaParams::new(l, m).map_err(|_| Error::NonPositiveEstimate {
            t: rec.t,
            lambda: l,
            mu: m,
        })?;
        let mut filter = WonhamFilter::new(&theta_star, states, h, InitialBelief::Stationary)?;
        let mut residual = [0.0; 2];
        for (j, &dx) in incs[..k].iter().enumerate() {
            if j >= sched.k_delta {
                let g = gradients[j - sched.k_delta];
                let innovation = dx - filter.mean() * h;
                residual[0] += g[0] * innovation;
                residual[1] += g[1] * innovation;
            }
            filter.advance(dx)?;
        }
        rec.theta = newton_update(rec.one_step, &rec.gram, residual, rec.t)?;
    }
    Ok(EstimatorProcess {
        method: Method::TwoStep,
        horizon: path.horizon(),
        learning_horizon: sched.learning_horizon,
        preliminary: est,
        preliminary_used: theta_hat,
        records,
        standardized: Vec::new(),
        sensitivity_passes: 1,
        filter_passes: sched.outputs.len() as u32,
    })
}

/// `eta(tau) = tau sqrt(T) I^{1/2} (theta(tau) - theta0)`, which has
/// covariance `tau · Id` in the limit.
pub fn standardized_process(
    process: &EstimatorProcess,
    theta0: &ThetaParams,
    fisher_ref: &FisherMatrix,
) -> Result<Vec<StandardizedRecord>> {
    let root = fisher_ref.sqrt()?;
    let scale = process.horizon.sqrt();
    Ok(process
        .records
        .iter()
        .map(|r| {
            let err = [r.theta[0] - theta0.lambda(), r.theta[1] - theta0.mu()];
            let v = root.mul_vec(err);
            StandardizedRecord {
                tau: r.tau,
                eta: [r.tau * scale * v[0], r.tau * scale * v[1]],
            }
        })
        .collect())
}

/// `G^{1/2} (theta - theta0)`; the Gram matrix plays the role of
/// `T · 𝕀_T`, so this is the per-replication standardized error.
pub fn standardized_error(record: &ProcessRecord, theta0: &ThetaParams) -> Result<[f64; 2]> {
    let err = [record.theta[0] - theta0.lambda(), record.theta[1] - theta0.mu()];
    Ok(record.gram.sqrt()?.mul_vec(err))
}
