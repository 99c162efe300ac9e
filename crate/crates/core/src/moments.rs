//! Method-of-moments estimator of `(lambda, mu)`.
//!
//! From unit-interval increments of `X` the estimator forms
//!
//! * `zeta = (1/T) Σ (X_{i+1} - X_i)² - 1`,
//! * `eta = (X_T/T - y1)(y2 - X_T/T)`, floored at `c0² / (8 c1²)`,
//!
//! and recovers the total rate `lambda + mu` as the root of
//! `Φ(alpha) = (zeta - (X_T/T)²) / (2 eta)` on `[2 c0, 2 c1]`, where
//! `Φ(x) = 1/x - (1 - e^{-x}) / x²`. When no root exists the total rate
//! falls back to `c0 + c1`. The split between `lambda` and `mu` comes from
//! where `X_T/T` sits between `y1` and `y2`.
//!
//! A single estimate can be written as one CSV row with header
//! `T,h,lambda_hat,mu_hat,beta,zeta,eta,eta_clamped,solvable`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{ParameterDomain, StateSpace};
use crate::sim::ObservationPath;

/// Below this argument `Φ` is evaluated by its Taylor series.
const PHI_SERIES_CUTOFF: f64 = 0.25;
const BISECTION_TOL: f64 = 1e-10;

pub const ESTIMATE_CSV_HEADER: [&str; 9] = [
    "T",
    "h",
    "lambda_hat",
    "mu_hat",
    "beta",
    "zeta",
    "eta",
    "eta_clamped",
    "solvable",
];

/// `Φ(x) = 1/x - (1 - e^{-x}) / x²` for `x > 0`.
pub fn phi(x: f64) -> Result<f64> {
    if !(x > 0.0) || x.is_nan() {
        return Err(Error::invalid("x", format!("must be positive, got {x}")));
    }
    Ok(phi_unchecked(x))
}

fn phi_unchecked(x: f64) -> f64 {
    if x < PHI_SERIES_CUTOFF {
        phi_series(x)
    } else {
        phi_closed(x)
    }
}

/// `Φ(x) = Σ_{k≥0} (-x)^k / (k + 2)!`.
fn phi_series(x: f64) -> f64 {
    let mut term = 0.5f64;
    let mut sum = 0.5f64;
    let mut k = 0u32;
    while term.abs() > 1e-18 * sum.abs() && k < 60 {
        term *= -x / f64::from(k + 3);
        sum += term;
        k += 1;
    }
    sum
}

fn phi_closed(x: f64) -> f64 {
    1.0 / x + (-x).exp_m1() / (x * x)
}

/// Statistics of the method of moments for one path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentStatistics {
    pub horizon: f64,
    pub step: f64,
    pub terminal_average: f64,
    pub zeta: f64,
    pub eta: f64,
    pub eta_clamped: f64,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub solvable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub lambda_hat: f64,
    pub mu_hat: f64,
    pub stats: MomentStatistics,
}

impl MomentEstimate {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(ESTIMATE_CSV_HEADER)?;
        let s = &self.stats;
        w.write_record([
            fmt_f64(s.horizon),
            fmt_f64(s.step),
            fmt_f64(self.lambda_hat),
            fmt_f64(self.mu_hat),
            fmt_f64(s.beta),
            fmt_f64(s.zeta),
            fmt_f64(s.eta),
            fmt_f64(s.eta_clamped),
            s.solvable.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }

    /// Parses the single-row CSV produced by [`MomentEstimate::write_csv`].
    ///
    /// The root `alpha` is not part of the row; it is restored as `beta`
    /// when the row is marked solvable.
    pub fn read_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = rdr.headers()?.clone();
        if header.iter().ne(ESTIMATE_CSV_HEADER.iter().copied()) {
            return Err(Error::Parse {
                line: 1,
                msg: format!("expected header `{}`", ESTIMATE_CSV_HEADER.join(",")),
            });
        }
        let mut records = rdr.records();
        let row = records.next().ok_or(Error::Parse {
            line: 2,
            msg: "missing data row".into(),
        })??;
        if records.next().is_some() {
            return Err(Error::Parse {
                line: 3,
                msg: "expected exactly one data row".into(),
            });
        }
        if row.len() != ESTIMATE_CSV_HEADER.len() {
            return Err(Error::Parse {
                line: 2,
                msg: format!("expected {} fields, got {}", ESTIMATE_CSV_HEADER.len(), row.len()),
            });
        }
        let num = |i: usize| -> Result<f64> {
            row[i].parse::<f64>().map_err(|_| Error::Parse {
                line: 2,
                msg: format!("`{}` is not a number: `{}`", ESTIMATE_CSV_HEADER[i], &row[i]),
            })
        };
        let solvable: bool = row[8].parse().map_err(|_| Error::Parse {
            line: 2,
            msg: format!("`solvable` must be true or false, got `{}`", &row[8]),
        })?;
        let beta = num(4)?;
        let horizon = num(0)?;
        let lambda_hat = num(2)?;
        Ok(MomentEstimate {
            lambda_hat,
            mu_hat: num(3)?,
            stats: MomentStatistics {
                horizon,
                step: num(1)?,
                terminal_average: f64::NAN,
                zeta: num(5)?,
                eta: num(6)?,
                eta_clamped: num(7)?,
                alpha: solvable.then_some(beta),
                beta,
                solvable,
            },
        })
    }
}

/// Checks that `T` and `1/h` are integers and returns `(T, 1/h)`.
fn unit_grid(path: &ObservationPath) -> Result<(usize, usize)> {
    let h = path.step();
    let inv = 1.0 / h;
    let per_unit = inv.round();
    if per_unit < 1.0 || (inv - per_unit).abs() > 1e-9 * per_unit {
        return Err(Error::Grid(format!(
            "moment estimator needs 1/h to be an integer, got h = {h}"
        )));
    }
    let per_unit = per_unit as usize;
    if path.len() % per_unit != 0 {
        return Err(Error::Grid(format!(
            "moment estimator needs an integer horizon, got T = {}",
            path.horizon()
        )));
    }
    Ok((path.len() / per_unit, per_unit))
}

/// Increments of `X` over consecutive unit intervals.
pub fn unit_increments(path: &ObservationPath) -> Result<Vec<f64>> {
    let (_, per_unit) = unit_grid(path)?;
    Ok(path
        .increments()
        .chunks_exact(per_unit)
        .map(|c| c.iter().sum())
        .collect())
}

/// `(1/T) Σ (X_{i+1} - X_i)² - 1` over unit intervals.
pub fn zeta(path: &ObservationPath) -> Result<f64> {
    let units = unit_increments(path)?;
    Ok(zeta_from_units(&units))
}

fn zeta_from_units(units: &[f64]) -> f64 {
    units.iter().map(|d| d * d).sum::<f64>() / units.len() as f64 - 1.0
}

/// Lower bound applied to `eta`.
pub fn eta_floor(domain: &ParameterDomain) -> f64 {
    domain.c0() * domain.c0() / (8.0 * domain.c1() * domain.c1())
}

/// `(eta, max(eta, c0²/(8 c1²)))` from the terminal average `X_T/T`.
pub fn eta_from_average(average: f64, states: &StateSpace, domain: &ParameterDomain) -> (f64, f64) {
    let eta = (average - states.y1()) * (states.y2() - average);
    (eta, eta.max(eta_floor(domain)))
}

pub fn eta(path: &ObservationPath, states: &StateSpace, domain: &ParameterDomain) -> (f64, f64) {
    let average = (path.terminal_value() - path.x0()) / path.horizon();
    eta_from_average(average, states, domain)
}

/// Root of `Φ(alpha) = (zeta - avg²) / (2 eta_clamped)` on `[2 c0, 2 c1]`,
/// or `None` when the target lies outside `[Φ(2 c1), Φ(2 c0)]`.
pub fn solve_alpha(
    zeta: f64,
    eta_clamped: f64,
    terminal_average: f64,
    domain: &ParameterDomain,
) -> Result<Option<f64>> {
    if !(eta_clamped > 0.0) {
        return Err(Error::invalid(
            "eta_clamped",
            format!("must be positive, got {eta_clamped}"),
        ));
    }
    let target = (zeta - terminal_average * terminal_average) / (2.0 * eta_clamped);
    let (mut lo, mut hi) = (2.0 * domain.c0(), 2.0 * domain.c1());
    let (phi_lo, phi_hi) = (phi_unchecked(lo), phi_unchecked(hi));
    if !(target >= phi_hi && target <= phi_lo) {
        return Ok(None);
    }
    if target == phi_lo {
        return Ok(Some(lo));
    }
    if target == phi_hi {
        return Ok(Some(hi));
    }
    // Φ is decreasing: Φ(lo) > target > Φ(hi).
    while hi - lo > BISECTION_TOL {
        let mid = 0.5 * (lo + hi);
        if phi_unchecked(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// Method-of-moments estimate from a path with integer horizon and
/// integer `1/h`. Requires `y1 < y2`.
pub fn estimate_moments(
    path: &ObservationPath,
    states: &StateSpace,
    domain: &ParameterDomain,
) -> Result<MomentEstimate> {
    let units = unit_increments(path)?;
    estimate_from_units(&units, path.step(), states, domain)
}

/// Same estimator computed from unit-interval increments alone.
pub fn estimate_from_units(
    units: &[f64],
    step: f64,
    states: &StateSpace,
    domain: &ParameterDomain,
) -> Result<MomentEstimate> {
    if states.y1() >= states.y2() {
        return Err(Error::invalid(
            "states",
            format!("expected y1 < y2, got y1 = {}, y2 = {}", states.y1(), states.y2()),
        ));
    }
    if units.is_empty() {
        return Err(Error::Grid("moment estimator needs T >= 1".into()));
    }
    if let Some(i) = units.iter().position(|d| !d.is_finite()) {
        return Err(Error::NonFinite { step: i });
    }
    let horizon = units.len() as f64;
    let average = units.iter().sum::<f64>() / horizon;
    let zeta = zeta_from_units(units);
    let (eta, eta_clamped) = eta_from_average(average, states, domain);
    let alpha = solve_alpha(zeta, eta_clamped, average, domain)?;
    let beta = alpha.unwrap_or(domain.c0() + domain.c1());
    let width = states.y2() - states.y1();
    let frac1 = (average - states.y1()) / width;
    let lambda_hat = beta * frac1;
    // Written as β - λ̂ so that λ̂ + μ̂ = β holds to rounding.
    let mu_hat = beta - lambda_hat;
    Ok(MomentEstimate {
        lambda_hat,
        mu_hat,
        stats: MomentStatistics {
            horizon,
            step,
            terminal_average: average,
            zeta,
            eta,
            eta_clamped,
            alpha,
            beta,
            solvable: alpha.is_some(),
        },
    })
}
