//! Stationary law of the filter at the true parameter and the Fisher
//! information matrix.
//!
//! At the true rates the filter `x = pi(t)` is a diffusion on `(0, 1)`,
//!
//! ```text
//! dx = (mu - (lambda + mu) x) dt + b x (1 - x) dW̄,    b = y1 - y2,
//! ```
//!
//! whose stationary density, with `gamma = 2 / b²`, is
//!
//! ```text
//! f(x) ∝ x^{gamma (mu - lambda) - 2} (1 - x)^{gamma (lambda - mu) - 2}
//!        · exp(-gamma mu / x - gamma lambda / (1 - x)).
//! ```
//!
//! The normalizer is found by adaptive quadrature of the log-shifted
//! integrand. Both endpoints are essential singularities where every
//! derivative vanishes, so no endpoint substitution is needed.
//!
//! The Fisher information has no closed form. It is estimated as the time
//! average of `ṁ ṁᵀ` along a long simulated path.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{InitialBelief, SensitivityFilter};
use crate::io::fmt_f64;
use crate::linalg::FisherMatrix;
use crate::model::{StateSpace, ThetaParams};
use crate::quadrature::{integrate, QuadratureOptions};
use crate::sim::{grid_steps, simulate_observations, simulate_telegraph};

/// Normalized stationary density of the filter at `theta0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InvariantDensity {
    pub theta0: ThetaParams,
    pub states: StateSpace,
    pub gamma: f64,
    /// `ln G`, kept in log form because `G` can under- or overflow.
    pub log_normalizer: f64,
    mode: f64,
}

fn log_unnormalized(theta: &ThetaParams, gamma: f64, x: f64) -> f64 {
    let (l, m) = (theta.lambda(), theta.mu());
    let p = gamma * (m - l) - 2.0;
    let q = gamma * (l - m) - 2.0;
    p * x.ln() + q * (-x).ln_1p() - gamma * m / x - gamma * l / (1.0 - x)
}

/// Maximizer of the log-density; found by a coarse scan and golden-section
/// refinement on the bracketing cell.
fn locate_mode(theta: &ThetaParams, gamma: f64) -> f64 {
    let n = 2000;
    let f = |x: f64| log_unnormalized(theta, gamma, x);
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 1..n {
        let v = f(i as f64 / n as f64);
        if v > best.1 {
            best = (i, v);
        }
    }
    let (mut a, mut b) = ((best.0 - 1) as f64 / n as f64, (best.0 + 1) as f64 / n as f64);
    let g = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..80 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

impl InvariantDensity {
    pub fn new(theta0: ThetaParams, states: StateSpace) -> Result<Self> {
        Self::with_options(theta0, states, &QuadratureOptions::default())
    }

    pub fn with_options(
        theta0: ThetaParams,
        states: StateSpace,
        opts: &QuadratureOptions,
    ) -> Result<Self> {
        let gap = states.gap();
        let gamma = 2.0 / (gap * gap);
        let mode = locate_mode(&theta0, gamma);
        let shift = log_unnormalized(&theta0, gamma, mode);
        let scaled = integrate(
            |x| (log_unnormalized(&theta0, gamma, x) - shift).exp(),
            &[0.0, mode, 1.0],
            opts,
        )?;
        if !(scaled > 0.0) {
            return Err(Error::Quadrature(format!("normalizer is not positive ({scaled})")));
        }
        let log_normalizer = shift + scaled.ln();
        if !log_normalizer.is_finite() {
            return Err(Error::Quadrature("normalizer is not finite".into()));
        }
        Ok(Self {
            theta0,
            states,
            gamma,
            log_normalizer,
            mode,
        })
    }

    /// `G`; may be `0` or `inf` in floating point for extreme parameters.
    pub fn normalizer(&self) -> f64 {
        self.log_normalizer.exp()
    }

    /// Location of the density's maximum.
    pub fn mode(&self) -> f64 {
        self.mode
    }

    /// Unnormalized density, for quadrature checks.
    pub fn unnormalized(&self, x: f64) -> f64 {
        log_unnormalized(&self.theta0, self.gamma, x).exp()
    }

    pub fn ln_density(&self, x: f64) -> Result<f64> {
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::invalid("x", format!("must lie in (0, 1), got {x}")));
        }
        Ok(log_unnormalized(&self.theta0, self.gamma, x) - self.log_normalizer)
    }

    pub fn density(&self, x: f64) -> Result<f64> {
        Ok(self.ln_density(x)?.exp())
    }

    fn density_unchecked(&self, x: f64) -> f64 {
        (log_unnormalized(&self.theta0, self.gamma, x) - self.log_normalizer).exp()
    }

    /// `∫_a^b g(x) f(x) dx` for `0 <= a < b <= 1`.
    pub fn expectation<G: Fn(f64) -> f64>(&self, a: f64, b: f64, g: G) -> Result<f64> {
        if !(0.0 <= a && a < b && b <= 1.0) {
            return Err(Error::invalid("interval", format!("need 0 <= a < b <= 1, got [{a}, {b}]")));
        }
        let mut breaks = vec![a];
        if self.mode > a && self.mode < b {
            breaks.push(self.mode);
        }
        breaks.push(b);
        let opts = QuadratureOptions {
            abs_tol: 1e-15,
            ..QuadratureOptions::default()
        };
        integrate(|x| g(x) * self.density_unchecked(x), &breaks, &opts)
    }

    /// Probability mass of `[a, b]`.
    pub fn probability(&self, a: f64, b: f64) -> Result<f64> {
        self.expectation(a, b, |_| 1.0)
    }

    /// Mass of each of `bins` equal-width bins on `(0, 1)`.
    pub fn bin_probabilities(&self, bins: usize) -> Result<Vec<f64>> {
        (0..bins)
            .map(|i| self.probability(i as f64 / bins as f64, (i + 1) as f64 / bins as f64))
            .collect()
    }

    /// Density table with header `x,f` at `points` interior grid points.
    pub fn write_csv<W: Write>(&self, writer: W, points: usize) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["x", "f"])?;
        for i in 1..=points {
            let x = i as f64 / (points + 1) as f64;
            w.write_record([fmt_f64(x), fmt_f64(self.density_unchecked(x))])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `G(theta0)`.
pub fn normalizing_constant(theta0: &ThetaParams, states: &StateSpace) -> Result<f64> {
    Ok(InvariantDensity::new(*theta0, *states)?.normalizer())
}

pub fn invariant_density(den: &InvariantDensity, x: f64) -> Result<f64> {
    den.density(x)
}

#[derive(Debug, Clone, Copy)]
pub struct ErgodicOptions {
    pub horizon: f64,
    pub step: f64,
    /// Fraction of the run discarded before averaging.
    pub burn_in: f64,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        Self {
            horizon: 1e4,
            step: 0.01,
            burn_in: 0.1,
        }
    }
}

/// Time-averaged Fisher matrix plus the averages over the two halves of
/// the post-burn-in window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicFisher {
    pub matrix: FisherMatrix,
    pub halves: [FisherMatrix; 2],
    pub clamp_count: u64,
}

/// Simulates a path at `theta0`, runs the sensitivity filter at `theta0`
/// and averages `ṁ ṁᵀ` after the burn-in.
pub fn fisher_by_ergodic_average<R: Rng + ?Sized>(
    theta0: &ThetaParams,
    states: &StateSpace,
    opts: &ErgodicOptions,
    rng: &mut R,
) -> Result<ErgodicFisher> {
    if !(0.0..1.0).contains(&opts.burn_in) {
        return Err(Error::invalid("burn_in", "must lie in [0, 1)"));
    }
    let n = grid_steps(opts.horizon, opts.step)?;
    let events = simulate_telegraph(theta0, opts.horizon, rng)?;
    let path = simulate_observations(&events, states, opts.step, false, rng)?;
    let start = (opts.burn_in * n as f64).round() as usize;
    let mid = start + (n - start) / 2;
    if mid == start || mid == n {
        return Err(Error::Grid("averaging window is too short".into()));
    }
    let mut filter = SensitivityFilter::new(theta0, states, opts.step, InitialBelief::Stationary)?;
    let mut halves = [FisherMatrix::ZERO; 2];
    for (k, &dx) in path.increments().iter().enumerate() {
        if k >= start {
            halves[usize::from(k >= mid)].add_outer(filter.mean_gradient(), 1.0);
        }
        filter.advance(dx)?;
    }
    let h = opts.step;
    let total = halves[0].scaled(h).add(&halves[1].scaled(h));
    Ok(ErgodicFisher {
        matrix: total.scaled(1.0 / ((n - start) as f64 * h)),
        halves: [
            halves[0].scaled(1.0 / (mid - start) as f64),
            halves[1].scaled(1.0 / (n - mid) as f64),
        ],
        clamp_count: filter.clamp_count(),
    })
}

/// JSON form of a Fisher matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub theta0: ThetaParams,
    pub states: StateSpace,
    pub i11: f64,
    pub i12: f64,
    pub i22: f64,
    pub eigenvalues: [f64; 2],
    pub halves: [FisherMatrix; 2],
}

impl FisherReport {
    pub fn new(theta0: ThetaParams, states: StateSpace, fisher: &ErgodicFisher) -> Self {
        let m = fisher.matrix;
        Self {
            theta0,
            states,
            i11: m.i11,
            i12: m.i12,
            i22: m.i22,
            eigenvalues: m.eigenvalues(),
            halves: fisher.halves,
        }
    }
}
