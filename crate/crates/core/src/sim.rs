//! Exact simulation of the hidden telegraph signal and of discretized
//! observation paths `dX = Y dt + dW`.
//!
//! The signal is simulated event by event with exponential holding times,
//! so the only discretization is the observation grid. On that grid the
//! drift integral over each step is computed exactly from the jump times
//! and a `N(0, h)` Wiener increment is added.
//!
//! # CSV layout
//!
//! An [`ObservationPath`] is written with a single header line
//!
//! ```text
//! k,t,delta_x[,hidden_integral]
//! ```
//!
//! where `k` is the zero-based step index, `t = (k + 1) h` is the time at
//! the end of the step and `delta_x = X(t) - X(t - h)`. The optional last
//! column holds the exact `∫ Y dt` over the step. `X(0)` is taken as zero.

use std::io::{Read, Write};

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::model::{stationary_distribution, StateSpace, ThetaParams};

/// Relative tolerance used when deciding whether a horizon is a whole
/// number of grid steps.
const GRID_TOL: f64 = 1e-9;

/// Number of steps of size `step` in `[0, horizon]`, or an error when the
/// step does not divide the horizon.
pub fn grid_steps(horizon: f64, step: f64) -> Result<usize> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::invalid("step", format!("must be positive, got {step}")));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let ratio = horizon / step;
    let n = ratio.round();
    if n < 1.0 || (ratio - n).abs() > GRID_TOL * n.max(1.0) {
        return Err(Error::Grid(format!(
            "step h = {step} does not divide horizon T = {horizon}"
        )));
    }
    if n > u32::MAX as f64 {
        return Err(Error::Grid(format!("too many steps ({n})")));
    }
    Ok(n as usize)
}

/// A realization of the telegraph signal on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct EventPath {
    initial_state: u8,
    jump_times: Vec<f64>,
    horizon: f64,
}

impl EventPath {
    /// Builds a path from explicit jump times (strictly increasing, inside
    /// `(0, horizon]`).
    pub fn new(initial_state: u8, jump_times: Vec<f64>, horizon: f64) -> Result<Self> {
        if initial_state != 1 && initial_state != 2 {
            return Err(Error::invalid("initial_state", "must be 1 or 2"));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
        }
        let mut prev = 0.0;
        for &t in &jump_times {
            if !(t > prev && t <= horizon) {
                return Err(Error::invalid(
                    "jump_times",
                    "must be strictly increasing inside (0, horizon]",
                ));
            }
            prev = t;
        }
        Ok(Self {
            initial_state,
            jump_times,
            horizon,
        })
    }

    pub fn initial_state(&self) -> u8 {
        self.initial_state
    }

    pub fn jump_times(&self) -> &[f64] {
        &self.jump_times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    /// State after `jumps` transitions.
    #[inline]
    pub fn state_after(&self, jumps: usize) -> u8 {
        if jumps % 2 == 0 {
            self.initial_state
        } else {
            3 - self.initial_state
        }
    }

    /// Total time spent in state 1.
    pub fn occupation_time_state1(&self) -> f64 {
        let mut prev = 0.0;
        let mut total = 0.0;
        for (j, &t) in self.jump_times.iter().enumerate() {
            if self.state_after(j) == 1 {
                total += t - prev;
            }
            prev = t;
        }
        if self.state_after(self.jump_times.len()) == 1 {
            total += self.horizon - prev;
        }
        total
    }
}

/// Simulates a stationary telegraph path up to `horizon`.
///
/// The initial state is drawn from the stationary law; holding times are
/// exponential with rate `lambda` in state 1 and `mu` in state 2.
pub fn simulate_telegraph<R: Rng + ?Sized>(
    theta: &ThetaParams,
    horizon: f64,
    rng: &mut R,
) -> Result<EventPath> {
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid("horizon", format!("must be positive, got {horizon}")));
    }
    let (p1, _) = stationary_distribution(theta);
    let u: f64 = rng.random();
    let initial_state = if u < p1 { 1 } else { 2 };
    let mut state = initial_state;
    let mut t = 0.0;
    let mut jump_times = Vec::with_capacity((horizon * theta.total_rate()) as usize + 16);
    loop {
        let rate = if state == 1 { theta.lambda() } else { theta.mu() };
        let e: f64 = rng.sample(Exp1);
        t += e / rate;
        if t > horizon {
            break;
        }
        jump_times.push(t);
        state = 3 - state;
    }
    Ok(EventPath {
        initial_state,
        jump_times,
        horizon,
    })
}

/// Exact per-step integrals `∫_{kh}^{(k+1)h} Y dt` on the grid of `step`.
pub fn integrate_hidden(path: &EventPath, states: &StateSpace, step: f64) -> Result<Vec<f64>> {
    let n = grid_steps(path.horizon, step)?;
    let jumps = &path.jump_times;
    let mut out = Vec::with_capacity(n);
    let mut j = 0;
    let mut value = states.value(path.initial_state);
    let mut other = states.value(3 - path.initial_state);
    for k in 0..n {
        let start = k as f64 * step;
        let end = if k + 1 == n {
            path.horizon
        } else {
            (k + 1) as f64 * step
        };
        let mut cur = start;
        let mut acc = 0.0;
        while j < jumps.len() && jumps[j] < end {
            acc += value * (jumps[j] - cur);
            cur = jumps[j];
            std::mem::swap(&mut value, &mut other);
            j += 1;
        }
        acc += value * (end - cur);
        out.push(acc);
    }
    Ok(out)
}

/// Observation increments on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationPath {
    step: f64,
    x0: f64,
    increments: Vec<f64>,
    hidden_integrals: Option<Vec<f64>>,
}

impl ObservationPath {
    pub fn new(step: f64, increments: Vec<f64>, hidden_integrals: Option<Vec<f64>>) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::invalid("step", format!("must be positive, got {step}")));
        }
        if increments.is_empty() {
            return Err(Error::invalid("increments", "path has no increments"));
        }
        if let Some(h) = &hidden_integrals {
            if h.len() != increments.len() {
                return Err(Error::invalid(
                    "hidden_integrals",
                    "length differs from the increments",
                ));
            }
        }
        Ok(Self {
            step,
            x0: 0.0,
            increments,
            hidden_integrals,
        })
    }

    #[inline]
    pub fn step(&self) -> f64 {
        self.step
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.increments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.increments.is_empty()
    }

    pub fn horizon(&self) -> f64 {
        self.increments.len() as f64 * self.step
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    #[inline]
    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn hidden_integrals(&self) -> Option<&[f64]> {
        self.hidden_integrals.as_deref()
    }

    /// `X(T)` by cumulative summation from `x0`.
    pub fn terminal_value(&self) -> f64 {
        self.x0 + self.increments.iter().sum::<f64>()
    }

    /// The first `n` steps of the path.
    pub fn truncated(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::Grid(format!(
                "cannot truncate a path of {} steps to {n}",
                self.len()
            )));
        }
        Ok(Self {
            step: self.step,
            x0: self.x0,
            increments: self.increments[..n].to_vec(),
            hidden_integrals: self.hidden_integrals.as_ref().map(|h| h[..n].to_vec()),
        })
    }

    /// Grid index of time `t`, which must lie on the grid within `[0, T]`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let ratio = t / self.step;
        let k = ratio.round();
        if !(k >= 0.0 && k <= self.len() as f64) || (ratio - k).abs() > GRID_TOL * k.max(1.0) {
            return Err(Error::Grid(format!(
                "time {t} is not a grid point of step {} in [0, {}]",
                self.step,
                self.horizon()
            )));
        }
        Ok(k as usize)
    }

    /// The path as observed under drift `Y + c`.
    pub fn translated(&self, c: f64) -> Self {
        let shift = c * self.step;
        Self {
            step: self.step,
            x0: self.x0,
            increments: self.increments.iter().map(|dx| dx + shift).collect(),
            hidden_integrals: self
                .hidden_integrals
                .as_ref()
                .map(|h| h.iter().map(|v| v + shift).collect()),
        }
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        match &self.hidden_integrals {
            Some(_) => w.write_record(["k", "t", "delta_x", "hidden_integral"])?,
            None => w.write_record(["k", "t", "delta_x"])?,
        }
        for (k, dx) in self.increments.iter().enumerate() {
            let t = (k + 1) as f64 * self.step;
            let mut row = vec![k.to_string(), fmt_f64(t), fmt_f64(*dx)];
            if let Some(h) = &self.hidden_integrals {
                row.push(fmt_f64(h[k]));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Parses the CSV layout documented at module level. The step is
    /// recovered from the `t` column and must be consistent on every row.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        let with_hidden = match header.as_slice() {
            [k, t, dx] if k == "k" && t == "t" && dx == "delta_x" => false,
            [k, t, dx, h] if k == "k" && t == "t" && dx == "delta_x" && h == "hidden_integral" => {
                true
            }
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    msg: format!(
                        "expected header `k,t,delta_x[,hidden_integral]`, got `{}`",
                        header.join(",")
                    ),
                })
            }
        };
        let mut step = None;
        let mut increments = Vec::new();
        let mut hidden = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i + 2;
            let record = record?;
            let field = |idx: usize| -> Result<f64> {
                let raw = record.get(idx).ok_or_else(|| Error::Parse {
                    line,
                    msg: "missing column".into(),
                })?;
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("not a number: `{raw}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("non-finite value `{raw}`"),
                    });
                }
                Ok(v)
            };
            let k: usize = record
                .get(0)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    msg: "bad step index".into(),
                })?;
            if k != i {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected k = {i}, got {k}"),
                });
            }
            let t = field(1)?;
            let h = *step.get_or_insert(t / (k + 1) as f64);
            if !(h > 0.0) || (t - (k + 1) as f64 * h).abs() > GRID_TOL * t.abs().max(1.0) {
                return Err(Error::Parse {
                    line,
                    msg: format!("time {t} is off the uniform grid of step {h}"),
                });
            }
            increments.push(field(2)?);
            if with_hidden {
                hidden.push(field(3)?);
            }
        }
        let step = step.ok_or(Error::Parse {
            line: 2,
            msg: "path has no rows".into(),
        })?;
        ObservationPath::new(step, increments, with_hidden.then_some(hidden))
    }
}

/// Adds `√h · N(0, 1)` noise to the exact drift integral of every step.
pub fn simulate_observations<R: Rng + ?Sized>(
    path: &EventPath,
    states: &StateSpace,
    step: f64,
    keep_hidden: bool,
    rng: &mut R,
) -> Result<ObservationPath> {
    let drift = integrate_hidden(path, states, step)?;
    let sd = step.sqrt();
    let increments = drift
        .iter()
        .map(|d| {
            let z: f64 = rng.sample(StandardNormal);
            d + sd * z
        })
        .collect();
    ObservationPath::new(step, increments, keep_hidden.then_some(drift))
}
