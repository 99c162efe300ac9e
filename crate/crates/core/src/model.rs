//! The two-state telegraph model: parameters, state values, the admissible
//! parameter box, and closed-form facts about the stationary chain.
//!
//! The hidden signal `Y(t)` jumps from `y1` to `y2` at rate `lambda` and
//! back at rate `mu`. All functions here are pure.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Switching rates `(lambda, mu)`. Both strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTheta", into = "RawTheta")]
pub struct ThetaParams {
    lambda: f64,
    mu: f64,
}

#[derive(Serialize, Deserialize)]
struct RawTheta {
    lambda: f64,
    mu: f64,
}

impl TryFrom<RawTheta> for ThetaParams {
    type Error = Error;
    fn try_from(raw: RawTheta) -> Result<Self> {
        ThetaParams::new(raw.lambda, raw.mu)
    }
}

impl From<ThetaParams> for RawTheta {
    fn from(t: ThetaParams) -> Self {
        RawTheta {
            lambda: t.lambda,
            mu: t.mu,
        }
    }
}

impl ThetaParams {
    pub fn new(lambda: f64, mu: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("must be positive, got {lambda}")));
        }
        if !(mu.is_finite() && mu > 0.0) {
            return Err(Error::invalid("mu", format!("must be positive, got {mu}")));
        }
        Ok(Self { lambda, mu })
    }

    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    #[inline]
    pub fn mu(&self) -> f64 {
        self.mu
    }

    #[inline]
    pub fn total_rate(&self) -> f64 {
        self.lambda + self.mu
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.lambda, self.mu]
    }
}

/// The two values taken by the hidden signal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStates", into = "RawStates")]
pub struct StateSpace {
    y1: f64,
    y2: f64,
}

#[derive(Serialize, Deserialize)]
struct RawStates {
    y1: f64,
    y2: f64,
}

impl TryFrom<RawStates> for StateSpace {
    type Error = Error;
    fn try_from(raw: RawStates) -> Result<Self> {
        StateSpace::new(raw.y1, raw.y2)
    }
}

impl From<StateSpace> for RawStates {
    fn from(s: StateSpace) -> Self {
        RawStates { y1: s.y1, y2: s.y2 }
    }
}

impl StateSpace {
    pub fn new(y1: f64, y2: f64) -> Result<Self> {
        if !(y1.is_finite() && y2.is_finite()) {
            return Err(Error::invalid("states", "state values must be finite"));
        }
        if y1 == y2 {
            return Err(Error::invalid(
                "states",
                format!("degenerate state space: y1 = y2 = {y1}"),
            ));
        }
        Ok(Self { y1, y2 })
    }

    #[inline]
    pub fn y1(&self) -> f64 {
        self.y1
    }

    #[inline]
    pub fn y2(&self) -> f64 {
        self.y2
    }

    /// `y1 - y2`, the gain of the filter's diffusion term.
    #[inline]
    pub fn gap(&self) -> f64 {
        self.y1 - self.y2
    }

    /// Both states shifted by `c`.
    pub fn translated(&self, c: f64) -> Result<Self> {
        Self::new(self.y1 + c, self.y2 + c)
    }

    /// Value of the signal in state `index` (1 or 2).
    pub fn value(&self, index: u8) -> f64 {
        if index == 1 {
            self.y1
        } else {
            self.y2
        }
    }
}

/// Admissible box `(c0, c1)` for each rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDomain", into = "RawDomain")]
pub struct ParameterDomain {
    c0: f64,
    c1: f64,
}

#[derive(Serialize, Deserialize)]
struct RawDomain {
    c0: f64,
    c1: f64,
}

impl TryFrom<RawDomain> for ParameterDomain {
    type Error = Error;
    fn try_from(raw: RawDomain) -> Result<Self> {
        ParameterDomain::new(raw.c0, raw.c1)
    }
}

impl From<ParameterDomain> for RawDomain {
    fn from(d: ParameterDomain) -> Self {
        RawDomain { c0: d.c0, c1: d.c1 }
    }
}

impl ParameterDomain {
    pub fn new(c0: f64, c1: f64) -> Result<Self> {
        if !(c0.is_finite() && c0 > 0.0) {
            return Err(Error::invalid("c0", format!("must be positive, got {c0}")));
        }
        if !(c1.is_finite() && c1 > c0) {
            return Err(Error::invalid("c1", format!("must exceed c0 = {c0}, got {c1}")));
        }
        Ok(Self { c0, c1 })
    }

    #[inline]
    pub fn c0(&self) -> f64 {
        self.c0
    }

    #[inline]
    pub fn c1(&self) -> f64 {
        self.c1
    }

    /// Strict membership in the open interval `(c0, c1)`.
    pub fn contains(&self, rate: f64) -> bool {
        rate > self.c0 && rate < self.c1
    }

    /// Projection onto the closed box `[c0, c1]`.
    pub fn clamp(&self, rate: f64) -> f64 {
        rate.clamp(self.c0, self.c1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationaryMoments {
    /// Stationary mean of `Y`.
    pub y_bar: f64,
    /// Stationary variance of `Y`.
    pub d_var: f64,
}

/// Ground truth of a simulation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub theta: ThetaParams,
    pub states: StateSpace,
    pub domain: ParameterDomain,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            theta: ThetaParams { lambda: 1.0, mu: 1.0 },
            states: StateSpace { y1: 0.0, y2: 1.0 },
            domain: ParameterDomain { c0: 0.1, c1: 5.0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelWarning {
    /// The moment-bound condition M(2) does not hold for this domain.
    ConditionM2Fails,
}

impl std::fmt::Display for ModelWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelWarning::ConditionM2Fails => f.write_str("M(2) fails"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedModel {
    pub spec: ModelSpec,
    pub warnings: Vec<ModelWarning>,
}

/// `(P(Y = y1), P(Y = y2))` under the stationary law.
pub fn stationary_distribution(theta: &ThetaParams) -> (f64, f64) {
    let a = theta.total_rate();
    (theta.mu / a, theta.lambda / a)
}

/// Transition matrix `P_ij(t) = P(Y(t) = y_j | Y(0) = y_i)`.
pub fn transition_probabilities(theta: &ThetaParams, t: f64) -> Result<[[f64; 2]; 2]> {
    if !(t >= 0.0) {
        return Err(Error::invalid("t", format!("time must be nonnegative, got {t}")));
    }
    let a = theta.total_rate();
    let (p1, p2) = stationary_distribution(theta);
    let e = (-a * t).exp();
    // Off-diagonals first; diagonals as complements keep rows summing to one.
    let p12 = p2 * (1.0 - e);
    let p21 = p1 * (1.0 - e);
    Ok([[1.0 - p12, p12], [p21, 1.0 - p21]])
}

pub fn stationary_moments(theta: &ThetaParams, states: &StateSpace) -> StationaryMoments {
    let a = theta.total_rate();
    let y_bar = (states.y1 * theta.mu + states.y2 * theta.lambda) / a;
    let gap = states.y2 - states.y1;
    let d_var = gap * gap * theta.lambda * theta.mu / (a * a);
    StationaryMoments { y_bar, d_var }
}

/// Stationary second moment `K(s) = E[Y(t) Y(t+s)]`.
pub fn covariance(theta: &ThetaParams, states: &StateSpace, s: f64) -> Result<f64> {
    if !(s >= 0.0) {
        return Err(Error::invalid("s", format!("lag must be nonnegative, got {s}")));
    }
    let m = stationary_moments(theta, states);
    Ok(m.y_bar * m.y_bar + m.d_var * (-theta.total_rate() * s).exp())
}

/// Condition M(n): `c0 / (y1 - y2)^2 > (2n + 9) / 4`.
pub fn check_condition_m(domain: &ParameterDomain, states: &StateSpace, n: u32) -> Result<bool> {
    if n < 2 {
        return Err(Error::invalid("n", format!("must be at least 2, got {n}")));
    }
    let gap = states.gap();
    Ok(domain.c0 / (gap * gap) > (2.0 * n as f64 + 9.0) / 4.0)
}

/// Checks that the true rates lie in the open box, that the states are
/// ordered `y1 < y2`, and collects warnings.
///
/// Failing M(2) is only a warning: the condition is sufficient for the
/// moment bounds behind the efficiency result, not necessary for the
/// estimators to behave.
pub fn validate_model(spec: &ModelSpec) -> Result<ValidatedModel> {
    // Re-run the constructors so specs assembled by hand are checked too.
    let domain = ParameterDomain::new(spec.domain.c0, spec.domain.c1)?;
    let states = StateSpace::new(spec.states.y1, spec.states.y2)?;
    let theta = ThetaParams::new(spec.theta.lambda, spec.theta.mu)?;
    if states.y1 > states.y2 {
        return Err(Error::invalid(
            "states",
            format!("expected y1 < y2, got y1 = {}, y2 = {}", states.y1, states.y2),
        ));
    }
    if !domain.contains(theta.lambda) {
        return Err(Error::invalid(
            "lambda",
            format!("{} not in ({}, {})", theta.lambda, domain.c0, domain.c1),
        ));
    }
    if !domain.contains(theta.mu) {
        return Err(Error::invalid(
            "mu",
            format!("{} not in ({}, {})", theta.mu, domain.c0, domain.c1),
        ));
    }
    let mut warnings = Vec::new();
    if !check_condition_m(&domain, &states, 2)? {
        warnings.push(ModelWarning::ConditionM2Fails);
    }
    Ok(ValidatedModel {
        spec: ModelSpec {
            theta,
            states,
            domain,
        },
        warnings,
    })
}
