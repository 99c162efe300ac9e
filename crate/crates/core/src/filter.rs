//! Nonlinear (Wonham) filter for the hidden telegraph signal and its
//! derivatives with respect to the switching rates.
//!
//! `pi(t) = P(Y(t) = y1 | X up to t)` solves
//!
//! ```text
//! dpi = [mu - (lambda + mu) pi - pi (1 - pi) b m] dt + pi (1 - pi) b dX,
//! m   = y2 + b pi,   b = y1 - y2,
//! ```
//!
//! which is integrated with an explicit Euler scheme driven directly by the
//! observed increments. After every step `pi` is clamped to
//! `[CLAMP_EPS, 1 - CLAMP_EPS]`. The sensitivities `dpi/dlambda` and
//! `dpi/dmu` follow the formally differentiated equations, discretized the
//! same way, so they are the exact derivatives of the discrete recursion
//! wherever the clamp is inactive.
//!
//! All stochastic and deterministic integrals are left-point sums.
//!
//! [`FilterTrajectory::write_csv`] writes the columns
//! `t,pi,dpi_dlambda,dpi_dmu` (sensitivity columns empty when absent).

use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::FisherMatrix;
use crate::model::{StateSpace, ThetaParams};
use crate::sim::ObservationPath;

pub const CLAMP_EPS: f64 = 1e-9;

/// Starting value of the filter.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum InitialBelief {
    /// `mu / (lambda + mu)`.
    #[default]
    Stationary,
    Fixed(f64),
}

/// `m = y2 + (y1 - y2) pi`.
pub fn conditional_mean(pi: f64, states: &StateSpace) -> Result<f64> {
    if !(0.0..=1.0).contains(&pi) {
        return Err(Error::invalid("pi", format!("must lie in [0, 1], got {pi}")));
    }
    Ok(states.y2() + states.gap() * pi)
}

#[derive(Debug, Clone, Copy)]
struct Dynamics {
    lambda: f64,
    mu: f64,
    y2: f64,
    b: f64,
}

impl Dynamics {
    fn new(theta: &ThetaParams, states: &StateSpace) -> Self {
        Self {
            lambda: theta.lambda(),
            mu: theta.mu(),
            y2: states.y2(),
            b: states.gap(),
        }
    }

    #[inline(always)]
    fn mean(&self, pi: f64) -> f64 {
        self.y2 + self.b * pi
    }

    #[inline(always)]
    fn drift(&self, pi: f64) -> f64 {
        self.mu - (self.lambda + self.mu) * pi - pi * (1.0 - pi) * self.b * self.mean(pi)
    }
}

#[inline(always)]
fn clamp_pi(pi: f64, clamps: &mut u64) -> f64 {
    if pi < CLAMP_EPS {
        *clamps += 1;
        CLAMP_EPS
    } else if pi > 1.0 - CLAMP_EPS {
        *clamps += 1;
        1.0 - CLAMP_EPS
    } else {
        pi
    }
}

fn initial_pi(theta: &ThetaParams, init: InitialBelief) -> Result<f64> {
    match init {
        InitialBelief::Stationary => Ok(theta.mu() / theta.total_rate()),
        InitialBelief::Fixed(p) if (0.0..=1.0).contains(&p) => {
            Ok(p.clamp(CLAMP_EPS, 1.0 - CLAMP_EPS))
        }
        InitialBelief::Fixed(p) => Err(Error::invalid("pi0", format!("must lie in [0, 1], got {p}"))),
    }
}

/// Streaming filter for `pi` only.
#[derive(Debug, Clone)]
pub struct WonhamFilter {
    dynamics: Dynamics,
    step: f64,
    pi: f64,
    steps: usize,
    clamps: u64,
}

impl WonhamFilter {
    pub fn new(
        theta: &ThetaParams,
        states: &StateSpace,
        step: f64,
        init: InitialBelief,
    ) -> Result<Self> {
        Ok(Self {
            dynamics: Dynamics::new(theta, states),
            step,
            pi: initial_pi(theta, init)?,
            steps: 0,
            clamps: 0,
        })
    }

    #[inline]
    pub fn pi(&self) -> f64 {
        self.pi
    }

    /// Conditional mean at the current time.
    #[inline]
    pub fn mean(&self) -> f64 {
        self.dynamics.mean(self.pi)
    }

    pub fn clamp_count(&self) -> u64 {
        self.clamps
    }

    #[inline]
    pub fn advance(&mut self, dx: f64) -> Result<()> {
        if !dx.is_finite() {
            return Err(Error::NonFinite { step: self.steps });
        }
        let d = &self.dynamics;
        let pi = self.pi;
        let next = pi + d.drift(pi) * self.step + pi * (1.0 - pi) * d.b * dx;
        self.pi = clamp_pi(next, &mut self.clamps);
        self.steps += 1;
        Ok(())
    }
}

/// Streaming filter for `pi` and its two rate sensitivities.
#[derive(Debug, Clone)]
pub struct SensitivityFilter {
    inner: WonhamFilter,
    dlambda: f64,
    dmu: f64,
}

impl SensitivityFilter {
    pub fn new(
        theta: &ThetaParams,
        states: &StateSpace,
        step: f64,
        init: InitialBelief,
    ) -> Result<Self> {
        Ok(Self {
            inner: WonhamFilter::new(theta, states, step, init)?,
            dlambda: 0.0,
            dmu: 0.0,
        })
    }

    #[inline]
    pub fn pi(&self) -> f64 {
        self.inner.pi
    }

    #[inline]
    pub fn mean(&self) -> f64 {
        self.inner.mean()
    }

    #[inline]
    pub fn sensitivities(&self) -> [f64; 2] {
        [self.dlambda, self.dmu]
    }

    /// Gradient of the conditional mean, `(y1 - y2) (dpi/dlambda, dpi/dmu)`.
    #[inline]
    pub fn mean_gradient(&self) -> [f64; 2] {
        let b = self.inner.dynamics.b;
        [b * self.dlambda, b * self.dmu]
    }

    pub fn clamp_count(&self) -> u64 {
        self.inner.clamps
    }

    #[inline]
    pub fn advance(&mut self, dx: f64) -> Result<()> {
        if !dx.is_finite() {
            return Err(Error::NonFinite {
                step: self.inner.steps,
            });
        }
        let d = self.inner.dynamics;
        let h = self.inner.step;
        let pi = self.inner.pi;
        let q = pi * (1.0 - pi);
        let m = d.mean(pi);
        let decay = d.lambda + d.mu + (1.0 - 2.0 * pi) * d.b * m + q * d.b * d.b;
        let gain = (1.0 - 2.0 * pi) * d.b;
        let dl = self.dlambda;
        let dm = self.dmu;
        self.dlambda = dl + (-pi - decay * dl) * h + gain * dl * dx;
        self.dmu = dm + ((1.0 - pi) - decay * dm) * h + gain * dm * dx;
        let next = pi + d.drift(pi) * h + q * d.b * dx;
        self.inner.pi = clamp_pi(next, &mut self.inner.clamps);
        self.inner.steps += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sensitivities {
    pub dlambda: Vec<f64>,
    pub dmu: Vec<f64>,
}

/// Filter output on the grid `t_k = k h`, `k = 0..=n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterTrajectory {
    pub step: f64,
    pub theta_used: ThetaParams,
    pub states: StateSpace,
    pub pi: Vec<f64>,
    pub sensitivities: Option<Sensitivities>,
    /// Number of steps at which the clamp engaged.
    pub clamp_count: u64,
}

impl FilterTrajectory {
    pub fn len(&self) -> usize {
        self.pi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pi.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    fn window(&self, t0: f64, t: f64) -> Result<(usize, usize)> {
        let idx = |s: f64| -> Result<usize> {
            let r = s / self.step;
            let k = r.round();
            if !(k >= 0.0 && k < self.pi.len() as f64) || (r - k).abs() > 1e-9 * k.max(1.0) {
                return Err(Error::Grid(format!("time {s} is not a grid point of the trajectory")));
            }
            Ok(k as usize)
        };
        let (k0, k1) = (idx(t0)?, idx(t)?);
        if k0 >= k1 {
            return Err(Error::EmptyWindow { t0, t });
        }
        Ok((k0, k1))
    }

    fn require_sensitivities(&self) -> Result<&Sensitivities> {
        self.sensitivities
            .as_ref()
            .ok_or_else(|| Error::invalid("trajectory", "sensitivities were not computed"))
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "pi", "dpi_dlambda", "dpi_dmu"])?;
        for (k, pi) in self.pi.iter().enumerate() {
            let (dl, dm) = match &self.sensitivities {
                Some(s) => (fmt_f64(s.dlambda[k]), fmt_f64(s.dmu[k])),
                None => (String::new(), String::new()),
            };
            w.write_record([fmt_f64(self.time(k)), fmt_f64(*pi), dl, dm])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs the filter for `pi` along the whole path.
pub fn run_filter(
    theta: &ThetaParams,
    states: &StateSpace,
    path: &ObservationPath,
    init: InitialBelief,
) -> Result<FilterTrajectory> {
    let mut f = WonhamFilter::new(theta, states, path.step(), init)?;
    let mut pi = Vec::with_capacity(path.len() + 1);
    pi.push(f.pi());
    for &dx in path.increments() {
        f.advance(dx)?;
        pi.push(f.pi());
    }
    Ok(FilterTrajectory {
        step: path.step(),
        theta_used: *theta,
        states: *states,
        pi,
        sensitivities: None,
        clamp_count: f.clamp_count(),
    })
}

/// Runs the filter jointly with both sensitivities (started at zero).
pub fn run_filter_with_sensitivities(
    theta: &ThetaParams,
    states: &StateSpace,
    path: &ObservationPath,
) -> Result<FilterTrajectory> {
    let mut f = SensitivityFilter::new(theta, states, path.step(), InitialBelief::Stationary)?;
    let n = path.len() + 1;
    let mut pi = Vec::with_capacity(n);
    let mut dlambda = Vec::with_capacity(n);
    let mut dmu = Vec::with_capacity(n);
    let push = |f: &SensitivityFilter, pi: &mut Vec<f64>, dl: &mut Vec<f64>, dm: &mut Vec<f64>| {
        pi.push(f.pi());
        let [a, b] = f.sensitivities();
        dl.push(a);
        dm.push(b);
    };
    push(&f, &mut pi, &mut dlambda, &mut dmu);
    for &dx in path.increments() {
        f.advance(dx)?;
        push(&f, &mut pi, &mut dlambda, &mut dmu);
    }
    Ok(FilterTrajectory {
        step: path.step(),
        theta_used: *theta,
        states: *states,
        pi,
        sensitivities: Some(Sensitivities { dlambda, dmu }),
        clamp_count: f.clamp_count(),
    })
}

/// `(1/t) Σ ṁ ṁᵀ h` over the grid points of `[t0, t)`.
pub fn empirical_fisher(
    traj: &FilterTrajectory,
    states: &StateSpace,
    t0: f64,
    t: f64,
) -> Result<FisherMatrix> {
    let (k0, k1) = traj.window(t0, t)?;
    let sens = traj.require_sensitivities()?;
    let b = states.gap();
    let mut acc = FisherMatrix::ZERO;
    for k in k0..k1 {
        acc.add_outer([b * sens.dlambda[k], b * sens.dmu[k]], traj.step);
    }
    Ok(acc.scaled(1.0 / t))
}

/// Un-normalized score `Σ ṁ (ΔX - m h)` over `[t0, t)`.
pub fn score_integral(
    traj: &FilterTrajectory,
    path: &ObservationPath,
    states: &StateSpace,
    t0: f64,
    t: f64,
) -> Result<[f64; 2]> {
    let (k0, k1) = traj.window(t0, t)?;
    if k1 > path.len() {
        return Err(Error::Grid("trajectory is longer than the path".into()));
    }
    let sens = traj.require_sensitivities()?;
    let b = states.gap();
    let h = traj.step;
    let mut score = [0.0; 2];
    for k in k0..k1 {
        let m = states.y2() + b * traj.pi[k];
        let innovation = path.increments()[k] - m * h;
        score[0] += b * sens.dlambda[k] * innovation;
        score[1] += b * sens.dmu[k] * innovation;
    }
    Ok(score)
}

/// `log L = Σ m ΔX - ½ Σ m² h` over `[0, t)`, relative to the zero-drift
/// reference measure.
pub fn log_likelihood(
    theta: &ThetaParams,
    states: &StateSpace,
    path: &ObservationPath,
    t: f64,
) -> Result<f64> {
    let k1 = path.index_of(t)?;
    let h = path.step();
    let mut f = WonhamFilter::new(theta, states, h, InitialBelief::Stationary)?;
    let mut ll = 0.0;
    for &dx in &path.increments()[..k1] {
        let m = f.mean();
        ll += m * dx - 0.5 * m * m * h;
        f.advance(dx)?;
    }
    Ok(ll)
}

/// Partial log-likelihood sum over `[s, t)` of a precomputed `pi`
/// trajectory; `log_likelihood` over `[0, t)` equals the sum over `[0, s)`
/// plus this.
pub fn log_likelihood_window(
    traj: &FilterTrajectory,
    path: &ObservationPath,
    s: f64,
    t: f64,
) -> Result<f64> {
    let (k0, k1) = traj.window(s, t)?;
    let h = traj.step;
    let mut ll = 0.0;
    for k in k0..k1 {
        let m = traj.states.y2() + traj.states.gap() * traj.pi[k];
        ll += m * path.increments()[k] - 0.5 * m * m * h;
    }
    Ok(ll)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_observations, simulate_telegraph};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn states01() -> StateSpace {
        StateSpace::new(0.0, 1.0).unwrap()
    }

    fn sample_path(theta: &ThetaParams, states: &StateSpace, t: f64, h: f64, seed: u64) -> ObservationPath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ev = simulate_telegraph(theta, t, &mut rng).unwrap();
        simulate_observations(&ev, states, h, false, &mut rng).unwrap()
    }

    #[test]
    fn conditional_mean_examples() {
        let s = StateSpace::new(-2.0, 3.0).unwrap();
        assert_eq!(conditional_mean(1.0, &s).unwrap(), -2.0);
        assert_eq!(conditional_mean(0.0, &s).unwrap(), 3.0);
        assert_eq!(conditional_mean(0.5, &states01()).unwrap(), 0.5);
        assert!(conditional_mean(1.5, &s).is_err());
    }

    #[test]
    fn noise_free_input_stays_near_stationary_mean() {
        let theta = ThetaParams::new(1.0, 3.0).unwrap();
        let s = states01();
        let h = 0.01;
        let mut f = WonhamFilter::new(&theta, &s, h, InitialBelief::Stationary).unwrap();
        let p0 = f.pi();
        for _ in 0..1000 {
            let dx = f.mean() * h;
            f.advance(dx).unwrap();
        }
        // With the self-consistent increment the update reduces to
        // dpi = [mu - (lambda + mu) pi] dt, whose fixed point is p0.
        assert!((f.pi() - p0).abs() < 1e-12);
    }

    #[test]
    fn label_swap_maps_pi_to_complement() {
        let theta = ThetaParams::new(1.3, 1.3).unwrap();
        let path = sample_path(&theta, &states01(), 50.0, 0.01, 4);
        let a = run_filter(&theta, &states01(), &path, InitialBelief::Stationary).unwrap();
        // Swapped labels, same increments.
        let swapped = StateSpace::new(1.0, 0.0).unwrap();
        let b = run_filter(&theta, &swapped, &path, InitialBelief::Stationary).unwrap();
        // Same labels, reflected increments h - dX (signal 1 - Y).
        let h = path.step();
        let reflected = ObservationPath::new(h, path.increments().iter().map(|d| h - d).collect(), None).unwrap();
        let c = run_filter(&theta, &states01(), &reflected, InitialBelief::Stationary).unwrap();
        for k in 0..a.len() {
            assert!((a.pi[k] + b.pi[k] - 1.0).abs() < 1e-9);
            assert!((a.pi[k] + c.pi[k] - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn clamp_contract() {
        let theta = ThetaParams::new(0.2, 0.2).unwrap();
        let s = StateSpace::new(0.0, 5.0).unwrap();
        let path = ObservationPath::new(0.1, vec![3.0, -3.0, 2.5, 10.0, -10.0, 0.0], None).unwrap();
        let t = run_filter(&theta, &s, &path, InitialBelief::Stationary).unwrap();
        assert!(t.clamp_count > 0);
        assert!(t.pi.iter().all(|&p| (CLAMP_EPS..=1.0 - CLAMP_EPS).contains(&p)));
    }

    #[test]
    fn non_finite_increment_reports_step() {
        let theta = ThetaParams::new(1.0, 1.0).unwrap();
        let path = ObservationPath::new(0.1, vec![0.1, f64::NAN, 0.0], None).unwrap();
        match run_filter(&theta, &states01(), &path, InitialBelief::Stationary) {
            Err(Error::NonFinite { step }) => assert_eq!(step, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn first_step_sensitivities() {
        let theta = ThetaParams::new(1.0, 3.0).unwrap();
        let path = ObservationPath::new(0.01, vec![0.2, -0.1], None).unwrap();
        let t = run_filter_with_sensitivities(&theta, &states01(), &path).unwrap();
        let s = t.sensitivities.as_ref().unwrap();
        let p0 = 0.75;
        assert_eq!((s.dlambda[0], s.dmu[0]), (0.0, 0.0));
        assert!((s.dlambda[1] + 0.01 * p0).abs() < 1e-15);
        assert!((s.dmu[1] - 0.01 * (1.0 - p0)).abs() < 1e-15);
    }

    #[test]
    fn fisher_of_zero_sensitivities_is_zero() {
        let theta = ThetaParams::new(1.0, 1.0).unwrap();
        let path = ObservationPath::new(0.5, vec![0.0; 4], None).unwrap();
        let mut t = run_filter_with_sensitivities(&theta, &states01(), &path).unwrap();
        let s = t.sensitivities.as_mut().unwrap();
        s.dlambda.iter_mut().for_each(|v| *v = 0.0);
        s.dmu.iter_mut().for_each(|v| *v = 0.0);
        assert_eq!(empirical_fisher(&t, &states01(), 0.0, 2.0).unwrap(), FisherMatrix::ZERO);
        assert!(matches!(
            empirical_fisher(&t, &states01(), 1.0, 1.0),
            Err(Error::EmptyWindow { .. })
        ));
        let plain = run_filter(&theta, &states01(), &path, InitialBelief::Stationary).unwrap();
        assert!(empirical_fisher(&plain, &states01(), 0.0, 2.0).is_err());
    }

    #[test]
    fn fisher_is_symmetric_psd() {
        let theta = ThetaParams::new(1.0, 2.0).unwrap();
        let path = sample_path(&theta, &states01(), 100.0, 0.01, 8);
        let t = run_filter_with_sensitivities(&theta, &states01(), &path).unwrap();
        let i = empirical_fisher(&t, &states01(), 10.0, 100.0).unwrap();
        assert!(i.is_psd(1e-12));
        assert!(i.det() > 0.0);
    }

    #[test]
    fn zero_innovation_gives_zero_score() {
        let theta = ThetaParams::new(1.0, 1.0).unwrap();
        let s = states01();
        let h = 0.01;
        let mut f = WonhamFilter::new(&theta, &s, h, InitialBelief::Stationary).unwrap();
        let mut inc = Vec::new();
        for _ in 0..500 {
            let dx = f.mean() * h;
            inc.push(dx);
            f.advance(dx).unwrap();
        }
        let path = ObservationPath::new(h, inc, None).unwrap();
        let t = run_filter_with_sensitivities(&theta, &s, &path).unwrap();
        let sc = score_integral(&t, &path, &s, 0.0, 5.0).unwrap();
        assert!(sc[0].abs() < 1e-15 && sc[1].abs() < 1e-15);
    }

    #[test]
    fn log_likelihood_zero_drift_and_additivity() {
        // With states (0, tiny) the drift is essentially zero.
        let theta = ThetaParams::new(1.0, 1.0).unwrap();
        let path = sample_path(&theta, &states01(), 20.0, 0.01, 2);
        let s = states01();
        let full = log_likelihood(&theta, &s, &path, 20.0).unwrap();
        let head = log_likelihood(&theta, &s, &path, 7.0).unwrap();
        let traj = run_filter(&theta, &s, &path, InitialBelief::Stationary).unwrap();
        let tail = log_likelihood_window(&traj, &path, 7.0, 20.0).unwrap();
        assert!((full - (head + tail)).abs() < 1e-9 * full.abs().max(1.0));
        // Zero-drift reference: a path with all-zero increments and a filter
        // whose mean is zero at every step gives log L = 0.
        let zero = StateSpace::new(0.0, 1.0).unwrap();
        let mut traj0 = traj.clone();
        traj0.pi.iter_mut().for_each(|p| *p = 1.0);
        let ll0 = log_likelihood_window(&traj0, &path, 0.0, 20.0).unwrap();
        assert_eq!(zero.y2() + zero.gap() * 1.0, 0.0);
        assert_eq!(ll0, 0.0);
    }

    #[test]
    fn trajectory_csv_header() {
        let theta = ThetaParams::new(1.0, 1.0).unwrap();
        let path = ObservationPath::new(0.5, vec![0.1, 0.2], None).unwrap();
        let t = run_filter_with_sensitivities(&theta, &states01(), &path).unwrap();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "t,pi,dpi_dlambda,dpi_dmu");
        assert_eq!(text.lines().count(), 4);
    }

    #[test]
    fn drift_translation_equivariance() {
        let theta = ThetaParams::new(1.0, 2.0).unwrap();
        let s = states01();
        let path = sample_path(&theta, &s, 30.0, 0.01, 21);
        let c = 2.75;
        let s2 = s.translated(c).unwrap();
        let p2 = path.translated(c);
        let a = run_filter_with_sensitivities(&theta, &s, &path).unwrap();
        let b = run_filter_with_sensitivities(&theta, &s2, &p2).unwrap();
        let fa = empirical_fisher(&a, &s, 1.0, 30.0).unwrap();
        let fb = empirical_fisher(&b, &s2, 1.0, 30.0).unwrap();
        assert!((fa.i11 - fb.i11).abs() < 1e-9 && (fa.i22 - fb.i22).abs() < 1e-9);
        let sa = score_integral(&a, &path, &s, 1.0, 30.0).unwrap();
        let sb = score_integral(&b, &p2, &s2, 1.0, 30.0).unwrap();
        assert!((sa[0] - sb[0]).abs() < 1e-9 && (sa[1] - sb[1]).abs() < 1e-9);
    }

    proptest::proptest! {
        #[test]
        fn pi_stays_clamped_for_any_increments(
            lambda in 0.05f64..10.0,
            mu in 0.05f64..10.0,
            y1 in -3.0f64..3.0,
            gap in 0.1f64..4.0,
            incs in proptest::collection::vec(-5.0f64..5.0, 1..200),
        ) {
            let theta = ThetaParams::new(lambda, mu).unwrap();
            let s = StateSpace::new(y1, y1 + gap).unwrap();
            let path = ObservationPath::new(0.01, incs, None).unwrap();
            let t = run_filter_with_sensitivities(&theta, &s, &path).unwrap();
            let sens = t.sensitivities.as_ref().unwrap();
            for k in 0..t.pi.len() {
                proptest::prop_assert!((CLAMP_EPS..=1.0 - CLAMP_EPS).contains(&t.pi[k]));
                proptest::prop_assert!(sens.dlambda[k].is_finite() && sens.dmu[k].is_finite());
            }
        }
    }
}
