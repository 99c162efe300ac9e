//! Monte Carlo checks of distributional facts the estimators rest on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use telegraph_core::experiments::replication_seed;
use telegraph_core::filter::{
    log_likelihood, run_filter, run_filter_with_sensitivities, score_integral, InitialBelief,
};
use telegraph_core::fisher::{fisher_by_ergodic_average, ErgodicOptions, InvariantDensity};
use telegraph_core::mle::one_step_from_preliminary;
use telegraph_core::model::{ParameterDomain, StateSpace, ThetaParams};
use telegraph_core::moments::{eta, phi, zeta};
use telegraph_core::sim::{simulate_observations, simulate_telegraph, ObservationPath};

fn theta(l: f64, m: f64) -> ThetaParams {
    ThetaParams::new(l, m).unwrap()
}

fn states() -> StateSpace {
    StateSpace::new(0.0, 1.0).unwrap()
}

fn path(th: &ThetaParams, horizon: f64, seed: u64) -> ObservationPath {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ev = simulate_telegraph(th, horizon, &mut rng).unwrap();
    simulate_observations(&ev, &states(), 0.01, false, &mut rng).unwrap()
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v.sqrt())
}

fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, sa) = mean_sd(a);
    let (mb, sb) = mean_sd(b);
    let cov = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (a.len() as f64 - 1.0);
    cov / (sa * sb)
}

#[test]
fn zeta_mean_matches_closed_form() {
    let th = theta(1.0, 1.0);
    let expected = 0.25 + 0.5 * phi(2.0).unwrap();
    assert!((expected - 0.391_917).abs() < 1e-6);
    let z: Vec<f64> = (0..400)
        .map(|i| zeta(&path(&th, 100.0, replication_seed(11, i))).unwrap())
        .collect();
    let (m, sd) = mean_sd(&z);
    let se = sd / 20.0;
    assert!((m - expected).abs() < 3.0 * se, "mean {m}, expected {expected}, se {se}");
}

// E[X̄(1 - X̄)] = D - Var(X̄) exactly, so the mean of eta sits O(1/T) below
// D; adding the replication variance of X̄ removes that bias.
#[test]
fn eta_mean_matches_stationary_variance() {
    let th = theta(1.0, 1.0);
    let domain = ParameterDomain::new(0.1, 5.0).unwrap();
    let t = 4000.0;
    let mut etas = Vec::new();
    let mut averages = Vec::new();
    for i in 0..400 {
        let p = path(&th, t, replication_seed(12, i));
        etas.push(eta(&p, &states(), &domain).0);
        averages.push(p.terminal_value() / t);
    }
    let (m, sd) = mean_sd(&etas);
    let (_, sd_avg) = mean_sd(&averages);
    let corrected = m + sd_avg * sd_avg;
    let se = sd / 20.0;
    assert!((m - 0.25).abs() < 1e-3, "raw mean {m}");
    assert!((corrected - 0.25).abs() < 3.0 * se + 1e-5, "corrected mean {corrected}, se {se}");
}

#[test]
fn score_is_centered_with_fisher_covariance() {
    let th = theta(1.0, 1.0);
    let s = states();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let fisher = fisher_by_ergodic_average(&th, &s, &ErgodicOptions::default(), &mut rng)
        .unwrap()
        .matrix;
    let t = 1000.0;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for i in 0..400 {
        let p = path(&th, t, replication_seed(14, i));
        let traj = run_filter_with_sensitivities(&th, &s, &p).unwrap();
        let sc = score_integral(&traj, &p, &s, 0.0, t).unwrap();
        a.push(sc[0] / t.sqrt());
        b.push(sc[1] / t.sqrt());
    }
    let (ma, sa) = mean_sd(&a);
    let (mb, sb) = mean_sd(&b);
    assert!(ma.abs() < 3.0 * sa / 20.0, "mean {ma}");
    assert!(mb.abs() < 3.0 * sb / 20.0, "mean {mb}");
    let c12 = correlation(&a, &b) * sa * sb;
    let rel = |x: f64, y: f64| (x - y).abs() / y.abs();
    assert!(rel(sa * sa, fisher.i11) < 0.15, "{} vs {}", sa * sa, fisher.i11);
    assert!(rel(sb * sb, fisher.i22) < 0.15, "{} vs {}", sb * sb, fisher.i22);
    assert!(rel(c12, fisher.i12) < 0.15, "{c12} vs {}", fisher.i12);
}

#[test]
fn likelihood_prefers_true_rates() {
    let th = theta(1.0, 1.0);
    let far = theta(4.0, 4.0);
    let s = states();
    let wins = (0..100)
        .filter(|&i| {
            let p = path(&th, 2000.0, replication_seed(15, i));
            log_likelihood(&th, &s, &p, 2000.0).unwrap() > log_likelihood(&far, &s, &p, 2000.0).unwrap()
        })
        .count();
    assert!(wins >= 95, "{wins} of 100");
}

// Starting the scoring step at the true rates isolates the standardization
// from the preliminary estimator.
#[test]
fn standardized_increments_behave_like_brownian_motion() {
    let th = theta(1.0, 1.0);
    let s = states();
    let t: f64 = 4000.0;
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let root = fisher_by_ergodic_average(&th, &s, &ErgodicOptions::default(), &mut rng)
        .unwrap()
        .matrix
        .sqrt()
        .unwrap();
    let learning = t.powf(0.6).floor();
    let mut inc = [Vec::new(), Vec::new()];
    let mut end = [Vec::new(), Vec::new()];
    for i in 0..400 {
        let p = path(&th, t, replication_seed(17, i));
        let recs = one_step_from_preliminary(&p, &s, &th, learning, &[0.5, 1.0]).unwrap();
        let eta: Vec<[f64; 2]> = recs
            .iter()
            .map(|r| {
                let err = [r.theta[0] - 1.0, r.theta[1] - 1.0];
                let v = root.mul_vec(err);
                [r.tau * t.sqrt() * v[0], r.tau * t.sqrt() * v[1]]
            })
            .collect();
        for c in 0..2 {
            inc[c].push(eta[1][c] - eta[0][c]);
            end[c].push(eta[1][c]);
        }
    }
    for c in 0..2 {
        let (_, sd) = mean_sd(&inc[c]);
        assert!((sd * sd - 0.5).abs() < 0.25 * 0.5, "coordinate {c}: increment variance {}", sd * sd);
    }
    let r = correlation(&end[0], &end[1]);
    assert!(r.abs() < 0.15, "correlation {r}");
}

#[test]
fn long_run_filter_statistics() {
    let s = states();
    for (l, m) in [(1.0, 1.0), (1.0, 3.0), (3.0, 1.0)] {
        let th = theta(l, m);
        let p = path(&th, 1e4, 18);
        let traj = run_filter(&th, &s, &p, InitialBelief::Stationary).unwrap();
        let avg = traj.pi.iter().sum::<f64>() / traj.pi.len() as f64;
        assert!((avg - m / (l + m)).abs() < 0.01, "({l}, {m}): {avg}");
        if (l, m) == (1.0, 1.0) {
            assert!((traj.clamp_count as f64) < 1e-3 * p.len() as f64);
        }
        let bins = 50;
        let kept = &traj.pi[traj.pi.len() / 10..];
        let mut counts = vec![0usize; bins];
        for &x in kept {
            counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let probs = InvariantDensity::new(th, s).unwrap().bin_probabilities(bins).unwrap();
        let tv: f64 = 0.5
            * counts
                .iter()
                .zip(&probs)
                .map(|(&c, &q)| (c as f64 / kept.len() as f64 - q).abs())
                .sum::<f64>();
        assert!(tv < 0.05, "({l}, {m}): TV {tv}");
    }
}
