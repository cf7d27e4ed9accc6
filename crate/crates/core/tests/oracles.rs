//! Library results checked against independently written reference computations.

mod common;

use approx::assert_abs_diff_eq;
use common::*;
use crowdvote_core::engine::{exact_lambda_with, EnumerationMode};
use crowdvote_core::impossibility::{binomial_pmf, CounterexampleInstance};
use crowdvote_core::mechanisms::{Report, Signal};
use crowdvote_core::model::{AgentType, Alternative, SignalModel};
use crowdvote_core::{
    binomial_tvd, concentration_constant, estimate_lambda, exact_lambda, gaussian_tvd_limit, peer_prediction,
    Mechanism, PosteriorBundle, StrategyProfile,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;

/// `Pr(S2 = b | S1 = a)` from the joint distribution of two agents' signals.
fn joint_peer(model: &SignalModel, a: usize, b: usize) -> f64 {
    let joint = |x: usize, y: usize| -> f64 {
        (0..model.num_worlds())
            .map(|n| model.prior()[n] * model.likelihood(x, n) * model.likelihood(y, n))
            .sum()
    };
    let marginal: f64 = (0..model.num_signals()).map(|y| joint(a, y)).sum();
    joint(a, b) / marginal
}

#[test]
fn peer_predictions_match_joint_distribution() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let m = random_two_world(&mut rng, 4);
        let bundle = PosteriorBundle::compute(&m).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let want = joint_peer(&m, a, b);
                assert_abs_diff_eq!(peer_prediction(&m, a, b).unwrap(), want, epsilon = 1e-12);
                assert_abs_diff_eq!(bundle.peer[b][a], want, epsilon = 1e-12);
            }
        }
    }
}

#[test]
fn concentration_constant_by_hand() {
    // Symmetric 0.9/0.1 model: T_ll = 0.82, T_lh = 0.18; the gaps are
    // 0.08, 0.64, 0.08 in both chains.
    let m = SignalModel::binary(0.5, 0.9, 0.1).unwrap();
    assert_abs_diff_eq!(joint_peer(&m, 0, 0), 0.82, epsilon = 1e-12);
    assert_abs_diff_eq!(joint_peer(&m, 1, 0), 0.18, epsilon = 1e-12);
    assert_abs_diff_eq!(concentration_constant(&m).unwrap(), 0.08 / 3.0, epsilon = 1e-12);
}

/// Plain Mechanism 1 over (declared type, signal, prediction) triples.
fn reference_mechanism1(ballots: &[(AgentType, usize, f64)]) -> bool {
    let t = ballots.len();
    let f = ballots.iter().filter(|b| b.0 == AgentType::Friendly).count();
    let u = ballots.iter().filter(|b| b.0 == AgentType::Unfriendly).count();
    if 2 * f > t {
        return true;
    }
    if 2 * u > t {
        return false;
    }
    let highs = ballots
        .iter()
        .filter(|b| match b.0 {
            AgentType::Friendly => true,
            AgentType::Unfriendly => false,
            AgentType::Contingent => b.1 == 1,
        })
        .count();
    let mut preds: Vec<f64> = ballots
        .iter()
        .map(|b| match b.0 {
            AgentType::Friendly => 0.0,
            AgentType::Unfriendly => 1.0,
            AgentType::Contingent => b.2,
        })
        .collect();
    preds.sort_by(f64::total_cmp);
    highs as f64 / t as f64 > preds[t / 2]
}

/// Sums the probability of every signal vector on which the reference rule accepts.
fn reference_lambda(model: &SignalModel, types: &[AgentType], preds: [f64; 2], world: usize) -> f64 {
    let t = types.len();
    let mut total = 0.0;
    for mask in 0..(1usize << t) {
        let mut p = 1.0;
        let mut ballots = Vec::with_capacity(t);
        for (i, &ty) in types.iter().enumerate() {
            let s = (mask >> i) & 1;
            p *= model.likelihood(s, world);
            ballots.push((ty, s, preds[s]));
        }
        if reference_mechanism1(&ballots) {
            total += p;
        }
    }
    total
}

#[test]
fn exact_lambda_matches_reference_enumeration() {
    for (f, c, u) in [(0, 1, 0), (1, 1, 1), (1, 3, 1), (2, 3, 2), (0, 7, 0), (3, 5, 1)] {
        let s = scenario(f, c, u, Mechanism::Wotc1);
        let t = (f + c + u) as f64;
        let (af, ac) = (f as f64 / t, c as f64 / t);
        let preds = [af + ac * 0.42, af + ac * 0.58];
        let types: Vec<AgentType> = (0..s.size()).map(|i| s.population().agent_type(i)).collect();
        let stats = exact_lambda(&s, &StrategyProfile::truthful(&s)).unwrap();
        for n in 0..2 {
            let want = reference_lambda(s.model(), &types, preds, n);
            assert_abs_diff_eq!(stats.lambda_accept[n], want, epsilon = 1e-12);
        }
    }
}

#[test]
fn single_agent_hand_values() {
    let s = scenario(0, 1, 0, Mechanism::Wotc1);
    let stats = exact_lambda(&s, &StrategyProfile::truthful(&s)).unwrap();
    assert_abs_diff_eq!(stats.lambda_accept[0], 0.3, epsilon = 1e-15);
    assert_abs_diff_eq!(stats.lambda_accept[1], 0.7, epsilon = 1e-15);
    assert_abs_diff_eq!(stats.error_rate, 0.5 * 0.3 + 0.5 * 0.3, epsilon = 1e-15);
}

#[test]
fn enumeration_modes_agree_on_deviations() {
    let s = scenario(2, 3, 2, Mechanism::Wotc2);
    let mut p = StrategyProfile::truthful(&s);
    p.set_strategy(
        0,
        vec![
            Report::contingent(Signal::High, 0.2),
            Report::contingent(Signal::High, 0.9),
        ],
    );
    let full = exact_lambda_with(&s, &p, EnumerationMode::Full).unwrap();
    let counts = exact_lambda_with(&s, &p, EnumerationMode::Counts).unwrap();
    for n in 0..2 {
        assert_abs_diff_eq!(full.lambda_accept[n], counts.lambda_accept[n], epsilon = 1e-12);
    }
}

#[test]
fn monte_carlo_agrees_with_exact() {
    let s = scenario(1, 3, 1, Mechanism::Wotc1);
    let p = StrategyProfile::truthful(&s);
    let exact = exact_lambda(&s, &p).unwrap();
    let mc = estimate_lambda(&s, &p, 40_000, 3);
    for n in 0..2 {
        let l = exact.lambda_accept[n];
        let se = (l * (1.0 - l) / 40_000.0).sqrt();
        assert!((mc.lambda_accept[n] - l).abs() <= 4.0 * se + 1e-12);
    }
}

#[test]
fn tvd_against_fractions() {
    // Bin(3, 1/6) = (125, 75, 15, 1)/216 and Bin(1, 1/2) = (108, 108)/216.
    let a = [125.0, 75.0, 15.0, 1.0];
    let b = [108.0, 108.0, 0.0, 0.0];
    let want: f64 = a.iter().zip(&b).map(|(x, y): (&f64, &f64)| (x - y).abs()).sum::<f64>() / 432.0;
    assert_abs_diff_eq!(binomial_tvd(3).unwrap(), want, epsilon = 1e-15);
    let v = binomial_tvd(30).unwrap();
    assert!(v > 0.0 && v <= 1.0);
}

#[test]
fn gaussian_limit_matches_erf_closed_form() {
    let a = ((5.0 / 24.0) * (5.0f64 / 3.0).ln()).sqrt();
    let mass = |var: f64| erf(a / (2.0 * var).sqrt());
    let want = mass(1.0 / 12.0) - mass(5.0 / 36.0);
    let got = gaussian_tvd_limit().unwrap();
    assert_abs_diff_eq!(got, want, epsilon = 1e-10);
    assert!((0.1229..=0.12295).contains(&got), "limit {got}");
}

#[test]
fn large_t_tvd_approaches_limit() {
    let limit = gaussian_tvd_limit().unwrap();
    let v = binomial_tvd(30_000).unwrap();
    assert!((v - limit).abs() < 1e-3, "tvd {v} limit {limit}");
}

#[test]
fn deviation_census_is_binomial() {
    let inst = CounterexampleInstance::default();
    let size = 300;
    let envs = inst.environments();
    let marginal = |env_label: &str, deviated: bool| -> Vec<f64> {
        let env = envs.iter().find(|e| e.label == env_label).unwrap();
        let mut pmf = vec![0.0; size + 1];
        for (counts, p) in inst.census_distribution(env, size, deviated) {
            let h: usize = counts.iter().map(|c| c[1]).sum();
            pmf[h] += p;
        }
        pmf
    };
    let lx = marginal("LX", true);
    let want = binomial_pmf(size / 3, 0.5);
    for (k, p) in lx.iter().enumerate() {
        assert!((p - want.get(k).copied().unwrap_or(0.0)).abs() < 1e-12);
    }
    let hy = marginal("HY", false);
    let want = binomial_pmf(size, 1.0 / 6.0);
    for (p, q) in hy.iter().zip(&want) {
        assert!((p - q).abs() < 1e-12);
    }
}

#[test]
fn majority_wish_for_counterexample_tables() {
    // Every F and C agent prefers accept in H.
    let p = population(1, 2, 0);
    assert_eq!(p.accept_fractions()[1], 1.0);
    assert_eq!(p.majority_wish(1), Alternative::Accept);
    assert_eq!(p.majority_wish(0), Alternative::Reject);
}
