mod common;

use common::*;
use crowdvote_core::bayes::binarize;
use crowdvote_core::engine::{expected_utility, expected_utility_by_advantage, expected_utility_split};
use crowdvote_core::mechanisms::{mechanism1_decide, supermajority_decide, BallotBox, Report, Signal};
use crowdvote_core::model::{classify_agent, validate_model, AgentType, Alternative, SignalModel, UtilityTable};
use crowdvote_core::{key_inequality_certificate, Mechanism, Population, PosteriorBundle};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random model with strictly increasing likelihood ratios between successive worlds.
fn random_model(rng: &mut impl Rng, worlds: usize, signals: usize) -> SignalModel {
    let base: Vec<f64> = (0..signals).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut ratio = Vec::with_capacity(signals);
    let mut r = 1.0;
    for _ in 0..signals {
        ratio.push(r);
        r *= rng.random_range(1.05..2.0);
    }
    let sums: Vec<f64> = (0..worlds)
        .map(|n| (0..signals).map(|m| base[m] * f64::powi(ratio[m], n as i32)).sum())
        .collect();
    let likelihood = (0..signals)
        .map(|m| {
            (0..worlds)
                .map(|n| base[m] * f64::powi(ratio[m], n as i32) / sums[n])
                .collect()
        })
        .collect();
    let raw: Vec<f64> = (0..worlds).map(|_| rng.random_range(0.05..1.0)).collect();
    let s: f64 = raw.iter().sum();
    SignalModel::new(raw.iter().map(|x| x / s).collect(), likelihood).unwrap()
}

fn random_report(rng: &mut impl Rng) -> Report {
    let signal = if rng.random_bool(0.5) {
        Signal::High
    } else {
        Signal::Low
    };
    let value = rng.random_range(0.0..=1.0);
    match rng.random_range(0..4) {
        0 => Report::typed(AgentType::Friendly),
        1 => Report::typed(AgentType::Unfriendly),
        _ => Report::contingent(signal, value),
    }
}

fn random_box(rng: &mut impl Rng) -> Vec<Report> {
    let t = 2 * rng.random_range(0..12) + 1;
    (0..t).map(|_| random_report(rng)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn generated_models_are_valid(seed in any::<u64>(), worlds in 2usize..=5, signals in 2usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_model(&mut rng, worlds, signals);
        prop_assert!(validate_model(&m).is_ok());
        for n in 1..worlds {
            for s in 1..signals {
                prop_assert!(m.tail_mass(s, n) > m.tail_mass(s, n - 1));
            }
        }
        let b = PosteriorBundle::compute(&m).unwrap();
        for col in 0..signals {
            let sum: f64 = b.peer.iter().map(|row| row[col]).sum();
            prop_assert!((sum - 1.0).abs() < 1e-12);
            let wsum: f64 = b.world_posterior[col].iter().sum();
            prop_assert!((wsum - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn binary_chains_hold(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_binary(&mut rng);
        let r = key_inequality_certificate(&m).unwrap();
        prop_assert!(r.gaps.iter().all(|&g| g > 1e-12));
    }

    #[test]
    fn binarized_predictions_stay_between_worlds(seed in any::<u64>(), signals in 3usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = random_two_world(&mut rng, signals);
        for k in 1..signals {
            let b = binarize(&m, k as f64 + 0.5).unwrap();
            prop_assert!(b.certificate.unwrap().holds());
        }
    }

    #[test]
    fn binary_classification_matches_direct_definition(
        la in 0u32..10, lr in 0u32..10, ha in 0u32..10, hr in 0u32..10
    ) {
        let Ok(table) = UtilityTable::binary(la, lr, ha, hr) else { return Ok(()); };
        let direct = match (la > lr, ha > hr) {
            (true, true) => AgentType::Friendly,
            (false, false) => AgentType::Unfriendly,
            (false, true) => AgentType::Contingent,
            (true, false) => unreachable!("monotone tables cannot prefer accept only in L"),
        };
        prop_assert_eq!(classify_agent(&table, 1).unwrap().agent_type, direct);
    }

    #[test]
    fn type_fractions_sum_to_one(f in 0usize..20, c in 1usize..20, u in 0usize..20) {
        let total = f + c + u;
        let c = if total % 2 == 0 { c + 1 } else { c };
        let p = population(f, c, u);
        let counts = p.counts();
        prop_assert_eq!(counts.total(), p.size());
        let s = p.alpha(AgentType::Friendly) + p.alpha(AgentType::Contingent) + p.alpha(AgentType::Unfriendly);
        prop_assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mechanism1_is_monotone_toward_accept(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reports = random_box(&mut rng);
        let before = mechanism1_decide(&BallotBox::new(reports.clone()).unwrap());
        if before.winner != Alternative::Accept {
            return Ok(());
        }
        let i = rng.random_range(0..reports.len());
        let mut raised = reports.clone();
        raised[i] = match raised[i].declared_type {
            AgentType::Contingent => Report::contingent(Signal::High, raised[i].value),
            _ => raised[i],
        };
        let mut lowered = reports.clone();
        if lowered[i].declared_type == AgentType::Contingent {
            lowered[i].value *= rng.random_range(0.0..1.0);
        }
        for b in [raised, lowered] {
            prop_assert_eq!(mechanism1_decide(&BallotBox::new(b).unwrap()).winner, Alternative::Accept);
        }
    }

    #[test]
    fn decisions_ignore_ballot_order(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let reports = random_box(&mut rng);
        let mut shuffled = reports.clone();
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        for m in [
            Mechanism::Wotc1,
            Mechanism::Wotc2,
            Mechanism::Wotc3,
            Mechanism::Supermajority { tau: 0.6 },
            Mechanism::SurprisinglyPopular,
            Mechanism::NaiveMajority,
        ] {
            prop_assert_eq!(m.decide_reports(&reports).winner, m.decide_reports(&shuffled).winner);
        }
    }

    #[test]
    fn half_supermajority_is_mechanism1(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = BallotBox::new(random_box(&mut rng)).unwrap();
        prop_assert_eq!(supermajority_decide(&b, 0.5).unwrap(), mechanism1_decide(&b));
    }

    #[test]
    fn utility_forms_agree(seed in any::<u64>(), worlds in 2usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let accept: Vec<u32> = {
            let mut v: Vec<u32> = (0..worlds).map(|_| rng.random_range(0..20)).collect();
            v.sort();
            v.iter().enumerate().map(|(i, x)| x + i as u32).collect()
        };
        let reject: Vec<u32> = {
            let mut v: Vec<u32> = (0..worlds).map(|_| rng.random_range(0..20)).collect();
            v.sort_by(|a, b| b.cmp(a));
            v.iter().enumerate().map(|(i, x)| x + (worlds - i) as u32 * 2 + 1).collect()
        };
        let Ok(table) = UtilityTable::new(accept, reject) else { return Ok(()); };
        let lambda: Vec<f64> = (0..worlds).map(|_| rng.random_range(0.0..=1.0)).collect();
        let raw: Vec<f64> = (0..worlds).map(|_| rng.random_range(0.01..1.0)).collect();
        let s: f64 = raw.iter().sum();
        let prior: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let u = expected_utility(&lambda, &table, &prior);
        prop_assert!((u - expected_utility_by_advantage(&lambda, &table, &prior)).abs() < 1e-12);
        let split = rng.random_range(0..=worlds);
        prop_assert!((u - expected_utility_split(&lambda, &table, &prior, split)).abs() < 1e-12);
    }

    #[test]
    fn truthful_median_lies_in_interval(seed in any::<u64>(), f in 0usize..10, u in 0usize..10, extra in 1usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = f.max(u) + extra;
        let c = if (f + c + u) % 2 == 0 { c + 1 } else { c };
        let s = scenario(f, c, u, Mechanism::Wotc1);
        let p = s.population();
        let (af, ac) = (p.alpha(AgentType::Friendly), p.alpha(AgentType::Contingent));
        let reports: Vec<Report> = (0..s.size())
            .map(|t| crowdvote_core::mechanisms::truthful_report(&s, t, rng.random_range(0..2)))
            .collect();
        let d = mechanism1_decide(&BallotBox::new(reports).unwrap());
        let median = d.audit.pivot.unwrap();
        prop_assert!(median >= af + ac * 0.42 - 1e-12 && median <= af + ac * 0.58 + 1e-12);
    }
}

#[test]
fn three_world_population_threshold() {
    let tables = vec![
        UtilityTable::new(vec![3, 4, 5], vec![2, 1, 0]).unwrap(),
        UtilityTable::new(vec![0, 3, 4], vec![2, 1, 0]).unwrap(),
        UtilityTable::new(vec![0, 3, 4], vec![2, 1, 0]).unwrap(),
        UtilityTable::new(vec![0, 1, 4], vec![5, 2, 1]).unwrap(),
        UtilityTable::new(vec![0, 1, 2], vec![5, 4, 3]).unwrap(),
    ];
    let p = Population::new(tables).unwrap();
    assert_eq!(p.threshold(), 1);
    assert!(p.alpha(AgentType::Friendly) < 0.5 && p.alpha(AgentType::Unfriendly) < 0.5);
}
