#![allow(dead_code)]

use crowdvote_core::model::{AgentType, Population, SignalModel, UtilityTable};
use crowdvote_core::{Mechanism, Scenario};
use rand::Rng;

pub fn friendly() -> UtilityTable {
    UtilityTable::binary(2, 1, 3, 0).unwrap()
}

pub fn contingent() -> UtilityTable {
    UtilityTable::binary(1, 2, 3, 0).unwrap()
}

pub fn unfriendly() -> UtilityTable {
    UtilityTable::binary(0, 3, 1, 2).unwrap()
}

pub fn symmetric() -> SignalModel {
    SignalModel::binary(0.5, 0.7, 0.3).unwrap()
}

pub fn population(f: usize, c: usize, u: usize) -> Population {
    let groups: Vec<_> = [
        (AgentType::Friendly, f, friendly()),
        (AgentType::Contingent, c, contingent()),
        (AgentType::Unfriendly, u, unfriendly()),
    ]
    .into_iter()
    .filter(|g| g.1 > 0)
    .collect();
    Population::from_type_counts(&groups).unwrap()
}

pub fn scenario(f: usize, c: usize, u: usize, mechanism: Mechanism) -> Scenario {
    Scenario::new(symmetric(), population(f, c, u), mechanism, None).unwrap()
}

/// Random two-world, two-signal model with `P_ℓL > P_ℓH`.
pub fn random_binary(rng: &mut impl Rng) -> SignalModel {
    loop {
        let prior = rng.random_range(0.01..0.99);
        let a: f64 = rng.random_range(0.01..0.99);
        let b: f64 = rng.random_range(0.01..0.99);
        if (a - b).abs() < 1e-3 {
            continue;
        }
        return SignalModel::binary(prior, a.max(b), a.min(b)).unwrap();
    }
}

/// Random two-world model with `signals` signals. The high world's column is
/// the low world's column tilted by a strictly increasing ratio, which gives
/// strict stochastic dominance.
pub fn random_two_world(rng: &mut impl Rng, signals: usize) -> SignalModel {
    let low: Vec<f64> = (0..signals).map(|_| rng.random_range(0.05..1.0)).collect();
    let mut ratio = Vec::with_capacity(signals);
    let mut r = rng.random_range(0.1..1.0);
    for _ in 0..signals {
        ratio.push(r);
        r += rng.random_range(0.05..1.0);
    }
    let high: Vec<f64> = low.iter().zip(&ratio).map(|(l, r)| l * r).collect();
    let (sl, sh): (f64, f64) = (low.iter().sum(), high.iter().sum());
    let likelihood = (0..signals).map(|m| vec![low[m] / sl, high[m] / sh]).collect();
    let prior = rng.random_range(0.05..0.95);
    SignalModel::new(vec![prior, 1.0 - prior], likelihood).unwrap()
}
