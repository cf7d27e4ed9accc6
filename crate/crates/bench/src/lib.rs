//! Fixtures shared by the benchmarks.

use crowdvote_core::{
    AgentType, BallotBox, Mechanism, Population, Report, Scenario, Signal, SignalModel, UtilityTable,
};

/// Symmetric model with type shares of roughly (0.2, 0.6, 0.2) over `size` agents.
pub fn symmetric_scenario(size: usize, mechanism: Mechanism) -> Scenario {
    let f = size / 5;
    let u = size / 5;
    let c = size - f - u;
    let population = Population::from_type_counts(&[
        (AgentType::Friendly, f, UtilityTable::binary(2, 1, 3, 0).unwrap()),
        (AgentType::Contingent, c, UtilityTable::binary(1, 2, 3, 0).unwrap()),
        (AgentType::Unfriendly, u, UtilityTable::binary(0, 3, 1, 2).unwrap()),
    ])
    .unwrap();
    let model = SignalModel::binary(0.5, 0.7, 0.3).unwrap();
    Scenario::new(model, population, mechanism, None).unwrap()
}

/// Deterministic mixed ballot box with `size` reports.
pub fn mixed_box(size: usize) -> BallotBox {
    let reports = (0..size)
        .map(|i| match i % 5 {
            0 => Report::typed(AgentType::Friendly),
            1 => Report::typed(AgentType::Unfriendly),
            k => {
                let signal = if (i / 5) % 2 == 0 { Signal::High } else { Signal::Low };
                Report::contingent(signal, (k as f64 + (i % 7) as f64) / 12.0)
            }
        })
        .collect();
    BallotBox::new(reports).unwrap()
}
