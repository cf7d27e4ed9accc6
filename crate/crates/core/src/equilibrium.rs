//! Exhaustive equilibrium audits over a finite report grid.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{
    concentration_bound, exact_accept_probabilities, expected_utility, EngineError, EnumerationMode, StrategyProfile,
};
use crate::mechanisms::{Mechanism, Report, Signal};
use crate::model::{AgentType, Alternative, UtilityTable};
use crate::scenario::Scenario;

/// Slack used for every weak and strict utility comparison.
pub const GAIN_TOLERANCE: f64 = 1e-12;

/// Default cap on the number of exact profile evaluations per audit.
pub const DEFAULT_BUDGET: u64 = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error("report grid is empty")]
    EmptyGrid,
    #[error("grid value {0} outside [0, 1]")]
    GridValue(f64),
    #[error("budget exceeded: {what} needs {needed} evaluations, budget {budget}")]
    BudgetExceeded { what: String, needed: String, budget: u64 },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("agent {agent} is {agent_type}; dominance is only checked for F and U agents")]
    RefusedType { agent: usize, agent_type: AgentType },
    #[error("agent {0} does not exist")]
    NoSuchAgent(usize),
    #[error("dominance audit needs Mechanism 1, got {0}")]
    UnsupportedMechanism(&'static str),
    #[error("precondition failed: {0}")]
    Precondition(&'static str),
}

/// Finite set of admissible prediction or threshold values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportGrid {
    values: Vec<f64>,
}

impl ReportGrid {
    pub fn new(mut values: Vec<f64>) -> Result<Self, EquilibriumError> {
        if values.is_empty() {
            return Err(EquilibriumError::EmptyGrid);
        }
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(EquilibriumError::GridValue(v));
        }
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(Self { values })
    }

    /// `extra` plus 0, 1 and every value used by a truthful report.
    pub fn with_truthful(scenario: &Scenario, extra: &[f64]) -> Result<Self, EquilibriumError> {
        let truthful = StrategyProfile::truthful(scenario);
        let mut values = vec![0.0, 1.0];
        values.extend_from_slice(extra);
        values.extend(truthful.strategies().iter().flatten().map(|r| r.value));
        Self::new(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Reports a mechanism distinguishes, with values drawn from the grid.
pub fn enumerate_reports(mechanism: Mechanism, grid: &ReportGrid) -> Vec<Report> {
    let signals = [Signal::Low, Signal::High];
    let contingent = || {
        signals
            .iter()
            .flat_map(|&s| grid.values().iter().map(move |&v| Report::contingent(s, v)))
    };
    match mechanism {
        Mechanism::Wotc1
        | Mechanism::Wotc3
        | Mechanism::Supermajority { .. }
        | Mechanism::Wotc1NoMedian
        | Mechanism::Constant(_) => [Report::typed(AgentType::Friendly), Report::typed(AgentType::Unfriendly)]
            .into_iter()
            .chain(contingent())
            .collect(),
        Mechanism::Wotc2 => {
            let typed = |t: AgentType, s: Signal| {
                grid.values()
                    .iter()
                    .map(move |&v| Report::with_prediction(t, s, v))
                    .collect::<Vec<_>>()
            };
            let mut out = typed(AgentType::Friendly, Signal::High);
            out.extend(typed(AgentType::Unfriendly, Signal::Low));
            out.extend(contingent());
            out
        }
        Mechanism::SurprisinglyPopular => contingent().collect(),
        Mechanism::NaiveMajority => vec![Report::vote(Alternative::Reject), Report::vote(Alternative::Accept)],
    }
}

/// Every map from original signals to admissible reports.
pub fn enumerate_strategies(scenario: &Scenario, grid: &ReportGrid) -> Vec<Vec<Report>> {
    let reports = enumerate_reports(scenario.mechanism(), grid);
    let mut out: Vec<Vec<Report>> = vec![Vec::new()];
    for _ in 0..scenario.num_signals() {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                reports.iter().map(move |&r| {
                    let mut s = prefix.clone();
                    s.push(r);
                    s
                })
            })
            .collect();
    }
    out
}

/// `(2B² + 4B) exp(-2c²α_C T)` with `B` the population's largest utility.
pub fn equilibrium_epsilon(scenario: &Scenario) -> Result<f64, EngineError> {
    let bound = concentration_bound(scenario)?;
    let b = f64::from(scenario.population().utility_bound());
    Ok((2.0 * b * b + 4.0 * b) * (-2.0 * bound.c * bound.c * bound.alpha_c * bound.size as f64).exp())
}

/// `2B exp(-2c²α_C T)`, the gain above which F and U cannot both profit.
pub fn conflict_threshold(scenario: &Scenario) -> Result<f64, EngineError> {
    let bound = concentration_bound(scenario)?;
    let b = f64::from(scenario.population().utility_bound());
    Ok(2.0 * b * (-2.0 * bound.c * bound.c * bound.alpha_c * bound.size as f64).exp())
}

/// A coalition deviation in which every member weakly gains.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationWitness {
    pub coalition: Vec<usize>,
    pub strategies: Vec<Vec<Report>>,
    pub deltas: Vec<f64>,
    pub max_gain: f64,
    pub epsilon: f64,
}

impl DeviationWitness {
    /// Recomputes both profiles' utilities from scratch.
    pub fn verify(&self, scenario: &Scenario) -> Result<bool, EngineError> {
        let truthful = StrategyProfile::truthful(scenario);
        let mut deviated = truthful.clone();
        for (&t, s) in self.coalition.iter().zip(&self.strategies) {
            deviated.set_strategy(t, s.clone());
        }
        let prior = scenario.model().prior();
        let before = exact_accept_probabilities(scenario, &truthful, EnumerationMode::Auto)?;
        let after = exact_accept_probabilities(scenario, &deviated, EnumerationMode::Auto)?;
        let deltas: Vec<f64> = self
            .coalition
            .iter()
            .map(|&t| {
                let table = scenario.population().agent(t);
                expected_utility(&after, table, prior) - expected_utility(&before, table, prior)
            })
            .collect();
        let weak = deltas.iter().all(|&d| d >= -GAIN_TOLERANCE);
        let strict = deltas.iter().any(|&d| d > self.epsilon + GAIN_TOLERANCE);
        Ok(weak && strict)
    }
}

/// Outcome of an exhaustive coalition search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SbneReport {
    pub holds: bool,
    pub epsilon: f64,
    pub grid: Vec<f64>,
    pub max_coalition: usize,
    pub strategies_per_agent: usize,
    pub profiles_checked: u64,
    /// First witness in lexicographic coalition and strategy order.
    pub witness: Option<DeviationWitness>,
    /// Largest member gain over deviations where every member weakly gains.
    pub max_admissible_gain: f64,
    /// Threshold for the F/U composition check, when the scenario is binary.
    pub conflict_threshold: Option<f64>,
    /// Admissible deviations above the threshold whose coalition has both F and U members.
    pub mixed_near_witnesses: u64,
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::with_capacity(k), &mut out);
    out
}

fn decode(mut index: u64, base: usize, digits: usize) -> Vec<usize> {
    // Most significant digit first so that flat order is lexicographic.
    let mut out = vec![0; digits];
    for d in (0..digits).rev() {
        out[d] = (index % base as u64) as usize;
        index /= base as u64;
    }
    out
}

#[derive(Clone)]
struct Partial {
    witness: Option<(u64, Vec<f64>)>,
    max_gain: f64,
    mixed: u64,
    error: Option<EngineError>,
}

impl Partial {
    fn empty() -> Self {
        Self {
            witness: None,
            max_gain: f64::NEG_INFINITY,
            mixed: 0,
            error: None,
        }
    }

    fn merge(self, other: Self) -> Self {
        let witness = match (self.witness, other.witness) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        Self {
            witness,
            max_gain: self.max_gain.max(other.max_gain),
            mixed: self.mixed + other.mixed,
            error: self.error.or(other.error),
        }
    }
}

/// Searches every coalition of at most `max_coalition` agents and every joint
/// pure deviation over the grid for a witness against `epsilon`.
pub fn check_epsilon_sbne(
    scenario: &Scenario,
    grid: &ReportGrid,
    max_coalition: usize,
    epsilon: f64,
    budget: u64,
) -> Result<SbneReport, EquilibriumError> {
    let size = scenario.size();
    let max_coalition = max_coalition.min(size);
    let strategies = enumerate_strategies(scenario, grid);
    let s = strategies.len() as u64;

    let needed: u64 = (1..=max_coalition as u64)
        .map(|k| binomial(size as u64, k).saturating_mul(s.saturating_pow(k as u32)))
        .fold(0u64, u64::saturating_add);
    if needed > budget {
        return Err(EquilibriumError::BudgetExceeded {
            what: format!("coalitions up to {max_coalition} of {size} agents with {s} strategies each"),
            needed: needed.to_string(),
            budget,
        });
    }

    let truthful = StrategyProfile::truthful(scenario);
    let prior = scenario.model().prior();
    let population = scenario.population();
    let before = exact_accept_probabilities(scenario, &truthful, EnumerationMode::Auto)?;
    let base: Vec<f64> = population
        .agents()
        .iter()
        .map(|t| expected_utility(&before, t, prior))
        .collect();
    let threshold = conflict_threshold(scenario).ok();

    let mut report = SbneReport {
        holds: true,
        epsilon,
        grid: grid.values().to_vec(),
        max_coalition,
        strategies_per_agent: strategies.len(),
        profiles_checked: 0,
        witness: None,
        max_admissible_gain: f64::NEG_INFINITY,
        conflict_threshold: threshold,
        mixed_near_witnesses: 0,
    };

    for k in 1..=max_coalition {
        for coalition in combinations(size, k) {
            let mixed_types = coalition
                .iter()
                .any(|&t| population.agent_type(t) == AgentType::Friendly)
                && coalition
                    .iter()
                    .any(|&t| population.agent_type(t) == AgentType::Unfriendly);
            let total = s.pow(k as u32);
            let partial = (0..total)
                .into_par_iter()
                .map(|i| {
                    let choice = decode(i, strategies.len(), k);
                    let mut profile = truthful.clone();
                    for (&t, &c) in coalition.iter().zip(&choice) {
                        profile.set_strategy(t, strategies[c].clone());
                    }
                    let after = match exact_accept_probabilities(scenario, &profile, EnumerationMode::Auto) {
                        Ok(l) => l,
                        Err(e) => {
                            return Partial {
                                error: Some(e),
                                ..Partial::empty()
                            }
                        }
                    };
                    let deltas: Vec<f64> = coalition
                        .iter()
                        .map(|&t| expected_utility(&after, population.agent(t), prior) - base[t])
                        .collect();
                    let mut p = Partial::empty();
                    if deltas.iter().all(|&d| d >= -GAIN_TOLERANCE) {
                        let gain = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                        p.max_gain = gain;
                        if gain > epsilon + GAIN_TOLERANCE {
                            p.witness = Some((i, deltas));
                        }
                        if mixed_types && threshold.is_some_and(|th| gain > th + GAIN_TOLERANCE) {
                            p.mixed = 1;
                        }
                    }
                    p
                })
                .reduce(Partial::empty, Partial::merge);
            if let Some(e) = partial.error {
                return Err(e.into());
            }
            report.profiles_checked += total;
            report.max_admissible_gain = report.max_admissible_gain.max(partial.max_gain);
            report.mixed_near_witnesses += partial.mixed;
            if report.witness.is_none() {
                if let Some((i, deltas)) = partial.witness {
                    let choice = decode(i, strategies.len(), k);
                    let max_gain = deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    report.witness = Some(DeviationWitness {
                        coalition: coalition.clone(),
                        strategies: choice.iter().map(|&c| strategies[c].clone()).collect(),
                        deltas,
                        max_gain,
                        epsilon,
                    });
                    report.holds = false;
                }
            }
        }
    }
    Ok(report)
}

/// Outcome of a dominance audit for one F or U agent.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DominanceReport {
    pub agent: usize,
    pub agent_type: AgentType,
    pub holds: bool,
    pub own_strategies: usize,
    pub opponent_profiles: u64,
    /// Largest gain of a deviation over truth-telling (non-positive when dominance holds).
    pub worst_gain: f64,
    /// Opponent strategies and own deviation attaining `worst_gain` when it is positive.
    pub counterexample: Option<(Vec<Vec<Report>>, Vec<Report>)>,
}

/// Checks that truth-telling is a dominant strategy for `agent` (type F or U)
/// under Mechanism 1 against every opponent pure profile over the grid.
pub fn check_dominance(
    scenario: &Scenario,
    agent: usize,
    grid: &ReportGrid,
    budget: u64,
) -> Result<DominanceReport, EquilibriumError> {
    if agent >= scenario.size() {
        return Err(EquilibriumError::NoSuchAgent(agent));
    }
    if scenario.mechanism() != Mechanism::Wotc1 {
        return Err(EquilibriumError::UnsupportedMechanism(scenario.mechanism().id()));
    }
    let agent_type = scenario.population().agent_type(agent);
    if agent_type == AgentType::Contingent {
        return Err(EquilibriumError::RefusedType { agent, agent_type });
    }
    let strategies = enumerate_strategies(scenario, grid);
    let s = strategies.len() as u64;
    let opponents: Vec<usize> = (0..scenario.size()).filter(|&t| t != agent).collect();
    let opponent_profiles = s.checked_pow(opponents.len() as u32).unwrap_or(u64::MAX);
    let needed = opponent_profiles.saturating_mul(s + 1);
    if needed > budget {
        return Err(EquilibriumError::BudgetExceeded {
            what: format!("dominance of agent {agent} against {} opponents", opponents.len()),
            needed: needed.to_string(),
            budget,
        });
    }
    let truthful_profile = StrategyProfile::truthful(scenario);
    let truthful_own = truthful_profile.strategy(agent).to_vec();
    let table = scenario.population().agent(agent);
    let prior = scenario.model().prior();

    type Worst = (f64, u64, usize);
    let result: Result<Option<Worst>, EngineError> = (0..opponent_profiles)
        .into_par_iter()
        .map(|i| -> Result<Option<Worst>, EngineError> {
            let choice = decode(i, strategies.len(), opponents.len());
            let mut profile = truthful_profile.clone();
            for (&t, &c) in opponents.iter().zip(&choice) {
                profile.set_strategy(t, strategies[c].clone());
            }
            profile.set_strategy(agent, truthful_own.clone());
            let honest = expected_utility(
                &exact_accept_probabilities(scenario, &profile, EnumerationMode::Auto)?,
                table,
                prior,
            );
            let mut worst: Option<Worst> = None;
            for (j, own) in strategies.iter().enumerate() {
                profile.set_strategy(agent, own.clone());
                let u = expected_utility(
                    &exact_accept_probabilities(scenario, &profile, EnumerationMode::Auto)?,
                    table,
                    prior,
                );
                let gain = u - honest;
                if worst.is_none_or(|w| gain > w.0) {
                    worst = Some((gain, i, j));
                }
            }
            Ok(worst)
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (Some(x), Some(y)) => Some(if y.0 > x.0 || (y.0 == x.0 && (y.1, y.2) < (x.1, x.2)) {
                        y
                    } else {
                        x
                    }),
                    (x, y) => x.or(y),
                })
            },
        );
    let (worst_gain, i, j) = result?.unwrap_or((0.0, 0, 0));
    let holds = worst_gain <= GAIN_TOLERANCE;
    let counterexample = (!holds).then(|| {
        let choice = decode(i, strategies.len(), opponents.len());
        (
            choice.iter().map(|&c| strategies[c].clone()).collect(),
            strategies[j].clone(),
        )
    });
    Ok(DominanceReport {
        agent,
        agent_type,
        holds,
        own_strategies: strategies.len(),
        opponent_profiles,
        worst_gain,
        counterexample,
    })
}

/// Inputs of the F/U conflict check on a two-world instance.
#[derive(Debug, Clone, PartialEq)]
pub struct NoWinWinInput<'a> {
    /// `(λ_L^A, λ_H^A)` under truthful play.
    pub lambda_star: [f64; 2],
    /// `(λ_L^A, λ_H^A)` after the deviation.
    pub lambda_prime: [f64; 2],
    pub friendly: &'a UtilityTable,
    pub unfriendly: &'a UtilityTable,
    pub prior: [f64; 2],
    pub delta: f64,
    /// Failure bound of truthful play, `2exp(-2c²α_C T)`.
    pub bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum NoWinWinBranch {
    /// The F agent gains more than Δ.
    FriendlyGain,
    /// The U agent gains more than Δ.
    UnfriendlyGain,
    /// Neither gains more than Δ; the implication is vacuous.
    Vacuous,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoWinWinVerdict {
    pub friendly_delta: f64,
    pub unfriendly_delta: f64,
    /// `P_L (λ'_L - λ*_L)`.
    pub gamma_low: f64,
    /// `P_H (λ*_H - λ'_H)`.
    pub gamma_high: f64,
    pub branch: NoWinWinBranch,
    pub holds: bool,
}

/// Checks that an F agent and a U agent cannot both profit by more than Δ:
/// if one gains more than Δ the other strictly loses.
pub fn no_win_win_predicate(input: &NoWinWinInput<'_>) -> Result<NoWinWinVerdict, EquilibriumError> {
    let NoWinWinInput {
        lambda_star,
        lambda_prime,
        friendly,
        unfriendly,
        prior,
        delta,
        bound,
    } = *input;
    let in_unit = |x: f64| (0.0..=1.0).contains(&x);
    if !lambda_star.iter().chain(&lambda_prime).all(|&x| in_unit(x)) {
        return Err(EquilibriumError::Precondition(
            "accept probabilities must lie in [0, 1]",
        ));
    }
    if friendly.num_worlds() != 2 || unfriendly.num_worlds() != 2 {
        return Err(EquilibriumError::Precondition("utility tables must have two worlds"));
    }
    if !(0..2).all(|n| friendly.advantage(n) > 0.0) {
        return Err(EquilibriumError::Precondition("first table is not candidate-friendly"));
    }
    if !(0..2).all(|n| unfriendly.advantage(n) < 0.0) {
        return Err(EquilibriumError::Precondition(
            "second table is not candidate-unfriendly",
        ));
    }
    if lambda_star[0] > bound + GAIN_TOLERANCE || 1.0 - lambda_star[1] > bound + GAIN_TOLERANCE {
        return Err(EquilibriumError::Precondition(
            "truthful accept probabilities are outside the concentration regime",
        ));
    }
    let b = f64::from(friendly.max_value().max(unfriendly.max_value()));
    if delta < b * bound {
        return Err(EquilibriumError::Precondition(
            "delta is below B times the failure bound",
        ));
    }
    let friendly_delta =
        expected_utility(&lambda_prime, friendly, &prior) - expected_utility(&lambda_star, friendly, &prior);
    let unfriendly_delta =
        expected_utility(&lambda_prime, unfriendly, &prior) - expected_utility(&lambda_star, unfriendly, &prior);
    let gamma_low = prior[0] * (lambda_prime[0] - lambda_star[0]);
    let gamma_high = prior[1] * (lambda_star[1] - lambda_prime[1]);
    let (branch, holds) = if friendly_delta > delta + GAIN_TOLERANCE {
        (NoWinWinBranch::FriendlyGain, unfriendly_delta < 0.0)
    } else if unfriendly_delta > delta + GAIN_TOLERANCE {
        (NoWinWinBranch::UnfriendlyGain, friendly_delta < 0.0)
    } else {
        (NoWinWinBranch::Vacuous, true)
    };
    Ok(NoWinWinVerdict {
        friendly_delta,
        unfriendly_delta,
        gamma_low,
        gamma_high,
        branch,
        holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Population, SignalModel};

    fn tables() -> [UtilityTable; 3] {
        [
            UtilityTable::binary(2, 1, 3, 0).unwrap(),
            UtilityTable::binary(1, 2, 3, 0).unwrap(),
            UtilityTable::binary(0, 3, 1, 2).unwrap(),
        ]
    }

    fn tiny(mechanism: Mechanism) -> Scenario {
        let [f, c, u] = tables();
        Scenario::new(
            SignalModel::binary(0.5, 0.7, 0.3).unwrap(),
            Population::from_type_counts(&[
                (AgentType::Friendly, 1, f),
                (AgentType::Contingent, 1, c),
                (AgentType::Unfriendly, 1, u),
            ])
            .unwrap(),
            mechanism,
            None,
        )
        .unwrap()
    }

    #[test]
    fn grid_contents() {
        let s = tiny(Mechanism::Wotc1);
        let g = ReportGrid::with_truthful(&s, &[]).unwrap();
        assert_eq!(g.len(), 4);
        assert!((g.values()[1] - (1.0 + 0.42) / 3.0).abs() < 1e-12);
        assert!((g.values()[2] - (1.0 + 0.58) / 3.0).abs() < 1e-12);
        assert_eq!(ReportGrid::new(vec![]), Err(EquilibriumError::EmptyGrid));
        assert_eq!(ReportGrid::new(vec![1.5]), Err(EquilibriumError::GridValue(1.5)));
    }

    #[test]
    fn strategy_counts() {
        let s = tiny(Mechanism::Wotc1);
        let g = ReportGrid::with_truthful(&s, &[]).unwrap();
        assert_eq!(enumerate_reports(Mechanism::Wotc1, &g).len(), 10);
        let strategies = enumerate_strategies(&s, &g);
        assert_eq!(strategies.len(), 100);
        let truthful = StrategyProfile::truthful(&s);
        for t in 0..3 {
            assert!(strategies.iter().any(|x| x.as_slice() == truthful.strategy(t)));
        }
        let g2 = ReportGrid::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(enumerate_reports(Mechanism::Wotc3, &g2).len(), 6);
        assert_eq!(enumerate_reports(Mechanism::Wotc2, &g2).len(), 8);

        let s2 = tiny(Mechanism::Wotc2);
        let g = ReportGrid::with_truthful(&s2, &[]).unwrap();
        let strategies = enumerate_strategies(&s2, &g);
        let truthful = StrategyProfile::truthful(&s2);
        for t in 0..3 {
            assert!(strategies.iter().any(|x| x.as_slice() == truthful.strategy(t)));
        }
    }

    #[test]
    fn constant_mechanism_is_zero_sbne() {
        let s = tiny(Mechanism::Constant(Alternative::Accept));
        let g = ReportGrid::new(vec![0.0, 0.5, 1.0]).unwrap();
        let r = check_epsilon_sbne(&s, &g, 2, 0.0, DEFAULT_BUDGET).unwrap();
        assert!(r.holds);
        assert_eq!(r.max_admissible_gain, 0.0);
    }

    #[test]
    fn contingent_agent_alone_cannot_gain() {
        let s = tiny(Mechanism::Wotc1);
        let g = ReportGrid::with_truthful(&s, &[]).unwrap();
        let eps = equilibrium_epsilon(&s).unwrap();
        assert!(eps > 29.0 && eps < 31.0);
        let r = check_epsilon_sbne(&s, &g, 1, eps, DEFAULT_BUDGET).unwrap();
        assert!(r.holds);
    }

    #[test]
    fn broken_stub_has_witness() {
        let s = tiny(Mechanism::Wotc1NoMedian);
        let g = ReportGrid::with_truthful(&s, &[]).unwrap();
        let r = check_epsilon_sbne(&s, &g, 2, 1.0, DEFAULT_BUDGET).unwrap();
        assert!(!r.holds);
        let w = r.witness.unwrap();
        assert!(w.max_gain > 1.0);
        assert!(w.verify(&s).unwrap());
    }

    #[test]
    fn budget_is_enforced() {
        let s = tiny(Mechanism::Wotc1);
        let g = ReportGrid::with_truthful(&s, &[]).unwrap();
        assert!(matches!(
            check_epsilon_sbne(&s, &g, 3, 0.0, 1000),
            Err(EquilibriumError::BudgetExceeded { .. })
        ));
    }

    #[test]
    fn dominance_refuses_contingent() {
        let s = tiny(Mechanism::Wotc1);
        let g = ReportGrid::with_truthful(&s, &[]).unwrap();
        let c = s.population().members(AgentType::Contingent)[0];
        assert!(matches!(
            check_dominance(&s, c, &g, DEFAULT_BUDGET),
            Err(EquilibriumError::RefusedType { .. })
        ));
        let small = ReportGrid::new(vec![0.0, 1.0]).unwrap();
        let f = s.population().members(AgentType::Friendly)[0];
        assert!(check_dominance(&s, f, &small, DEFAULT_BUDGET).unwrap().holds);
    }

    #[test]
    fn no_win_win_examples() {
        let [f, _, u] = tables();
        let base = NoWinWinInput {
            lambda_star: [0.0, 1.0],
            lambda_prime: [0.5, 1.0],
            friendly: &f,
            unfriendly: &u,
            prior: [0.5, 0.5],
            delta: 0.0,
            bound: 0.0,
        };
        let v = no_win_win_predicate(&base).unwrap();
        assert_eq!(v.branch, NoWinWinBranch::FriendlyGain);
        assert!(v.holds && v.unfriendly_delta < 0.0);
        assert!((v.gamma_low - 0.25).abs() < 1e-12);

        let same = NoWinWinInput {
            lambda_prime: [0.0, 1.0],
            ..base.clone()
        };
        let v = no_win_win_predicate(&same).unwrap();
        assert_eq!((v.branch, v.holds), (NoWinWinBranch::Vacuous, true));

        let outside = NoWinWinInput {
            lambda_star: [0.3, 1.0],
            ..base.clone()
        };
        assert!(no_win_win_predicate(&outside).is_err());
        let swapped = NoWinWinInput {
            friendly: &u,
            unfriendly: &f,
            ..base
        };
        assert!(no_win_win_predicate(&swapped).is_err());
    }
}
