//! Outcome evaluation: sampling, exact enumeration, utilities and the
//! concentration bound for truthful play.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;
use thiserror::Error;

use crate::bayes::{concentration_constant, BayesError};
use crate::mechanisms::{truthful_report, Decision, Report};
use crate::model::{majority_wish, AgentType, Alternative, UtilityTable};
use crate::scenario::Scenario;

/// Largest `M^T` accepted by full enumeration (per world).
pub const FULL_ENUMERATION_LIMIT: u64 = 1 << 20;
/// Largest number of count combinations accepted by count enumeration.
pub const COUNT_ENUMERATION_LIMIT: u64 = 1 << 22;
/// Largest population accepted by count enumeration.
pub const COUNT_ENUMERATION_MAX_AGENTS: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("enumeration limit: {mode} enumeration over {agents} agents and {signals} signals needs {needed} outcomes, limit {limit}")]
    EnumerationLimit {
        mode: &'static str,
        agents: usize,
        signals: usize,
        needed: String,
        limit: u64,
    },
    #[error("profile has {got} strategies for {expected} agents")]
    ProfileSize { expected: usize, got: usize },
    #[error("strategy of agent {agent} covers {got} signals, expected {expected}")]
    StrategyDomain { agent: usize, expected: usize, got: usize },
    #[error("report value {value} of agent {agent} outside [0, 1]")]
    ReportValue { agent: usize, value: f64 },
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error("bound needs a binary scenario")]
    NotBinary,
}

/// One pure strategy per agent: `strategies[t][m]` is agent `t`'s report
/// after receiving original signal `m`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyProfile {
    strategies: Vec<Vec<Report>>,
    truthful: bool,
}

impl StrategyProfile {
    pub fn new(scenario: &Scenario, strategies: Vec<Vec<Report>>) -> Result<Self, EngineError> {
        if strategies.len() != scenario.size() {
            return Err(EngineError::ProfileSize {
                expected: scenario.size(),
                got: strategies.len(),
            });
        }
        let signals = scenario.num_signals();
        for (agent, s) in strategies.iter().enumerate() {
            if s.len() != signals {
                return Err(EngineError::StrategyDomain {
                    agent,
                    expected: signals,
                    got: s.len(),
                });
            }
            if let Some(r) = s.iter().find(|r| !(0.0..=1.0).contains(&r.value)) {
                return Err(EngineError::ReportValue { agent, value: r.value });
            }
        }
        let truthful = strategies == Self::truthful(scenario).strategies;
        Ok(Self { strategies, truthful })
    }

    /// The truthful profile `Σ*`.
    pub fn truthful(scenario: &Scenario) -> Self {
        let strategies = (0..scenario.size())
            .map(|t| {
                (0..scenario.num_signals())
                    .map(|m| truthful_report(scenario, t, m))
                    .collect()
            })
            .collect();
        Self {
            strategies,
            truthful: true,
        }
    }

    /// Every agent plays `strategy`.
    pub fn uniform(scenario: &Scenario, strategy: Vec<Report>) -> Result<Self, EngineError> {
        Self::new(scenario, vec![strategy; scenario.size()])
    }

    pub fn is_truthful(&self) -> bool {
        self.truthful
    }

    pub fn len(&self) -> usize {
        self.strategies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strategies.is_empty()
    }

    pub fn strategy(&self, agent: usize) -> &[Report] {
        &self.strategies[agent]
    }

    pub fn strategies(&self) -> &[Vec<Report>] {
        &self.strategies
    }

    /// Replaces one agent's strategy. The truthful marker is cleared.
    pub fn set_strategy(&mut self, agent: usize, strategy: Vec<Report>) {
        self.strategies[agent] = strategy;
        self.truthful = false;
    }

    pub fn with_strategy(&self, agent: usize, strategy: Vec<Report>) -> Self {
        let mut p = self.clone();
        p.set_strategy(agent, strategy);
        p
    }

    /// Report of `agent` given original signal `m`.
    pub fn report(&self, agent: usize, m: usize) -> Report {
        self.strategies[agent][m]
    }
}

/// Per-world outcome probabilities and derived quantities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutcomeStats {
    /// `λ_n^A`.
    pub lambda_accept: Vec<f64>,
    /// Monte Carlo standard error per world, zero when exact.
    pub stderr: Vec<f64>,
    /// `M(n)`.
    pub majority_wish: Vec<Alternative>,
    /// Pr(announced alternative = M(n) | world n).
    pub success: Vec<f64>,
    /// `I(Σ)` under the scenario prior.
    pub error_rate: f64,
    /// Ex-ante utility of every agent.
    pub utilities: Vec<f64>,
    pub trials: Option<u64>,
    pub seed: Option<u64>,
}

impl OutcomeStats {
    pub fn from_lambda(
        scenario: &Scenario,
        lambda_accept: Vec<f64>,
        stderr: Vec<f64>,
        trials: Option<u64>,
        seed: Option<u64>,
    ) -> Self {
        let population = scenario.population();
        let prior = scenario.model().prior();
        let majority_wish: Vec<Alternative> = (0..scenario.num_worlds())
            .map(|n| majority_wish(population, n))
            .collect();
        let success = lambda_accept
            .iter()
            .zip(&majority_wish)
            .map(|(&l, w)| match w {
                Alternative::Accept => l,
                Alternative::Reject => 1.0 - l,
            })
            .collect();
        let error_rate = error_rate_under(&lambda_accept, prior, &majority_wish);
        let utilities = population
            .agents()
            .iter()
            .map(|table| expected_utility(&lambda_accept, table, prior))
            .collect();
        Self {
            lambda_accept,
            stderr,
            majority_wish,
            success,
            error_rate,
            utilities,
            trials,
            seed,
        }
    }

    pub fn lambda_reject(&self, world: usize) -> f64 {
        1.0 - self.lambda_accept[world]
    }

    /// `I` recomputed under another prior and wish map.
    pub fn error_rate_under(&self, prior: &[f64], wishes: &[Alternative]) -> f64 {
        error_rate_under(&self.lambda_accept, prior, wishes)
    }
}

/// `Σ_n P_n · Pr(announced ≠ wishes[n] | n)`.
pub fn error_rate_under(lambda_accept: &[f64], prior: &[f64], wishes: &[Alternative]) -> f64 {
    lambda_accept
        .iter()
        .zip(prior)
        .zip(wishes)
        .map(|((&l, &p), w)| match w {
            Alternative::Accept => p * (1.0 - l),
            Alternative::Reject => p * l,
        })
        .sum()
}

/// `u_t = Σ_n P_n (λ_n^A v(n,A) + λ_n^R v(n,R))`.
pub fn expected_utility(lambda_accept: &[f64], table: &UtilityTable, prior: &[f64]) -> f64 {
    (0..prior.len())
        .map(|n| {
            let l = lambda_accept[n];
            prior[n]
                * (l * f64::from(table.value(n, Alternative::Accept))
                    + (1.0 - l) * f64::from(table.value(n, Alternative::Reject)))
        })
        .sum()
}

/// Utility written as the all-reject baseline plus accept-probability-weighted
/// advantages.
pub fn expected_utility_by_advantage(lambda_accept: &[f64], table: &UtilityTable, prior: &[f64]) -> f64 {
    let baseline: f64 = (0..prior.len())
        .map(|n| prior[n] * f64::from(table.value(n, Alternative::Reject)))
        .sum();
    baseline
        + (0..prior.len())
            .map(|n| prior[n] * lambda_accept[n] * table.advantage(n))
            .sum::<f64>()
}

/// Utility written around the outcome that is "right" for a split at
/// `low_worlds`: worlds below the split start from accept and pay for reject,
/// worlds at or above start from reject and gain from accept.
pub fn expected_utility_split(lambda_accept: &[f64], table: &UtilityTable, prior: &[f64], low_worlds: usize) -> f64 {
    (0..prior.len())
        .map(|n| {
            let (a, r) = (
                f64::from(table.value(n, Alternative::Accept)),
                f64::from(table.value(n, Alternative::Reject)),
            );
            let l = lambda_accept[n];
            if n < low_worlds {
                prior[n] * (a + (1.0 - l) * (r - a))
            } else {
                prior[n] * (r + l * (a - r))
            }
        })
        .sum()
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `trial` in world `world`:
/// `splitmix64(splitmix64(splitmix64(master) ^ world) ^ trial)`.
pub fn trial_seed(master: u64, world: usize, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ world as u64) ^ trial)
}

fn cumulative(scenario: &Scenario, world: usize) -> Vec<f64> {
    let mut acc = 0.0;
    scenario
        .model()
        .column(world)
        .into_iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn draw(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    cdf.iter().position(|&c| u < c).unwrap_or(cdf.len() - 1)
}

fn trial_into(
    scenario: &Scenario,
    profile: &StrategyProfile,
    cdf: &[f64],
    rng: &mut impl Rng,
    buf: &mut Vec<Report>,
) -> Decision {
    buf.clear();
    buf.extend((0..profile.len()).map(|t| profile.report(t, draw(cdf, rng))));
    scenario.mechanism().decide_reports(buf)
}

/// Draws every agent's signal from the world's likelihood column, applies the
/// profile and runs the mechanism.
pub fn run_trial(scenario: &Scenario, profile: &StrategyProfile, world: usize, rng: &mut impl Rng) -> Decision {
    let cdf = cumulative(scenario, world);
    let mut buf = Vec::with_capacity(profile.len());
    trial_into(scenario, profile, &cdf, rng, &mut buf)
}

/// Number of trials announcing accept in `world`, seeded per trial.
pub fn count_accepts(scenario: &Scenario, profile: &StrategyProfile, world: usize, trials: u64, seed: u64) -> u64 {
    let cdf = cumulative(scenario, world);
    (0..trials)
        .into_par_iter()
        .map_init(
            || Vec::with_capacity(profile.len()),
            |buf, i| {
                let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(seed, world, i));
                u64::from(trial_into(scenario, profile, &cdf, &mut rng, buf).winner == Alternative::Accept)
            },
        )
        .sum()
}

/// Monte Carlo estimate of `λ_n^A` with `trials` conditional runs per world.
pub fn estimate_lambda(scenario: &Scenario, profile: &StrategyProfile, trials: u64, seed: u64) -> OutcomeStats {
    assert!(trials >= 1, "estimate_lambda needs at least one trial");
    let (lambda, stderr): (Vec<f64>, Vec<f64>) = (0..scenario.num_worlds())
        .map(|n| {
            let k = count_accepts(scenario, profile, n, trials, seed);
            let l = k as f64 / trials as f64;
            (l, (l * (1.0 - l) / trials as f64).sqrt())
        })
        .unzip();
    OutcomeStats::from_lambda(scenario, lambda, stderr, Some(trials), Some(seed))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum EnumerationMode {
    /// Count enumeration when some agents share a strategy, full otherwise.
    #[default]
    Auto,
    Full,
    Counts,
}

/// Exact `λ_n^A` with automatic mode selection.
pub fn exact_lambda(scenario: &Scenario, profile: &StrategyProfile) -> Result<OutcomeStats, EngineError> {
    exact_lambda_with(scenario, profile, EnumerationMode::Auto)
}

pub fn exact_lambda_with(
    scenario: &Scenario,
    profile: &StrategyProfile,
    mode: EnumerationMode,
) -> Result<OutcomeStats, EngineError> {
    let lambda = exact_accept_probabilities(scenario, profile, mode)?;
    let zeros = vec![0.0; lambda.len()];
    Ok(OutcomeStats::from_lambda(scenario, lambda, zeros, None, None))
}

/// `λ_n^A` for every world without the derived statistics.
pub fn exact_accept_probabilities(
    scenario: &Scenario,
    profile: &StrategyProfile,
    mode: EnumerationMode,
) -> Result<Vec<f64>, EngineError> {
    let groups = group_strategies(profile);
    let mode = match mode {
        EnumerationMode::Auto if groups.len() < profile.len() && count_plan(scenario, &groups).is_ok() => {
            EnumerationMode::Counts
        }
        EnumerationMode::Auto => EnumerationMode::Full,
        m => m,
    };
    match mode {
        EnumerationMode::Full => full_enumeration(scenario, profile),
        _ => count_enumeration(scenario, profile, &groups),
    }
}

fn group_strategies(profile: &StrategyProfile) -> Vec<(usize, usize)> {
    let mut groups: Vec<(usize, usize)> = Vec::new();
    for t in 0..profile.len() {
        match groups
            .iter_mut()
            .find(|(rep, _)| profile.strategy(*rep) == profile.strategy(t))
        {
            Some(g) => g.1 += 1,
            None => groups.push((t, 1)),
        }
    }
    groups
}

fn full_enumeration(scenario: &Scenario, profile: &StrategyProfile) -> Result<Vec<f64>, EngineError> {
    let agents = profile.len();
    let signals = scenario.num_signals();
    let combos = (signals as u64)
        .checked_pow(agents as u32)
        .filter(|&c| c <= FULL_ENUMERATION_LIMIT);
    let Some(combos) = combos else {
        return Err(EngineError::EnumerationLimit {
            mode: "full",
            agents,
            signals,
            needed: format!("{signals}^{agents}"),
            limit: FULL_ENUMERATION_LIMIT,
        });
    };
    let mechanism = scenario.mechanism();
    Ok((0..scenario.num_worlds())
        .map(|n| {
            let column = scenario.model().column(n);
            let mut digits = vec![0usize; agents];
            let mut reports: Vec<Report> = (0..agents).map(|t| profile.report(t, 0)).collect();
            let (mut accept, mut reject) = (0.0, 0.0);
            for _ in 0..combos {
                let p: f64 = digits.iter().map(|&m| column[m]).product();
                if p > 0.0 {
                    match mechanism.decide_reports(&reports).winner {
                        Alternative::Accept => accept += p,
                        Alternative::Reject => reject += p,
                    }
                }
                for t in 0..agents {
                    digits[t] += 1;
                    if digits[t] < signals {
                        reports[t] = profile.report(t, digits[t]);
                        break;
                    }
                    digits[t] = 0;
                    reports[t] = profile.report(t, 0);
                }
            }
            normalized(accept, reject)
        })
        .collect())
}

/// Accept mass over total enumerated mass, so that rounding in the
/// probabilities cannot move a certain outcome off 0 or 1.
fn normalized(accept: f64, reject: f64) -> f64 {
    if accept == 0.0 {
        0.0
    } else if reject == 0.0 {
        1.0
    } else {
        accept / (accept + reject)
    }
}

fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(rest: usize, parts: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            cur.push(rest);
            out.push(cur.clone());
            cur.pop();
            return;
        }
        for k in 0..=rest {
            cur.push(k);
            rec(rest - k, parts - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::with_capacity(parts), &mut out);
    out
}

fn binomial_u64(n: u64, k: u64) -> Option<u64> {
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

fn count_plan(scenario: &Scenario, groups: &[(usize, usize)]) -> Result<u64, EngineError> {
    let agents: usize = groups.iter().map(|g| g.1).sum();
    let signals = scenario.num_signals();
    let total = groups.iter().try_fold(1u64, |acc, &(_, size)| {
        binomial_u64((size + signals - 1) as u64, (signals - 1) as u64).and_then(|c| acc.checked_mul(c))
    });
    match total {
        Some(t) if t <= COUNT_ENUMERATION_LIMIT && agents <= COUNT_ENUMERATION_MAX_AGENTS => Ok(t),
        _ => Err(EngineError::EnumerationLimit {
            mode: "count",
            agents,
            signals,
            needed: total.map_or_else(|| "overflow".to_string(), |t| t.to_string()),
            limit: COUNT_ENUMERATION_LIMIT,
        }),
    }
}

fn multinomial_probability(counts: &[usize], column: &[f64]) -> f64 {
    let total: usize = counts.iter().sum();
    let mut log = ln_factorial(total as u64);
    for (&c, &p) in counts.iter().zip(column) {
        if c == 0 {
            continue;
        }
        if p <= 0.0 {
            return 0.0;
        }
        log += c as f64 * p.ln() - ln_factorial(c as u64);
    }
    log.exp()
}

fn count_enumeration(
    scenario: &Scenario,
    profile: &StrategyProfile,
    groups: &[(usize, usize)],
) -> Result<Vec<f64>, EngineError> {
    count_plan(scenario, groups)?;
    let signals = scenario.num_signals();
    let mechanism = scenario.mechanism();
    let comps: Vec<Vec<Vec<usize>>> = groups.iter().map(|&(_, size)| compositions(size, signals)).collect();
    Ok((0..scenario.num_worlds())
        .map(|n| {
            let column = scenario.model().column(n);
            let probs: Vec<Vec<f64>> = comps
                .iter()
                .map(|cs| cs.iter().map(|c| multinomial_probability(c, &column)).collect())
                .collect();
            let mut index = vec![0usize; groups.len()];
            let mut reports = Vec::with_capacity(profile.len());
            let (mut accept, mut reject) = (0.0, 0.0);
            loop {
                let p: f64 = index.iter().enumerate().map(|(g, &i)| probs[g][i]).product();
                if p > 0.0 {
                    reports.clear();
                    for (g, &(rep, _)) in groups.iter().enumerate() {
                        for (m, &k) in comps[g][index[g]].iter().enumerate() {
                            let r = profile.report(rep, m);
                            reports.extend(std::iter::repeat_n(r, k));
                        }
                    }
                    match mechanism.decide_reports(&reports).winner {
                        Alternative::Accept => accept += p,
                        Alternative::Reject => reject += p,
                    }
                }
                let mut g = 0;
                loop {
                    if g == groups.len() {
                        return normalized(accept, reject);
                    }
                    index[g] += 1;
                    if index[g] < comps[g].len() {
                        break;
                    }
                    index[g] = 0;
                    g += 1;
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BoundRegime {
    /// Contingent agents decide through the concentration argument.
    Concentration,
    /// More than half the agents are F (or U): the type step decides.
    TypeMajority,
}

/// Failure bound `2exp(-2c²α_C T)` for truthful play.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConcentrationBound {
    pub c: f64,
    pub alpha_c: f64,
    pub size: usize,
    pub failure_bound: f64,
    pub regime: BoundRegime,
    /// The bound exceeds one.
    pub vacuous: bool,
}

pub fn concentration_bound(scenario: &Scenario) -> Result<ConcentrationBound, EngineError> {
    let model = scenario.effective_model();
    if !model.is_binary() {
        return Err(EngineError::NotBinary);
    }
    let c = concentration_constant(model)?;
    let population = scenario.population();
    let alpha_c = population.alpha(AgentType::Contingent);
    let size = population.size();
    let type_majority = population.alpha(AgentType::Friendly) > 0.5 || population.alpha(AgentType::Unfriendly) > 0.5;
    let (failure_bound, regime) = if type_majority {
        (0.0, BoundRegime::TypeMajority)
    } else {
        (
            2.0 * (-2.0 * c * c * alpha_c * size as f64).exp(),
            BoundRegime::Concentration,
        )
    };
    Ok(ConcentrationBound {
        c,
        alpha_c,
        size,
        failure_bound,
        regime,
        vacuous: failure_bound > 1.0,
    })
}
