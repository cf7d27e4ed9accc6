//! The probabilistic environment (worlds, signals) and the voting population.
//!
//! Worlds and signals are addressed by 0-based indices ordered from "worst" to
//! "best". Personal and population thresholds keep the 1-based convention in
//! which `0` means "prefers accept in every world" and `N` means "prefers
//! reject in every world"; equivalently a threshold counts the worlds in which
//! reject is preferred.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Numerical tolerance for every normalization check on probabilities.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// The two alternatives on the ballot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Alternative {
    Accept,
    Reject,
}

impl Alternative {
    pub fn code(self) -> char {
        match self {
            Alternative::Accept => 'A',
            Alternative::Reject => 'R',
        }
    }

    pub fn opposite(self) -> Self {
        match self {
            Alternative::Accept => Alternative::Reject,
            Alternative::Reject => Alternative::Accept,
        }
    }
}

impl fmt::Display for Alternative {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// Candidate-friendly, contingent, or candidate-unfriendly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AgentType {
    Friendly,
    Contingent,
    Unfriendly,
}

impl AgentType {
    pub const ALL: [AgentType; 3] = [AgentType::Friendly, AgentType::Contingent, AgentType::Unfriendly];

    pub fn code(self) -> char {
        match self {
            AgentType::Friendly => 'F',
            AgentType::Contingent => 'C',
            AgentType::Unfriendly => 'U',
        }
    }
}

impl fmt::Display for AgentType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("prior has {prior} entries but the likelihood has {columns} world columns")]
    Shape { prior: usize, columns: usize },
    #[error("model needs at least one world and one signal")]
    Empty,
    #[error("signal model is invalid: {}", join_violations(.0))]
    Invalid(Vec<ModelViolation>),
    #[error("population is empty")]
    EmptyPopulation,
    #[error("population size {0} is even; an odd number of agents is required")]
    EvenPopulation(usize),
    #[error("agent {agent} has {found} worlds, expected {expected}")]
    WorldCountMismatch {
        agent: usize,
        expected: usize,
        found: usize,
    },
    #[error("population threshold {threshold} is out of range for {worlds} worlds")]
    ThresholdOutOfRange { threshold: usize, worlds: usize },
    #[error("agent {agent} was declared {declared} but its utility table classifies as {derived}")]
    DeclaredTypeMismatch {
        agent: usize,
        declared: AgentType,
        derived: AgentType,
    },
    #[error("utility table prefers accept in a lower world and reject in a higher one")]
    NonMonotonePreference,
    #[error(transparent)]
    Utility(#[from] UtilityError),
}

fn join_violations(v: &[ModelViolation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

/// One broken invariant of a [`SignalModel`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ModelViolation {
    PriorNotPositive {
        world: usize,
        value: f64,
    },
    PriorSum {
        sum: f64,
    },
    ProbabilityRange {
        signal: usize,
        world: usize,
        value: f64,
    },
    ColumnSum {
        world: usize,
        sum: f64,
    },
    /// Tail mass of signals `>= signal` does not strictly increase from
    /// `low_world` to `high_world`.
    PositiveCorrelation {
        low_world: usize,
        high_world: usize,
        signal: usize,
    },
}

impl fmt::Display for ModelViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelViolation::PriorNotPositive { world, value } => {
                write!(f, "prior of world {world} is {value}, must be positive")
            }
            ModelViolation::PriorSum { sum } => write!(f, "prior sum is {sum}, must be 1"),
            ModelViolation::ProbabilityRange {
                signal,
                world,
                value,
            } => write!(
                f,
                "likelihood of signal {signal} in world {world} is {value}, outside [0, 1]"
            ),
            ModelViolation::ColumnSum { world, sum } => {
                write!(f, "column sum of world {world} is {sum}, must be 1")
            }
            ModelViolation::PositiveCorrelation {
                low_world,
                high_world,
                signal,
            } => write!(
                f,
                "positive correlation fails: tail mass of signals >= {signal} is not larger in world {high_world} than in world {low_world}"
            ),
        }
    }
}

/// Prior over worlds and the likelihood of each signal in each world.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SignalModel {
    prior: Vec<f64>,
    /// `likelihood[m][n]` is the probability of signal `m` in world `n`.
    likelihood: Vec<Vec<f64>>,
}

impl SignalModel {
    /// Builds a model and checks every invariant.
    pub fn new(prior: Vec<f64>, likelihood: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        let model = Self::from_parts(prior, likelihood)?;
        validate_model(&model).map_err(ModelError::Invalid)?;
        Ok(model)
    }

    /// Builds a model checking only that the dimensions agree. Use
    /// [`validate_model`] to collect invariant violations.
    pub fn from_parts(prior: Vec<f64>, likelihood: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if prior.is_empty() || likelihood.is_empty() {
            return Err(ModelError::Empty);
        }
        for row in &likelihood {
            if row.len() != prior.len() {
                return Err(ModelError::Shape {
                    prior: prior.len(),
                    columns: row.len(),
                });
            }
        }
        Ok(Self { prior, likelihood })
    }

    /// Two worlds and two signals: prior `(P_L, 1 - P_L)` and the probability
    /// of the low signal in each world.
    pub fn binary(prior_low: f64, low_given_low: f64, low_given_high: f64) -> Result<Self, ModelError> {
        Self::new(
            vec![prior_low, 1.0 - prior_low],
            vec![
                vec![low_given_low, low_given_high],
                vec![1.0 - low_given_low, 1.0 - low_given_high],
            ],
        )
    }

    pub fn num_worlds(&self) -> usize {
        self.prior.len()
    }

    pub fn num_signals(&self) -> usize {
        self.likelihood.len()
    }

    pub fn is_binary(&self) -> bool {
        self.num_worlds() == 2 && self.num_signals() == 2
    }

    pub fn prior(&self) -> &[f64] {
        &self.prior
    }

    pub fn likelihood(&self, signal: usize, world: usize) -> f64 {
        self.likelihood[signal][world]
    }

    pub fn likelihood_rows(&self) -> &[Vec<f64>] {
        &self.likelihood
    }

    /// Signal distribution in `world`.
    pub fn column(&self, world: usize) -> Vec<f64> {
        self.likelihood.iter().map(|row| row[world]).collect()
    }

    /// Probability of receiving a signal with index `>= signal` in `world`.
    pub fn tail_mass(&self, signal: usize, world: usize) -> f64 {
        self.likelihood[signal..].iter().map(|row| row[world]).sum()
    }
}

/// Checks every [`SignalModel`] invariant and returns all violations found.
pub fn validate_model(model: &SignalModel) -> Result<(), Vec<ModelViolation>> {
    let mut violations = Vec::new();
    let worlds = model.num_worlds();
    let signals = model.num_signals();

    for (world, &p) in model.prior.iter().enumerate() {
        if !(p > 0.0) {
            violations.push(ModelViolation::PriorNotPositive { world, value: p });
        }
    }
    let sum: f64 = model.prior.iter().sum();
    if !((sum - 1.0).abs() <= PROBABILITY_TOLERANCE) {
        violations.push(ModelViolation::PriorSum { sum });
    }

    for (signal, row) in model.likelihood.iter().enumerate() {
        for (world, &p) in row.iter().enumerate() {
            if !(0.0..=1.0).contains(&p) {
                violations.push(ModelViolation::ProbabilityRange {
                    signal,
                    world,
                    value: p,
                });
            }
        }
    }
    for world in 0..worlds {
        let sum: f64 = model.likelihood.iter().map(|row| row[world]).sum();
        if !((sum - 1.0).abs() <= PROBABILITY_TOLERANCE) {
            violations.push(ModelViolation::ColumnSum { world, sum });
        }
    }

    // The tail starting at signal 0 is the whole column, so only proper tails
    // can separate the worlds.
    for high_world in 1..worlds {
        for low_world in 0..high_world {
            for signal in 1..signals {
                if !(model.tail_mass(signal, high_world) > model.tail_mass(signal, low_world)) {
                    violations.push(ModelViolation::PositiveCorrelation {
                        low_world,
                        high_world,
                        signal,
                    });
                }
            }
        }
    }

    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UtilityError {
    #[error("utility table needs the same positive number of accept and reject values (got {accept} and {reject})")]
    Shape { accept: usize, reject: usize },
    #[error("utility of accept must strictly increase with the world (worlds {0} and {1})")]
    AcceptNotIncreasing(usize, usize),
    #[error("utility of reject must strictly decrease with the world (worlds {0} and {1})")]
    RejectNotDecreasing(usize, usize),
    #[error("utility table has a tie between accept and reject in world {0}")]
    Indifferent(usize),
}

/// Ex-post utilities of one agent for each alternative in each world.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct UtilityTable {
    accept: Vec<u32>,
    reject: Vec<u32>,
}

impl UtilityTable {
    pub fn new(accept: Vec<u32>, reject: Vec<u32>) -> Result<Self, UtilityError> {
        if accept.is_empty() || accept.len() != reject.len() {
            return Err(UtilityError::Shape {
                accept: accept.len(),
                reject: reject.len(),
            });
        }
        for n in 1..accept.len() {
            if accept[n] <= accept[n - 1] {
                return Err(UtilityError::AcceptNotIncreasing(n - 1, n));
            }
            if reject[n] >= reject[n - 1] {
                return Err(UtilityError::RejectNotDecreasing(n - 1, n));
            }
        }
        if let Some(n) = (0..accept.len()).find(|&n| accept[n] == reject[n]) {
            return Err(UtilityError::Indifferent(n));
        }
        Ok(Self { accept, reject })
    }

    /// Binary-world table in `(L,A), (L,R), (H,A), (H,R)` order.
    pub fn binary(low_accept: u32, low_reject: u32, high_accept: u32, high_reject: u32) -> Result<Self, UtilityError> {
        Self::new(vec![low_accept, high_accept], vec![low_reject, high_reject])
    }

    pub fn num_worlds(&self) -> usize {
        self.accept.len()
    }

    pub fn accept(&self) -> &[u32] {
        &self.accept
    }

    pub fn reject(&self) -> &[u32] {
        &self.reject
    }

    pub fn value(&self, world: usize, alternative: Alternative) -> u32 {
        match alternative {
            Alternative::Accept => self.accept[world],
            Alternative::Reject => self.reject[world],
        }
    }

    /// `v(n, A) - v(n, R)`.
    pub fn advantage(&self, world: usize) -> f64 {
        f64::from(self.accept[world]) - f64::from(self.reject[world])
    }

    pub fn preferred(&self, world: usize) -> Alternative {
        if self.accept[world] > self.reject[world] {
            Alternative::Accept
        } else {
            Alternative::Reject
        }
    }

    pub fn max_value(&self) -> u32 {
        self.accept.iter().chain(&self.reject).copied().max().unwrap_or(0)
    }

    /// `L_t`: the largest (1-based) world in which reject is preferred, 0 if none.
    pub fn personal_threshold(&self) -> usize {
        (0..self.num_worlds())
            .filter(|&n| self.preferred(n) == Alternative::Reject)
            .map(|n| n + 1)
            .max()
            .unwrap_or(0)
    }
}

/// Result of classifying one agent against the population threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Classification {
    pub agent_type: AgentType,
    /// `L_t`, 1-based, 0 when the agent never prefers reject.
    pub low_threshold: usize,
    /// `H_t = L_t + 1`, equal to `N + 1` when the agent never prefers accept.
    pub high_threshold: usize,
}

/// Classifies an agent as F, C or U by comparing its personal threshold with
/// the population threshold `L` (1-based, `0..=N`).
pub fn classify_agent(table: &UtilityTable, population_threshold: usize) -> Result<Classification, ModelError> {
    let worlds = table.num_worlds();
    if population_threshold > worlds {
        return Err(ModelError::ThresholdOutOfRange {
            threshold: population_threshold,
            worlds,
        });
    }
    let low_threshold = table.personal_threshold();
    // Preferences must switch from reject to accept exactly once.
    if (0..worlds).any(|n| (n < low_threshold) != (table.preferred(n) == Alternative::Reject)) {
        return Err(ModelError::NonMonotonePreference);
    }
    let agent_type = match low_threshold.cmp(&population_threshold) {
        std::cmp::Ordering::Less => AgentType::Friendly,
        std::cmp::Ordering::Equal => AgentType::Contingent,
        std::cmp::Ordering::Greater => AgentType::Unfriendly,
    };
    Ok(Classification {
        agent_type,
        low_threshold,
        high_threshold: low_threshold + 1,
    })
}

/// Number of agents of each type.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TypeCounts {
    pub friendly: usize,
    pub contingent: usize,
    pub unfriendly: usize,
}

impl TypeCounts {
    pub fn total(&self) -> usize {
        self.friendly + self.contingent + self.unfriendly
    }

    pub fn get(&self, t: AgentType) -> usize {
        match t {
            AgentType::Friendly => self.friendly,
            AgentType::Contingent => self.contingent,
            AgentType::Unfriendly => self.unfriendly,
        }
    }

    pub fn add(&mut self, t: AgentType) {
        match t {
            AgentType::Friendly => self.friendly += 1,
            AgentType::Contingent => self.contingent += 1,
            AgentType::Unfriendly => self.unfriendly += 1,
        }
    }

    pub fn fraction(&self, t: AgentType) -> f64 {
        self.get(t) as f64 / self.total() as f64
    }
}

/// The voting population: one utility table per agent plus derived data.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Population {
    agents: Vec<UtilityTable>,
    classes: Vec<Classification>,
    accept_fraction: Vec<f64>,
    threshold: usize,
    counts: TypeCounts,
}

impl Population {
    pub fn new(agents: Vec<UtilityTable>) -> Result<Self, ModelError> {
        if agents.is_empty() {
            return Err(ModelError::EmptyPopulation);
        }
        if agents.len().is_multiple_of(2) {
            return Err(ModelError::EvenPopulation(agents.len()));
        }
        let worlds = agents[0].num_worlds();
        for (agent, table) in agents.iter().enumerate() {
            if table.num_worlds() != worlds {
                return Err(ModelError::WorldCountMismatch {
                    agent,
                    expected: worlds,
                    found: table.num_worlds(),
                });
            }
        }

        let size = agents.len();
        let accept_fraction: Vec<f64> = (0..worlds)
            .map(|n| {
                let count = agents.iter().filter(|a| a.preferred(n) == Alternative::Accept).count();
                count as f64 / size as f64
            })
            .collect();

        // With two worlds the types keep their fixed meaning (F always prefers
        // accept, U always prefers reject) whatever the majority does.
        let threshold = if worlds == 2 {
            1
        } else {
            accept_fraction.iter().filter(|&&a| a < 0.5).count()
        };

        let mut counts = TypeCounts::default();
        let mut classes = Vec::with_capacity(size);
        for table in &agents {
            let class = classify_agent(table, threshold)?;
            counts.add(class.agent_type);
            classes.push(class);
        }

        Ok(Self {
            agents,
            classes,
            accept_fraction,
            threshold,
            counts,
        })
    }

    /// Expands `(declared type, count, representative table)` groups into an
    /// explicit agent list, checking that each table classifies as declared.
    pub fn from_type_counts(groups: &[(AgentType, usize, UtilityTable)]) -> Result<Self, ModelError> {
        let mut agents = Vec::new();
        let mut declared = Vec::new();
        for (t, count, table) in groups {
            for _ in 0..*count {
                agents.push(table.clone());
                declared.push(*t);
            }
        }
        let population = Self::new(agents)?;
        for (agent, (&d, class)) in declared.iter().zip(&population.classes).enumerate() {
            if d != class.agent_type {
                return Err(ModelError::DeclaredTypeMismatch {
                    agent,
                    declared: d,
                    derived: class.agent_type,
                });
            }
        }
        Ok(population)
    }

    pub fn size(&self) -> usize {
        self.agents.len()
    }

    pub fn num_worlds(&self) -> usize {
        self.accept_fraction.len()
    }

    pub fn agents(&self) -> &[UtilityTable] {
        &self.agents
    }

    pub fn agent(&self, t: usize) -> &UtilityTable {
        &self.agents[t]
    }

    pub fn classification(&self, t: usize) -> Classification {
        self.classes[t]
    }

    pub fn agent_type(&self, t: usize) -> AgentType {
        self.classes[t].agent_type
    }

    pub fn counts(&self) -> TypeCounts {
        self.counts
    }

    pub fn alpha(&self, t: AgentType) -> f64 {
        self.counts.fraction(t)
    }

    /// `α_n^A` for every world.
    pub fn accept_fractions(&self) -> &[f64] {
        &self.accept_fraction
    }

    /// Population threshold `L` (1-based); `H = L + 1`.
    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// Largest utility value of any agent, at least 1.
    pub fn utility_bound(&self) -> u32 {
        self.agents
            .iter()
            .map(UtilityTable::max_value)
            .max()
            .unwrap_or(0)
            .max(1)
    }

    pub fn majority_wish(&self, world: usize) -> Alternative {
        majority_wish(self, world)
    }

    /// Indices of all agents of type `t`.
    pub fn members(&self, t: AgentType) -> Vec<usize> {
        (0..self.size()).filter(|&i| self.agent_type(i) == t).collect()
    }
}

/// `M(n)`: accept iff more than half of the agents prefer accept in `world`.
pub fn majority_wish(population: &Population, world: usize) -> Alternative {
    if population.accept_fraction[world] > 0.5 {
        Alternative::Accept
    } else {
        Alternative::Reject
    }
}
