use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crowdvote_core::model::{validate_model, ModelError, ModelViolation};
use crowdvote_core::{
    AgentType, Alternative, BayesError, Mechanism, MechanismError, Population, Scenario, ScenarioError, SignalModel,
    UtilityTable,
};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TRIALS: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_id")]
    pub scenario_id: String,
    pub mechanism: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binarize_cut: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    pub worlds: WorldsConfig,
    pub signals: SignalsConfig,
    pub population: PopulationConfig,
}

fn default_id() -> String {
    "scenario".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldsConfig {
    pub prior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalsConfig {
    /// One row per signal, one entry per world.
    pub likelihood: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PopulationConfig {
    Types(BTreeMap<TypeKey, Groups>),
    Agents(Vec<AgentConfig>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeKey {
    Friendly,
    Contingent,
    Unfriendly,
}

impl TypeKey {
    pub fn agent_type(self) -> AgentType {
        match self {
            TypeKey::Friendly => AgentType::Friendly,
            TypeKey::Contingent => AgentType::Contingent,
            TypeKey::Unfriendly => AgentType::Unfriendly,
        }
    }
}

/// One representative table per type, or several groups of the same type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Groups {
    One(TypeGroup),
    Many(Vec<TypeGroup>),
}

impl Groups {
    pub fn list(&self) -> &[TypeGroup] {
        match self {
            Groups::One(g) => std::slice::from_ref(g),
            Groups::Many(v) => v,
        }
    }

    fn list_mut(&mut self) -> &mut [TypeGroup] {
        match self {
            Groups::One(g) => std::slice::from_mut(g),
            Groups::Many(v) => v,
        }
    }

    pub fn count(&self) -> usize {
        self.list().iter().map(|g| g.count).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TypeGroup {
    pub count: usize,
    pub accept: Vec<u32>,
    pub reject: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub accept: Vec<u32>,
    pub reject: Vec<u32>,
}

pub fn parse_mechanism(id: &str, tau: Option<f64>) -> Result<Mechanism, CliError> {
    let m = match id {
        "wotc1" => Mechanism::Wotc1,
        "wotc2" => Mechanism::Wotc2,
        "wotc3" => Mechanism::Wotc3,
        "supermajority" => Mechanism::Supermajority {
            tau: tau.ok_or_else(|| CliError::invariant("tau", "supermajority needs tau"))?,
        },
        "majority" => Mechanism::NaiveMajority,
        "surprisingly-popular" => Mechanism::SurprisinglyPopular,
        "wotc1-no-median" => Mechanism::Wotc1NoMedian,
        "constant-accept" => Mechanism::Constant(Alternative::Accept),
        "constant-reject" => Mechanism::Constant(Alternative::Reject),
        other => return Err(CliError::invariant("mechanism", format!("unknown mechanism `{other}`"))),
    };
    Ok(m)
}

fn model_key(v: &ModelViolation) -> &'static str {
    match v {
        ModelViolation::PriorNotPositive { .. } | ModelViolation::PriorSum { .. } => "worlds.prior",
        _ => "signals.likelihood",
    }
}

fn scenario_key(e: &ScenarioError) -> &'static str {
    match e {
        ScenarioError::Model(ModelError::Invalid(v)) => v.first().map_or("signals.likelihood", model_key),
        ScenarioError::Model(ModelError::Shape { .. } | ModelError::Empty) => "signals.likelihood",
        ScenarioError::Model(_) | ScenarioError::WorldMismatch { .. } => "population",
        ScenarioError::Bayes(BayesError::AmbiguousCut(_) | BayesError::CutOutOfRange { .. }) => "binarize_cut",
        ScenarioError::Bayes(_) => "signals.likelihood",
        ScenarioError::Mechanism(MechanismError::TauOutOfRange(_)) => "tau",
        ScenarioError::Mechanism(_) | ScenarioError::Incompatible { .. } => "mechanism",
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path).map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn trials(&self) -> u64 {
        self.trials.unwrap_or(DEFAULT_TRIALS)
    }

    pub fn model(&self) -> Result<SignalModel, CliError> {
        SignalModel::from_parts(self.worlds.prior.clone(), self.signals.likelihood.clone())
            .map_err(|e| CliError::invariant("signals.likelihood", e.to_string()))
    }

    /// Every model invariant violation, each tagged with its key path.
    pub fn model_violations(&self) -> Result<Vec<(&'static str, String)>, CliError> {
        let model = self.model()?;
        Ok(match validate_model(&model) {
            Ok(()) => Vec::new(),
            Err(v) => v.iter().map(|x| (model_key(x), x.to_string())).collect(),
        })
    }

    pub fn population(&self) -> Result<Population, CliError> {
        let tables = |accept: &[u32], reject: &[u32], key: String| {
            UtilityTable::new(accept.to_vec(), reject.to_vec()).map_err(|e| CliError::invariant(key, e.to_string()))
        };
        let population = match &self.population {
            PopulationConfig::Types(groups) => {
                let mut parts = Vec::new();
                for (k, list) in groups {
                    for (i, g) in list.list().iter().enumerate() {
                        let key = match list {
                            Groups::One(_) => format!("population.types.{}", type_name(*k)),
                            Groups::Many(_) => format!("population.types.{}[{i}]", type_name(*k)),
                        };
                        if g.count > 0 {
                            parts.push((k.agent_type(), g.count, tables(&g.accept, &g.reject, key)?));
                        }
                    }
                }
                Population::from_type_counts(&parts)
            }
            PopulationConfig::Agents(agents) => {
                let mut list = Vec::with_capacity(agents.len());
                for (i, a) in agents.iter().enumerate() {
                    list.push(tables(&a.accept, &a.reject, format!("population.agents[{i}]"))?);
                }
                Population::new(list)
            }
        };
        population.map_err(|e| CliError::invariant("population", e.to_string()))
    }

    pub fn mechanism(&self) -> Result<Mechanism, CliError> {
        parse_mechanism(&self.mechanism, self.tau)
    }

    pub fn scenario(&self) -> Result<Scenario, CliError> {
        let violations = self.model_violations()?;
        if let Some((key, msg)) = violations.first() {
            return Err(CliError::invariant(*key, msg.clone()));
        }
        Scenario::new(self.model()?, self.population()?, self.mechanism()?, self.binarize_cut)
            .map_err(|e| CliError::invariant(scenario_key(&e), e.to_string()))
    }

    /// Type counts scaled to `size` agents, rounded up to odd. Returns the
    /// rescaled config and the size actually used.
    pub fn scaled(&self, size: usize) -> Result<(Self, usize), CliError> {
        let PopulationConfig::Types(groups) = &self.population else {
            return Err(CliError::invariant("population", "scaling needs population.types"));
        };
        let size = if size.is_multiple_of(2) { size + 1 } else { size };
        let total: usize = groups.values().map(Groups::count).sum();
        if total == size {
            return Ok((self.clone(), size));
        }
        if total == 0 {
            return Err(CliError::invariant("population", "population is empty"));
        }
        let mut scaled = groups.clone();
        let mut assigned = 0;
        for (k, list) in scaled.iter_mut() {
            if *k == TypeKey::Contingent {
                continue;
            }
            for g in list.list_mut() {
                g.count = (g.count as f64 * size as f64 / total as f64).round() as usize;
                assigned += g.count;
            }
        }
        let rest = size
            .checked_sub(assigned)
            .ok_or_else(|| CliError::invariant("population", "cannot scale type counts"))?;
        match scaled.get_mut(&TypeKey::Contingent) {
            Some(list) => {
                // Contingent groups keep their proportions and absorb the rounding.
                let c_total = list.count().max(1);
                let parts = list.list_mut();
                let last = parts.len() - 1;
                let mut used = 0;
                for (i, g) in parts.iter_mut().enumerate() {
                    g.count = if i == last {
                        rest - used
                    } else {
                        (g.count as f64 * rest as f64 / c_total as f64).round() as usize
                    };
                    used += g.count;
                }
            }
            None if rest == 0 => {}
            None => {
                return Err(CliError::invariant(
                    "population",
                    "no contingent table to absorb rounding",
                ))
            }
        }
        let mut out = self.clone();
        out.population = PopulationConfig::Types(scaled);
        Ok((out, size))
    }
}

fn type_name(k: TypeKey) -> &'static str {
    match k {
        TypeKey::Friendly => "friendly",
        TypeKey::Contingent => "contingent",
        TypeKey::Unfriendly => "unfriendly",
    }
}
