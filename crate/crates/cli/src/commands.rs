use std::fmt::Write as _;

use crowdvote_core::engine::EnumerationMode;
use crowdvote_core::equilibrium::{conflict_threshold, DominanceReport, DEFAULT_BUDGET};
use crowdvote_core::impossibility::{BoundChain, ConstantMechanism, CounterexampleInstance, MapMechanism, Violation};
use crowdvote_core::{
    binomial_tvd, check_dominance, check_epsilon_sbne, counterexample_audit, equilibrium_epsilon, estimate_lambda,
    exact_lambda_with, gaussian_tvd_limit, AgentType, AnonymousMechanism, EngineError, EquilibriumError, ReportGrid,
    SbneReport, Scenario, StrategyProfile,
};

use crate::config::ScenarioConfig;
use crate::output::ResultsRow;
use crate::{CliError, EXIT_INVARIANT, EXIT_OK, EXIT_WITNESS};

/// Upper end of the printed Gaussian limit check.
pub const LIMIT_CEILING: f64 = 0.12295;
pub const LIMIT_FLOOR: f64 = 0.1229;
pub const TVD_CEILING: f64 = 0.123;

/// Flags shared by the commands that read a scenario config.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub mechanism: Option<String>,
    pub tau: Option<f64>,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl RunOptions {
    fn apply(&self, config: &ScenarioConfig) -> ScenarioConfig {
        let mut c = config.clone();
        if let Some(m) = &self.mechanism {
            c.mechanism = m.clone();
        }
        if self.tau.is_some() {
            c.tau = self.tau;
        }
        if self.trials.is_some() {
            c.trials = self.trials;
        }
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        c
    }
}

fn in_pool<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| CliError::Io(e.to_string()))?;
            Ok(pool.install(f))
        }
    }
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::EnumerationLimit { .. } => CliError::Budget(e.to_string()),
        other => CliError::invariant("population", other.to_string()),
    }
}

fn equilibrium_error(e: EquilibriumError) -> CliError {
    match e {
        EquilibriumError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
        EquilibriumError::Engine(inner) => engine_error(inner),
        EquilibriumError::EmptyGrid | EquilibriumError::GridValue(_) => CliError::invariant("grid", e.to_string()),
        other => CliError::invariant("mechanism", other.to_string()),
    }
}

pub fn validate(config: &ScenarioConfig) -> Result<String, CliError> {
    let violations = config.model_violations()?;
    if !violations.is_empty() {
        let first = violations[0].0;
        let lines: Vec<String> = violations
            .iter()
            .map(|(k, m)| {
                if *k == first {
                    m.clone()
                } else {
                    format!("{m} (at `{k}`)")
                }
            })
            .collect();
        return Err(CliError::invariant(first, lines.join("; ")));
    }
    let s = config.scenario()?;
    let p = s.population();
    let mut out = String::new();
    writeln!(out, "ok: {}", config.scenario_id).unwrap();
    writeln!(
        out,
        "worlds {} signals {} agents {} mechanism {}",
        s.num_worlds(),
        s.num_signals(),
        s.size(),
        s.mechanism().id()
    )
    .unwrap();
    writeln!(
        out,
        "alpha F {:.6} C {:.6} U {:.6} threshold {}",
        p.alpha(AgentType::Friendly),
        p.alpha(AgentType::Contingent),
        p.alpha(AgentType::Unfriendly),
        p.threshold()
    )
    .unwrap();
    Ok(out)
}

/// Monte Carlo run of the truthful profile.
pub fn simulate(config: &ScenarioConfig, opts: &RunOptions) -> Result<Vec<ResultsRow>, CliError> {
    let config = opts.apply(config);
    let s = config.scenario()?;
    let (trials, seed) = (config.trials(), config.seed());
    if trials == 0 {
        return Err(CliError::invariant("trials", "at least one trial is required"));
    }
    let stats = in_pool(opts.threads, || {
        estimate_lambda(&s, &StrategyProfile::truthful(&s), trials, seed)
    })?;
    Ok(ResultsRow::from_stats(&config.scenario_id, &s, &stats))
}

pub fn exact(config: &ScenarioConfig, opts: &RunOptions, mode: EnumerationMode) -> Result<Vec<ResultsRow>, CliError> {
    let config = opts.apply(config);
    let s = config.scenario()?;
    let stats = in_pool(opts.threads, || {
        exact_lambda_with(&s, &StrategyProfile::truthful(&s), mode)
    })?
    .map_err(engine_error)?;
    Ok(ResultsRow::from_stats(&config.scenario_id, &s, &stats))
}

/// One simulation per requested size, with type counts rescaled.
pub fn sweep(config: &ScenarioConfig, sizes: &[usize], opts: &RunOptions) -> Result<Vec<ResultsRow>, CliError> {
    let mut rows = Vec::new();
    for &t in sizes {
        if t == 0 {
            return Err(CliError::invariant("t-values", "sizes must be positive"));
        }
        let (scaled, _) = config.scaled(t)?;
        rows.extend(simulate(&scaled, opts)?);
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EpsilonChoice {
    Auto,
    Value(f64),
}

#[derive(Debug, Clone)]
pub struct EquilibriumOptions {
    pub run: RunOptions,
    pub grid: Vec<f64>,
    pub max_coalition: Option<usize>,
    pub epsilon: EpsilonChoice,
    pub budget: u64,
    pub dominance: bool,
}

impl Default for EquilibriumOptions {
    fn default() -> Self {
        Self {
            run: RunOptions::default(),
            grid: Vec::new(),
            max_coalition: None,
            epsilon: EpsilonChoice::Auto,
            budget: DEFAULT_BUDGET,
            dominance: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumOutcome {
    pub sbne: SbneReport,
    pub dominance: Vec<DominanceReport>,
    pub report: String,
}

impl EquilibriumOutcome {
    pub fn exit_code(&self) -> u8 {
        if self.sbne.holds && self.dominance.iter().all(|d| d.holds) {
            EXIT_OK
        } else {
            EXIT_WITNESS
        }
    }
}

fn fmt_grid(values: &[f64]) -> String {
    values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

pub fn equilibrium(config: &ScenarioConfig, opts: &EquilibriumOptions) -> Result<EquilibriumOutcome, CliError> {
    let config = opts.run.apply(config);
    let s: Scenario = config.scenario()?;
    let grid = ReportGrid::with_truthful(&s, &opts.grid).map_err(equilibrium_error)?;
    let (epsilon, label) = match opts.epsilon {
        EpsilonChoice::Auto => (equilibrium_epsilon(&s).map_err(engine_error)?, "auto"),
        EpsilonChoice::Value(v) => (v, "given"),
    };
    let k = opts.max_coalition.unwrap_or(s.size());
    let (sbne, dominance) = in_pool(opts.run.threads, || -> Result<_, EquilibriumError> {
        let sbne = check_epsilon_sbne(&s, &grid, k, epsilon, opts.budget)?;
        let mut dominance = Vec::new();
        if opts.dominance {
            for t in 0..s.size() {
                if s.population().agent_type(t) != AgentType::Contingent {
                    dominance.push(check_dominance(&s, t, &grid, opts.budget)?);
                }
            }
        }
        Ok((sbne, dominance))
    })?
    .map_err(equilibrium_error)?;

    let mut out = String::new();
    let verdict = if sbne.holds { "holds" } else { "witness found" };
    writeln!(out, "scenario: {}", config.scenario_id).unwrap();
    writeln!(out, "mechanism: {}", s.mechanism().id()).unwrap();
    writeln!(out, "verdict: {verdict}").unwrap();
    writeln!(out, "epsilon: {epsilon} ({label})").unwrap();
    writeln!(out, "grid: {}", fmt_grid(&sbne.grid)).unwrap();
    writeln!(out, "max_coalition: {}", sbne.max_coalition).unwrap();
    writeln!(out, "strategies_per_agent: {}", sbne.strategies_per_agent).unwrap();
    writeln!(out, "profiles_checked: {}", sbne.profiles_checked).unwrap();
    writeln!(out, "max_admissible_gain: {}", sbne.max_admissible_gain).unwrap();
    if let Ok(th) = conflict_threshold(&s) {
        writeln!(out, "conflict_threshold: {th}").unwrap();
        writeln!(
            out,
            "mixed_fu_deviations_above_threshold: {}",
            sbne.mixed_near_witnesses
        )
        .unwrap();
    }
    for d in &dominance {
        writeln!(
            out,
            "dominance agent {} ({}): {} over {} own strategies x {} opponent profiles, worst gain {}",
            d.agent,
            d.agent_type,
            if d.holds { "holds" } else { "fails" },
            d.own_strategies,
            d.opponent_profiles,
            d.worst_gain
        )
        .unwrap();
    }
    if let Some(w) = &sbne.witness {
        writeln!(
            out,
            "witness: {}",
            serde_json::to_string(w).expect("witness serializes")
        )
        .unwrap();
    }
    for d in dominance.iter().filter(|d| !d.holds) {
        writeln!(
            out,
            "dominance counterexample: {}",
            serde_json::to_string(d).expect("report serializes")
        )
        .unwrap();
    }
    Ok(EquilibriumOutcome {
        sbne,
        dominance,
        report: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum AuditedMechanism {
    #[default]
    Map,
    ConstantAccept,
    ConstantReject,
}

fn mark(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Prints the impossibility numerics; exits 1 if the audit finds no violation.
pub fn impossibility(size: usize, audited: AuditedMechanism) -> Result<(u8, String), CliError> {
    if size == 0 || !size.is_multiple_of(3) {
        return Err(CliError::Parse(format!(
            "--t must be a positive multiple of 3, got {size}"
        )));
    }
    let tvd = binomial_tvd(size).map_err(|e| CliError::Parse(e.to_string()))?;
    let limit = gaussian_tvd_limit().map_err(|e| CliError::invariant("gaussian_tvd_limit", e.to_string()))?;
    let instance = CounterexampleInstance::default();
    let mechanism: Box<dyn AnonymousMechanism> = match audited {
        AuditedMechanism::Map => Box::new(MapMechanism::new(instance.clone())),
        AuditedMechanism::ConstantAccept => Box::new(ConstantMechanism(crowdvote_core::Alternative::Accept)),
        AuditedMechanism::ConstantReject => Box::new(ConstantMechanism(crowdvote_core::Alternative::Reject)),
    };
    let audit = counterexample_audit(mechanism.as_ref(), &instance, size)
        .map_err(|e| CliError::invariant("mechanism", e.to_string()))?;
    let chain = BoundChain::standard(&instance);

    let mut out = String::new();
    writeln!(
        out,
        "binomial_tvd({size}) = {tvd:.6}  {} (< {TVD_CEILING})",
        mark(tvd < TVD_CEILING)
    )
    .unwrap();
    writeln!(
        out,
        "gaussian_tvd_limit = {limit:.8}  {} (in [{LIMIT_FLOOR}, {LIMIT_CEILING}])",
        mark((LIMIT_FLOOR..=LIMIT_CEILING).contains(&limit))
    )
    .unwrap();
    writeln!(out, "audit: T={size} tau={}", audit.tau).unwrap();
    for e in &audit.environments {
        let deviated = e.accept_deviated.map_or("-".to_string(), |a| format!("{a:.6}"));
        writeln!(
            out,
            "  {} weight {:.4} wish {} accept {:.6} deviated {} accuracy {:.6}",
            e.environment.label,
            e.environment.weight,
            e.majority_wish.code(),
            e.accept_truthful,
            deviated,
            e.accuracy
        )
        .unwrap();
    }
    writeln!(
        out,
        "  accuracy {:.6} friendly_gain {:.6}",
        audit.accuracy, audit.friendly_gain
    )
    .unwrap();
    let code = match audit.violation() {
        Some(Violation::Accuracy { margin }) => {
            writeln!(
                out,
                "violation: accuracy below 1 - tau, margin {margin:.6}  {}",
                mark(margin > audit.tau)
            )
            .unwrap();
            EXIT_OK
        }
        Some(Violation::DeviationGain { margin }) => {
            writeln!(
                out,
                "violation: F deviation gains more than tau, margin {margin:.6}  {}",
                mark(margin > audit.tau)
            )
            .unwrap();
            EXIT_OK
        }
        None => {
            writeln!(out, "violation: none found  FAIL").unwrap();
            EXIT_INVARIANT
        }
    };
    writeln!(
        out,
        "bound chain: deviated_accept {:.5} utility_after {:.5} truthful_accept {:.5} utility_before {:.5} gain {:.5}",
        chain.deviated_accept, chain.utility_after, chain.truthful_accept, chain.utility_before, chain.gain
    )
    .unwrap();
    Ok((code, out))
}
