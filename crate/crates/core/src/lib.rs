//! Wisdom-of-the-crowd voting for two-alternative elections with imperfectly
//! informed, strategic voters.
//!
//! The crate covers the signal model and population ([`model`]), Bayesian
//! peer predictions ([`bayes`]), the voting rules ([`mechanisms`]), exact and
//! Monte Carlo outcome evaluation ([`engine`]), brute-force equilibrium audits
//! ([`equilibrium`]) and the unknown-type-distribution counterexample
//! ([`impossibility`]).

// Negated comparisons are deliberate: NaN must fail every positivity check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bayes;
pub mod engine;
pub mod equilibrium;
pub mod impossibility;
pub mod mechanisms;
pub mod model;
pub mod scenario;

pub use bayes::{
    binarize, concentration_constant, key_inequality_certificate, peer_prediction, world_posterior, BayesError,
    Binarization, BinaryPeerSummary, GapReport, PosteriorBundle, TailCertificate,
};
pub use engine::{
    concentration_bound, estimate_lambda, exact_lambda, exact_lambda_with, expected_utility, ConcentrationBound,
    EngineError, EnumerationMode, OutcomeStats, StrategyProfile,
};
pub use equilibrium::{
    check_dominance, check_epsilon_sbne, enumerate_strategies, equilibrium_epsilon, no_win_win_predicate,
    DeviationWitness, EquilibriumError, ReportGrid, SbneReport,
};
pub use impossibility::{binomial_tvd, counterexample_audit, gaussian_tvd_limit, AnonymousMechanism, AnonymousView};
pub use mechanisms::{BallotBox, Decision, DecisionStep, Mechanism, MechanismError, Report, Signal};
pub use model::{
    AgentType, Alternative, ModelError, ModelViolation, Population, SignalModel, TypeCounts, UtilityTable,
};
pub use scenario::{Scenario, ScenarioError};
