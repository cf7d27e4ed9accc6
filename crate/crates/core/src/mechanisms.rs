//! Decision rules over ballot boxes, truthful report synthesis and the
//! questionnaire encoding.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayes::world_posterior;
use crate::model::{AgentType, Alternative, TypeCounts};
use crate::scenario::Scenario;

/// Binary (possibly binarized) signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Signal {
    Low,
    High,
}

impl Signal {
    pub fn from_index(m: usize) -> Self {
        if m == 0 {
            Signal::Low
        } else {
            Signal::High
        }
    }

    pub fn index(self) -> usize {
        match self {
            Signal::Low => 0,
            Signal::High => 1,
        }
    }
}

impl fmt::Display for Signal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Signal::Low => "l",
            Signal::High => "h",
        })
    }
}

/// One agent's submission.
///
/// `value` is the prediction of the fraction reporting `h` (Mechanisms 1 and
/// 2), the threshold `q_t` (Mechanism 3) or the predicted fraction of `ℓ`
/// (Surprisingly Popular). Naive majority reads `signal` as the vote, `h`
/// meaning accept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub declared_type: AgentType,
    pub signal: Signal,
    pub value: f64,
}

impl Report {
    /// Type-only report in canonical form (signal and value already converted).
    pub fn typed(declared_type: AgentType) -> Self {
        match declared_type {
            AgentType::Friendly => Report {
                declared_type,
                signal: Signal::High,
                value: 0.0,
            },
            AgentType::Unfriendly => Report {
                declared_type,
                signal: Signal::Low,
                value: 1.0,
            },
            AgentType::Contingent => Report {
                declared_type,
                signal: Signal::Low,
                value: 0.0,
            },
        }
    }

    pub fn contingent(signal: Signal, value: f64) -> Self {
        Report {
            declared_type: AgentType::Contingent,
            signal,
            value,
        }
    }

    pub fn with_prediction(declared_type: AgentType, signal: Signal, value: f64) -> Self {
        Report {
            declared_type,
            signal,
            value,
        }
    }

    pub fn vote(alternative: Alternative) -> Self {
        let signal = match alternative {
            Alternative::Accept => Signal::High,
            Alternative::Reject => Signal::Low,
        };
        Report::contingent(signal, 0.0)
    }

    /// Signal after the F/U conversion step.
    pub fn effective_signal(&self) -> Signal {
        match self.declared_type {
            AgentType::Friendly => Signal::High,
            AgentType::Unfriendly => Signal::Low,
            AgentType::Contingent => self.signal,
        }
    }

    /// Prediction after the F/U overwrite step.
    pub fn overwritten_value(&self) -> f64 {
        match self.declared_type {
            AgentType::Friendly => 0.0,
            AgentType::Unfriendly => 1.0,
            AgentType::Contingent => self.value,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MechanismError {
    #[error("ballot box is empty")]
    Empty,
    #[error("ballot box has {0} reports, expected an odd number")]
    EvenSize(usize),
    #[error("report {index} has value {value} outside [0, 1]")]
    ValueOutOfRange { index: usize, value: f64 },
    #[error("supermajority threshold {0} must lie strictly between 0 and 1")]
    TauOutOfRange(f64),
    #[error("questionnaire answer `{0}` is not one of a, b, c, d")]
    UnknownAnswer(char),
    #[error("percentage {0} outside [0, 100]")]
    PercentageOutOfRange(f64),
    #[error("answer `{0}` takes no percentage")]
    UnexpectedPercentage(char),
    #[error("answer `{0}` requires a percentage")]
    MissingPercentage(char),
}

/// An odd-sized, validated list of reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallotBox {
    reports: Vec<Report>,
}

impl BallotBox {
    pub fn new(reports: Vec<Report>) -> Result<Self, MechanismError> {
        if reports.is_empty() {
            return Err(MechanismError::Empty);
        }
        if reports.len().is_multiple_of(2) {
            return Err(MechanismError::EvenSize(reports.len()));
        }
        if let Some((index, r)) = reports
            .iter()
            .enumerate()
            .find(|(_, r)| !(0.0..=1.0).contains(&r.value))
        {
            return Err(MechanismError::ValueOutOfRange { index, value: r.value });
        }
        Ok(Self { reports })
    }

    pub fn reports(&self) -> &[Report] {
        &self.reports
    }

    pub fn len(&self) -> usize {
        self.reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reports.is_empty()
    }

    pub fn effective_signals(&self) -> Vec<Signal> {
        self.reports.iter().map(Report::effective_signal).collect()
    }

    pub fn type_counts(&self) -> TypeCounts {
        type_counts(&self.reports)
    }
}

fn type_counts(reports: &[Report]) -> TypeCounts {
    let mut c = TypeCounts::default();
    for r in reports {
        c.add(r.declared_type);
    }
    c
}

/// Which step announced the winner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DecisionStep {
    /// More than the required share declared F (or U).
    TypeMajority,
    /// Fraction of effective `h` compared against the pivot prediction.
    PivotComparison,
    /// Surprisingly Popular comparison of `ℓ` frequency and mean prediction.
    SurprisinglyPopular,
    /// Plain vote count.
    Vote,
    /// Mechanism ignores reports.
    Constant,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecisionAudit {
    /// Fraction of effective `h` signals (votes for naive majority).
    pub fraction_high: f64,
    /// Median, rank statistic or mean prediction the fraction was compared with.
    pub pivot: Option<f64>,
    pub counts: TypeCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Decision {
    pub winner: Alternative,
    pub step: DecisionStep,
    pub audit: DecisionAudit,
}

/// Mechanism identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Mechanism {
    Wotc1,
    Wotc2,
    Wotc3,
    Supermajority {
        tau: f64,
    },
    SurprisinglyPopular,
    NaiveMajority,
    /// Regression fixture: Mechanism 1 with the median replaced by 1, so the
    /// pivot comparison can never announce accept.
    Wotc1NoMedian,
    /// Announces a fixed alternative.
    Constant(Alternative),
}

impl Mechanism {
    pub fn id(&self) -> &'static str {
        match self {
            Mechanism::Wotc1 => "wotc1",
            Mechanism::Wotc2 => "wotc2",
            Mechanism::Wotc3 => "wotc3",
            Mechanism::Supermajority { .. } => "supermajority",
            Mechanism::SurprisinglyPopular => "surprisingly-popular",
            Mechanism::NaiveMajority => "majority",
            Mechanism::Wotc1NoMedian => "wotc1-no-median",
            Mechanism::Constant(Alternative::Accept) => "constant-accept",
            Mechanism::Constant(Alternative::Reject) => "constant-reject",
        }
    }

    pub fn validate(&self) -> Result<(), MechanismError> {
        if let Mechanism::Supermajority { tau } = *self {
            if !(tau > 0.0 && tau < 1.0) {
                return Err(MechanismError::TauOutOfRange(tau));
            }
        }
        Ok(())
    }

    /// Decision on a validated ballot box.
    pub fn decide(&self, ballots: &BallotBox) -> Decision {
        self.decide_reports(ballots.reports())
    }

    /// Decision on a raw report slice; the caller guarantees a non-empty slice.
    pub fn decide_reports(&self, reports: &[Report]) -> Decision {
        match *self {
            Mechanism::Wotc1 => pivot_rule(reports, Rank::Median, true, true),
            Mechanism::Wotc2 => pivot_rule(reports, Rank::Median, true, false),
            Mechanism::Wotc3 => pivot_rule(reports, Rank::Median, false, true),
            Mechanism::Supermajority { tau } => pivot_rule(reports, Rank::Share(tau), true, true),
            Mechanism::Wotc1NoMedian => pivot_rule(reports, Rank::Fixed(1.0), true, true),
            Mechanism::SurprisinglyPopular => surprisingly_popular_reports(reports),
            Mechanism::NaiveMajority => naive_majority_reports(reports),
            Mechanism::Constant(winner) => Decision {
                winner,
                step: DecisionStep::Constant,
                audit: DecisionAudit {
                    fraction_high: fraction_high(reports),
                    pivot: None,
                    counts: type_counts(reports),
                },
            },
        }
    }
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Mechanism::Supermajority { tau } => write!(f, "supermajority(tau={tau})"),
            m => f.write_str(m.id()),
        }
    }
}

#[derive(Clone, Copy)]
enum Rank {
    Median,
    Share(f64),
    Fixed(f64),
}

/// 1-based rank `⌈τT⌉` of the pivot prediction.
pub fn pivot_rank(tau: f64, size: usize) -> usize {
    ((tau * size as f64 - 1e-9).ceil() as usize).clamp(1, size)
}

fn kth_smallest(values: &mut [f64], rank: usize) -> f64 {
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    *v
}

fn fraction_high(reports: &[Report]) -> f64 {
    let highs = reports.iter().filter(|r| r.effective_signal() == Signal::High).count();
    highs as f64 / reports.len() as f64
}

fn pivot_rule(reports: &[Report], rank: Rank, type_step: bool, overwrite: bool) -> Decision {
    let size = reports.len();
    let counts = type_counts(reports);
    let fraction = fraction_high(reports);
    let pivot = match rank {
        Rank::Fixed(v) => v,
        Rank::Median | Rank::Share(_) => {
            let k = match rank {
                Rank::Median => size.div_ceil(2),
                Rank::Share(tau) => pivot_rank(tau, size),
                Rank::Fixed(_) => unreachable!(),
            };
            let mut values: Vec<f64> = reports
                .iter()
                .map(|r| if overwrite { r.overwritten_value() } else { r.value })
                .collect();
            kth_smallest(&mut values, k)
        }
    };
    let audit = DecisionAudit {
        fraction_high: fraction,
        pivot: Some(pivot),
        counts,
    };
    if type_step {
        let tau = match rank {
            Rank::Share(tau) => tau,
            _ => 0.5,
        };
        let t = size as f64;
        let winner = if counts.friendly as f64 > tau * t {
            Some(Alternative::Accept)
        } else if counts.unfriendly as f64 > (1.0 - tau) * t {
            Some(Alternative::Reject)
        } else {
            None
        };
        if let Some(winner) = winner {
            return Decision {
                winner,
                step: DecisionStep::TypeMajority,
                audit,
            };
        }
    }
    let winner = if fraction > pivot {
        Alternative::Accept
    } else {
        Alternative::Reject
    };
    Decision {
        winner,
        step: DecisionStep::PivotComparison,
        audit,
    }
}

pub fn mechanism1_decide(ballots: &BallotBox) -> Decision {
    Mechanism::Wotc1.decide(ballots)
}

pub fn mechanism2_decide(ballots: &BallotBox) -> Decision {
    Mechanism::Wotc2.decide(ballots)
}

pub fn mechanism3_decide(ballots: &BallotBox) -> Decision {
    Mechanism::Wotc3.decide(ballots)
}

pub fn supermajority_decide(ballots: &BallotBox, tau: f64) -> Result<Decision, MechanismError> {
    let m = Mechanism::Supermajority { tau };
    m.validate()?;
    Ok(m.decide(ballots))
}

/// World estimate of the Surprisingly Popular rule: `0` (L) iff the observed
/// fraction of `ℓ` exceeds the mean predicted fraction of `ℓ`, else `1` (H).
pub fn surprisingly_popular(signals: &[Signal], low_predictions: &[f64]) -> Result<usize, MechanismError> {
    if signals.is_empty() || low_predictions.is_empty() {
        return Err(MechanismError::Empty);
    }
    let low = signals.iter().filter(|&&s| s == Signal::Low).count() as f64 / signals.len() as f64;
    let mean = low_predictions.iter().sum::<f64>() / low_predictions.len() as f64;
    Ok(if low > mean { 0 } else { 1 })
}

fn surprisingly_popular_reports(reports: &[Report]) -> Decision {
    let low = reports.iter().filter(|r| r.signal == Signal::Low).count() as f64 / reports.len() as f64;
    let mean = reports.iter().map(|r| r.value).sum::<f64>() / reports.len() as f64;
    let winner = if low > mean {
        Alternative::Reject
    } else {
        Alternative::Accept
    };
    Decision {
        winner,
        step: DecisionStep::SurprisinglyPopular,
        audit: DecisionAudit {
            fraction_high: 1.0 - low,
            pivot: Some(mean),
            counts: type_counts(reports),
        },
    }
}

fn naive_majority_reports(reports: &[Report]) -> Decision {
    let accept = reports.iter().filter(|r| r.signal == Signal::High).count();
    let winner = if 2 * accept > reports.len() {
        Alternative::Accept
    } else {
        Alternative::Reject
    };
    Decision {
        winner,
        step: DecisionStep::Vote,
        audit: DecisionAudit {
            fraction_high: accept as f64 / reports.len() as f64,
            pivot: None,
            counts: type_counts(reports),
        },
    }
}

/// Plain majority over accept votes.
pub fn naive_majority(votes: &BallotBox) -> Decision {
    Mechanism::NaiveMajority.decide(votes)
}

/// Truthful report of `agent` after receiving original signal `signal`.
pub fn truthful_report(scenario: &Scenario, agent: usize, signal: usize) -> Report {
    let population = scenario.population();
    let kind = population.agent_type(agent);
    let alpha_f = population.alpha(AgentType::Friendly);
    let alpha_c = population.alpha(AgentType::Contingent);
    match scenario.mechanism() {
        Mechanism::Wotc1 | Mechanism::Supermajority { .. } | Mechanism::Wotc1NoMedian => match kind {
            AgentType::Contingent => Report::contingent(
                scenario.effective_signal(signal),
                alpha_f + alpha_c * scenario.high_prediction(signal),
            ),
            other => Report::typed(other),
        },
        Mechanism::Wotc2 => {
            let declared = Report::with_prediction(
                kind,
                scenario.effective_signal(signal),
                alpha_f + alpha_c * scenario.high_prediction(signal),
            );
            // F and U signals are converted anyway; store the converted one.
            Report {
                signal: declared.effective_signal(),
                ..declared
            }
        }
        Mechanism::Wotc3 => match kind {
            AgentType::Contingent => {
                let c = population.classification(agent);
                let model = scenario.effective_model();
                let worlds = model.num_worlds();
                let p_high = |w: usize| -> f64 {
                    if w == 0 {
                        0.0
                    } else if w > worlds {
                        1.0
                    } else {
                        model.likelihood(1, w - 1)
                    }
                };
                let lo = alpha_f + alpha_c * p_high(c.low_threshold);
                let hi = alpha_f + alpha_c * p_high(c.high_threshold);
                Report::contingent(scenario.effective_signal(signal), 0.5 * (lo + hi))
            }
            other => Report::typed(other),
        },
        Mechanism::SurprisinglyPopular => Report::with_prediction(
            kind,
            scenario.effective_signal(signal),
            1.0 - scenario.high_prediction(signal),
        ),
        Mechanism::NaiveMajority => {
            let posterior =
                world_posterior(scenario.model(), signal).expect("scenario construction rejects unreachable signals");
            let table = population.agent(agent);
            let lean: f64 = posterior.iter().enumerate().map(|(n, w)| w * table.advantage(n)).sum();
            Report::vote(if lean > 0.0 {
                Alternative::Accept
            } else {
                Alternative::Reject
            })
        }
        Mechanism::Constant(_) => Report::typed(kind),
    }
}

/// Converts questionnaire answers into a report. `a`: friendly, `b`:
/// unfriendly, `c`: contingent with `h`, `d`: contingent with `ℓ`; the
/// percentage is the prediction for `c`/`d`.
pub fn encode_questionnaire(answer: char, percentage: Option<f64>) -> Result<Report, MechanismError> {
    let answer = answer.to_ascii_lowercase();
    match (answer, percentage) {
        ('a' | 'b', Some(_)) => Err(MechanismError::UnexpectedPercentage(answer)),
        ('a', None) => Ok(Report::typed(AgentType::Friendly)),
        ('b', None) => Ok(Report::typed(AgentType::Unfriendly)),
        ('c' | 'd', None) => Err(MechanismError::MissingPercentage(answer)),
        ('c' | 'd', Some(p)) => {
            if !(0.0..=100.0).contains(&p) {
                return Err(MechanismError::PercentageOutOfRange(p));
            }
            let signal = if answer == 'c' { Signal::High } else { Signal::Low };
            Ok(Report::contingent(signal, p / 100.0))
        }
        _ => Err(MechanismError::UnknownAnswer(answer)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use AgentType::*;

    fn c(signal: Signal, v: f64) -> Report {
        Report::contingent(signal, v)
    }

    fn boxed(r: Vec<Report>) -> BallotBox {
        BallotBox::new(r).unwrap()
    }

    #[test]
    fn mechanism1_trace() {
        let b = boxed(vec![
            Report::typed(Friendly),
            Report::typed(Unfriendly),
            c(Signal::High, 0.548),
            c(Signal::High, 0.548),
            c(Signal::Low, 0.452),
        ]);
        assert_eq!(
            b.effective_signals(),
            vec![Signal::High, Signal::Low, Signal::High, Signal::High, Signal::Low]
        );
        let d = mechanism1_decide(&b);
        assert_eq!(d.winner, Alternative::Accept);
        assert_eq!(d.step, DecisionStep::PivotComparison);
        assert!((d.audit.fraction_high - 0.6).abs() < 1e-12);
        assert_eq!(d.audit.pivot, Some(0.548));
    }

    #[test]
    fn mechanism1_type_step() {
        let b = boxed(vec![
            Report::typed(Friendly),
            Report::typed(Friendly),
            Report::typed(Friendly),
            Report::typed(Unfriendly),
            c(Signal::Low, 0.9),
        ]);
        let d = mechanism1_decide(&b);
        assert_eq!(d.winner, Alternative::Accept);
        assert_eq!(d.step, DecisionStep::TypeMajority);
    }

    #[test]
    fn mechanism1_strict_tie() {
        let b = boxed(vec![c(Signal::Low, 0.42); 3]);
        assert_eq!(mechanism1_decide(&b).winner, Alternative::Reject);
        let b = boxed(vec![c(Signal::High, 1.0); 3]);
        assert_eq!(mechanism1_decide(&b).winner, Alternative::Reject);
    }

    #[test]
    fn mechanism2_trace() {
        let b = boxed(vec![
            Report::with_prediction(Friendly, Signal::High, 0.548),
            Report::with_prediction(Unfriendly, Signal::Low, 0.452),
            c(Signal::High, 0.548),
            c(Signal::High, 0.548),
            c(Signal::Low, 0.452),
        ]);
        let d = mechanism2_decide(&b);
        assert_eq!(d.audit.pivot, Some(0.548));
        assert_eq!(d.winner, Alternative::Accept);

        let only_c = boxed(vec![c(Signal::High, 0.58), c(Signal::Low, 0.42), c(Signal::High, 0.58)]);
        assert_eq!(mechanism1_decide(&only_c), mechanism2_decide(&only_c));
    }

    #[test]
    fn mechanism3_single_agent() {
        assert_eq!(
            mechanism3_decide(&boxed(vec![c(Signal::High, 0.5)])).winner,
            Alternative::Accept
        );
        assert_eq!(
            mechanism3_decide(&boxed(vec![c(Signal::Low, 0.5)])).winner,
            Alternative::Reject
        );
        // No type step: three F agents still go through the pivot comparison.
        let f = boxed(vec![Report::typed(Friendly); 3]);
        assert_eq!(mechanism3_decide(&f).step, DecisionStep::PivotComparison);
    }

    #[test]
    fn supermajority_rank() {
        assert_eq!(pivot_rank(2.0 / 3.0, 9), 6);
        assert_eq!(pivot_rank(0.5, 9), 5);
        assert_eq!(pivot_rank(0.5, 1), 1);
        let mut r = vec![Report::typed(Friendly); 7];
        r.push(c(Signal::Low, 0.1));
        r.push(c(Signal::Low, 0.1));
        let d = supermajority_decide(&boxed(r), 2.0 / 3.0).unwrap();
        assert_eq!((d.winner, d.step), (Alternative::Accept, DecisionStep::TypeMajority));

        let values: Vec<Report> = (1..=9).map(|i| c(Signal::Low, i as f64 / 10.0)).collect();
        let d = supermajority_decide(&boxed(values), 2.0 / 3.0).unwrap();
        assert!((d.audit.pivot.unwrap() - 0.6).abs() < 1e-12);
        assert!(supermajority_decide(&boxed(vec![c(Signal::Low, 0.1)]), 1.0).is_err());
    }

    #[test]
    fn surprisingly_popular_examples() {
        let mut signals = vec![Signal::Low; 6];
        signals.extend(vec![Signal::High; 4]);
        let mut preds = vec![0.857; 6];
        preds.extend(vec![0.75; 4]);
        assert_eq!(surprisingly_popular(&signals, &preds).unwrap(), 1);

        let mut signals = vec![Signal::Low; 9];
        signals.push(Signal::High);
        assert_eq!(surprisingly_popular(&signals, &preds).unwrap(), 0);

        assert_eq!(
            surprisingly_popular(&[Signal::Low, Signal::High], &[0.5, 0.5]).unwrap(),
            1
        );
        assert_eq!(surprisingly_popular(&[], &[]), Err(MechanismError::Empty));
    }

    #[test]
    fn naive_majority_examples() {
        let d = naive_majority(&boxed(vec![Report::vote(Alternative::Accept); 3]));
        assert_eq!(d.winner, Alternative::Accept);
        let d = naive_majority(&boxed(vec![Report::vote(Alternative::Reject)]));
        assert_eq!(d.winner, Alternative::Reject);
    }

    #[test]
    fn ballot_box_validation() {
        assert_eq!(BallotBox::new(vec![]), Err(MechanismError::Empty));
        assert_eq!(
            BallotBox::new(vec![c(Signal::Low, 0.1); 2]),
            Err(MechanismError::EvenSize(2))
        );
        assert!(matches!(
            BallotBox::new(vec![c(Signal::Low, 1.5)]),
            Err(MechanismError::ValueOutOfRange { index: 0, .. })
        ));
    }

    #[test]
    fn questionnaire() {
        assert_eq!(encode_questionnaire('a', None).unwrap(), Report::typed(Friendly));
        assert_eq!(encode_questionnaire('b', None).unwrap(), Report::typed(Unfriendly));
        let r = encode_questionnaire('c', Some(54.8)).unwrap();
        assert_eq!((r.declared_type, r.signal), (Contingent, Signal::High));
        assert!((r.value - 0.548).abs() < 1e-12);
        let r = encode_questionnaire('d', Some(45.2)).unwrap();
        assert_eq!(r.signal, Signal::Low);
        assert!(encode_questionnaire('a', Some(1.0)).is_err());
        assert!(encode_questionnaire('c', None).is_err());
        assert!(encode_questionnaire('c', Some(101.0)).is_err());
        assert!(encode_questionnaire('e', None).is_err());
    }

    #[test]
    fn broken_stub_never_accepts_by_pivot() {
        let b = boxed(vec![c(Signal::High, 0.0); 3]);
        assert_eq!(Mechanism::Wotc1NoMedian.decide(&b).winner, Alternative::Reject);
        assert_eq!(Mechanism::Wotc1.decide(&b).winner, Alternative::Accept);
    }
}
