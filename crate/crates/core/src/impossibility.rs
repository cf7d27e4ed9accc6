//! Anonymous mechanisms under an unknown type distribution: the binomial
//! distance, its Gaussian limit and an exact audit harness for the
//! counterexample instance.

use serde::Serialize;
use statrs::function::factorial::ln_binomial;
use thiserror::Error;

use crate::mechanisms::Signal;
use crate::model::{AgentType, Alternative, UtilityTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ImpossibilityError {
    #[error("population size {0} must be a positive multiple of 3")]
    InvalidSize(usize),
    #[error("integrator did not converge: last change {0:e}")]
    NoConvergence(f64),
    #[error("mechanism is not anonymous: accept probability {first} vs {second} on the same census in two orders")]
    NotAnonymous { first: f64, second: f64 },
    #[error("mechanism returned accept probability {0} outside [0, 1]")]
    InvalidProbability(f64),
}

/// Binomial pmf over `0..=n`, computed in log space.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    if p <= 0.0 {
        let mut v = vec![0.0; n + 1];
        v[0] = 1.0;
        return v;
    }
    if p >= 1.0 {
        let mut v = vec![0.0; n + 1];
        v[n] = 1.0;
        return v;
    }
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    (0..=n)
        .map(|k| (ln_binomial(n as u64, k as u64) + k as f64 * lp + (n - k) as f64 * lq).exp())
        .collect()
}

fn check_size(size: usize) -> Result<(), ImpossibilityError> {
    if size == 0 || !size.is_multiple_of(3) {
        return Err(ImpossibilityError::InvalidSize(size));
    }
    Ok(())
}

/// Total variation distance between `Bin(T, 1/6)` and `Bin(T/3, 1/2)`.
pub fn binomial_tvd(size: usize) -> Result<f64, ImpossibilityError> {
    check_size(size)?;
    let a = binomial_pmf(size, 1.0 / 6.0);
    let b = binomial_pmf(size / 3, 0.5);
    let diff: f64 = a
        .iter()
        .enumerate()
        .map(|(k, &x)| (x - b.get(k).copied().unwrap_or(0.0)).abs())
        .sum();
    Ok(0.5 * diff)
}

/// Half-width of the interval where the narrow normal density exceeds the wide one.
pub fn gaussian_crossing() -> f64 {
    ((5.0 / 24.0) * (5.0f64 / 3.0).ln()).sqrt()
}

pub fn normal_density(x: f64, variance: f64) -> f64 {
    (-0.5 * x * x / variance).exp() / (2.0 * std::f64::consts::PI * variance).sqrt()
}

fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let h = (b - a) / intervals as f64;
    let mut sum = f(a) + f(b);
    for i in 1..intervals {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(a + i as f64 * h);
    }
    sum * h / 3.0
}

/// Total variation distance between `N(0, 1/12)` and `N(0, 5/36)`, integrated
/// numerically over the crossing interval. Doubles the Simpson resolution until
/// successive values differ by less than `1e-13`.
pub fn gaussian_tvd_limit() -> Result<f64, ImpossibilityError> {
    let a = gaussian_crossing();
    let diff = |y: f64| normal_density(y, 1.0 / 12.0) - normal_density(y, 5.0 / 36.0);
    let mut intervals = 64;
    let mut last = simpson(diff, -a, a, intervals);
    let mut change = f64::INFINITY;
    for _ in 0..16 {
        intervals *= 2;
        let next = simpson(diff, -a, a, intervals);
        change = (next - last).abs();
        last = next;
        if change < 1e-13 {
            return Ok(last);
        }
    }
    Err(ImpossibilityError::NoConvergence(change))
}

fn type_index(t: AgentType) -> usize {
    match t {
        AgentType::Friendly => 0,
        AgentType::Contingent => 1,
        AgentType::Unfriendly => 2,
    }
}

/// Order in which [`AnonymousView::ballots`] lists the census.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BallotOrder {
    Forward,
    Reversed,
}

/// What an anonymous mechanism may see: counts per declared type and reported signal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AnonymousView {
    /// `counts[type][signal]` with types ordered F, C, U and signals ℓ, h.
    counts: [[usize; 2]; 3],
    order: BallotOrder,
}

impl AnonymousView {
    pub fn new(counts: [[usize; 2]; 3]) -> Self {
        Self {
            counts,
            order: BallotOrder::Forward,
        }
    }

    pub fn with_order(&self, order: BallotOrder) -> Self {
        Self {
            counts: self.counts,
            order,
        }
    }

    pub fn size(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn count(&self, t: AgentType, s: Signal) -> usize {
        self.counts[type_index(t)][s.index()]
    }

    pub fn type_count(&self, t: AgentType) -> usize {
        self.counts[type_index(t)].iter().sum()
    }

    pub fn high_count(&self) -> usize {
        self.counts.iter().map(|c| c[1]).sum()
    }

    /// `α` for a declared type.
    pub fn alpha(&self, t: AgentType) -> f64 {
        self.type_count(t) as f64 / self.size() as f64
    }

    /// `β` for a (declared type, signal) cell, as a fraction of all agents.
    pub fn beta(&self, t: AgentType, s: Signal) -> f64 {
        self.count(t, s) as f64 / self.size() as f64
    }

    /// The census as a ballot list in an order the harness controls.
    pub fn ballots(&self) -> Vec<(AgentType, Signal)> {
        let mut out = Vec::with_capacity(self.size());
        for t in AgentType::ALL {
            for s in [Signal::Low, Signal::High] {
                out.extend(std::iter::repeat_n((t, s), self.count(t, s)));
            }
        }
        if self.order == BallotOrder::Reversed {
            out.reverse();
        }
        out
    }
}

/// A mechanism that sees only the census; returns the probability of accept.
pub trait AnonymousMechanism: Sync {
    fn accept_probability(&self, view: &AnonymousView) -> f64;
}

impl<F: Fn(&AnonymousView) -> f64 + Sync> AnonymousMechanism for F {
    fn accept_probability(&self, view: &AnonymousView) -> f64 {
        self(view)
    }
}

/// Always announces the same alternative.
#[derive(Debug, Clone, Copy)]
pub struct ConstantMechanism(pub Alternative);

impl AnonymousMechanism for ConstantMechanism {
    fn accept_probability(&self, _: &AnonymousView) -> f64 {
        match self.0 {
            Alternative::Accept => 1.0,
            Alternative::Reject => 0.0,
        }
    }
}

/// One possible type distribution and its probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Setting {
    pub name: &'static str,
    pub probability: f64,
    /// Fractions of F, C, U agents.
    pub alpha: [f64; 3],
}

impl Setting {
    pub fn counts(&self, size: usize) -> [usize; 3] {
        self.alpha.map(|a| (a * size as f64).round() as usize)
    }
}

/// The two-world instance with an unknown type distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleInstance {
    /// `(P_L, P_H)`.
    pub prior: [f64; 2],
    /// `P_{h n}` per world: `ℓ` is certain in L, `h` has probability 1/6 in H.
    pub high_given: [f64; 2],
    pub friendly: UtilityTable,
    pub contingent: UtilityTable,
    pub unfriendly: UtilityTable,
    pub settings: Vec<Setting>,
    pub tau: f64,
    /// Probability with which deviating F agents claim `h` while posing as C.
    pub deviation_high: f64,
}

impl Default for CounterexampleInstance {
    fn default() -> Self {
        Self {
            prior: [0.98, 0.02],
            high_given: [0.0, 1.0 / 6.0],
            friendly: UtilityTable::binary(2, 1, 3, 0).expect("valid table"),
            contingent: UtilityTable::binary(1, 2, 3, 0).expect("valid table"),
            unfriendly: UtilityTable::binary(0, 3, 1, 2).expect("valid table"),
            settings: vec![
                Setting {
                    name: "X",
                    probability: 0.5,
                    alpha: [1.0 / 3.0, 2.0 / 3.0, 0.0],
                },
                Setting {
                    name: "Y",
                    probability: 0.5,
                    alpha: [0.0, 1.0, 0.0],
                },
            ],
            tau: 0.001,
            deviation_high: 0.5,
        }
    }
}

impl CounterexampleInstance {
    fn table(&self, t: AgentType) -> &UtilityTable {
        match t {
            AgentType::Friendly => &self.friendly,
            AgentType::Contingent => &self.contingent,
            AgentType::Unfriendly => &self.unfriendly,
        }
    }

    /// All (world, setting) environments with their unconditional weights.
    pub fn environments(&self) -> Vec<Environment> {
        let mut out = Vec::new();
        for (world, &pw) in self.prior.iter().enumerate() {
            for (setting, s) in self.settings.iter().enumerate() {
                out.push(Environment {
                    label: format!("{}{}", if world == 0 { "L" } else { "H" }, s.name),
                    world,
                    setting,
                    weight: pw * s.probability,
                });
            }
        }
        out
    }

    /// `M(n)` in an environment of size `size`.
    pub fn majority_wish(&self, env: &Environment, size: usize) -> Alternative {
        let counts = self.settings[env.setting].counts(size);
        let accept: usize = AgentType::ALL
            .iter()
            .filter(|&&t| self.table(t).preferred(env.world) == Alternative::Accept)
            .map(|&t| counts[type_index(t)])
            .sum();
        if 2 * accept > size {
            Alternative::Accept
        } else {
            Alternative::Reject
        }
    }

    /// Exact census distribution in an environment. Under `deviated` play the
    /// F agents declare C and report `h` with probability `deviation_high`.
    pub fn census_distribution(&self, env: &Environment, size: usize, deviated: bool) -> Vec<([[usize; 2]; 3], f64)> {
        let counts = self.settings[env.setting].counts(size);
        let p_high = self.high_given[env.world];
        // Per declared type: number of agents and pmf of its h count.
        let mut groups: [(usize, Vec<f64>); 3] = [(0, vec![1.0]), (0, vec![1.0]), (0, vec![1.0])];
        for t in AgentType::ALL {
            let n = counts[type_index(t)];
            if n == 0 {
                continue;
            }
            let (declared, pmf) = if deviated && t == AgentType::Friendly {
                (AgentType::Contingent, binomial_pmf(n, self.deviation_high))
            } else {
                (t, binomial_pmf(n, p_high))
            };
            let g = &mut groups[type_index(declared)];
            g.0 += n;
            g.1 = convolve(&g.1, &pmf);
        }
        let mut out = Vec::new();
        for (kf, &pf) in groups[0].1.iter().enumerate() {
            if pf == 0.0 {
                continue;
            }
            for (kc, &pc) in groups[1].1.iter().enumerate() {
                if pc == 0.0 {
                    continue;
                }
                for (ku, &pu) in groups[2].1.iter().enumerate() {
                    let p = pf * pc * pu;
                    if p == 0.0 {
                        continue;
                    }
                    out.push((
                        [[groups[0].0 - kf, kf], [groups[1].0 - kc, kc], [groups[2].0 - ku, ku]],
                        p,
                    ));
                }
            }
        }
        out
    }
}

fn convolve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub label: String,
    pub world: usize,
    pub setting: usize,
    /// Unconditional probability `P_n · Pr(setting)`.
    pub weight: f64,
}

fn ln_binomial_pmf(n: usize, k: usize, p: f64) -> f64 {
    let term = |count: usize, q: f64| {
        if count == 0 {
            0.0
        } else if q <= 0.0 {
            f64::NEG_INFINITY
        } else {
            count as f64 * q.ln()
        }
    };
    ln_binomial(n as u64, k as u64) + term(k, p) + term(n - k, 1.0 - p)
}

/// Announces the world with the larger posterior given the census under
/// truthful play, accepting iff it is H.
#[derive(Debug, Clone)]
pub struct MapMechanism {
    pub instance: CounterexampleInstance,
}

impl MapMechanism {
    pub fn new(instance: CounterexampleInstance) -> Self {
        Self { instance }
    }

    fn log_joint(&self, view: &AnonymousView, world: usize, setting: &Setting) -> f64 {
        let size = view.size();
        let counts = setting.counts(size);
        let mut log = self.instance.prior[world].ln() + setting.probability.ln();
        for t in AgentType::ALL {
            let n = counts[type_index(t)];
            if view.type_count(t) != n {
                return f64::NEG_INFINITY;
            }
            log += ln_binomial_pmf(n, view.count(t, Signal::High), self.instance.high_given[world]);
        }
        log
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl AnonymousMechanism for MapMechanism {
    fn accept_probability(&self, view: &AnonymousView) -> f64 {
        let world = |n: usize| log_sum_exp(self.instance.settings.iter().map(|s| self.log_joint(view, n, s)));
        let (low, high) = (world(0), world(1));
        if high > low {
            1.0
        } else {
            0.0
        }
    }
}

/// Per-environment results of the audit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvironmentOutcome {
    pub environment: Environment,
    pub majority_wish: Alternative,
    /// Accept probability under truthful play.
    pub accept_truthful: f64,
    /// Accept probability after the F deviation, when F agents are present.
    pub accept_deviated: Option<f64>,
    /// Pr(announce the majority wish) under truthful play.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Violation {
    /// Overall accuracy below `1 - τ`; the margin is `(1 - τ) - accuracy`.
    Accuracy { margin: f64 },
    /// Every F agent gains more than `τ` by deviating; the margin is `gain - τ`.
    DeviationGain { margin: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub size: usize,
    pub tau: f64,
    pub environments: Vec<EnvironmentOutcome>,
    pub accuracy: f64,
    /// Utility change of each deviating F agent, using unconditional environment weights.
    pub friendly_gain: f64,
    pub accuracy_violation: Option<f64>,
    pub deviation_violation: Option<f64>,
}

impl AuditReport {
    /// The failing condition with the largest margin.
    pub fn violation(&self) -> Option<Violation> {
        match (self.accuracy_violation, self.deviation_violation) {
            (Some(a), Some(d)) if d >= a => Some(Violation::DeviationGain { margin: d }),
            (Some(a), _) => Some(Violation::Accuracy { margin: a }),
            (None, Some(d)) => Some(Violation::DeviationGain { margin: d }),
            (None, None) => None,
        }
    }
}

fn expected_accept(
    mechanism: &dyn AnonymousMechanism,
    distribution: &[([[usize; 2]; 3], f64)],
) -> Result<f64, ImpossibilityError> {
    let mut total = 0.0;
    for (counts, p) in distribution {
        let a = mechanism.accept_probability(&AnonymousView::new(*counts));
        if !(0.0..=1.0).contains(&a) {
            return Err(ImpossibilityError::InvalidProbability(a));
        }
        total += p * a;
    }
    Ok(total)
}

fn probe_anonymity(
    mechanism: &dyn AnonymousMechanism,
    distribution: &[([[usize; 2]; 3], f64)],
) -> Result<(), ImpossibilityError> {
    let Some((modal, _)) = distribution.iter().max_by(|a, b| a.1.total_cmp(&b.1)) else {
        return Ok(());
    };
    let view = AnonymousView::new(*modal);
    let first = mechanism.accept_probability(&view);
    let second = mechanism.accept_probability(&view.with_order(BallotOrder::Reversed));
    if (first - second).abs() > 1e-12 {
        return Err(ImpossibilityError::NotAnonymous { first, second });
    }
    Ok(())
}

/// Evaluates `mechanism` on the counterexample instance with `size` agents:
/// truthful accuracy in every environment, and the exact utility change of
/// the F agents when they pose as contingent agents with fair-coin signals.
pub fn counterexample_audit(
    mechanism: &dyn AnonymousMechanism,
    instance: &CounterexampleInstance,
    size: usize,
) -> Result<AuditReport, ImpossibilityError> {
    check_size(size)?;
    let mut environments = Vec::new();
    let mut accuracy = 0.0;
    let mut friendly_gain = 0.0;
    for env in instance.environments() {
        let wish = instance.majority_wish(&env, size);
        let truthful = instance.census_distribution(&env, size, false);
        probe_anonymity(mechanism, &truthful)?;
        let accept_truthful = expected_accept(mechanism, &truthful)?;
        let env_accuracy = match wish {
            Alternative::Accept => accept_truthful,
            Alternative::Reject => 1.0 - accept_truthful,
        };
        accuracy += env.weight * env_accuracy;
        let has_friendly = instance.settings[env.setting].counts(size)[0] > 0;
        let accept_deviated = if has_friendly {
            let deviated = instance.census_distribution(&env, size, true);
            probe_anonymity(mechanism, &deviated)?;
            let a = expected_accept(mechanism, &deviated)?;
            friendly_gain += env.weight * (a - accept_truthful) * instance.friendly.advantage(env.world);
            Some(a)
        } else {
            None
        };
        environments.push(EnvironmentOutcome {
            environment: env,
            majority_wish: wish,
            accept_truthful,
            accept_deviated,
            accuracy: env_accuracy,
        });
    }
    let tau = instance.tau;
    let accuracy_violation = (accuracy < 1.0 - tau).then_some((1.0 - tau) - accuracy);
    let deviation_violation = (friendly_gain > tau).then_some(friendly_gain - tau);
    Ok(AuditReport {
        size,
        tau,
        environments,
        accuracy,
        friendly_gain,
        accuracy_violation,
        deviation_violation,
    })
}

/// Worst-case arithmetic behind the impossibility argument.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundChain {
    /// Accept probability any accurate mechanism keeps in the H environments.
    pub accept_floor: f64,
    /// Accept probability any accurate mechanism allows in the L environments.
    pub accept_ceiling: f64,
    pub tvd_bound: f64,
    /// Lower bound on accept in LX after the deviation.
    pub deviated_accept: f64,
    /// Lower bound on an F agent's utility after the deviation.
    pub utility_after: f64,
    /// Upper bound on accept before the deviation.
    pub truthful_accept: f64,
    /// Upper bound on an F agent's utility before the deviation.
    pub utility_before: f64,
    pub gain: f64,
}

impl BoundChain {
    pub fn compute(instance: &CounterexampleInstance, tvd_bound: f64, accept_floor: f64, accept_ceiling: f64) -> Self {
        let lx = instance.prior[0] * instance.settings[0].probability;
        let deviated_accept = accept_floor - tvd_bound;
        let utility_after = lx * deviated_accept * f64::from(instance.friendly.value(0, Alternative::Accept));
        let truthful_accept = instance.prior[0] * accept_ceiling + instance.prior[1];
        let utility_before = truthful_accept * f64::from(instance.friendly.value(1, Alternative::Accept));
        Self {
            accept_floor,
            accept_ceiling,
            tvd_bound,
            deviated_accept,
            utility_after,
            truthful_accept,
            utility_before,
            gain: utility_after - utility_before,
        }
    }

    pub fn standard(instance: &CounterexampleInstance) -> Self {
        Self::compute(instance, 0.123, 0.99, 0.01)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn tvd_small_case() {
        assert_abs_diff_eq!(binomial_tvd(3).unwrap(), 33.0 / 216.0, epsilon = 1e-14);
        assert_eq!(binomial_tvd(4), Err(ImpossibilityError::InvalidSize(4)));
        assert_eq!(binomial_tvd(0), Err(ImpossibilityError::InvalidSize(0)));
    }

    #[test]
    fn pmf_sums_to_one() {
        for (n, p) in [(0, 0.3), (10, 0.0), (10, 1.0), (3000, 1.0 / 6.0)] {
            let s: f64 = binomial_pmf(n, p).iter().sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn crossing_points() {
        let a = gaussian_crossing();
        let d = normal_density(a, 1.0 / 12.0) - normal_density(a, 5.0 / 36.0);
        assert!(d.abs() < 1e-10);
    }

    #[test]
    fn view_accessors() {
        let v = AnonymousView::new([[1, 2], [3, 4], [0, 1]]);
        assert_eq!(v.size(), 11);
        assert_eq!(v.high_count(), 7);
        assert_eq!(v.type_count(AgentType::Contingent), 7);
        let total: f64 = AgentType::ALL
            .iter()
            .flat_map(|&t| [Signal::Low, Signal::High].map(|s| v.beta(t, s)))
            .sum();
        assert_abs_diff_eq!(total, 1.0, epsilon = 1e-12);
        let mut fwd = v.ballots();
        let rev = v.with_order(BallotOrder::Reversed).ballots();
        assert_ne!(fwd, rev);
        fwd.reverse();
        assert_eq!(fwd, rev);
    }

    #[test]
    fn majority_wishes() {
        let inst = CounterexampleInstance::default();
        for env in inst.environments() {
            let expected = if env.world == 1 {
                Alternative::Accept
            } else {
                Alternative::Reject
            };
            assert_eq!(inst.majority_wish(&env, 30), expected);
        }
    }

    #[test]
    fn constant_mechanism_fails_accuracy() {
        let inst = CounterexampleInstance::default();
        let r = counterexample_audit(&ConstantMechanism(Alternative::Accept), &inst, 30).unwrap();
        assert_abs_diff_eq!(r.accuracy, 0.02, epsilon = 1e-12);
        assert!(matches!(r.violation(), Some(Violation::Accuracy { .. })));
        for e in &r.environments {
            if e.environment.world == 0 {
                assert_eq!(e.accuracy, 0.0);
            }
        }
    }

    #[test]
    fn bound_chain_numbers() {
        let c = BoundChain::standard(&CounterexampleInstance::default());
        assert_abs_diff_eq!(c.deviated_accept, 0.867, epsilon = 1e-12);
        assert_abs_diff_eq!(c.utility_after, 0.84966, epsilon = 1e-12);
        assert_abs_diff_eq!(c.truthful_accept, 0.0298, epsilon = 1e-12);
        assert_abs_diff_eq!(c.utility_before, 0.0894, epsilon = 1e-12);
        assert_abs_diff_eq!(c.gain, 0.76026, epsilon = 1e-12);
    }

    #[test]
    fn order_sensitive_stub_is_rejected() {
        let stub = |v: &AnonymousView| match v.ballots().first() {
            Some((_, Signal::High)) => 1.0,
            _ => 0.0,
        };
        let err = counterexample_audit(&stub, &CounterexampleInstance::default(), 30).unwrap_err();
        assert!(matches!(err, ImpossibilityError::NotAnonymous { .. }));
    }
}
