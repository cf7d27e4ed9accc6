//! Posterior beliefs, peer predictions and the ordering certificate that makes
//! the surprisingly-popular signal identify the world.

use serde::Serialize;
use thiserror::Error;

use crate::model::SignalModel;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BayesError {
    #[error("signal {0} has zero probability in every world")]
    UnreachableSignal(usize),
    #[error("signal {signal} is out of range for {signals} signals")]
    SignalOutOfRange { signal: usize, signals: usize },
    #[error("operation needs two worlds and two signals, model has {worlds} worlds and {signals} signals")]
    NotBinary { worlds: usize, signals: usize },
    #[error("ordering gap `{name}` is {value}, expected a positive value")]
    GapNotPositive { name: &'static str, value: f64 },
    #[error("ambiguous cut {0}: the binarization cut must not be an integer")]
    AmbiguousCut(f64),
    #[error("cut {cut} must lie strictly between 1 and {signals}")]
    CutOutOfRange { cut: f64, signals: usize },
}

fn check_signal(model: &SignalModel, signal: usize) -> Result<(), BayesError> {
    if signal >= model.num_signals() {
        return Err(BayesError::SignalOutOfRange {
            signal,
            signals: model.num_signals(),
        });
    }
    Ok(())
}

/// `Pr(W = n | S = signal)` for every world `n`.
pub fn world_posterior(model: &SignalModel, signal: usize) -> Result<Vec<f64>, BayesError> {
    check_signal(model, signal)?;
    let joint: Vec<f64> = model
        .prior()
        .iter()
        .enumerate()
        .map(|(n, &p)| p * model.likelihood(signal, n))
        .collect();
    let evidence: f64 = joint.iter().sum();
    if !(evidence > 0.0) {
        return Err(BayesError::UnreachableSignal(signal));
    }
    Ok(joint.into_iter().map(|j| j / evidence).collect())
}

/// `T_{m'm}`: belief of an agent who received `received` that another agent
/// receives `predicted`.
pub fn peer_prediction(model: &SignalModel, received: usize, predicted: usize) -> Result<f64, BayesError> {
    check_signal(model, predicted)?;
    let posterior = world_posterior(model, received)?;
    Ok(posterior
        .iter()
        .enumerate()
        .map(|(n, &w)| w * model.likelihood(predicted, n))
        .sum())
}

/// Posterior quantities for every received signal.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorBundle {
    /// `world_posterior[m][n] = Pr(W = n | S = m)`.
    pub world_posterior: Vec<Vec<f64>>,
    /// `peer[m'][m] = T_{m'm}`; each column `m` sums to one.
    pub peer: Vec<Vec<f64>>,
}

impl PosteriorBundle {
    pub fn compute(model: &SignalModel) -> Result<Self, BayesError> {
        let signals = model.num_signals();
        let world_posterior = (0..signals)
            .map(|m| world_posterior(model, m))
            .collect::<Result<Vec<_>, _>>()?;
        let mut peer = vec![vec![0.0; signals]; signals];
        for (m, post) in world_posterior.iter().enumerate() {
            for (m2, row) in peer.iter_mut().enumerate() {
                row[m] = post.iter().enumerate().map(|(n, &w)| w * model.likelihood(m2, n)).sum();
            }
        }
        Ok(Self { world_posterior, peer })
    }

    pub fn binary_summary(&self) -> Option<BinaryPeerSummary> {
        if self.peer.len() != 2 {
            return None;
        }
        Some(BinaryPeerSummary {
            low_given_low: self.peer[0][0],
            low_given_high: self.peer[0][1],
            high_given_low: self.peer[1][0],
            high_given_high: self.peer[1][1],
        })
    }
}

/// `T_{ℓℓ}, T_{ℓh}, T_{hℓ}, T_{hh}` for a binary signal space. The field
/// name reads "predicted given received".
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BinaryPeerSummary {
    pub low_given_low: f64,
    pub low_given_high: f64,
    pub high_given_low: f64,
    pub high_given_high: f64,
}

impl BinaryPeerSummary {
    pub fn of(model: &SignalModel) -> Result<Self, BayesError> {
        require_binary(model)?;
        Ok(PosteriorBundle::compute(model)?
            .binary_summary()
            .expect("binary model yields a binary summary"))
    }
}

fn require_binary(model: &SignalModel) -> Result<(), BayesError> {
    if !model.is_binary() {
        return Err(BayesError::NotBinary {
            worlds: model.num_worlds(),
            signals: model.num_signals(),
        });
    }
    Ok(())
}

/// Names of the six ordering gaps, in report order.
pub const GAP_NAMES: [&str; 6] = [
    "T_lh - P_lH",
    "T_ll - T_lh",
    "P_lL - T_ll",
    "P_hH - T_hh",
    "T_hh - T_hl",
    "T_hl - P_hL",
];

/// The six gaps of the two chains
/// `P_ℓH < T_ℓh < T_ℓℓ < P_ℓL` and `P_hH > T_hh > T_hℓ > P_hL`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapReport {
    pub gaps: [f64; 6],
    pub peer: BinaryPeerSummary,
}

impl GapReport {
    pub fn min_gap(&self) -> f64 {
        self.gaps.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn named(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        GAP_NAMES.iter().copied().zip(self.gaps.iter().copied())
    }
}

/// Computes the two ordering chains of a binary model and fails if any gap is
/// not strictly positive.
pub fn key_inequality_certificate(model: &SignalModel) -> Result<GapReport, BayesError> {
    require_binary(model)?;
    let peer = BinaryPeerSummary::of(model)?;
    let (p_low_l, p_low_h) = (model.likelihood(0, 0), model.likelihood(0, 1));
    let (p_high_l, p_high_h) = (model.likelihood(1, 0), model.likelihood(1, 1));
    let gaps = [
        peer.low_given_high - p_low_h,
        peer.low_given_low - peer.low_given_high,
        p_low_l - peer.low_given_low,
        p_high_h - peer.high_given_high,
        peer.high_given_high - peer.high_given_low,
        peer.high_given_low - p_high_l,
    ];
    let report = GapReport { gaps, peer };
    if let Some((name, value)) = report.named().find(|(_, g)| !(*g > 0.0)) {
        return Err(BayesError::GapNotPositive { name, value });
    }
    Ok(report)
}

/// `c`: one third of the smallest ordering gap.
pub fn concentration_constant(model: &SignalModel) -> Result<f64, BayesError> {
    Ok(key_inequality_certificate(model)?.min_gap() / 3.0)
}

/// Check that every original signal's prediction of the high class lies
/// strictly between the high-class probabilities of the two worlds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailCertificate {
    /// `P_hL`.
    pub low_world: f64,
    /// `P_hH`.
    pub high_world: f64,
    /// `T_{hm}` per original signal.
    pub predictions: Vec<f64>,
}

impl TailCertificate {
    pub fn violations(&self) -> Vec<usize> {
        self.predictions
            .iter()
            .enumerate()
            .filter(|(_, &t)| !(self.high_world > t && t > self.low_world))
            .map(|(m, _)| m)
            .collect()
    }

    pub fn holds(&self) -> bool {
        self.violations().is_empty()
    }
}

/// A many-signal model collapsed to `{ℓ, h}` at a non-integer cut.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binarization {
    pub cut: f64,
    /// Binary model over the same worlds.
    pub model: SignalModel,
    /// For each original signal, whether it maps to `h`.
    pub is_high: Vec<bool>,
    /// `T_{hm}` for every original signal `m`, computed on the original model.
    pub high_predictions: Vec<f64>,
    /// Present for two-world models.
    pub certificate: Option<TailCertificate>,
}

/// Reduces the signal space at `cut` (1-based signal scale): signals below
/// the cut become `ℓ`, signals above become `h`.
pub fn binarize(model: &SignalModel, cut: f64) -> Result<Binarization, BayesError> {
    let signals = model.num_signals();
    if !cut.is_finite() || cut <= 1.0 || cut >= signals as f64 {
        return Err(BayesError::CutOutOfRange { cut, signals });
    }
    if cut.fract() == 0.0 {
        return Err(BayesError::AmbiguousCut(cut));
    }
    let is_high: Vec<bool> = (0..signals).map(|m| (m + 1) as f64 > cut).collect();
    let worlds = model.num_worlds();
    let high: Vec<f64> = (0..worlds)
        .map(|n| {
            (0..signals)
                .filter(|&m| is_high[m])
                .map(|m| model.likelihood(m, n))
                .sum()
        })
        .collect();
    let low: Vec<f64> = (0..worlds)
        .map(|n| {
            (0..signals)
                .filter(|&m| !is_high[m])
                .map(|m| model.likelihood(m, n))
                .sum()
        })
        .collect();
    let binary = SignalModel::from_parts(model.prior().to_vec(), vec![low, high.clone()])
        .expect("binarized model keeps the world count");

    let high_predictions = (0..signals)
        .map(|m| {
            let post = world_posterior(model, m)?;
            Ok(post.iter().zip(&high).map(|(w, p)| w * p).sum())
        })
        .collect::<Result<Vec<f64>, BayesError>>()?;

    let certificate = (worlds == 2).then(|| TailCertificate {
        low_world: high[0],
        high_world: high[1],
        predictions: high_predictions.clone(),
    });

    Ok(Binarization {
        cut,
        model: binary,
        is_high,
        high_predictions,
        certificate,
    })
}
