use serde::Serialize;
use thiserror::Error;

use crate::bayes::{binarize, BayesError, Binarization, PosteriorBundle};
use crate::mechanisms::{Mechanism, MechanismError, Signal};
use crate::model::{validate_model, ModelError, Population, SignalModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Bayes(#[from] BayesError),
    #[error(transparent)]
    Mechanism(#[from] MechanismError),
    #[error("population has {population} worlds but the signal model has {model}")]
    WorldMismatch { population: usize, model: usize },
    #[error("mechanism {mechanism} needs {requirement}; scenario has {worlds} worlds and {signals} signals after binarization")]
    Incompatible {
        mechanism: &'static str,
        requirement: &'static str,
        worlds: usize,
        signals: usize,
    },
}

/// A model, a population and a mechanism checked for compatibility.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    model: SignalModel,
    population: Population,
    mechanism: Mechanism,
    binarization: Option<Binarization>,
    effective: SignalModel,
    posteriors: PosteriorBundle,
    is_high: Vec<bool>,
    high_predictions: Vec<f64>,
}

impl Scenario {
    pub fn new(
        model: SignalModel,
        population: Population,
        mechanism: Mechanism,
        binarize_cut: Option<f64>,
    ) -> Result<Self, ScenarioError> {
        validate_model(&model).map_err(ModelError::Invalid)?;
        if population.num_worlds() != model.num_worlds() {
            return Err(ScenarioError::WorldMismatch {
                population: population.num_worlds(),
                model: model.num_worlds(),
            });
        }
        mechanism.validate()?;
        let posteriors = PosteriorBundle::compute(&model)?;
        let binarization = binarize_cut.map(|cut| binarize(&model, cut)).transpose()?;
        let effective = binarization
            .as_ref()
            .map(|b| b.model.clone())
            .unwrap_or_else(|| model.clone());
        let (worlds, signals) = (effective.num_worlds(), effective.num_signals());

        let requirement = match mechanism {
            Mechanism::Wotc1
            | Mechanism::Wotc2
            | Mechanism::Supermajority { .. }
            | Mechanism::SurprisinglyPopular
            | Mechanism::Wotc1NoMedian => (worlds != 2 || signals != 2).then_some("two worlds and two signals"),
            Mechanism::Wotc3 => (signals != 2).then_some("two signals"),
            Mechanism::NaiveMajority | Mechanism::Constant(_) => None,
        };
        if let Some(requirement) = requirement {
            return Err(ScenarioError::Incompatible {
                mechanism: mechanism.id(),
                requirement,
                worlds,
                signals,
            });
        }

        let originals = model.num_signals();
        let (is_high, high_predictions) = match &binarization {
            Some(b) => (b.is_high.clone(), b.high_predictions.clone()),
            None if originals == 2 => (vec![false, true], posteriors.peer[1].clone()),
            None => ((0..originals).map(|m| m > 0).collect(), Vec::new()),
        };

        Ok(Self {
            model,
            population,
            mechanism,
            binarization,
            effective,
            posteriors,
            is_high,
            high_predictions,
        })
    }

    /// Same scenario with another mechanism.
    pub fn with_mechanism(&self, mechanism: Mechanism) -> Result<Self, ScenarioError> {
        Self::new(
            self.model.clone(),
            self.population.clone(),
            mechanism,
            self.binarization.as_ref().map(|b| b.cut),
        )
    }

    /// Same scenario with another population.
    pub fn with_population(&self, population: Population) -> Result<Self, ScenarioError> {
        Self::new(
            self.model.clone(),
            population,
            self.mechanism,
            self.binarization.as_ref().map(|b| b.cut),
        )
    }

    /// The model signals are drawn from.
    pub fn model(&self) -> &SignalModel {
        &self.model
    }

    /// The binary model the mechanism sees (the original when not binarized).
    pub fn effective_model(&self) -> &SignalModel {
        &self.effective
    }

    pub fn population(&self) -> &Population {
        &self.population
    }

    pub fn mechanism(&self) -> Mechanism {
        self.mechanism
    }

    pub fn binarization(&self) -> Option<&Binarization> {
        self.binarization.as_ref()
    }

    pub fn posteriors(&self) -> &PosteriorBundle {
        &self.posteriors
    }

    pub fn size(&self) -> usize {
        self.population.size()
    }

    pub fn num_signals(&self) -> usize {
        self.model.num_signals()
    }

    pub fn num_worlds(&self) -> usize {
        self.model.num_worlds()
    }

    /// Binary class of original signal `m`.
    pub fn effective_signal(&self, m: usize) -> Signal {
        if self.is_high[m] {
            Signal::High
        } else {
            Signal::Low
        }
    }

    /// `T_{hm}` for original signal `m`.
    ///
    /// # Panics
    /// If the effective signal space is not binary.
    pub fn high_prediction(&self, m: usize) -> f64 {
        self.high_predictions[m]
    }

    pub fn is_binary(&self) -> bool {
        self.effective.is_binary()
    }
}
