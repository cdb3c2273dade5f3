use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recommenders::{ModelId, ModelParams};

/// Fractions of the candidate set drawn from global popularity, the user's
/// own history, and unseen items.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CandidateMix {
    pub gpop: f64,
    pub ipop: f64,
    pub unknown: f64,
}

impl Default for CandidateMix {
    fn default() -> Self {
        CandidateMix {
            gpop: 0.4,
            ipop: 0.4,
            unknown: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    /// Adoption rate: probability a purchase follows the ranked list.
    pub eta: f64,
    /// Softmax temperature of the organic choice model.
    pub tau: f64,
    /// Strength of the rare-item boost in the utility.
    pub lambda_rarity: f64,
    /// Ranked-list length.
    pub k: usize,
    /// Candidate set size; 0 disables the organic channel.
    pub candidate_set_size: usize,
    pub candidate_mix: CandidateMix,
    pub retrain_interval_epochs: u32,
    pub training_window_epochs: u32,
    pub init_epochs: u32,
    pub horizon_epochs: u32,
    pub steps_per_epoch: u32,
    pub seed: u64,
    pub model: ModelId,
    pub models: ModelParams,
    /// Drop already purchased items from simulation-time ranked lists.
    pub exclude_purchased: bool,
    /// Offset added after shifting ranked-list scores to be non-negative.
    pub score_epsilon: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig {
            eta: 0.5,
            tau: 1.0,
            lambda_rarity: 1.0,
            k: 20,
            candidate_set_size: 100,
            candidate_mix: CandidateMix::default(),
            retrain_interval_epochs: 1,
            training_window_epochs: 4,
            init_epochs: 6,
            horizon_epochs: 24,
            steps_per_epoch: 30,
            seed: 0,
            model: ModelId::MostPop,
            models: ModelParams::default(),
            exclude_purchased: false,
            score_epsilon: 1e-9,
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive and finite");
        }
        if !(self.lambda_rarity >= 0.0 && self.lambda_rarity.is_finite()) {
            return bad("lambda_rarity must be non-negative");
        }
        if self.k == 0 {
            return bad("k must be at least 1");
        }
        let m = self.candidate_mix;
        if m.gpop < 0.0 || m.ipop < 0.0 || m.unknown < 0.0 {
            return bad("candidate_mix fractions must be non-negative");
        }
        if (m.gpop + m.ipop + m.unknown - 1.0).abs() > 1e-9 {
            return bad("candidate_mix must sum to 1");
        }
        if self.retrain_interval_epochs == 0 {
            return bad("retrain_interval_epochs must be at least 1");
        }
        if self.training_window_epochs == 0 {
            return bad("training_window_epochs must be at least 1");
        }
        if self.init_epochs == 0 {
            return bad("init_epochs must be at least 1");
        }
        if self.steps_per_epoch == 0 {
            return bad("steps_per_epoch must be at least 1");
        }
        if self.seed > i64::MAX as u64 {
            return bad("seed must be below 2^63");
        }
        if !(self.score_epsilon > 0.0 && self.score_epsilon.is_finite()) {
            return bad("score_epsilon must be positive");
        }
        self.models.validate()
    }

    /// First simulated step, `init_epochs * steps_per_epoch`.
    pub fn t0(&self) -> u32 {
        self.init_epochs * self.steps_per_epoch
    }

    /// One past the last simulated step.
    pub fn end_step(&self) -> u32 {
        self.t0() + self.horizon_epochs * self.steps_per_epoch
    }
}
