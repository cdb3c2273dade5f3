//! Model scoring functions behind one interface.
//!
//! A recommender is anything implementing [`ScoringModel`]: it scores
//! `(user, item)` pairs over a fixed catalog and produces ranked lists. Three
//! native models ship here; further models (neural or graph-based) plug in by
//! implementing the trait and adding a [`ModelId`] arm to [`train`].

mod bpr;
mod eval;
mod grid;
mod itemknn;
mod mostpop;

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InteractionLog, ItemId, UserId};

pub use bpr::{triplet_gradient, triplet_objective, BprModel, TripletParams};
pub use eval::{evaluate, EvalMetrics};
pub use grid::{grid_search, write_grid_csv, GridRow, GridSearch};
pub use itemknn::ItemKnnModel;
pub use mostpop::MostPopModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelId {
    MostPop,
    ItemKnn,
    Bpr,
}

impl ModelId {
    pub const ALL: [ModelId; 3] = [ModelId::MostPop, ModelId::ItemKnn, ModelId::Bpr];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::MostPop => "mostpop",
            ModelId::ItemKnn => "itemknn",
            ModelId::Bpr => "bpr",
        }
    }

    pub(crate) fn code(self) -> u64 {
        self as u64 + 1
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mostpop" => Ok(ModelId::MostPop),
            "itemknn" => Ok(ModelId::ItemKnn),
            "bpr" => Ok(ModelId::Bpr),
            other => Err(Error::Config(format!("unknown model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ItemKnnParams {
    pub neighborhood_size: usize,
}

impl Default for ItemKnnParams {
    fn default() -> Self {
        ItemKnnParams {
            neighborhood_size: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BprParams {
    pub factors: usize,
    pub learning_rate: f64,
    pub regularization: f64,
    pub epochs: usize,
    pub negatives_per_positive: usize,
    /// Standard deviation of the initial latent factors.
    pub init_std: f64,
}

impl Default for BprParams {
    fn default() -> Self {
        BprParams {
            factors: 32,
            learning_rate: 0.05,
            regularization: 0.01,
            epochs: 30,
            negatives_per_positive: 1,
            init_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub itemknn: ItemKnnParams,
    pub bpr: BprParams,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bpr;
        if self.itemknn.neighborhood_size == 0 {
            return Err(Error::Config("neighborhood_size must be at least 1".into()));
        }
        if b.factors == 0 || b.epochs == 0 || b.negatives_per_positive == 0 {
            return Err(Error::Config("BPR counts must be positive".into()));
        }
        if !(b.learning_rate > 0.0 && b.regularization > 0.0 && b.init_std > 0.0) {
            return Err(Error::Config("BPR rates must be positive".into()));
        }
        Ok(())
    }

    /// Parameter names accepted by [`ModelParams::set`] for a model family.
    pub fn names(model: ModelId) -> &'static [&'static str] {
        match model {
            ModelId::MostPop => &[],
            ModelId::ItemKnn => &["neighborhood_size"],
            ModelId::Bpr => &[
                "factors",
                "learning_rate",
                "regularization",
                "epochs",
                "negatives_per_positive",
                "init_std",
            ],
        }
    }

    /// Sets one named hyperparameter. Integer parameters must be whole numbers.
    pub fn set(&mut self, model: ModelId, name: &str, value: f64) -> Result<()> {
        let whole = || {
            if value >= 1.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::Config(format!("{name} must be a positive integer, got {value}")))
            }
        };
        match (model, name) {
            (ModelId::ItemKnn, "neighborhood_size") => self.itemknn.neighborhood_size = whole()?,
            (ModelId::Bpr, "factors") => self.bpr.factors = whole()?,
            (ModelId::Bpr, "epochs") => self.bpr.epochs = whole()?,
            (ModelId::Bpr, "negatives_per_positive") => self.bpr.negatives_per_positive = whole()?,
            (ModelId::Bpr, "learning_rate") => self.bpr.learning_rate = value,
            (ModelId::Bpr, "regularization") => self.bpr.regularization = value,
            (ModelId::Bpr, "init_std") => self.bpr.init_std = value,
            _ => {
                return Err(Error::Config(format!(
                    "unknown parameter '{name}' for {model}"
                )))
            }
        }
        Ok(())
    }
}

/// Ranked list for one user: items by descending score, ties by ascending id.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RankedList {
    pub user: UserId,
    pub items: Vec<ItemId>,
    pub scores: Vec<f64>,
}

impl RankedList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Sampling weights `score - min + epsilon`; order-preserving and strictly
    /// positive for finite scores.
    pub fn sampling_weights(&self, epsilon: f64) -> Vec<f64> {
        let min = self.scores.iter().copied().fold(f64::INFINITY, f64::min);
        self.scores.iter().map(|s| s - min + epsilon).collect()
    }
}

/// Scoring contract shared by all recommenders.
pub trait ScoringModel: Send + Sync {
    fn name(&self) -> &str;

    /// Items the model ranks over, ascending.
    fn catalog(&self) -> &[ItemId];

    /// Whether the model can rank for this user; unknown users get empty lists.
    fn knows_user(&self, user: UserId) -> bool;

    fn score(&self, user: UserId, item: ItemId) -> f64;

    /// Scores parallel to [`ScoringModel::catalog`].
    fn scores(&self, user: UserId) -> Vec<f64> {
        self.catalog().iter().map(|&i| self.score(user, i)).collect()
    }

    fn top_k(&self, user: UserId, k: usize) -> RankedList {
        self.top_k_excluding(user, k, &BTreeSet::new())
    }

    fn top_k_excluding(&self, user: UserId, k: usize, exclude: &BTreeSet<ItemId>) -> RankedList {
        if !self.knows_user(user) {
            return RankedList {
                user,
                ..Default::default()
            };
        }
        rank(user, self.catalog(), &self.scores(user), k, exclude)
    }

    /// Users skipped during training (e.g. no negatives available).
    fn skipped_users(&self) -> usize {
        0
    }
}

fn by_score_then_id(a: (f64, ItemId), b: (f64, ItemId)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Top-`k` of `scores` over `catalog` with the shared tie rule.
pub fn rank(
    user: UserId,
    catalog: &[ItemId],
    scores: &[f64],
    k: usize,
    exclude: &BTreeSet<ItemId>,
) -> RankedList {
    debug_assert_eq!(catalog.len(), scores.len());
    let mut cand: Vec<(f64, ItemId)> = scores
        .iter()
        .zip(catalog)
        .filter(|(_, i)| !exclude.contains(i))
        .map(|(&s, &i)| (s, i))
        .collect();
    let k = k.min(cand.len());
    if k == 0 {
        return RankedList {
            user,
            ..Default::default()
        };
    }
    if k < cand.len() {
        cand.select_nth_unstable_by(k - 1, |a, b| by_score_then_id(*a, *b));
        cand.truncate(k);
    }
    cand.sort_by(|a, b| by_score_then_id(*a, *b));
    RankedList {
        user,
        items: cand.iter().map(|c| c.1).collect(),
        scores: cand.iter().map(|c| c.0).collect(),
    }
}

/// Fits a model on `log`, ranking over `catalog`.
pub fn train(
    model: ModelId,
    params: &ModelParams,
    log: &InteractionLog,
    catalog: &[ItemId],
    seed: u64,
) -> Result<Box<dyn ScoringModel>> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    params.validate()?;
    Ok(match model {
        ModelId::MostPop => Box::new(MostPopModel::train(log, catalog)),
        ModelId::ItemKnn => Box::new(ItemKnnModel::train(log, catalog, params.itemknn.neighborhood_size)),
        ModelId::Bpr => Box::new(BprModel::train(log, catalog, &params.bpr, seed)),
    })
}
