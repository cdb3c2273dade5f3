use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InteractionLog, ItemId, UserId};

use super::ScoringModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub ndcg: f64,
    pub precision: f64,
    pub recall: f64,
    pub hit_rate: f64,
    pub users: usize,
    /// Test users absent from the training log.
    pub skipped_users: usize,
}

/// Top-`k` ranking quality averaged over users, with binary relevance.
///
/// Each user's list excludes their training items; the relevant set is the
/// distinct items they bought in `test`.
pub fn evaluate(
    model: &dyn ScoringModel,
    train: &InteractionLog,
    test: &InteractionLog,
    k: usize,
) -> Result<EvalMetrics> {
    let train_sets = train.item_sets();
    let mut relevant: BTreeMap<UserId, BTreeSet<ItemId>> = BTreeMap::new();
    for e in test.events() {
        relevant.entry(e.user).or_default().insert(e.item);
    }
    let discount = |r: usize| 1.0 / ((r + 2) as f64).log2();

    let (mut ndcg, mut precision, mut recall, mut hit) = (0.0, 0.0, 0.0, 0.0);
    let mut users = 0usize;
    let mut skipped = 0usize;
    for (u, rel) in &relevant {
        let Some(seen) = train_sets.get(u) else {
            skipped += 1;
            continue;
        };
        let list = model.top_k_excluding(*u, k, seen);
        let hits: Vec<usize> = list
            .items
            .iter()
            .enumerate()
            .filter(|(_, i)| rel.contains(i))
            .map(|(r, _)| r)
            .collect();
        let dcg: f64 = hits.iter().map(|&r| discount(r)).sum();
        let idcg: f64 = (0..rel.len().min(k)).map(discount).sum();
        ndcg += dcg / idcg;
        precision += hits.len() as f64 / k as f64;
        recall += hits.len() as f64 / rel.len() as f64;
        hit += if hits.is_empty() { 0.0 } else { 1.0 };
        users += 1;
    }
    if skipped > 0 {
        warn!("evaluation skipped {skipped} test users unseen in training");
    }
    if users == 0 {
        return Err(Error::NoEvaluableUsers);
    }
    let n = users as f64;
    Ok(EvalMetrics {
        ndcg: ndcg / n,
        precision: precision / n,
        recall: recall / n,
        hit_rate: hit / n,
        users,
        skipped_users: skipped,
    })
}
