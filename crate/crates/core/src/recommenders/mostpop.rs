use std::collections::{BTreeSet, HashMap};

use crate::model::{InteractionLog, ItemId, UserId};

use super::{rank, RankedList, ScoringModel};

/// Global popularity: every user gets the items with the largest total
/// purchase volume in the training log.
#[derive(Debug, Clone)]
pub struct MostPopModel {
    catalog: Vec<ItemId>,
    strength: HashMap<ItemId, f64>,
    /// Full catalog ranking, computed once.
    order: RankedList,
}

impl MostPopModel {
    pub fn train(log: &InteractionLog, catalog: &[ItemId]) -> Self {
        let mut catalog = catalog.to_vec();
        catalog.sort();
        catalog.dedup();
        let s = log.strengths();
        let strength: HashMap<ItemId, f64> = catalog
            .iter()
            .map(|i| (*i, s.get(i).copied().unwrap_or(0) as f64))
            .collect();
        let scores: Vec<f64> = catalog.iter().map(|i| strength[i]).collect();
        let order = rank(UserId(0), &catalog, &scores, catalog.len(), &BTreeSet::new());
        MostPopModel {
            catalog,
            strength,
            order,
        }
    }
}

impl ScoringModel for MostPopModel {
    fn name(&self) -> &str {
        "mostpop"
    }

    fn catalog(&self) -> &[ItemId] {
        &self.catalog
    }

    fn knows_user(&self, _user: UserId) -> bool {
        true
    }

    fn score(&self, _user: UserId, item: ItemId) -> f64 {
        self.strength.get(&item).copied().unwrap_or(0.0)
    }

    fn top_k_excluding(&self, user: UserId, k: usize, exclude: &BTreeSet<ItemId>) -> RankedList {
        let (items, scores) = self
            .order
            .items
            .iter()
            .zip(&self.order.scores)
            .filter(|(i, _)| !exclude.contains(i))
            .take(k)
            .map(|(&i, &s)| (i, s))
            .unzip();
        RankedList { user, items, scores }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Interaction, Source};

    fn log(strengths: &[(u32, usize)]) -> InteractionLog {
        let mut e = vec![];
        for &(i, n) in strengths {
            for k in 0..n {
                e.push(Interaction::new(UserId(k as u32), ItemId(i), 0, Source::Historical));
            }
        }
        InteractionLog::new(e)
    }

    #[test]
    fn head_is_user_independent() {
        let l = log(&[(0, 5), (1, 3), (2, 1)]);
        let cat: Vec<_> = l.items().iter().copied().collect();
        let m = MostPopModel::train(&l, &cat);
        for u in 0..4 {
            assert_eq!(m.top_k(UserId(u), 2).items, vec![ItemId(0), ItemId(1)]);
        }
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let l = log(&[(0, 5), (2, 3), (1, 3)]);
        let cat: Vec<_> = l.items().iter().copied().collect();
        let m = MostPopModel::train(&l, &cat);
        assert_eq!(m.top_k(UserId(0), 3).items, vec![ItemId(0), ItemId(1), ItemId(2)]);
    }

    #[test]
    fn override_matches_generic_ranking() {
        let l = log(&[(0, 2), (1, 7), (2, 7), (3, 1), (4, 0)]);
        let cat: Vec<_> = (0..6).map(ItemId).collect();
        let m = MostPopModel::train(&l, &cat);
        let ex: BTreeSet<_> = [ItemId(2)].into();
        let generic = rank(UserId(0), m.catalog(), &m.scores(UserId(0)), 4, &ex);
        assert_eq!(m.top_k_excluding(UserId(0), 4, &ex), generic);
    }
}
