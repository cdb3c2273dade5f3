use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::model::{InteractionLog, ItemId, UserId};

use super::ScoringModel;

/// Item-based collaborative filtering over binary purchase incidence.
///
/// `sim(i, j) = |U_i ∩ U_j| / sqrt(|U_i| |U_j|)`; each item keeps its
/// `neighborhood_size` most similar other items, and a user's score for `i`
/// sums `sim(i, j)` over history items `j` among those neighbours.
#[derive(Debug, Clone)]
pub struct ItemKnnModel {
    catalog: Vec<ItemId>,
    index: HashMap<ItemId, usize>,
    /// Distinct purchasers per catalog position.
    purchasers: Vec<u32>,
    /// Co-purchase counts for pairs with at least one shared user, keyed by
    /// catalog positions `(a, b)` with `a < b`.
    shared: HashMap<(usize, usize), u32>,
    /// `reverse[j]` holds `(i, sim)` for every `i` whose neighbourhood contains `j`.
    reverse: Vec<Vec<(usize, f64)>>,
    history: BTreeMap<UserId, BTreeSet<usize>>,
}

impl ItemKnnModel {
    pub fn train(log: &InteractionLog, catalog: &[ItemId], neighborhood_size: usize) -> Self {
        let mut catalog = catalog.to_vec();
        catalog.sort();
        catalog.dedup();
        let index: HashMap<ItemId, usize> = catalog.iter().enumerate().map(|(k, &i)| (i, k)).collect();

        let mut history: BTreeMap<UserId, BTreeSet<usize>> = BTreeMap::new();
        for e in log.events() {
            if let Some(&k) = index.get(&e.item) {
                history.entry(e.user).or_default().insert(k);
            }
        }

        let mut purchasers = vec![0u32; catalog.len()];
        let mut shared: HashMap<(usize, usize), u32> = HashMap::new();
        for items in history.values() {
            let items: Vec<usize> = items.iter().copied().collect();
            for (a, &i) in items.iter().enumerate() {
                purchasers[i] += 1;
                for &j in &items[a + 1..] {
                    *shared.entry((i, j)).or_default() += 1;
                }
            }
        }

        let mut neighbours: Vec<Vec<(usize, f64)>> = vec![Vec::new(); catalog.len()];
        for (&(i, j), &c) in &shared {
            let s = f64::from(c) / (f64::from(purchasers[i]) * f64::from(purchasers[j])).sqrt();
            neighbours[i].push((j, s));
            neighbours[j].push((i, s));
        }
        let mut reverse: Vec<Vec<(usize, f64)>> = vec![Vec::new(); catalog.len()];
        for (i, nb) in neighbours.iter_mut().enumerate() {
            nb.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            nb.truncate(neighborhood_size);
            for &(j, s) in nb.iter() {
                reverse[j].push((i, s));
            }
        }
        for r in &mut reverse {
            r.sort_by_key(|&(i, _)| i);
        }

        ItemKnnModel {
            catalog,
            index,
            purchasers,
            shared,
            reverse,
            history,
        }
    }

    /// Untruncated cosine similarity between two catalog items.
    pub fn similarity(&self, a: ItemId, b: ItemId) -> f64 {
        let (Some(&i), Some(&j)) = (self.index.get(&a), self.index.get(&b)) else {
            return 0.0;
        };
        if self.purchasers[i] == 0 || self.purchasers[j] == 0 {
            return 0.0;
        }
        if i == j {
            return 1.0;
        }
        let key = (i.min(j), i.max(j));
        let c = self.shared.get(&key).copied().unwrap_or(0);
        f64::from(c) / (f64::from(self.purchasers[i]) * f64::from(self.purchasers[j])).sqrt()
    }
}

impl ScoringModel for ItemKnnModel {
    fn name(&self) -> &str {
        "itemknn"
    }

    fn catalog(&self) -> &[ItemId] {
        &self.catalog
    }

    fn knows_user(&self, user: UserId) -> bool {
        self.history.contains_key(&user)
    }

    fn score(&self, user: UserId, item: ItemId) -> f64 {
        let Some(&i) = self.index.get(&item) else {
            return 0.0;
        };
        let Some(h) = self.history.get(&user) else {
            return 0.0;
        };
        h.iter()
            .flat_map(|&j| self.reverse[j].iter())
            .filter(|&&(t, _)| t == i)
            .map(|&(_, s)| s)
            .sum()
    }

    fn scores(&self, user: UserId) -> Vec<f64> {
        let mut out = vec![0.0; self.catalog.len()];
        if let Some(h) = self.history.get(&user) {
            for &j in h {
                for &(i, s) in &self.reverse[j] {
                    out[i] += s;
                }
            }
        }
        out
    }
}
