//! Autonomous user choice: candidate-set construction, utility estimation and
//! softmax selection.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::model::{ItemId, ItemState, States, UserId, UserState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Gpop,
    Ipop,
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    pub user: UserId,
    pub step: u32,
    pub items: Vec<ItemId>,
    pub provenance: Vec<Provenance>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn count(&self, p: Provenance) -> usize {
        self.provenance.iter().filter(|&&q| q == p).count()
    }
}

/// Pool rankings frozen at an epoch boundary: the catalog by global strength
/// and each user's own items by purchase count, both with ascending-id ties.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidatePools {
    catalog: Vec<ItemId>,
    gpop: Vec<ItemId>,
    ipop: BTreeMap<UserId, Vec<ItemId>>,
}

impl CandidatePools {
    pub fn from_states(states: &States, catalog: &[ItemId]) -> Self {
        let mut catalog = catalog.to_vec();
        catalog.sort();
        catalog.dedup();
        let mut gpop = catalog.clone();
        gpop.sort_by(|a, b| states.item(*b).strength.cmp(&states.item(*a).strength).then(a.cmp(b)));
        let in_catalog: HashSet<ItemId> = catalog.iter().copied().collect();
        let ipop = states
            .users
            .iter()
            .map(|(&u, s)| (u, ipop_ranking(s, &in_catalog)))
            .collect();
        CandidatePools { catalog, gpop, ipop }
    }

    pub fn catalog(&self) -> &[ItemId] {
        &self.catalog
    }

    pub fn gpop(&self) -> &[ItemId] {
        &self.gpop
    }

    pub fn ipop(&self, user: UserId) -> &[ItemId] {
        self.ipop.get(&user).map_or(&[], Vec::as_slice)
    }
}

fn ipop_ranking(state: &UserState, catalog: &HashSet<ItemId>) -> Vec<ItemId> {
    let mut v: Vec<(ItemId, u32)> = state
        .purchase_weights
        .iter()
        .filter(|(i, _)| catalog.contains(i))
        .map(|(&i, &w)| (i, w))
        .collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(i, _)| i).collect()
}

/// Slot counts `(gpop, ipop, unknown)` for a candidate set of `size`:
/// the first two pools get `ceil(fraction * size)`, the remainder goes to unknown.
pub fn slot_counts(size: usize, config: &SimulationConfig) -> (usize, usize, usize) {
    let slots = |f: f64| ((f * size as f64) - 1e-9).ceil().max(0.0) as usize;
    let g = slots(config.candidate_mix.gpop).min(size);
    let i = slots(config.candidate_mix.ipop).min(size - g);
    (g, i, size - g - i)
}

/// Builds `C_{u,t}`.
///
/// GPop takes the head of the strength ranking; IPop walks the user's own
/// ranking, skipping items GPop already holds. Missing IPop slots are filled
/// with further GPop items. Unknown slots are sampled uniformly without
/// replacement from catalog items the user has never bought (per the current
/// `user_state`); a shortfall there also falls back to GPop.
pub fn build_candidate_set<R: Rng + ?Sized>(
    user_state: &UserState,
    pools: &CandidatePools,
    config: &SimulationConfig,
    step: u32,
    rng: &mut R,
) -> Result<CandidateSet> {
    if pools.catalog.is_empty() {
        return Err(Error::Data("empty catalog".into()));
    }
    let size = config.candidate_set_size.min(pools.catalog.len());
    let (n_gpop, n_ipop, n_unknown) = slot_counts(config.candidate_set_size, config);
    let mut set = CandidateSet {
        user: user_state.user,
        step,
        items: Vec::with_capacity(size),
        provenance: Vec::with_capacity(size),
    };
    let mut chosen: HashSet<ItemId> = HashSet::with_capacity(size);
    let mut gpop_iter = pools.gpop.iter().copied();
    let mut take_gpop = |n: usize, set: &mut CandidateSet, chosen: &mut HashSet<ItemId>| {
        let mut taken = 0;
        while taken < n {
            let Some(i) = gpop_iter.next() else { break };
            if chosen.insert(i) {
                set.items.push(i);
                set.provenance.push(Provenance::Gpop);
                taken += 1;
            }
        }
    };

    take_gpop(n_gpop, &mut set, &mut chosen);

    let mut ipop_taken = 0;
    for &i in pools.ipop(user_state.user) {
        if ipop_taken == n_ipop {
            break;
        }
        if chosen.insert(i) {
            set.items.push(i);
            set.provenance.push(Provenance::Ipop);
            ipop_taken += 1;
        }
    }
    take_gpop(n_ipop - ipop_taken, &mut set, &mut chosen);

    let unknown = sample_unknown(user_state, &pools.catalog, &chosen, n_unknown, rng);
    let shortfall = n_unknown - unknown.len();
    for i in unknown {
        chosen.insert(i);
        set.items.push(i);
        set.provenance.push(Provenance::Unknown);
    }
    take_gpop(shortfall, &mut set, &mut chosen);
    Ok(set)
}

fn sample_unknown<R: Rng + ?Sized>(
    user_state: &UserState,
    catalog: &[ItemId],
    chosen: &HashSet<ItemId>,
    n: usize,
    rng: &mut R,
) -> Vec<ItemId> {
    if n == 0 {
        return Vec::new();
    }
    let eligible = |i: &ItemId| user_state.weight(*i) == 0 && !chosen.contains(i);
    let seen_in_catalog = user_state
        .purchase_weights
        .keys()
        .filter(|i| catalog.binary_search(i).is_ok())
        .count();
    let upper = catalog.len().saturating_sub(seen_in_catalog);
    if upper >= 4 * (n + chosen.len()) {
        // rejection sampling over a large pool
        let mut out = Vec::with_capacity(n);
        let mut picked: BTreeSet<ItemId> = BTreeSet::new();
        while out.len() < n {
            let i = catalog[rng.random_range(0..catalog.len())];
            if eligible(&i) && picked.insert(i) {
                out.push(i);
            }
        }
        out
    } else {
        let mut pool: Vec<ItemId> = catalog.iter().copied().filter(eligible).collect();
        let take = n.min(pool.len());
        for k in 0..take {
            let r = rng.random_range(k..pool.len());
            pool.swap(k, r);
        }
        pool.truncate(take);
        pool
    }
}

/// `V = c_u + G_u ln(1 + s_i) + lambda / (1 + s_i) + noise`.
pub fn utility(user_state: &UserState, item_state: &ItemState, lambda_rarity: f64, noise: f64) -> f64 {
    let s = item_state.strength as f64;
    user_state.mean_interactions + user_state.gini * s.ln_1p() + lambda_rarity / (1.0 + s) + noise
}

/// Softmax over `utilities / tau` with max subtraction. Entries are floored at
/// the smallest positive double so no candidate is impossible.
pub fn choice_probabilities(utilities: &[f64], tau: f64) -> Result<Vec<f64>> {
    if utilities.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    if !(tau > 0.0) {
        return Err(Error::Config("tau must be positive".into()));
    }
    let max = utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = utilities.iter().map(|v| ((v - max) / tau).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| (e / total).max(f64::MIN_POSITIVE)).collect())
}

/// Index drawn from a discrete distribution with the given (unnormalised) weights.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let target = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for (k, w) in weights.iter().enumerate() {
        acc += w;
        if target < acc {
            return k;
        }
    }
    weights.len() - 1
}

/// Utilities for every candidate with fresh standard-normal noise per item.
pub fn draw_utilities<R: Rng + ?Sized>(
    user_state: &UserState,
    candidates: &CandidateSet,
    states: &States,
    lambda_rarity: f64,
    rng: &mut R,
) -> Vec<f64> {
    candidates
        .items
        .iter()
        .map(|&i| {
            let noise: f64 = rng.sample(StandardNormal);
            utility(user_state, &states.item(i), lambda_rarity, noise)
        })
        .collect()
}

/// One organic pick from `candidates`.
pub fn sample_organic<R: Rng + ?Sized>(
    user_state: &UserState,
    candidates: &CandidateSet,
    states: &States,
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<ItemId> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidateSet);
    }
    let v = draw_utilities(user_state, candidates, states, config.lambda_rarity, rng);
    let p = choice_probabilities(&v, config.tau)?;
    Ok(candidates.items[sample_index(&p, rng)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{rebuild_states, Interaction, InteractionLog, Source};
    use crate::rng;
    use proptest::prelude::*;

    fn user(c: f64, g: f64) -> UserState {
        UserState {
            user: UserId(0),
            purchase_weights: BTreeMap::new(),
            interactions: 0,
            mean_interactions: c,
            gini: g,
            segment: crate::model::Segment::Medium,
        }
    }

    fn item(s: u64) -> ItemState {
        ItemState {
            item: ItemId(0),
            strength: s,
            popularity: s.min(1),
        }
    }

    #[test]
    fn utility_zero_case() {
        assert_eq!(utility(&user(0.0, 0.0), &item(0), 0.0, 0.0), 0.0);
    }

    #[test]
    fn utility_matches_hand_evaluation() {
        // s = e - 1 makes ln(1 + s) = 1; needs a real-valued strength, so inline the formula
        let s = std::f64::consts::E - 1.0;
        let u = user(2.0, 0.5);
        let v = u.mean_interactions + u.gini * s.ln_1p() + 1.0 / (1.0 + s);
        assert!((v - 2.8679).abs() < 1e-4);
        // and the integer path agrees with the same algebra
        let direct = utility(&u, &item(3), 1.0, 0.0);
        assert!((direct - (2.0 + 0.5 * 4f64.ln() + 0.25)).abs() < 1e-15);
    }

    #[test]
    fn utility_monotone_in_strength() {
        let u = user(1.0, 0.3);
        let mut prev = f64::NEG_INFINITY;
        for s in 0..200 {
            let v = utility(&u, &item(s), 0.0, 0.0);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn probabilities_cases() {
        let p = choice_probabilities(&[2.0; 5], 1.0).unwrap();
        assert!(p.iter().all(|x| (x - 0.2).abs() < 1e-15));
        let p = choice_probabilities(&[1.0, 0.0], 1.0).unwrap();
        assert!((p[0] - 0.7311).abs() < 1e-4 && (p[1] - 0.2689).abs() < 1e-4);
        let p = choice_probabilities(&[10.0, 0.0], 0.01).unwrap();
        assert!(p[0] > 1.0 - 1e-12);
        assert!(p[1] > 0.0);
        let p = choice_probabilities(&[10.0, 0.0], 1e6).unwrap();
        assert!(p.iter().all(|x| (x - 0.5).abs() < 1e-5));
        assert!(matches!(choice_probabilities(&[], 1.0), Err(Error::EmptyCandidateSet)));
    }

    proptest! {
        #[test]
        fn softmax_sums_to_one_and_is_shift_invariant(
            v in prop::collection::vec(-50.0f64..50.0, 1..50),
            shift in -100.0f64..100.0,
            tau in 0.05f64..20.0,
        ) {
            let p = choice_probabilities(&v, tau).unwrap();
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(p.iter().all(|&x| x > 0.0));
            let shifted: Vec<f64> = v.iter().map(|x| x + shift).collect();
            let q = choice_probabilities(&shifted, tau).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }

    fn catalog_states(strengths: &[u64], history: &[(u32, u32)]) -> (States, Vec<ItemId>) {
        // user 0 buys per `history`; strengths supplied by user 1
        let mut e = vec![];
        for (i, &s) in strengths.iter().enumerate() {
            for _ in 0..s {
                e.push(Interaction::new(UserId(1), ItemId(i as u32), 0, Source::Historical));
            }
        }
        for &(i, n) in history {
            for _ in 0..n {
                e.push(Interaction::new(UserId(0), ItemId(i), 0, Source::Historical));
            }
        }
        let cat: Vec<ItemId> = (0..strengths.len() as u32).map(ItemId).collect();
        let log = InteractionLog::new(e).with_items(cat.iter().copied());
        (rebuild_states(&log, 30).unwrap(), cat)
    }

    fn cfg(size: usize) -> SimulationConfig {
        SimulationConfig {
            candidate_set_size: size,
            ..Default::default()
        }
    }

    #[test]
    fn disjoint_pools_follow_the_mix() {
        let strengths: Vec<u64> = (0..50).map(|i| 100 - i).collect();
        let (states, cat) = catalog_states(&strengths, &[(30, 5), (31, 4), (32, 3), (33, 2), (34, 1)]);
        let pools = CandidatePools::from_states(&states, &cat);
        let mut r = rng::stream(1, &[]);
        let set = build_candidate_set(&states.users[&UserId(0)], &pools, &cfg(10), 0, &mut r).unwrap();
        assert_eq!(set.count(Provenance::Gpop), 4);
        assert_eq!(set.count(Provenance::Ipop), 4);
        assert_eq!(set.count(Provenance::Unknown), 2);
        assert_eq!(&set.items[..4], &[0, 1, 2, 3].map(ItemId));
        assert_eq!(&set.items[4..8], &[30, 31, 32, 33].map(ItemId));
    }

    #[test]
    fn empty_history_backfills_from_gpop() {
        let strengths: Vec<u64> = (0..50).map(|i| 100 - i).collect();
        let (mut states, cat) = catalog_states(&strengths, &[]);
        states.ensure_user(UserId(0));
        let pools = CandidatePools::from_states(&states, &cat);
        let mut r = rng::stream(1, &[]);
        let set = build_candidate_set(&states.users[&UserId(0)], &pools, &cfg(10), 0, &mut r).unwrap();
        assert_eq!(set.count(Provenance::Ipop), 0);
        assert_eq!(set.count(Provenance::Gpop), 8);
        assert_eq!(set.count(Provenance::Unknown), 2);
    }

    #[test]
    fn overlap_keeps_gpop_tag_and_advances_ipop() {
        let strengths: Vec<u64> = (0..50).map(|i| 100 - i).collect();
        // user's top items 1 and 2 are also in the GPop head
        let (states, cat) = catalog_states(&strengths, &[(1, 9), (2, 8), (40, 3), (41, 2), (42, 1), (43, 1)]);
        let pools = CandidatePools::from_states(&states, &cat);
        let mut r = rng::stream(1, &[]);
        let set = build_candidate_set(&states.users[&UserId(0)], &pools, &cfg(10), 0, &mut r).unwrap();
        assert_eq!(set.len(), 10);
        assert_eq!(&set.items[4..8], &[40, 41, 42, 43].map(ItemId));
        let distinct: HashSet<_> = set.items.iter().collect();
        assert_eq!(distinct.len(), 10);
    }

    #[test]
    fn tiny_catalog_degrades_gracefully() {
        let (states, cat) = catalog_states(&[5, 4, 3], &[(0, 1)]);
        let pools = CandidatePools::from_states(&states, &cat);
        let mut r = rng::stream(1, &[]);
        let set = build_candidate_set(&states.users[&UserId(0)], &pools, &cfg(100), 0, &mut r).unwrap();
        assert_eq!(set.len(), 3);
        let empty = CandidatePools::default();
        assert!(build_candidate_set(&states.users[&UserId(0)], &empty, &cfg(10), 0, &mut r).is_err());
    }

    #[test]
    fn single_candidate_is_certain() {
        let (states, _) = catalog_states(&[1], &[]);
        let set = CandidateSet {
            user: UserId(0),
            step: 0,
            items: vec![ItemId(0)],
            provenance: vec![Provenance::Gpop],
        };
        let mut r = rng::stream(9, &[]);
        let u = user(0.0, 0.0);
        for _ in 0..100 {
            assert_eq!(sample_organic(&u, &set, &states, &cfg(1), &mut r).unwrap(), ItemId(0));
        }
    }

    #[test]
    fn organic_sampling_is_reproducible() {
        let (states, cat) = catalog_states(&[5, 4, 3, 2, 1], &[]);
        let set = CandidateSet {
            user: UserId(0),
            step: 0,
            items: cat.clone(),
            provenance: vec![Provenance::Gpop; 5],
        };
        let u = user(0.0, 0.2);
        let r = rng::stream(4, &[1, 2]);
        let a = sample_organic(&u, &set, &states, &cfg(5), &mut r.clone()).unwrap();
        let b = sample_organic(&u, &set, &states, &cfg(5), &mut r.clone()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn monte_carlo_matches_softmax() {
        let v = [1.0, 0.5, -0.3];
        let p = choice_probabilities(&v, 0.7).unwrap();
        let mut r = rng::stream(2024, &[]);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[sample_index(&p, &mut r)] += 1;
        }
        for k in 0..3 {
            let se = (p[k] * (1.0 - p[k]) / n as f64).sqrt();
            let freq = counts[k] as f64 / n as f64;
            assert!((freq - p[k]).abs() < 3.0 * se, "item {k}: {freq} vs {}", p[k]);
        }
    }
}
