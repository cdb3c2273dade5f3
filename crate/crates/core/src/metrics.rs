//! Systemic-effect measures: individual and collective Gini, mean pairwise
//! Jaccard similarity, frequency-rank curves, engagement segments and
//! co-purchase networks.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{InteractionLog, ItemId, Segment, UserId};
use crate::rng::{self, tag};

/// Gini coefficient of a non-negative weight vector,
/// `sum_i sum_j |w_i - w_j| / (2 d^2 mean(w))`.
///
/// Uses the sorted form `sum_r (2r - d - 1) w_(r) / (d * sum w)` on weights
/// normalised by their total, so a single non-zero entry yields exactly
/// `(d - 1) / d`.
pub fn gini(weights: &[f64]) -> Result<f64> {
    if weights.is_empty() {
        return Err(Error::UndefinedGini("empty vector"));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::UndefinedGini("weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::UndefinedGini("zero mean"));
    }
    let mut sorted: Vec<f64> = weights.iter().map(|w| w / total).collect();
    sorted.sort_by(f64::total_cmp);
    if sorted[0] == sorted[sorted.len() - 1] {
        return Ok(0.0);
    }
    let d = sorted.len() as f64;
    let num: f64 = sorted
        .iter()
        .enumerate()
        .map(|(r, w)| (2.0 * (r as f64 + 1.0) - d - 1.0) * w)
        .sum();
    Ok((num / d).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndividualGini {
    pub mean: f64,
    pub per_user: BTreeMap<UserId, f64>,
}

/// Per-user Gini over purchase weights and their unweighted mean. Users
/// without purchases are left out.
pub fn individual_gini(log: &InteractionLog) -> Result<IndividualGini> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut weights: BTreeMap<UserId, BTreeMap<ItemId, f64>> = BTreeMap::new();
    for e in log.events() {
        *weights.entry(e.user).or_default().entry(e.item).or_default() += f64::from(e.quantity);
    }
    let mut per_user = BTreeMap::new();
    for (u, w) in weights {
        let v: Vec<f64> = w.into_values().collect();
        per_user.insert(u, gini(&v)?);
    }
    let mean = per_user.values().sum::<f64>() / per_user.len() as f64;
    Ok(IndividualGini { mean, per_user })
}

/// Gini over item strengths for every item in the log's item set.
pub fn collective_gini(log: &InteractionLog) -> Result<f64> {
    collective_gini_over(log, log.items())
}

/// Gini over item strengths for `universe`; items without purchases count as zeros.
pub fn collective_gini_over(log: &InteractionLog, universe: &BTreeSet<ItemId>) -> Result<f64> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let s = log.strengths();
    let v: Vec<f64> = universe
        .iter()
        .map(|i| s.get(i).copied().unwrap_or(0) as f64)
        .collect();
    gini(&v)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct JaccardEstimate {
    pub mean: f64,
    /// Standard error of the mean, present only for sampled estimates.
    pub std_error: Option<f64>,
    pub pairs: u64,
    /// Pairs whose union was empty (scored 0).
    pub empty_pairs: u64,
}

struct BitSets {
    words: usize,
    bits: Vec<u64>,
    counts: Vec<u32>,
}

impl BitSets {
    fn build(log: &InteractionLog) -> (Vec<UserId>, BitSets) {
        let item_index: HashMap<ItemId, usize> =
            log.items().iter().enumerate().map(|(k, &i)| (i, k)).collect();
        let users: Vec<UserId> = log.users().iter().copied().collect();
        let user_index: HashMap<UserId, usize> =
            users.iter().enumerate().map(|(k, &u)| (u, k)).collect();
        let words = log.items().len().div_ceil(64).max(1);
        let mut bits = vec![0u64; words * users.len()];
        for e in log.events() {
            let u = user_index[&e.user];
            let i = item_index[&e.item];
            bits[u * words + i / 64] |= 1 << (i % 64);
        }
        let counts = (0..users.len())
            .map(|u| bits[u * words..(u + 1) * words].iter().map(|w| w.count_ones()).sum())
            .collect();
        (
            users,
            BitSets {
                words,
                bits,
                counts,
            },
        )
    }

    /// `None` when both sets are empty.
    fn jaccard(&self, a: usize, b: usize) -> Option<f64> {
        let wa = &self.bits[a * self.words..(a + 1) * self.words];
        let wb = &self.bits[b * self.words..(b + 1) * self.words];
        let inter: u32 = wa.iter().zip(wb).map(|(x, y)| (x & y).count_ones()).sum();
        let union = self.counts[a] + self.counts[b] - inter;
        (union > 0).then(|| f64::from(inter) / f64::from(union))
    }
}

/// Jaccard index of two item sets; 0 when both are empty.
pub fn jaccard(a: &BTreeSet<ItemId>, b: &BTreeSet<ItemId>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Mean Jaccard similarity over unordered distinct user pairs.
///
/// With `pair_sample = None` every pair is visited. Otherwise that many pairs
/// are drawn uniformly (with replacement) from a stream seeded by `seed` and a
/// standard error is reported.
pub fn mean_jaccard(
    log: &InteractionLog,
    pair_sample: Option<usize>,
    seed: u64,
) -> Result<JaccardEstimate> {
    let n = log.users().len();
    if n < 2 {
        return Err(Error::Data("mean Jaccard needs at least two users".into()));
    }
    let (_, sets) = BitSets::build(log);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut pairs = 0u64;
    let mut empty_pairs = 0u64;
    let mut visit = |a: usize, b: usize| {
        let j = sets.jaccard(a, b).unwrap_or_else(|| {
            empty_pairs += 1;
            0.0
        });
        sum += j;
        sum_sq += j * j;
        pairs += 1;
    };
    match pair_sample {
        None => {
            for a in 0..n {
                for b in a + 1..n {
                    visit(a, b);
                }
            }
        }
        Some(m) => {
            if m == 0 {
                return Err(Error::Config("pair sample must be positive".into()));
            }
            let mut rng = rng::stream(seed, &[tag::METRICS, n as u64]);
            for _ in 0..m {
                let a = rng.random_range(0..n);
                let mut b = rng.random_range(0..n - 1);
                if b >= a {
                    b += 1;
                }
                visit(a, b);
            }
        }
    }
    if empty_pairs > 0 {
        warn!("{empty_pairs} user pairs with empty unions scored as 0");
    }
    let mean = sum / pairs as f64;
    let std_error = pair_sample.map(|_| {
        let var = (sum_sq / pairs as f64 - mean * mean).max(0.0);
        let var = var * pairs as f64 / (pairs.max(2) - 1) as f64;
        (var / pairs as f64).sqrt()
    });
    Ok(JaccardEstimate {
        mean,
        std_error,
        pairs,
        empty_pairs,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Strength,
    Popularity,
}

impl CurveKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CurveKind::Strength => "strength",
            CurveKind::Popularity => "popularity",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankPoint {
    pub rank: usize,
    pub item: ItemId,
    pub value: u64,
}

/// Items of the log's item set sorted by descending value, ranks from 1,
/// ties by ascending item id.
pub fn frequency_rank(log: &InteractionLog, by: CurveKind) -> Vec<RankPoint> {
    let values: BTreeMap<ItemId, u64> = match by {
        CurveKind::Strength => log.strengths(),
        CurveKind::Popularity => {
            let mut buyers: BTreeMap<ItemId, BTreeSet<UserId>> =
                log.items().iter().map(|&i| (i, BTreeSet::new())).collect();
            for e in log.events() {
                buyers.entry(e.item).or_default().insert(e.user);
            }
            buyers.into_iter().map(|(i, b)| (i, b.len() as u64)).collect()
        }
    };
    let mut v: Vec<(ItemId, u64)> = values.into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter()
        .enumerate()
        .map(|(r, (item, value))| RankPoint {
            rank: r + 1,
            item,
            value,
        })
        .collect()
}

/// Share of the curve's total volume held by the first `k` ranks.
pub fn head_share(curve: &[RankPoint], k: usize) -> f64 {
    let total: u64 = curve.iter().map(|p| p.value).sum();
    if total == 0 {
        return 0.0;
    }
    let head: u64 = curve.iter().take(k).map(|p| p.value).sum();
    head as f64 / total as f64
}

/// Engagement segments by purchase volume: top decile heavy, bottom decile
/// light, the rest medium. Ties are broken by ascending user id.
pub fn segment_users(train_log: &InteractionLog) -> Result<BTreeMap<UserId, Segment>> {
    if train_log.is_empty() {
        return Err(Error::EmptyLog);
    }
    let mut volume: BTreeMap<UserId, u64> = train_log.users().iter().map(|&u| (u, 0)).collect();
    for e in train_log.events() {
        *volume.entry(e.user).or_default() += u64::from(e.quantity);
    }
    let n = volume.len();
    if n < 10 {
        warn!("only {n} users; every user assigned to the medium segment");
        return Ok(volume.into_keys().map(|u| (u, Segment::Medium)).collect());
    }
    let mut ranked: Vec<(UserId, u64)> = volume.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let decile = n / 10;
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(pos, (u, _))| {
            let seg = if pos < decile {
                Segment::Heavy
            } else if pos >= n - decile {
                Segment::Light
            } else {
                Segment::Medium
            };
            (u, seg)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentStat {
    pub users: usize,
    /// `None` for an empty segment.
    pub mean_gini: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SegmentGini {
    pub light: SegmentStat,
    pub medium: SegmentStat,
    pub heavy: SegmentStat,
}

impl SegmentGini {
    pub fn get(&self, s: Segment) -> SegmentStat {
        match s {
            Segment::Light => self.light,
            Segment::Medium => self.medium,
            Segment::Heavy => self.heavy,
        }
    }

    /// Segment-size-weighted recombination of the means.
    pub fn recombined_mean(&self) -> f64 {
        let mut num = 0.0;
        let mut n = 0usize;
        for s in Segment::ALL {
            let st = self.get(s);
            if let Some(m) = st.mean_gini {
                num += m * st.users as f64;
                n += st.users;
            }
        }
        num / n as f64
    }
}

/// Mean individual Gini per segment. Users missing from `segments` count as medium.
pub fn segment_gini(
    individual: &IndividualGini,
    segments: &BTreeMap<UserId, Segment>,
) -> SegmentGini {
    let mut acc: BTreeMap<Segment, (usize, f64)> = BTreeMap::new();
    for (u, g) in &individual.per_user {
        let s = segments.get(u).copied().unwrap_or(Segment::Medium);
        let e = acc.entry(s).or_default();
        e.0 += 1;
        e.1 += g;
    }
    let stat = |s| {
        let (n, sum) = acc.get(&s).copied().unwrap_or_default();
        SegmentStat {
            users: n,
            mean_gini: (n > 0).then(|| sum / n as f64),
        }
    };
    SegmentGini {
        light: stat(Segment::Light),
        medium: stat(Segment::Medium),
        heavy: stat(Segment::Heavy),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemSampling {
    /// Items drawn from each strength quartile.
    pub per_quartile: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CopurchaseNetwork {
    /// `(item, strength)`, ascending by item.
    pub nodes: Vec<(ItemId, u64)>,
    /// `(item_i, item_j, shared purchasers)` with `item_i < item_j`.
    pub edges: Vec<(ItemId, ItemId, u64)>,
}

/// Items linked by shared purchasers. An edge exists when at least
/// `min_shared` users bought both items.
pub fn copurchase_network(
    log: &InteractionLog,
    item_sample: Option<ItemSampling>,
    min_shared: u64,
) -> Result<CopurchaseNetwork> {
    if log.is_empty() {
        return Err(Error::EmptyLog);
    }
    if min_shared == 0 {
        return Err(Error::Config("min_shared must be at least 1".into()));
    }
    let nodes: BTreeSet<ItemId> = match item_sample {
        None => log.items().clone(),
        Some(sampling) => stratified_sample(&frequency_rank(log, CurveKind::Strength), sampling),
    };
    copurchase_network_over(log, &nodes, min_shared)
}

/// [`copurchase_network`] over a fixed node set, e.g. one sample shared by
/// the logs being compared. Nodes absent from `log` get strength 0.
pub fn copurchase_network_over(
    log: &InteractionLog,
    nodes: &BTreeSet<ItemId>,
    min_shared: u64,
) -> Result<CopurchaseNetwork> {
    if min_shared == 0 {
        return Err(Error::Config("min_shared must be at least 1".into()));
    }
    let strengths = log.strengths();
    let mut shared: BTreeMap<(ItemId, ItemId), u64> = BTreeMap::new();
    for set in log.item_sets().values() {
        let mine: Vec<ItemId> = set.iter().copied().filter(|i| nodes.contains(i)).collect();
        for (a, &i) in mine.iter().enumerate() {
            for &j in &mine[a + 1..] {
                *shared.entry((i, j)).or_default() += 1;
            }
        }
    }
    Ok(CopurchaseNetwork {
        nodes: nodes
            .iter()
            .map(|&i| (i, strengths.get(&i).copied().unwrap_or(0)))
            .collect(),
        edges: shared
            .into_iter()
            .filter(|&(_, w)| w >= min_shared)
            .map(|((i, j), w)| (i, j, w))
            .collect(),
    })
}

/// Up to `per_quartile` items from each quarter of a frequency-rank curve.
pub fn stratified_sample(curve: &[RankPoint], sampling: ItemSampling) -> BTreeSet<ItemId> {
    let mut rng = rng::stream(sampling.seed, &[tag::METRICS, curve.len() as u64]);
    let n = curve.len();
    let mut out = BTreeSet::new();
    for q in 0..4 {
        let lo = q * n / 4;
        let hi = (q + 1) * n / 4;
        let mut stratum: Vec<ItemId> = curve[lo..hi].iter().map(|p| p.item).collect();
        let take = sampling.per_quartile.min(stratum.len());
        // partial Fisher-Yates
        for k in 0..take {
            let r = rng.random_range(k..stratum.len());
            stratum.swap(k, r);
        }
        out.extend(stratum.into_iter().take(take));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    /// Above this many users the Jaccard mean is estimated from sampled pairs.
    pub jaccard_exact_max_users: usize,
    pub jaccard_pair_sample: usize,
    pub seed: u64,
    /// Rank cut-off for the head-share summary.
    pub head_k: usize,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            jaccard_exact_max_users: 5000,
            jaccard_pair_sample: 200_000,
            seed: 0,
            head_k: 20,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub epoch: u32,
    pub mean_individual_gini: f64,
    pub collective_gini: f64,
    pub mean_jaccard: JaccardEstimate,
    pub segments: SegmentGini,
    pub frequency_rank_strength: Vec<RankPoint>,
    pub frequency_rank_popularity: Vec<RankPoint>,
    pub head_share_strength: f64,
    pub head_share_popularity: f64,
}

/// Computes every headline measure on one log. `universe` fixes the item set
/// of the collective Gini and the frequency-rank curves.
pub fn measure(
    log: &InteractionLog,
    segments: &BTreeMap<UserId, Segment>,
    universe: &BTreeSet<ItemId>,
    epoch: u32,
    opts: &MetricsOptions,
) -> Result<MetricsReport> {
    let widened = log.clone().with_items(universe.iter().copied());
    let individual = individual_gini(&widened)?;
    let sample = (widened.users().len() > opts.jaccard_exact_max_users)
        .then_some(opts.jaccard_pair_sample);
    let strength = frequency_rank(&widened, CurveKind::Strength);
    let popularity = frequency_rank(&widened, CurveKind::Popularity);
    Ok(MetricsReport {
        epoch,
        mean_individual_gini: individual.mean,
        collective_gini: collective_gini_over(&widened, universe)?,
        mean_jaccard: mean_jaccard(&widened, sample, opts.seed)?,
        segments: segment_gini(&individual, segments),
        head_share_strength: head_share(&strength, opts.head_k),
        head_share_popularity: head_share(&popularity, opts.head_k),
        frequency_rank_strength: strength,
        frequency_rank_popularity: popularity,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDeltas {
    pub mean_individual_gini: f64,
    pub collective_gini: f64,
    pub mean_jaccard: f64,
    pub light_gini: Option<f64>,
    pub medium_gini: Option<f64>,
    pub heavy_gini: Option<f64>,
    pub head_share_strength: f64,
    pub head_share_popularity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: MetricsReport,
    pub simulated: MetricsReport,
    pub deltas: MetricDeltas,
}

/// Baseline vs simulated measures over the union of both item sets, with
/// signed deltas (simulated minus baseline).
pub fn report(
    baseline: &InteractionLog,
    simulated: &InteractionLog,
    segments: &BTreeMap<UserId, Segment>,
    opts: &MetricsOptions,
) -> Result<Comparison> {
    let universe: BTreeSet<ItemId> = baseline.items().union(simulated.items()).copied().collect();
    let b = measure(baseline, segments, &universe, 0, opts)?;
    let s = measure(simulated, segments, &universe, 0, opts)?;
    let seg_delta = |seg: Segment| {
        Some(s.segments.get(seg).mean_gini? - b.segments.get(seg).mean_gini?)
    };
    let deltas = MetricDeltas {
        mean_individual_gini: s.mean_individual_gini - b.mean_individual_gini,
        collective_gini: s.collective_gini - b.collective_gini,
        mean_jaccard: s.mean_jaccard.mean - b.mean_jaccard.mean,
        light_gini: seg_delta(Segment::Light),
        medium_gini: seg_delta(Segment::Medium),
        heavy_gini: seg_delta(Segment::Heavy),
        head_share_strength: s.head_share_strength - b.head_share_strength,
        head_share_popularity: s.head_share_popularity - b.head_share_popularity,
    };
    Ok(Comparison {
        baseline: b,
        simulated: s,
        deltas,
    })
}
