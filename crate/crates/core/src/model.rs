//! Domain types shared by every other module: interaction events and logs,
//! per-user and per-item aggregate state, and the per-step activity schedule.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::gini;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct UserId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct ItemId(pub u32);

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Where a purchase came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Organic,
    Recommended,
    Historical,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Organic => "organic",
            Source::Recommended => "recommended",
            Source::Historical => "historical",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "organic" => Some(Source::Organic),
            "recommended" => Some(Source::Recommended),
            "historical" => Some(Source::Historical),
            _ => None,
        }
    }
}

/// One purchase event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub step: u32,
    pub quantity: u32,
    pub source: Source,
}

impl Interaction {
    pub fn new(user: UserId, item: ItemId, step: u32, source: Source) -> Self {
        Interaction {
            user,
            item,
            step,
            quantity: 1,
            source,
        }
    }
}

/// External labels for dense identifiers, indexed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    pub users: Vec<String>,
    pub items: Vec<String>,
}

/// Ordered collection of interactions together with the user set and item set.
///
/// Events are kept sorted by step (stable with respect to insertion order). The
/// item set may be wider than the set of purchased items: simulated logs carry
/// the full simulation catalog so that zero-strength items stay visible.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InteractionLog {
    events: Vec<Interaction>,
    users: BTreeSet<UserId>,
    items: BTreeSet<ItemId>,
    labels: Option<Arc<Labels>>,
}

impl InteractionLog {
    pub fn new(mut events: Vec<Interaction>) -> Self {
        events.sort_by_key(|e| e.step);
        let users = events.iter().map(|e| e.user).collect();
        let items = events.iter().map(|e| e.item).collect();
        InteractionLog {
            events,
            users,
            items,
            labels: None,
        }
    }

    pub fn with_labels(mut self, labels: Option<Arc<Labels>>) -> Self {
        self.labels = labels;
        self
    }

    /// Widens the item set. Items already present are left alone.
    pub fn with_items(mut self, items: impl IntoIterator<Item = ItemId>) -> Self {
        self.items.extend(items);
        self
    }

    pub fn with_users(mut self, users: impl IntoIterator<Item = UserId>) -> Self {
        self.users.extend(users);
        self
    }

    pub fn events(&self) -> &[Interaction] {
        &self.events
    }

    pub fn users(&self) -> &BTreeSet<UserId> {
        &self.users
    }

    pub fn items(&self) -> &BTreeSet<ItemId> {
        &self.items
    }

    pub fn labels(&self) -> Option<&Arc<Labels>> {
        self.labels.as_ref()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    /// Sum of quantities, i.e. the number of unit purchases.
    pub fn total_quantity(&self) -> u64 {
        self.events.iter().map(|e| u64::from(e.quantity)).sum()
    }

    /// Inclusive `[t_min, t_max]`, or `None` for an empty log.
    pub fn step_range(&self) -> Option<(u32, u32)> {
        Some((self.events.first()?.step, self.events.last()?.step))
    }

    /// Appends an event. Panics if it would break step ordering.
    pub fn push(&mut self, event: Interaction) {
        if let Some(last) = self.events.last() {
            assert!(event.step >= last.step, "events must be appended in step order");
        }
        self.users.insert(event.user);
        self.items.insert(event.item);
        self.events.push(event);
    }

    /// Keeps events matching `keep`. User and item sets are recomputed from the
    /// remaining events; labels are shared.
    pub fn filter(&self, mut keep: impl FnMut(&Interaction) -> bool) -> Self {
        let events: Vec<_> = self.events.iter().copied().filter(|e| keep(e)).collect();
        InteractionLog::new(events).with_labels(self.labels.clone())
    }

    /// Events with `start <= step < end`.
    pub fn steps(&self, start: u32, end: u32) -> Self {
        let lo = self.events.partition_point(|e| e.step < start);
        let hi = self.events.partition_point(|e| e.step < end);
        InteractionLog::new(self.events[lo..hi].to_vec()).with_labels(self.labels.clone())
    }

    pub fn user_label(&self, user: UserId) -> String {
        match &self.labels {
            Some(l) if (user.0 as usize) < l.users.len() => l.users[user.0 as usize].clone(),
            _ => user.0.to_string(),
        }
    }

    pub fn item_label(&self, item: ItemId) -> String {
        match &self.labels {
            Some(l) if (item.0 as usize) < l.items.len() => l.items[item.0 as usize].clone(),
            _ => item.0.to_string(),
        }
    }

    /// Distinct items per user.
    pub fn item_sets(&self) -> BTreeMap<UserId, BTreeSet<ItemId>> {
        let mut sets: BTreeMap<UserId, BTreeSet<ItemId>> =
            self.users.iter().map(|&u| (u, BTreeSet::new())).collect();
        for e in &self.events {
            sets.entry(e.user).or_default().insert(e.item);
        }
        sets
    }

    /// Total purchase volume per item over the item set (zeros included).
    pub fn strengths(&self) -> BTreeMap<ItemId, u64> {
        let mut s: BTreeMap<ItemId, u64> = self.items.iter().map(|&i| (i, 0)).collect();
        for e in &self.events {
            *s.entry(e.item).or_default() += u64::from(e.quantity);
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Segment {
    Light,
    Medium,
    Heavy,
}

impl Segment {
    pub const ALL: [Segment; 3] = [Segment::Light, Segment::Medium, Segment::Heavy];

    pub fn as_str(self) -> &'static str {
        match self {
            Segment::Light => "light",
            Segment::Medium => "medium",
            Segment::Heavy => "heavy",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserState {
    pub user: UserId,
    /// Unit purchases per item (`w_{u,i}`); only items with at least one purchase.
    pub purchase_weights: BTreeMap<ItemId, u32>,
    pub interactions: u64,
    /// Mean interactions per elapsed epoch (`c_u`).
    pub mean_interactions: f64,
    /// Gini over `purchase_weights` (`G_u`).
    pub gini: f64,
    pub segment: Segment,
}

impl UserState {
    pub fn empty(user: UserId) -> Self {
        UserState {
            user,
            purchase_weights: BTreeMap::new(),
            interactions: 0,
            mean_interactions: 0.0,
            gini: 0.0,
            segment: Segment::Medium,
        }
    }

    fn refresh_gini(&mut self) {
        let w: Vec<f64> = self.purchase_weights.values().map(|&w| f64::from(w)).collect();
        self.gini = if w.is_empty() { 0.0 } else { gini(&w).unwrap_or(0.0) };
    }

    pub fn weight(&self, item: ItemId) -> u32 {
        self.purchase_weights.get(&item).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ItemState {
    pub item: ItemId,
    /// Total purchase volume (`s_i`).
    pub strength: u64,
    /// Number of distinct purchasers (`p_i`).
    pub popularity: u64,
}

/// Aggregated per-user and per-item state derived from a log.
///
/// Built in one pass by [`rebuild_states`] and then kept current by
/// [`States::record`] as the simulation appends events.
#[derive(Debug, Clone, PartialEq)]
pub struct States {
    pub users: BTreeMap<UserId, UserState>,
    pub items: BTreeMap<ItemId, ItemState>,
    epoch_length: u32,
    origin_step: u32,
    through_step: u32,
}

impl States {
    pub fn epoch_length(&self) -> u32 {
        self.epoch_length
    }

    /// Number of epochs covered by `[origin_step, through_step]`, rounded up.
    pub fn elapsed_epochs(&self) -> u32 {
        let span = self.through_step - self.origin_step + 1;
        span.div_ceil(self.epoch_length)
    }

    pub fn user(&self, user: UserId) -> Option<&UserState> {
        self.users.get(&user)
    }

    pub fn item(&self, item: ItemId) -> ItemState {
        self.items.get(&item).copied().unwrap_or(ItemState {
            item,
            strength: 0,
            popularity: 0,
        })
    }

    /// Applies one event. `c_u` for the purchaser is refreshed against the
    /// current elapsed-epoch count; call [`States::advance_to`] when the clock moves.
    pub fn record(&mut self, event: &Interaction) {
        self.advance_to(event.step);
        let q = event.quantity;
        let user = self
            .users
            .entry(event.user)
            .or_insert_with(|| UserState::empty(event.user));
        let w = user.purchase_weights.entry(event.item).or_insert(0);
        let first_purchase = *w == 0;
        *w += q;
        user.interactions += u64::from(q);
        user.refresh_gini();

        let item = self.items.entry(event.item).or_insert(ItemState {
            item: event.item,
            strength: 0,
            popularity: 0,
        });
        item.strength += u64::from(q);
        if first_purchase {
            item.popularity += 1;
        }

        let elapsed = f64::from(self.elapsed_epochs());
        let user = self.users.get_mut(&event.user).expect("inserted above");
        user.mean_interactions = user.interactions as f64 / elapsed;
    }

    /// Moves the clock to `step` (inclusive) and refreshes every `c_u`.
    pub fn advance_to(&mut self, step: u32) {
        if step <= self.through_step {
            return;
        }
        let before = self.elapsed_epochs();
        self.through_step = step;
        let elapsed = self.elapsed_epochs();
        if elapsed != before {
            for u in self.users.values_mut() {
                u.mean_interactions = u.interactions as f64 / f64::from(elapsed);
            }
        }
    }

    pub fn apply_segments(&mut self, segments: &BTreeMap<UserId, Segment>) {
        for (u, state) in self.users.iter_mut() {
            state.segment = segments.get(u).copied().unwrap_or(Segment::Medium);
        }
    }

    /// Ensures a user has an entry, even without purchases.
    pub fn ensure_user(&mut self, user: UserId) -> &UserState {
        self.users
            .entry(user)
            .or_insert_with(|| UserState::empty(user))
    }
}

/// Aggregates a log into per-user and per-item state.
///
/// Quantities are expanded into unit purchases. `c_u` divides by the number of
/// elapsed epochs, `ceil((t_max - t_min + 1) / epoch_length)`.
pub fn rebuild_states(log: &InteractionLog, epoch_length: u32) -> Result<States> {
    let (t_min, t_max) = log.step_range().ok_or(Error::EmptyLog)?;
    if epoch_length == 0 {
        return Err(Error::Config("epoch length must be positive".into()));
    }
    let mut users: BTreeMap<UserId, UserState> = log
        .users()
        .iter()
        .map(|&u| (u, UserState::empty(u)))
        .collect();
    let mut items: BTreeMap<ItemId, ItemState> = log
        .items()
        .iter()
        .map(|&i| {
            (
                i,
                ItemState {
                    item: i,
                    strength: 0,
                    popularity: 0,
                },
            )
        })
        .collect();

    for e in log.events() {
        let user = users.get_mut(&e.user).expect("user set covers events");
        let w = user.purchase_weights.entry(e.item).or_insert(0);
        let first = *w == 0;
        *w += e.quantity;
        user.interactions += u64::from(e.quantity);
        let item = items.get_mut(&e.item).expect("item set covers events");
        item.strength += u64::from(e.quantity);
        if first {
            item.popularity += 1;
        }
    }

    let span = t_max - t_min + 1;
    let elapsed = f64::from(span.div_ceil(epoch_length));
    for u in users.values_mut() {
        u.mean_interactions = u.interactions as f64 / elapsed;
        u.refresh_gini();
    }

    Ok(States {
        users,
        items,
        epoch_length,
        origin_step: t_min,
        through_step: t_max,
    })
}

/// Users awakened at each step with their basket sizes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivitySchedule {
    steps: BTreeMap<u32, Vec<(UserId, u32)>>,
}

impl ActivitySchedule {
    pub fn new() -> Self {
        Self::default()
    }

    /// Sets the awakened users for `step`. Rejects zero baskets and repeated users.
    pub fn insert_step(&mut self, step: u32, mut entries: Vec<(UserId, u32)>) -> Result<()> {
        entries.sort_by_key(|&(u, _)| u);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Data(format!("user repeated within step {step}")));
        }
        if entries.iter().any(|&(_, b)| b == 0) {
            return Err(Error::Data(format!("zero basket size at step {step}")));
        }
        self.steps.insert(step, entries);
        Ok(())
    }

    pub fn get(&self, step: u32) -> Option<&[(UserId, u32)]> {
        self.steps.get(&step).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &[(UserId, u32)])> {
        self.steps.iter().map(|(&s, v)| (s, v.as_slice()))
    }

    pub fn total_basket_mass(&self) -> u64 {
        self.steps
            .values()
            .flat_map(|v| v.iter().map(|&(_, b)| u64::from(b)))
            .sum()
    }

    /// Basket mass over `start <= step < end`.
    pub fn basket_mass(&self, start: u32, end: u32) -> u64 {
        self.steps
            .range(start..end)
            .flat_map(|(_, v)| v.iter().map(|&(_, b)| u64::from(b)))
            .sum()
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }
}
