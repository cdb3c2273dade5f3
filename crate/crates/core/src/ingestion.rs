//! Loading interaction CSVs, continuity filtering, temporal splits, the
//! empirical activity schedule and the synthetic dataset generator.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::{LogNormal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ActivitySchedule, Interaction, InteractionLog, ItemId, Labels, Source, UserId};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub user: String,
    pub item: String,
    pub timestamp: String,
    pub quantity: Option<String>,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        ColumnMapping {
            user: "user".into(),
            item: "item".into(),
            timestamp: "timestamp".into(),
            quantity: None,
        }
    }
}

/// How timestamps map onto integer steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Granularity {
    /// One step per calendar day (UTC).
    #[default]
    Day,
    /// One step per timestamp unit: the column already holds integer steps.
    Step,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    #[default]
    Strict,
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub columns: ColumnMapping,
    #[serde(default)]
    pub granularity: Granularity,
    #[serde(default)]
    pub mode: ParseMode,
}

#[derive(Debug, Clone)]
pub struct Loaded {
    pub log: InteractionLog,
    /// Rows dropped in lenient mode.
    pub skipped_rows: usize,
}

/// Parses ISO-8601 dates/datetimes or integer epoch seconds into seconds since
/// the Unix epoch.
fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if let Ok(secs) = s.parse::<i64>() {
        return Some(secs);
    }
    if let Ok(d) = NaiveDate::parse_from_str(s, "%Y-%m-%d") {
        return Some(d.and_hms_opt(0, 0, 0)?.and_utc().timestamp());
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    None
}

/// Interns raw labels into dense ids. When every label is a `u32` the label
/// is the id and no label table is kept; otherwise ids follow lexicographic
/// label order.
struct Interner {
    ids: HashMap<String, u32>,
    table: Option<Vec<String>>,
}

impl Interner {
    fn build<'a>(labels: impl Iterator<Item = &'a str>) -> Interner {
        let distinct: BTreeSet<&str> = labels.collect();
        if distinct.iter().all(|l| l.parse::<u32>().is_ok()) {
            let ids = distinct.iter().map(|l| (l.to_string(), l.parse().unwrap())).collect();
            return Interner { ids, table: None };
        }
        let table: Vec<String> = distinct.iter().map(|s| s.to_string()).collect();
        let ids = table.iter().enumerate().map(|(k, l)| (l.clone(), k as u32)).collect();
        Interner {
            ids,
            table: Some(table),
        }
    }

    fn id(&self, label: &str) -> u32 {
        self.ids[label]
    }

    fn table_or_ids(&self) -> Vec<String> {
        match &self.table {
            Some(t) => t.clone(),
            None => {
                let max = self.ids.values().max().copied().map_or(0, |m| m as usize + 1);
                (0..max).map(|k| k.to_string()).collect()
            }
        }
    }
}

struct RawRow {
    user: String,
    item: String,
    time: i64,
    quantity: u32,
    source: Source,
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| Error::Config(format!("missing column '{name}'")))
}

fn intern_rows(rows: Vec<RawRow>, granularity: Granularity) -> InteractionLog {
    let users = Interner::build(rows.iter().map(|r| r.user.as_str()));
    let items = Interner::build(rows.iter().map(|r| r.item.as_str()));
    let to_unit = |t: i64| match granularity {
        Granularity::Day => t.div_euclid(86_400),
        Granularity::Step => t,
    };
    let origin = rows.iter().map(|r| to_unit(r.time)).min().unwrap_or(0);
    let events = rows
        .iter()
        .map(|r| Interaction {
            user: UserId(users.id(&r.user)),
            item: ItemId(items.id(&r.item)),
            step: (to_unit(r.time) - origin) as u32,
            quantity: r.quantity,
            source: r.source,
        })
        .collect();
    let labels = (users.table.is_some() || items.table.is_some()).then(|| {
        Arc::new(Labels {
            users: users.table_or_ids(),
            items: items.table_or_ids(),
        })
    });
    InteractionLog::new(events).with_labels(labels)
}

/// Loads a raw interaction CSV. Steps count from the earliest timestamp and
/// every event is tagged historical.
pub fn load_interactions(spec: &DatasetSpec) -> Result<Loaded> {
    let file = File::open(&spec.path).map_err(|e| Error::io(&spec.path, e))?;
    load_interactions_from(file, spec)
}

pub fn load_interactions_from(reader: impl Read, spec: &DatasetSpec) -> Result<Loaded> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cu = column(&headers, &spec.columns.user)?;
    let ci = column(&headers, &spec.columns.item)?;
    let ct = column(&headers, &spec.columns.timestamp)?;
    let cq = spec
        .columns
        .quantity
        .as_deref()
        .map(|q| column(&headers, q))
        .transpose()?;

    let mut rows = Vec::new();
    let mut skipped = 0usize;
    for (idx, rec) in rdr.records().enumerate() {
        // 1-based data row index, header excluded
        let row = idx + 1;
        let parsed = rec.map_err(|e| e.to_string()).and_then(|rec| {
            let field = |c: usize| rec.get(c).ok_or_else(|| format!("missing field {c}"));
            let user = field(cu)?.to_string();
            let item = field(ci)?.to_string();
            if user.is_empty() || item.is_empty() {
                return Err("empty user or item".to_string());
            }
            let ts = field(ct)?;
            let time = parse_timestamp(ts).ok_or_else(|| format!("malformed timestamp '{ts}'"))?;
            let quantity = match cq {
                Some(c) => {
                    let q = field(c)?;
                    q.parse::<u32>()
                        .ok()
                        .filter(|&q| q >= 1)
                        .ok_or_else(|| format!("invalid quantity '{q}'"))?
                }
                None => 1,
            };
            Ok(RawRow {
                user,
                item,
                time,
                quantity,
                source: Source::Historical,
            })
        });
        match parsed {
            Ok(r) => rows.push(r),
            Err(reason) => match spec.mode {
                ParseMode::Strict => return Err(Error::Row { row, reason }),
                ParseMode::Lenient => skipped += 1,
            },
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} unparseable rows");
    }
    Ok(Loaded {
        log: intern_rows(rows, spec.granularity),
        skipped_rows: skipped,
    })
}

/// Writes the normalized `user,item,step,quantity,source` form.
pub fn write_log_csv(log: &InteractionLog, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["user", "item", "step", "quantity", "source"])?;
    for e in log.events() {
        w.write_record([
            log.user_label(e.user),
            log.item_label(e.item),
            e.step.to_string(),
            e.quantity.to_string(),
            e.source.as_str().to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<log writer>", e))?;
    Ok(())
}

pub fn write_log_file(log: &InteractionLog, path: &Path) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_log_csv(log, std::io::BufWriter::new(f))
}

/// Reads the normalized form written by [`write_log_csv`]. Steps are kept as
/// written.
pub fn read_log_csv(reader: impl Read) -> Result<InteractionLog> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = ["user", "item", "step", "quantity", "source"]
        .map(|c| column(&headers, c));
    let [cu, ci, cs, cq, csrc] = cols;
    let (cu, ci, cs, cq, csrc) = (cu?, ci?, cs?, cq?, csrc?);
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let row = idx + 1;
        let rec = rec?;
        let bad = |reason: &str| Error::Row {
            row,
            reason: reason.to_string(),
        };
        let step: i64 = rec[cs].parse().map_err(|_| bad("invalid step"))?;
        let quantity: u32 = rec[cq]
            .parse()
            .ok()
            .filter(|&q| q >= 1)
            .ok_or_else(|| bad("invalid quantity"))?;
        let source = Source::parse(&rec[csrc]).ok_or_else(|| bad("invalid source"))?;
        rows.push(RawRow {
            user: rec[cu].to_string(),
            item: rec[ci].to_string(),
            time: step,
            quantity,
            source,
        });
    }
    // keep absolute steps: intern relative to zero, not to the earliest row
    let anchor = rows.iter().map(|r| r.time).min().unwrap_or(0);
    let mut log = intern_rows(rows, Granularity::Step);
    if anchor != 0 {
        let events = log
            .events()
            .iter()
            .map(|e| Interaction {
                step: e.step + anchor as u32,
                ..*e
            })
            .collect();
        log = InteractionLog::new(events).with_labels(log.labels().cloned());
    }
    Ok(log)
}

pub fn read_log_file(path: &Path) -> Result<InteractionLog> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_log_csv(std::io::BufReader::new(f))
}

/// Keeps users with at least one interaction in every `epoch_length` window
/// tiling `[t_min, t_max]` (the last window may be partial). Windows are
/// aligned to the epoch grid, so the first one starts at the epoch holding
/// `t_min`. Items left without interactions drop out of the item set.
pub fn filter_active_users(log: &InteractionLog, epoch_length: u32) -> InteractionLog {
    let Some((t_min, t_max)) = log.step_range() else {
        return log.clone();
    };
    let anchor = t_min / epoch_length * epoch_length;
    let windows = ((t_max - anchor) / epoch_length + 1) as usize;
    let mut seen: BTreeMap<UserId, Vec<bool>> = BTreeMap::new();
    for e in log.events() {
        let w = ((e.step - anchor) / epoch_length) as usize;
        seen.entry(e.user).or_insert_with(|| vec![false; windows])[w] = true;
    }
    let keep: BTreeSet<UserId> = seen
        .into_iter()
        .filter(|(_, cov)| cov.iter().all(|&c| c))
        .map(|(u, _)| u)
        .collect();
    log.filter(|e| keep.contains(&e.user))
}

/// Epoch-aligned window split into consecutive train, validation and test
/// blocks. Epoch `e` covers steps `[e * L, (e + 1) * L)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitWindow {
    pub start_epoch: u32,
    pub train_epochs: u32,
    pub validation_epochs: u32,
    pub test_epochs: u32,
}

impl SplitWindow {
    /// The 4/1/1 layout starting at `start_epoch`.
    pub fn starting_at(start_epoch: u32) -> Self {
        SplitWindow {
            start_epoch,
            train_epochs: 4,
            validation_epochs: 1,
            test_epochs: 1,
        }
    }

    pub fn total_epochs(&self) -> u32 {
        self.train_epochs + self.validation_epochs + self.test_epochs
    }
}

#[derive(Debug, Clone)]
pub struct Split {
    pub train: InteractionLog,
    pub validation: InteractionLog,
    pub test: InteractionLog,
}

pub fn temporal_split(log: &InteractionLog, window: &SplitWindow, epoch_length: u32) -> Result<Split> {
    if window.train_epochs == 0 || window.validation_epochs == 0 || window.test_epochs == 0 {
        return Err(Error::Config(format!(
            "split window too short: {}/{}/{} epochs",
            window.train_epochs, window.validation_epochs, window.test_epochs
        )));
    }
    if epoch_length == 0 {
        return Err(Error::Config("epoch length must be positive".into()));
    }
    let s0 = window.start_epoch * epoch_length;
    let s1 = s0 + window.train_epochs * epoch_length;
    let s2 = s1 + window.validation_epochs * epoch_length;
    let s3 = s2 + window.test_epochs * epoch_length;
    Ok(Split {
        train: log.steps(s0, s1),
        validation: log.steps(s1, s2),
        test: log.steps(s2, s3),
    })
}

/// Awakened users and basket sizes (quantity-expanded) for each step in
/// `start..end`. Every step of the horizon gets an entry, possibly empty.
pub fn empirical_schedule(log: &InteractionLog, start: u32, end: u32) -> Result<ActivitySchedule> {
    let (t_min, t_max) = log.step_range().ok_or(Error::EmptyLog)?;
    if start >= end || start < t_min || end - 1 > t_max {
        return Err(Error::Data(format!(
            "horizon [{start}, {end}) outside log range [{t_min}, {t_max}]"
        )));
    }
    let mut per_step: BTreeMap<u32, BTreeMap<UserId, u32>> =
        (start..end).map(|s| (s, BTreeMap::new())).collect();
    for e in log.events() {
        if let Some(m) = per_step.get_mut(&e.step) {
            *m.entry(e.user).or_default() += e.quantity;
        }
    }
    let mut schedule = ActivitySchedule::new();
    for (s, m) in per_step {
        schedule.insert_step(s, m.into_iter().collect())?;
    }
    Ok(schedule)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_users: u32,
    pub n_items: u32,
    pub n_epochs: u32,
    /// Exponent of the power-law item prior; 0 gives a uniform prior.
    pub popularity_exponent: f64,
    pub seed: u64,
    pub steps_per_epoch: u32,
    /// Mean purchases per user-epoch beyond the guaranteed one.
    pub mean_extra_purchases: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_users: 500,
            n_items: 2000,
            n_epochs: 18,
            popularity_exponent: 1.0,
            seed: 0,
            steps_per_epoch: 30,
            mean_extra_purchases: 3.0,
        }
    }
}

impl SyntheticSpec {
    pub fn new(n_users: u32, n_items: u32, n_epochs: u32, popularity_exponent: f64, seed: u64) -> Self {
        SyntheticSpec {
            n_users,
            n_items,
            n_epochs,
            popularity_exponent,
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 || self.n_items == 0 || self.n_epochs == 0 || self.steps_per_epoch == 0 {
            return Err(Error::Config("synthetic counts must be positive".into()));
        }
        if !(self.popularity_exponent >= 0.0 && self.popularity_exponent.is_finite()) {
            return Err(Error::Config("popularity_exponent must be non-negative".into()));
        }
        if !(self.mean_extra_purchases >= 0.0 && self.mean_extra_purchases.is_finite()) {
            return Err(Error::Config("mean_extra_purchases must be non-negative".into()));
        }
        Ok(())
    }
}

/// Desk-scale stand-in for a real purchase log.
///
/// Each user buys at least once per epoch, plus a Poisson number of extra
/// purchases whose rate is a user-level log-normal activity draw. Items are
/// drawn from a prior proportional to `(rank + 1)^-exponent` with item id as
/// rank; steps are uniform within the epoch.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<InteractionLog> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[tag::SYNTH]);
    let prior: Vec<f64> = (0..spec.n_items)
        .map(|r| (f64::from(r) + 1.0).powf(-spec.popularity_exponent))
        .collect();
    let items = WeightedIndex::new(&prior).map_err(|e| Error::Runtime(e.to_string()))?;
    let activity_dist = LogNormal::new(0.0, 0.75).map_err(|e| Error::Runtime(e.to_string()))?;
    // mean of LogNormal(0, s) is exp(s^2 / 2)
    let scale = spec.mean_extra_purchases / (0.75f64 * 0.75 / 2.0).exp();
    let activity: Vec<f64> = (0..spec.n_users)
        .map(|_| activity_dist.sample(&mut rng) * scale)
        .collect();

    let mut events = Vec::new();
    for epoch in 0..spec.n_epochs {
        let base = epoch * spec.steps_per_epoch;
        for (u, &rate) in activity.iter().enumerate() {
            let extra = if rate > 0.0 {
                Poisson::new(rate)
                    .map_err(|e| Error::Runtime(e.to_string()))?
                    .sample(&mut rng) as u32
            } else {
                0
            };
            for _ in 0..=extra {
                let step = base + rng.random_range(0..spec.steps_per_epoch);
                let item = items.sample(&mut rng) as u32;
                events.push(Interaction::new(UserId(u as u32), ItemId(item), step, Source::Historical));
            }
        }
    }
    events.sort_by_key(|e| (e.step, e.user, e.item));
    Ok(InteractionLog::new(events))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> DatasetSpec {
        DatasetSpec {
            path: PathBuf::new(),
            columns: ColumnMapping {
                quantity: Some("quantity".into()),
                ..Default::default()
            },
            granularity: Granularity::Day,
            mode: ParseMode::Strict,
        }
    }

    #[test]
    fn dates_map_to_day_steps() {
        let csv = "user,item,timestamp,quantity\na,x,2020-01-01,1\nb,y,2020-01-01,3\na,y,2020-01-03,1\n";
        let loaded = load_interactions_from(csv.as_bytes(), &spec()).unwrap();
        let steps: Vec<u32> = loaded.log.events().iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![0, 0, 2]);
        assert_eq!(loaded.log.events()[1].quantity, 3);
        assert!(loaded.log.events().iter().all(|e| e.source == Source::Historical));
    }

    #[test]
    fn epoch_seconds_and_datetimes() {
        let csv = "user,item,timestamp\n1,1,1577836800\n1,2,2020-01-02T12:30:00Z\n2,1,2020-01-05 08:00:00\n";
        let mut s = spec();
        s.columns.quantity = None;
        let loaded = load_interactions_from(csv.as_bytes(), &s).unwrap();
        let steps: Vec<u32> = loaded.log.events().iter().map(|e| e.step).collect();
        assert_eq!(steps, vec![0, 1, 4]);
        // numeric labels become ids directly
        assert!(loaded.log.labels().is_none());
        assert!(loaded.log.users().contains(&UserId(2)));
    }

    #[test]
    fn malformed_date_in_strict_mode_names_the_row() {
        let csv = "user,item,timestamp,quantity\na,x,2020-01-01,1\na,x,2020-13-45,1\n";
        let err = load_interactions_from(csv.as_bytes(), &spec()).unwrap_err();
        match err {
            Error::Row { row, .. } => assert_eq!(row, 2),
            other => panic!("unexpected {other}"),
        }
        let mut lenient = spec();
        lenient.mode = ParseMode::Lenient;
        let loaded = load_interactions_from(csv.as_bytes(), &lenient).unwrap();
        assert_eq!(loaded.skipped_rows, 1);
        assert_eq!(loaded.log.len(), 1);
    }

    #[test]
    fn missing_column_is_config_error() {
        let csv = "customer,item,timestamp\na,x,2020-01-01\n";
        let err = load_interactions_from(csv.as_bytes(), &spec()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn string_labels_sort_lexicographically() {
        let csv = "user,item,timestamp\nbob,pear,2020-01-01\nalice,apple,2020-01-01\n";
        let mut s = spec();
        s.columns.quantity = None;
        let log = load_interactions_from(csv.as_bytes(), &s).unwrap().log;
        assert_eq!(log.user_label(UserId(0)), "alice");
        assert_eq!(log.item_label(ItemId(1)), "pear");
    }

    #[test]
    fn normalized_csv_round_trip() {
        let log = generate_synthetic(&SyntheticSpec::new(10, 30, 3, 1.0, 1)).unwrap();
        let mut buf = Vec::new();
        write_log_csv(&log, &mut buf).unwrap();
        let back = read_log_csv(buf.as_slice()).unwrap();
        assert_eq!(back.events(), log.events());
    }

    fn ev(u: u32, t: u32) -> Interaction {
        Interaction::new(UserId(u), ItemId(u), t, Source::Historical)
    }

    #[test]
    fn filter_keeps_continuous_users() {
        // 24 epochs of 30 steps; user 0 every epoch, user 1 misses epoch 6
        let mut e = vec![];
        for m in 0..24 {
            e.push(ev(0, m * 30 + 5));
            if m != 6 {
                e.push(ev(1, m * 30 + 5));
            }
        }
        let out = filter_active_users(&InteractionLog::new(e), 30);
        assert_eq!(out.users().iter().copied().collect::<Vec<_>>(), vec![UserId(0)]);
        assert_eq!(out.items().len(), 1);
    }

    #[test]
    fn split_layout() {
        let e: Vec<_> = (0..180).map(|t| ev(t % 3, t)).collect();
        let log = InteractionLog::new(e);
        let sp = temporal_split(&log, &SplitWindow::starting_at(0), 30).unwrap();
        assert_eq!(sp.train.step_range(), Some((0, 119)));
        assert_eq!(sp.validation.step_range(), Some((120, 149)));
        assert_eq!(sp.test.step_range(), Some((150, 179)));
        assert_eq!(sp.train.len() + sp.validation.len() + sp.test.len(), log.len());
    }

    #[test]
    fn split_with_empty_validation_epoch() {
        let e: Vec<_> = (0..180).filter(|t| !(120..150).contains(t)).map(|t| ev(0, t)).collect();
        let sp = temporal_split(&InteractionLog::new(e), &SplitWindow::starting_at(0), 30).unwrap();
        assert!(sp.validation.is_empty());
        assert!(!sp.train.is_empty() && !sp.test.is_empty());
    }

    #[test]
    fn split_rejects_short_window() {
        let log = InteractionLog::new(vec![ev(0, 0)]);
        let mut w = SplitWindow::starting_at(0);
        w.test_epochs = 0;
        assert!(temporal_split(&log, &w, 30).is_err());
    }

    #[test]
    fn schedule_counts_baskets() {
        let mut e = vec![ev(1, 0), ev(1, 0), ev(2, 0), ev(1, 2)];
        e[1].quantity = 1;
        let log = InteractionLog::new(e);
        let s = empirical_schedule(&log, 0, 3).unwrap();
        assert_eq!(s.get(0).unwrap(), &[(UserId(1), 2), (UserId(2), 1)]);
        assert!(s.get(1).unwrap().is_empty());
        assert!(empirical_schedule(&log, 0, 4).is_err());
    }

    #[test]
    fn synthetic_is_deterministic_and_continuous() {
        let spec = SyntheticSpec::new(50, 200, 6, 1.0, 7);
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        let (mut ba, mut bb) = (Vec::new(), Vec::new());
        write_log_csv(&a, &mut ba).unwrap();
        write_log_csv(&b, &mut bb).unwrap();
        assert_eq!(ba, bb);
        let filtered = filter_active_users(&a, 30);
        assert_eq!(filtered.events(), a.events());
        assert_eq!(filtered.users().len(), 50);
    }
}
