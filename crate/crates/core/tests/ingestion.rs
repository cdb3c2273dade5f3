use std::collections::{BTreeMap, BTreeSet};

use feedloop::ingestion::{
    empirical_schedule, filter_active_users, generate_synthetic, temporal_split, SplitWindow, SyntheticSpec,
};
use feedloop::{Interaction, InteractionLog, ItemId, Source, UserId};
use proptest::prelude::*;

fn ev(u: u32, i: u32, step: u32) -> Interaction {
    Interaction::new(UserId(u), ItemId(i), step, Source::Historical)
}

/// 100 users over 6 epochs of 30 steps; users 0..40 are active in every
/// epoch, the rest skip one epoch each.
fn coverage_log() -> InteractionLog {
    let mut events = Vec::new();
    for u in 0..100u32 {
        let skipped = (u >= 40).then_some(u % 6);
        for epoch in 0..6 {
            if Some(epoch) == skipped {
                continue;
            }
            for j in 0..1 + u % 3 {
                events.push(ev(u, (u + j) % 17, epoch * 30 + (u * 7 + j) % 30));
            }
        }
    }
    InteractionLog::new(events)
}

#[test]
fn filter_matches_brute_force_coverage() {
    let log = coverage_log();
    let kept = filter_active_users(&log, 30);
    let mut months: BTreeMap<UserId, BTreeSet<u32>> = BTreeMap::new();
    for e in log.events() {
        months.entry(e.user).or_default().insert(e.step / 30);
    }
    let expected: BTreeSet<UserId> = months.iter().filter(|(_, m)| m.len() == 6).map(|(u, _)| *u).collect();
    assert_eq!(expected.len(), 40);
    assert_eq!(kept.users(), &expected);
    assert!(kept.events().iter().all(|e| expected.contains(&e.user)));
}

#[test]
fn split_matches_event_by_event_assignment() {
    let events: Vec<Interaction> = (0..180).map(|s| ev(s % 5, s % 11, s)).collect();
    let log = InteractionLog::new(events);
    let split = temporal_split(&log, &SplitWindow::starting_at(0), 30).unwrap();
    let (mut train, mut val, mut test) = (vec![], vec![], vec![]);
    for e in log.events() {
        match e.step {
            0..=119 => train.push(*e),
            120..=149 => val.push(*e),
            150..=179 => test.push(*e),
            _ => unreachable!(),
        }
    }
    assert_eq!(split.train.events(), &train[..]);
    assert_eq!(split.validation.events(), &val[..]);
    assert_eq!(split.test.events(), &test[..]);
}

#[test]
fn schedule_conserves_the_full_synthetic_log() {
    let log = generate_synthetic(&SyntheticSpec::new(60, 120, 8, 1.0, 4)).unwrap();
    let (lo, hi) = log.step_range().unwrap();
    let schedule = empirical_schedule(&log, lo, hi + 1).unwrap();
    assert_eq!(schedule.total_basket_mass(), log.total_quantity());
    let mut by_step: BTreeMap<(u32, UserId), u32> = BTreeMap::new();
    for e in log.events() {
        *by_step.entry((e.step, e.user)).or_default() += e.quantity;
    }
    for (step, entries) in schedule.iter() {
        for &(u, b) in entries {
            assert_eq!(by_step[&(step, u)], b);
        }
    }
}

#[test]
fn zero_exponent_is_uniform_by_chi_square() {
    let n_items = 50;
    let log = generate_synthetic(&SyntheticSpec::new(600, n_items, 6, 0.0, 8)).unwrap();
    let events: Vec<&Interaction> = log.events().iter().take(10_000).collect();
    assert_eq!(events.len(), 10_000);
    let mut counts = vec![0f64; n_items as usize];
    for e in events {
        counts[e.item.0 as usize] += 1.0;
    }
    let expected = 10_000.0 / f64::from(n_items);
    let chi2: f64 = counts.iter().map(|c| (c - expected).powi(2) / expected).sum();
    // upper 1% point of chi-square with 49 degrees of freedom
    assert!(chi2 < 74.919, "chi-square {chi2}");
}

#[test]
fn positive_exponent_is_skewed_toward_low_ids() {
    let log = generate_synthetic(&SyntheticSpec::new(200, 100, 4, 1.0, 2)).unwrap();
    let s = log.strengths();
    let head: u64 = (0..10).map(|i| s.get(&ItemId(i)).copied().unwrap_or(0)).sum();
    let tail: u64 = (90..100).map(|i| s.get(&ItemId(i)).copied().unwrap_or(0)).sum();
    assert!(head > 5 * tail, "head {head} tail {tail}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filtered_users_cover_every_window(
        rows in prop::collection::vec((0u32..12, 0u32..6, 0u32..120), 1..150),
    ) {
        let log = InteractionLog::new(rows.iter().map(|&(u, i, s)| ev(u, i, s)).collect());
        let kept = filter_active_users(&log, 30);
        let (lo, hi) = log.step_range().unwrap();
        let windows: BTreeSet<u32> = (lo / 30..=hi / 30).collect();
        let mut seen: BTreeMap<UserId, BTreeSet<u32>> = BTreeMap::new();
        for e in log.events() {
            seen.entry(e.user).or_default().insert(e.step / 30);
        }
        for (u, w) in &seen {
            prop_assert_eq!(kept.users().contains(u), *w == windows);
        }
    }
}
