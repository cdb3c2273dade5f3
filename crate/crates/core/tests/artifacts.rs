use std::collections::BTreeMap;

use feedloop::artifact::{mean_sd, run_dirs, sweep_into, RunArtifact, AGGREGATE_FILE, HEADLINE};
use feedloop::ingestion::{generate_synthetic, SyntheticSpec};
use feedloop::metrics::{measure, segment_users, MetricsOptions};
use feedloop::recommenders::ModelId;
use feedloop::SimulationConfig;

fn base() -> SimulationConfig {
    SimulationConfig {
        horizon_epochs: 3,
        seed: 17,
        ..Default::default()
    }
}

#[test]
fn sweep_artifacts_recompute_from_raw_csv() {
    let hist = generate_synthetic(&SyntheticSpec::new(120, 400, 9, 1.0, 6)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = MetricsOptions::default();
    let etas = [0.0, 0.6];
    let models = [ModelId::MostPop, ModelId::ItemKnn];
    let outcomes = sweep_into(dir.path(), &base(), &etas, &models, 2, &hist, &opts, 3).unwrap();
    assert_eq!(outcomes.len(), 8);
    assert_eq!(run_dirs(dir.path()).unwrap().len(), 8);

    let mut finals: BTreeMap<(String, String), Vec<[f64; 3]>> = BTreeMap::new();
    for d in run_dirs(dir.path()).unwrap() {
        let art = RunArtifact::load(&d).unwrap();
        let cfg = &art.snapshot.simulation;
        let init = art.log.steps(0, cfg.t0());
        let segments = segment_users(&init).unwrap();
        let universe = init.items().clone();
        let recomputed = measure(&art.log, &segments, &universe, cfg.horizon_epochs, &opts).unwrap();
        assert_eq!(art.final_value("collective_gini"), Some(recomputed.collective_gini));
        assert_eq!(art.final_value("mean_individual_gini"), Some(recomputed.mean_individual_gini));
        assert_eq!(art.final_value("mean_jaccard"), Some(recomputed.mean_jaccard.mean));
        assert_eq!(art.series("mean_jaccard").len() as u32, cfg.horizon_epochs + 1);
        let key = art.snapshot.run;
        finals
            .entry((key.eta.to_string(), key.model.to_string()))
            .or_default()
            .push(HEADLINE.map(|m| art.final_value(m).unwrap()));
    }

    let mut rdr = csv::Reader::from_path(dir.path().join(AGGREGATE_FILE)).unwrap();
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let k = HEADLINE.iter().position(|m| *m == &rec[2]).unwrap();
        let xs: Vec<f64> = finals[&(rec[0].to_string(), rec[1].to_string())].iter().map(|v| v[k]).collect();
        let (mean, sd) = mean_sd(&xs);
        assert_eq!(rec[4].parse::<f64>().unwrap(), mean);
        assert_eq!(rec[5].parse::<f64>().unwrap(), sd);
        rows += 1;
    }
    assert_eq!(rows, 4 * HEADLINE.len());

    // eta = 0: the recommender is never consulted, so models agree per run index
    for run in 0..2 {
        let at = |model: ModelId| {
            outcomes
                .iter()
                .find(|o| o.key.eta == 0.0 && o.key.model == model && o.key.run == run)
                .unwrap()
                .result
                .clone()
                .unwrap()
        };
        assert_eq!(at(ModelId::MostPop), at(ModelId::ItemKnn));
    }
}

#[test]
fn rerun_overwrites_with_identical_bytes() {
    let hist = generate_synthetic(&SyntheticSpec::new(40, 100, 9, 1.0, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let opts = MetricsOptions::default();
    sweep_into(dir.path(), &base(), &[0.5], &[ModelId::Bpr], 1, &hist, &opts, 1).unwrap();
    let first = std::fs::read(dir.path().join(AGGREGATE_FILE)).unwrap();
    let run = run_dirs(dir.path()).unwrap().remove(0);
    let log_first = std::fs::read(run.join("log.csv")).unwrap();
    sweep_into(dir.path(), &base(), &[0.5], &[ModelId::Bpr], 1, &hist, &opts, 2).unwrap();
    assert_eq!(std::fs::read(dir.path().join(AGGREGATE_FILE)).unwrap(), first);
    assert_eq!(std::fs::read(run.join("log.csv")).unwrap(), log_first);
}
