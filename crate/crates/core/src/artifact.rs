//! Run artifact directories: writing them during simulate/sweep and reading
//! them back for reports.
//!
//! ```text
//! <out>/<eta..._model_run..>/config.toml   written before the run starts
//!                            log.csv       user,item,step,quantity,source
//!                            metrics.csv   epoch,eta,model,run,metric,value
//!                            training.csv  epoch,window_start,window_end,events,skipped_users
//!                            stats.csv     counter,value
//!                            error.txt     only when the run failed
//! <out>/summary.csv, <out>/aggregate.csv
//! ```

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::SimulationConfig;
use crate::error::{Error, Result};
use crate::ingestion::{read_log_file, write_log_file};
use crate::metrics::MetricsOptions;
use crate::model::{ActivitySchedule, InteractionLog};
use crate::recommenders::ModelId;
use crate::sim::{
    execute_plan, horizon_schedule, run_simulation, sweep_plan, EpochMetrics, RunKey, SimOutput, SimStats,
    TrainingEvent,
};

pub const CONFIG_FILE: &str = "config.toml";
pub const LOG_FILE: &str = "log.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const TRAINING_FILE: &str = "training.csv";
pub const STATS_FILE: &str = "stats.csv";
pub const ERROR_FILE: &str = "error.txt";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const AGGREGATE_FILE: &str = "aggregate.csv";

/// Final-epoch metrics carried into the summary and aggregate tables.
pub const HEADLINE: [&str; 3] = ["mean_individual_gini", "collective_gini", "mean_jaccard"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Snapshot {
    pub run: RunKey,
    pub simulation: SimulationConfig,
    pub metrics: MetricsOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricRow {
    pub epoch: u32,
    pub eta: f64,
    pub model: ModelId,
    pub run: u32,
    pub metric: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub key: RunKey,
    pub dir: PathBuf,
    /// Metrics after the last epoch, or the failure message.
    pub result: std::result::Result<EpochMetrics, String>,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(create(path)?))
}

fn finish(mut w: csv::Writer<BufWriter<File>>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_snapshot(dir: &Path, snapshot: &Snapshot) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    let text = toml::to_string(snapshot).map_err(|e| Error::Runtime(format!("config snapshot: {e}")))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_snapshot(dir: &Path) -> Result<Snapshot> {
    let path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn write_metrics_csv(path: &Path, key: &RunKey, snapshots: &[EpochMetrics]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "eta", "model", "run", "metric", "value"])?;
    for s in snapshots {
        for (name, value) in s.values() {
            w.write_record([
                s.epoch.to_string(),
                key.eta.to_string(),
                key.model.to_string(),
                key.run.to_string(),
                name.to_string(),
                value.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricRow>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(f));
    let mut rows = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Row {
            row: idx + 1,
            reason: format!("malformed metrics row in {}", path.display()),
        };
        if rec.len() != 6 {
            return Err(bad());
        }
        rows.push(MetricRow {
            epoch: rec[0].parse().map_err(|_| bad())?,
            eta: rec[1].parse().map_err(|_| bad())?,
            model: rec[2].parse().map_err(|_| bad())?,
            run: rec[3].parse().map_err(|_| bad())?,
            metric: rec[4].to_string(),
            value: rec[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

pub fn write_training_csv(path: &Path, events: &[TrainingEvent]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["epoch", "window_start", "window_end", "events", "skipped_users"])?;
    for t in events {
        w.write_record([
            t.epoch.to_string(),
            t.window_start.to_string(),
            t.window_end.to_string(),
            t.events.to_string(),
            t.skipped_users.to_string(),
        ])?;
    }
    finish(w, path)
}

pub fn read_training_csv(path: &Path) -> Result<Vec<TrainingEvent>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(std::io::BufReader::new(f));
    let mut out = Vec::new();
    for (idx, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let n = |k: usize| -> Result<u64> {
            rec.get(k).and_then(|v| v.parse().ok()).ok_or(Error::Row {
                row: idx + 1,
                reason: format!("malformed training row in {}", path.display()),
            })
        };
        out.push(TrainingEvent {
            epoch: n(0)? as u32,
            window_start: n(1)? as u32,
            window_end: n(2)? as u32,
            events: n(3)? as usize,
            skipped_users: n(4)? as usize,
        });
    }
    Ok(out)
}

fn write_stats(path: &Path, stats: &SimStats) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["counter", "value"])?;
    for (name, v) in [
        ("recommended", stats.recommended),
        ("organic", stats.organic),
        ("fallback_to_organic", stats.fallback_to_organic),
        ("dropped", stats.dropped),
    ] {
        w.write_record([name, &v.to_string()])?;
    }
    finish(w, path)
}

/// Writes everything a finished run produced (the snapshot is already there).
pub fn write_outputs(dir: &Path, key: &RunKey, output: &SimOutput) -> Result<()> {
    write_log_file(&output.log, &dir.join(LOG_FILE))?;
    write_metrics_csv(&dir.join(METRICS_FILE), key, &output.snapshots)?;
    write_training_csv(&dir.join(TRAINING_FILE), &output.training)?;
    write_stats(&dir.join(STATS_FILE), &output.stats)
}

fn make_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    // stale files from an earlier run would make the directory ambiguous
    for name in [LOG_FILE, METRICS_FILE, TRAINING_FILE, STATS_FILE, ERROR_FILE] {
        let p = dir.join(name);
        if p.exists() {
            fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
        }
    }
    Ok(())
}

/// One run into `dir`: snapshot first, then simulate, then outputs. A failed
/// simulation leaves the snapshot plus `error.txt`; only I/O failures abort.
pub fn run_into(
    dir: &Path,
    key: &RunKey,
    config: &SimulationConfig,
    historical: &InteractionLog,
    schedule: &ActivitySchedule,
    opts: &MetricsOptions,
) -> Result<RunOutcome> {
    make_dir(dir)?;
    write_snapshot(
        dir,
        &Snapshot {
            run: *key,
            simulation: config.clone(),
            metrics: *opts,
        },
    )?;
    let result = match run_simulation(config, historical, schedule, opts) {
        Ok(out) => {
            write_outputs(dir, key, &out)?;
            Ok(*out.snapshots.last().expect("epoch 0 is always measured"))
        }
        Err(e) => {
            log::error!("run {} failed: {e}", key.dir_name());
            let p = dir.join(ERROR_FILE);
            fs::write(&p, format!("{e}\n")).map_err(|err| Error::io(&p, err))?;
            Err(e.to_string())
        }
    };
    Ok(RunOutcome {
        key: *key,
        dir: dir.to_path_buf(),
        result,
    })
}

/// A full sweep under `out_root`, followed by the summary and aggregate tables.
#[allow(clippy::too_many_arguments)]
pub fn sweep_into(
    out_root: &Path,
    base: &SimulationConfig,
    etas: &[f64],
    models: &[ModelId],
    n_runs: u32,
    historical: &InteractionLog,
    opts: &MetricsOptions,
    jobs: usize,
) -> Result<Vec<RunOutcome>> {
    let plan = sweep_plan(base, etas, models, n_runs)?;
    fs::create_dir_all(out_root).map_err(|e| Error::io(out_root, e))?;
    let schedule = horizon_schedule(base, historical)?;
    let outcomes = execute_plan(&plan, jobs, |key, config| {
        run_into(&out_root.join(key.dir_name()), key, config, historical, &schedule, opts)
    })?
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    write_summary(&out_root.join(SUMMARY_FILE), &outcomes)?;
    write_aggregate(&out_root.join(AGGREGATE_FILE), &aggregate(&outcomes))?;
    Ok(outcomes)
}

fn headline(m: &EpochMetrics) -> [f64; 3] {
    [m.mean_individual_gini, m.collective_gini, m.mean_jaccard]
}

pub fn write_summary(path: &Path, outcomes: &[RunOutcome]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["eta", "model", "run", "status"];
    header.extend(HEADLINE);
    w.write_record(&header)?;
    for o in outcomes {
        let mut row = vec![o.key.eta.to_string(), o.key.model.to_string(), o.key.run.to_string()];
        match &o.result {
            Ok(m) => {
                row.push("ok".into());
                row.extend(headline(m).iter().map(|v| v.to_string()));
            }
            Err(_) => {
                row.push("failed".into());
                row.extend(std::iter::repeat_n(String::new(), HEADLINE.len()));
            }
        }
        w.write_record(&row)?;
    }
    finish(w, path)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub eta: f64,
    pub model: ModelId,
    pub metric: &'static str,
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub sd: f64,
}

pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Across-run mean and sd of the final headline metrics per `(eta, model)`,
/// in first-appearance order. Failed runs are left out.
pub fn aggregate(outcomes: &[RunOutcome]) -> Vec<AggregateRow> {
    let mut order: Vec<(f64, ModelId)> = Vec::new();
    let mut groups: BTreeMap<usize, Vec<[f64; 3]>> = BTreeMap::new();
    for o in outcomes {
        let pos = match order.iter().position(|&(e, m)| e == o.key.eta && m == o.key.model) {
            Some(p) => p,
            None => {
                order.push((o.key.eta, o.key.model));
                order.len() - 1
            }
        };
        let g = groups.entry(pos).or_default();
        if let Ok(m) = &o.result {
            g.push(headline(m));
        }
    }
    let mut rows = Vec::new();
    for (pos, values) in groups {
        if values.is_empty() {
            continue;
        }
        let (eta, model) = order[pos];
        for (k, metric) in HEADLINE.iter().enumerate() {
            let xs: Vec<f64> = values.iter().map(|v| v[k]).collect();
            let (mean, sd) = mean_sd(&xs);
            rows.push(AggregateRow {
                eta,
                model,
                metric,
                runs: xs.len(),
                mean,
                sd,
            });
        }
    }
    rows
}

pub fn write_aggregate(path: &Path, rows: &[AggregateRow]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["eta", "model", "metric", "runs", "mean", "sd"])?;
    for r in rows {
        w.write_record([
            r.eta.to_string(),
            r.model.to_string(),
            r.metric.to_string(),
            r.runs.to_string(),
            r.mean.to_string(),
            r.sd.to_string(),
        ])?;
    }
    finish(w, path)
}

/// A completed run loaded back from disk.
#[derive(Debug, Clone)]
pub struct RunArtifact {
    pub dir: PathBuf,
    pub snapshot: Snapshot,
    pub log: InteractionLog,
    pub metrics: Vec<MetricRow>,
    pub training: Vec<TrainingEvent>,
}

fn require(path: PathBuf) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(Error::Data(format!("missing artifact: {}", path.display())))
    }
}

impl RunArtifact {
    pub fn load(dir: &Path) -> Result<RunArtifact> {
        require(dir.join(CONFIG_FILE))?;
        let snapshot = read_snapshot(dir)?;
        if dir.join(ERROR_FILE).exists() {
            return Err(Error::Data(format!("run failed: {}", dir.join(ERROR_FILE).display())));
        }
        Ok(RunArtifact {
            log: read_log_file(&require(dir.join(LOG_FILE))?)?,
            metrics: read_metrics_csv(&require(dir.join(METRICS_FILE))?)?,
            training: read_training_csv(&require(dir.join(TRAINING_FILE))?)?,
            snapshot,
            dir: dir.to_path_buf(),
        })
    }

    /// Values of one metric by epoch.
    pub fn series(&self, metric: &str) -> Vec<(u32, f64)> {
        self.metrics
            .iter()
            .filter(|r| r.metric == metric)
            .map(|r| (r.epoch, r.value))
            .collect()
    }

    pub fn final_value(&self, metric: &str) -> Option<f64> {
        self.series(metric).last().map(|p| p.1)
    }
}

/// Run directories directly under `root` (those holding a config snapshot),
/// sorted by name. `root` itself counts when it is a run directory.
pub fn run_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    if root.join(CONFIG_FILE).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let entries = fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut dirs = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| Error::io(root, e))?.path();
        if p.join(CONFIG_FILE).exists() {
            dirs.push(p);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::Data(format!("missing artifact: no run directories under {}", root.display())));
    }
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingestion::{generate_synthetic, SyntheticSpec};

    fn setup() -> (SimulationConfig, InteractionLog) {
        let mut spec = SyntheticSpec::new(25, 50, 5, 1.0, 4);
        spec.steps_per_epoch = 10;
        let cfg = SimulationConfig {
            init_epochs: 3,
            horizon_epochs: 2,
            steps_per_epoch: 10,
            training_window_epochs: 2,
            k: 5,
            candidate_set_size: 20,
            ..Default::default()
        };
        (cfg, generate_synthetic(&spec).unwrap())
    }

    #[test]
    fn sweep_directory_round_trips() {
        let (cfg, hist) = setup();
        let dir = tempfile::tempdir().unwrap();
        let opts = MetricsOptions::default();
        let out = sweep_into(dir.path(), &cfg, &[0.0, 1.0], &[ModelId::MostPop], 2, &hist, &opts, 2).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(run_dirs(dir.path()).unwrap().len(), 4);
        let art = RunArtifact::load(&out[0].dir).unwrap();
        assert_eq!(art.snapshot.run, out[0].key);
        assert_eq!(art.series("collective_gini").len(), 3);
        let m = out[0].result.as_ref().unwrap();
        assert_eq!(art.final_value("collective_gini"), Some(m.collective_gini));
        assert_eq!(art.training.len(), 3);
        assert_eq!(aggregate(&out).len(), 6);
    }

    #[test]
    fn failed_run_leaves_snapshot_and_error() {
        let (cfg, hist) = setup();
        let cfg = SimulationConfig { init_epochs: 9, ..cfg };
        let dir = tempfile::tempdir().unwrap();
        let key = RunKey { eta: 0.0, model: ModelId::MostPop, run: 0 };
        let o = run_into(dir.path(), &key, &cfg, &hist, &ActivitySchedule::new(), &MetricsOptions::default()).unwrap();
        assert!(o.result.is_err());
        assert!(dir.path().join(CONFIG_FILE).exists());
        assert!(dir.path().join(ERROR_FILE).exists());
        assert_eq!(read_snapshot(dir.path()).unwrap().simulation, cfg);
    }

    #[test]
    fn missing_artifact_names_path() {
        let dir = tempfile::tempdir().unwrap();
        let err = RunArtifact::load(dir.path()).unwrap_err().to_string();
        assert!(err.contains("config.toml"), "{err}");
    }

    #[test]
    fn sample_sd() {
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(mean_sd(&[4.0]), (4.0, 0.0));
    }
}
