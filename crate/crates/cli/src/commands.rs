use std::fs::{self, File};
use std::path::{Path, PathBuf};

use feedloop::artifact::{
    aggregate, run_into, sweep_into, write_aggregate, write_summary, AggregateRow, RunOutcome, AGGREGATE_FILE,
    SUMMARY_FILE,
};
use feedloop::ingestion::{
    filter_active_users, generate_synthetic, load_interactions, read_log_file, temporal_split, write_log_file,
    DatasetSpec, SplitWindow,
};
use feedloop::recommenders::{self, grid_search, write_grid_csv, EvalMetrics, ModelId};
use feedloop::rng::{derive_seed, tag};
use feedloop::sim::{horizon_schedule, RunKey};
use feedloop::{Error, InteractionLog, ItemId, Result};
use log::{info, warn};

use crate::{Context, EvaluateArgs, IngestArgs, SimulateArgs, SweepArgs};

pub(crate) fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Data(format!("{}: {e}", dir.display())))
}

pub(crate) fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let f = File::create(path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(csv::Writer::from_writer(f))
}

pub(crate) fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn counts(log: &InteractionLog) -> String {
    format!(
        "{} users, {} items, {} events ({} units)",
        log.users().len(),
        log.items().len(),
        log.len(),
        log.total_quantity()
    )
}

/// The historical log for evaluate/simulate/sweep: `--log`, then `input`,
/// then `[dataset]` (filtered unless `ingest.filter = false`), then
/// `[synthetic]`.
fn resolve_log(ctx: &Context, log: Option<&Path>) -> Result<InteractionLog> {
    let cfg = &ctx.config;
    let hist = if let Some(p) = log.or(cfg.input.as_deref()) {
        read_log_file(p)?
    } else if let Some(ds) = &cfg.dataset {
        let loaded = load_interactions(ds)?;
        if loaded.skipped_rows > 0 {
            warn!("{}: skipped {} malformed rows", ds.path.display(), loaded.skipped_rows);
        }
        if cfg.ingest.filter {
            filter_active_users(&loaded.log, cfg.ingest.epoch_length)
        } else {
            loaded.log
        }
    } else if let Some(spec) = &cfg.synthetic {
        generate_synthetic(spec)?
    } else {
        return Err(Error::Config(
            "no input: pass --log or set `input`, [dataset] or [synthetic] in the config".into(),
        ));
    };
    if hist.is_empty() {
        return Err(Error::Data("input log has no interactions".into()));
    }
    info!("input: {}", counts(&hist));
    Ok(hist)
}

pub fn ingest(ctx: &mut Context, args: &IngestArgs, lenient: bool) -> Result<()> {
    ctx.config.validate()?;
    let cfg = &ctx.config;
    let raw = if args.synthetic {
        let spec = cfg.synthetic.unwrap_or_default();
        spec.validate()?;
        generate_synthetic(&spec)?
    } else {
        let mut spec = match (&cfg.dataset, &args.input) {
            (Some(ds), input) => DatasetSpec {
                path: input.clone().unwrap_or_else(|| ds.path.clone()),
                ..ds.clone()
            },
            (None, Some(input)) => DatasetSpec {
                path: input.clone(),
                columns: Default::default(),
                granularity: Default::default(),
                mode: Default::default(),
            },
            (None, None) => {
                return Err(Error::Config(
                    "ingest needs --input, --synthetic or a [dataset] section".into(),
                ))
            }
        };
        for (flag, slot) in [
            (&args.user_col, &mut spec.columns.user),
            (&args.item_col, &mut spec.columns.item),
            (&args.time_col, &mut spec.columns.timestamp),
        ] {
            if let Some(v) = flag {
                *slot = v.clone();
            }
        }
        if let Some(q) = &args.quantity_col {
            spec.columns.quantity = Some(q.clone());
        }
        if let Some(g) = args.granularity {
            spec.granularity = g;
        }
        if lenient {
            spec.mode = feedloop::ingestion::ParseMode::Lenient;
        }
        let loaded = load_interactions(&spec)?;
        if loaded.skipped_rows > 0 {
            println!("skipped {} malformed rows", loaded.skipped_rows);
        }
        loaded.log
    };
    println!("loaded:   {}", counts(&raw));
    let filter = cfg.ingest.filter && !args.no_filter;
    let log = if filter {
        filter_active_users(&raw, cfg.ingest.epoch_length)
    } else {
        raw
    };
    if filter {
        println!("filtered: {}", counts(&log));
    }
    if log.is_empty() {
        warn!("no users are active in every epoch");
        return Err(Error::Data("no interactions left after filtering".into()));
    }

    create_dir(&ctx.out)?;
    let path = ctx.out.join("log.csv");
    write_log_file(&log, &path)?;
    println!("wrote {}", path.display());

    if let Some(start) = args.split_start.or(cfg.ingest.split_start_epoch) {
        let split = temporal_split(&log, &SplitWindow::starting_at(start), cfg.ingest.epoch_length)?;
        for (name, part) in [("train", &split.train), ("validation", &split.validation), ("test", &split.test)] {
            if part.is_empty() {
                warn!("{name} split is empty");
            }
            let p = ctx.out.join(format!("{name}.csv"));
            write_log_file(part, &p)?;
            println!("{name:<10} {} -> {}", counts(part), p.display());
        }
    }
    Ok(())
}

struct EvalRow {
    model: ModelId,
    outcome: std::result::Result<EvalMetrics, String>,
}

pub fn evaluate(ctx: &mut Context, args: &EvaluateArgs) -> Result<()> {
    if let Some(models) = &args.models {
        ctx.config.evaluate.models = models.clone();
    }
    if let Some(k) = args.k {
        ctx.config.evaluate.k = k;
    }
    if let Some(s) = args.split_start {
        ctx.config.evaluate.start_epoch = s;
    }
    ctx.config.validate()?;
    let cfg = &ctx.config;
    let ev = &cfg.evaluate;
    let hist = resolve_log(ctx, args.input.log.as_deref())?;
    let window = SplitWindow::starting_at(ev.start_epoch);
    let split = temporal_split(&hist, &window, cfg.ingest.epoch_length)?;
    let first = |offset: u32| ev.start_epoch + offset;
    for (name, part, lo, n) in [
        ("train", &split.train, first(0), window.train_epochs),
        ("test", &split.test, first(window.train_epochs + window.validation_epochs), window.test_epochs),
    ] {
        if part.is_empty() {
            return Err(Error::Data(format!("{name} split is empty (epochs {lo}..{})", lo + n)));
        }
    }
    if args.grid && split.validation.is_empty() {
        return Err(Error::Data("validation split is empty; grid search needs it".into()));
    }
    let catalog: Vec<ItemId> = split.train.items().iter().copied().collect();
    create_dir(&ctx.out)?;

    let mut rows = Vec::new();
    for &model in &ev.models {
        let mut params = cfg.simulation.models;
        if args.grid {
            if let Some(grid) = ev.grid.get(&model).filter(|g| !g.is_empty()) {
                let seed = derive_seed(cfg.simulation.seed, &[tag::TRAIN, model as u64]);
                let search =
                    grid_search(model, grid, &params, &split.train, &split.validation, &catalog, ev.k, seed)?;
                let path = ctx.out.join(format!("grid_{model}.csv"));
                let f = File::create(&path).map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
                write_grid_csv(&search, f)?;
                match search.best_params(&params) {
                    Some(best) => {
                        info!("{model}: best grid point {:?}", search.rows[search.best.unwrap()].assignment);
                        params = best;
                    }
                    None => warn!("{model}: every grid point failed; using configured parameters"),
                }
            }
        }
        let seed = derive_seed(cfg.simulation.seed, &[tag::TRAIN, model as u64, 1]);
        let outcome = recommenders::train(model, &params, &split.train, &catalog, seed)
            .and_then(|fitted| recommenders::evaluate(fitted.as_ref(), &split.train, &split.test, ev.k))
            .map_err(|e| {
                warn!("{model} failed: {e}");
                e.to_string()
            });
        rows.push(EvalRow { model, outcome });
    }
    rows.sort_by(|a, b| match (&a.outcome, &b.outcome) {
        (Ok(x), Ok(y)) => y.ndcg.total_cmp(&x.ndcg).then(a.model.cmp(&b.model)),
        (Ok(_), Err(_)) => std::cmp::Ordering::Less,
        (Err(_), Ok(_)) => std::cmp::Ordering::Greater,
        _ => a.model.cmp(&b.model),
    });

    let k = ev.k;
    println!(
        "{:<9} {:>9} {:>9} {:>9} {:>9} {:>6} {:>7}",
        "model",
        format!("ndcg@{k}"),
        format!("prec@{k}"),
        format!("rec@{k}"),
        format!("hit@{k}"),
        "users",
        "skipped"
    );
    let path = ctx.out.join("evaluation.csv");
    let mut w = csv_writer(&path)?;
    w.write_record(["model", "k", "status", "ndcg", "precision", "recall", "hit_rate", "users", "skipped_users"])?;
    for r in &rows {
        match &r.outcome {
            Ok(m) => {
                println!(
                    "{:<9} {:>9.4} {:>9.4} {:>9.4} {:>9.4} {:>6} {:>7}",
                    r.model, m.ndcg, m.precision, m.recall, m.hit_rate, m.users, m.skipped_users
                );
                w.write_record([
                    r.model.to_string(),
                    k.to_string(),
                    "ok".into(),
                    m.ndcg.to_string(),
                    m.precision.to_string(),
                    m.recall.to_string(),
                    m.hit_rate.to_string(),
                    m.users.to_string(),
                    m.skipped_users.to_string(),
                ])?;
            }
            Err(e) => {
                println!("{:<9} failed: {e}", r.model);
                let mut rec = vec![r.model.to_string(), k.to_string(), "failed".into()];
                rec.extend(std::iter::repeat_n(String::new(), 6));
                w.write_record(&rec)?;
            }
        }
    }
    finish(w, &path)?;
    if rows.iter().all(|r| r.outcome.is_err()) {
        return Err(Error::Runtime("every model failed".into()));
    }
    Ok(())
}

fn print_aggregate(rows: &[AggregateRow]) {
    println!("{:<5} {:<8} {:<21} {:>4} {:>22}", "eta", "model", "metric", "runs", "mean ± sd");
    for r in rows {
        println!(
            "{:<5} {:<8} {:<21} {:>4} {:>12.4} ± {:<7.4}",
            r.eta, r.model, r.metric, r.runs, r.mean, r.sd
        );
    }
}

fn report_outcomes(out: &Path, outcomes: &[RunOutcome]) -> Result<()> {
    let failed: Vec<&RunOutcome> = outcomes.iter().filter(|o| o.result.is_err()).collect();
    print_aggregate(&aggregate(outcomes));
    println!("wrote {} and {}", out.join(SUMMARY_FILE).display(), out.join(AGGREGATE_FILE).display());
    for o in &failed {
        eprintln!("run {} failed: {}", o.key.dir_name(), o.result.as_ref().unwrap_err());
    }
    if !outcomes.is_empty() && failed.len() == outcomes.len() {
        return Err(Error::Runtime(format!("all {} runs failed", outcomes.len())));
    }
    Ok(())
}

pub fn simulate(ctx: &mut Context, args: &SimulateArgs) -> Result<()> {
    let sim = &mut ctx.config.simulation;
    if let Some(eta) = args.eta {
        sim.eta = eta;
    }
    if let Some(m) = args.model {
        sim.model = m;
    }
    if let Some(h) = args.horizon {
        sim.horizon_epochs = h;
    }
    ctx.config.validate()?;
    let hist = resolve_log(ctx, args.input.log.as_deref())?;
    let sim = &ctx.config.simulation;
    let schedule = horizon_schedule(sim, &hist)?;
    let key = RunKey {
        eta: sim.eta,
        model: sim.model,
        run: 0,
    };
    create_dir(&ctx.out)?;
    let dir: PathBuf = ctx.out.join(key.dir_name());
    let outcome = run_into(&dir, &key, sim, &hist, &schedule, &ctx.config.metrics)?;
    println!("run directory {}", dir.display());
    let outcomes = [outcome];
    write_summary(&ctx.out.join(SUMMARY_FILE), &outcomes)?;
    write_aggregate(&ctx.out.join(AGGREGATE_FILE), &aggregate(&outcomes))?;
    report_outcomes(&ctx.out, &outcomes)
}

pub fn sweep(ctx: &mut Context, args: &SweepArgs) -> Result<()> {
    let cfg = &mut ctx.config;
    if let Some(e) = &args.etas {
        cfg.sweep.etas = e.clone();
    }
    if let Some(m) = &args.models {
        cfg.sweep.models = m.clone();
    }
    if let Some(r) = args.runs {
        cfg.sweep.runs = r;
    }
    if let Some(h) = args.horizon {
        cfg.simulation.horizon_epochs = h;
    }
    ctx.config.validate()?;
    let hist = resolve_log(ctx, args.input.log.as_deref())?;
    let cfg = &ctx.config;
    let g = &cfg.sweep;
    println!(
        "sweep: {} etas x {} models x {} runs on {} threads",
        g.etas.len(),
        g.models.len(),
        g.runs,
        ctx.jobs
    );
    let outcomes = sweep_into(&ctx.out, &cfg.simulation, &g.etas, &g.models, g.runs, &hist, &cfg.metrics, ctx.jobs)?;
    report_outcomes(&ctx.out, &outcomes)
}
