//! Plot-ready CSV bundle assembled from run directories.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use feedloop::artifact::{mean_sd, run_dirs, RunArtifact, ERROR_FILE};
use feedloop::metrics::{copurchase_network_over, frequency_rank, stratified_sample, CopurchaseNetwork, CurveKind, ItemSampling};
use feedloop::recommenders::ModelId;
use feedloop::{Error, InteractionLog, ItemId, Result};
use log::warn;

use crate::commands::{create_dir, csv_writer, finish};
use crate::{Context, ReportArgs};

pub const GINI_VS_ETA: &str = "gini_vs_eta.csv";
pub const SEGMENT_GINI: &str = "segment_gini.csv";
pub const JACCARD_VS_ETA: &str = "jaccard_vs_eta.csv";
pub const JACCARD_VS_EPOCH: &str = "jaccard_vs_epoch.csv";
pub const FREQUENCY_RANK: &str = "frequency_rank.csv";
pub const COPURCHASE_PRE_NODES: &str = "copurchase_pre_nodes.csv";
pub const COPURCHASE_PRE_EDGES: &str = "copurchase_pre_edges.csv";
pub const COPURCHASE_POST_NODES: &str = "copurchase_post_nodes.csv";
pub const COPURCHASE_POST_EDGES: &str = "copurchase_post_edges.csv";

/// Runs grouped by `(model, eta)`, sorted for plotting one line per model.
fn groups(arts: &[RunArtifact]) -> Vec<((ModelId, f64), Vec<&RunArtifact>)> {
    let mut out: Vec<((ModelId, f64), Vec<&RunArtifact>)> = Vec::new();
    for a in arts {
        let k = (a.snapshot.run.model, a.snapshot.run.eta);
        match out.iter_mut().find(|(g, _)| *g == k) {
            Some((_, v)) => v.push(a),
            None => out.push((k, vec![a])),
        }
    }
    out.sort_by(|a, b| a.0 .0.cmp(&b.0 .0).then(a.0 .1.total_cmp(&b.0 .1)));
    out
}

fn first_value(a: &RunArtifact, metric: &str) -> Option<f64> {
    a.series(metric).first().map(|p| p.1)
}

/// `eta, model, metric, runs, baseline, mean, sd` over final-epoch values.
fn write_vs_eta(path: &Path, arts: &[RunArtifact], metrics: &[&str], metric_col: &str) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["eta", "model", metric_col, "runs", "baseline", "mean", "sd"])?;
    for ((model, eta), runs) in groups(arts) {
        for &m in metrics {
            let finals: Vec<f64> = runs.iter().filter_map(|a| a.final_value(m)).collect();
            if finals.is_empty() {
                continue;
            }
            let (mean, sd) = mean_sd(&finals);
            let baseline = first_value(runs[0], m).map(|v| v.to_string()).unwrap_or_default();
            let label = m.strip_suffix("_gini").filter(|_| metric_col == "segment").unwrap_or(m);
            w.write_record([
                eta.to_string(),
                model.to_string(),
                label.to_string(),
                finals.len().to_string(),
                baseline,
                mean.to_string(),
                sd.to_string(),
            ])?;
        }
    }
    finish(w, path)
}

fn write_jaccard_by_epoch(path: &Path, arts: &[RunArtifact]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(["eta", "model", "run", "epoch", "mean_jaccard"])?;
    for a in arts {
        let k = a.snapshot.run;
        for (epoch, v) in a.series("mean_jaccard") {
            w.write_record([k.eta.to_string(), k.model.to_string(), k.run.to_string(), epoch.to_string(), v.to_string()])?;
        }
    }
    finish(w, path)
}

fn baseline_of(a: &RunArtifact) -> InteractionLog {
    a.log.steps(0, a.snapshot.simulation.t0())
}

fn write_frequency_rank(path: &Path, baseline: &InteractionLog, arts: &[RunArtifact]) -> Result<()> {
    let universe = baseline.items().clone();
    let mut w = csv_writer(path)?;
    w.write_record(["source", "eta", "model", "run", "curve", "rank", "item", "value"])?;
    let mut emit = |source: &str, key: [String; 3], log: &InteractionLog| -> Result<()> {
        let widened = log.clone().with_items(universe.iter().copied());
        for curve in [CurveKind::Strength, CurveKind::Popularity] {
            for p in frequency_rank(&widened, curve) {
                w.write_record([
                    source.to_string(),
                    key[0].clone(),
                    key[1].clone(),
                    key[2].clone(),
                    curve.as_str().to_string(),
                    p.rank.to_string(),
                    log.item_label(p.item),
                    p.value.to_string(),
                ])?;
            }
        }
        Ok(())
    };
    emit("baseline", Default::default(), baseline)?;
    for a in arts {
        let k = a.snapshot.run;
        emit("simulated", [k.eta.to_string(), k.model.to_string(), k.run.to_string()], &a.log)?;
    }
    finish(w, path)
}

fn write_network(
    nodes_path: &Path,
    edges_path: &Path,
    nets: &[(Option<[String; 3]>, &InteractionLog, CopurchaseNetwork)],
) -> Result<()> {
    let keyed = nets.iter().any(|n| n.0.is_some());
    let prefix = |k: &Option<[String; 3]>| k.clone().map(|k| k.to_vec()).unwrap_or_default();
    let head = |cols: &[&str]| {
        let mut h: Vec<String> = if keyed { vec!["eta".into(), "model".into(), "run".into()] } else { vec![] };
        h.extend(cols.iter().map(|c| c.to_string()));
        h
    };
    let mut wn = csv_writer(nodes_path)?;
    wn.write_record(head(&["item", "strength"]))?;
    let mut we = csv_writer(edges_path)?;
    we.write_record(head(&["source", "target", "weight"]))?;
    for (key, log, net) in nets {
        for (item, s) in &net.nodes {
            let mut r = prefix(key);
            r.extend([log.item_label(*item), s.to_string()]);
            wn.write_record(&r)?;
        }
        for (i, j, weight) in &net.edges {
            let mut r = prefix(key);
            r.extend([log.item_label(*i), log.item_label(*j), weight.to_string()]);
            we.write_record(&r)?;
        }
    }
    finish(wn, nodes_path)?;
    finish(we, edges_path)
}

pub fn run(ctx: &Context, args: &ReportArgs) -> Result<()> {
    ctx.config.validate()?;
    let root = args.runs.clone().unwrap_or_else(|| ctx.out.clone());
    if !root.exists() {
        return Err(Error::Data(format!("missing artifact: {}", root.display())));
    }
    let out: PathBuf = if ctx.out_given && args.runs.is_some() {
        ctx.out.clone()
    } else {
        root.join("report")
    };
    let mut arts = Vec::new();
    for dir in run_dirs(&root)? {
        if dir.join(ERROR_FILE).exists() {
            warn!("skipping failed run {}", dir.display());
            continue;
        }
        arts.push(RunArtifact::load(&dir)?);
    }
    if arts.is_empty() {
        return Err(Error::Data(format!("no completed runs under {}", root.display())));
    }
    create_dir(&out)?;

    write_vs_eta(&out.join(GINI_VS_ETA), &arts, &["mean_individual_gini", "collective_gini"], "metric")?;
    write_vs_eta(&out.join(SEGMENT_GINI), &arts, &["light_gini", "medium_gini", "heavy_gini"], "segment")?;
    write_vs_eta(&out.join(JACCARD_VS_ETA), &arts, &["mean_jaccard"], "metric")?;
    write_jaccard_by_epoch(&out.join(JACCARD_VS_EPOCH), &arts)?;

    let baseline = baseline_of(&arts[0]);
    if baseline.is_empty() {
        return Err(Error::Data(format!("{}: empty initialization log", arts[0].dir.display())));
    }
    write_frequency_rank(&out.join(FREQUENCY_RANK), &baseline, &arts)?;

    let rep = &ctx.config.report;
    let sampling = ItemSampling {
        per_quartile: rep.per_quartile,
        seed: ctx.config.metrics.seed,
    };
    let nodes: BTreeSet<ItemId> = stratified_sample(&frequency_rank(&baseline, CurveKind::Strength), sampling);
    let pre = copurchase_network_over(&baseline, &nodes, rep.min_shared)?;
    write_network(
        &out.join(COPURCHASE_PRE_NODES),
        &out.join(COPURCHASE_PRE_EDGES),
        &[(None, &baseline, pre)],
    )?;
    let mut post = Vec::new();
    for a in &arts {
        let k = a.snapshot.run;
        let net = copurchase_network_over(&a.log, &nodes, rep.min_shared)?;
        post.push((Some([k.eta.to_string(), k.model.to_string(), k.run.to_string()]), &a.log, net));
    }
    write_network(&out.join(COPURCHASE_POST_NODES), &out.join(COPURCHASE_POST_EDGES), &post)?;

    println!("{} runs -> {}", arts.len(), out.display());
    Ok(())
}
