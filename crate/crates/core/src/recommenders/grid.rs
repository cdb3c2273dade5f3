use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::model::{InteractionLog, ItemId};
use crate::rng;

use super::{evaluate, train, EvalMetrics, ModelId, ModelParams};

#[derive(Debug, Clone, PartialEq)]
pub struct GridRow {
    pub assignment: BTreeMap<String, f64>,
    /// Validation metrics, or the reason the point failed.
    pub outcome: std::result::Result<EvalMetrics, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSearch {
    pub model: ModelId,
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the best point.
    pub best: Option<usize>,
}

impl GridSearch {
    pub fn best_params(&self, base: &ModelParams) -> Option<ModelParams> {
        let row = &self.rows[self.best?];
        let mut p = *base;
        for (k, v) in &row.assignment {
            p.set(self.model, k, *v).ok()?;
        }
        Some(p)
    }
}

/// Cartesian product in parameter-name order, last name varying fastest.
fn enumerate(grid: &BTreeMap<String, Vec<f64>>) -> Vec<BTreeMap<String, f64>> {
    let mut points = vec![BTreeMap::new()];
    for (name, values) in grid {
        points = points
            .into_iter()
            .flat_map(|p| {
                values.iter().map(move |&v| {
                    let mut q = p.clone();
                    q.insert(name.clone(), v);
                    q
                })
            })
            .collect();
    }
    points
}

/// Exhaustive search maximising validation nDCG@k. Ties keep the earliest
/// point in enumeration order; failing points are recorded and skipped.
#[allow(clippy::too_many_arguments)]
pub fn grid_search(
    model: ModelId,
    grid: &BTreeMap<String, Vec<f64>>,
    base: &ModelParams,
    train_log: &InteractionLog,
    validation: &InteractionLog,
    catalog: &[ItemId],
    k: usize,
    seed: u64,
) -> Result<GridSearch> {
    if grid.values().any(Vec::is_empty) {
        return Err(Error::Config("grid has a parameter with no values".into()));
    }
    for name in grid.keys() {
        if !ModelParams::names(model).contains(&name.as_str()) {
            return Err(Error::Config(format!("unknown parameter '{name}' for {model}")));
        }
    }
    let points = enumerate(grid);
    let mut rows = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64)> = None;
    for (idx, assignment) in points.into_iter().enumerate() {
        let run = || -> Result<EvalMetrics> {
            let mut p = *base;
            for (k, v) in &assignment {
                p.set(model, k, *v)?;
            }
            let seed = rng::derive_seed(seed, &[rng::tag::TRAIN, idx as u64]);
            let fitted = train(model, &p, train_log, catalog, seed)?;
            evaluate(fitted.as_ref(), train_log, validation, k)
        };
        let outcome = run().map_err(|e| e.to_string());
        if let Ok(m) = &outcome {
            if best.is_none_or(|(_, b)| m.ndcg > b) {
                best = Some((idx, m.ndcg));
            }
        }
        rows.push(GridRow { assignment, outcome });
    }
    Ok(GridSearch {
        model,
        rows,
        best: best.map(|(i, _)| i),
    })
}

/// `params..., ndcg, precision, recall, hit`; failed points leave metric cells empty.
pub fn write_grid_csv(search: &GridSearch, writer: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let names: Vec<String> = search
        .rows
        .first()
        .map(|r| r.assignment.keys().cloned().collect())
        .unwrap_or_default();
    let mut header = names.clone();
    header.extend(["ndcg", "precision", "recall", "hit"].map(String::from));
    w.write_record(&header)?;
    for row in &search.rows {
        let mut rec: Vec<String> = names.iter().map(|n| row.assignment[n].to_string()).collect();
        match &row.outcome {
            Ok(m) => rec.extend([m.ndcg, m.precision, m.recall, m.hit_rate].map(|v| format!("{v:.6}"))),
            Err(_) => rec.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<grid writer>", e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_order_is_last_fastest() {
        let grid: BTreeMap<String, Vec<f64>> =
            [("a".to_string(), vec![1.0, 2.0]), ("b".to_string(), vec![10.0, 20.0])].into();
        let pts = enumerate(&grid);
        let flat: Vec<(f64, f64)> = pts.iter().map(|p| (p["a"], p["b"])).collect();
        assert_eq!(flat, vec![(1.0, 10.0), (1.0, 20.0), (2.0, 10.0), (2.0, 20.0)]);
    }
}
