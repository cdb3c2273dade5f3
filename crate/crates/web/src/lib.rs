//! Browser bindings for three interactive views: the softmax choice
//! distribution as temperature varies, the frequency-rank curve and Gini of a
//! synthetic catalogue, and a small end-to-end simulation.
//!
//! The plain functions return JSON strings so they can be tested natively;
//! the `wasm` module wraps them for JavaScript.

use feedloop::choice::choice_probabilities;
use feedloop::ingestion::{generate_synthetic, SyntheticSpec};
use feedloop::metrics::{collective_gini, frequency_rank, individual_gini, CurveKind, MetricsOptions};
use feedloop::recommenders::ModelId;
use feedloop::sim::{horizon_schedule, run_simulation};
use feedloop::SimulationConfig;
use serde_json::{json, Value};

type Out = Result<String, String>;

fn text(v: Value) -> String {
    v.to_string()
}

/// Choice probabilities for `utilities` at each temperature in `taus`.
pub fn softmax_table(utilities: &[f64], taus: &[f64]) -> Out {
    let rows = taus
        .iter()
        .map(|&tau| {
            let p = choice_probabilities(utilities, tau).map_err(|e| e.to_string())?;
            Ok(json!({ "tau": tau, "p": p }))
        })
        .collect::<Result<Vec<_>, String>>()?;
    Ok(text(json!({ "utilities": utilities, "rows": rows })))
}

/// Strength and popularity curves of a synthetic log plus its Gini values.
pub fn catalogue(n_users: u32, n_items: u32, exponent: f64, seed: u64) -> Out {
    let spec = SyntheticSpec::new(n_users, n_items, 2, exponent, seed);
    let log = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let curve = |k| frequency_rank(&log, k).iter().map(|p| p.value).collect::<Vec<u64>>();
    Ok(text(json!({
        "events": log.len(),
        "collective_gini": collective_gini(&log).map_err(|e| e.to_string())?,
        "mean_individual_gini": individual_gini(&log).map_err(|e| e.to_string())?.mean,
        "strength": curve(CurveKind::Strength),
        "popularity": curve(CurveKind::Popularity),
    })))
}

/// One run on a fresh synthetic history: per-epoch headline metrics and the
/// channel counters.
pub fn simulate(n_users: u32, n_items: u32, horizon: u32, eta: f64, model: &str, seed: u64) -> Out {
    let model: ModelId = model.parse().map_err(|e: feedloop::Error| e.to_string())?;
    let config = SimulationConfig {
        eta,
        model,
        horizon_epochs: horizon,
        seed,
        ..Default::default()
    };
    config.validate().map_err(|e| e.to_string())?;
    let spec = SyntheticSpec::new(n_users, n_items, config.init_epochs + horizon, 1.0, seed);
    let hist = generate_synthetic(&spec).map_err(|e| e.to_string())?;
    let schedule = horizon_schedule(&config, &hist).map_err(|e| e.to_string())?;
    let out = run_simulation(&config, &hist, &schedule, &MetricsOptions::default()).map_err(|e| e.to_string())?;
    Ok(text(json!({
        "epochs": out.snapshots,
        "stats": out.stats,
        "retrained_at": out.training.iter().map(|t| t.epoch).collect::<Vec<_>>(),
    })))
}

#[cfg(target_arch = "wasm32")]
mod wasm {
    use wasm_bindgen::prelude::*;

    fn js(r: super::Out) -> Result<String, JsError> {
        r.map_err(|e| JsError::new(&e))
    }

    #[wasm_bindgen]
    pub fn softmax_table(utilities: &[f64], taus: &[f64]) -> Result<String, JsError> {
        js(super::softmax_table(utilities, taus))
    }

    #[wasm_bindgen]
    pub fn catalogue(n_users: u32, n_items: u32, exponent: f64, seed: u32) -> Result<String, JsError> {
        js(super::catalogue(n_users, n_items, exponent, u64::from(seed)))
    }

    #[wasm_bindgen]
    pub fn simulate(n_users: u32, n_items: u32, horizon: u32, eta: f64, model: &str, seed: u32) -> Result<String, JsError> {
        js(super::simulate(n_users, n_items, horizon, eta, model, u64::from(seed)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: Out) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn softmax_rows_sum_to_one_and_flatten_with_temperature() {
        let v = parse(softmax_table(&[2.0, 1.0, 0.0], &[0.1, 1.0, 100.0]));
        let rows = v["rows"].as_array().unwrap();
        let p = |r: usize| -> Vec<f64> {
            rows[r]["p"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
        };
        for r in 0..3 {
            assert!((p(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let e = [2f64.exp(), 1f64.exp(), 1.0];
        let z: f64 = e.iter().sum();
        assert!((p(1)[0] - e[0] / z).abs() < 1e-12);
        assert!(p(0)[0] > 0.99 && (p(2)[0] - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn softmax_rejects_bad_input() {
        assert!(softmax_table(&[], &[1.0]).is_err());
        assert!(softmax_table(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn catalogue_curve_is_sorted_and_sums_to_events() {
        let v = parse(catalogue(50, 80, 1.0, 4));
        let s: Vec<u64> = v["strength"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()).collect();
        assert!(s.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(s.iter().sum::<u64>(), v["events"].as_u64().unwrap());
        let g = v["collective_gini"].as_f64().unwrap();
        assert!(g > 0.0 && g < 1.0);
    }

    #[test]
    fn simulate_reports_every_epoch() {
        let v = parse(simulate(40, 120, 2, 0.5, "mostpop", 1));
        assert_eq!(v["epochs"].as_array().unwrap().len(), 3);
        assert_eq!(v["retrained_at"], json!([6, 7, 8]));
        assert!(simulate(40, 120, 2, 0.5, "nope", 1).is_err());
        assert!(simulate(40, 120, 2, 1.5, "bpr", 1).is_err());
    }
}
