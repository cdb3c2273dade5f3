use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use feedloop::ingestion::{DatasetSpec, SyntheticSpec};
use feedloop::metrics::MetricsOptions;
use feedloop::recommenders::{ModelId, ModelParams};
use feedloop::{Error, Result, SimulationConfig};
use serde::Deserialize;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestOptions {
    /// Keep only users active in every epoch.
    pub filter: bool,
    pub epoch_length: u32,
    /// When set, `ingest` also writes the train/validation/test split starting here.
    pub split_start_epoch: Option<u32>,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            filter: true,
            epoch_length: 30,
            split_start_epoch: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepGrid {
    pub etas: Vec<f64>,
    pub models: Vec<ModelId>,
    pub runs: u32,
}

impl Default for SweepGrid {
    fn default() -> Self {
        SweepGrid {
            etas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
            models: ModelId::ALL.to_vec(),
            runs: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateOptions {
    pub models: Vec<ModelId>,
    pub k: usize,
    pub start_epoch: u32,
    /// Per model family: parameter name to candidate values.
    pub grid: BTreeMap<ModelId, BTreeMap<String, Vec<f64>>>,
}

impl Default for EvaluateOptions {
    fn default() -> Self {
        EvaluateOptions {
            models: ModelId::ALL.to_vec(),
            k: 10,
            start_epoch: 0,
            grid: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportOptions {
    pub min_shared: u64,
    /// Co-purchase nodes drawn from each strength quartile of the baseline.
    pub per_quartile: usize,
}

impl Default for ReportOptions {
    fn default() -> Self {
        ReportOptions {
            min_shared: 1,
            per_quartile: 25,
        }
    }
}

/// Everything an experiment needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// A normalized log (as written by `ingest`).
    pub input: Option<PathBuf>,
    pub dataset: Option<DatasetSpec>,
    pub synthetic: Option<SyntheticSpec>,
    pub ingest: IngestOptions,
    pub simulation: SimulationConfig,
    pub sweep: SweepGrid,
    pub evaluate: EvaluateOptions,
    pub metrics: MetricsOptions,
    pub report: ReportOptions,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))
    }

    /// Checks every constituent before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.simulation.validate()?;
        if let Some(s) = &self.synthetic {
            s.validate()?;
        }
        if self.ingest.epoch_length == 0 {
            return Err(Error::Config("ingest.epoch_length must be positive".into()));
        }
        if self.sweep.etas.is_empty() || self.sweep.models.is_empty() || self.sweep.runs == 0 {
            return Err(Error::Config("sweep grids must be non-empty".into()));
        }
        if let Some(eta) = self.sweep.etas.iter().find(|e| !(0.0..=1.0).contains(*e)) {
            return Err(Error::Config(format!("sweep eta {eta} outside [0, 1]")));
        }
        if self.evaluate.k == 0 || self.evaluate.models.is_empty() {
            return Err(Error::Config("evaluate needs k >= 1 and at least one model".into()));
        }
        for (model, grid) in &self.evaluate.grid {
            for name in grid.keys() {
                if !ModelParams::names(*model).contains(&name.as_str()) {
                    return Err(Error::Config(format!("unknown grid parameter '{name}' for {model}")));
                }
            }
        }
        if self.report.min_shared == 0 {
            return Err(Error::Config("report.min_shared must be at least 1".into()));
        }
        if self.metrics.head_k == 0 {
            return Err(Error::Config("metrics.head_k must be at least 1".into()));
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        Ok(())
    }
}
