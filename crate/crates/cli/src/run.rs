//! Shared plumbing: resolved run configuration, model construction and
//! instance selection.

use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context};
use serde::Serialize;
use tgx_core::ctdg::NeighborCap;
use tgx_core::dataset::{Dataset, Instance};
use tgx_core::models::{ExternalModel, Model, ToyModel, ToyModelConfig};
use tgx_core::MaskMode;

/// Everything that determines the primary outputs of a run.
///
/// The worker count and output directory are left out on purpose: they do
/// not change results, and reports must compare equal across them.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: String,
    pub dataset: String,
    pub model: String,
    pub mode: MaskMode,
    pub seed: u64,
    pub hops: usize,
    pub neighbor_cap: Option<usize>,
    pub kernel_budget: Option<usize>,
    pub mc_samples: usize,
    pub feature_budget: Option<usize>,
    pub feature: bool,
    pub top_events: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub instances: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sparsities: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToyModelConfig>,
}

pub enum ModelSpec {
    Toy,
    External(Vec<String>),
}

impl ModelSpec {
    pub fn parse(s: &str) -> anyhow::Result<Self> {
        if s == "builtin:toy" {
            return Ok(ModelSpec::Toy);
        }
        if let Some(cmd) = s.strip_prefix("external:") {
            let parts: Vec<String> = cmd.split_whitespace().map(String::from).collect();
            if parts.is_empty() {
                bail!("external model needs a command, e.g. external:python bridge.py");
            }
            return Ok(ModelSpec::External(parts));
        }
        bail!("unknown model {s:?}; expected builtin:toy or external:<command>")
    }
}

/// Toy model sized for `ds`.
pub fn toy_config(ds: &Dataset) -> ToyModelConfig {
    ToyModelConfig {
        feature_dim: ds.graph.feature_dim(),
        node_feature_dim: ds.graph.node_feature_dim(),
        ..ToyModelConfig::default()
    }
}

pub fn build_model(spec: &ModelSpec, ds: &Dataset, workers: usize, timeout: Duration) -> anyhow::Result<Box<dyn Model>> {
    Ok(match spec {
        ModelSpec::Toy => Box::new(ToyModel::new(toy_config(ds))?),
        ModelSpec::External(cmd) => Box::new(ExternalModel::spawn(cmd, workers, timeout)?),
    })
}

pub fn load_dataset(path: &Path) -> anyhow::Result<Dataset> {
    Dataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

/// `n` instances spread evenly over the dataset, in dataset order.
pub fn select_instances(all: &[Instance], n: Option<usize>) -> Vec<Instance> {
    match n {
        Some(n) if n < all.len() => (0..n).map(|i| all[i * all.len() / n].clone()).collect(),
        _ => all.to_vec(),
    }
}

pub fn cap(c: Option<usize>) -> NeighborCap {
    NeighborCap(c)
}

pub fn write_file(dir: &Path, name: &str, contents: &str) -> anyhow::Result<PathBuf> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("output serializes") + "\n"
}
