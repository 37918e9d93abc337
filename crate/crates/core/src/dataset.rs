//! Dataset directories: an event CSV, an instance manifest and a small JSON
//! metadata file.
//!
//! ```text
//! <dir>/events.csv         src,dst,ts,label,f_0,...
//! <dir>/instances.csv      instance,src,dst,t,label,marker_node,marker_event
//! <dir>/meta.json          {"task": "regression" | "binary", "num_nodes": n, ...}
//! <dir>/node_features.csv  optional, node_id,g_0,...
//! ```

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ctdg::{self, ComputationalSubgraph, LoadOptions, NeighborCap, NodeId, TemporalGraph};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Real-valued target; metrics use raw model outputs.
    Regression,
    /// Link prediction with labels in {0, 1}; metrics use sigmoid probabilities.
    Binary,
}

/// A prediction to explain: the root node(s) and time of the query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: u64,
    pub src: NodeId,
    pub dst: Option<NodeId>,
    pub t: f64,
    pub label: f64,
    /// Generator bookkeeping: the neighbour-less node of synthetic instances.
    pub marker_node: Option<NodeId>,
    /// Generator bookkeeping: the event linking the marker node to the pair.
    pub marker_event: Option<u64>,
}

impl Instance {
    pub fn subgraph(&self, g: &TemporalGraph, hops: usize, cap: NeighborCap) -> Result<ComputationalSubgraph> {
        match self.dst {
            Some(dst) => ctdg::extract_pair_subgraph(g, self.src, dst, self.t, hops, cap),
            None => ctdg::extract_subgraph(g, self.src, self.t, hops, cap),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: TemporalGraph,
    pub instances: Vec<Instance>,
    pub task: Task,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Meta {
    task: Task,
    num_nodes: usize,
    feature_dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    generator: Option<serde_json::Value>,
}

impl Dataset {
    /// Writes the dataset into `dir`, creating it if needed. `generator` is
    /// stored verbatim in `meta.json`.
    pub fn write_dir(&self, dir: &Path, generator: Option<serde_json::Value>) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        ctdg::write_events(&self.graph, &dir.join("events.csv"))?;

        let path = dir.join("instances.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        let opt = |x: Option<String>| x.unwrap_or_default();
        let mut out = String::from("instance,src,dst,t,label,marker_node,marker_event\n");
        for i in &self.instances {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                i.id,
                i.src,
                opt(i.dst.map(|d| d.to_string())),
                i.t,
                i.label,
                opt(i.marker_node.map(|d| d.to_string())),
                opt(i.marker_event.map(|d| d.to_string())),
            ));
        }
        w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(|e| Error::io(&path, e))?;

        let meta = Meta {
            task: self.task,
            num_nodes: self.graph.num_nodes(),
            feature_dim: self.graph.feature_dim(),
            generator,
        };
        let path = dir.join("meta.json");
        let text = serde_json::to_string_pretty(&meta).expect("meta serializes");
        std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
    }

    /// Loads a dataset directory, or a bare event CSV. A bare CSV yields one
    /// binary link-prediction instance per event, most recent first.
    pub fn load(path: &Path) -> Result<Dataset> {
        if !path.exists() {
            return Err(Error::io(path, std::io::Error::new(std::io::ErrorKind::NotFound, "dataset not found")));
        }
        if path.is_file() {
            let graph = ctdg::load_events(path, &LoadOptions::default())?;
            let instances = graph
                .events()
                .iter()
                .rev()
                .enumerate()
                .map(|(i, e)| Instance {
                    id: i as u64,
                    src: e.src,
                    dst: Some(e.dst),
                    t: e.ts,
                    label: 1.0,
                    marker_node: None,
                    marker_event: None,
                })
                .collect();
            return Ok(Dataset { graph, instances, task: Task::Binary });
        }

        let meta_path = path.join("meta.json");
        let meta: Option<Meta> = if meta_path.exists() {
            let text = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            Some(serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: meta_path.clone(),
                line: e.line() as u64,
                msg: e.to_string(),
            })?)
        } else {
            None
        };
        let nf = path.join("node_features.csv");
        let opts = LoadOptions {
            num_nodes: meta.as_ref().map(|m| m.num_nodes),
            node_features: nf.exists().then_some(nf.as_path()),
        };
        let graph = ctdg::load_events(&path.join("events.csv"), &opts)?;
        let instances = load_instances(&path.join("instances.csv"))?;
        Ok(Dataset { graph, instances, task: meta.map_or(Task::Binary, |m| m.task) })
    }
}

fn load_instances(path: &Path) -> Result<Vec<Instance>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(|e| Error::Parse {
        path: path.into(),
        line: 0,
        msg: e.to_string(),
    })?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let line = row as u64 + 2;
        let perr = |msg: String| Error::Parse { path: path.into(), line, msg };
        let rec = rec.map_err(|e| perr(e.to_string()))?;
        if rec.len() != 7 {
            return Err(perr(format!("expected 7 columns, found {}", rec.len())));
        }
        fn opt<T: std::str::FromStr>(s: &str) -> std::result::Result<Option<T>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| format!("invalid value {s:?}"))
            }
        }
        let req = |i: usize| -> Result<&str> {
            if rec[i].is_empty() {
                Err(perr(format!("column {i} is empty")))
            } else {
                Ok(&rec[i])
            }
        };
        let parse_f = |s: &str| s.parse::<f64>().map_err(|_| perr(format!("invalid number {s:?}")));
        let parse_u = |s: &str| s.parse::<usize>().map_err(|_| perr(format!("invalid id {s:?}")));
        out.push(Instance {
            id: parse_u(req(0)?)? as u64,
            src: parse_u(req(1)?)?,
            dst: opt(&rec[2]).map_err(perr)?,
            t: parse_f(req(3)?)?,
            label: parse_f(req(4)?)?,
            marker_node: opt(&rec[5]).map_err(perr)?,
            marker_event: opt(&rec[6]).map_err(perr)?,
        });
    }
    Ok(out)
}
