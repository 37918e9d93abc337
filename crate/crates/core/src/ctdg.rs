//! Continuous-time dynamic graphs: the event stream, CSV ingestion and the
//! time-restricted L-hop computational subgraph around a prediction target.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type NodeId = usize;

/// A timestamped, attributed edge `(src, dst, ts, features)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub id: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub ts: f64,
    /// Label column of the event CSV; not used by the explainers.
    pub label: f64,
    pub features: Vec<f64>,
}

impl Event {
    /// The endpoint opposite to `node`; self loops return `node`.
    pub fn other(&self, node: NodeId) -> NodeId {
        if self.src == node {
            self.dst
        } else {
            self.src
        }
    }

    pub fn touches(&self, node: NodeId) -> bool {
        self.src == node || self.dst == node
    }
}

/// An immutable event stream sorted by `(ts, id)` with a per-node incidence index.
#[derive(Debug, Clone)]
pub struct TemporalGraph {
    num_nodes: usize,
    feature_dim: usize,
    events: Vec<Event>,
    node_features: Option<Vec<Vec<f64>>>,
    // event positions per node, ascending by (ts, id)
    incidence: Vec<Vec<usize>>,
}

impl TemporalGraph {
    pub fn new(num_nodes: usize, feature_dim: usize, mut events: Vec<Event>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &events {
            if !e.ts.is_finite() {
                return Err(Error::InvalidArgument(format!("event {} has non-finite timestamp", e.id)));
            }
            if e.features.len() != feature_dim {
                return Err(Error::InvalidArgument(format!(
                    "event {} has {} features, expected {feature_dim}",
                    e.id,
                    e.features.len()
                )));
            }
            if e.src >= num_nodes {
                return Err(Error::UnknownNode(e.src));
            }
            if e.dst >= num_nodes {
                return Err(Error::UnknownNode(e.dst));
            }
            if !seen.insert(e.id) {
                return Err(Error::InvalidArgument(format!("duplicate event id {}", e.id)));
            }
        }
        events.sort_by(|a, b| a.ts.total_cmp(&b.ts).then(a.id.cmp(&b.id)));
        let mut incidence = vec![Vec::new(); num_nodes];
        for (pos, e) in events.iter().enumerate() {
            incidence[e.src].push(pos);
            if e.dst != e.src {
                incidence[e.dst].push(pos);
            }
        }
        Ok(TemporalGraph { num_nodes, feature_dim, events, node_features: None, incidence })
    }

    pub fn with_node_features(mut self, features: Vec<Vec<f64>>) -> Result<Self> {
        if features.len() != self.num_nodes {
            return Err(Error::InvalidArgument(format!(
                "{} node feature rows for {} nodes",
                features.len(),
                self.num_nodes
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        if features.iter().any(|f| f.len() != dim) {
            return Err(Error::InvalidArgument("node feature rows have mixed arity".into()));
        }
        self.node_features = Some(features);
        Ok(self)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn event_by_id(&self, id: u64) -> Option<&Event> {
        self.events.iter().find(|e| e.id == id)
    }

    pub fn node_feature_dim(&self) -> usize {
        self.node_features.as_ref().and_then(|f| f.first()).map_or(0, Vec::len)
    }

    /// Node features, or `None` when the graph carries none (treated as zero).
    pub fn node_features(&self, node: NodeId) -> Option<&[f64]> {
        self.node_features.as_ref().map(|f| f[node].as_slice())
    }

    /// Events incident to `node` with `ts < before`, most recent first
    /// (ties broken by descending id).
    pub fn incident_before(&self, node: NodeId, before: f64) -> impl Iterator<Item = &Event> + '_ {
        let idx = &self.incidence[node];
        let end = idx.partition_point(|&p| self.events[p].ts < before);
        idx[..end].iter().rev().map(move |&p| &self.events[p])
    }
}

/// One occurrence of an event inside a computational subgraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgraphEvent {
    pub event: Event,
    /// Distance from the target, starting at 1.
    pub hop: usize,
    /// Time at which the event is observed on its path toward the target.
    pub t_v: f64,
    /// Node through which the event was reached.
    pub anchor: NodeId,
    /// Indices of the hop-1-lower occurrences this event was expanded from;
    /// empty for hop-1 events.
    pub parents: Vec<usize>,
    /// Set when the source-node player of this event is masked.
    pub src_feat_zeroed: bool,
}

impl SubgraphEvent {
    /// The endpoint that sends this event's message toward the target.
    pub fn source(&self) -> NodeId {
        self.event.other(self.anchor)
    }
}

/// The time-restricted L-hop neighbourhood used to predict for a target at `pred_time`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComputationalSubgraph {
    pub target: NodeId,
    /// Second root for pair (link) predictions.
    pub partner: Option<NodeId>,
    pub pred_time: f64,
    pub hops: usize,
    pub events: Vec<SubgraphEvent>,
    pub nodes: BTreeSet<NodeId>,
    /// Raw node features of the reached nodes; empty when the graph has none.
    pub node_features: BTreeMap<NodeId, Vec<f64>>,
}

impl ComputationalSubgraph {
    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn roots(&self) -> impl Iterator<Item = NodeId> {
        std::iter::once(self.target).chain(self.partner)
    }

    /// Indices of the events expanded from event `idx`.
    pub fn children(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        self.events.iter().enumerate().filter(move |(_, e)| e.parents.contains(&idx)).map(|(i, _)| i)
    }

    pub fn position_of(&self, event_id: u64) -> Option<usize> {
        self.events.iter().position(|e| e.event.id == event_id)
    }
}

/// Optional per-node neighbour cap, keeping the most recent events.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct NeighborCap(pub Option<usize>);

pub fn extract_subgraph(
    g: &TemporalGraph,
    target: NodeId,
    t: f64,
    hops: usize,
    cap: NeighborCap,
) -> Result<ComputationalSubgraph> {
    extract(g, target, None, t, hops, cap)
}

/// Union of the computational subgraphs of both endpoints of a candidate link.
pub fn extract_pair_subgraph(
    g: &TemporalGraph,
    src: NodeId,
    dst: NodeId,
    t: f64,
    hops: usize,
    cap: NeighborCap,
) -> Result<ComputationalSubgraph> {
    extract(g, src, Some(dst), t, hops, cap)
}

fn extract(
    g: &TemporalGraph,
    target: NodeId,
    partner: Option<NodeId>,
    t: f64,
    hops: usize,
    cap: NeighborCap,
) -> Result<ComputationalSubgraph> {
    for n in std::iter::once(target).chain(partner) {
        if n >= g.num_nodes() {
            return Err(Error::UnknownNode(n));
        }
    }
    if hops == 0 {
        return Err(Error::InvalidArgument("hop count must be at least 1".into()));
    }
    if !t.is_finite() {
        return Err(Error::InvalidArgument(format!("prediction time {t} is not finite")));
    }

    let mut events: Vec<SubgraphEvent> = Vec::new();
    let mut nodes: BTreeSet<NodeId> = std::iter::once(target).chain(partner).collect();
    // (event id, hop, t_v bits) -> position
    let mut seen: HashMap<(u64, usize, u64), usize> = HashMap::new();
    let mut frontier: Vec<(NodeId, f64, Option<usize>)> =
        std::iter::once(target).chain(partner).map(|n| (n, t, None)).collect();

    for hop in 1..=hops {
        let mut next = Vec::new();
        for &(node, bound, parent) in &frontier {
            let limit = cap.0.unwrap_or(usize::MAX);
            for ev in g.incident_before(node, bound).take(limit) {
                let key = (ev.id, hop, bound.to_bits());
                if let Some(&pos) = seen.get(&key) {
                    if let Some(p) = parent {
                        if !events[pos].parents.contains(&p) {
                            events[pos].parents.push(p);
                        }
                    }
                    continue;
                }
                let pos = events.len();
                seen.insert(key, pos);
                let far = ev.other(node);
                nodes.insert(far);
                events.push(SubgraphEvent {
                    event: ev.clone(),
                    hop,
                    t_v: bound,
                    anchor: node,
                    parents: parent.into_iter().collect(),
                    src_feat_zeroed: false,
                });
                next.push((far, ev.ts, Some(pos)));
            }
        }
        frontier = next;
    }

    let node_features = nodes
        .iter()
        .filter_map(|&n| g.node_features(n).map(|f| (n, f.to_vec())))
        .collect();
    Ok(ComputationalSubgraph { target, partner, pred_time: t, hops, events, nodes, node_features })
}

/// Options for [`load_events`].
#[derive(Debug, Clone, Default)]
pub struct LoadOptions<'a> {
    /// Explicit node count; otherwise inferred from the largest id seen.
    pub num_nodes: Option<usize>,
    /// Sidecar CSV with `node_id,g_0,...,g_{m-1}` rows.
    pub node_features: Option<&'a Path>,
}

/// Reads an event CSV with header `src,dst,ts,label,f_0,...,f_{d-1}`.
///
/// Event ids are assigned from the 0-based row order in the file.
pub fn load_events(path: &Path, opts: &LoadOptions<'_>) -> Result<TemporalGraph> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let header = rdr.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected = ["src", "dst", "ts", "label"];
    if header.len() < 4 || header.iter().take(4).zip(expected).any(|(h, x)| h != x) {
        return Err(Error::Parse {
            path: path.into(),
            line: 1,
            msg: format!("header must start with src,dst,ts,label, found {:?}", header.iter().collect::<Vec<_>>()),
        });
    }
    let feature_dim = header.len() - 4;

    let mut events = Vec::new();
    let mut max_node = None::<usize>;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(row as u64 + 2, |p| p.line());
        let perr = |msg: String| Error::Parse { path: path.into(), line, msg };
        if rec.len() != header.len() {
            return Err(perr(format!("expected {} columns, found {}", header.len(), rec.len())));
        }
        let node = |i: usize| -> Result<usize> {
            rec[i].parse().map_err(|_| perr(format!("invalid node id {:?}", &rec[i])))
        };
        let real = |i: usize| -> Result<f64> {
            rec[i].parse().map_err(|_| perr(format!("invalid number {:?} in column {}", &rec[i], &header[i])))
        };
        let (src, dst) = (node(0)?, node(1)?);
        let ts = real(2)?;
        if !ts.is_finite() {
            return Err(perr(format!("non-finite timestamp {ts}")));
        }
        let label = real(3)?;
        let features = (4..rec.len()).map(real).collect::<Result<Vec<_>>>()?;
        max_node = max_node.max(Some(src.max(dst)));
        events.push(Event { id: row as u64, src, dst, ts, label, features });
    }

    let sidecar = match opts.node_features {
        Some(p) => Some(load_node_features(p)?),
        None => None,
    };
    if let Some(rows) = &sidecar {
        if let Some(m) = rows.keys().next_back() {
            max_node = max_node.max(Some(*m));
        }
    }

    let num_nodes = match (opts.num_nodes, max_node) {
        (Some(n), Some(m)) if m >= n => return Err(Error::UnknownNode(m)),
        (Some(n), _) => n,
        (None, Some(m)) => m + 1,
        (None, None) => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: "no events and no node count given".into(),
            })
        }
    };
    let g = TemporalGraph::new(num_nodes, feature_dim, events)?;
    match sidecar {
        Some(rows) => {
            let dim = rows.values().next().map_or(0, Vec::len);
            let mut dense = vec![vec![0.0; dim]; num_nodes];
            for (n, f) in rows {
                dense[n] = f;
            }
            g.with_node_features(dense)
        }
        None => Ok(g),
    }
}

fn load_node_features(path: &Path) -> Result<BTreeMap<usize, Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let width = rdr.headers().map_err(|e| csv_error(path, e))?.len();
    let mut out = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let line = rec.position().map_or(row as u64 + 2, |p| p.line());
        let perr = |msg: String| Error::Parse { path: path.into(), line, msg };
        if rec.len() != width {
            return Err(perr(format!("expected {width} columns, found {}", rec.len())));
        }
        let id: usize = rec[0].parse().map_err(|_| perr(format!("invalid node id {:?}", &rec[0])))?;
        let f = (1..rec.len())
            .map(|i| rec[i].parse::<f64>().map_err(|_| perr(format!("invalid number {:?}", &rec[i]))))
            .collect::<Result<Vec<_>>>()?;
        out.insert(id, f);
    }
    Ok(out)
}

/// Writes `g` in the format read by [`load_events`], in `(ts, id)` order.
pub fn write_events(g: &TemporalGraph, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    let mut line = String::from("src,dst,ts,label");
    for i in 0..g.feature_dim() {
        line.push_str(&format!(",f_{i}"));
    }
    writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    for e in g.events() {
        line.clear();
        line.push_str(&format!("{},{},{},{}", e.src, e.dst, e.ts, e.label));
        for x in &e.features {
            line.push_str(&format!(",{x}"));
        }
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse { path: path.into(), line, msg: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: u64, src: NodeId, dst: NodeId, ts: f64) -> Event {
        Event { id, src, dst, ts, label: 0.0, features: vec![] }
    }

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn parses_three_rows() {
        let f = write("src,dst,ts,label,f_0,f_1\n0,1,3.0,0,1,2\n1,2,1.5,1,0.5,0\n2,0,2.0,0,0,0\n");
        let g = load_events(f.path(), &LoadOptions::default()).unwrap();
        assert_eq!(g.events().len(), 3);
        assert_eq!(g.feature_dim(), 2);
        assert_eq!(g.num_nodes(), 3);
        let ts: Vec<f64> = g.events().iter().map(|e| e.ts).collect();
        assert_eq!(ts, vec![1.5, 2.0, 3.0]);
        assert_eq!(g.events()[0].id, 1);
    }

    #[test]
    fn empty_event_section() {
        let f = write("src,dst,ts,label,f_0\n");
        let err = load_events(f.path(), &LoadOptions::default()).unwrap_err();
        assert!(err.to_string().contains("no node count"), "{err}");
        let g = load_events(f.path(), &LoadOptions { num_nodes: Some(4), ..Default::default() }).unwrap();
        assert_eq!(g.events().len(), 0);
        assert_eq!(g.feature_dim(), 1);
    }

    #[test]
    fn arity_violation_names_line() {
        let f = write("src,dst,ts,label,f_0,f_1\n0,1,1,0,1,2\n0,1,2,0,1,2,3\n");
        let err = load_events(f.path(), &LoadOptions::default()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn non_finite_timestamp_rejected() {
        let f = write("src,dst,ts,label\n0,1,inf,0\n");
        assert!(load_events(f.path(), &LoadOptions::default()).unwrap_err().to_string().contains("non-finite"));
    }

    #[test]
    fn sidecar_node_features() {
        let ev = write("src,dst,ts,label\n0,1,1,0\n");
        let nf = write("node_id,g_0,g_1\n1,0.5,2\n3,1,1\n");
        let g = load_events(ev.path(), &LoadOptions { num_nodes: None, node_features: Some(nf.path()) }).unwrap();
        assert_eq!(g.num_nodes(), 4);
        assert_eq!(g.node_features(1), Some(&[0.5, 2.0][..]));
        assert_eq!(g.node_features(0), Some(&[0.0, 0.0][..]));
    }

    #[test]
    fn single_event_and_boundary() {
        let g = TemporalGraph::new(2, 0, vec![ev(0, 0, 1, 5.0)]).unwrap();
        let sg = extract_subgraph(&g, 0, 6.0, 1, NeighborCap::default()).unwrap();
        assert_eq!(sg.events.len(), 1);
        assert_eq!(sg.events[0].hop, 1);
        assert_eq!(sg.events[0].t_v, 6.0);
        let sg = extract_subgraph(&g, 0, 5.0, 1, NeighborCap::default()).unwrap();
        assert!(sg.events.is_empty());
        assert!(sg.nodes.contains(&0));
    }

    #[test]
    fn two_hop_chain() {
        // A=0, B=1, C=2
        let g = TemporalGraph::new(3, 0, vec![ev(0, 0, 1, 4.0), ev(1, 1, 2, 3.0)]).unwrap();
        let sg = extract_subgraph(&g, 0, 5.0, 2, NeighborCap::default()).unwrap();
        let got: Vec<(u64, usize, f64)> = sg.events.iter().map(|e| (e.event.id, e.hop, e.t_v)).collect();
        assert_eq!(got, vec![(0, 1, 5.0), (1, 2, 4.0)]);
        assert_eq!(sg.events[1].parents, vec![0]);
        assert_eq!(sg.events[1].anchor, 1);
        assert_eq!(sg.events[1].source(), 2);
    }

    #[test]
    fn cap_keeps_most_recent() {
        let g = TemporalGraph::new(4, 0, vec![ev(0, 0, 1, 1.0), ev(1, 0, 2, 2.0), ev(2, 0, 3, 3.0)]).unwrap();
        let sg = extract_subgraph(&g, 0, 10.0, 1, NeighborCap(Some(2))).unwrap();
        let ids: Vec<u64> = sg.events.iter().map(|e| e.event.id).collect();
        assert_eq!(ids, vec![2, 1]);
    }

    #[test]
    fn errors() {
        let g = TemporalGraph::new(2, 0, vec![ev(0, 0, 1, 1.0)]).unwrap();
        assert!(matches!(extract_subgraph(&g, 7, 1.0, 1, NeighborCap::default()), Err(Error::UnknownNode(7))));
        assert!(extract_subgraph(&g, 0, 1.0, 0, NeighborCap::default()).is_err());
    }

    #[test]
    fn duplicate_paths_merge_parents() {
        // two parallel 0-1 events at the same ts lead to the same older 1-2 event
        let g = TemporalGraph::new(3, 0, vec![ev(0, 0, 1, 4.0), ev(1, 1, 0, 4.0), ev(2, 1, 2, 3.0)]).unwrap();
        let sg = extract_subgraph(&g, 0, 5.0, 2, NeighborCap::default()).unwrap();
        let hop2: Vec<&SubgraphEvent> = sg.events.iter().filter(|e| e.hop == 2).collect();
        // the 1-2 event at t_v = 4 appears once with both parents
        let e2: Vec<_> = hop2.iter().filter(|e| e.event.id == 2).collect();
        assert_eq!(e2.len(), 1);
        assert_eq!(e2[0].parents.len(), 2);
    }
}
