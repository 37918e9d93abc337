//! Average events and masked subgraphs.
//!
//! A masked event is either swapped for its *average event* (same endpoints,
//! timestamp `t_v - mean_delta`, mean feature vector) or deleted outright,
//! depending on [`MaskMode`]. Feature-level masking replaces individual parts
//! of a single event.

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::ctdg::{ComputationalSubgraph, Event, SubgraphEvent, TemporalGraph};
use crate::{Error, Result};

/// Dataset-wide statistics used to build average events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AverageEventStats {
    /// Column-wise mean of all event feature vectors.
    pub mean_features: Vec<f64>,
    /// Mean gap between consecutive events in timestamp order.
    pub mean_delta: f64,
}

pub fn compute_average_stats(g: &TemporalGraph) -> Result<AverageEventStats> {
    let events = g.events();
    if events.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let n = events.len() as f64;
    let mut mean_features = vec![0.0; g.feature_dim()];
    for e in events {
        for (m, x) in mean_features.iter_mut().zip(&e.features) {
            *m += x;
        }
    }
    mean_features.iter_mut().for_each(|m| *m /= n);
    let mean_delta = if events.len() < 2 {
        0.0
    } else {
        let gaps: f64 = events.windows(2).map(|w| w[1].ts - w[0].ts).sum();
        gaps / (n - 1.0)
    };
    Ok(AverageEventStats { mean_features, mean_delta })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaskMode {
    /// Masked events become average events.
    #[default]
    Replace,
    /// Masked events, and deeper events only reachable through them, are deleted.
    Remove,
}

impl std::str::FromStr for MaskMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "replace" => Ok(MaskMode::Replace),
            "remove" => Ok(MaskMode::Remove),
            other => Err(Error::InvalidArgument(format!("unknown mask mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for MaskMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MaskMode::Replace => "replace",
            MaskMode::Remove => "remove",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskOptions {
    /// Zero the source node of events replaced by their average event.
    pub zero_source_on_replace: bool,
}

impl Default for MaskOptions {
    fn default() -> Self {
        MaskOptions { zero_source_on_replace: true }
    }
}

/// The average event of `e`: same endpoints and id, timestamp `t_v - mean_delta`,
/// features `mean_features`.
pub fn average_event(e: &SubgraphEvent, stats: &AverageEventStats) -> Event {
    Event {
        id: e.event.id,
        src: e.event.src,
        dst: e.event.dst,
        ts: e.t_v - stats.mean_delta,
        label: e.event.label,
        features: stats.mean_features.clone(),
    }
}

/// Keeps the events in `present` and masks all others according to `mode`.
pub fn mask_events(
    sg: &ComputationalSubgraph,
    present: &Coalition,
    stats: &AverageEventStats,
    mode: MaskMode,
    opts: MaskOptions,
) -> ComputationalSubgraph {
    debug_assert_eq!(present.len(), sg.events.len());
    match mode {
        MaskMode::Replace => {
            let mut out = sg.clone();
            for (i, se) in out.events.iter_mut().enumerate() {
                if !present.contains(i) {
                    se.event = average_event(se, stats);
                    if opts.zero_source_on_replace {
                        se.src_feat_zeroed = true;
                    }
                }
            }
            out
        }
        MaskMode::Remove => remove_events(sg, present),
    }
}

/// Indices that survive removal of everything outside `present`: an event is
/// kept when it is present and, unless it is a hop-1 event, at least one of
/// its parents survives.
pub fn surviving_events(sg: &ComputationalSubgraph, present: &Coalition) -> Vec<bool> {
    let mut alive = vec![false; sg.events.len()];
    // parents always precede their children in extraction order
    for (i, se) in sg.events.iter().enumerate() {
        alive[i] = present.contains(i) && (se.parents.is_empty() || se.parents.iter().any(|&p| alive[p]));
    }
    alive
}

fn remove_events(sg: &ComputationalSubgraph, present: &Coalition) -> ComputationalSubgraph {
    let alive = surviving_events(sg, present);
    let mut remap = vec![usize::MAX; sg.events.len()];
    let mut events = Vec::with_capacity(sg.events.len());
    for (i, se) in sg.events.iter().enumerate() {
        if alive[i] {
            remap[i] = events.len();
            let mut kept = se.clone();
            kept.parents = se.parents.iter().filter(|&&p| alive[p]).map(|&p| remap[p]).collect();
            events.push(kept);
        }
    }
    // Source nodes of deleted events only reach the target through those
    // events, so their features leave the computation with them.
    let nodes = sg
        .roots()
        .chain(events.iter().flat_map(|e| [e.event.src, e.event.dst]))
        .collect::<std::collections::BTreeSet<_>>();
    let node_features = sg.node_features.iter().filter(|(n, _)| nodes.contains(n)).map(|(n, f)| (*n, f.clone())).collect();
    ComputationalSubgraph { events, nodes, node_features, ..sg.clone() }
}

/// One of the `|F'| + 2` feature-level players of an event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum FeaturePlayer {
    Feature(usize),
    Timestamp,
    SourceNode,
}

impl FeaturePlayer {
    /// All players of an event with `feature_dim` event features, in index order.
    pub fn all(feature_dim: usize) -> Vec<FeaturePlayer> {
        (0..feature_dim)
            .map(FeaturePlayer::Feature)
            .chain([FeaturePlayer::Timestamp, FeaturePlayer::SourceNode])
            .collect()
    }

    /// Position inside a feature coalition over `feature_dim + 2` players.
    pub fn index(self, feature_dim: usize) -> usize {
        match self {
            FeaturePlayer::Feature(i) => i,
            FeaturePlayer::Timestamp => feature_dim,
            FeaturePlayer::SourceNode => feature_dim + 1,
        }
    }
}

impl std::fmt::Display for FeaturePlayer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            FeaturePlayer::Feature(i) => write!(f, "feature[{i}]"),
            FeaturePlayer::Timestamp => f.write_str("timestamp"),
            FeaturePlayer::SourceNode => f.write_str("source_node"),
        }
    }
}

/// Masks the parts of event `e` whose players are absent from `present`.
///
/// `present` ranges over `feature_dim + 2` players laid out as in
/// [`FeaturePlayer::index`].
pub fn mask_event_features(
    sg: &ComputationalSubgraph,
    e: usize,
    present: &Coalition,
    stats: &AverageEventStats,
) -> Result<ComputationalSubgraph> {
    let mut out = sg.clone();
    apply_feature_mask(&mut out, e, present, stats)?;
    Ok(out)
}

pub(crate) fn apply_feature_mask(
    sg: &mut ComputationalSubgraph,
    e: usize,
    present: &Coalition,
    stats: &AverageEventStats,
) -> Result<()> {
    let players = sg.events.len();
    let se = sg.events.get_mut(e).ok_or(Error::InvalidPlayer { index: e, players })?;
    let d = se.event.features.len();
    if present.len() != d + 2 {
        return Err(Error::InvalidArgument(format!(
            "feature coalition over {} players, event has {}",
            present.len(),
            d + 2
        )));
    }
    for i in 0..d {
        if !present.contains(i) {
            se.event.features[i] = stats.mean_features[i];
        }
    }
    if !present.contains(FeaturePlayer::Timestamp.index(d)) {
        se.event.ts = se.t_v - stats.mean_delta;
    }
    if !present.contains(FeaturePlayer::SourceNode.index(d)) {
        se.src_feat_zeroed = true;
    }
    Ok(())
}

/// Subgraph for a mix of whole-event and feature-level players.
///
/// Events in `present` are kept, each `(e, features)` entry of `partial`
/// overrides event `e`: with no feature player present the event counts as
/// absent, with all present it is kept untouched, otherwise it is kept with
/// its absent parts replaced. Everything else is masked according to `mode`.
pub fn mask_players(
    sg: &ComputationalSubgraph,
    present: &Coalition,
    partial: &[(usize, &Coalition)],
    stats: &AverageEventStats,
    mode: MaskMode,
    opts: MaskOptions,
) -> Result<ComputationalSubgraph> {
    let mut keep = present.clone();
    let mut out = sg.clone();
    for &(e, features) in partial {
        if e >= sg.events.len() {
            return Err(Error::InvalidPlayer { index: e, players: sg.events.len() });
        }
        if features.is_empty() {
            keep.remove(e);
        } else {
            keep.insert(e);
            if !features.is_full() {
                apply_feature_mask(&mut out, e, features, stats)?;
            }
        }
    }
    Ok(mask_events(&out, &keep, stats, mode, opts))
}
