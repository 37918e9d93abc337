//! Synthetic timestamp-regression benchmark.
//!
//! Each instance is a pair of fresh nodes A and B observed at time `t`. Both
//! get 0..=max_children neighbours with events at `t - 1`, and each of those
//! neighbours gets 0..=max_children events at `t - 2`. B additionally always
//! has an event at `t - 1` with a dedicated node H that has no earlier events.
//! All node and event features are zero; the label is `t` itself.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ctdg::{Event, NodeId, TemporalGraph};
use crate::dataset::{Dataset, Instance, Task};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Number of distinct prediction times.
    pub timestamps: usize,
    /// Instances generated per prediction time.
    pub per_ts: usize,
    /// Upper bound (inclusive) of the uniform branching count.
    pub max_children: usize,
    /// First prediction time.
    pub t_start: f64,
    /// Spacing between prediction times.
    pub t_step: f64,
    /// Width of the (all-zero) event feature vectors.
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig { timestamps: 50, per_ts: 1000, max_children: 3, t_start: 2.0, t_step: 1.0, feature_dim: 2, seed: 0 }
    }
}

impl SynthConfig {
    pub fn prediction_times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.timestamps).map(|i| self.t_start + i as f64 * self.t_step)
    }
}

struct Pending {
    src: NodeId,
    dst: NodeId,
    ts: f64,
}

pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    if cfg.timestamps == 0 || cfg.per_ts == 0 {
        return Err(Error::InvalidArgument("timestamps and per_ts must be positive".into()));
    }
    if !(cfg.t_start.is_finite() && cfg.t_step.is_finite()) {
        return Err(Error::InvalidArgument("non-finite time grid".into()));
    }
    let mut r = rng::rng(cfg.seed);
    let mut next_node = 0usize;
    let mut fresh = || {
        next_node += 1;
        next_node - 1
    };
    let mut pending: Vec<Pending> = Vec::new();
    // (a, b, h, index of the B-H event in `pending`, t)
    let mut raw_instances = Vec::with_capacity(cfg.timestamps * cfg.per_ts);

    for t in cfg.prediction_times() {
        for _ in 0..cfg.per_ts {
            let a = fresh();
            let b = fresh();
            for root in [a, b] {
                for _ in 0..r.gen_range(0..=cfg.max_children) {
                    let c = fresh();
                    pending.push(Pending { src: c, dst: root, ts: t - 1.0 });
                    for _ in 0..r.gen_range(0..=cfg.max_children) {
                        let d = fresh();
                        pending.push(Pending { src: d, dst: c, ts: t - 2.0 });
                    }
                }
            }
            let h = fresh();
            let bh = pending.len();
            pending.push(Pending { src: h, dst: b, ts: t - 1.0 });
            raw_instances.push((a, b, h, bh, t));
        }
    }

    // ids follow (ts, creation order) so that a CSV round trip preserves them
    let mut order: Vec<usize> = (0..pending.len()).collect();
    order.sort_by(|&x, &y| pending[x].ts.total_cmp(&pending[y].ts).then(x.cmp(&y)));
    let mut id_of = vec![0u64; pending.len()];
    for (id, &p) in order.iter().enumerate() {
        id_of[p] = id as u64;
    }
    let events = order
        .iter()
        .map(|&p| Event {
            id: id_of[p],
            src: pending[p].src,
            dst: pending[p].dst,
            ts: pending[p].ts,
            label: 0.0,
            features: vec![0.0; cfg.feature_dim],
        })
        .collect();
    let graph = TemporalGraph::new(next_node, cfg.feature_dim, events)?;
    let instances = raw_instances
        .into_iter()
        .enumerate()
        .map(|(i, (a, b, h, bh, t))| Instance {
            id: i as u64,
            src: a,
            dst: Some(b),
            t,
            label: t,
            marker_node: Some(h),
            marker_event: Some(id_of[bh]),
        })
        .collect();
    Ok(Dataset { graph, instances, task: Task::Regression })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_count_and_marker_event() {
        let cfg = SynthConfig { timestamps: 5, per_ts: 10, seed: 3, ..Default::default() };
        let ds = generate_synthetic(&cfg).unwrap();
        assert_eq!(ds.instances.len(), 50);
        for inst in &ds.instances {
            let h = inst.marker_node.unwrap();
            let bh = ds.graph.event_by_id(inst.marker_event.unwrap()).unwrap();
            assert_eq!((bh.src, bh.dst, bh.ts), (h, inst.dst.unwrap(), inst.t - 1.0));
            let touching_h: Vec<_> = ds.graph.events().iter().filter(|e| e.touches(h)).collect();
            assert_eq!(touching_h.len(), 1);
            assert_eq!(inst.label, inst.t);
        }
        assert!(ds.graph.events().iter().all(|e| e.features.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn deterministic_under_seed() {
        let cfg = SynthConfig { timestamps: 3, per_ts: 7, seed: 11, ..Default::default() };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a.graph.events(), b.graph.events());
        assert_eq!(a.instances, b.instances);
    }

    #[test]
    fn default_grid_has_fifty_times() {
        let cfg = SynthConfig::default();
        let ts: Vec<f64> = cfg.prediction_times().collect();
        assert_eq!(ts.len(), 50);
        assert_eq!((ts[0], ts[49]), (2.0, 51.0));
        assert_eq!(cfg.timestamps * cfg.per_ts, 50_000);
    }
}
