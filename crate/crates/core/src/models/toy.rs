//! An untrained two-layer temporal attention model with TGAT-style padding.
//!
//! Every node aggregates a fixed number of neighbour slots. Slots without a real
//! event are filled with an all-zero entry whose timestamp is 0, so the time
//! encoding of a padded slot is that of the absolute observation time. Padded
//! slots get a large negative attention score; when a node has no real
//! neighbour at all the softmax is uniform over identical padded entries and
//! the node embedding ends up carrying its absolute observation time.
//!
//! Projection weights are drawn once from `weight_seed` in `[0.1, 1.0)`. All
//! weights being positive makes that leak a strictly increasing function of
//! time on the range where the time encoding is monotone.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::ctdg::{ComputationalSubgraph, NodeId};
use crate::models::Model;
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModelConfig {
    pub layers: usize,
    /// Padded neighbour slots per node.
    pub slots: usize,
    /// Frequency of the time encoding `1 - cos(time_scale * delta)`.
    pub time_scale: f64,
    pub embed_dim: usize,
    /// Score subtracted from padded slots before the softmax.
    pub padding_penalty: f64,
    pub weight_seed: u64,
    pub feature_dim: usize,
    pub node_feature_dim: usize,
}

impl Default for ToyModelConfig {
    fn default() -> Self {
        ToyModelConfig {
            layers: 2,
            slots: 3,
            time_scale: 0.05,
            embed_dim: 4,
            padding_penalty: 20.0,
            weight_seed: 0,
            feature_dim: 2,
            node_feature_dim: 0,
        }
    }
}

impl ToyModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slots == 0 || self.layers == 0 || self.embed_dim == 0 {
            return Err(Error::InvalidArgument("layers, slots and embed_dim must be positive".into()));
        }
        if !(self.time_scale.is_finite() && self.time_scale > 0.0) {
            return Err(Error::InvalidArgument(format!("time_scale {} must be positive", self.time_scale)));
        }
        Ok(())
    }
}

type Matrix = Vec<Vec<f64>>;

#[derive(Debug, Clone)]
struct Layer {
    w_self: Matrix,
    w_nb: Matrix,
    w_feat: Matrix,
    w_time: Vec<f64>,
    att_time: f64,
    att_feat: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct ToyModel {
    cfg: ToyModelConfig,
    w_node: Matrix,
    layers: Vec<Layer>,
    w_out: Vec<f64>,
    bias: f64,
}

/// One neighbour slot as seen by the attention layer.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotEntry {
    pub neighbor: Vec<f64>,
    pub features: Vec<f64>,
    pub delta: f64,
    pub padded: bool,
}

/// Attention-weighted sum of slot entries, split into its three parts.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub neighbor: Vec<f64>,
    pub features: Vec<f64>,
    pub time: f64,
}

impl ToyModel {
    pub fn new(cfg: ToyModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut r = rng::rng(cfg.weight_seed);
        let d = cfg.embed_dim;
        let mut draw = || r.gen_range(0.1..1.0);
        let mat = |rows: usize, cols: usize, draw: &mut dyn FnMut() -> f64| -> Matrix {
            (0..rows).map(|_| (0..cols).map(|_| draw()).collect()).collect()
        };
        let w_node = mat(d, cfg.node_feature_dim, &mut draw);
        let mut layers = Vec::with_capacity(cfg.layers);
        for _ in 0..cfg.layers {
            let w_self = mat(d, d, &mut draw);
            let w_nb = mat(d, d, &mut draw);
            let w_feat = mat(d, cfg.feature_dim, &mut draw);
            let w_time = (0..d).map(|_| draw()).collect();
            let att_time = draw();
            let att_feat = (0..cfg.feature_dim).map(|_| draw()).collect();
            layers.push(Layer { w_self, w_nb, w_feat, w_time, att_time, att_feat });
        }
        let w_out = (0..d).map(|_| draw()).collect();
        let bias = draw();
        Ok(ToyModel { cfg, w_node, layers, w_out, bias })
    }

    pub fn config(&self) -> &ToyModelConfig {
        &self.cfg
    }

    pub fn time_encoding(&self, delta: f64) -> f64 {
        1.0 - (self.cfg.time_scale * delta).cos()
    }

    /// Softmax attention over `entries` for layer `layer` (1-based).
    pub fn aggregate(&self, layer: usize, entries: &[SlotEntry]) -> Aggregate {
        let w = &self.layers[layer - 1];
        let scores: Vec<f64> = entries
            .iter()
            .map(|e| {
                let s = w.att_time * self.time_encoding(e.delta) + dot(&w.att_feat, &e.features);
                if e.padded {
                    s - self.cfg.padding_penalty
                } else {
                    s
                }
            })
            .collect();
        let alpha = softmax(&scores);
        let mut agg = Aggregate {
            neighbor: vec![0.0; self.cfg.embed_dim],
            features: vec![0.0; self.cfg.feature_dim],
            time: 0.0,
        };
        for (a, e) in alpha.iter().zip(entries) {
            axpy(&mut agg.neighbor, *a, &e.neighbor);
            axpy(&mut agg.features, *a, &e.features);
            agg.time += a * self.time_encoding(e.delta);
        }
        agg
    }

    fn padded_entry(&self, tau: f64) -> SlotEntry {
        SlotEntry {
            neighbor: vec![0.0; self.cfg.embed_dim],
            features: vec![0.0; self.cfg.feature_dim],
            delta: tau,
            padded: true,
        }
    }

    /// Builds the slot list of a node from its real entries, padding up to `slots`.
    pub fn slots_for(&self, tau: f64, mut real: Vec<SlotEntry>) -> Vec<SlotEntry> {
        while real.len() < self.cfg.slots {
            real.push(self.padded_entry(tau));
        }
        real
    }

    fn raw_embedding(&self, sg: &ComputationalSubgraph, node: NodeId) -> Vec<f64> {
        match sg.node_features.get(&node) {
            Some(x) if !x.is_empty() => matvec(&self.w_node, x),
            _ => vec![0.0; self.cfg.embed_dim],
        }
    }

    fn embed(&self, sg: &ComputationalSubgraph, children: &[Vec<usize>], node: NodeId, tau: f64, slot_list: &[usize], layer: usize) -> Vec<f64> {
        let h0 = self.raw_embedding(sg, node);
        if layer == 0 {
            return h0;
        }
        let real = slot_list
            .iter()
            .map(|&c| {
                let se = &sg.events[c];
                let neighbor = if se.src_feat_zeroed {
                    vec![0.0; self.cfg.embed_dim]
                } else {
                    self.embed(sg, children, se.source(), se.event.ts, &children[c], layer - 1)
                };
                SlotEntry { neighbor, features: se.event.features.clone(), delta: se.t_v - se.event.ts, padded: false }
            })
            .collect();
        let agg = self.aggregate(layer, &self.slots_for(tau, real));
        let w = &self.layers[layer - 1];
        let mut h = matvec(&w.w_self, &h0);
        add(&mut h, &matvec(&w.w_nb, &agg.neighbor));
        add(&mut h, &matvec(&w.w_feat, &agg.features));
        axpy(&mut h, agg.time, &w.w_time);
        h
    }
}

impl Model for ToyModel {
    fn predict(&self, sg: &ComputationalSubgraph) -> Result<f64> {
        if let Some(se) = sg.events.iter().find(|e| e.event.features.len() != self.cfg.feature_dim) {
            return Err(Error::Model(format!(
                "event {} has {} features, model expects {}",
                se.event.id,
                se.event.features.len(),
                self.cfg.feature_dim
            )));
        }
        let mut children = vec![Vec::new(); sg.events.len()];
        for (i, se) in sg.events.iter().enumerate() {
            for &p in &se.parents {
                children[p].push(i);
            }
        }
        let mut logit = self.bias;
        for root in sg.roots() {
            let hop1: Vec<usize> = sg
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.parents.is_empty() && e.anchor == root)
                .map(|(i, _)| i)
                .collect();
            let h = self.embed(sg, &children, root, sg.pred_time, &hop1, self.cfg.layers);
            logit += dot(&self.w_out, &h);
        }
        Ok(logit)
    }
}

pub fn toy_attention_forward(sg: &ComputationalSubgraph, cfg: &ToyModelConfig) -> Result<f64> {
    ToyModel::new(cfg.clone())?.predict(sg)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn matvec(m: &Matrix, x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

fn add(acc: &mut [f64], x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(a, b)| *a += b);
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    acc.iter_mut().zip(x).for_each(|(y, b)| *y += a * b);
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
