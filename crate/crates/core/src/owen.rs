//! Feature-level explanations.
//!
//! The explainer runs KernelSHAP over the feature players of one event, where
//! the value of a feature coalition is a Monte Carlo estimate of the event's
//! Shapley value when it carries only those features. The oracles here compute
//! the same quantities exactly for small games.

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::game::{CoalitionLaw, EventGame, FeatureGame};
use crate::masking::FeaturePlayer;
use crate::rng;
use crate::shapley::{self, CoalitionSample, KernelConfig};
use crate::{Error, Result};

/// Largest flat game `owen_exact` will enumerate.
pub const OWEN_EXACT_LIMIT: usize = 20;
/// Largest event or feature player count for `owen_two_step_exact`.
pub const TWO_STEP_LIMIT: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwenConfig {
    /// Event coalitions per feature-coalition value.
    pub k: usize,
    /// Feature coalitions evaluated, the full one included; `None` means
    /// `2 |F| + 2048`. Duplicate draws are evaluated once.
    pub l: Option<usize>,
    pub seed: u64,
    pub law: CoalitionLaw,
    pub paired_sampling: bool,
}

impl Default for OwenConfig {
    fn default() -> Self {
        OwenConfig { k: 550, l: None, seed: 0, law: CoalitionLaw::default(), paired_sampling: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlayerValue {
    #[serde(flatten)]
    pub player: FeaturePlayer,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureExplanation {
    pub event_id: u64,
    pub players: Vec<PlayerValue>,
    /// Monte Carlo estimate of the event's own Shapley value; the `omega`
    /// values sum to it.
    pub phi_event_estimate: f64,
    /// Event coalitions drawn.
    pub k: usize,
    /// Distinct feature coalitions evaluated, including the full one.
    pub l: usize,
    pub seed: u64,
    pub rank_deficient: bool,
}

impl FeatureExplanation {
    pub fn omega(&self) -> Vec<f64> {
        self.players.iter().map(|p| p.omega).collect()
    }

    /// Players sorted by decreasing `|omega|`; ties keep player order.
    pub fn ranked(&self) -> Vec<&PlayerValue> {
        let mut out: Vec<&PlayerValue> = self.players.iter().collect();
        out.sort_by(|a, b| b.omega.abs().total_cmp(&a.omega.abs()));
        out
    }
}

/// Feature attributions for subgraph event `target`.
///
/// Uses `k + k * l` model calls on top of the game's baseline, where `l`
/// counts the distinct feature coalitions in the returned explanation.
pub fn explain_event_features(game: &EventGame<'_>, target: usize, cfg: &OwenConfig) -> Result<FeatureExplanation> {
    let n = game.players();
    let se = game.subgraph().events.get(target).ok_or(Error::InvalidPlayer { index: target, players: n })?;
    if cfg.l == Some(0) {
        return Err(Error::InvalidArgument("l must be at least 1".into()));
    }
    let mut r = rng::rng_for(cfg.seed, target as u64);
    let fg = FeatureGame::sample(game, target, cfg.k, cfg.law, &mut r)?;
    let p = fg.feature_players();

    // the full coalition is one of the l rows
    let kcfg = KernelConfig {
        budget: Some(cfg.l.unwrap_or(2 * p + 2048).saturating_sub(1).max(1)),
        seed: rng::derive_seed(cfg.seed, (1 << 32) | target as u64),
        paired_sampling: cfg.paired_sampling,
    };
    let mut samples = shapley::sample_coalitions(p, &kcfg);
    let mut distinct = vec![Coalition::full(p)];
    let mut slot = std::collections::HashMap::new();
    slot.insert(Coalition::full(p), 0usize);
    let positions: Vec<usize> = samples
        .iter()
        .map(|s| {
            *slot.entry(s.z.clone()).or_insert_with(|| {
                distinct.push(s.z.clone());
                distinct.len() - 1
            })
        })
        .collect();
    let values = fg.feature_values(&distinct)?;
    for (s, pos) in samples.iter_mut().zip(positions) {
        s.value = values[pos];
    }
    let phi_full = values[0];
    let sol = shapley::kernelshap_solve(&samples, p, 0.0, phi_full)?;
    let d = se.event.features.len();
    let players = FeaturePlayer::all(d).into_iter().zip(sol.phi).map(|(player, omega)| PlayerValue { player, omega }).collect();
    Ok(FeatureExplanation {
        event_id: se.event.id,
        players,
        phi_event_estimate: phi_full,
        k: cfg.k,
        l: distinct.len(),
        seed: cfg.seed,
        rank_deficient: sol.rank_deficient,
    })
}

/// Exact Owen values of a flat game over `n` players split into `groups`.
///
/// Each player's value is the expected marginal contribution over orders in
/// which every group stays contiguous.
pub fn owen_exact(mut val: impl FnMut(&Coalition) -> Result<f64>, n: usize, groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    if n > OWEN_EXACT_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: OWEN_EXACT_LIMIT });
    }
    let mut seen = vec![false; n];
    for &i in groups.iter().flatten() {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(Error::InvalidArgument(format!("player {i} is out of range or in two groups")));
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidArgument("groups must cover every player".into()));
    }
    let table = (0..1u64 << n).map(|mask| val(&Coalition::from_mask(n, mask))).collect::<Result<Vec<_>>>()?;
    let group_mask: Vec<u64> = groups.iter().map(|g| g.iter().fold(0, |m, &i| m | 1 << i)).collect();
    let m = groups.len();
    let mut out = vec![0.0; n];
    for (k, group) in groups.iter().enumerate() {
        let others: Vec<usize> = (0..m).filter(|&j| j != k).collect();
        for (pos, &i) in group.iter().enumerate() {
            let rest: Vec<usize> = group.iter().enumerate().filter(|&(q, _)| q != pos).map(|(_, &x)| x).collect();
            let mut total = 0.0;
            for r in 0u64..1 << others.len() {
                let base = others.iter().enumerate().filter(|(b, _)| r >> b & 1 == 1).fold(0, |acc, (_, &j)| acc | group_mask[j]);
                let wr = shapley::shapley_weight(m, r.count_ones() as usize);
                for t in 0u64..1 << rest.len() {
                    let inner = rest.iter().enumerate().filter(|(b, _)| t >> b & 1 == 1).fold(base, |acc, (_, &x)| acc | 1 << x);
                    let wt = shapley::shapley_weight(group.len(), t.count_ones() as usize);
                    total += wr * wt * (table[(inner | 1 << i) as usize] - table[inner as usize]);
                }
            }
            out[i] = total;
        }
    }
    Ok(out)
}

/// Owen values of a flat game computed as Shapley values of Shapley values:
/// for each group and each sub-coalition `T` of it, the exact Shapley value of
/// the group in the quotient game where it is represented by `T`, then exact
/// Shapley values over `T`.
pub fn owen_two_step(mut val: impl FnMut(&Coalition) -> Result<f64>, n: usize, groups: &[Vec<usize>]) -> Result<Vec<f64>> {
    if n > OWEN_EXACT_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: OWEN_EXACT_LIMIT });
    }
    let table = (0..1u64 << n).map(|mask| val(&Coalition::from_mask(n, mask))).collect::<Result<Vec<_>>>()?;
    let group_mask: Vec<u64> = groups.iter().map(|g| g.iter().fold(0, |m, &i| m | 1 << i)).collect();
    let m = groups.len();
    let mut out = vec![0.0; n];
    for (k, group) in groups.iter().enumerate() {
        let others: Vec<usize> = (0..m).filter(|&j| j != k).collect();
        let inner: Vec<f64> = (0u64..1 << group.len())
            .map(|t| {
                let rep = group.iter().enumerate().filter(|(b, _)| t >> b & 1 == 1).fold(0u64, |acc, (_, &x)| acc | 1 << x);
                (0u64..1 << others.len())
                    .map(|r| {
                        let base = others.iter().enumerate().filter(|(b, _)| r >> b & 1 == 1).fold(0, |acc, (_, &j)| acc | group_mask[j]);
                        shapley::shapley_weight(m, r.count_ones() as usize) * (table[(base | rep) as usize] - table[base as usize])
                    })
                    .sum()
            })
            .collect();
        for (pos, v) in shapley::shapley_from_table(&inner, group.len()).into_iter().enumerate() {
            out[group[pos]] = v;
        }
    }
    Ok(out)
}

/// Shapley values of the feature game of `target` with every coalition of
/// the other events weighted exactly.
pub fn owen_two_step_exact(game: &EventGame<'_>, target: usize) -> Result<Vec<f64>> {
    let n = game.players();
    if n > TWO_STEP_LIMIT {
        return Err(Error::TooManyPlayers { players: n, limit: TWO_STEP_LIMIT });
    }
    let fg = FeatureGame::exact(game, target)?;
    let p = fg.feature_players();
    if p > TWO_STEP_LIMIT {
        return Err(Error::TooManyPlayers { players: p, limit: TWO_STEP_LIMIT });
    }
    let all: Vec<Coalition> = (0..1u64 << p).map(|mask| Coalition::from_mask(p, mask)).collect();
    let table = fg.feature_values(&all)?;
    Ok(shapley::shapley_from_table(&table, p))
}

/// KernelSHAP rows valued by an arbitrary feature-game oracle; used to
/// separate the regression error from the Monte Carlo error.
pub fn kernel_over(val: impl Fn(&Coalition) -> Result<f64>, p: usize, cfg: &KernelConfig) -> Result<Vec<f64>> {
    let mut samples: Vec<CoalitionSample> = shapley::sample_coalitions(p, cfg);
    for s in samples.iter_mut() {
        s.value = val(&s.z)?;
    }
    Ok(shapley::kernelshap_solve(&samples, p, 0.0, val(&Coalition::full(p))?)?.phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ctdg::{extract_subgraph, ComputationalSubgraph, Event, NeighborCap, TemporalGraph};
    use crate::masking::{compute_average_stats, MaskMode};
    use crate::models::{CountingModel, FnModel, Model};

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    fn graph(n: usize) -> (TemporalGraph, ComputationalSubgraph) {
        let events = (0..n)
            .map(|i| Event {
                id: i as u64,
                src: i + 1,
                dst: 0,
                ts: i as f64 + 1.0,
                label: 0.0,
                features: vec![i as f64 * 0.5, 1.0 - i as f64],
            })
            .collect();
        let g = TemporalGraph::new(n + 1, 2, events).unwrap();
        let sg = extract_subgraph(&g, 0, 50.0, 1, NeighborCap::default()).unwrap();
        (g, sg)
    }

    fn interacting() -> impl Model {
        FnModel(|sg: &ComputationalSubgraph| {
            let mut y = 0.0;
            for e in &sg.events {
                let src = if e.src_feat_zeroed { 0.0 } else { 1.0 };
                y += e.event.features[0] * e.event.features[1] + 0.1 * e.event.ts * src;
            }
            y + (sg.events.len() as f64).sqrt()
        })
    }

    #[test]
    fn owen_with_singleton_groups_is_shapley() {
        let v = |s: &Coalition| Ok(((s.mask() * 7 + 3) % 11) as f64 * if s.is_empty() { 0.0 } else { 1.0 });
        let groups: Vec<Vec<usize>> = (0..4).map(|i| vec![i]).collect();
        let owen = owen_exact(v, 4, &groups).unwrap();
        let sh = shapley::try_shapley_exact(v, 4).unwrap();
        assert!(close(&owen, &sh, 1e-12));
        let one = owen_exact(v, 4, &[vec![0, 1, 2, 3]]).unwrap();
        assert!(close(&one, &sh, 1e-12));
    }

    #[test]
    fn owen_example_values() {
        // v = 1 iff players 0 and 2 are both present; groups {0,1} and {2}
        let v = |s: &Coalition| Ok(if s.contains(0) && s.contains(2) { 1.0 } else { 0.0 });
        let owen = owen_exact(v, 3, &[vec![0, 1], vec![2]]).unwrap();
        assert!(close(&owen, &[0.5, 0.0, 0.5], 1e-12), "{owen:?}");
        assert!(close(&owen_two_step(v, 3, &[vec![0, 1], vec![2]]).unwrap(), &owen, 1e-12));
        assert!(owen_exact(v, 3, &[vec![0, 1]]).is_err());
        assert!(owen_exact(v, 3, &[vec![0, 1], vec![1, 2]]).is_err());
    }

    #[test]
    fn square_game_two_groups() {
        let v = |s: &Coalition| Ok((s.count() * s.count()) as f64);
        let groups = [vec![0, 1], vec![2, 3]];
        let owen = owen_exact(v, 4, &groups).unwrap();
        assert!(close(&owen, &owen_two_step(v, 4, &groups).unwrap(), 1e-12));
        assert!(close(&owen, &[4.0; 4], 1e-12));
    }

    #[test]
    fn two_step_matches_flat_owen() {
        let (g, sg) = graph(3);
        let stats = compute_average_stats(&g).unwrap();
        let model = interacting();
        for mode in [MaskMode::Replace, MaskMode::Remove] {
            let game = EventGame::new(&model, &sg, &stats, mode).unwrap();
            let groups: Vec<Vec<usize>> = (0..3).map(|e| (e * 4..e * 4 + 4).collect()).collect();
            let flat = owen_exact(|s| game.flat_value(s, 4), 12, &groups).unwrap();
            for e in 0..3 {
                let two = owen_two_step_exact(&game, e).unwrap();
                assert!(close(&two, &flat[e * 4..e * 4 + 4], 1e-9), "{mode}: {two:?} vs {:?}", &flat[e * 4..e * 4 + 4]);
            }
        }
    }

    #[test]
    fn explanation_is_efficient_and_counts_calls() {
        let (g, sg) = graph(5);
        let stats = compute_average_stats(&g).unwrap();
        let model = CountingModel::new(interacting());
        let game = EventGame::new(&model, &sg, &stats, MaskMode::Replace).unwrap();
        model.reset();
        let cfg = OwenConfig { k: 30, l: Some(10), seed: 3, ..Default::default() };
        let ex = explain_event_features(&game, 1, &cfg).unwrap();
        let sum: f64 = ex.omega().iter().sum();
        assert!((sum - ex.phi_event_estimate).abs() < 1e-9);
        assert_eq!(model.calls(), cfg.k + cfg.k * ex.l);
        assert_eq!(ex.players.len(), 4);
        let again = explain_event_features(&game, 1, &cfg).unwrap();
        assert_eq!(ex, again);
    }

    #[test]
    fn player_json_layout() {
        let v = PlayerValue { player: FeaturePlayer::Feature(1), omega: 0.5 };
        assert_eq!(serde_json::to_string(&v).unwrap(), r#"{"kind":"feature","index":1,"omega":0.5}"#);
        let t = PlayerValue { player: FeaturePlayer::Timestamp, omega: -1.0 };
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(s, r#"{"kind":"timestamp","omega":-1.0}"#);
        assert_eq!(serde_json::from_str::<PlayerValue>(&s).unwrap(), t);
    }
}
