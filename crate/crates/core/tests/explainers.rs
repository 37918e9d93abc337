//! Event and feature explainers checked against the exact oracles.

use tgx_core::ctdg::{extract_subgraph, NeighborCap};
use tgx_core::game::EventGame;
use tgx_core::masking::{compute_average_stats, FeaturePlayer};
use tgx_core::models::{ConstantModel, FnModel, ToyModel, ToyModelConfig};
use tgx_core::owen::{self, OwenConfig};
use tgx_core::shapley::{self, KernelConfig};
use tgx_core::{ComputationalSubgraph, Event, MaskMode, TemporalGraph};

fn graph() -> TemporalGraph {
    // root 0 with four neighbours, two of which have their own history
    let mk = |id, src, dst, ts: f64| Event { id, src, dst, ts, label: 0.0, features: vec![0.2 * ts, 1.0 - 0.1 * ts] };
    TemporalGraph::new(
        7,
        2,
        vec![
            mk(0, 5, 1, 1.0),
            mk(1, 6, 2, 2.0),
            mk(2, 5, 2, 2.5),
            mk(3, 1, 0, 3.0),
            mk(4, 2, 0, 4.0),
            mk(5, 3, 0, 5.0),
            mk(6, 4, 0, 6.0),
        ],
    )
    .unwrap()
}

fn subgraph(g: &TemporalGraph) -> ComputationalSubgraph {
    extract_subgraph(g, 0, 10.0, 2, NeighborCap::default()).unwrap()
}

#[test]
fn toy_model_enumeration_matches_exact() {
    let g = graph();
    let sg = subgraph(&g);
    assert_eq!(sg.len(), 7);
    let stats = compute_average_stats(&g).unwrap();
    let model = ToyModel::new(ToyModelConfig::default()).unwrap();
    for mode in [MaskMode::Replace, MaskMode::Remove] {
        let game = EventGame::new(&model, &sg, &stats, mode).unwrap();
        let exact = shapley::shapley_exact_game(&game).unwrap();
        let ex = shapley::explain_game(&game, &KernelConfig::default()).unwrap();
        for (a, b) in ex.phi.iter().zip(&exact) {
            assert!((a - b).abs() <= 1e-9, "{mode}: {a} vs {b}");
        }
        assert_eq!(ex.samples_used, (1 << 7) - 2);
    }
}

#[test]
fn single_event_gets_grand_value() {
    let g = TemporalGraph::new(2, 1, vec![Event { id: 0, src: 1, dst: 0, ts: 1.0, label: 0.0, features: vec![3.0] }]).unwrap();
    let sg = extract_subgraph(&g, 0, 2.0, 2, NeighborCap::default()).unwrap();
    let stats = compute_average_stats(&g).unwrap();
    let model = ToyModel::new(ToyModelConfig { feature_dim: 1, ..Default::default() }).unwrap();
    let ex = shapley::explain_events(&model, &sg, &stats, MaskMode::Remove, &KernelConfig::default()).unwrap();
    assert_eq!(ex.phi, vec![ex.grand_value]);
}

#[test]
fn constant_model_gets_zero_everywhere() {
    let g = graph();
    let sg = subgraph(&g);
    let stats = compute_average_stats(&g).unwrap();
    let model = ConstantModel(-1.25);
    let ex = shapley::explain_events(&model, &sg, &stats, MaskMode::Replace, &KernelConfig { budget: Some(40), ..Default::default() })
        .unwrap();
    assert!(ex.phi.iter().all(|p| p.abs() < 1e-12));
    let game = EventGame::new(&model, &sg, &stats, MaskMode::Replace).unwrap();
    let fx = owen::explain_event_features(&game, 0, &OwenConfig { k: 20, ..Default::default() }).unwrap();
    assert!(fx.omega().iter().all(|o| o.abs() < 1e-12));
}

#[test]
fn explanation_is_reproducible() {
    let g = graph();
    let sg = subgraph(&g);
    let stats = compute_average_stats(&g).unwrap();
    let model = ToyModel::new(ToyModelConfig::default()).unwrap();
    let cfg = KernelConfig { budget: Some(50), seed: 12, paired_sampling: true };
    let a = shapley::explain_events(&model, &sg, &stats, MaskMode::Replace, &cfg).unwrap();
    let b = shapley::explain_events(&model, &sg, &stats, MaskMode::Replace, &cfg).unwrap();
    assert_eq!(a, b);
    assert!(a.rank_deficient || a.phi.len() == 7);
}

#[test]
fn timestamp_only_model_credits_timestamp() {
    let g = graph();
    let sg = subgraph(&g);
    let stats = compute_average_stats(&g).unwrap();
    let target = sg.position_of(6).unwrap();
    let model = FnModel(|s: &ComputationalSubgraph| {
        s.events.iter().find(|e| e.event.id == 6).map_or(0.0, |e| e.event.ts)
    });
    let game = EventGame::new(&model, &sg, &stats, MaskMode::Replace).unwrap();
    let omega = owen::owen_two_step_exact(&game, target).unwrap();
    let ts = FeaturePlayer::Timestamp.index(2);
    let total: f64 = omega.iter().map(|o| o.abs()).sum();
    assert!(omega[ts].abs() >= 0.9 * total, "{omega:?}");

    let fx = owen::explain_event_features(&game, target, &OwenConfig { k: 64, ..Default::default() }).unwrap();
    assert_eq!(fx.ranked()[0].player, FeaturePlayer::Timestamp);
}

#[test]
fn unread_feature_is_null() {
    let g = graph();
    let sg = subgraph(&g);
    let stats = compute_average_stats(&g).unwrap();
    // reads feature 0 and timestamps, never feature 1
    let model = FnModel(|s: &ComputationalSubgraph| {
        s.events.iter().map(|e| e.event.features[0] * e.event.ts + if e.src_feat_zeroed { 0.0 } else { 0.3 }).sum::<f64>()
    });
    // under removal any present feature brings the whole event back, so only
    // replacement makes the unread feature a null player
    let game = EventGame::new(&model, &sg, &stats, MaskMode::Replace).unwrap();
    for e in 0..sg.len() {
        let omega = owen::owen_two_step_exact(&game, e).unwrap();
        assert!(omega[1].abs() <= 1e-9, "event {e}: {omega:?}");
    }
}

#[test]
fn two_step_full_coalition_is_event_shapley() {
    let g = graph();
    let sg = subgraph(&g);
    let stats = compute_average_stats(&g).unwrap();
    let model = ToyModel::new(ToyModelConfig::default()).unwrap();
    let game = EventGame::new(&model, &sg, &stats, MaskMode::Remove).unwrap();
    let exact = shapley::shapley_exact_game(&game).unwrap();
    for e in 0..sg.len() {
        let omega = owen::owen_two_step_exact(&game, e).unwrap();
        assert!((omega.iter().sum::<f64>() - exact[e]).abs() < 1e-9);
    }
}

#[test]
fn feature_explanation_json() {
    let g = graph();
    let sg = subgraph(&g);
    let stats = compute_average_stats(&g).unwrap();
    let model = ToyModel::new(ToyModelConfig::default()).unwrap();
    let game = EventGame::new(&model, &sg, &stats, MaskMode::Replace).unwrap();
    let fx = owen::explain_event_features(&game, 1, &OwenConfig { k: 8, l: Some(6), seed: 4, ..Default::default() }).unwrap();
    let v = serde_json::to_value(&fx).unwrap();
    assert_eq!(v["players"][0]["kind"], "feature");
    assert_eq!(v["players"][0]["index"], 0);
    assert_eq!(v["players"][2]["kind"], "timestamp");
    assert!(v["players"][3].get("index").is_none());
    assert_eq!(v["k"], 8);
    assert!(v["l"].as_u64().unwrap() <= 6);
}
