use proptest::prelude::*;
use tgx_core::coalition::Coalition;
use tgx_core::ctdg::{extract_subgraph, NeighborCap};
use tgx_core::eval::{self, Metric, Relevance, SparsityCurve};
use tgx_core::masking::{compute_average_stats, mask_events, MaskOptions};
use tgx_core::{Event, MaskMode, TemporalGraph};

fn random_graph(edges: &[(usize, usize, u8)]) -> TemporalGraph {
    let events = edges
        .iter()
        .enumerate()
        .map(|(i, &(s, d, t))| Event { id: i as u64, src: s, dst: d, ts: t as f64, label: 0.0, features: vec![t as f64 * 0.5] })
        .collect();
    TemporalGraph::new(6, 1, events).unwrap()
}

fn edges() -> impl Strategy<Value = Vec<(usize, usize, u8)>> {
    prop::collection::vec((0usize..6, 0usize..6, 0u8..20), 1..14)
}

proptest! {
    #[test]
    fn subgraph_events_precede_their_observation(es in edges(), t in 1u8..25, hops in 1usize..4) {
        let g = random_graph(&es);
        let sg = extract_subgraph(&g, 0, t as f64, hops, NeighborCap::default()).unwrap();
        for se in &sg.events {
            prop_assert!(se.event.ts < se.t_v);
            prop_assert!(se.hop >= 1 && se.hop <= hops);
            prop_assert!(se.parents.iter().all(|&p| sg.events[p].hop + 1 == se.hop));
        }
    }

    #[test]
    fn remove_masking_is_idempotent_and_grand_is_identity(es in edges(), t in 1u8..25, mask in any::<u64>()) {
        let g = random_graph(&es);
        let stats = compute_average_stats(&g).unwrap();
        let sg = extract_subgraph(&g, 0, t as f64, 2, NeighborCap::default()).unwrap();
        let n = sg.len();
        let full = Coalition::full(n);
        for mode in [MaskMode::Replace, MaskMode::Remove] {
            prop_assert_eq!(&mask_events(&sg, &full, &stats, mode, MaskOptions::default()), &sg);
        }
        let c = Coalition::from_mask(n, if n >= 64 { mask } else { mask & ((1u64 << n) - 1) });
        let once = mask_events(&sg, &c, &stats, MaskMode::Replace, MaskOptions::default());
        prop_assert_eq!(mask_events(&once, &c, &stats, MaskMode::Replace, MaskOptions::default()), once);
    }

    #[test]
    fn sparsify_keeps_nested_prefixes(es in edges(), t in 1u8..25, scores in prop::collection::vec(0.0f64..1.0, 14)) {
        let g = random_graph(&es);
        let stats = compute_average_stats(&g).unwrap();
        let sg = extract_subgraph(&g, 0, t as f64, 2, NeighborCap::default()).unwrap();
        let rel = Relevance::Events(scores[..sg.len().min(14)].to_vec());
        prop_assume!(sg.len() <= 14);
        let mut prev: Option<Vec<u64>> = None;
        for s in eval::parse_grid("0:1:0.125").unwrap() {
            let out = eval::sparsify(&sg, &rel, s, MaskMode::Remove, &stats, MaskOptions::default()).unwrap();
            let ids: Vec<u64> = out.events.iter().map(|e| e.event.id).collect();
            if let Some(p) = &prev {
                prop_assert!(ids.iter().all(|i| p.contains(i)));
            }
            prev = Some(ids);
        }
    }

    #[test]
    fn gef_is_in_unit_interval(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
        let v = eval::gef(p, q);
        prop_assert!(v > 0.0 && v <= 1.0);
        let clamp = |x: f64| x.clamp(eval::GEF_EPS, 1.0 - eval::GEF_EPS);
        prop_assert_eq!(v == 1.0, clamp(p) == clamp(q) || (clamp(p) - clamp(q)).abs() < 1e-12);
    }

    #[test]
    fn fidelity_and_deviation_are_nonpositive(a in -50.0f64..50.0, b in -50.0f64..50.0) {
        prop_assert!(eval::fidelity(a, b) <= 0.0);
        prop_assert!(eval::deviation(a, b) <= 0.0);
    }

    #[test]
    fn auc_stays_within_curve_bounds(values in prop::collection::vec(-3.0f64..3.0, 2..30)) {
        let grid: Vec<f64> = (0..values.len()).map(|i| i as f64 / (values.len() - 1) as f64).collect();
        let curve = SparsityCurve::from_values(Metric::Fidelity, &grid, &[values.clone()]).unwrap();
        let a = eval::auc(&curve).unwrap();
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
    }

    #[test]
    fn complement_partitions_players(n in 1usize..150, seed in any::<u64>()) {
        let c = Coalition::from_indices(n, (0..n).filter(|i| (seed >> (i % 64)) & 1 == 1));
        let k = c.complement();
        prop_assert_eq!(c.count() + k.count(), n);
        prop_assert!((0..n).all(|i| c.contains(i) != k.contains(i)));
    }
}
