//! Correctness suites runnable from the command line.

use std::time::Instant;

use rand::Rng as _;
use tgx_core::ctdg::NeighborCap;
use tgx_core::game::EventGame;
use tgx_core::masking::compute_average_stats;
use tgx_core::models::synth::{generate_synthetic, SynthConfig};
use tgx_core::models::{Model, ToyModel, ToyModelConfig};
use tgx_core::owen::{self, OwenConfig};
use tgx_core::rng;
use tgx_core::shapley::{self, KernelConfig};
use tgx_core::{Coalition, MaskMode};

type Check = Result<(), String>;

/// Runs every suite, reporting to stderr. Returns true when all pass.
pub fn run(quick: bool, inject_fault: bool, seed: u64) -> bool {
    let suites: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("shapley oracle equivalence", Box::new(move || oracle_equivalence(if quick { 10 } else { 50 }, inject_fault, seed))),
        ("efficiency", Box::new(move || efficiency(if quick { 20 } else { 100 }, seed))),
        ("owen two-step equivalence", Box::new(move || owen_equivalence(if quick { 5 } else { 20 }, seed))),
        ("hierarchical efficiency", Box::new(move || hierarchical_efficiency(if quick { 5 } else { 20 }, seed))),
        ("timestamp leakage", Box::new(leakage)),
    ];
    let mut ok = true;
    for (name, suite) in suites {
        let start = Instant::now();
        match suite() {
            Ok(()) => eprintln!("PASS {name} ({:.2}s)", start.elapsed().as_secs_f64()),
            Err(msg) => {
                ok = false;
                eprintln!("FAIL {name}: {msg}");
            }
        }
    }
    ok
}

fn random_table(m: usize, r: &mut rng::Rng) -> Vec<f64> {
    (0..1usize << m).map(|mask| if mask == 0 { 0.0 } else { r.gen_range(-1.0..1.0) }).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn oracle_equivalence(games: usize, inject_fault: bool, seed: u64) -> Check {
    let mut r = rng::rng_for(seed, 1);
    for g in 0..games {
        let m = 2 + g % 9;
        let table = random_table(m, &mut r);
        let exact = shapley::shapley_from_table(&table, m);
        let mut samples = shapley::sample_coalitions(m, &KernelConfig { budget: Some(1 << m), ..Default::default() });
        for s in samples.iter_mut() {
            s.value = table[s.z.mask() as usize];
        }
        if inject_fault {
            samples[0].weight *= 1.5;
        }
        let phi = shapley::kernelshap_solve(&samples, m, 0.0, table[(1 << m) - 1]).map_err(|e| e.to_string())?.phi;
        let err = max_abs_diff(&phi, &exact);
        if err > 1e-9 {
            return Err(format!("game {g} with {m} players differs from the exact values by {err:e}"));
        }
    }
    Ok(())
}

fn efficiency(solves: usize, seed: u64) -> Check {
    let mut r = rng::rng_for(seed, 2);
    for i in 0..solves {
        let m = r.gen_range(2..40);
        let cfg = KernelConfig { budget: Some(r.gen_range(8..200)), seed: i as u64, paired_sampling: i % 2 == 0 };
        let mut samples = shapley::sample_coalitions(m, &cfg);
        for s in samples.iter_mut() {
            s.value = r.gen_range(-2.0..2.0);
        }
        let full = r.gen_range(-5.0..5.0);
        let phi = shapley::kernelshap_solve(&samples, m, 0.0, full).map_err(|e| e.to_string())?.phi;
        let gap = (phi.iter().sum::<f64>() - full).abs();
        if gap > 1e-8 {
            return Err(format!("solve {i}: sum of values misses the grand value by {gap:e}"));
        }
    }
    Ok(())
}

fn owen_equivalence(games: usize, seed: u64) -> Check {
    let mut r = rng::rng_for(seed, 3);
    let groups: Vec<Vec<usize>> = (0..3).map(|g| (g * 3..g * 3 + 3).collect()).collect();
    for g in 0..games {
        let table = random_table(9, &mut r);
        let val = |s: &Coalition| Ok(table[s.mask() as usize]);
        let flat = owen::owen_exact(val, 9, &groups).map_err(|e| e.to_string())?;
        let two = owen::owen_two_step(val, 9, &groups).map_err(|e| e.to_string())?;
        let err = max_abs_diff(&flat, &two);
        if err > 1e-9 {
            return Err(format!("game {g}: two-step differs by {err:e}"));
        }
    }
    Ok(())
}

fn hierarchical_efficiency(instances: usize, seed: u64) -> Check {
    let ds = generate_synthetic(&SynthConfig { timestamps: 5, per_ts: instances.div_ceil(5), seed, ..Default::default() })
        .map_err(|e| e.to_string())?;
    let stats = compute_average_stats(&ds.graph).map_err(|e| e.to_string())?;
    let model = ToyModel::new(ToyModelConfig::default()).map_err(|e| e.to_string())?;
    let cfg = OwenConfig { k: 32, l: Some(32), seed, ..Default::default() };
    for inst in ds.instances.iter().take(instances) {
        let sg = inst.subgraph(&ds.graph, 2, NeighborCap::default()).map_err(|e| e.to_string())?;
        let game = EventGame::new(&model, &sg, &stats, MaskMode::Replace).map_err(|e| e.to_string())?;
        let e = sg.events.iter().position(|se| Some(se.event.id) == inst.marker_event).unwrap_or(0);
        let ex = owen::explain_event_features(&game, e, &cfg).map_err(|e| e.to_string())?;
        let gap = (ex.omega().iter().sum::<f64>() - ex.phi_event_estimate).abs();
        if gap > 1e-8 {
            return Err(format!("instance {}: feature values miss the event estimate by {gap:e}", inst.id));
        }
    }
    Ok(())
}

/// The toy model's output rises with the absolute time of an instance whose
/// marker node has no earlier events.
fn leakage() -> Check {
    let ds = generate_synthetic(&SynthConfig { timestamps: 1, per_ts: 1, seed: 0, ..Default::default() }).map_err(|e| e.to_string())?;
    let model = ToyModel::new(ToyModelConfig::default()).map_err(|e| e.to_string())?;
    let base = ds.instances[0].subgraph(&ds.graph, 2, NeighborCap::default()).map_err(|e| e.to_string())?;
    let mut prev = f64::NEG_INFINITY;
    for shift in 0..49 {
        let mut sg = base.clone();
        let dt = shift as f64;
        sg.pred_time += dt;
        for se in sg.events.iter_mut() {
            se.event.ts += dt;
            se.t_v += dt;
        }
        let y = model.predict(&sg).map_err(|e| e.to_string())?;
        if !(y > prev) {
            return Err(format!("prediction {y} at shift {dt} does not exceed {prev}"));
        }
        prev = y;
    }
    Ok(())
}
