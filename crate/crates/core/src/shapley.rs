//! Event-level Shapley values: KernelSHAP estimation, the exact enumeration
//! oracle, and the event explainer entry point.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::ctdg::ComputationalSubgraph;
use crate::game::EventGame;
use crate::masking::{AverageEventStats, MaskMode, MaskOptions};
use crate::models::Model;
use crate::par::Parallelism;
use crate::rng;
use crate::{Error, Result};

/// Largest game `shapley_exact` will enumerate.
pub const EXACT_LIMIT: usize = 20;

/// Shapley kernel `(M-1) / (C(M,s) s (M-s))` for a coalition of size `s`.
///
/// Empty and full coalitions have infinite weight and are handled as
/// constraints by [`kernelshap_solve`].
pub fn shapley_kernel_weight(m: usize, s: usize) -> Result<f64> {
    if s == 0 || s >= m {
        return Err(Error::InvalidArgument(format!("kernel weight undefined for size {s} of {m}")));
    }
    Ok((m - 1) as f64 / (binomial(m, s) * s as f64 * (m - s) as f64))
}

/// Permutation weight `s! (n-s-1)! / n!` of a coalition of size `s` not containing the player.
pub fn shapley_weight(n: usize, s: usize) -> f64 {
    debug_assert!(s < n);
    1.0 / (n as f64 * binomial(n - 1, s))
}

pub fn binomial(n: usize, k: usize) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Regression rows; `None` means `2 * M + 2048`.
    pub budget: Option<usize>,
    pub seed: u64,
    /// Add the complement of every sampled coalition.
    pub paired_sampling: bool,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig { budget: None, seed: 0, paired_sampling: true }
    }
}

impl KernelConfig {
    pub fn budget_for(&self, m: usize) -> usize {
        self.budget.unwrap_or(2 * m + 2048)
    }
}

/// One regression row of KernelSHAP.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionSample {
    pub z: Coalition,
    pub weight: f64,
    pub value: f64,
}

/// Returns true when all proper, nonempty coalitions fit in `budget`.
pub fn enumerates(m: usize, budget: usize) -> bool {
    m < 63 && (1u64 << m) - 2 <= budget as u64
}

/// Regression rows for an `m`-player game.
///
/// When every proper nonempty coalition fits in the budget they are all
/// enumerated with exact kernel weights. Otherwise sizes are drawn in
/// proportion to their total kernel mass, subsets uniformly within a size,
/// and every row carries an equal share of the total kernel mass.
pub fn sample_coalitions(m: usize, cfg: &KernelConfig) -> Vec<CoalitionSample> {
    let budget = cfg.budget_for(m);
    if m < 2 {
        return Vec::new();
    }
    if enumerates(m, budget) {
        return (1..(1u64 << m) - 1)
            .map(|mask| {
                let z = Coalition::from_mask(m, mask);
                let weight = shapley_kernel_weight(m, z.count()).expect("proper coalition");
                CoalitionSample { z, weight, value: f64::NAN }
            })
            .collect();
    }

    let mass: Vec<f64> = (1..m).map(|s| (m - 1) as f64 / (s * (m - s)) as f64).collect();
    let total: f64 = mass.iter().sum();
    let mut r = rng::rng(cfg.seed);
    let weight = total / budget as f64;
    let mut out = Vec::with_capacity(budget);
    while out.len() < budget {
        let mut u = r.gen::<f64>() * total;
        let mut size = m - 1;
        for (i, w) in mass.iter().enumerate() {
            if u < *w {
                size = i + 1;
                break;
            }
            u -= w;
        }
        let z = Coalition::from_indices(m, sample(&mut r, m, size));
        if cfg.paired_sampling && out.len() + 1 < budget {
            let c = z.complement();
            out.push(CoalitionSample { z, weight, value: f64::NAN });
            out.push(CoalitionSample { z: c, weight, value: f64::NAN });
        } else {
            out.push(CoalitionSample { z, weight, value: f64::NAN });
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSolution {
    pub phi: Vec<f64>,
    /// The weighted design had numerically dependent columns; `phi` is then the
    /// minimum-norm solution of the reduced problem.
    pub rank_deficient: bool,
}

/// Kernel-weighted least squares for `g(z) = val_empty + Σ φ_i z_i` subject to
/// `g(1) = val_full`.
///
/// The constraint is enforced exactly by eliminating the last coefficient.
/// Rows for the empty or full coalition are ignored.
pub fn kernelshap_solve(samples: &[CoalitionSample], m: usize, val_empty: f64, val_full: f64) -> Result<KernelSolution> {
    let delta = val_full - val_empty;
    if m == 0 {
        return Ok(KernelSolution { phi: vec![], rank_deficient: false });
    }
    if m == 1 {
        return Ok(KernelSolution { phi: vec![delta], rank_deficient: false });
    }
    let rows: Vec<&CoalitionSample> =
        samples.iter().filter(|s| s.z.len() == m && !s.z.is_empty() && !s.z.is_full()).collect();
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!("no proper coalitions to fit a {m}-player game")));
    }
    if let Some(s) = rows.iter().find(|s| !(s.weight > 0.0 && s.weight.is_finite() && s.value.is_finite())) {
        return Err(Error::InvalidArgument(format!("sample {} has weight {} and value {}", s.z, s.weight, s.value)));
    }

    let last = m - 1;
    let mut a = DMatrix::<f64>::zeros(rows.len(), last);
    let mut b = DVector::<f64>::zeros(rows.len());
    for (r, s) in rows.iter().enumerate() {
        let sw = s.weight.sqrt();
        let z_last = if s.z.contains(last) { 1.0 } else { 0.0 };
        for c in 0..last {
            let z = if s.z.contains(c) { 1.0 } else { 0.0 };
            a[(r, c)] = sw * (z - z_last);
        }
        b[r] = sw * (s.value - val_empty - z_last * delta);
    }

    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.max();
    let tol = max_sv * 1e-10 * (rows.len().max(last) as f64);
    let rank = svd.singular_values.iter().filter(|s| **s > tol).count();
    let rank_deficient = rank < last;
    let beta = svd.solve(&b, tol).map_err(|e| Error::InvalidArgument(format!("least squares failed: {e}")))?;

    let mut phi: Vec<f64> = beta.iter().copied().collect();
    let head: f64 = phi.iter().sum();
    phi.push(delta - head);
    Ok(KernelSolution { phi, rank_deficient })
}

/// Shapley values from a full table of coalition values indexed by bitmask.
pub fn shapley_from_table(table: &[f64], m: usize) -> Vec<f64> {
    assert_eq!(table.len(), 1 << m);
    let weights: Vec<f64> = (0..m).map(|s| shapley_weight(m, s)).collect();
    (0..m)
        .map(|i| {
            let bit = 1usize << i;
            (0..table.len())
                .filter(|mask| mask & bit == 0)
                .map(|mask| weights[mask.count_ones() as usize] * (table[mask | bit] - table[mask]))
                .sum()
        })
        .collect()
}

/// Exact Shapley values by enumerating all `2^m` coalitions.
pub fn shapley_exact(mut val: impl FnMut(&Coalition) -> f64, m: usize) -> Result<Vec<f64>> {
    try_shapley_exact(|s| Ok(val(s)), m)
}

pub fn try_shapley_exact(mut val: impl FnMut(&Coalition) -> Result<f64>, m: usize) -> Result<Vec<f64>> {
    if m > EXACT_LIMIT {
        return Err(Error::TooManyPlayers { players: m, limit: EXACT_LIMIT });
    }
    let table = (0..1u64 << m).map(|mask| val(&Coalition::from_mask(m, mask))).collect::<Result<Vec<_>>>()?;
    Ok(shapley_from_table(&table, m))
}

/// Exact Shapley values of an event game, evaluating coalitions in parallel.
pub fn shapley_exact_game(game: &EventGame<'_>) -> Result<Vec<f64>> {
    let m = game.players();
    if m > EXACT_LIMIT {
        return Err(Error::TooManyPlayers { players: m, limit: EXACT_LIMIT });
    }
    let all: Vec<Coalition> = (0..1u64 << m).map(|mask| Coalition::from_mask(m, mask)).collect();
    let table = game.values(&all)?;
    Ok(shapley_from_table(&table, m))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventExplanation {
    /// Always 0: the game is centred on the empty-coalition prediction.
    pub base_value: f64,
    /// One value per subgraph event, in subgraph order.
    pub phi: Vec<f64>,
    pub grand_value: f64,
    pub samples_used: usize,
    pub seed: u64,
    pub rank_deficient: bool,
}

/// Fills in the values of `samples` from `game`.
pub fn evaluate_samples(game: &EventGame<'_>, samples: &mut [CoalitionSample]) -> Result<()> {
    let coalitions: Vec<Coalition> = samples.iter().map(|s| s.z.clone()).collect();
    let values = game.values(&coalitions)?;
    for (s, v) in samples.iter_mut().zip(values) {
        s.value = v;
    }
    Ok(())
}

pub fn explain_game(game: &EventGame<'_>, cfg: &KernelConfig) -> Result<EventExplanation> {
    let m = game.players();
    if m == 0 {
        return Err(Error::InvalidArgument("cannot explain an empty subgraph".into()));
    }
    let mut samples = sample_coalitions(m, cfg);
    evaluate_samples(game, &mut samples)?;
    let grand_value = game.value(&Coalition::full(m))?;
    let sol = kernelshap_solve(&samples, m, 0.0, grand_value)?;
    Ok(EventExplanation {
        base_value: 0.0,
        phi: sol.phi,
        grand_value,
        samples_used: samples.len(),
        seed: cfg.seed,
        rank_deficient: sol.rank_deficient,
    })
}

/// Shapley values of every event of `sg` for `model`'s prediction.
///
/// A positive value pushes the prediction up, a negative value down; the
/// magnitude is the strength of the influence.
pub fn explain_events(
    model: &dyn Model,
    sg: &ComputationalSubgraph,
    stats: &AverageEventStats,
    mode: MaskMode,
    cfg: &KernelConfig,
) -> Result<EventExplanation> {
    let game = EventGame::with_options(model, sg, stats, mode, MaskOptions::default(), Parallelism::default())?;
    explain_game(&game, cfg)
}
