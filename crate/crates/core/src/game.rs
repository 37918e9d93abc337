//! Cooperative games over a black-box model.
//!
//! The event game values a coalition `S` of subgraph events as
//! `f(mask(S)) - f(mask(∅))`. The feature game fixes one event `e` and values a
//! coalition of its feature players by a Monte Carlo estimate of `e`'s Shapley
//! value in the event game when `e` only carries those features.

use std::collections::HashMap;

use rand::seq::index::sample;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::ctdg::ComputationalSubgraph;
use crate::masking::{self, AverageEventStats, MaskMode, MaskOptions};
use crate::models::Model;
use crate::par::{self, Parallelism};
use crate::rng::Rng;
use crate::{Error, Result};

pub struct EventGame<'a> {
    model: &'a dyn Model,
    sg: &'a ComputationalSubgraph,
    stats: &'a AverageEventStats,
    mode: MaskMode,
    opts: MaskOptions,
    par: Parallelism,
    baseline: f64,
}

impl<'a> EventGame<'a> {
    pub fn new(
        model: &'a dyn Model,
        sg: &'a ComputationalSubgraph,
        stats: &'a AverageEventStats,
        mode: MaskMode,
    ) -> Result<Self> {
        Self::with_options(model, sg, stats, mode, MaskOptions::default(), Parallelism::default())
    }

    pub fn with_options(
        model: &'a dyn Model,
        sg: &'a ComputationalSubgraph,
        stats: &'a AverageEventStats,
        mode: MaskMode,
        opts: MaskOptions,
        par: Parallelism,
    ) -> Result<Self> {
        let empty = masking::mask_events(sg, &Coalition::empty(sg.len()), stats, mode, opts);
        let baseline = model.predict(&empty).map_err(|e| coalition_error(&Coalition::empty(sg.len()), e))?;
        Ok(EventGame { model, sg, stats, mode, opts, par, baseline })
    }

    pub fn players(&self) -> usize {
        self.sg.len()
    }

    pub fn subgraph(&self) -> &ComputationalSubgraph {
        self.sg
    }

    pub fn stats(&self) -> &AverageEventStats {
        self.stats
    }

    pub fn mode(&self) -> MaskMode {
        self.mode
    }

    pub fn options(&self) -> MaskOptions {
        self.opts
    }

    pub fn parallelism(&self) -> Parallelism {
        self.par
    }

    pub fn model(&self) -> &dyn Model {
        self.model
    }

    /// `f(m(∅, G))`, evaluated once at construction.
    pub fn baseline(&self) -> f64 {
        self.baseline
    }

    pub fn masked(&self, s: &Coalition) -> ComputationalSubgraph {
        masking::mask_events(self.sg, s, self.stats, self.mode, self.opts)
    }

    pub fn value(&self, s: &Coalition) -> Result<f64> {
        self.check(s)?;
        if s.is_empty() {
            return Ok(0.0);
        }
        let f = self.model.predict(&self.masked(s)).map_err(|e| coalition_error(s, e))?;
        Ok(f - self.baseline)
    }

    /// Values of many coalitions. Duplicates are evaluated once; distinct
    /// coalitions may be evaluated concurrently.
    pub fn values(&self, coalitions: &[Coalition]) -> Result<Vec<f64>> {
        let mut unique: Vec<&Coalition> = Vec::new();
        let mut slot: HashMap<&Coalition, usize> = HashMap::new();
        let positions: Vec<usize> = coalitions
            .iter()
            .map(|c| {
                *slot.entry(c).or_insert_with(|| {
                    unique.push(c);
                    unique.len() - 1
                })
            })
            .collect();
        let vals = par::try_map(self.par, &unique, |c| self.value(c))?;
        Ok(positions.into_iter().map(|p| vals[p]).collect())
    }

    /// Value of a coalition over the flat `events × feature players` set,
    /// players laid out event-major with `feature_players` per event.
    pub fn flat_value(&self, players: &Coalition, feature_players: usize) -> Result<f64> {
        let n = self.players();
        if players.len() != n * feature_players {
            return Err(Error::InvalidArgument(format!(
                "flat coalition over {} players, game has {n} x {feature_players}",
                players.len()
            )));
        }
        if players.is_empty() {
            return Ok(0.0);
        }
        let groups: Vec<Coalition> = (0..n)
            .map(|e| Coalition::from_indices(feature_players, (0..feature_players).filter(|p| players.contains(e * feature_players + p))))
            .collect();
        let partial: Vec<(usize, &Coalition)> = groups.iter().enumerate().collect();
        let sg = masking::mask_players(self.sg, &Coalition::empty(n), &partial, self.stats, self.mode, self.opts)?;
        let f = self.model.predict(&sg).map_err(|e| coalition_error(players, e))?;
        Ok(f - self.baseline)
    }

    fn check(&self, s: &Coalition) -> Result<()> {
        if s.len() != self.players() {
            return Err(Error::InvalidArgument(format!(
                "coalition over {} players, game has {}",
                s.len(),
                self.players()
            )));
        }
        Ok(())
    }
}

fn coalition_error(s: &Coalition, e: Error) -> Error {
    Error::Coalition { coalition: s.to_string(), source: Box::new(e) }
}

/// How the `k` event coalitions of the feature game are drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoalitionLaw {
    /// Size uniform on `0..n`, then a uniform subset of that size. The mean
    /// marginal contribution is then an unbiased Shapley estimate.
    #[default]
    SizeStratified,
    /// Every subset equally likely (estimates a Banzhaf-type index instead).
    Uniform,
}

/// Draws `k` coalitions over `players` that never contain `excluded`.
pub fn sample_event_coalitions(players: usize, excluded: usize, k: usize, law: CoalitionLaw, rng: &mut Rng) -> Vec<Coalition> {
    let others: Vec<usize> = (0..players).filter(|&i| i != excluded).collect();
    (0..k)
        .map(|_| match law {
            CoalitionLaw::SizeStratified => {
                let size = rng.gen_range(0..=others.len());
                let pick = sample(rng, others.len(), size);
                Coalition::from_indices(players, pick.into_iter().map(|i| others[i]))
            }
            CoalitionLaw::Uniform => {
                Coalition::from_indices(players, others.iter().copied().filter(|_| rng.gen_bool(0.5)))
            }
        })
        .collect()
}

/// The game played by the feature players of one event.
pub struct FeatureGame<'g, 'a> {
    event_game: &'g EventGame<'a>,
    target: usize,
    coalitions: Vec<Coalition>,
    weights: Vec<f64>,
    baseline_predictions: Vec<f64>,
}

impl<'g, 'a> FeatureGame<'g, 'a> {
    /// Samples `k` event coalitions excluding `target` and evaluates the
    /// predictions with `target` absent (k model calls).
    pub fn sample(event_game: &'g EventGame<'a>, target: usize, k: usize, law: CoalitionLaw, rng: &mut Rng) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        let coalitions = sample_event_coalitions(event_game.players(), target, k, law, rng);
        let weights = vec![1.0 / k as f64; k];
        Self::with_coalitions(event_game, target, coalitions, weights)
    }

    /// Uses every coalition of the other events with its exact Shapley weight;
    /// values then equal exact Shapley values of `target`.
    pub fn exact(event_game: &'g EventGame<'a>, target: usize) -> Result<Self> {
        let n = event_game.players();
        if n > 13 {
            return Err(Error::TooManyPlayers { players: n, limit: 13 });
        }
        let others: Vec<usize> = (0..n).filter(|&i| i != target).collect();
        let mut coalitions = Vec::with_capacity(1 << others.len());
        let mut weights = Vec::with_capacity(1 << others.len());
        for mask in 0u64..(1 << others.len()) {
            let c = Coalition::from_indices(n, others.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &i)| i));
            weights.push(crate::shapley::shapley_weight(n, c.count()));
            coalitions.push(c);
        }
        Self::with_coalitions(event_game, target, coalitions, weights)
    }

    pub fn with_coalitions(
        event_game: &'g EventGame<'a>,
        target: usize,
        coalitions: Vec<Coalition>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let n = event_game.players();
        if target >= n {
            return Err(Error::InvalidPlayer { index: target, players: n });
        }
        if coalitions.len() != weights.len() || coalitions.is_empty() {
            return Err(Error::InvalidArgument("need one weight per coalition and at least one coalition".into()));
        }
        if let Some(c) = coalitions.iter().find(|c| c.contains(target) || c.len() != n) {
            return Err(Error::InvalidArgument(format!("coalition {c} is not over the other events")));
        }
        let game = FeatureGame { event_game, target, coalitions, weights, baseline_predictions: Vec::new() };
        let absent = Coalition::empty(game.feature_players());
        let baseline_predictions =
            par::try_map(event_game.par, &game.coalitions, |k| game.predict(k, &absent))?;
        Ok(FeatureGame { baseline_predictions, ..game })
    }

    pub fn target(&self) -> usize {
        self.target
    }

    /// `|F'| + 2` players of the target event.
    pub fn feature_players(&self) -> usize {
        self.event_game.sg.events[self.target].event.features.len() + 2
    }

    pub fn coalitions(&self) -> &[Coalition] {
        &self.coalitions
    }

    /// Predictions with the target event absent, one per coalition.
    pub fn baseline_predictions(&self) -> &[f64] {
        &self.baseline_predictions
    }

    fn predict(&self, events: &Coalition, features: &Coalition) -> Result<f64> {
        let g = self.event_game;
        let sg = masking::mask_players(g.sg, events, &[(self.target, features)], g.stats, g.mode, g.opts)?;
        g.model.predict(&sg).map_err(|e| coalition_error(events, e))
    }

    /// Estimated Shapley value of the target event when it carries only `features`.
    pub fn feature_value(&self, features: &Coalition) -> Result<f64> {
        Ok(self.feature_values(std::slice::from_ref(features))?[0])
    }

    /// Row means of the prediction grid minus the absent-target predictions;
    /// exactly `k` model calls per feature coalition.
    pub fn feature_values(&self, features: &[Coalition]) -> Result<Vec<f64>> {
        let k = self.coalitions.len();
        if let Some(f) = features.iter().find(|f| f.len() != self.feature_players()) {
            return Err(Error::InvalidArgument(format!("feature coalition {f} has the wrong player count")));
        }
        let grid = par::try_map_range(self.event_game.par, features.len() * k, |ij| {
            self.predict(&self.coalitions[ij % k], &features[ij / k])
        })?;
        Ok(grid
            .chunks(k)
            .map(|row| {
                row.iter()
                    .zip(&self.baseline_predictions)
                    .zip(&self.weights)
                    .map(|((y, y0), w)| w * (y - y0))
                    .sum()
            })
            .collect())
    }
}
