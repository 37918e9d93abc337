//! Sparsification of explanations, fidelity-style metrics, sparsity curves
//! and their area under the curve.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::coalition::Coalition;
use crate::ctdg::ComputationalSubgraph;
use crate::dataset::Task;
use crate::game::EventGame;
use crate::masking::{self, AverageEventStats, MaskMode, MaskOptions};
use crate::models::{sigmoid, Model};
use crate::owen::{self, FeatureExplanation, OwenConfig};
use crate::par::{self, Parallelism};
use crate::rng;
use crate::shapley::{self, EventExplanation, KernelConfig};
use crate::{Error, Result};

/// Clamp applied to probabilities before the KL divergence.
pub const GEF_EPS: f64 = 1e-7;

/// Scores used to rank players when sparsifying.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Relevance {
    /// One score per subgraph event.
    Events(Vec<f64>),
    /// Event scores plus per-player scores for some events, keyed by
    /// subgraph position.
    Features { events: Vec<f64>, features: BTreeMap<usize, Vec<f64>> },
}

impl Relevance {
    pub fn from_event_explanation(ex: &EventExplanation) -> Self {
        Relevance::Events(ex.phi.iter().map(|p| p.abs()).collect())
    }

    /// `features` pairs a subgraph position with its feature explanation.
    pub fn from_feature_explanations(ex: &EventExplanation, features: &[(usize, FeatureExplanation)]) -> Self {
        Relevance::Features {
            events: ex.phi.iter().map(|p| p.abs()).collect(),
            features: features.iter().map(|(e, f)| (*e, f.players.iter().map(|p| p.omega.abs()).collect())).collect(),
        }
    }

    pub fn event_scores(&self) -> &[f64] {
        match self {
            Relevance::Events(s) => s,
            Relevance::Features { events, .. } => events,
        }
    }
}

/// Subgraph positions ordered by decreasing score; ties go to the earlier
/// event, then the lower id.
pub fn rank_events(sg: &ComputationalSubgraph, scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..sg.len()).collect();
    order.sort_by(|&a, &b| {
        let (ea, eb) = (&sg.events[a].event, &sg.events[b].event);
        scores[b].total_cmp(&scores[a]).then(ea.ts.total_cmp(&eb.ts)).then(ea.id.cmp(&eb.id)).then(a.cmp(&b))
    });
    order
}

/// Number of players kept out of `n` at sparsity `s`.
pub fn keep_count(n: usize, s: f64) -> usize {
    // (1 - 0.7) * 10 is 3.0000000000000004 in floating point
    (((1.0 - s) * n as f64) - 1e-9).ceil().clamp(0.0, n as f64) as usize
}

/// The subgraph restricted to the most relevant players at sparsity `s`.
pub fn sparsify(
    sg: &ComputationalSubgraph,
    rel: &Relevance,
    s: f64,
    mode: MaskMode,
    stats: &AverageEventStats,
    opts: MaskOptions,
) -> Result<ComputationalSubgraph> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("sparsity {s} outside [0, 1]")));
    }
    let scores = rel.event_scores();
    if scores.len() != sg.len() || scores.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("relevance must give a finite score to every event".into()));
    }
    let n = sg.len();
    let kept = Coalition::from_indices(n, rank_events(sg, scores).into_iter().take(keep_count(n, s)));
    let mut partial = Vec::new();
    if let Relevance::Features { features, .. } = rel {
        for (&e, fs) in features {
            if !kept.contains(e) {
                continue;
            }
            if fs.len() != sg.events[e].event.features.len() + 2 {
                return Err(Error::InvalidArgument(format!("event {e} has {} player scores", fs.len())));
            }
            let mut order: Vec<usize> = (0..fs.len()).collect();
            order.sort_by(|&a, &b| fs[b].total_cmp(&fs[a]).then(a.cmp(&b)));
            partial.push((e, Coalition::from_indices(fs.len(), order.into_iter().take(keep_count(fs.len(), s)))));
        }
    }
    let partial: Vec<(usize, &Coalition)> = partial.iter().map(|(e, c)| (*e, c)).collect();
    masking::mask_players(sg, &kept, &partial, stats, mode, opts)
}

// written as 0 - x so that equal inputs give +0.0
pub fn fidelity(y_hat: f64, y_hat_sparse: f64) -> f64 {
    0.0 - (y_hat - y_hat_sparse).abs()
}

pub fn deviation(y: f64, y_hat_sparse: f64) -> f64 {
    0.0 - (y - y_hat_sparse).abs()
}

pub fn logit_fidelity(y: f64, f_full: f64, f_sparse: f64) -> Result<f64> {
    if y == 1.0 {
        Ok(f_sparse - f_full)
    } else if y == 0.0 {
        Ok(f_full - f_sparse)
    } else {
        Err(Error::InvalidArgument(format!("logit fidelity needs a binary label, got {y}")))
    }
}

/// `exp(-KL(Bern(p) || Bern(q)))` with both probabilities clamped away from 0 and 1.
pub fn gef(p: f64, q: f64) -> f64 {
    let p = p.clamp(GEF_EPS, 1.0 - GEF_EPS);
    let q = q.clamp(GEF_EPS, 1.0 - GEF_EPS);
    let kl = p * (p / q).ln() + (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
    (-kl.max(0.0)).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Fidelity,
    Deviation,
    LogitFidelity,
    Gef,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Fidelity, Metric::Deviation, Metric::LogitFidelity, Metric::Gef];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Fidelity => "fidelity",
            Metric::Deviation => "deviation",
            Metric::LogitFidelity => "logit_fidelity",
            Metric::Gef => "gef",
        }
    }

    /// Logit fidelity and GEF only make sense for binary tasks.
    pub fn applies_to(self, task: Task) -> bool {
        task == Task::Binary || matches!(self, Metric::Fidelity | Metric::Deviation)
    }

    /// Metric value from raw model outputs. Fidelity and deviation compare
    /// probabilities on binary tasks and raw outputs on regression tasks.
    pub fn compute(self, task: Task, label: f64, f_full: f64, f_sparse: f64) -> Result<f64> {
        let out = |f: f64| if task == Task::Binary { sigmoid(f) } else { f };
        match self {
            Metric::Fidelity => Ok(fidelity(out(f_full), out(f_sparse))),
            Metric::Deviation => Ok(deviation(label, out(f_sparse))),
            Metric::LogitFidelity if task == Task::Binary => logit_fidelity(label, f_full, f_sparse),
            Metric::Gef if task == Task::Binary => Ok(gef(sigmoid(f_full), sigmoid(f_sparse))),
            m => Err(Error::InvalidArgument(format!("{} is undefined for regression tasks", m.name()))),
        }
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {s:?}")))
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses `a:b:step` into an increasing grid including both ends.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("sparsity grid {spec:?} is not a:b:step"));
    let parts: Vec<f64> = spec.split(':').map(|p| p.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<_>>()?;
    let [a, b, step] = parts[..] else { return Err(bad()) };
    if !(0.0..=1.0).contains(&a) || !(a..=1.0).contains(&b) || !(step > 0.0) {
        return Err(bad());
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((a + i as f64 * step) * 1e12).round() / 1e12).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub s: f64,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparsityCurve {
    pub metric: Metric,
    pub n_instances: usize,
    pub points: Vec<CurvePoint>,
}

impl SparsityCurve {
    /// Builds a curve from `values[i][j]`, the metric of instance `i` at `sparsities[j]`.
    pub fn from_values(metric: Metric, sparsities: &[f64], values: &[Vec<f64>]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("a curve needs at least one instance".into()));
        }
        if sparsities.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("sparsities must be strictly increasing".into()));
        }
        let n = values.len() as f64;
        let points = sparsities
            .iter()
            .enumerate()
            .map(|(j, &s)| {
                let mean = values.iter().map(|v| v[j]).sum::<f64>() / n;
                let stderr = if values.len() > 1 {
                    let var = values.iter().map(|v| (v[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
                    (var / n).sqrt()
                } else {
                    0.0
                };
                CurvePoint { s, mean, stderr }
            })
            .collect();
        Ok(SparsityCurve { metric, n_instances: values.len(), points })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,metric_mean,metric_stderr\n");
        for p in &self.points {
            let _ = writeln!(out, "{},{},{}", p.s, p.mean, p.stderr);
        }
        out
    }
}

/// Trapezoidal area under the curve divided by the covered sparsity range.
pub fn auc(curve: &SparsityCurve) -> Result<f64> {
    let pts = &curve.points;
    if pts.len() < 2 {
        return Err(Error::InvalidArgument(format!("auc needs at least 2 points, got {}", pts.len())));
    }
    let range = pts[pts.len() - 1].s - pts[0].s;
    if !(range > 0.0) {
        return Err(Error::InvalidArgument("auc needs a nonempty sparsity range".into()));
    }
    let area: f64 = pts.windows(2).map(|w| (w[1].s - w[0].s) * (w[0].mean + w[1].mean) / 2.0).sum();
    Ok(area / range)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainerKind {
    /// Rank events by `|Φ|`.
    #[default]
    Event,
    /// Additionally rank the players of the top events by `|Ω|`.
    Feature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainerSpec {
    pub kind: ExplainerKind,
    pub kernel: KernelConfig,
    pub owen: OwenConfig,
    /// Events that receive a feature explanation.
    pub top_events: usize,
}

impl Default for ExplainerSpec {
    fn default() -> Self {
        ExplainerSpec { kind: ExplainerKind::Event, kernel: KernelConfig::default(), owen: OwenConfig::default(), top_events: 3 }
    }
}

/// Explanations of one instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceExplanation {
    pub events: EventExplanation,
    /// Feature explanations keyed by subgraph position, most relevant event first.
    pub features: Vec<(usize, FeatureExplanation)>,
}

impl InstanceExplanation {
    pub fn relevance(&self) -> Relevance {
        if self.features.is_empty() {
            Relevance::from_event_explanation(&self.events)
        } else {
            Relevance::from_feature_explanations(&self.events, &self.features)
        }
    }
}

/// Runs the explainers of `spec` on one game, seeding both from `seed`.
pub fn explain_instance(game: &EventGame<'_>, spec: &ExplainerSpec, seed: u64) -> Result<InstanceExplanation> {
    let kernel = KernelConfig { seed: rng::derive_seed(seed, 0), ..spec.kernel.clone() };
    let events = shapley::explain_game(game, &kernel)?;
    let mut features = Vec::new();
    if spec.kind == ExplainerKind::Feature {
        let scores: Vec<f64> = events.phi.iter().map(|p| p.abs()).collect();
        let owen_cfg = OwenConfig { seed: rng::derive_seed(seed, 1), ..spec.owen.clone() };
        for e in rank_events(game.subgraph(), &scores).into_iter().take(spec.top_events) {
            features.push((e, owen::explain_event_features(game, e, &owen_cfg)?));
        }
    }
    Ok(InstanceExplanation { events, features })
}

/// A prediction to evaluate.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub id: u64,
    pub sg: ComputationalSubgraph,
    pub label: f64,
}

#[derive(Debug, Clone)]
pub struct EvalSettings<'a> {
    pub stats: &'a AverageEventStats,
    pub mode: MaskMode,
    pub task: Task,
    pub spec: ExplainerSpec,
    pub sparsities: Vec<f64>,
    pub metrics: Vec<Metric>,
    /// Root seed; instance `i` uses a stream derived from its id.
    pub seed: u64,
    pub par: Parallelism,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub auc: f64,
    pub curve: SparsityCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_instances: usize,
    pub task: Task,
    pub mode: MaskMode,
    pub explainer: ExplainerKind,
    pub metrics: BTreeMap<Metric, MetricSummary>,
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> Option<&MetricSummary> {
        self.metrics.get(&metric)
    }
}

/// Metric values of one explained instance, indexed `[metric][sparsity]`.
pub fn instance_metrics(model: &dyn Model, inst: &EvalInstance, rel: &Relevance, settings: &EvalSettings<'_>) -> Result<Vec<Vec<f64>>> {
    let f_full = model.predict(&inst.sg)?;
    let preds = settings
        .sparsities
        .iter()
        .map(|&s| {
            let sparse = sparsify(&inst.sg, rel, s, settings.mode, settings.stats, MaskOptions::default())?;
            if sparse == inst.sg {
                Ok(f_full)
            } else {
                model.predict(&sparse)
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    settings
        .metrics
        .iter()
        .map(|m| preds.iter().map(|&f| m.compute(settings.task, inst.label, f_full, f)).collect())
        .collect()
}

/// Explains every instance once and reports one curve per metric.
pub fn evaluate(model: &dyn Model, instances: &[EvalInstance], settings: &EvalSettings<'_>) -> Result<MetricReport> {
    if instances.is_empty() {
        return Err(Error::InvalidArgument("no instances to evaluate".into()));
    }
    if let Some(m) = settings.metrics.iter().find(|m| !m.applies_to(settings.task)) {
        return Err(Error::InvalidArgument(format!("{m} is undefined for regression tasks")));
    }
    let per_instance = par::try_map(settings.par, instances, |inst| {
        let game = EventGame::with_options(model, &inst.sg, settings.stats, settings.mode, MaskOptions::default(), settings.par)?;
        let ex = explain_instance(&game, &settings.spec, rng::derive_seed(settings.seed, inst.id))?;
        instance_metrics(model, inst, &ex.relevance(), settings)
    })?;
    let mut metrics = BTreeMap::new();
    for (mi, &m) in settings.metrics.iter().enumerate() {
        let values: Vec<Vec<f64>> = per_instance.iter().map(|v| v[mi].clone()).collect();
        let curve = SparsityCurve::from_values(m, &settings.sparsities, &values)?;
        let auc = auc(&curve)?;
        metrics.insert(m, MetricSummary { auc, curve });
    }
    Ok(MetricReport {
        n_instances: instances.len(),
        task: settings.task,
        mode: settings.mode,
        explainer: settings.spec.kind,
        metrics,
    })
}

/// Renders the curves of a report as a standalone SVG line chart, one panel per metric.
pub fn render_svg(report: &MetricReport) -> String {
    let (w, h, pad) = (360.0, 240.0, 40.0);
    let panels = report.metrics.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{h}" font-family="sans-serif" font-size="11">"#,
        w * panels
    );
    for (i, (metric, summary)) in report.metrics.iter().enumerate() {
        let x0 = i as f64 * w;
        let pts = &summary.curve.points;
        let lo = pts.iter().map(|p| p.mean - p.stderr).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p.mean + p.stderr).fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi - lo < 1e-12 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let sx = |s: f64| x0 + pad + s * (w - 2.0 * pad);
        let sy = |v: f64| h - pad - (v - lo) / (hi - lo) * (h - 2.0 * pad);
        let _ = writeln!(
            out,
            r#"<rect x="{}" y="{pad}" width="{}" height="{}" fill="none" stroke="grey"/>"#,
            x0 + pad,
            w - 2.0 * pad,
            h - 2.0 * pad
        );
        let line: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", sx(p.s), sy(p.mean))).collect();
        let _ = writeln!(out, r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="1.5"/>"#, line.join(" "));
        for p in pts {
            let _ = writeln!(
                out,
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="steelblue" stroke-opacity="0.5"/>"#,
                sy(p.mean - p.stderr),
                sy(p.mean + p.stderr),
                x = sx(p.s)
            );
        }
        let _ = writeln!(out, r#"<text x="{:.2}" y="20">{metric} (AUC {:.4})</text>"#, x0 + pad, summary.auc);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}">sparsity</text>"#, x0 + w / 2.0 - 20.0, h - 10.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{hi:.3}</text>"#, x0 + 2.0, pad + 4.0);
        let _ = writeln!(out, r#"<text x="{:.2}" y="{:.2}">{lo:.3}</text>"#, x0 + 2.0, h - pad);
    }
    out.push_str("</svg>\n");
    out
}
