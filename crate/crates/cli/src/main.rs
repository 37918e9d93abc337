//! `tgx`: generate synthetic benchmarks, explain predictions of temporal graph
//! models and evaluate explanations with sparsity curves.

mod run;
mod selftest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};
use tgx_core::dataset::Instance;
use tgx_core::eval::{self, EvalInstance, EvalSettings, ExplainerKind, ExplainerSpec, Metric};
use tgx_core::game::EventGame;
use tgx_core::masking::{compute_average_stats, MaskOptions};
use tgx_core::models::synth::{generate_synthetic, SynthConfig};
use tgx_core::models::{bridge, ToyModel, ToyModelConfig};
use tgx_core::owen::OwenConfig;
use tgx_core::par::{self, Parallelism};
use tgx_core::rng;
use tgx_core::shapley::KernelConfig;
use tgx_core::MaskMode;

use run::{ModelSpec, RunConfig};

#[derive(Parser)]
#[command(name = "tgx", version, about = "Shapley and Owen explanations for temporal graph models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic benchmark dataset.
    Generate(GenerateArgs),
    /// Explain predictions with event-level (and optionally feature-level) attributions.
    Explain(ExplainArgs),
    /// Sparsity curves and AUCs of the explanations.
    Evaluate(EvaluateArgs),
    /// Run the built-in correctness suites.
    Selftest(SelftestArgs),
    /// Answer bridge requests on stdin/stdout with the built-in toy model.
    Serve(ServeArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 50)]
    timestamps: usize,
    #[arg(long, default_value_t = 1000)]
    per_ts: usize,
    #[arg(long, default_value_t = 3)]
    max_children: usize,
    #[arg(long, default_value_t = 2)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct Common {
    /// Dataset directory or bare event CSV.
    #[arg(long)]
    dataset: PathBuf,
    /// builtin:toy or external:<command>
    #[arg(long, default_value = "builtin:toy")]
    model: String,
    #[arg(long, default_value_t = MaskMode::Replace)]
    mode: MaskMode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    /// Keep at most this many most recent events per node and hop.
    #[arg(long)]
    neighbor_cap: Option<usize>,
    /// KernelSHAP rows per explanation (default 2M + 2048).
    #[arg(long)]
    kernel_budget: Option<usize>,
    /// Event coalitions per feature explanation.
    #[arg(long, default_value_t = 550)]
    mc_samples: usize,
    /// Feature coalitions per feature explanation (default 2|F| + 2048).
    #[arg(long)]
    feature_budget: Option<usize>,
    /// Also explain the features of the top events.
    #[arg(long)]
    feature: bool,
    #[arg(long, default_value_t = 3)]
    top_events: usize,
    #[arg(long)]
    instances: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (and bridge processes for external models); 0 picks the core count.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Seconds to wait for an external model response.
    #[arg(long, default_value_t = 60)]
    bridge_timeout: u64,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    common: Common,
    /// Explain only the instance with this id.
    #[arg(long, conflicts_with = "event")]
    instance: Option<u64>,
    /// Explain the prediction of this event (its source, destination and time).
    #[arg(long)]
    event: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    common: Common,
    /// Sparsity grid a:b:step.
    #[arg(long, default_value = "0:1:0.05")]
    sparsities: String,
    /// Comma-separated metrics; defaults to all that apply to the task.
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<String>>,
    /// Also render the curves to curves.svg.
    #[arg(long)]
    plot: bool,
}

#[derive(Args)]
struct SelftestArgs {
    /// Smaller suites.
    #[arg(long)]
    quick: bool,
    /// Perturb one kernel weight in the oracle suite; the run must then fail.
    #[arg(long)]
    inject_fault: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 2)]
    feature_dim: usize,
    #[arg(long, default_value_t = 0)]
    node_feature_dim: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> anyhow::Result<ExitCode> {
    match cmd {
        Command::Generate(a) => generate(a).map(|_| ExitCode::SUCCESS),
        Command::Explain(a) => {
            let w = a.common.workers;
            with_workers(w, || explain(a)).map(|_| ExitCode::SUCCESS)
        }
        Command::Evaluate(a) => {
            let w = a.common.workers;
            with_workers(w, || evaluate(a)).map(|_| ExitCode::SUCCESS)
        }
        Command::Selftest(a) => {
            let ok = selftest::run(a.quick, a.inject_fault, a.seed);
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Serve(a) => {
            let model = ToyModel::new(ToyModelConfig {
                feature_dim: a.feature_dim,
                node_feature_dim: a.node_feature_dim,
                ..ToyModelConfig::default()
            })?;
            bridge::serve(&model, std::io::stdin().lock(), std::io::stdout().lock())?;
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> anyhow::Result<T> + Send) -> anyhow::Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(workers).build()?;
    pool.install(f)
}

fn generate(a: GenerateArgs) -> anyhow::Result<()> {
    let cfg = SynthConfig {
        timestamps: a.timestamps,
        per_ts: a.per_ts,
        max_children: a.max_children,
        feature_dim: a.feature_dim,
        seed: a.seed,
        ..SynthConfig::default()
    };
    let ds = generate_synthetic(&cfg)?;
    ds.write_dir(&a.out, Some(serde_json::to_value(&cfg)?))
        .with_context(|| format!("writing dataset to {}", a.out.display()))?;
    eprintln!("wrote {} instances, {} events to {}", ds.instances.len(), ds.graph.events().len(), a.out.display());
    Ok(())
}

fn run_config(c: &Common, command: &str) -> RunConfig {
    RunConfig {
        command: command.into(),
        dataset: c.dataset.display().to_string(),
        model: c.model.clone(),
        mode: c.mode,
        seed: c.seed,
        hops: c.hops,
        neighbor_cap: c.neighbor_cap,
        kernel_budget: c.kernel_budget,
        mc_samples: c.mc_samples,
        feature_budget: c.feature_budget,
        feature: c.feature,
        top_events: c.top_events,
        instances: c.instances,
        sparsities: None,
        metrics: None,
        toy: None,
    }
}

fn explainer_spec(c: &Common) -> anyhow::Result<ExplainerSpec> {
    if c.mc_samples == 0 {
        bail!("--mc-samples must be at least 1");
    }
    if c.feature_budget == Some(0) {
        bail!("--feature-budget must be at least 1");
    }
    if c.kernel_budget.is_some_and(|b| b < 2) {
        bail!("--kernel-budget must be at least 2");
    }
    Ok(ExplainerSpec {
        kind: if c.feature { ExplainerKind::Feature } else { ExplainerKind::Event },
        kernel: KernelConfig { budget: c.kernel_budget, ..KernelConfig::default() },
        owen: OwenConfig { k: c.mc_samples, l: c.feature_budget, ..OwenConfig::default() },
        top_events: c.top_events,
    })
}

fn explain(a: ExplainArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let spec = explainer_spec(c)?;
    let model_spec = ModelSpec::parse(&c.model)?;
    let ds = run::load_dataset(&c.dataset)?;
    let stats = compute_average_stats(&ds.graph)?;

    let instances: Vec<Instance> = if let Some(id) = a.instance {
        vec![ds.instances.iter().find(|i| i.id == id).cloned().ok_or_else(|| anyhow!("no instance with id {id}"))?]
    } else if let Some(id) = a.event {
        let e = ds.graph.event_by_id(id).ok_or_else(|| anyhow!("no event with id {id}"))?;
        vec![Instance { id, src: e.src, dst: Some(e.dst), t: e.ts, label: 1.0, marker_node: None, marker_event: None }]
    } else {
        run::select_instances(&ds.instances, c.instances)
    };

    let model = run::build_model(&model_spec, &ds, worker_count(c.workers), Duration::from_secs(c.bridge_timeout))?;
    let mut config = run_config(c, "explain");
    if matches!(model_spec, ModelSpec::Toy) {
        config.toy = Some(run::toy_config(&ds));
    }

    let blocks = par::try_map(Parallelism::Rayon, &instances, |inst| -> tgx_core::Result<Value> {
        let sg = inst.subgraph(&ds.graph, c.hops, run::cap(c.neighbor_cap))?;
        if sg.is_empty() {
            return Err(tgx_core::Error::InvalidArgument(format!(
                "instance {} has no events before t = {}",
                inst.id, inst.t
            )));
        }
        let game = EventGame::with_options(model.as_ref(), &sg, &stats, c.mode, MaskOptions::default(), Parallelism::Rayon)?;
        let ex = eval::explain_instance(&game, &spec, rng::derive_seed(c.seed, inst.id))?;
        let events: Vec<Value> = sg
            .events
            .iter()
            .zip(&ex.events.phi)
            .map(|(se, phi)| json!({"event_id": se.event.id, "hop": se.hop, "phi": phi}))
            .collect();
        let mut block = json!({
            "instance": inst.id,
            "target": sg.target,
            "partner": sg.partner,
            "pred_time": sg.pred_time,
            "mode": c.mode,
            "base_value": ex.events.base_value,
            "grand_value": ex.events.grand_value,
            "events": events,
            "seed": ex.events.seed,
            "samples": ex.events.samples_used,
            "rank_deficient": ex.events.rank_deficient,
        });
        if spec.kind == ExplainerKind::Feature {
            block["features"] = serde_json::to_value(ex.features.iter().map(|(_, f)| f).collect::<Vec<_>>())
                .expect("feature explanation serializes");
        }
        Ok(block)
    })?;

    let out = json!({"config": config, "explanations": blocks});
    let path = run::write_file(&c.out, "explanations.json", &run::to_json(&out))?;
    eprintln!("explained {} instance(s) -> {}", instances.len(), path.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let c = &a.common;
    let spec = explainer_spec(c)?;
    let model_spec = ModelSpec::parse(&c.model)?;
    let sparsities = eval::parse_grid(&a.sparsities)?;
    if sparsities.len() < 2 {
        bail!("the sparsity grid needs at least two points");
    }
    let ds = run::load_dataset(&c.dataset)?;
    let metrics: Vec<Metric> = match &a.metrics {
        Some(names) => names.iter().map(|n| n.trim().parse()).collect::<tgx_core::Result<_>>()?,
        None => Metric::ALL.into_iter().filter(|m| m.applies_to(ds.task)).collect(),
    };
    if metrics.is_empty() {
        bail!("no metrics selected");
    }
    let stats = compute_average_stats(&ds.graph)?;

    let selected = run::select_instances(&ds.instances, c.instances);
    let mut instances = Vec::with_capacity(selected.len());
    for inst in &selected {
        let sg = inst.subgraph(&ds.graph, c.hops, run::cap(c.neighbor_cap))?;
        if sg.is_empty() {
            eprintln!("skipping instance {}: no events before t = {}", inst.id, inst.t);
            continue;
        }
        instances.push(EvalInstance { id: inst.id, sg, label: inst.label });
    }
    if instances.is_empty() {
        bail!("no instance has a nonempty computational subgraph");
    }

    let model = run::build_model(&model_spec, &ds, worker_count(c.workers), Duration::from_secs(c.bridge_timeout))?;
    let settings = EvalSettings {
        stats: &stats,
        mode: c.mode,
        task: ds.task,
        spec,
        sparsities: sparsities.clone(),
        metrics: metrics.clone(),
        seed: c.seed,
        par: Parallelism::Rayon,
    };
    let report = eval::evaluate(model.as_ref(), &instances, &settings)?;

    let mut config = run_config(c, "evaluate");
    config.sparsities = Some(sparsities);
    config.metrics = Some(metrics.iter().map(|m| m.name().to_string()).collect());
    if matches!(model_spec, ModelSpec::Toy) {
        config.toy = Some(run::toy_config(&ds));
    }

    write_report(&c.out, &config, &report, a.plot)?;
    for (m, s) in &report.metrics {
        eprintln!("{m}: auc {:.6}", s.auc);
    }
    Ok(())
}

fn write_report(dir: &Path, config: &RunConfig, report: &eval::MetricReport, plot: bool) -> anyhow::Result<()> {
    let aucs: serde_json::Map<String, Value> = report.metrics.iter().map(|(m, s)| (m.name().to_string(), json!(s.auc))).collect();
    let out = json!({"config": config, "auc": aucs, "report": report});
    run::write_file(dir, "report.json", &run::to_json(&out))?;
    for (m, s) in &report.metrics {
        run::write_file(dir, &format!("curve_{}.csv", m.name()), &s.curve.to_csv())?;
    }
    if plot {
        run::write_file(dir, "curves.svg", &eval::render_svg(report))?;
    }
    Ok(())
}

fn worker_count(w: usize) -> usize {
    if w > 0 {
        w
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}
