use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context as _};
use phasewise::analysis::{
    build_curve, classify_curve, curve_based_split, decay_value_of, epsilon, min_delta, DecayAnalysis,
};
use phasewise::budgetsearch::{search_optimal_split, SearchPlan, SplitMemo};
use phasewise::exact::{exact_spread, EnumerationLimit};
use phasewise::graph::{load_edge_list, EdgeListOptions};
use phasewise::livegraph::graph_fingerprint;
use phasewise::multiphase::{BudgetSplit, MultiphaseRunner};
use phasewise::stats::Distribution;
use phasewise::{LiveGraphEnsemble, NodeId, WeightedDigraph};
use serde_json::{json, Value};

use crate::checks;
use crate::config::{ProbabilityModel, RunConfig};

/// A usage mistake caught before any computation.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Exit status for a failed command: 2 for refused computations, 3 for I/O, else 1.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<phasewise::Error>() {
            if e.is_refusal() {
                return 2;
            }
            if e.is_io() {
                return 3;
            }
            return 1;
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
        if let Some(e) = cause.downcast_ref::<csv::Error>() {
            if e.is_io_error() {
                return 3;
            }
        }
    }
    1
}

pub struct Outcome {
    pub summary: Value,
    /// False when a check the command ran did not hold.
    pub ok: bool,
}

impl Outcome {
    fn ok(summary: Value) -> Self {
        Self { summary, ok: true }
    }
}

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    pub fn new(config: RunConfig, out_dir: PathBuf) -> Self {
        Self { config, out_dir }
    }

    fn artifact(&self, name: &str) -> anyhow::Result<PathBuf> {
        fs::create_dir_all(&self.out_dir).with_context(|| format!("creating {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }

    fn csv_writer(&self, name: &str) -> anyhow::Result<csv::Writer<fs::File>> {
        let path = self.artifact(name)?;
        csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))
    }

    pub fn load_graph(&self) -> anyhow::Result<WeightedDigraph> {
        let c = &self.config;
        let path = c
            .graph
            .as_ref()
            .ok_or_else(|| usage("no graph given (set graph = PATH or --graph)"))?;
        let g = load_edge_list(
            path,
            EdgeListOptions {
                undirected: c.undirected,
            },
        )
        .with_context(|| format!("loading {}", path.display()))?;
        Ok(match c.model {
            ProbabilityModel::WeightedCascade => g.weighted_cascade(),
            ProbabilityModel::Trivalency => g.trivalency(c.tv_seed),
            ProbabilityModel::Uniform => g.uniform(c.uniform_p)?,
            ProbabilityModel::File => {
                if !g.has_probabilities() {
                    bail!(phasewise::Error::UnassignedProbabilities);
                }
                g
            }
        })
    }

    pub fn ensemble(&self, graph: WeightedDigraph) -> anyhow::Result<LiveGraphEnsemble> {
        let c = &self.config;
        let started = Instant::now();
        let e = match &c.ensemble {
            Some(path) => {
                LiveGraphEnsemble::load(graph, path).with_context(|| format!("loading {}", path.display()))?
            }
            None => LiveGraphEnsemble::sample(graph, c.samples, c.seed)?,
        };
        log::info!(
            "{} live graphs ready in {:.3}s",
            e.len(),
            started.elapsed().as_secs_f64()
        );
        Ok(e)
    }

    fn runner<'a>(&self, e: &'a LiveGraphEnsemble) -> anyhow::Result<MultiphaseRunner<'a>> {
        Ok(MultiphaseRunner::new(e, &self.config.selector)?)
    }

    fn budget(&self) -> anyhow::Result<usize> {
        self.config
            .budget
            .ok_or_else(|| usage("no budget given (set budget = K or --budget)"))
    }
}

fn labels(g: &WeightedDigraph, seeds: &[NodeId]) -> Vec<String> {
    seeds.iter().map(|&s| g.label(s).to_string()).collect()
}

fn histogram_csv(ctx: &Context, name: &str, d: &Distribution) -> anyhow::Result<()> {
    let mut w = ctx.csv_writer(name)?;
    w.write_record(["spread", "count"])?;
    for (v, c) in &d.histogram {
        w.write_record([v.to_string(), c.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

fn ensemble_json(e: &LiveGraphEnsemble) -> Value {
    json!({
        "nodes": e.node_count(),
        "edges": e.graph().edge_count(),
        "samples": e.len(),
        "seed": e.master_seed(),
    })
}

pub fn sample(ctx: &Context) -> anyhow::Result<Outcome> {
    let g = ctx.load_graph()?;
    let fingerprint = graph_fingerprint(&g);
    let started = Instant::now();
    let e = LiveGraphEnsemble::sample(g, ctx.config.samples, ctx.config.seed)?;
    eprintln!(
        "sampled {} live graphs (seed {}) in {:.3}s",
        e.len(),
        e.master_seed(),
        started.elapsed().as_secs_f64()
    );
    let path = match &ctx.config.ensemble {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            p.clone()
        }
        None => ctx.artifact("ensemble.pwl")?,
    };
    e.save(&path).with_context(|| format!("writing {}", path.display()))?;
    let live: u64 = (0..e.len()).map(|i| e.live_edge_count(i) as u64).sum();
    Ok(Outcome::ok(json!({
        "command": "sample",
        "ensemble": ensemble_json(&e),
        "graph_fingerprint": format!("{fingerprint:016x}"),
        "mean_live_edges": live as f64 / e.len() as f64,
        "file": path.file_name().map(|f| f.to_string_lossy().into_owned()),
    })))
}

pub fn spread(ctx: &Context) -> anyhow::Result<Outcome> {
    let c = &ctx.config;
    if c.seeds.is_empty() && c.budget.is_none() {
        return Err(usage("spread needs explicit seeds or a budget"));
    }
    let g = ctx.load_graph()?;
    let explicit: Vec<NodeId> = c
        .seeds
        .iter()
        .map(|l| {
            g.node_by_label(l)
                .ok_or_else(|| usage(format!("unknown node id {l:?}")))
        })
        .collect::<anyhow::Result<_>>()?;
    let e = ctx.ensemble(g)?;
    let runner = ctx.runner(&e)?;
    let seeds = if explicit.is_empty() {
        runner.select(None, ctx.budget()?)?
    } else {
        explicit
    };
    let exact = if c.exact {
        Some(exact_spread(e.graph(), &seeds, &EnumerationLimit::default())?)
    } else {
        None
    };
    let d = runner.evaluate_seeds(&seeds);
    histogram_csv(ctx, "spread_histogram.csv", &d)?;
    Ok(Outcome::ok(json!({
        "command": "spread",
        "ensemble": ensemble_json(&e),
        "selector": if c.seeds.is_empty() { Some(c.selector.kind.name()) } else { None },
        "seeds": labels(e.graph(), &seeds),
        "mean": d.mean,
        "std_dev": d.std_dev,
        "exact": exact,
        "artifacts": ["spread_histogram.csv"],
    })))
}

fn checked_split(ctx: &Context) -> anyhow::Result<BudgetSplit> {
    let split = ctx
        .config
        .split
        .clone()
        .ok_or_else(|| usage("no split given (set split = K1,K2,... or --split)"))?;
    if let Some(k) = ctx.config.budget {
        if split.total() != k {
            return Err(usage(format!(
                "split {split} sums to {}, not the budget {k}",
                split.total()
            )));
        }
    }
    Ok(split)
}

pub fn multiphase(ctx: &Context) -> anyhow::Result<Outcome> {
    let split = checked_split(ctx)?;
    let g = ctx.load_graph()?;
    let e = ctx.ensemble(g)?;
    let runner = ctx.runner(&e)?;
    let report = runner.run(&split)?;
    if report.clamped {
        log::warn!("split {split} asks for more seeds than some live graphs have uninfluenced nodes");
    }

    let mut w = ctx.csv_writer("phases.csv")?;
    w.write_record([
        "phase",
        "budget",
        "incremental_mean",
        "incremental_std",
        "cumulative_mean",
        "cumulative_std",
    ])?;
    for p in &report.phases {
        w.write_record([
            p.phase.to_string(),
            p.budget.to_string(),
            p.incremental.mean.to_string(),
            p.incremental.std_dev.to_string(),
            p.cumulative.mean.to_string(),
            p.cumulative.std_dev.to_string(),
        ])?;
    }
    w.flush()?;
    histogram_csv(ctx, "final_histogram.csv", report.final_distribution())?;
    let mut w = ctx.csv_writer("seed_frequency.csv")?;
    w.write_record(["phase", "node", "live_graphs"])?;
    for phase in 1..=report.phases.len() {
        for (node, count) in report.seed_frequency(phase) {
            w.write_record([phase.to_string(), e.graph().label(node).to_string(), count.to_string()])?;
        }
    }
    w.flush()?;

    Ok(Outcome::ok(json!({
        "command": "multiphase",
        "ensemble": ensemble_json(&e),
        "selector": report.selector.name(),
        "split": report.split.allocations(),
        "phase_means": report.phase_means(),
        "cumulative_means": report.cumulative_means(),
        "phase_std": report.phases.iter().map(|p| p.incremental.std_dev).collect::<Vec<_>>(),
        "mean": report.final_mean(),
        "std_dev": report.final_std(),
        "first_phase_seeds": labels(e.graph(), &report.first_phase_seeds),
        "selector_invocations": report.selector_invocations,
        "clamped": report.clamped,
        "artifacts": ["phases.csv", "final_histogram.csv", "seed_frequency.csv"],
    })))
}

pub fn search(ctx: &Context) -> anyhow::Result<Outcome> {
    let c = &ctx.config;
    let k = ctx.budget()?;
    if c.phases == 0 {
        return Err(usage("phases must be at least 1"));
    }
    let plan_for = |p: usize| SearchPlan {
        coarse_step: c.coarse_step,
        fine_step: c.fine_step,
        top_refine: c.top_refine,
        strategy: c.strategy,
        ..SearchPlan::new(k, p)
    };
    let levels: Vec<usize> = if c.search_lower {
        (2.min(c.phases)..=c.phases).collect()
    } else {
        vec![c.phases]
    };
    for &p in &levels {
        plan_for(p).validate()?;
    }

    let g = ctx.load_graph()?;
    let e = ctx.ensemble(g)?;
    let runner = ctx.runner(&e)?;
    let mut memo = SplitMemo::new();
    let mut results = Vec::new();
    for &p in &levels {
        let started = Instant::now();
        let r = search_optimal_split(&runner, &plan_for(p), &mut memo)?;
        log::info!(
            "{p}-phase search: {} evaluations in {:.1}s",
            r.evaluations,
            started.elapsed().as_secs_f64()
        );
        if r.flat_landscape {
            log::warn!("every {p}-phase split has the same expected spread");
        }
        results.push(r);
    }

    let mut w = ctx.csv_writer("trace.csv")?;
    w.write_record([
        "phases",
        "split",
        "mean",
        "std_dev",
        "phase_means",
        "provenance",
        "recalled",
        "wall_seconds",
    ])?;
    for r in &results {
        for row in &r.trace {
            w.write_record([
                r.plan.phases.to_string(),
                row.split.to_string(),
                row.mean.to_string(),
                row.std_dev.to_string(),
                row.phase_means.iter().map(f64::to_string).collect::<Vec<_>>().join(" "),
                row.provenance.to_string(),
                row.recalled.to_string(),
                format!("{:.6}", row.wall_seconds),
            ])?;
        }
    }
    w.flush()?;
    let mut artifacts = vec!["trace.csv"];
    if let Some(r) = results.iter().find(|r| r.plan.phases == 3) {
        let mut w = ctx.csv_writer("heatmap.csv")?;
        w.write_record(["k1", "k2", "k3", "mean"])?;
        for (a, b, c3, mean) in r.heatmap_rows() {
            w.write_record([a.to_string(), b.to_string(), c3.to_string(), mean.to_string()])?;
        }
        w.flush()?;
        artifacts.push("heatmap.csv");
    }

    let summaries: Vec<Value> = results
        .iter()
        .map(|r| {
            json!({
                "phases": r.plan.phases,
                "best": r.best.allocations(),
                "best_mean": r.best_mean,
                "best_phase_means": r.row(&r.best).map(|row| row.phase_means.clone()),
                "trace_rows": r.trace.len(),
                "evaluations": r.evaluations,
                "flat_landscape": r.flat_landscape,
            })
        })
        .collect();
    Ok(Outcome::ok(json!({
        "command": "search",
        "ensemble": ensemble_json(&e),
        "selector": c.selector.kind.name(),
        "budget": k,
        "strategy": format!("{:?}", c.strategy).to_lowercase(),
        "levels": summaries,
        "total_evaluations": memo.evaluations(),
        "artifacts": artifacts,
    })))
}

pub fn curve(ctx: &Context) -> anyhow::Result<Outcome> {
    let k = ctx.budget()?;
    let g = ctx.load_graph()?;
    let e = ctx.ensemble(g)?;
    let curve = build_curve(&e, k, &ctx.config.selector)?;
    let thresholds = ctx.config.thresholds;
    let kind = if curve.points.len() >= 3 {
        Some(classify_curve(&curve, &thresholds)?)
    } else {
        None
    };
    let splits: Vec<Value> = (2..=ctx.config.phases.max(2))
        .map(|p| curve_based_split(&curve, p, &thresholds).map(|s| json!({"phases": p, "split": s.allocations()})))
        .collect::<phasewise::Result<_>>()?;
    let mut w = ctx.csv_writer("curve.csv")?;
    w.write_record(["budget", "spread"])?;
    for (b, v) in curve.points.iter().enumerate() {
        w.write_record([b.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(Outcome::ok(json!({
        "command": "curve",
        "ensemble": ensemble_json(&e),
        "selector": ctx.config.selector.kind.name(),
        "budget": k,
        "spread_at_budget": curve.value(k),
        "normalized_area": curve.normalized_area(),
        "curve_type": kind.map(|t| t.to_string()),
        "seeds": labels(e.graph(), &curve.seeds),
        "curve_splits": splits,
        "artifacts": ["curve.csv"],
    })))
}

pub fn decay(ctx: &Context) -> anyhow::Result<Outcome> {
    let c = &ctx.config;
    for &d in &c.deltas {
        if !(0.0..=1.0).contains(&d) {
            return Err(usage(format!("decay factor {d} must lie in [0, 1]")));
        }
    }
    if !c.spreads.is_empty() {
        return decay_from_spreads(ctx);
    }
    let split = checked_split(ctx)?;
    let g = ctx.load_graph()?;
    let e = ctx.ensemble(g)?;
    let runner = ctx.runner(&e)?;
    let multi = runner.run(&split)?;
    let single = runner.run(&BudgetSplit::single(split.total()))?;
    let analysis = DecayAnalysis::from_report(&multi, single.final_mean(), 1.0)?;

    let mut w = ctx.csv_writer("decay.csv")?;
    w.write_record(["delta", "multi_phase_value", "single_phase_value"])?;
    let mut grid = Vec::new();
    for &d in &c.deltas {
        let mv = decay_value_of(&multi.phase_means(), d)?;
        let sv = decay_value_of(&single.phase_means(), d)?;
        w.write_record([d.to_string(), mv.to_string(), sv.to_string()])?;
        grid.push(json!({"delta": d, "multi_phase": mv, "single_phase": sv}));
    }
    w.flush()?;
    Ok(Outcome::ok(json!({
        "command": "decay",
        "ensemble": ensemble_json(&e),
        "split": split.allocations(),
        "phase_means": analysis.phase_means,
        "single_phase_mean": single.final_mean(),
        "epsilon": analysis.epsilon,
        "min_delta": analysis.min_delta.delta,
        "never_advantageous": analysis.min_delta.never_advantageous,
        "values": grid,
        "artifacts": ["decay.csv"],
    })))
}

/// Minimum decay factors from a single-phase spread and best `p`-phase spreads.
fn decay_from_spreads(ctx: &Context) -> anyhow::Result<Outcome> {
    let spreads = &ctx.config.spreads;
    if spreads.len() < 2 {
        return Err(usage(
            "spreads needs the single-phase spread followed by at least one multi-phase spread",
        ));
    }
    let single = spreads[0];
    let mut rows = Vec::new();
    let mut w = ctx.csv_writer("min_delta.csv")?;
    w.write_record(["phases", "spread", "epsilon", "min_delta", "never_advantageous"])?;
    for (i, &multi) in spreads[1..].iter().enumerate() {
        let p = i + 2;
        let eps = epsilon(single, multi)?;
        let md = min_delta(p, eps)?;
        w.write_record([
            p.to_string(),
            multi.to_string(),
            eps.to_string(),
            md.delta.to_string(),
            md.never_advantageous.to_string(),
        ])?;
        rows.push(json!({
            "phases": p,
            "spread": multi,
            "epsilon": eps,
            "min_delta": md.delta,
            "never_advantageous": md.never_advantageous,
        }));
    }
    w.flush()?;
    Ok(Outcome::ok(json!({
        "command": "decay",
        "single_phase_spread": single,
        "min_delta": rows,
        "artifacts": ["min_delta.csv"],
    })))
}

pub fn verify(ctx: &Context) -> anyhow::Result<Outcome> {
    let values = checks::myopic_gap_values()?;
    let mut outcomes = checks::quick_battery(ctx.config.seed);
    if ctx.config.graph.is_some() {
        outcomes.push(graph_check(ctx)?);
    }
    let ok = outcomes.iter().all(|c| c.passed);
    for c in &outcomes {
        eprintln!(
            "{} {}: {} ({:.2}s)",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.detail,
            c.elapsed.as_secs_f64()
        );
    }
    Ok(Outcome {
        summary: json!({
            "command": "verify",
            "myopic_gap": {
                "optimal_seeds": values.optimal_seeds,
                "optimal_value": values.optimal_value,
                "myopic_value": values.myopic_value,
            },
            "checks": outcomes,
            "passed": ok,
        }),
        ok,
    })
}

/// Monte Carlo against exact spread of greedy seeds on the configured graph.
fn graph_check(ctx: &Context) -> anyhow::Result<checks::CheckOutcome> {
    let g = ctx.load_graph()?;
    let e = ctx.ensemble(g)?;
    let runner = ctx.runner(&e)?;
    let seeds = runner.select(None, ctx.config.budget.unwrap_or(1))?;
    let check = phasewise::exact::validate_ensemble(&e, &seeds, &EnumerationLimit::default())?;
    let outcome = checks::CheckOutcome {
        name: "graph-mc-vs-exact".into(),
        passed: check.passes(4.0),
        detail: format!(
            "mc {} vs exact {} (z = {:?})",
            check.mc_mean, check.exact, check.z_score
        ),
        elapsed: Default::default(),
    };
    Ok(outcome)
}

pub fn write_config(ctx: &Context, path: &Path) -> anyhow::Result<()> {
    fs::write(path, ctx.config.to_text()).map_err(|e| anyhow!(e).context(format!("writing {}", path.display())))
}
