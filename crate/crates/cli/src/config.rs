//! Run configuration: a flat `key = value` file, overridable from the command line.
//!
//! ```text
//! # comment
//! graph = data/nethept.txt
//! model = wc
//! samples = 1000
//! split = 67,133
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context};
use phasewise::analysis::CurveThresholds;
use phasewise::budgetsearch::SearchStrategy;
use phasewise::multiphase::BudgetSplit;
use phasewise::seedselect::{SelectorKind, SelectorSpec};

pub const OUT_DIR_ENV: &str = "PHASEWISE_OUT";
pub const DEFAULT_OUT_DIR: &str = "phasewise-out";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProbabilityModel {
    WeightedCascade,
    Trivalency,
    Uniform,
    /// Probabilities from the third column of the edge list.
    File,
}

impl FromStr for ProbabilityModel {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        Ok(match s {
            "wc" => Self::WeightedCascade,
            "tv" => Self::Trivalency,
            "uniform" => Self::Uniform,
            "file" => Self::File,
            other => bail!("unknown probability model {other:?} (expected wc, tv, uniform or file)"),
        })
    }
}

impl ProbabilityModel {
    pub fn name(self) -> &'static str {
        match self {
            Self::WeightedCascade => "wc",
            Self::Trivalency => "tv",
            Self::Uniform => "uniform",
            Self::File => "file",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub graph: Option<PathBuf>,
    pub undirected: bool,
    pub model: ProbabilityModel,
    pub tv_seed: u64,
    pub uniform_p: f64,
    /// Presampled ensemble to load instead of sampling.
    pub ensemble: Option<PathBuf>,
    pub samples: usize,
    pub seed: u64,
    pub selector: SelectorSpec,
    pub budget: Option<usize>,
    pub phases: usize,
    pub split: Option<BudgetSplit>,
    pub seeds: Vec<String>,
    pub exact: bool,
    pub coarse_step: f64,
    pub fine_step: f64,
    pub top_refine: usize,
    pub strategy: SearchStrategy,
    pub search_lower: bool,
    pub thresholds: CurveThresholds,
    pub deltas: Vec<f64>,
    /// Single-phase spread followed by the best spread for 2, 3, ... phases.
    pub spreads: Vec<f64>,
    pub out_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            graph: None,
            undirected: false,
            model: ProbabilityModel::WeightedCascade,
            tv_seed: 0,
            uniform_p: 0.1,
            ensemble: None,
            samples: 1000,
            seed: 0,
            selector: SelectorSpec::default(),
            budget: None,
            phases: 2,
            split: None,
            seeds: Vec::new(),
            exact: false,
            coarse_step: 0.1,
            fine_step: 0.05,
            top_refine: 10,
            strategy: SearchStrategy::Grid,
            search_lower: true,
            thresholds: CurveThresholds::default(),
            deltas: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            spreads: Vec::new(),
            out_dir: None,
        }
    }
}

pub const KEYS: &[&str] = &[
    "graph",
    "undirected",
    "model",
    "tv_seed",
    "uniform_p",
    "ensemble",
    "samples",
    "seed",
    "selector",
    "irie_alpha",
    "irie_iterations",
    "convergence_tol",
    "planning_graphs",
    "budget",
    "phases",
    "split",
    "seeds",
    "exact",
    "coarse_step",
    "fine_step",
    "top_refine",
    "strategy",
    "search_lower",
    "linear_band",
    "rise_ratio",
    "concave_area",
    "deltas",
    "spreads",
    "out_dir",
];

fn parse_bool(v: &str) -> anyhow::Result<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => bail!("expected a boolean, got {v:?}"),
    }
}

fn parse_list<T: FromStr>(v: &str) -> anyhow::Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow::anyhow!("{s:?}: {e}")))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> anyhow::Result<()> {
        let v = value.trim();
        let ctx = || format!("config key {key}");
        match key {
            "graph" => self.graph = (!v.is_empty()).then(|| PathBuf::from(v)),
            "undirected" => self.undirected = parse_bool(v).with_context(ctx)?,
            "model" => self.model = v.parse()?,
            "tv_seed" => self.tv_seed = v.parse().with_context(ctx)?,
            "uniform_p" => self.uniform_p = v.parse().with_context(ctx)?,
            "ensemble" => self.ensemble = (!v.is_empty()).then(|| PathBuf::from(v)),
            "samples" => self.samples = v.parse().with_context(ctx)?,
            "seed" => self.seed = v.parse().with_context(ctx)?,
            "selector" => self.selector.kind = v.parse::<SelectorKind>()?,
            "irie_alpha" => self.selector.irie_alpha = v.parse().with_context(ctx)?,
            "irie_iterations" => self.selector.irie_iterations = v.parse().with_context(ctx)?,
            "convergence_tol" => self.selector.convergence_tol = v.parse().with_context(ctx)?,
            "planning_graphs" => self.selector.planning_graphs = v.parse().with_context(ctx)?,
            "budget" => {
                self.budget = if v.is_empty() {
                    None
                } else {
                    Some(v.parse().with_context(ctx)?)
                }
            }
            "phases" => self.phases = v.parse().with_context(ctx)?,
            "split" => self.split = if v.is_empty() { None } else { Some(v.parse()?) },
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "exact" => self.exact = parse_bool(v).with_context(ctx)?,
            "coarse_step" => self.coarse_step = v.parse().with_context(ctx)?,
            "fine_step" => self.fine_step = v.parse().with_context(ctx)?,
            "top_refine" => self.top_refine = v.parse().with_context(ctx)?,
            "strategy" => self.strategy = v.parse()?,
            "search_lower" => self.search_lower = parse_bool(v).with_context(ctx)?,
            "linear_band" => self.thresholds.linear_band = v.parse().with_context(ctx)?,
            "rise_ratio" => self.thresholds.rise_ratio = v.parse().with_context(ctx)?,
            "concave_area" => self.thresholds.concave_area = v.parse().with_context(ctx)?,
            "deltas" => self.deltas = parse_list(v).with_context(ctx)?,
            "spreads" => self.spreads = parse_list(v).with_context(ctx)?,
            "out_dir" => self.out_dir = (!v.is_empty()).then(|| PathBuf::from(v)),
            other => bail!("unknown config key {other:?}"),
        }
        Ok(())
    }

    /// Applies `key = value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> anyhow::Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                bail!("line {}: expected key = value", i + 1);
            };
            self.set(key.trim(), value).with_context(|| format!("line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let mut config = Self::default();
        config.apply_text(text)?;
        Ok(config)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// The file representation; parsing it gives back the same config.
    pub fn to_text(&self) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("graph", path(&self.graph));
        line("undirected", self.undirected.to_string());
        line("model", self.model.name().into());
        line("tv_seed", self.tv_seed.to_string());
        line("uniform_p", self.uniform_p.to_string());
        line("ensemble", path(&self.ensemble));
        line("samples", self.samples.to_string());
        line("seed", self.seed.to_string());
        line("selector", self.selector.kind.name().into());
        line("irie_alpha", self.selector.irie_alpha.to_string());
        line("irie_iterations", self.selector.irie_iterations.to_string());
        line("convergence_tol", self.selector.convergence_tol.to_string());
        line("planning_graphs", self.selector.planning_graphs.to_string());
        line("budget", self.budget.map(|b| b.to_string()).unwrap_or_default());
        line("phases", self.phases.to_string());
        line(
            "split",
            self.split.as_ref().map(|s| join(s.allocations())).unwrap_or_default(),
        );
        line("seeds", self.seeds.join(","));
        line("exact", self.exact.to_string());
        line("coarse_step", self.coarse_step.to_string());
        line("fine_step", self.fine_step.to_string());
        line("top_refine", self.top_refine.to_string());
        line(
            "strategy",
            match self.strategy {
                SearchStrategy::Grid => "grid",
                SearchStrategy::Unimodal => "unimodal",
            }
            .into(),
        );
        line("search_lower", self.search_lower.to_string());
        line("linear_band", self.thresholds.linear_band.to_string());
        line("rise_ratio", self.thresholds.rise_ratio.to_string());
        line("concave_area", self.thresholds.concave_area.to_string());
        line("deltas", join(&self.deltas));
        line("spreads", join(&self.spreads));
        line("out_dir", path(&self.out_dir));
        out
    }

    /// Flag value, then `PHASEWISE_OUT`, then the config file, then the default.
    pub fn resolve_out_dir(&self, flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        if let Some(env) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(env);
        }
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }
}
