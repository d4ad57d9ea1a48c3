//! Myopic multiphase seeding over a live-graph ensemble.
//!
//! Phase 1 picks its seeds once for all live graphs. Each later phase picks seeds
//! separately for every diffusion state, seeing only that state's influenced set, then
//! extends the state by reachability in its own live graph. States with identical
//! influenced sets and budgets share one selector call.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use fixedbitset::FixedBitSet;
use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::livegraph::{self, advance_state, DiffusionState, LiveGraphEnsemble};
use crate::seedselect::{select_seeds, SelectorKind, SelectorSpec};
use crate::stats::Distribution;

/// Allocation `(k_1, ..., k_p)` of a total budget over `p >= 1` phases.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BudgetSplit(Vec<usize>);

impl BudgetSplit {
    pub fn new(allocations: Vec<usize>) -> Result<Self> {
        if allocations.is_empty() {
            return Err(Error::InvalidSplit("a split needs at least one phase".into()));
        }
        Ok(Self(allocations))
    }

    /// Like [`BudgetSplit::new`] but also requires the allocations to sum to `total`.
    pub fn with_total(allocations: Vec<usize>, total: usize) -> Result<Self> {
        let split = Self::new(allocations)?;
        if split.total() != total {
            return Err(Error::InvalidSplit(format!(
                "{split} sums to {}, expected {total}",
                split.total()
            )));
        }
        Ok(split)
    }

    pub fn single(k: usize) -> Self {
        Self(vec![k])
    }

    pub fn allocations(&self) -> &[usize] {
        &self.0
    }

    pub fn phases(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    /// The equivalent split with empty phases dropped; `(0, ..., 0)` becomes `(0)`.
    pub fn canonical(&self) -> Self {
        let kept: Vec<usize> = self.0.iter().copied().filter(|&k| k > 0).collect();
        if kept.is_empty() {
            Self(vec![0])
        } else {
            Self(kept)
        }
    }

    pub fn is_degenerate(&self) -> bool {
        self.0.len() > 1 && self.0.contains(&0)
    }
}

impl fmt::Display for BudgetSplit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

impl FromStr for BudgetSplit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let inner = s.trim().trim_start_matches('(').trim_end_matches(')');
        let parts = inner
            .split(|c: char| c == ',' || c == ':' || c.is_whitespace())
            .filter(|t| !t.is_empty())
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::InvalidSplit(format!("bad allocation {t:?} in {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(parts)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseSummary {
    pub phase: usize,
    pub budget: usize,
    /// Influenced-set sizes at the end of this phase.
    pub cumulative: Distribution,
    /// Nodes newly influenced during this phase.
    pub incremental: Distribution,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseReport {
    pub split: BudgetSplit,
    pub selector: SelectorKind,
    pub ensemble_size: usize,
    pub master_seed: u64,
    pub phases: Vec<PhaseSummary>,
    pub first_phase_seeds: Vec<NodeId>,
    /// `later_seeds[q][i]`: seeds chosen in phase `q + 2` for live graph `i`.
    pub later_seeds: Vec<Vec<Vec<NodeId>>>,
    pub selector_invocations: usize,
    /// The split asked for more seeds than some state had uninfluenced nodes.
    pub clamped: bool,
}

impl PhaseReport {
    /// Expected number of nodes influenced in each phase (`beta_q`).
    pub fn phase_means(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.incremental.mean).collect()
    }

    pub fn cumulative_means(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.cumulative.mean).collect()
    }

    pub fn final_distribution(&self) -> &Distribution {
        &self.phases.last().expect("at least one phase").cumulative
    }

    pub fn final_mean(&self) -> f64 {
        self.final_distribution().mean
    }

    pub fn final_std(&self) -> f64 {
        self.final_distribution().std_dev
    }

    /// How often each node was chosen in phase `phase` (1-based) across live graphs,
    /// most frequent first, ties by node id.
    pub fn seed_frequency(&self, phase: usize) -> Vec<(NodeId, usize)> {
        let mut counts: HashMap<NodeId, usize> = HashMap::new();
        if phase == 1 {
            for &s in &self.first_phase_seeds {
                counts.insert(s, self.ensemble_size);
            }
        } else if let Some(per_state) = self.later_seeds.get(phase - 2) {
            for seeds in per_state {
                for &s in seeds {
                    *counts.entry(s).or_default() += 1;
                }
            }
        }
        let mut ranked: Vec<_> = counts.into_iter().collect();
        ranked.sort_by_key(|&(v, c)| (std::cmp::Reverse(c), v));
        ranked
    }
}

/// Evaluation ensemble plus the planning ensemble the selector averages over.
///
/// Build once and reuse across splits: the planning ensemble is sampled only once.
pub struct MultiphaseRunner<'a> {
    ensemble: &'a LiveGraphEnsemble,
    separate_planning: Option<LiveGraphEnsemble>,
    spec: SelectorSpec,
}

impl<'a> MultiphaseRunner<'a> {
    pub fn new(ensemble: &'a LiveGraphEnsemble, spec: &SelectorSpec) -> Result<Self> {
        spec.validate()?;
        let separate_planning = if spec.planning_graphs == 0 || spec.kind != SelectorKind::Greedy {
            None
        } else {
            Some(LiveGraphEnsemble::sample(
                ensemble.shared_graph(),
                spec.planning_graphs,
                livegraph::derive_seed(ensemble.master_seed(), livegraph::PLANNING_DOMAIN),
            )?)
        };
        Ok(Self {
            ensemble,
            separate_planning,
            spec: spec.clone(),
        })
    }

    pub fn ensemble(&self) -> &LiveGraphEnsemble {
        self.ensemble
    }

    pub fn planning(&self) -> &LiveGraphEnsemble {
        self.separate_planning.as_ref().unwrap_or(self.ensemble)
    }

    pub fn spec(&self) -> &SelectorSpec {
        &self.spec
    }

    /// Seeds for a state with the given influenced set (`None` for the fresh network).
    pub fn select(&self, influenced: Option<&FixedBitSet>, budget: usize) -> Result<Vec<NodeId>> {
        select_seeds(self.planning(), influenced, budget, &self.spec)
    }

    /// Reach sizes of a fixed seed set on every evaluation live graph.
    pub fn evaluate_seeds(&self, seeds: &[NodeId]) -> Distribution {
        Distribution::from_values(self.ensemble.reach_sizes(seeds))
    }

    pub fn run(&self, split: &BudgetSplit) -> Result<PhaseReport> {
        let e = self.ensemble;
        let m = e.len();
        let n = e.node_count();
        let allocations = split.allocations();
        let p = allocations.len();
        let mut clamped = false;
        if split.total() > n {
            warn!("split {split} exceeds the {n} nodes of the graph; the surplus cannot be spent");
            clamped = true;
        }

        let mut state = DiffusionState::fresh(e);
        let mut previous = vec![0u64; m];
        let mut carry = vec![0usize; m];
        let mut phases = Vec::with_capacity(p);
        let mut first_phase_seeds = Vec::new();
        let mut later_seeds = Vec::new();
        let mut invocations = 0;

        for (q, &k) in allocations.iter().enumerate() {
            let terminal = q + 1 == p;
            let seeds: Vec<Vec<NodeId>> = if q == 0 {
                let chosen = self.select(None, k)?;
                invocations += 1;
                first_phase_seeds = chosen.clone();
                vec![chosen; m]
            } else {
                let budgets: Vec<usize> = (0..m).map(|i| k + if terminal { carry[i] } else { 0 }).collect();
                let (groups, owner) = group_states(&state, &budgets);
                invocations += groups.len();
                let chosen: Vec<Vec<NodeId>> = groups
                    .par_iter()
                    .map(|&i| self.select(Some(&state.influenced[i]), budgets[i]))
                    .collect::<Result<_>>()?;
                let per_state: Vec<Vec<NodeId>> = owner.iter().map(|&g| chosen[g].clone()).collect();
                later_seeds.push(per_state.clone());
                per_state
            };

            for i in 0..m {
                let asked = k + if terminal && q > 0 { carry[i] } else { 0 };
                if seeds[i].len() < asked {
                    clamped = true;
                    if !terminal {
                        carry[i] += asked - seeds[i].len();
                    }
                }
            }

            state = advance_state(e, &state, &seeds)?;
            let sizes = state.sizes();
            let increments = sizes.iter().zip(&previous).map(|(a, b)| a - b).collect();
            phases.push(PhaseSummary {
                phase: q + 1,
                budget: k,
                cumulative: Distribution::from_values(sizes.clone()),
                incremental: Distribution::from_values(increments),
            });
            previous = sizes;
        }

        Ok(PhaseReport {
            split: split.clone(),
            selector: self.spec.kind,
            ensemble_size: m,
            master_seed: e.master_seed(),
            phases,
            first_phase_seeds,
            later_seeds,
            selector_invocations: invocations,
            clamped,
        })
    }

    /// Compares the spread of phase 2 under a multiphase run (`sigma_p`) with the
    /// extra spread a single phase gets from growing its budget from `k_1` to `k_1 + k_2`
    /// with nested seed sets (`sigma_s`). Both are sample standard deviations over the
    /// same live graphs.
    pub fn sigma_comparison(&self, split: &BudgetSplit) -> Result<SigmaComparison> {
        if split.phases() < 2 {
            return Err(Error::InvalidSplit("sigma comparison needs at least two phases".into()));
        }
        let report = self.run(split)?;
        let (k1, k2) = (split.allocations()[0], split.allocations()[1]);
        let nested = self.select(None, k1 + k2)?;
        let before = self.ensemble.reach_sizes(&nested[..k1.min(nested.len())]);
        let after = self.ensemble.reach_sizes(&nested);
        let extra = Distribution::from_values(after.iter().zip(&before).map(|(a, b)| a - b).collect());
        Ok(SigmaComparison {
            sigma_phase: report.phases[1].incremental.std_dev,
            sigma_single: extra.std_dev,
            phase_mean: report.phases[1].incremental.mean,
            single_mean: extra.mean,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaComparison {
    pub sigma_phase: f64,
    pub sigma_single: f64,
    pub phase_mean: f64,
    pub single_mean: f64,
}

/// Groups states by (influenced set, budget). Returns one representative per group, in
/// first-occurrence order, and each state's group index.
fn group_states(state: &DiffusionState, budgets: &[usize]) -> (Vec<usize>, Vec<usize>) {
    let mut index: HashMap<(&FixedBitSet, usize), usize> = HashMap::new();
    let mut reps = Vec::new();
    let owner = state
        .influenced
        .iter()
        .zip(budgets)
        .enumerate()
        .map(|(i, (set, &b))| {
            *index.entry((set, b)).or_insert_with(|| {
                reps.push(i);
                reps.len() - 1
            })
        })
        .collect();
    (reps, owner)
}

/// Runs `split` on `ensemble` with a freshly built [`MultiphaseRunner`].
pub fn run_multiphase(ensemble: &LiveGraphEnsemble, split: &BudgetSplit, spec: &SelectorSpec) -> Result<PhaseReport> {
    MultiphaseRunner::new(ensemble, spec)?.run(split)
}

pub fn sigma_comparison(
    ensemble: &LiveGraphEnsemble,
    split: &BudgetSplit,
    spec: &SelectorSpec,
) -> Result<SigmaComparison> {
    MultiphaseRunner::new(ensemble, spec)?.sigma_comparison(split)
}

/// Largest relative deviation of a phase's mean spread from an even share of the final
/// mean: `max_q |beta_q - F/p| / (F/p)`. Zero for single-phase reports.
pub fn equal_spacing_check(report: &PhaseReport) -> f64 {
    let p = report.phases.len();
    let share = report.final_mean() / p as f64;
    if p < 2 || share == 0.0 {
        return 0.0;
    }
    report
        .phase_means()
        .iter()
        .map(|b| (b - share).abs() / share)
        .fold(0.0, f64::max)
}
