//! Search for the budget split with the largest expected final spread.
//!
//! The default strategy evaluates a coarse grid (every phase gets a positive multiple of
//! `coarse_step * k`), then refines around the best `top_refine` coarse splits: first
//! each free coordinate is moved by `+-fine_step * k`, then the hypercube spanned by the
//! best move per coordinate is filled in. Two-phase searches simply scan every multiple
//! of `fine_step * k`.
//!
//! Evaluations are memoised by canonical split (empty phases dropped), so a split that
//! is equivalent to one seen before, including a fewer-phase split from an earlier
//! search sharing the memo, is recalled instead of re-run.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::multiphase::{BudgetSplit, MultiphaseRunner};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStrategy {
    /// Coarse grid plus hypercube refinement.
    Grid,
    /// Coordinate-wise golden-section search on the fine grid; assumes a unimodal
    /// landscape.
    Unimodal,
}

impl FromStr for SearchStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "grid" => Ok(Self::Grid),
            "unimodal" | "golden" => Ok(Self::Unimodal),
            other => Err(Error::validation(format!("unknown search strategy {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPlan {
    pub total_budget: usize,
    pub phases: usize,
    pub coarse_step: f64,
    pub fine_step: f64,
    pub top_refine: usize,
    pub strategy: SearchStrategy,
}

impl SearchPlan {
    pub fn new(total_budget: usize, phases: usize) -> Self {
        Self {
            total_budget,
            phases,
            coarse_step: 0.1,
            fine_step: 0.05,
            top_refine: 10,
            strategy: SearchStrategy::Grid,
        }
    }

    fn cells(step: f64) -> Result<usize> {
        if !(step > 0.0 && step <= 1.0) {
            return Err(Error::validation(format!("grid step {step} must lie in (0, 1]")));
        }
        let cells = (1.0 / step).round();
        if (cells * step - 1.0).abs() > 1e-9 {
            return Err(Error::validation(format!("grid step {step} does not divide 1")));
        }
        Ok(cells as usize)
    }

    pub fn coarse_cells(&self) -> Result<usize> {
        Self::cells(self.coarse_step)
    }

    pub fn fine_cells(&self) -> Result<usize> {
        Self::cells(self.fine_step)
    }

    /// Fine move size in seeds: `floor(fine_step * k)`, at least one.
    pub fn fine_delta(&self) -> usize {
        ((self.fine_step * self.total_budget as f64 + 1e-9).floor() as usize).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.phases == 0 {
            return Err(Error::validation("a search needs at least one phase"));
        }
        if self.top_refine == 0 {
            return Err(Error::validation("top_refine must be at least 1"));
        }
        self.coarse_cells()?;
        self.fine_cells()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Coarse,
    Exhaustive,
    FinePerturbation,
    FineHypercube,
    /// A fewer-phase result reused as a split with empty phases.
    Appended,
    Unimodal,
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Coarse => "coarse",
            Self::Exhaustive => "exhaustive",
            Self::FinePerturbation => "fine-perturbation",
            Self::FineHypercube => "fine-hypercube",
            Self::Appended => "appended",
            Self::Unimodal => "unimodal",
        })
    }
}

/// What evaluating a split yields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitOutcome {
    pub mean: f64,
    pub std_dev: f64,
    /// Mean number of nodes influenced in each phase of the canonical split.
    pub phase_means: Vec<f64>,
}

pub trait SplitEvaluator: Sync {
    fn evaluate(&self, split: &BudgetSplit) -> Result<SplitOutcome>;
}

impl SplitEvaluator for MultiphaseRunner<'_> {
    fn evaluate(&self, split: &BudgetSplit) -> Result<SplitOutcome> {
        let report = self.run(split)?;
        Ok(SplitOutcome {
            mean: report.final_mean(),
            std_dev: report.final_std(),
            phase_means: report.phase_means(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub split: BudgetSplit,
    pub mean: f64,
    pub std_dev: f64,
    /// Per-phase means aligned with `split` (zero for empty phases).
    pub phase_means: Vec<f64>,
    pub provenance: Provenance,
    pub recalled: bool,
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Canonical split -> outcome, shared between searches.
#[derive(Debug, Default)]
pub struct SplitMemo {
    outcomes: BTreeMap<BudgetSplit, SplitOutcome>,
    evaluations: usize,
}

impl SplitMemo {
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of splits actually evaluated (recalls excluded).
    pub fn evaluations(&self) -> usize {
        self.evaluations
    }

    pub fn get(&self, split: &BudgetSplit) -> Option<&SplitOutcome> {
        self.outcomes.get(&split.canonical())
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchResult {
    pub plan: SearchPlan,
    pub trace: Vec<TraceRow>,
    pub best: BudgetSplit,
    pub best_mean: f64,
    /// Every examined split had the same mean.
    pub flat_landscape: bool,
    /// New evaluations this search performed.
    pub evaluations: usize,
}

impl SearchResult {
    pub fn row(&self, split: &BudgetSplit) -> Option<&TraceRow> {
        self.trace.iter().find(|r| &r.split == split)
    }

    /// `(k1, k2, k3, mean)` for every three-phase split examined.
    pub fn heatmap_rows(&self) -> Vec<(usize, usize, usize, f64)> {
        self.trace
            .iter()
            .filter(|r| r.split.phases() == 3)
            .map(|r| {
                let a = r.split.allocations();
                (a[0], a[1], a[2], r.mean)
            })
            .collect()
    }
}

/// Every `p`-phase split whose phases are all positive multiples of `coarse_step * k`.
///
/// Free coordinates are floored when `coarse_step * k` is fractional and the terminal
/// phase takes the remainder; splits that then collide or get an empty phase are
/// dropped. For `k` a multiple of the cell count there are `C(cells - 1, p - 1)`.
pub fn coarse_grid(plan: &SearchPlan) -> Result<Vec<BudgetSplit>> {
    plan.validate()?;
    let cells = plan.coarse_cells()?;
    let k = plan.total_budget;
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for parts in compositions(cells, plan.phases) {
        let mut alloc: Vec<usize> = parts[..parts.len() - 1].iter().map(|&c| c * k / cells).collect();
        let used: usize = alloc.iter().sum();
        if used > k {
            continue;
        }
        alloc.push(k - used);
        if alloc.contains(&0) {
            continue;
        }
        let split = BudgetSplit::new(alloc)?;
        if seen.insert(split.clone()) {
            out.push(split);
        }
    }
    Ok(out)
}

/// Compositions of `total` into `parts` positive integers, lexicographic order.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            if left > 0 {
                prefix.push(left);
                out.push(prefix.clone());
                prefix.pop();
            }
            return;
        }
        for c in 1..left {
            prefix.push(c);
            rec(left - c, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if parts > 0 {
        rec(total, parts, &mut Vec::new(), &mut out);
    }
    out
}

/// Two-phase splits `(floor(j k / cells), rest)` for `j = 0..=cells` on the fine grid.
pub fn two_phase_grid(plan: &SearchPlan) -> Result<Vec<BudgetSplit>> {
    let cells = plan.fine_cells()?;
    let k = plan.total_budget;
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for j in 0..=cells {
        let first = j * k / cells;
        let split = BudgetSplit::new(vec![first, k - first])?;
        if seen.insert(split.clone()) {
            out.push(split);
        }
    }
    Ok(out)
}

fn with_free(free: &[usize], total: usize) -> Option<BudgetSplit> {
    let used: usize = free.iter().sum();
    (used <= total).then(|| {
        let mut alloc = free.to_vec();
        alloc.push(total - used);
        BudgetSplit::new(alloc).expect("non-empty")
    })
}

/// Moves each free coordinate of `best` by `+-delta`, dropping any split with a
/// negative coordinate. At most `2 (p - 1)` splits.
pub fn perturbations(best: &BudgetSplit, delta: usize) -> Vec<BudgetSplit> {
    let total = best.total();
    let free = &best.allocations()[..best.phases() - 1];
    let mut out = Vec::new();
    for q in 0..free.len() {
        for up in [false, true] {
            let mut moved = free.to_vec();
            if up {
                moved[q] += delta;
            } else if let Some(v) = moved[q].checked_sub(delta) {
                moved[q] = v;
            } else {
                continue;
            }
            out.extend(with_free(&moved, total));
        }
    }
    out
}

/// Hypercube vertices with coordinate `q` in `{h_q, z_q}`, excluding `best` and the
/// vertices that differ from it in one coordinate (those are perturbations). At most
/// `2^(p-1) - p` splits.
pub fn hypercube(best: &BudgetSplit, winners: &[usize]) -> Vec<BudgetSplit> {
    let total = best.total();
    let free = &best.allocations()[..best.phases() - 1];
    let moving: Vec<usize> = (0..free.len()).filter(|&q| winners[q] != free[q]).collect();
    let mut out = Vec::new();
    for mask in 0u64..(1 << moving.len()) {
        if mask.count_ones() < 2 {
            continue;
        }
        let mut vertex = free.to_vec();
        for (bit, &q) in moving.iter().enumerate() {
            if mask >> bit & 1 == 1 {
                vertex[q] = winners[q];
            }
        }
        out.extend(with_free(&vertex, total));
    }
    out
}

/// Both refinement steps around `best`: the perturbations, then (after they are
/// evaluated through `value`) the new hypercube vertices. Returns all new splits in
/// order; at most `2^(p-1) - p + 2(p-1)`.
pub fn fine_neighborhood(
    best: &BudgetSplit,
    plan: &SearchPlan,
    mut value: impl FnMut(&BudgetSplit) -> Result<f64>,
) -> Result<Vec<BudgetSplit>> {
    let delta = plan.fine_delta();
    let moves = perturbations(best, delta);
    let mut scores = BTreeMap::new();
    for s in &moves {
        scores.insert(s.clone(), value(s)?);
    }
    let winners = coordinate_winners(best, delta, &scores, value(best)?);
    let mut out = moves;
    out.extend(hypercube(best, &winners));
    Ok(out)
}

/// Best of `{h_q - delta, h_q, h_q + delta}` per free coordinate; staying put wins ties.
fn coordinate_winners(best: &BudgetSplit, delta: usize, scores: &BTreeMap<BudgetSplit, f64>, here: f64) -> Vec<usize> {
    let total = best.total();
    let free = &best.allocations()[..best.phases() - 1];
    (0..free.len())
        .map(|q| {
            let mut winner = (here, free[q]);
            for candidate in [free[q].checked_sub(delta), Some(free[q] + delta)]
                .into_iter()
                .flatten()
            {
                let mut moved = free.to_vec();
                moved[q] = candidate;
                if let Some(v) = with_free(&moved, total).and_then(|s| scores.get(&s).copied()) {
                    if v > winner.0 {
                        winner = (v, candidate);
                    }
                }
            }
            winner.1
        })
        .collect()
}

struct Search<'a, E: SplitEvaluator> {
    evaluator: &'a E,
    memo: &'a mut SplitMemo,
    trace: Vec<TraceRow>,
    examined: BTreeSet<BudgetSplit>,
    evaluations: usize,
}

impl<E: SplitEvaluator> Search<'_, E> {
    /// Evaluates the unseen canonical forms of `splits` in parallel, then records a
    /// trace row for each split not examined before in this search.
    fn batch(&mut self, splits: &[BudgetSplit], provenance: Provenance) -> Result<()> {
        let mut fresh: Vec<BudgetSplit> = Vec::new();
        for s in splits {
            let key = s.canonical();
            if !self.memo.outcomes.contains_key(&key) && !fresh.contains(&key) {
                fresh.push(key);
            }
        }
        let results: Vec<(SplitOutcome, f64)> = fresh
            .par_iter()
            .map(|s| {
                let t = Instant::now();
                self.evaluator.evaluate(s).map(|o| (o, t.elapsed().as_secs_f64()))
            })
            .collect::<Result<_>>()?;
        let mut timings = BTreeMap::new();
        for (key, (outcome, secs)) in fresh.iter().zip(results) {
            self.memo.outcomes.insert(key.clone(), outcome);
            timings.insert(key.clone(), secs);
        }
        self.memo.evaluations += fresh.len();
        self.evaluations += fresh.len();

        for s in splits {
            if !self.examined.insert(s.clone()) {
                continue;
            }
            let key = s.canonical();
            let outcome = &self.memo.outcomes[&key];
            let recalled = !timings.contains_key(&key);
            let provenance = if recalled && key.phases() < s.phases() {
                Provenance::Appended
            } else {
                provenance
            };
            self.trace.push(TraceRow {
                split: s.clone(),
                mean: outcome.mean,
                std_dev: outcome.std_dev,
                phase_means: spread_phase_means(s, &outcome.phase_means),
                provenance,
                recalled,
                wall_seconds: timings.get(&key).copied().unwrap_or(0.0),
            });
            // later duplicates in the same batch are recalls
            timings.remove(&key);
        }
        Ok(())
    }

    fn mean(&self, split: &BudgetSplit) -> f64 {
        self.memo.outcomes[&split.canonical()].mean
    }
}

/// Places canonical per-phase means back at the non-empty phases of `split`.
fn spread_phase_means(split: &BudgetSplit, canonical: &[f64]) -> Vec<f64> {
    if split.allocations().iter().all(|&k| k == 0) {
        let mut out = vec![0.0; split.phases()];
        out[0] = canonical.first().copied().unwrap_or(0.0);
        return out;
    }
    let mut it = canonical.iter();
    split
        .allocations()
        .iter()
        .map(|&k| if k == 0 { 0.0 } else { *it.next().unwrap_or(&0.0) })
        .collect()
}

/// Ranks by mean, higher first; equal means go to the lexicographically smaller split.
fn better(a: (&BudgetSplit, f64), b: (&BudgetSplit, f64)) -> bool {
    a.1 > b.1 || (a.1 == b.1 && a.0 < b.0)
}

/// Runs the search described by `plan`, recalling and recording outcomes in `memo`.
pub fn search_optimal_split<E: SplitEvaluator>(
    evaluator: &E,
    plan: &SearchPlan,
    memo: &mut SplitMemo,
) -> Result<SearchResult> {
    plan.validate()?;
    let mut search = Search {
        evaluator,
        memo,
        trace: Vec::new(),
        examined: BTreeSet::new(),
        evaluations: 0,
    };
    let k = plan.total_budget;

    match (plan.phases, plan.strategy) {
        (1, _) => search.batch(&[BudgetSplit::single(k)], Provenance::Exhaustive)?,
        (2, SearchStrategy::Grid) => search.batch(&two_phase_grid(plan)?, Provenance::Exhaustive)?,
        (_, SearchStrategy::Grid) => {
            let coarse = coarse_grid(plan)?;
            search.batch(&coarse, Provenance::Coarse)?;
            let mut ranked: Vec<(BudgetSplit, f64)> = coarse.iter().map(|s| (s.clone(), search.mean(s))).collect();
            ranked.sort_by(|a, b| {
                if better((&a.0, a.1), (&b.0, b.1)) {
                    std::cmp::Ordering::Less
                } else if better((&b.0, b.1), (&a.0, a.1)) {
                    std::cmp::Ordering::Greater
                } else {
                    std::cmp::Ordering::Equal
                }
            });
            let delta = plan.fine_delta();
            for (h, here) in ranked.into_iter().take(plan.top_refine) {
                let moves = perturbations(&h, delta);
                search.batch(&moves, Provenance::FinePerturbation)?;
                let scores = moves.iter().map(|s| (s.clone(), search.mean(s))).collect();
                let winners = coordinate_winners(&h, delta, &scores, here);
                search.batch(&hypercube(&h, &winners), Provenance::FineHypercube)?;
            }
        }
        (_, SearchStrategy::Unimodal) => unimodal(&mut search, plan)?,
    }

    // fewer-phase results already in the memo stand in for splits with empty phases
    let lower: Vec<BudgetSplit> = search
        .memo
        .outcomes
        .keys()
        .filter(|s| s.phases() < plan.phases && s.total() == k)
        .map(|s| {
            let mut alloc = vec![0; plan.phases - s.phases()];
            alloc.extend_from_slice(s.allocations());
            BudgetSplit::new(alloc).expect("non-empty")
        })
        .collect();
    search.batch(&lower, Provenance::Appended)?;

    let mut best = &search.trace[0];
    for row in &search.trace[1..] {
        if better((&row.split, row.mean), (&best.split, best.mean)) {
            best = row;
        }
    }
    let flat = search.trace.iter().all(|r| r.mean == best.mean);
    Ok(SearchResult {
        plan: plan.clone(),
        best: best.split.clone(),
        best_mean: best.mean,
        flat_landscape: flat,
        evaluations: search.evaluations,
        trace: search.trace,
    })
}

/// Cyclic coordinate search: golden-section over each free coordinate in fine-step
/// units with the terminal phase absorbing the change, until a sweep stops improving.
fn unimodal<E: SplitEvaluator>(search: &mut Search<'_, E>, plan: &SearchPlan) -> Result<()> {
    let k = plan.total_budget;
    let p = plan.phases;
    let delta = plan.fine_delta();
    let mut free = vec![k / p; p - 1];
    let start = with_free(&free, k).expect("equal shares fit");
    search.batch(&[start.clone()], Provenance::Unimodal)?;
    let mut current = search.mean(&start);

    for _sweep in 0..8 {
        let mut improved = false;
        for q in 0..p - 1 {
            let others: usize = free.iter().enumerate().filter(|&(i, _)| i != q).map(|(_, v)| v).sum();
            let span = (k - others) / delta;
            let probe = |steps: usize, search: &mut Search<'_, E>| -> Result<f64> {
                let mut f = free.clone();
                f[q] = steps * delta;
                let s = with_free(&f, k).expect("within budget");
                search.batch(&[s.clone()], Provenance::Unimodal)?;
                Ok(search.mean(&s))
            };
            let (mut lo, mut hi) = (0usize, span);
            while hi - lo > 3 {
                let a = lo + (hi - lo) * 382 / 1000;
                let b = lo + (hi - lo) * 618 / 1000;
                if probe(a, search)? < probe(b, search)? {
                    lo = a;
                } else {
                    hi = b;
                }
            }
            let mut best = (f64::NEG_INFINITY, 0);
            for steps in lo..=hi {
                let v = probe(steps, search)?;
                if v > best.0 {
                    best = (v, steps);
                }
            }
            if best.0 > current {
                current = best.0;
                free[q] = best.1 * delta;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::Mutex;

    fn binom(n: usize, k: usize) -> usize {
        (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
    }

    /// Smooth concave landscape peaking near `peak`; records every evaluation.
    struct Bowl {
        peak: Vec<f64>,
        calls: Mutex<Vec<BudgetSplit>>,
    }

    impl Bowl {
        fn new(peak: &[f64]) -> Self {
            Self {
                peak: peak.to_vec(),
                calls: Mutex::new(Vec::new()),
            }
        }
    }

    impl SplitEvaluator for Bowl {
        fn evaluate(&self, split: &BudgetSplit) -> Result<SplitOutcome> {
            self.calls.lock().unwrap().push(split.clone());
            let a = split.allocations();
            let mut mean = 1000.0;
            for (q, &x) in a.iter().enumerate() {
                let target = self.peak.get(q).copied().unwrap_or(0.0);
                mean -= (x as f64 - target).powi(2);
            }
            mean -= 50.0 * (self.peak.len() as f64 - a.len() as f64).abs();
            Ok(SplitOutcome {
                mean,
                std_dev: 1.0,
                phase_means: a.iter().map(|&x| x as f64).collect(),
            })
        }
    }

    #[test]
    fn coarse_grid_sizes() {
        for (p, want) in [(2, 9), (3, 36), (4, 84), (5, 126)] {
            let grid = coarse_grid(&SearchPlan::new(200, p)).unwrap();
            assert_eq!(grid.len(), want);
            assert_eq!(grid.len(), binom(9, p - 1));
            assert!(grid.iter().all(|s| s.total() == 200 && !s.allocations().contains(&0)));
        }
        let two = coarse_grid(&SearchPlan::new(100, 2)).unwrap();
        assert_eq!(two.first().unwrap().allocations(), &[10, 90]);
        assert_eq!(two.last().unwrap().allocations(), &[90, 10]);
    }

    #[test]
    fn coarse_grid_floors_fractional_steps() {
        let grid = coarse_grid(&SearchPlan::new(25, 2)).unwrap();
        assert_eq!(grid[0].allocations(), &[2, 23]);
        assert!(grid.iter().all(|s| s.total() == 25));
    }

    #[test]
    fn hypercube_of_three_phases() {
        // h = (60, 60, 80) on k = 200, every increment wins
        let h = BudgetSplit::new(vec![60, 60, 80]).unwrap();
        let cube = hypercube(&h, &[70, 70]);
        assert_eq!(cube, vec![BudgetSplit::new(vec![70, 70, 60]).unwrap()]);
        assert!(hypercube(&h, &[60, 60]).is_empty());
    }

    #[test]
    fn neighbourhood_size_bound() {
        for p in 2..=6usize {
            let k = 200;
            let h = BudgetSplit::new(vec![k / p; p - 1].into_iter().chain([k - (k / p) * (p - 1)]).collect()).unwrap();
            let plan = SearchPlan::new(k, p);
            // every decrease improves, so the hypercube is full-dimensional
            let new = fine_neighborhood(&h, &plan, |s| {
                Ok(-(s.allocations()[..p - 1].iter().sum::<usize>() as f64))
            })
            .unwrap();
            let bound = (1usize << (p - 1)) - p + 2 * (p - 1);
            assert_eq!(new.len(), bound, "p = {p}");
        }
        assert_eq!((1usize << 4) - 5 + 2 * 4, 19);
    }

    #[test]
    fn flat_neighbourhood_only_perturbs() {
        let h = BudgetSplit::new(vec![40, 60, 100]).unwrap();
        let new = fine_neighborhood(&h, &SearchPlan::new(200, 3), |_| Ok(1.0)).unwrap();
        assert_eq!(new.len(), 4);
    }

    #[test]
    fn perturbations_respect_non_negativity() {
        let h = BudgetSplit::new(vec![5, 190, 5]).unwrap();
        // 5 - 10 < 0, and raising either free phase leaves a negative terminal phase
        assert_eq!(perturbations(&h, 10), vec![BudgetSplit::new(vec![5, 180, 15]).unwrap()]);
        let h = BudgetSplit::new(vec![60, 60, 80]).unwrap();
        let moves = perturbations(&h, 10);
        assert_eq!(moves.len(), 4);
        assert!(moves.iter().all(|s| s.total() == 200));
    }

    #[test]
    fn grid_search_memoises_and_finds_peak() {
        let bowl = Bowl::new(&[40.0, 60.0, 100.0]);
        let mut memo = SplitMemo::new();
        let result = search_optimal_split(&bowl, &SearchPlan::new(200, 3), &mut memo).unwrap();
        assert_eq!(result.best.allocations(), &[40, 60, 100]);
        let calls = bowl.calls.lock().unwrap();
        let unique: HashSet<_> = calls.iter().collect();
        assert_eq!(unique.len(), calls.len(), "a split was evaluated twice");
        assert_eq!(memo.evaluations(), calls.len());
        for s in coarse_grid(&SearchPlan::new(200, 3)).unwrap() {
            assert!(result.best_mean >= result.row(&s).unwrap().mean);
        }
    }

    #[test]
    fn two_phase_search_is_exhaustive_on_fine_grid() {
        let bowl = Bowl::new(&[7.0, 13.0]);
        let mut memo = SplitMemo::new();
        let result = search_optimal_split(&bowl, &SearchPlan::new(20, 2), &mut memo).unwrap();
        assert_eq!(result.trace.len(), 21);
        assert_eq!(result.best.allocations(), &[7, 13]);
        // (0, 20) and (20, 0) are both the single-phase split
        assert_eq!(memo.evaluations(), 20);
    }

    #[test]
    fn lower_phase_results_are_appended() {
        let bowl = Bowl::new(&[10.0, 10.0]);
        let mut memo = SplitMemo::new();
        search_optimal_split(&bowl, &SearchPlan::new(20, 2), &mut memo).unwrap();
        let before = memo.evaluations();
        let three = search_optimal_split(&bowl, &SearchPlan::new(20, 3), &mut memo).unwrap();
        let appended: Vec<_> = three
            .trace
            .iter()
            .filter(|r| r.provenance == Provenance::Appended)
            .collect();
        assert!(!appended.is_empty());
        assert!(appended.iter().all(|r| r.recalled && r.split.is_degenerate()));
        // the two-phase peak beats every three-phase split on this landscape
        assert_eq!(three.best.canonical().allocations(), &[10, 10]);
        assert_eq!(memo.evaluations() - before, three.evaluations);
    }

    #[test]
    fn flat_landscape_is_flagged() {
        struct Flat;
        impl SplitEvaluator for Flat {
            fn evaluate(&self, split: &BudgetSplit) -> Result<SplitOutcome> {
                Ok(SplitOutcome {
                    mean: 5.0,
                    std_dev: 0.0,
                    phase_means: vec![0.0; split.phases()],
                })
            }
        }
        let result = search_optimal_split(&Flat, &SearchPlan::new(20, 3), &mut SplitMemo::new()).unwrap();
        assert!(result.flat_landscape);
        // ties resolve to the lexicographically smallest split
        let min = result.trace.iter().map(|r| r.split.clone()).min().unwrap();
        assert_eq!(result.best, min);
    }

    #[test]
    fn unimodal_strategy_climbs_to_peak() {
        let bowl = Bowl::new(&[30.0, 70.0, 100.0]);
        let plan = SearchPlan {
            strategy: SearchStrategy::Unimodal,
            ..SearchPlan::new(200, 3)
        };
        let result = search_optimal_split(&bowl, &plan, &mut SplitMemo::new()).unwrap();
        assert_eq!(result.best.allocations(), &[30, 70, 100]);
    }

    #[test]
    fn plan_validation() {
        let bad = SearchPlan {
            coarse_step: 0.3,
            ..SearchPlan::new(10, 3)
        };
        assert!(bad.validate().is_err());
        let bad = SearchPlan {
            top_refine: 0,
            ..SearchPlan::new(10, 3)
        };
        assert!(bad.validate().is_err());
    }
}
