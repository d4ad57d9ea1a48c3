//! Influenceability curves and decay analysis.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::budgetsearch::TraceRow;
use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::livegraph::LiveGraphEnsemble;
use crate::multiphase::{BudgetSplit, MultiphaseRunner, PhaseReport};
use crate::seedselect::{SelectorKind, SelectorSpec};

/// Expected spread `f(b)` of the first `b` seeds of one selector run, `b = 0..=k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceabilityCurve {
    pub points: Vec<f64>,
    pub seeds: Vec<NodeId>,
    pub selector: Option<SelectorKind>,
    pub ensemble_seed: Option<u64>,
    pub ensemble_size: usize,
}

impl InfluenceabilityCurve {
    /// A curve given directly by its values; `points[0]` must be 0 and the values
    /// non-decreasing.
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::validation("a curve needs at least the point f(0)"));
        }
        if points[0] != 0.0 {
            return Err(Error::validation("a curve must start at f(0) = 0"));
        }
        if points.iter().any(|v| !v.is_finite()) || points.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::validation("curve values must be finite and non-decreasing"));
        }
        Ok(Self {
            points,
            seeds: Vec::new(),
            selector: None,
            ensemble_seed: None,
            ensemble_size: 0,
        })
    }

    pub fn max_budget(&self) -> usize {
        self.points.len() - 1
    }

    pub fn value(&self, budget: usize) -> f64 {
        self.points[budget.min(self.max_budget())]
    }

    /// Linear interpolation between integer budgets.
    pub fn interpolate(&self, x: f64) -> f64 {
        let k = self.max_budget();
        if x <= 0.0 {
            return self.points[0];
        }
        if x >= k as f64 {
            return self.points[k];
        }
        let b = x.floor() as usize;
        let t = x - b as f64;
        self.points[b] + t * (self.points[b + 1] - self.points[b])
    }

    /// Smallest `x` with interpolated `f(x) >= level`.
    pub fn inverse(&self, level: f64) -> f64 {
        match self.points.iter().position(|&v| v >= level) {
            None => self.max_budget() as f64,
            Some(0) => 0.0,
            Some(b) => {
                let (lo, hi) = (self.points[b - 1], self.points[b]);
                (b - 1) as f64 + (level - lo) / (hi - lo)
            }
        }
    }

    /// Trapezoidal area under the curve scaled to the unit square, `None` when flat zero.
    pub fn normalized_area(&self) -> Option<f64> {
        let k = self.max_budget();
        let top = self.points[k];
        if top <= 0.0 || k == 0 {
            return None;
        }
        let sum: f64 = self.points.windows(2).map(|w| (w[0] + w[1]) / 2.0).sum();
        Some(sum / (k as f64 * top))
    }
}

/// Greedy-prefix curve of `spec`'s selector on `ensemble` up to `max_budget`.
pub fn build_curve(
    ensemble: &LiveGraphEnsemble,
    max_budget: usize,
    spec: &SelectorSpec,
) -> Result<InfluenceabilityCurve> {
    let runner = MultiphaseRunner::new(ensemble, spec)?;
    curve_from_runner(&runner, max_budget)
}

pub fn curve_from_runner(runner: &MultiphaseRunner<'_>, max_budget: usize) -> Result<InfluenceabilityCurve> {
    let ensemble = runner.ensemble();
    let seeds = runner.select(None, max_budget)?;
    let n = ensemble.node_count();
    let prefixes: Vec<Vec<u64>> = (0..ensemble.len())
        .into_par_iter()
        .map(|i| {
            let mut closed = fixedbitset::FixedBitSet::with_capacity(n);
            let mut size = 0u64;
            let mut out = Vec::with_capacity(seeds.len());
            for &s in &seeds {
                size += ensemble.extend_closure(i, &mut closed, &[s]) as u64;
                out.push(size);
            }
            out
        })
        .collect();
    let m = ensemble.len() as f64;
    let mut points = vec![0.0];
    for b in 0..seeds.len() {
        let total: u64 = prefixes.iter().map(|p| p[b]).sum();
        points.push(total as f64 / m);
    }
    // fewer seeds than asked means everything is influenced already
    let last = *points.last().expect("f(0)");
    points.resize(max_budget + 1, last);
    Ok(InfluenceabilityCurve {
        points,
        seeds,
        selector: Some(runner.spec().kind),
        ensemble_seed: Some(ensemble.master_seed()),
        ensemble_size: ensemble.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CurveType {
    RiseAndFlat,
    VeryConcave,
    LessConcave,
    Linear,
}

impl fmt::Display for CurveType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RiseAndFlat => "rise-and-flat",
            Self::VeryConcave => "very-concave",
            Self::LessConcave => "less-concave",
            Self::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveThresholds {
    /// Linear when the normalized area is within this of 1/2.
    pub linear_band: f64,
    /// Rise-and-flat when `f(0.1 k) / f(k)` reaches this.
    pub rise_ratio: f64,
    /// Very concave when the normalized area reaches this.
    pub concave_area: f64,
}

impl Default for CurveThresholds {
    fn default() -> Self {
        Self {
            linear_band: 0.05,
            rise_ratio: 0.8,
            concave_area: 0.75,
        }
    }
}

pub fn classify_curve(curve: &InfluenceabilityCurve, thresholds: &CurveThresholds) -> Result<CurveType> {
    if curve.points.len() < 3 {
        return Err(Error::validation("classifying a curve needs at least 3 points"));
    }
    let Some(area) = curve.normalized_area() else {
        log::warn!("influenceability curve is flat at zero; treating it as linear");
        return Ok(CurveType::Linear);
    };
    let k = curve.max_budget() as f64;
    let ratio = curve.interpolate(0.1 * k) / curve.value(curve.max_budget());
    Ok(if (area - 0.5).abs() <= thresholds.linear_band {
        CurveType::Linear
    } else if ratio >= thresholds.rise_ratio {
        CurveType::RiseAndFlat
    } else if area >= thresholds.concave_area {
        CurveType::VeryConcave
    } else {
        CurveType::LessConcave
    })
}

/// Splits the budget so that each phase accounts for an equal share of `f(k)` on the
/// curve; rise-and-flat curves get one seed in every non-terminal phase instead.
pub fn curve_based_split(
    curve: &InfluenceabilityCurve,
    phases: usize,
    thresholds: &CurveThresholds,
) -> Result<BudgetSplit> {
    if phases == 0 {
        return Err(Error::validation("a split needs at least one phase"));
    }
    let k = curve.max_budget();
    if phases == 1 {
        return Ok(BudgetSplit::single(k));
    }
    if curve.points.len() >= 3 && classify_curve(curve, thresholds)? == CurveType::RiseAndFlat {
        if k < phases {
            return Err(Error::InvalidSplit(format!(
                "budget {k} cannot give one seed to each of {phases} phases"
            )));
        }
        let mut alloc = vec![1; phases - 1];
        alloc.push(k - (phases - 1));
        return BudgetSplit::new(alloc);
    }
    let top = curve.value(k);
    let mut cuts = Vec::with_capacity(phases + 1);
    cuts.push(0usize);
    for j in 1..phases {
        let x = curve.inverse(j as f64 * top / phases as f64);
        let cut = ((x + 1e-9).floor() as usize).clamp(*cuts.last().expect("starts at 0"), k);
        cuts.push(cut);
    }
    cuts.push(k);
    BudgetSplit::new(cuts.windows(2).map(|w| w[1] - w[0]).collect())
}

fn check_delta(delta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::validation(format!("decay factor {delta} must lie in [0, 1]")));
    }
    Ok(())
}

/// `sum_q delta^q beta_q` with `q` counted from 1.
pub fn decay_value_of(phase_means: &[f64], delta: f64) -> Result<f64> {
    check_delta(delta)?;
    let mut weight = 1.0;
    let mut value = 0.0;
    for beta in phase_means {
        weight *= delta;
        value += weight * beta;
    }
    Ok(value)
}

pub fn decay_value(report: &PhaseReport, delta: f64) -> Result<f64> {
    decay_value_of(&report.phase_means(), delta)
}

/// Relative gain of the multi-phase spread over the single-phase spread, measured
/// against the multi-phase spread.
pub fn epsilon(single_spread: f64, multi_spread: f64) -> Result<f64> {
    if !(multi_spread > 0.0) || !single_spread.is_finite() {
        return Err(Error::validation("epsilon needs a positive multi-phase spread"));
    }
    Ok((multi_spread - single_spread) / multi_spread)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinDelta {
    pub delta: f64,
    /// Splitting never pays off, whatever the decay.
    pub never_advantageous: bool,
}

/// Smallest `delta` in `[0, 1]` with `delta^p - p delta + (p - 1 - eps) <= 0`.
pub fn min_delta(phases: usize, eps: f64) -> Result<MinDelta> {
    if phases < 2 {
        return Err(Error::validation("min_delta needs at least two phases"));
    }
    if eps.is_nan() || eps >= 1.0 {
        return Err(Error::validation(format!("epsilon {eps} must be below 1")));
    }
    if eps <= 0.0 {
        return Ok(MinDelta {
            delta: 1.0,
            never_advantageous: true,
        });
    }
    let p = phases as f64;
    let g = |d: f64| d.powi(phases as i32) - p * d + (p - 1.0 - eps);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > 1e-7 {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(MinDelta {
        delta: hi,
        never_advantageous: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayAnalysis {
    pub delta: f64,
    pub phase_means: Vec<f64>,
    pub value: f64,
    pub epsilon: f64,
    pub min_delta: MinDelta,
}

impl DecayAnalysis {
    pub fn new(phase_means: &[f64], single_spread: f64, delta: f64) -> Result<Self> {
        let total: f64 = phase_means.iter().sum();
        let eps = epsilon(single_spread, total)?;
        Ok(Self {
            delta,
            phase_means: phase_means.to_vec(),
            value: decay_value_of(phase_means, delta)?,
            epsilon: eps,
            min_delta: min_delta(phase_means.len().max(2), eps)?,
        })
    }

    pub fn from_report(report: &PhaseReport, single_spread: f64, delta: f64) -> Result<Self> {
        Self::new(&report.phase_means(), single_spread, delta)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayScan {
    pub delta: f64,
    /// Splits with their decayed value, best first.
    pub ranking: Vec<(BudgetSplit, f64)>,
    pub best: BudgetSplit,
    /// Largest gap between the winner's normalized per-phase spreads and normalized
    /// `delta^q`.
    pub max_deviation: f64,
    pub proportional: bool,
}

/// Re-ranks searched splits by decayed value. Empty phases are dropped first, so a
/// split with an empty phase is valued as the fewer-phase split it runs as.
pub fn decay_aware_split_scan(trace: &[TraceRow], delta: f64, tolerance: f64) -> Result<DecayScan> {
    check_delta(delta)?;
    if trace.is_empty() {
        return Err(Error::validation("decay scan needs at least one searched split"));
    }
    let mut ranking: Vec<(BudgetSplit, f64, Vec<f64>)> = Vec::with_capacity(trace.len());
    for row in trace {
        let betas: Vec<f64> = row
            .split
            .allocations()
            .iter()
            .zip(&row.phase_means)
            .filter(|(&k, _)| k > 0)
            .map(|(_, &b)| b)
            .collect();
        ranking.push((row.split.clone(), decay_value_of(&betas, delta)?, betas));
    }
    ranking.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let betas = &ranking[0].2;
    let total: f64 = betas.iter().sum();
    let weights: Vec<f64> = (1..=betas.len() as i32).map(|q| delta.powi(q)).collect();
    let weight_sum: f64 = weights.iter().sum();
    let max_deviation = if total > 0.0 && weight_sum > 0.0 {
        betas
            .iter()
            .zip(&weights)
            .map(|(b, w)| (b / total - w / weight_sum).abs())
            .fold(0.0, f64::max)
    } else {
        0.0
    };
    Ok(DecayScan {
        delta,
        best: ranking[0].0.clone(),
        ranking: ranking.into_iter().map(|(s, v, _)| (s, v)).collect(),
        max_deviation,
        proportional: max_deviation <= tolerance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::budgetsearch::Provenance;
    use crate::exact::{exact_spread, EnumerationLimit};
    use crate::graph::generate;
    use crate::WeightedDigraph;
    use approx::assert_abs_diff_eq;

    fn curve(f: impl Fn(f64) -> f64, k: usize) -> InfluenceabilityCurve {
        InfluenceabilityCurve::from_points((0..=k).map(|b| f(b as f64)).collect()).unwrap()
    }

    fn row(split: &[usize], betas: &[f64]) -> TraceRow {
        TraceRow {
            split: BudgetSplit::new(split.to_vec()).unwrap(),
            mean: betas.iter().sum(),
            std_dev: 0.0,
            phase_means: betas.to_vec(),
            provenance: Provenance::Coarse,
            recalled: false,
            wall_seconds: 0.0,
        }
    }

    #[test]
    fn classification_of_archetypes() {
        let t = CurveThresholds::default();
        assert_eq!(classify_curve(&curve(|b| b, 100), &t).unwrap(), CurveType::Linear);
        let sqrt = curve(|b| 50.0 * (b / 100.0).sqrt(), 100);
        assert_abs_diff_eq!(sqrt.normalized_area().unwrap(), 2.0 / 3.0, epsilon = 0.01);
        assert_eq!(classify_curve(&sqrt, &t).unwrap(), CurveType::LessConcave);
        let step = curve(|b| if b >= 10.0 { 7.0 } else { 0.7 * b }, 100);
        assert_eq!(classify_curve(&step, &t).unwrap(), CurveType::RiseAndFlat);
        let strong = curve(|b| 1.0 - (-b / 15.0).exp(), 100);
        assert_eq!(classify_curve(&strong, &t).unwrap(), CurveType::VeryConcave);
        assert_eq!(classify_curve(&curve(|_| 0.0, 10), &t).unwrap(), CurveType::Linear);
        assert!(classify_curve(&curve(|b| b, 1), &t).is_err());
    }

    #[test]
    fn curve_splits() {
        let t = CurveThresholds::default();
        let linear = curve(|b| 3.0 * b, 100);
        assert_eq!(curve_based_split(&linear, 2, &t).unwrap().allocations(), &[50, 50]);
        assert_eq!(
            curve_based_split(&linear, 4, &t).unwrap().allocations(),
            &[25, 25, 25, 25]
        );
        let sqrt = curve(|b| 80.0 * (b / 100.0).sqrt(), 100);
        assert_eq!(curve_based_split(&sqrt, 2, &t).unwrap().allocations(), &[25, 75]);
        let flat = curve(|b| if b >= 1.0 { 10.0 } else { 0.0 }, 20);
        assert_eq!(curve_based_split(&flat, 3, &t).unwrap().allocations(), &[1, 1, 18]);
        assert_eq!(curve_based_split(&linear, 1, &t).unwrap().allocations(), &[100]);
    }

    #[test]
    fn inverse_takes_smallest_budget_on_plateaus() {
        let c = InfluenceabilityCurve::from_points(vec![0.0, 2.0, 2.0, 4.0]).unwrap();
        assert_eq!(c.inverse(2.0), 1.0);
        assert_eq!(c.inverse(3.0), 2.5);
        assert_eq!(c.inverse(0.0), 0.0);
    }

    #[test]
    fn curve_rejects_bad_points() {
        assert!(InfluenceabilityCurve::from_points(vec![1.0, 2.0]).is_err());
        assert!(InfluenceabilityCurve::from_points(vec![0.0, 2.0, 1.0]).is_err());
    }

    #[test]
    fn decay_arithmetic() {
        assert_abs_diff_eq!(decay_value_of(&[10.0, 20.0], 0.5).unwrap(), 10.0);
        assert_abs_diff_eq!(decay_value_of(&[10.0, 20.0], 1.0).unwrap(), 30.0);
        assert_eq!(decay_value_of(&[10.0, 20.0], 0.0).unwrap(), 0.0);
        assert!(decay_value_of(&[1.0], 1.5).is_err());
        assert!(decay_value_of(&[1.0], -0.1).is_err());
    }

    #[test]
    fn min_delta_roots() {
        // total-spread normalization against single-phase 2389
        for (p, multi, want) in [
            (2, 2478.0, 0.810),
            (3, 2508.0, 0.871),
            (4, 2519.0, 0.904),
            (5, 2525.0, 0.924),
        ] {
            let eps = epsilon(2389.0, multi).unwrap();
            let got = min_delta(p, eps).unwrap();
            assert!((got.delta - want).abs() <= 0.002, "p = {p}: {}", got.delta);
            assert!(!got.never_advantageous);
        }
        // p = 2 has the closed form 1 - sqrt(eps)
        let eps = 0.0359;
        assert_abs_diff_eq!(min_delta(2, eps).unwrap().delta, 1.0 - eps.sqrt(), epsilon = 1e-6);
        let none = min_delta(3, 0.0).unwrap();
        assert_eq!(none.delta, 1.0);
        assert!(none.never_advantageous);
        assert!(min_delta(3, -0.2).unwrap().never_advantageous);
        assert!(min_delta(1, 0.1).is_err());
        assert!(min_delta(2, 1.0).is_err());
        assert!(min_delta(2, f64::NAN).is_err());
    }

    #[test]
    fn decay_scan_rankings() {
        let trace = vec![row(&[10, 10], &[50.0, 50.0]), row(&[12, 8], &[60.0, 40.0])];
        let scan = decay_aware_split_scan(&trace, 0.9, 0.1).unwrap();
        // 0.9 * 60 + 0.81 * 40 = 86.4 against 0.9 * 50 + 0.81 * 50 = 85.5
        assert_eq!(scan.best.allocations(), &[12, 8]);
        assert_abs_diff_eq!(scan.ranking[0].1, 86.4, epsilon = 1e-9);
        assert_abs_diff_eq!(scan.ranking[1].1, 85.5, epsilon = 1e-9);

        let trace = vec![row(&[10, 10], &[50.0, 70.0]), row(&[12, 8], &[60.0, 40.0])];
        assert_eq!(
            decay_aware_split_scan(&trace, 1.0, 0.1).unwrap().best.allocations(),
            &[10, 10]
        );
        assert_eq!(
            decay_aware_split_scan(&trace, 1e-6, 0.1).unwrap().best.allocations(),
            &[12, 8]
        );
    }

    #[test]
    fn decay_scan_drops_empty_phases() {
        let trace = vec![row(&[0, 20], &[0.0, 100.0]), row(&[10, 10], &[50.0, 55.0])];
        let scan = decay_aware_split_scan(&trace, 0.5, 0.1).unwrap();
        // the empty-phase split is the single-phase split: 0.5 * 100
        assert_eq!(scan.best.allocations(), &[0, 20]);
        assert_abs_diff_eq!(scan.ranking[0].1, 50.0);
    }

    #[test]
    fn decay_analysis_at_unit_delta() {
        let a = DecayAnalysis::new(&[2000.0, 478.0], 2389.0, 1.0).unwrap();
        assert_abs_diff_eq!(a.value, 2478.0);
        assert!((a.min_delta.delta - 0.810).abs() < 0.002);
    }

    #[test]
    fn isolated_nodes_give_linear_curve() {
        let g = WeightedDigraph::from_edges(6, &[]).unwrap();
        let e = LiveGraphEnsemble::sample(g, 10, 1).unwrap();
        let c = build_curve(&e, 6, &SelectorSpec::greedy()).unwrap();
        assert_eq!(c.points, vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(
            classify_curve(&c, &CurveThresholds::default()).unwrap(),
            CurveType::Linear
        );
    }

    #[test]
    fn certain_edges_rise_then_flatten() {
        let edges: Vec<_> = (1..12).map(|v| (0, v, Some(1.0))).collect();
        let g = WeightedDigraph::from_edges(12, &edges).unwrap();
        let e = LiveGraphEnsemble::sample(g, 5, 1).unwrap();
        let c = build_curve(&e, 12, &SelectorSpec::greedy()).unwrap();
        assert!(c.points[1..].iter().all(|&v| v == 12.0));
        assert_eq!(
            classify_curve(&c, &CurveThresholds::default()).unwrap(),
            CurveType::RiseAndFlat
        );
    }

    #[test]
    fn curve_matches_exact_prefix_spreads() {
        let g = generate::gnm(10, 18, 5).unwrap().uniform(0.3).unwrap();
        let e = LiveGraphEnsemble::sample(g.clone(), 20_000, 9).unwrap();
        let c = build_curve(&e, 4, &SelectorSpec::greedy()).unwrap();
        for b in 1..=4 {
            let exact = exact_spread(&g, &c.seeds[..b], &EnumerationLimit::default()).unwrap();
            assert!((c.points[b] - exact).abs() < 0.1, "b = {b}: {} vs {exact}", c.points[b]);
        }
    }
}
