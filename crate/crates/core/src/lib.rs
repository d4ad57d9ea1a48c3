//! Multi-phase influence maximization under the Independent Cascade model.
//!
//! Spreads are estimated on a fixed ensemble of sampled live graphs, so every split,
//! selector and phase count is compared on the same random outcomes.

pub mod analysis;
pub mod budgetsearch;
pub mod error;
pub mod exact;
pub mod graph;
pub mod livegraph;
pub mod multiphase;
pub mod seedselect;
pub mod stats;

pub use fixedbitset;

pub use analysis::{CurveType, DecayAnalysis, InfluenceabilityCurve};
pub use budgetsearch::{SearchPlan, SearchResult, SplitMemo};
pub use error::{Error, Result};
pub use graph::{NodeId, WeightedDigraph};
pub use livegraph::{DiffusionState, LiveGraphEnsemble};
pub use multiphase::{BudgetSplit, MultiphaseRunner, PhaseReport};
pub use seedselect::{SelectorKind, SelectorSpec};
pub use stats::Distribution;
