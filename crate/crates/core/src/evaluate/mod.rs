//! Scoring layers against known sites (recall curves) and reference tracts
//! (area metrics), plus hyperparameter grid search.

mod grid;
mod metrics;
mod recall;

pub use grid::{grid_search, GridCell, GridSearchResult, GridSpec};
pub use metrics::{area_metrics, AreaMetrics};
pub use recall::{
    baseline_curves, oracle_ranking, random_rankings, recall_curve, recall_curve_union,
    site_coverage, Baselines, CurveVariant, OracleMode, RecallCurve, CUTOFF_PERCENTILES,
};
