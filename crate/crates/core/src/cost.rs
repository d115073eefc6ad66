//! Time accounting: wall clock, or a synthetic cost model for reproducible runs.

use std::time::Instant;

use serde::{Deserialize, Serialize};

/// Synthetic per-operation costs in seconds.
///
/// Used when runs must be reproducible byte for byte; every timed section
/// reports the sum of the costs of the operations it performed instead of
/// elapsed time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostModel {
    /// Drawing one 8760-hour margin scenario.
    pub scenario_year: f64,
    /// Drawing one 24-hour margin scenario.
    pub scenario_day: f64,
    /// Simulating one hour with the exact dispatch model.
    pub exact_hour: f64,
    /// Evaluating one tree on one day.
    pub surrogate_tree_day: f64,
    /// Fitting cost per (training row, tree).
    pub fit_row_tree: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel {
            scenario_year: 0.01,
            scenario_day: 0.01 / 365.0,
            exact_hour: 2e-4,
            surrogate_tree_day: 1e-6,
            fit_row_tree: 2e-6,
        }
    }
}

impl CostModel {
    pub fn exact_call(&self, hours: usize) -> f64 {
        self.exact_hour * hours as f64
    }

    pub fn surrogate_call(&self, days: usize, trees: usize) -> f64 {
        self.surrogate_tree_day * (days * trees) as f64
    }

    pub fn fit(&self, rows: usize, trees: usize) -> f64 {
        self.fit_row_tree * (rows * trees) as f64
    }
}

/// Source of elapsed time for training and simulation accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Clock {
    Wall,
    Synthetic(CostModel),
}

impl Clock {
    pub fn is_synthetic(&self) -> bool {
        matches!(self, Clock::Synthetic(_))
    }

    /// Runs `work` and returns its output with the elapsed time: measured
    /// under [`Clock::Wall`], `synthetic(cost_model)` otherwise.
    pub fn time<T>(&self, synthetic: impl FnOnce(&CostModel) -> f64, work: impl FnOnce() -> T) -> (T, f64) {
        match self {
            Clock::Wall => {
                let start = Instant::now();
                let out = work();
                (out, start.elapsed().as_secs_f64())
            }
            Clock::Synthetic(model) => {
                let out = work();
                (out, synthetic(model))
            }
        }
    }
}
