//! Adequacy models as MLMC levels: yearly scenarios, the exact dispatch
//! model and the forest surrogate.

use crate::adequacy::{evaluate_exact_year, StorageFleet};
use crate::cost::CostModel;
use crate::error::Result;
use crate::forest::Surrogate;
use crate::mlmc::{Model, Outcome, Sampler};
use crate::rng::StreamRng;
use crate::scenario::{HourlyTrace, ScenarioSource, DAYS_PER_YEAR, HOURS_PER_YEAR};

pub const LOLE: usize = 0;
pub const EENS: usize = 1;

/// Draws yearly margin traces.
pub struct YearSampler<'a>(pub &'a ScenarioSource);

impl Sampler for YearSampler<'_> {
    type Scenario = HourlyTrace;

    fn sample(&self, rng: &mut StreamRng) -> HourlyTrace {
        self.0.margin_year(rng)
    }

    fn cost(&self, model: &CostModel) -> f64 {
        model.scenario_year
    }
}

/// Exact storage dispatch over the year.
pub struct ExactModel<'a>(pub &'a StorageFleet);

impl Model<HourlyTrace> for ExactModel<'_> {
    fn evaluate(&self, z: &HourlyTrace) -> Result<Outcome> {
        Ok(evaluate_exact_year(z, self.0)?.as_array())
    }

    fn cost(&self, model: &CostModel) -> f64 {
        model.exact_call(HOURS_PER_YEAR)
    }
}

/// Sum of daily forest predictions.
pub struct SurrogateModel<'a>(pub &'a Surrogate);

impl Model<HourlyTrace> for SurrogateModel<'_> {
    fn evaluate(&self, z: &HourlyTrace) -> Result<Outcome> {
        Ok(self.0.predict_year(z).as_array())
    }

    fn cost(&self, model: &CostModel) -> f64 {
        model.surrogate_call(DAYS_PER_YEAR, self.0.n_trees())
    }
}
