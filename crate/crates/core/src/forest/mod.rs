//! Random-forest regression surrogates for daily LOL and ENS.
//!
//! Each tree is grown on a bootstrap resample with a random feature subset
//! per split. Tree `k` draws from its own stream derived from the fit seed
//! and `k`, and predictions average trees in index order, so results do not
//! depend on how many threads trained the forest.

mod io;
mod tree;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adequacy::AdequacyOutcome;
use crate::error::{Error, Result};
use crate::rng::Seed;
use crate::scenario::{split_days_checked, DailyTrace, HourlyTrace, HOURS_PER_DAY};
use crate::stats;

pub use tree::{Node, Tree};
use tree::{bootstrap_counts, Core, GrowParams, Grower, Scratch, SortedColumns};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// `None` uses `ceil(n_features / 3)`.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.n_trees == 0 {
            errs.push("surrogate.n_trees must be >= 1".to_string());
        }
        if self.min_samples_leaf == 0 {
            errs.push("surrogate.min_samples_leaf must be >= 1".to_string());
        }
        if self.features_per_split == Some(0) {
            errs.push("surrogate.features_per_split must be >= 1".to_string());
        }
        if self.max_depth == Some(0) {
            errs.push("surrogate.max_depth must be >= 1 when set".to_string());
        }
        errs
    }

    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or(n_features.div_ceil(3))
            .clamp(1, n_features.max(1))
    }
}

/// Which daily label a forest predicts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Lol,
    Ens,
}

/// Daily margin traces with their exact labels.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledSet {
    days: Vec<DailyTrace>,
    lol: Vec<f64>,
    ens: Vec<f64>,
}

impl LabeledSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, day: DailyTrace, label: AdequacyOutcome) {
        self.days.push(day);
        self.lol.push(label.lol);
        self.ens.push(label.ens);
    }

    pub fn extend(&mut self, other: &LabeledSet) {
        self.days.extend_from_slice(&other.days);
        self.lol.extend_from_slice(&other.lol);
        self.ens.extend_from_slice(&other.ens);
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn days(&self) -> &[DailyTrace] {
        &self.days
    }

    pub fn labels(&self, target: Target) -> &[f64] {
        match target {
            Target::Lol => &self.lol,
            Target::Ens => &self.ens,
        }
    }

    fn flat_features(&self) -> Vec<f64> {
        self.days.iter().flat_map(|d| d.0).collect()
    }
}

impl FromIterator<(DailyTrace, AdequacyOutcome)> for LabeledSet {
    fn from_iter<I: IntoIterator<Item = (DailyTrace, AdequacyOutcome)>>(iter: I) -> Self {
        let mut set = LabeledSet::new();
        for (day, label) in iter {
            set.push(day, label);
        }
        set
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<Tree>,
    core: Option<Core>,
    params: ForestParams,
    n_features: usize,
    label_min: f64,
    label_max: f64,
}

impl Forest {
    /// Fits on a row-major feature matrix `x` with `n_features` columns.
    pub fn fit_matrix(
        x: &[f64],
        n_features: usize,
        y: &[f64],
        params: &ForestParams,
        seed: Seed,
    ) -> Result<Forest> {
        if y.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if n_features == 0 || x.len() != y.len() * n_features {
            return Err(Error::InvalidParameter(format!(
                "feature matrix of {} values does not match {} rows of {} features",
                x.len(),
                y.len(),
                n_features
            )));
        }
        let errs = params.validate();
        if !errs.is_empty() {
            return Err(Error::Config(errs));
        }
        let grow = GrowParams {
            max_depth: params.max_depth,
            min_samples_leaf: params.min_samples_leaf,
            features_per_split: params.resolved_features_per_split(n_features),
        };
        let n = y.len();
        let sorted = SortedColumns::new(x, n_features);
        let trees: Vec<Tree> = (0..params.n_trees)
            .into_par_iter()
            .map(|k| {
                let mut rng = seed.derive("tree", k as u64).rng();
                let counts = if params.bootstrap {
                    bootstrap_counts(n, &mut rng)
                } else {
                    vec![1; n]
                };
                Grower::new(x, y, n_features, grow).grow(&sorted, &counts, &mut rng)
            })
            .collect();
        let label_min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let label_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Forest {
            core: Core::new(&trees, n_features),
            trees,
            params: *params,
            n_features,
            label_min,
            label_max,
        })
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &ForestParams {
        &self.params
    }

    /// Range of the training labels; every prediction lies inside it.
    pub fn label_range(&self) -> (f64, f64) {
        (self.label_min, self.label_max)
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n_features);
        let sum = self.trees.iter().fold(0.0, |acc, t| acc + t.predict(x));
        sum / self.trees.len() as f64
    }

    /// Predictions for consecutive rows of `x`. Walks one tree over every row
    /// before moving on; each row sees the trees in the same order as
    /// `predict_row`, so the results are identical.
    pub fn predict_rows(&self, x: &[f64]) -> Vec<f64> {
        let nf = self.n_features;
        debug_assert_eq!(x.len() % nf, 0);
        let mut sums = vec![0.0; x.len() / nf];
        let mut rest = Vec::new();
        let mut rest_x = Vec::new();
        for (r, row) in x.chunks_exact(nf).enumerate() {
            match &self.core {
                Some(core) if core.covers(row) => sums[r] = core.sum(),
                _ => {
                    rest.push(r);
                    rest_x.extend_from_slice(row);
                }
            }
        }
        let mut rest_sums = vec![0.0; rest.len()];
        let m = rest.len();
        let mut xt = vec![0.0; rest_x.len()];
        for (r, row) in rest_x.chunks_exact(nf).enumerate() {
            for (f, &v) in row.iter().enumerate() {
                xt[f * m + r] = v;
            }
        }
        let mut scratch = Scratch::default();
        for tree in &self.trees {
            tree.accumulate_rows(&rest_x, &xt, nf, &mut rest_sums, &mut scratch);
        }
        for (&r, s) in rest.iter().zip(rest_sums) {
            sums[r] = s;
        }
        let n = self.trees.len() as f64;
        sums.iter_mut().for_each(|s| *s /= n);
        sums
    }

    pub fn committee_row(&self, x: &[f64]) -> Vec<f64> {
        self.trees.iter().map(|t| t.predict(x)).collect()
    }

    pub fn predict(&self, day: &DailyTrace) -> f64 {
        self.predict_row(&day.0)
    }

    /// Per-tree predictions in tree order.
    pub fn committee_predictions(&self, day: &DailyTrace) -> Vec<f64> {
        self.committee_row(&day.0)
    }

    /// Population standard deviation of the committee predictions.
    pub fn committee_std(&self, day: &DailyTrace) -> f64 {
        stats::population_std(&self.committee_predictions(day))
    }
}

/// Fits one forest on the daily features of `data` against `target` labels.
pub fn fit(data: &LabeledSet, target: Target, params: &ForestParams, seed: Seed) -> Result<Forest> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Forest::fit_matrix(&data.flat_features(), HOURS_PER_DAY, data.labels(target), params, seed)
}

/// The LOL and ENS forests trained on the same labelled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Surrogate {
    pub lol: Forest,
    pub ens: Forest,
}

impl Surrogate {
    pub fn fit(data: &LabeledSet, params: &ForestParams, seed: Seed) -> Result<Surrogate> {
        Ok(Surrogate {
            lol: fit(data, Target::Lol, params, seed.derive("forest-lol", 0))?,
            ens: fit(data, Target::Ens, params, seed.derive("forest-ens", 0))?,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.lol.n_trees() + self.ens.n_trees()
    }

    pub fn predict_day(&self, day: &DailyTrace) -> AdequacyOutcome {
        AdequacyOutcome {
            lol: self.lol.predict(day),
            ens: self.ens.predict(day),
        }
    }

    pub fn predict_year(&self, margin: &HourlyTrace) -> AdequacyOutcome {
        predict_days(&self.lol, &self.ens, margin.values())
    }
}

fn predict_days(lol: &Forest, ens: &Forest, margin: &[f64]) -> AdequacyOutcome {
    AdequacyOutcome {
        lol: lol.predict_rows(margin).iter().fold(0.0, |a, v| a + v),
        ens: ens.predict_rows(margin).iter().fold(0.0, |a, v| a + v),
    }
}

/// Yearly LOL and ENS as the sum of the 365 daily predictions.
pub fn predict_year(forest_lol: &Forest, forest_ens: &Forest, margin: &[f64]) -> Result<AdequacyOutcome> {
    split_days_checked(margin)?;
    Ok(predict_days(forest_lol, forest_ens, margin))
}

/// Accuracy of a surrogate against exact labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateMetrics {
    /// Daily RMSE, h/day.
    pub rmse_lol: f64,
    /// Daily RMSE, MWh/day.
    pub rmse_ens: f64,
    /// Yearly Pearson correlation; `None` when either side has no variance.
    pub corr_lol: Option<f64>,
    pub corr_ens: Option<f64>,
}

/// A yearly test scenario with its exact outcome.
#[derive(Debug, Clone)]
pub struct YearlyCase {
    pub margin: HourlyTrace,
    pub exact: AdequacyOutcome,
}

/// Daily RMSE of (LOL, ENS) predictions.
pub fn daily_rmse(surrogate: &Surrogate, daily: &LabeledSet) -> (f64, f64) {
    let x = daily.flat_features();
    let (p_lol, p_ens) = rayon::join(|| surrogate.lol.predict_rows(&x), || surrogate.ens.predict_rows(&x));
    (
        stats::rmse(&p_lol, daily.labels(Target::Lol)),
        stats::rmse(&p_ens, daily.labels(Target::Ens)),
    )
}

pub fn surrogate_metrics(
    surrogate: &Surrogate,
    daily: &LabeledSet,
    yearly: &[YearlyCase],
) -> Result<SurrogateMetrics> {
    if daily.is_empty() || yearly.is_empty() {
        return Err(Error::InvalidParameter("test sets must be non-empty".into()));
    }
    let (rmse_lol, rmse_ens) = daily_rmse(surrogate, daily);
    let yearly_pred: Vec<AdequacyOutcome> = yearly
        .par_iter()
        .map(|c| surrogate.predict_year(&c.margin))
        .collect();
    let yl: Vec<f64> = yearly_pred.iter().map(|o| o.lol).collect();
    let ye: Vec<f64> = yearly_pred.iter().map(|o| o.ens).collect();
    let xl: Vec<f64> = yearly.iter().map(|c| c.exact.lol).collect();
    let xe: Vec<f64> = yearly.iter().map(|c| c.exact.ens).collect();
    Ok(SurrogateMetrics {
        rmse_lol,
        rmse_ens,
        corr_lol: stats::pearson(&yl, &xl),
        corr_ens: stats::pearson(&ye, &xe),
    })
}
