//! Pool-based vote-by-committee training for the daily surrogates, and the
//! random-sampling baseline.
//!
//! Streams derive from the run seed:
//! - `("day", i)` for the i-th randomly labelled day (initial or baseline set),
//! - `("round", k)` then `("pool", j)` for pool item `j` of round `k`,
//! - `("fit", k)` for the forests fitted after round `k` (0 = initial fit).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adequacy::{label_day, StorageFleet};
use crate::cost::Clock;
use crate::error::{Error, Result};
use crate::forest::{ForestParams, LabeledSet, Surrogate};
use crate::rng::Seed;
use crate::scenario::{DailyTrace, ScenarioSource, HOURS_PER_DAY};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ALConfig {
    pub n_init: usize,
    pub pool_size: usize,
    pub batch_size: usize,
    pub rounds: usize,
}

impl Default for ALConfig {
    fn default() -> Self {
        ALConfig {
            n_init: 730,
            pool_size: 3650,
            batch_size: 91,
            rounds: 20,
        }
    }
}

impl ALConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        for (name, v) in [
            ("n_init", self.n_init),
            ("pool_size", self.pool_size),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                errs.push(format!("active_learning.{name} must be positive"));
            }
        }
        if self.batch_size > self.pool_size {
            errs.push(format!(
                "active_learning.batch_size ({}) exceeds pool_size ({})",
                self.batch_size, self.pool_size
            ));
        }
        errs
    }

    /// Labelled-set size after `k` rounds.
    pub fn size_after(&self, k: usize) -> usize {
        self.n_init + k * self.batch_size
    }
}

/// Bookkeeping for one fit of a training run. Round 0 is the initial fit.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundRecord {
    pub round: usize,
    pub train_size: usize,
    /// Cumulative training time after this round, seconds.
    pub t_train: f64,
    /// Committee std quantiles over the round's pool (`None` for round 0).
    pub pool_std: Option<PoolStd>,
    /// Pool indices selected for labelling, in selection order.
    pub selected: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PoolStd {
    pub min: f64,
    pub median: f64,
    pub p90: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingRun {
    pub labeled: LabeledSet,
    pub surrogate: Surrogate,
    /// Generation + labelling + fitting (+ pool scoring), seconds.
    pub t_train: f64,
    pub history: Vec<RoundRecord>,
}

impl TrainingRun {
    pub fn rounds(&self) -> usize {
        self.history.len().saturating_sub(1)
    }
}

/// Everything a training run needs besides its seed.
#[derive(Debug, Clone, Copy)]
pub struct Trainer<'a> {
    pub source: &'a ScenarioSource,
    pub fleet: &'a StorageFleet,
    pub forest: &'a ForestParams,
    pub clock: Clock,
}

impl Trainer<'_> {
    fn draw_days(&self, n: usize, seed: Seed, purpose: &str) -> (Vec<DailyTrace>, f64) {
        self.clock.time(
            |c| c.scenario_day * n as f64,
            || {
                (0..n as u64)
                    .into_par_iter()
                    .map(|i| self.source.margin_day(&mut seed.derive(purpose, i).rng()))
                    .collect()
            },
        )
    }

    fn label(&self, days: Vec<DailyTrace>) -> Result<(LabeledSet, f64)> {
        let n = days.len();
        let (labels, dt) = self.clock.time(
            |c| c.exact_call(HOURS_PER_DAY) * n as f64,
            || {
                days.par_iter()
                    .map(|d| label_day(d, self.fleet))
                    .collect::<Result<Vec<_>>>()
            },
        );
        Ok((days.into_iter().zip(labels?).collect(), dt))
    }

    fn fit(&self, data: &LabeledSet, seed: Seed) -> Result<(Surrogate, f64)> {
        let (s, dt) = self.clock.time(
            |c| 2.0 * c.fit(data.len(), self.forest.n_trees),
            || Surrogate::fit(data, self.forest, seed),
        );
        Ok((s?, dt))
    }

    /// `n_days` uniformly drawn days, labelled exactly, one fit.
    pub fn train_random(&self, n_days: usize, seed: Seed) -> Result<TrainingRun> {
        if n_days == 0 {
            return Err(Error::InvalidParameter("training set size must be positive".into()));
        }
        let (days, t_gen) = self.draw_days(n_days, seed, "day");
        let (labeled, t_label) = self.label(days)?;
        let (surrogate, t_fit) = self.fit(&labeled, seed.derive("fit", 0))?;
        let t_train = t_gen + t_label + t_fit;
        Ok(TrainingRun {
            history: vec![RoundRecord {
                round: 0,
                train_size: labeled.len(),
                t_train,
                pool_std: None,
                selected: Vec::new(),
            }],
            labeled,
            surrogate,
            t_train,
        })
    }

    /// Initial labelled set and fit; the same pipeline as [`Self::train_random`].
    pub fn init_training(&self, config: &ALConfig, seed: Seed) -> Result<TrainingRun> {
        self.train_random(config.n_init, seed)
    }

    /// One query round: score a fresh pool by ENS committee disagreement,
    /// label the `batch_size` most disputed days and refit both forests.
    pub fn al_round(&self, mut run: TrainingRun, config: &ALConfig, seed: Seed) -> Result<TrainingRun> {
        let round = run.rounds() + 1;
        let round_seed = seed.derive("round", round as u64);
        let (pool, t_gen) = self.draw_days(config.pool_size, round_seed, "pool");
        let ens = &run.surrogate.ens;
        let (scores, t_score) = self.clock.time(
            |c| c.surrogate_call(pool.len(), ens.n_trees()),
            || pool.par_iter().map(|d| ens.committee_std(d)).collect::<Vec<f64>>(),
        );
        let selected = top_k(&scores, config.batch_size);
        let chosen: Vec<DailyTrace> = selected.iter().map(|&i| pool[i]).collect();
        let (batch, t_label) = self.label(chosen)?;
        run.labeled.extend(&batch);
        let (surrogate, t_fit) = self.fit(&run.labeled, seed.derive("fit", round as u64))?;
        run.surrogate = surrogate;
        run.t_train += t_gen + t_score + t_label + t_fit;
        run.history.push(RoundRecord {
            round,
            train_size: run.labeled.len(),
            t_train: run.t_train,
            pool_std: Some(PoolStd {
                min: stats::quantile(&scores, 0.0),
                median: stats::quantile(&scores, 0.5),
                p90: stats::quantile(&scores, 0.9),
                max: stats::quantile(&scores, 1.0),
            }),
            selected,
        });
        Ok(run)
    }

    /// Initial fit followed by `config.rounds` query rounds. `on_round` sees
    /// the run after every fit, including the initial one.
    pub fn train_active(
        &self,
        config: &ALConfig,
        seed: Seed,
        mut on_round: impl FnMut(&TrainingRun) -> Result<()>,
    ) -> Result<TrainingRun> {
        let mut run = self.init_training(config, seed)?;
        on_round(&run)?;
        for _ in 0..config.rounds {
            run = self.al_round(run, config, seed)?;
            on_round(&run)?;
        }
        Ok(run)
    }
}

/// Indices of the `k` largest scores, largest first; equal scores keep the
/// lower index first.
pub fn top_k(scores: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
