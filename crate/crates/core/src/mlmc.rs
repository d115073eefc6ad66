//! Multilevel Monte Carlo: level hierarchy, pilot statistics, sample
//! allocation, estimation and the speed / break-even analytics.
//!
//! Every model returns the same fixed number of metrics ([`METRICS`]); for
//! adequacy studies these are LOLE and EENS. Level `l` evaluates
//! `Y_l = f_l(z) - f_{l-1}(z)` on a common scenario `z`, with `f_0 = 0`.
//!
//! Sample `i` of level `l` draws from the stream
//! `seed.derive(phase, l).derive("sample", i)` where `phase` is `"pilot"` or
//! `"level"`; plain MC uses level index 0 with phase `"mc"`.

use rayon::prelude::*;
use serde::Serialize;

use crate::cost::{Clock, CostModel};
use crate::error::{Error, Result};
use crate::rng::{Seed, StreamRng};
use crate::stats::Moments;

pub const METRICS: usize = 2;
pub type Outcome = [f64; METRICS];

pub const N_MIN: usize = 2;

/// Draws scenarios.
pub trait Sampler: Sync {
    type Scenario: Send + Sync;
    fn sample(&self, rng: &mut StreamRng) -> Self::Scenario;
    /// Synthetic cost of one draw.
    fn cost(&self, model: &CostModel) -> f64;
}

/// One model of the hierarchy.
pub trait Model<S>: Sync {
    fn evaluate(&self, scenario: &S) -> Result<Outcome>;
    /// Synthetic cost of one evaluation.
    fn cost(&self, model: &CostModel) -> f64;
}

/// Sampler plus models ordered from cheapest (`f_1`) to the reference (`f_L`).
pub struct Hierarchy<'a, S: Sampler> {
    pub sampler: &'a S,
    pub models: Vec<&'a dyn Model<S::Scenario>>,
}

impl<'a, S: Sampler> Hierarchy<'a, S> {
    pub fn new(sampler: &'a S, models: Vec<&'a dyn Model<S::Scenario>>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidParameter("a hierarchy needs at least one model".into()));
        }
        Ok(Hierarchy { sampler, models })
    }

    pub fn n_levels(&self) -> usize {
        self.models.len()
    }

    /// `Y_l` on one scenario; `level` is zero-based.
    pub fn difference(&self, level: usize, scenario: &S::Scenario) -> Result<Outcome> {
        let fine = self.models[level].evaluate(scenario)?;
        let coarse = match level {
            0 => [0.0; METRICS],
            _ => self.models[level - 1].evaluate(scenario)?,
        };
        let mut y = [0.0; METRICS];
        for m in 0..METRICS {
            y[m] = fine[m] - coarse[m];
            if !y[m].is_finite() {
                return Err(Error::NonFinite { level: level + 1 });
            }
        }
        Ok(y)
    }

    fn synthetic_pair_cost(&self, level: usize, cm: &CostModel) -> f64 {
        let coarse = if level == 0 { 0.0 } else { self.models[level - 1].cost(cm) };
        self.sampler.cost(cm) + self.models[level].cost(cm) + coarse
    }

    /// Draws `n` fresh scenarios for `level` and accumulates `Y_l` in sample
    /// order. Returns the stats and the elapsed time.
    fn sample_level(&self, level: usize, n: usize, seed: Seed, clock: &Clock) -> Result<(LevelStats, f64)> {
        let (ys, dt) = clock.time(
            |cm| n as f64 * self.synthetic_pair_cost(level, cm),
            || {
                (0..n as u64)
                    .into_par_iter()
                    .map(|i| {
                        let z = self.sampler.sample(&mut seed.derive("sample", i).rng());
                        self.difference(level, &z)
                    })
                    .collect::<Result<Vec<Outcome>>>()
            },
        );
        let ys = ys?;
        let mut moments = [Moments::default(); METRICS];
        for y in &ys {
            for m in 0..METRICS {
                moments[m].push(y[m]);
            }
        }
        let tau = if n > 0 { dt / n as f64 } else { 0.0 };
        Ok((LevelStats::from_moments(&moments, tau, n), dt))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelStats {
    pub mean: Outcome,
    /// Sample standard deviation of `Y_l`.
    pub sigma: Outcome,
    /// Seconds per scenario pair.
    pub tau: f64,
    pub n: usize,
}

impl LevelStats {
    fn from_moments(m: &[Moments; METRICS], tau: f64, n: usize) -> Self {
        LevelStats {
            mean: std::array::from_fn(|k| m[k].mean()),
            sigma: std::array::from_fn(|k| m[k].sample_std()),
            tau,
            n,
        }
    }

    /// Contribution `sigma^2 / n` to the estimator variance.
    pub fn variance_contribution(&self, metric: usize) -> f64 {
        self.sigma[metric] * self.sigma[metric] / self.n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MLMCResult {
    pub estimate: Outcome,
    /// Estimator variance, sum of `sigma_l^2 / N_l`.
    pub variance: Outcome,
    pub levels: Vec<LevelStats>,
    pub pilot: Vec<LevelStats>,
    pub allocation: Vec<usize>,
    /// Total simulation time including any pilot, seconds.
    pub t_sim: f64,
}

impl MLMCResult {
    fn from_levels(levels: Vec<LevelStats>, pilot: Vec<LevelStats>, t_sim: f64) -> Self {
        let estimate = std::array::from_fn(|m| levels.iter().map(|l| l.mean[m]).sum());
        let variance = std::array::from_fn(|m| levels.iter().map(|l| l.variance_contribution(m)).sum());
        MLMCResult {
            estimate,
            variance,
            allocation: levels.iter().map(|l| l.n).collect(),
            levels,
            pilot,
            t_sim,
        }
    }

    pub fn std_error(&self, metric: usize) -> f64 {
        self.variance[metric].sqrt()
    }

    /// Half-width of the normal 95% interval.
    pub fn ci95(&self, metric: usize) -> f64 {
        1.96 * self.std_error(metric)
    }

    pub fn speed(&self, metric: usize) -> Result<f64> {
        speed(self.estimate[metric], self.variance[metric], self.t_sim)
    }
}

/// Sample count or time budget for plain MC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Budget {
    Samples(usize),
    Seconds(f64),
}

/// Plain MC on a single model. Under a time budget the synthetic clock
/// fixes `N = floor(t / tau)`; the wall clock draws in chunks until the
/// budget is spent.
pub fn run_plain_mc<S: Sampler>(
    sampler: &S,
    model: &dyn Model<S::Scenario>,
    budget: Budget,
    seed: Seed,
    clock: &Clock,
) -> Result<MLMCResult> {
    let h = Hierarchy::new(sampler, vec![model])?;
    let seed = seed.derive("mc", 0);
    let (stats, t) = match (budget, clock) {
        (Budget::Samples(n), _) => {
            if n < N_MIN {
                return Err(Error::InsufficientSamples { needed: N_MIN, got: n });
            }
            h.sample_level(0, n, seed, clock)?
        }
        (Budget::Seconds(t), Clock::Synthetic(cm)) => {
            let tau = h.synthetic_pair_cost(0, cm);
            let n = (t / tau + 1e-9).floor() as usize;
            if n < N_MIN {
                return Err(Error::BudgetTooSmall { budget: t, needed: N_MIN as f64 * tau });
            }
            h.sample_level(0, n, seed, clock)?
        }
        (Budget::Seconds(t), Clock::Wall) => wall_budget_level(&h, t, seed)?,
    };
    Ok(MLMCResult::from_levels(vec![stats], Vec::new(), t))
}

fn wall_budget_level<S: Sampler>(h: &Hierarchy<'_, S>, budget: f64, seed: Seed) -> Result<(LevelStats, f64)> {
    let chunk = 4 * rayon::current_num_threads().max(1);
    let mut moments = [Moments::default(); METRICS];
    let start = std::time::Instant::now();
    let mut next = 0u64;
    while next < N_MIN as u64 || start.elapsed().as_secs_f64() < budget {
        let ys = (next..next + chunk as u64)
            .into_par_iter()
            .map(|i| {
                let z = h.sampler.sample(&mut seed.derive("sample", i).rng());
                h.difference(0, &z)
            })
            .collect::<Result<Vec<Outcome>>>()?;
        for y in &ys {
            for m in 0..METRICS {
                moments[m].push(y[m]);
            }
        }
        next += chunk as u64;
    }
    let t = start.elapsed().as_secs_f64();
    let n = next as usize;
    Ok((LevelStats::from_moments(&moments, t / n as f64, n), t))
}

/// Independent pilot samples for every level.
pub fn pilot<S: Sampler>(h: &Hierarchy<'_, S>, n_pilot: usize, seed: Seed, clock: &Clock) -> Result<(Vec<LevelStats>, f64)> {
    if n_pilot < N_MIN {
        return Err(Error::InsufficientSamples { needed: N_MIN, got: n_pilot });
    }
    let mut stats = Vec::with_capacity(h.n_levels());
    let mut total = 0.0;
    for l in 0..h.n_levels() {
        let (s, dt) = h.sample_level(l, n_pilot, seed.derive("pilot", l as u64), clock)?;
        stats.push(s);
        total += dt;
    }
    Ok((stats, total))
}

/// Sample counts minimising `sum sigma_l^2 / N_l` subject to
/// `sum N_l tau_l <= t_sim` and `N_l >= N_MIN`, using `sigma` of `metric`.
///
/// The continuous optimum `N_l ∝ sigma_l / sqrt(tau_l)` is computed with
/// levels pinned at the floor removed from the budget, rounded down, and
/// the leftover handed out one sample at a time to the level with the
/// largest variance reduction per second (lowest index on ties).
pub fn allocate_samples(stats: &[LevelStats], t_sim: f64, metric: usize) -> Result<Vec<usize>> {
    if stats.is_empty() {
        return Err(Error::InvalidParameter("no levels to allocate".into()));
    }
    if stats.iter().any(|s| !(s.tau > 0.0 && s.tau.is_finite())) {
        return Err(Error::InvalidParameter("per-level cost must be positive".into()));
    }
    let floor_cost: f64 = stats.iter().map(|s| N_MIN as f64 * s.tau).sum();
    if !(t_sim >= floor_cost) {
        return Err(Error::BudgetTooSmall { budget: t_sim, needed: floor_cost });
    }
    let sigma: Vec<f64> = stats.iter().map(|s| s.sigma[metric]).collect();
    let tau: Vec<f64> = stats.iter().map(|s| s.tau).collect();
    let tol = 1e-9 * t_sim;

    let mut pinned = vec![false; stats.len()];
    let mut n_real = vec![N_MIN as f64; stats.len()];
    loop {
        let budget = t_sim
            - (0..stats.len()).filter(|&l| pinned[l]).map(|l| N_MIN as f64 * tau[l]).sum::<f64>();
        let norm: f64 = (0..stats.len()).filter(|&l| !pinned[l]).map(|l| sigma[l] * tau[l].sqrt()).sum();
        let mut changed = false;
        for l in 0..stats.len() {
            if pinned[l] {
                continue;
            }
            n_real[l] = if norm > 0.0 { budget * (sigma[l] / tau[l].sqrt()) / norm } else { 0.0 };
            if n_real[l] < N_MIN as f64 {
                pinned[l] = true;
                n_real[l] = N_MIN as f64;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut n: Vec<usize> = n_real.iter().map(|&x| ((x + 1e-9).floor() as usize).max(N_MIN)).collect();
    let mut left = t_sim - n.iter().zip(&tau).map(|(&k, t)| k as f64 * t).sum::<f64>();
    loop {
        let mut best: Option<(usize, f64)> = None;
        for l in 0..stats.len() {
            if tau[l] > left + tol {
                continue;
            }
            let s2 = sigma[l] * sigma[l];
            let gain = (s2 / n[l] as f64 - s2 / (n[l] + 1) as f64) / tau[l];
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((l, gain));
            }
        }
        match best {
            Some((l, gain)) if gain > 0.0 => {
                n[l] += 1;
                left -= tau[l];
            }
            _ => break,
        }
    }
    // With no variance anywhere the cheapest estimate is the floor plus
    // everything affordable on level 1.
    if sigma.iter().all(|&s| s == 0.0) && left + tol >= tau[0] {
        n[0] += ((left + tol) / tau[0]).floor() as usize;
    }
    Ok(n)
}

/// Predicted estimator variance `sum sigma_l^2 / N_l`.
pub fn predicted_variance(stats: &[LevelStats], n: &[usize], metric: usize) -> f64 {
    stats
        .iter()
        .zip(n)
        .map(|(s, &k)| s.sigma[metric] * s.sigma[metric] / k as f64)
        .sum()
}

/// Estimation with a given allocation on fresh scenarios.
pub fn run_mlmc<S: Sampler>(h: &Hierarchy<'_, S>, allocation: &[usize], seed: Seed, clock: &Clock) -> Result<MLMCResult> {
    if allocation.len() != h.n_levels() {
        return Err(Error::InvalidParameter(format!(
            "allocation has {} entries for {} levels",
            allocation.len(),
            h.n_levels()
        )));
    }
    let mut levels = Vec::with_capacity(h.n_levels());
    let mut t = 0.0;
    for (l, &n) in allocation.iter().enumerate() {
        if n < N_MIN {
            return Err(Error::InsufficientSamples { needed: N_MIN, got: n });
        }
        let (s, dt) = h.sample_level(l, n, seed.derive("level", l as u64), clock)?;
        levels.push(s);
        t += dt;
    }
    Ok(MLMCResult::from_levels(levels, Vec::new(), t))
}

/// Pilot, allocation of the remaining budget, then estimation. The pilot
/// counts towards `t_sim` but its samples are not reused.
pub fn run_mlmc_budget<S: Sampler>(
    h: &Hierarchy<'_, S>,
    t_sim: f64,
    n_pilot: usize,
    metric: usize,
    seed: Seed,
    clock: &Clock,
) -> Result<MLMCResult> {
    let (pilot_stats, t_pilot) = pilot(h, n_pilot, seed, clock)?;
    let remaining = t_sim - t_pilot;
    let needed: f64 = pilot_stats.iter().map(|s| N_MIN as f64 * s.tau).sum();
    if remaining < needed {
        return Err(Error::BudgetTooSmall { budget: t_sim, needed: t_pilot + needed });
    }
    let allocation = allocate_samples(&pilot_stats, remaining, metric)?;
    let mut result = run_mlmc(h, &allocation, seed, clock)?;
    result.t_sim += t_pilot;
    result.pilot = pilot_stats;
    Ok(result)
}

/// Exact `E[Y_l]` for every level over a finite weighted scenario space.
pub fn enumerate_level_means<S: Sampler>(h: &Hierarchy<'_, S>, space: &[(S::Scenario, f64)]) -> Result<Vec<Outcome>> {
    (0..h.n_levels())
        .map(|l| {
            let mut acc = [0.0; METRICS];
            for (z, w) in space {
                let y = h.difference(l, z)?;
                for m in 0..METRICS {
                    acc[m] += w * y[m];
                }
            }
            Ok(acc)
        })
        .collect()
}

/// `q^2 / (t_sim sigma^2)`; zero variance is reported as an error since the
/// speed would be infinite.
pub fn speed(q: f64, sigma2: f64, t_sim: f64) -> Result<f64> {
    if !(t_sim > 0.0) || !q.is_finite() || !sigma2.is_finite() || sigma2 < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "speed needs finite q, sigma2 >= 0 and t_sim > 0 (got q={q}, sigma2={sigma2}, t_sim={t_sim})"
        )));
    }
    if sigma2 == 0.0 {
        return Err(Error::ZeroVariance);
    }
    Ok(q * q / (t_sim * sigma2))
}

/// `1/c^2 = s (t - t_train)`.
pub fn performance(s: f64, t: f64, t_train: f64) -> Result<f64> {
    if t < t_train {
        return Err(Error::TimeBelowTraining { t, t_train });
    }
    Ok(s * (t - t_train))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedPoint {
    pub speed: f64,
    pub t_train: f64,
}

impl SpeedPoint {
    pub fn performance(&self, t: f64) -> Result<f64> {
        performance(self.speed, t, self.t_train)
    }
}

/// Where estimator `a` overtakes the simpler alternative `b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BreakEven {
    /// `a` is better for every `t > t`; `performance` is `1/c^2` there.
    At { t: f64, performance: f64 },
    /// `a` is at least as fast and needs less training: better everywhere.
    Dominant,
    /// `a` never overtakes `b`.
    Invalid,
    /// Identical speed and training time.
    EqualSpeed,
}

impl BreakEven {
    /// Table cell: `1/c^2` at break-even, or the outcome's name.
    pub fn label(&self) -> String {
        match self {
            BreakEven::At { performance, .. } => format!("{performance:.2}"),
            BreakEven::Dominant => "Dominant".into(),
            BreakEven::Invalid => "Invalid".into(),
            BreakEven::EqualSpeed => "Equal".into(),
        }
    }
}

/// Solves `s_a (t - t_a) = s_b (t - t_b)`.
pub fn break_even(a: SpeedPoint, b: SpeedPoint) -> BreakEven {
    let (sa, ta, sb, tb) = (a.speed, a.t_train, b.speed, b.t_train);
    if sa == sb && ta == tb {
        return BreakEven::EqualSpeed;
    }
    if sa >= sb && ta < tb {
        return BreakEven::Dominant;
    }
    if sa <= sb {
        return BreakEven::Invalid;
    }
    let t = (sa * ta - sb * tb) / (sa - sb);
    BreakEven::At {
        t,
        performance: sb * (t - tb),
    }
}
