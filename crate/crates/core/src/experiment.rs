//! The full comparison protocol: shared test sets, then per repetition the
//! exact-model plain-MC baseline, an active-learning run with snapshots, the
//! random-sampling variants, surrogate accuracy and two-level MLMC under a
//! shared simulation budget.
//!
//! Streams, all derived from the master seed:
//! - `("profiles", 0)`: synthetic profile library (unless the config pins one)
//! - `("test-day", 0)` / `("test-year", 0)`: test sets, item `i` at `("item", i)`
//! - `("repetition", r)`, then inside it
//!   - `("al", 0)`: the active-learning run
//!   - `("random", n)`: the random run of size `n`
//!   - `("mlmc-exact", 0)`, `("mlmc-al", k)`, `("mlmc-random", n)`: estimators

use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::active_learning::{ALConfig, PoolStd, Trainer, TrainingRun};
use crate::adequacy::{evaluate_exact_year, label_day, StorageFleet};
use crate::config::{ExperimentConfig, ProfileSource};
use crate::cost::Clock;
use crate::error::{Error, Result};
use crate::forest::{daily_rmse, surrogate_metrics, LabeledSet, Surrogate, SurrogateMetrics, YearlyCase};
use crate::mlmc::{break_even, run_mlmc_budget, run_plain_mc, BreakEven, Budget, Hierarchy, MLMCResult, SpeedPoint};
use crate::rng::Seed;
use crate::scenario::{load_profiles, synth_profiles, ScenarioSource};
use crate::stats;
use crate::system::{ExactModel, SurrogateModel, YearSampler, EENS, LOLE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Variant {
    Exact,
    Active { rounds: usize },
    Random { size: usize },
}

impl Variant {
    pub fn label(&self) -> String {
        match self {
            Variant::Exact => "Exact model".into(),
            Variant::Active { rounds } => format!("AL {rounds} rounds"),
            Variant::Random { size } => format!("Random {size} days"),
        }
    }
}

/// One estimator in one repetition.
#[derive(Debug, Clone, Serialize)]
pub struct VariantRun {
    pub variant: Variant,
    pub train_size: usize,
    pub t_train: f64,
    /// Surrogate accuracy on the shared test sets; `None` for the exact model.
    pub metrics: Option<SurrogateMetrics>,
    pub mlmc: MLMCResult,
    /// LOLE and EENS speeds; `None` when the estimator variance is zero.
    pub speed: [Option<f64>; 2],
}

/// One active-learning fit, with daily test RMSE.
#[derive(Debug, Clone, Serialize)]
pub struct HistoryRow {
    pub repetition: usize,
    pub round: usize,
    pub train_size: usize,
    pub t_train: f64,
    pub pool_std: Option<PoolStd>,
    pub rmse_lol: f64,
    pub rmse_ens: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Al,
    Random,
}

impl Method {
    fn name(self) -> &'static str {
        match self {
            Method::Al => "al",
            Method::Random => "random",
        }
    }
}

/// Surrogate accuracy at one training size.
#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub method: Method,
    pub train_size: usize,
    pub t_train: f64,
    pub metrics: SurrogateMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct Repetition {
    pub index: usize,
    pub variants: Vec<VariantRun>,
    pub history: Vec<HistoryRow>,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation across repetitions; zero for one repetition.
    pub std: f64,
}

impl MeanStd {
    pub fn of(xs: &[f64]) -> Self {
        MeanStd {
            mean: stats::mean(xs),
            std: if xs.len() > 1 { stats::sample_std(xs) } else { 0.0 },
        }
    }

    /// `None` if any value is missing.
    fn of_all(xs: &[Option<f64>]) -> Option<Self> {
        xs.iter().copied().collect::<Option<Vec<f64>>>().map(|v| Self::of(&v))
    }
}

/// Averages for one metric of one table row.
#[derive(Debug, Clone, Serialize)]
pub struct MetricSummary {
    pub estimate: MeanStd,
    /// Mean 95% half-width.
    pub ci95: f64,
    pub speed: Option<MeanStd>,
    /// Against the one-level-simpler estimator; `None` for the exact model.
    pub break_even: Option<BreakEven>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableRow {
    pub variant: Variant,
    pub estimator: String,
    pub train_size: usize,
    pub t_train: MeanStd,
    pub t_sim: MeanStd,
    pub lole: MetricSummary,
    pub eens: MetricSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub method: Method,
    pub train_size: usize,
    pub t_train: MeanStd,
    pub rmse_lol: MeanStd,
    pub rmse_ens: MeanStd,
    pub corr_lol: Option<MeanStd>,
    pub corr_ens: Option<MeanStd>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub config: ExperimentConfig,
    pub table: Vec<TableRow>,
    pub sweep: Vec<SweepSummary>,
    pub repetitions: Vec<Repetition>,
}

/// Fixed inputs shared by every repetition.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub master: Seed,
    pub source: ScenarioSource,
    pub fleet: StorageFleet,
    pub clock: Clock,
    pub daily: LabeledSet,
    pub yearly: Vec<YearlyCase>,
}

impl Experiment {
    /// Builds the system and both test sets.
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let master = Seed::new(config.seed);
        let p = &config.system.profiles;
        let library = match p.source {
            ProfileSource::Synthetic => {
                let seed = p.seed.map(Seed::new).unwrap_or(master.derive("profiles", 0));
                synth_profiles(p.n_wind, p.n_demand, &p.synthetic, seed)?
            }
            ProfileSource::Csv => load_profiles(p.csv_dir.as_ref().expect("validated"))?,
        };
        let source = ScenarioSource::new(config.thermal_fleet()?, library);
        let fleet = config.storage_fleet()?;
        let (daily, yearly) = test_sets(&source, &fleet, config.test_sets.daily, config.test_sets.yearly, master)?;
        Ok(Experiment {
            clock: config.clock(),
            config,
            master,
            source,
            fleet,
            daily,
            yearly,
        })
    }

    fn trainer(&self) -> Trainer<'_> {
        Trainer {
            source: &self.source,
            fleet: &self.fleet,
            forest: &self.config.surrogate,
            clock: self.clock,
        }
    }

    fn al_config(&self, rounds: usize) -> ALConfig {
        ALConfig {
            rounds,
            ..self.config.active_learning
        }
    }

    fn repetition_seed(&self, r: usize) -> Seed {
        self.master.derive("repetition", r as u64)
    }

    /// Plain MC on the exact model under the full budget.
    pub fn run_exact(&self, r: usize) -> Result<VariantRun> {
        let sampler = YearSampler(&self.source);
        let exact = ExactModel(&self.fleet);
        let seed = self.repetition_seed(r).derive("mlmc-exact", 0);
        let mlmc = run_plain_mc(&sampler, &exact, Budget::Seconds(self.config.mlmc.t_sim), seed, &self.clock)?;
        Ok(finish(Variant::Exact, 0, 0.0, None, mlmc))
    }

    /// Two-level MLMC with a trained surrogate.
    fn run_surrogate(&self, variant: Variant, run: &Snapshot, seed: Seed) -> Result<VariantRun> {
        let sampler = YearSampler(&self.source);
        let exact = ExactModel(&self.fleet);
        let surrogate = SurrogateModel(&run.surrogate);
        let h = Hierarchy::new(&sampler, vec![&surrogate, &exact])?;
        let m = &self.config.mlmc;
        let mlmc = run_mlmc_budget(&h, m.t_sim, m.n_pilot, m.primary_metric.index(), seed, &self.clock)?;
        Ok(finish(variant, run.train_size, run.t_train, Some(run.metrics), mlmc))
    }

    fn snapshot(&self, run: &TrainingRun) -> Result<Snapshot> {
        Ok(Snapshot {
            surrogate: run.surrogate.clone(),
            train_size: run.labeled.len(),
            t_train: run.t_train,
            metrics: surrogate_metrics(&run.surrogate, &self.daily, &self.yearly)?,
        })
    }

    fn train_random(&self, size: usize, r: usize) -> Result<Snapshot> {
        let run = self.trainer().train_random(size, self.repetition_seed(r).derive("random", size as u64))?;
        self.snapshot(&run)
    }

    /// One variant of repetition `r` on its own; matches the corresponding
    /// entry of [`Self::run_repetition`] bit for bit.
    pub fn run_variant(&self, variant: Variant, r: usize) -> Result<VariantRun> {
        let rs = self.repetition_seed(r);
        match variant {
            Variant::Exact => self.run_exact(r),
            Variant::Active { rounds } => {
                let run = self.trainer().train_active(&self.al_config(rounds), rs.derive("al", 0), |_| Ok(()))?;
                let snap = self.snapshot(&run)?;
                self.run_surrogate(variant, &snap, rs.derive("mlmc-al", rounds as u64))
            }
            Variant::Random { size } => {
                let snap = self.train_random(size, r)?;
                self.run_surrogate(variant, &snap, rs.derive("mlmc-random", size as u64))
            }
        }
    }

    pub fn run_repetition(&self, r: usize, progress: &mut dyn FnMut(&str)) -> Result<Repetition> {
        let rs = self.repetition_seed(r);
        let v = &self.config.variants;
        let mut variants = vec![self.run_exact(r)?];
        progress(&format!("repetition {r}: exact model done"));

        let max_rounds = v.al_rounds.iter().chain(&v.sweep_rounds).copied().max().unwrap_or(0);
        let mut snapshots: BTreeMap<usize, Snapshot> = BTreeMap::new();
        let mut history = Vec::new();
        if !v.al_rounds.is_empty() || !v.sweep_rounds.is_empty() {
            self.trainer().train_active(&self.al_config(max_rounds), rs.derive("al", 0), |run| {
                let k = run.rounds();
                let rec = run.history.last().expect("history is never empty");
                // snapshot rounds already score the daily set
                let (rmse_lol, rmse_ens) = if v.al_rounds.contains(&k) || v.sweep_rounds.contains(&k) {
                    let snap = self.snapshot(run)?;
                    let m = snap.metrics;
                    snapshots.insert(k, snap);
                    (m.rmse_lol, m.rmse_ens)
                } else {
                    daily_rmse(&run.surrogate, &self.daily)
                };
                history.push(HistoryRow {
                    repetition: r,
                    round: k,
                    train_size: rec.train_size,
                    t_train: rec.t_train,
                    pool_std: rec.pool_std,
                    rmse_lol,
                    rmse_ens,
                });
                progress(&format!("repetition {r}: AL round {k}, {} days", rec.train_size));
                Ok(())
            })?;
        }

        let mut sweep = Vec::new();
        for &k in &v.sweep_rounds {
            let al = &snapshots[&k];
            sweep.push(al.sweep_point(Method::Al));
            sweep.push(self.train_random(al.train_size, r)?.sweep_point(Method::Random));
        }
        progress(&format!("repetition {r}: sweep done"));

        let mut rounds = v.al_rounds.clone();
        rounds.sort_unstable();
        for k in rounds {
            let run = self.run_surrogate(Variant::Active { rounds: k }, &snapshots[&k], rs.derive("mlmc-al", k as u64))?;
            variants.push(run);
            progress(&format!("repetition {r}: AL {k} MLMC done"));
        }
        let mut sizes = v.random_sizes.clone();
        sizes.sort_unstable();
        for n in sizes {
            let snap = self.train_random(n, r)?;
            variants.push(self.run_surrogate(Variant::Random { size: n }, &snap, rs.derive("mlmc-random", n as u64))?);
            progress(&format!("repetition {r}: random {n} MLMC done"));
        }
        Ok(Repetition {
            index: r,
            variants,
            history,
            sweep,
        })
    }

    pub fn run(&self, progress: &mut dyn FnMut(&str)) -> Result<Report> {
        let repetitions = (0..self.config.repetitions)
            .map(|r| self.run_repetition(r, progress))
            .collect::<Result<Vec<_>>>()?;
        Ok(Report {
            table: table(&repetitions),
            sweep: sweep_summary(&repetitions),
            config: self.config.clone(),
            repetitions,
        })
    }
}

struct Snapshot {
    surrogate: Surrogate,
    train_size: usize,
    t_train: f64,
    metrics: SurrogateMetrics,
}

impl Snapshot {
    fn sweep_point(&self, method: Method) -> SweepPoint {
        SweepPoint {
            method,
            train_size: self.train_size,
            t_train: self.t_train,
            metrics: self.metrics,
        }
    }
}

fn finish(variant: Variant, train_size: usize, t_train: f64, metrics: Option<SurrogateMetrics>, mlmc: MLMCResult) -> VariantRun {
    VariantRun {
        variant,
        train_size,
        t_train,
        metrics,
        speed: [mlmc.speed(LOLE).ok(), mlmc.speed(EENS).ok()],
        mlmc,
    }
}

/// Labelled daily and yearly test sets.
pub fn test_sets(
    source: &ScenarioSource,
    fleet: &StorageFleet,
    n_daily: usize,
    n_yearly: usize,
    master: Seed,
) -> Result<(LabeledSet, Vec<YearlyCase>)> {
    let day_seed = master.derive("test-day", 0);
    let daily = (0..n_daily as u64)
        .into_par_iter()
        .map(|i| {
            let day = source.margin_day(&mut day_seed.derive("item", i).rng());
            Ok((day, label_day(&day, fleet)?))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let year_seed = master.derive("test-year", 0);
    let yearly = (0..n_yearly as u64)
        .into_par_iter()
        .map(|i| {
            let margin = source.margin_year(&mut year_seed.derive("item", i).rng());
            let exact = evaluate_exact_year(&margin, fleet)?;
            Ok(YearlyCase { margin, exact })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((daily, yearly))
}

fn metric_summary(runs: &[&VariantRun], metric: usize) -> MetricSummary {
    let est: Vec<f64> = runs.iter().map(|v| v.mlmc.estimate[metric]).collect();
    let ci: Vec<f64> = runs.iter().map(|v| v.mlmc.ci95(metric)).collect();
    let speed: Vec<Option<f64>> = runs.iter().map(|v| v.speed[metric]).collect();
    MetricSummary {
        estimate: MeanStd::of(&est),
        ci95: stats::mean(&ci),
        speed: MeanStd::of_all(&speed),
        break_even: None,
    }
}

/// Averages per estimator, exact model first, with break-evens along the
/// chains exact -> AL by rounds and exact -> random by size.
pub fn table(reps: &[Repetition]) -> Vec<TableRow> {
    let mut by_variant: BTreeMap<Variant, Vec<&VariantRun>> = BTreeMap::new();
    for rep in reps {
        for v in &rep.variants {
            by_variant.entry(v.variant).or_default().push(v);
        }
    }
    let mut rows: Vec<TableRow> = by_variant
        .into_iter()
        .map(|(variant, runs)| {
            let t_train: Vec<f64> = runs.iter().map(|v| v.t_train).collect();
            let t_sim: Vec<f64> = runs.iter().map(|v| v.mlmc.t_sim).collect();
            TableRow {
                variant,
                estimator: variant.label(),
                train_size: runs[0].train_size,
                t_train: MeanStd::of(&t_train),
                t_sim: MeanStd::of(&t_sim),
                lole: metric_summary(&runs, LOLE),
                eens: metric_summary(&runs, EENS),
            }
        })
        .collect();
    let point = |row: &TableRow, metric: usize| -> Option<SpeedPoint> {
        let s = if metric == LOLE { &row.lole } else { &row.eens };
        s.speed.map(|sp| SpeedPoint {
            speed: sp.mean,
            t_train: row.t_train.mean,
        })
    };
    // BTreeMap order: Exact, Active by rounds, Random by size.
    for i in 1..rows.len() {
        let prev = (0..i)
            .rev()
            .find(|&j| same_chain(rows[j].variant, rows[i].variant))
            .unwrap_or(0);
        for metric in [LOLE, EENS] {
            let be = match (point(&rows[i], metric), point(&rows[prev], metric)) {
                (Some(a), Some(b)) => Some(break_even(a, b)),
                _ => None,
            };
            if metric == LOLE {
                rows[i].lole.break_even = be;
            } else {
                rows[i].eens.break_even = be;
            }
        }
    }
    rows
}

fn same_chain(a: Variant, b: Variant) -> bool {
    matches!(
        (a, b),
        (Variant::Active { .. }, Variant::Active { .. }) | (Variant::Random { .. }, Variant::Random { .. })
    )
}

pub fn sweep_summary(reps: &[Repetition]) -> Vec<SweepSummary> {
    let mut groups: BTreeMap<(Method, usize), Vec<&SweepPoint>> = BTreeMap::new();
    for rep in reps {
        for p in &rep.sweep {
            groups.entry((p.method, p.train_size)).or_default().push(p);
        }
    }
    groups
        .into_iter()
        .map(|((method, train_size), pts)| {
            let col = |f: fn(&SweepPoint) -> f64| MeanStd::of(&pts.iter().map(|p| f(p)).collect::<Vec<_>>());
            let opt = |f: fn(&SweepPoint) -> Option<f64>| MeanStd::of_all(&pts.iter().map(|p| f(p)).collect::<Vec<_>>());
            SweepSummary {
                method,
                train_size,
                t_train: col(|p| p.t_train),
                rmse_lol: col(|p| p.metrics.rmse_lol),
                rmse_ens: col(|p| p.metrics.rmse_ens),
                corr_lol: opt(|p| p.metrics.corr_lol),
                corr_ens: opt(|p| p.metrics.corr_ens),
            }
        })
        .collect()
}

pub const TABLE_HEADER: [&str; 10] = [
    "estimator",
    "train size [days]",
    "train time [s]",
    "simulation time [s]",
    "LOLE [h/y]",
    "LOLE speed",
    "LOLE break-even 1/c2",
    "EENS [MWh/y]",
    "EENS speed",
    "EENS break-even 1/c2",
];

fn speed_cell(s: &MetricSummary) -> String {
    s.speed.map_or("inf".into(), |sp| format!("{:.3}", sp.mean))
}

fn break_even_cell(s: &MetricSummary) -> String {
    s.break_even.map_or("-".into(), |b| b.label())
}

pub fn table_records(rows: &[TableRow]) -> Vec<[String; 10]> {
    rows.iter()
        .map(|row| {
            let exact = matches!(row.variant, Variant::Exact);
            [
                row.estimator.clone(),
                if exact { "-".into() } else { row.train_size.to_string() },
                if exact { "-".into() } else { format!("{:.1}", row.t_train.mean) },
                format!("{:.1}", row.t_sim.mean),
                format!("{:.3} ± {:.3}", row.lole.estimate.mean, row.lole.ci95),
                speed_cell(&row.lole),
                break_even_cell(&row.lole),
                format!("{:.1} ± {:.1}", row.eens.estimate.mean, row.eens.ci95),
                speed_cell(&row.eens),
                break_even_cell(&row.eens),
            ]
        })
        .collect()
}

fn opt_cell(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const SWEEP_COLUMNS: [&str; 12] = [
    "method",
    "train size [days]",
    "train time [s]",
    "train time std",
    "rmse lol [h/day]",
    "rmse lol std",
    "rmse ens [MWh/day]",
    "rmse ens std",
    "corr lol",
    "corr lol std",
    "corr ens",
    "corr ens std",
];

fn sweep_record(s: &SweepSummary) -> Vec<String> {
    vec![
        s.method.name().into(),
        s.train_size.to_string(),
        s.t_train.mean.to_string(),
        s.t_train.std.to_string(),
        s.rmse_lol.mean.to_string(),
        s.rmse_lol.std.to_string(),
        s.rmse_ens.mean.to_string(),
        s.rmse_ens.std.to_string(),
        opt_cell(s.corr_lol.map(|m| m.mean)),
        opt_cell(s.corr_lol.map(|m| m.std)),
        opt_cell(s.corr_ens.map(|m| m.mean)),
        opt_cell(s.corr_ens.map(|m| m.std)),
    ]
}

/// `table1.csv`, `al_history.csv`, `sweep_by_size.csv`, `sweep_by_time.csv`
/// and `report.json` in `dir`.
pub fn write_report(report: &Report, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_csv(
        &dir.join("table1.csv"),
        &TABLE_HEADER,
        table_records(&report.table).into_iter().map(Vec::from),
    )?;

    let history = report.repetitions.iter().flat_map(|r| &r.history).map(|h| {
        let q = |f: fn(&PoolStd) -> f64| opt_cell(h.pool_std.as_ref().map(f));
        vec![
            h.repetition.to_string(),
            h.round.to_string(),
            h.train_size.to_string(),
            h.t_train.to_string(),
            q(|p| p.min),
            q(|p| p.median),
            q(|p| p.p90),
            q(|p| p.max),
            h.rmse_lol.to_string(),
            h.rmse_ens.to_string(),
        ]
    });
    write_csv(
        &dir.join("al_history.csv"),
        &[
            "repetition",
            "round",
            "train size [days]",
            "train time [s]",
            "pool std min",
            "pool std median",
            "pool std p90",
            "pool std max",
            "rmse lol [h/day]",
            "rmse ens [MWh/day]",
        ],
        history,
    )?;

    write_csv(&dir.join("sweep_by_size.csv"), &SWEEP_COLUMNS, report.sweep.iter().map(sweep_record))?;
    let mut by_time: Vec<&SweepSummary> = report.sweep.iter().collect();
    by_time.sort_by(|a, b| a.method.cmp(&b.method).then(a.t_train.mean.total_cmp(&b.t_train.mean)));
    let mut time_cols = SWEEP_COLUMNS;
    time_cols.swap(1, 2);
    write_csv(
        &dir.join("sweep_by_time.csv"),
        &time_cols,
        by_time.into_iter().map(|s| {
            let mut r = sweep_record(s);
            r.swap(1, 2);
            r
        }),
    )?;

    let path = dir.join("report.json");
    let json = serde_json::to_string_pretty(report)?;
    std::fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))
}

/// Validates, runs every repetition and writes the report files.
pub fn run_experiment(config: ExperimentConfig, progress: &mut dyn FnMut(&str)) -> Result<Report> {
    let out = config.output_dir.clone();
    let exp = Experiment::new(config)?;
    progress(&format!(
        "test sets ready: {} days, {} years",
        exp.daily.len(),
        exp.yearly.len()
    ));
    let report = exp.run(progress)?;
    write_report(&report, &out)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlmc::LevelStats;

    fn run(variant: Variant, t_train: f64, speed: [f64; 2]) -> VariantRun {
        let lvl = LevelStats {
            mean: [1.0, 10.0],
            sigma: [1.0, 1.0],
            tau: 1.0,
            n: 10,
        };
        VariantRun {
            variant,
            train_size: 1,
            t_train,
            metrics: None,
            mlmc: MLMCResult {
                estimate: [1.0, 10.0],
                variance: [0.1, 0.1],
                levels: vec![lvl],
                pilot: Vec::new(),
                allocation: vec![10],
                t_sim: 10.0,
            },
            speed: speed.map(Some),
        }
    }

    #[test]
    fn break_even_chains() {
        let rep = Repetition {
            index: 0,
            variants: vec![
                run(Variant::Exact, 0.0, [1.0, 1.0]),
                run(Variant::Active { rounds: 5 }, 100.0, [2.0, 0.5]),
                run(Variant::Active { rounds: 10 }, 200.0, [4.0, 0.6]),
                run(Variant::Random { size: 20 }, 50.0, [3.0, 3.0]),
                run(Variant::Random { size: 10 }, 10.0, [1.5, 1.0]),
            ],
            history: Vec::new(),
            sweep: Vec::new(),
        };
        let t = table(&[rep]);
        let names: Vec<&str> = t.iter().map(|r| r.estimator.as_str()).collect();
        assert_eq!(
            names,
            ["Exact model", "AL 5 rounds", "AL 10 rounds", "Random 10 days", "Random 20 days"]
        );
        assert!(t[0].lole.break_even.is_none());
        // AL 5 against exact: 2(t - 100) = t.
        assert_eq!(t[1].lole.break_even, Some(BreakEven::At { t: 200.0, performance: 200.0 }));
        assert_eq!(t[1].eens.break_even, Some(BreakEven::Invalid));
        // AL 10 against AL 5: 4(t - 200) = 2(t - 100) -> t = 300, 1/c2 = 400.
        assert_eq!(t[2].lole.break_even, Some(BreakEven::At { t: 300.0, performance: 400.0 }));
        // Random 10 against exact, Random 20 against Random 10.
        assert_eq!(t[3].lole.break_even, Some(BreakEven::At { t: 30.0, performance: 30.0 }));
        assert_eq!(t[3].eens.break_even, Some(BreakEven::Invalid));
        assert_eq!(t[4].lole.break_even, Some(BreakEven::At { t: 90.0, performance: 120.0 }));

        let rec = table_records(&t);
        assert_eq!(rec[0][1], "-");
        assert_eq!(rec[1][4], format!("1.000 ± {:.3}", 1.96 * 0.1f64.sqrt()));
        assert_eq!(rec[1][6], "200.00");
        assert_eq!(rec[1][9], "Invalid");
    }

    #[test]
    fn mean_std_across_repetitions() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!(m.mean, 2.0);
        assert!((m.std - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[5.0]).std, 0.0);
        assert!(MeanStd::of_all(&[Some(1.0), None]).is_none());
    }
}
