//! Acceptance suite: one PASS/FAIL line per criterion, in order. Runs as a
//! plain binary so the lines always reach the terminal.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use mlmc_adequacy::active_learning::{ALConfig, Trainer};
use mlmc_adequacy::adequacy::{brute_force_min_ens, dispatch_trace, InitialSoc, StorageFleet, StorageUnit};
use mlmc_adequacy::config::{load_config, ExperimentConfig, TestSets, Variants};
use mlmc_adequacy::cost::{Clock, CostModel};
use mlmc_adequacy::experiment::{run_experiment, Experiment, Method, Variant, TABLE_HEADER};
use mlmc_adequacy::forest::ForestParams;
use mlmc_adequacy::mlmc::{
    allocate_samples, break_even, enumerate_level_means, performance, pilot, predicted_variance, run_mlmc,
    run_plain_mc, BreakEven, Budget, Hierarchy, LevelStats, SpeedPoint,
};
use mlmc_adequacy::rng::Seed;
use mlmc_adequacy::scenario::{HourlyTrace, HOURS_PER_YEAR};
use mlmc_adequacy::stats;
use mlmc_adequacy::system::{ExactModel, SurrogateModel, YearSampler, EENS, LOLE};

const NAMES: [&str; 2] = ["LOLE", "EENS"];

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn reference_config() -> ExperimentConfig {
    load_config(configs_dir().join("reference.toml")).expect("reference config is valid")
}

/// Reference system without the expensive test sets.
fn reference_system() -> Experiment {
    let mut cfg = reference_config();
    cfg.test_sets = TestSets { daily: 1, yearly: 2 };
    Experiment::new(cfg).expect("reference system builds")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn telescoping() -> Outcome {
    let start = Instant::now();
    let exp = reference_system();
    let forest = ForestParams {
        n_trees: 10,
        ..ForestParams::default()
    };
    let trainer = Trainer {
        source: &exp.source,
        fleet: &exp.fleet,
        forest: &forest,
        clock: Clock::Synthetic(CostModel::default()),
    };
    let run = trainer.train_random(300, Seed::new(11)).unwrap();
    // 2 outage states x 4 wind years x 2 demand years, unequal weights.
    let lib = &exp.source.library;
    let cap = exp.source.thermal.total_capacity();
    let mut space = Vec::new();
    let mut weight_total = 0.0;
    for (o, lost) in [0.0, 100.0].into_iter().enumerate() {
        for w in 0..4 {
            for d in 0..2 {
                let margin: Vec<f64> = (0..HOURS_PER_YEAR)
                    .map(|t| cap - lost + lib.wind_years()[w][t] - lib.demand_years()[d][t])
                    .collect();
                let weight = (1 + o + 2 * w + 3 * d) as f64;
                weight_total += weight;
                space.push((HourlyTrace::new(margin).unwrap(), weight));
            }
        }
    }
    for s in &mut space {
        s.1 /= weight_total;
    }
    let sampler = YearSampler(&exp.source);
    let exact = ExactModel(&exp.fleet);
    let surrogate = SurrogateModel(&run.surrogate);
    let h = Hierarchy::new(&sampler, vec![&surrogate, &exact]).unwrap();
    let levels = enumerate_level_means(&h, &space).unwrap();
    let mut worst: f64 = 0.0;
    for m in [LOLE, EENS] {
        let telescoped: f64 = levels.iter().map(|l| l[m]).sum();
        let direct: f64 = space.iter().map(|(z, w)| w * exact_value(&exact, z, m)).sum();
        worst = worst.max(rel_err(telescoped, direct));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 1.0,
        format!("{} scenarios, max rel err {worst:.2e} (<= 1e-12), {secs:.2} s (< 1 s)", space.len()),
    )
}

fn exact_value(model: &ExactModel, z: &HourlyTrace, metric: usize) -> f64 {
    use mlmc_adequacy::mlmc::Model;
    model.evaluate(z).unwrap()[metric]
}

struct Repeated {
    estimates: Vec<[f64; 2]>,
    variances: Vec<[f64; 2]>,
    mc: [f64; 2],
    mc_var: [f64; 2],
    secs: f64,
}

/// 200 independent two-level runs with one allocation, and a high-N
/// plain-MC reference on the exact model.
fn repeated_runs() -> Repeated {
    let start = Instant::now();
    let exp = reference_system();
    let clock = Clock::Synthetic(CostModel::default());
    let forest = ForestParams {
        n_trees: 30,
        ..ForestParams::default()
    };
    let trainer = Trainer {
        source: &exp.source,
        fleet: &exp.fleet,
        forest: &forest,
        clock,
    };
    let run = trainer.train_random(1500, Seed::new(21)).unwrap();
    let sampler = YearSampler(&exp.source);
    let exact = ExactModel(&exp.fleet);
    let surrogate = SurrogateModel(&run.surrogate);
    let h = Hierarchy::new(&sampler, vec![&surrogate, &exact]).unwrap();
    let seed = Seed::new(22);
    let (stats, _) = pilot(&h, 100, seed.derive("pilot", 0), &clock).unwrap();
    let allocation = allocate_samples(&stats, 100.0, EENS).unwrap();
    let results: Vec<_> = (0..200u64)
        .map(|i| run_mlmc(&h, &allocation, seed.derive("run", i), &clock).unwrap())
        .collect();
    let mc = run_plain_mc(&sampler, &exact, Budget::Samples(50_000), seed.derive("reference", 0), &clock).unwrap();
    Repeated {
        estimates: results.iter().map(|r| r.estimate).collect(),
        variances: results.iter().map(|r| r.variance).collect(),
        mc: mc.estimate,
        mc_var: mc.variance,
        secs: start.elapsed().as_secs_f64(),
    }
}

fn unbiasedness(r: &Repeated) -> Outcome {
    let mut pass = r.secs <= 600.0;
    let mut parts = Vec::new();
    for m in [LOLE, EENS] {
        let xs: Vec<f64> = r.estimates.iter().map(|e| e[m]).collect();
        let mean = stats::mean(&xs);
        let se = (stats::sample_std(&xs).powi(2) / xs.len() as f64 + r.mc_var[m]).sqrt();
        let z = (mean - r.mc[m]).abs() / se;
        pass &= z <= 3.0;
        parts.push(format!("{} mean {mean:.3} vs MC {:.3}, |z| {z:.2} (<= 3)", NAMES[m], r.mc[m]));
    }
    outcome(pass, format!("{}; {:.0} s (<= 600 s)", parts.join("; "), r.secs))
}

fn variance_law(r: &Repeated) -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [LOLE, EENS] {
        let xs: Vec<f64> = r.estimates.iter().map(|e| e[m]).collect();
        let empirical = stats::sample_std(&xs).powi(2);
        let predicted = stats::mean(&r.variances.iter().map(|v| v[m]).collect::<Vec<_>>());
        let ratio = empirical / predicted;
        pass &= (0.75..=1.25).contains(&ratio);
        parts.push(format!("{} empirical/predicted {ratio:.3}", NAMES[m]));
    }
    outcome(pass, format!("{} (within 0.75..1.25)", parts.join(", ")))
}

fn allocation_optimality() -> Outcome {
    let level = |sigma: f64, tau: f64| LevelStats {
        mean: [0.0; 2],
        sigma: [sigma; 2],
        tau,
        n: 0,
    };
    let stats = [level(3.0, 1.0), level(1.0, 4.0)];
    let t_sim = 1000.0;
    let n = allocate_samples(&stats, t_sim, EENS).unwrap();
    let (n1, n2) = (n[0] as f64, n[1] as f64);
    let ratio_ok = (n1 - 1.0) / (n2 + 1.0) <= 6.0 && 6.0 <= (n1 + 1.0) / (n2 - 1.0);
    let optimum = predicted_variance(&stats, &n, EENS);
    // Continuous optimum (sum sigma sqrt(tau))^2 / t.
    let bound = (3.0f64 + 2.0).powi(2) / t_sim;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut beaten = 0;
    for _ in 0..10_000 {
        let f: f64 = rng.random_range(-0.1..=0.1);
        let k1 = ((n1 * (1.0 + f)).round() as usize).max(2);
        let k2 = ((t_sim - k1 as f64 * 1.0) / 4.0).floor() as usize;
        if k2 < 2 {
            continue;
        }
        if predicted_variance(&stats, &[k1, k2], EENS) < optimum - 1e-12 {
            beaten += 1;
        }
    }
    outcome(
        ratio_ok && beaten == 0 && optimum >= bound && optimum <= bound * 1.01,
        format!(
            "N = {n:?}, ratio {:.3} (6 within rounding), variance {optimum:.5} vs continuous {bound:.5}, {beaten} of 10000 rebalances better",
            n1 / n2
        ),
    )
}

fn dispatch_optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let step = 0.25;
    let (mut worst, mut below) = (0.0f64, 0);
    let n = 200;
    for _ in 0..n {
        let n_units = rng.random_range(1..=3);
        let mut units = Vec::new();
        let mut soc = Vec::new();
        for _ in 0..n_units {
            let e = rng.random_range(0..=12) as f64 * step;
            units.push(StorageUnit::new(rng.random_range(1..=8) as f64 * step, e));
            soc.push((rng.random_range(0..=12) as f64 * step).min(e));
        }
        let hours = rng.random_range(1..=8);
        let margin: Vec<f64> = (0..hours).map(|_| rng.random_range(-12..=8) as f64 * step).collect();
        let fleet = StorageFleet::new(units, 1.0, InitialSoc::Full).unwrap();
        let (out, _) = dispatch_trace(&margin, &fleet, &soc).unwrap();
        let oracle = brute_force_min_ens(&margin, &fleet, &soc, step).unwrap();
        worst = worst.max((out.ens - oracle).abs());
        // the grid optimum can sit above the continuous one
        if out.ens < oracle - 1e-9 {
            below += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= step + 1e-9 && secs <= 60.0,
        format!("{n} instances, max |greedy - grid optimum| {worst:.3} MWh (<= {step}), greedy below grid in {below}, {secs:.1} s (<= 60 s)"),
    )
}

fn al_superiority() -> Outcome {
    let start = Instant::now();
    let mut cfg = reference_config();
    cfg.repetitions = 10;
    cfg.test_sets = TestSets {
        daily: 10_000,
        yearly: 100,
    };
    cfg.variants = Variants {
        al_rounds: Vec::new(),
        random_sizes: Vec::new(),
        sweep_rounds: vec![4, 8, 12, 16, 20],
    };
    cfg.mlmc.t_sim = 20.0;
    cfg.mlmc.n_pilot = 2;
    let exp = Experiment::new(cfg).unwrap();
    let report = exp.run(&mut |_| {}).unwrap();
    let corr = |method: Method| -> Vec<(usize, f64)> {
        report
            .sweep
            .iter()
            .filter(|s| s.method == method)
            .map(|s| (s.train_size, s.corr_ens.map_or(f64::NAN, |c| c.mean)))
            .collect()
    };
    let (al, random) = (corr(Method::Al), corr(Method::Random));
    let wins = al.iter().zip(&random).filter(|(a, r)| a.0 == r.0 && a.1 > r.1).count();
    let secs = start.elapsed().as_secs_f64();
    let pairs: Vec<String> = al
        .iter()
        .zip(&random)
        .map(|(a, r)| format!("{}: {:.3}/{:.3}", a.0, a.1, r.1))
        .collect();
    outcome(
        wins >= 4 && al.len() == 5 && secs <= 900.0,
        format!(
            "yearly ENS corr AL/random {}; AL higher at {wins} of 5 (>= 4), {secs:.0} s (<= 900 s)",
            pairs.join(", ")
        ),
    )
}

fn bookkeeping() -> Outcome {
    let exp = reference_system();
    let forest = ForestParams {
        n_trees: 5,
        ..ForestParams::default()
    };
    let trainer = Trainer {
        source: &exp.source,
        fleet: &exp.fleet,
        forest: &forest,
        clock: Clock::Synthetic(CostModel::default()),
    };
    let cfg = ALConfig::default();
    let mut sizes = Vec::new();
    trainer
        .train_active(&cfg, Seed::new(31), |run| {
            if [5, 10, 20].contains(&run.rounds()) {
                sizes.push(run.labeled.len());
            }
            Ok(())
        })
        .unwrap();
    outcome(sizes == [1185, 1640, 2550], format!("labelled sizes after 5/10/20 rounds: {sizes:?}"))
}

fn speed_metric() -> Outcome {
    let exp = reference_system();
    let clock = Clock::Synthetic(CostModel::default());
    let sampler = YearSampler(&exp.source);
    let exact = ExactModel(&exp.fleet);
    let seed = Seed::new(41);
    let budgets = [250.0, 500.0, 1000.0, 2000.0];
    let mut pass = true;
    let mut parts = Vec::new();
    let reference = run_plain_mc(&sampler, &exact, Budget::Seconds(8000.0), seed.derive("reference", 0), &clock).unwrap();
    let runs: Vec<_> = budgets
        .iter()
        .enumerate()
        .map(|(i, &t)| run_plain_mc(&sampler, &exact, Budget::Seconds(t), seed.derive("budget", i as u64), &clock).unwrap())
        .collect();
    for m in [LOLE, EENS] {
        let s = reference.speed(m).unwrap();
        // 1/c^2 = q^2 / sigma^2 against t, least squares through the origin.
        let pts: Vec<(f64, f64)> = runs
            .iter()
            .map(|r| (r.t_sim, r.estimate[m].powi(2) / r.variance[m]))
            .collect();
        let slope = pts.iter().map(|(t, y)| t * y).sum::<f64>() / pts.iter().map(|(t, _)| t * t).sum::<f64>();
        let err = rel_err(slope, s);
        pass &= err <= 0.10;
        parts.push(format!("{} slope {slope:.4} vs s {s:.4} ({:.1}%)", NAMES[m], 100.0 * err));
    }
    let t_train = 123.25;
    let point = SpeedPoint { speed: 0.37, t_train };
    let root = point.performance(t_train).unwrap();
    let affine = [200.0, 400.0, 800.0].iter().all(|&t| {
        let p = performance(point.speed, t, t_train).unwrap();
        rel_err(p, point.speed * (t - t_train)) <= 1e-15
    });
    pass &= root == 0.0 && affine;
    parts.push(format!("1/c2 at t = t_train: {root}"));
    outcome(pass, parts.join("; ") + " (within 10%, root exact)")
}

fn break_even_case() -> Outcome {
    let a = SpeedPoint { speed: 2.0, t_train: 100.0 };
    let b = SpeedPoint { speed: 1.0, t_train: 0.0 };
    let be = break_even(a, b);
    let dominated = break_even(SpeedPoint { speed: 0.9, t_train: 76.0 }, SpeedPoint { speed: 1.1, t_train: 38.0 });
    outcome(
        be == BreakEven::At { t: 200.0, performance: 200.0 } && dominated == BreakEven::Invalid && dominated.label() == "Invalid",
        format!("s=(2,1), t_train=(100,0) -> {be:?}; dominated -> {}", dominated.label()),
    )
}

const REPORT_FILES: [&str; 5] = [
    "table1.csv",
    "al_history.csv",
    "sweep_by_size.csv",
    "sweep_by_time.csv",
    "report.json",
];

fn read_reports(dir: &Path) -> Vec<Vec<u8>> {
    REPORT_FILES.iter().map(|f| std::fs::read(dir.join(f)).unwrap()).collect()
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = load_config(configs_dir().join("smoke.toml")).unwrap();
    cfg.repetitions = 2;
    cfg.output_dir = dir.path().join("out");
    let mut outputs = Vec::new();
    for threads in [1, 3, 1] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_experiment(cfg.clone(), &mut |_| {})).unwrap();
        outputs.push(read_reports(&cfg.output_dir));
    }
    let same = outputs.windows(2).all(|w| w[0] == w[1]);
    outcome(
        same,
        format!("{} report files, byte-identical across runs at 1, 3 and 1 threads: {same}", REPORT_FILES.len()),
    )
}

fn end_to_end() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = reference_config();
    cfg.output_dir = dir.path().to_path_buf();
    let report = match run_experiment(cfg, &mut |_| {}) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("run failed: {e}")),
    };
    let secs = start.elapsed().as_secs_f64();
    let mut reader = csv::Reader::from_path(dir.path().join("table1.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().count();
    let exact = &report.table[0];
    let mut slower = Vec::new();
    for row in &report.table[1..] {
        for (m, (s, e)) in [(&row.lole, &exact.lole), (&row.eens, &exact.eens)].into_iter().enumerate() {
            let (s, e) = (s.speed.map_or(f64::INFINITY, |v| v.mean), e.speed.map_or(f64::INFINITY, |v| v.mean));
            if !(s > e) {
                slower.push(format!("{} {}", row.estimator, NAMES[m]));
            }
        }
    }
    let structure = rows == 7
        && header == TABLE_HEADER
        && matches!(exact.variant, Variant::Exact)
        && report.table.iter().filter(|r| matches!(r.variant, Variant::Active { .. })).count() == 3;
    outcome(
        structure && slower.is_empty() && secs <= 1800.0,
        format!(
            "{rows} rows, header matches {}, surrogate variants slower than exact MC: {:?}, {:.0} s on {} thread(s) (<= 1800 s)",
            header == TABLE_HEADER,
            slower,
            secs,
            rayon::current_num_threads()
        ),
    )
}

fn main() {
    let mut failed = Vec::new();
    let mut report = |id: usize, name: &str, o: Outcome| {
        println!("criterion {id:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed.push(id);
        }
    };
    report(1, "telescoping identity", telescoping());
    let repeated = repeated_runs();
    report(2, "MLMC unbiasedness", unbiasedness(&repeated));
    report(3, "variance law", variance_law(&repeated));
    report(4, "allocation optimality", allocation_optimality());
    report(5, "dispatch optimality", dispatch_optimality());
    report(6, "AL superiority", al_superiority());
    report(7, "AL bookkeeping", bookkeeping());
    report(8, "speed metric", speed_metric());
    report(9, "break-even", break_even_case());
    report(10, "determinism", determinism());
    report(11, "end-to-end protocol", end_to_end());
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
