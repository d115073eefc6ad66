//! Experiment configuration: a versioned TOML file.
//!
//! ```toml
//! version = 1
//! seed = 2025
//! repetitions = 10
//! output_dir = "out/reference"
//! clock = "synthetic"            # or "wall"
//!
//! [system.thermal]               # required
//! capacities = [100.0, ...]      # MW
//! availability = 0.9
//! outage_model = "iid_hourly"    # or { two_state_markov = { mttr_hours = 8.0 } }
//!
//! [system.storage]               # required; `preset` or `units`
//! preset = "reference"
//! # units = [{ power = 2.0, energy_cap = 4.0 }, ...]
//! charge_efficiency = 1.0
//! initial_soc = "full"           # "empty" or { fraction = 0.5 }
//!
//! [system.profiles]
//! source = "synthetic"           # or "csv" with csv_dir
//! n_wind = 30
//! n_demand = 10
//! [system.profiles.synthetic]    # generator parameters
//!
//! [surrogate]                    # forest parameters
//! [active_learning]              # n_init, pool_size, batch_size, rounds
//! [variants]                     # required
//! al_rounds = [5, 10, 20]
//! random_sizes = [3285, 7300, 14600]
//! sweep_rounds = [4, 8, 12, 16, 20]
//! [test_sets]
//! daily = 100000
//! yearly = 1000
//! [mlmc]                         # required
//! t_sim = 2004.0
//! n_pilot = 200
//! primary_metric = "eens"
//! [cost_model]                   # synthetic clock costs, seconds
//! ```

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::active_learning::ALConfig;
use crate::adequacy::{InitialSoc, StorageFleet, StorageUnit};
use crate::cost::{Clock, CostModel};
use crate::error::{Error, Result};
use crate::forest::ForestParams;
use crate::mlmc::N_MIN;
use crate::scenario::{OutageModel, SynthParams, ThermalFleet, DAYS_PER_YEAR, HOURS_PER_YEAR};
use crate::system::{EENS, LOLE};

pub const CONFIG_VERSION: u32 = 1;
/// Environment variable overriding `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "MLMC_ADEQUACY_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_repetitions")]
    pub repetitions: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub clock: ClockKind,
    pub system: SystemConfig,
    #[serde(default)]
    pub surrogate: ForestParams,
    #[serde(default)]
    pub active_learning: ALConfig,
    pub variants: Variants,
    #[serde(default)]
    pub test_sets: TestSets,
    pub mlmc: MlmcConfig,
    #[serde(default)]
    pub cost_model: CostModel,
}

fn default_repetitions() -> usize {
    10
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockKind {
    #[default]
    Wall,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub thermal: ThermalConfig,
    pub storage: StorageConfig,
    #[serde(default)]
    pub profiles: ProfilesConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalConfig {
    pub capacities: Vec<f64>,
    pub availability: f64,
    pub outage_model: OutageModel,
}

impl Default for ThermalConfig {
    fn default() -> Self {
        ThermalConfig {
            capacities: vec![100.0; 12],
            availability: 0.9,
            outage_model: OutageModel::IidHourly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StoragePreset {
    Reference,
    None,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<StoragePreset>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Vec<StorageUnit>>,
    #[serde(default = "one")]
    pub charge_efficiency: f64,
    #[serde(default)]
    pub initial_soc: InitialSoc,
}

fn one() -> f64 {
    1.0
}

impl StorageConfig {
    fn units(&self) -> std::result::Result<Vec<StorageUnit>, String> {
        match (&self.preset, &self.units) {
            (Some(StoragePreset::Reference), None) => Ok(StorageFleet::reference().units().to_vec()),
            (Some(StoragePreset::None), None) => Ok(Vec::new()),
            (None, Some(units)) => Ok(units.clone()),
            (Some(_), Some(_)) => Err("system.storage: give either `preset` or `units`, not both".into()),
            (None, None) => Err("system.storage: one of `preset` or `units` is required".into()),
        }
    }

    pub fn build(&self) -> Result<StorageFleet> {
        let units = self.units().map_err(|e| Error::Config(vec![e]))?;
        StorageFleet::new(units, self.charge_efficiency, self.initial_soc)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSource {
    #[default]
    Synthetic,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfilesConfig {
    pub source: ProfileSource,
    pub n_wind: usize,
    pub n_demand: usize,
    /// Seed for the synthetic library; derived from the master seed if absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub synthetic: SynthParams,
    /// Directory holding `wind.csv` and `demand.csv`, relative to the config file.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub csv_dir: Option<PathBuf>,
}

impl Default for ProfilesConfig {
    fn default() -> Self {
        ProfilesConfig {
            source: ProfileSource::Synthetic,
            n_wind: 30,
            n_demand: 10,
            seed: None,
            synthetic: SynthParams::default(),
            csv_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Variants {
    pub al_rounds: Vec<usize>,
    pub random_sizes: Vec<usize>,
    /// AL rounds at which AL and size-matched random surrogates are compared.
    pub sweep_rounds: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSets {
    pub daily: usize,
    pub yearly: usize,
}

impl Default for TestSets {
    fn default() -> Self {
        TestSets {
            daily: 100_000,
            yearly: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Lole,
    #[default]
    Eens,
}

impl Metric {
    pub fn index(self) -> usize {
        match self {
            Metric::Lole => LOLE,
            Metric::Eens => EENS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlmcConfig {
    /// Shared simulation budget, seconds, including the pilot.
    pub t_sim: f64,
    pub n_pilot: usize,
    pub primary_metric: Metric,
}

impl Default for MlmcConfig {
    fn default() -> Self {
        MlmcConfig {
            t_sim: 2004.0,
            n_pilot: 200,
            primary_metric: Metric::Eens,
        }
    }
}

impl ExperimentConfig {
    pub fn clock(&self) -> Clock {
        match self.clock {
            ClockKind::Wall => Clock::Wall,
            ClockKind::Synthetic => Clock::Synthetic(self.cost_model),
        }
    }

    pub fn thermal_fleet(&self) -> Result<ThermalFleet> {
        let t = &self.system.thermal;
        ThermalFleet::new(t.capacities.clone(), t.availability, t.outage_model)
    }

    pub fn storage_fleet(&self) -> Result<StorageFleet> {
        self.system.storage.build()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serialises to TOML")
    }

    /// Every invariant violation, not just the first.
    pub fn violations(&self) -> Vec<String> {
        let mut errs = Vec::new();
        if self.version != CONFIG_VERSION {
            errs.push(format!("version: expected {CONFIG_VERSION}, got {}", self.version));
        }
        if self.repetitions == 0 {
            errs.push("repetitions must be positive".into());
        }
        let t = &self.system.thermal;
        errs.extend(
            ThermalFleet::check(&t.capacities, t.availability, t.outage_model)
                .into_iter()
                .map(|e| format!("system.thermal: {e}")),
        );
        match self.system.storage.units() {
            Ok(units) => errs.extend(
                StorageFleet::check(&units, self.system.storage.charge_efficiency, self.system.storage.initial_soc)
                    .into_iter()
                    .map(|e| format!("system.storage: {e}")),
            ),
            Err(e) => errs.push(e),
        }
        let p = &self.system.profiles;
        match p.source {
            ProfileSource::Synthetic => {
                if p.n_wind == 0 || p.n_demand == 0 {
                    errs.push("system.profiles: n_wind and n_demand must be positive".into());
                }
                errs.extend(p.synthetic.validate().into_iter().map(|e| format!("system.profiles.{e}")));
            }
            ProfileSource::Csv => {
                if p.csv_dir.is_none() {
                    errs.push("system.profiles: source = \"csv\" requires csv_dir".into());
                }
            }
        }
        errs.extend(self.surrogate.validate().into_iter().map(|e| format!("surrogate: {e}")));
        errs.extend(self.active_learning.validate());
        let v = &self.variants;
        if v.al_rounds.is_empty() && v.random_sizes.is_empty() && v.sweep_rounds.is_empty() {
            errs.push("variants: at least one AL, random or sweep entry is required".into());
        }
        for (name, list) in [("al_rounds", &v.al_rounds), ("sweep_rounds", &v.sweep_rounds)] {
            if let Some(&max) = list.iter().max() {
                if max > self.active_learning.rounds {
                    errs.push(format!(
                        "variants.{name}: {max} exceeds active_learning.rounds ({})",
                        self.active_learning.rounds
                    ));
                }
            }
            if has_duplicates(list) {
                errs.push(format!("variants.{name}: duplicate entries"));
            }
        }
        if has_duplicates(&v.random_sizes) {
            errs.push("variants.random_sizes: duplicate entries".into());
        }
        if v.random_sizes.contains(&0) {
            errs.push("variants.random_sizes: sizes must be positive".into());
        }
        if self.test_sets.daily == 0 {
            errs.push("test_sets.daily must be positive".into());
        }
        if self.test_sets.yearly < 2 {
            errs.push("test_sets.yearly must be at least 2".into());
        }
        let m = &self.mlmc;
        if !(m.t_sim > 0.0 && m.t_sim.is_finite()) {
            errs.push(format!("mlmc.t_sim must be positive, got {}", m.t_sim));
        }
        if m.n_pilot < N_MIN {
            errs.push(format!("mlmc.n_pilot must be at least {N_MIN}, got {}", m.n_pilot));
        }
        let c = &self.cost_model;
        for (name, v) in [
            ("scenario_year", c.scenario_year),
            ("scenario_day", c.scenario_day),
            ("exact_hour", c.exact_hour),
            ("surrogate_tree_day", c.surrogate_tree_day),
            ("fit_row_tree", c.fit_row_tree),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("cost_model.{name} must be positive, got {v}"));
            }
        }
        if errs.is_empty() && self.clock == ClockKind::Synthetic {
            if let Some(e) = self.budget_shortfall() {
                errs.push(e);
            }
        }
        errs
    }

    /// Budget feasibility under the synthetic clock: the pilot plus the
    /// minimum allocation must fit in `t_sim`, and so must plain MC.
    fn budget_shortfall(&self) -> Option<String> {
        let c = &self.cost_model;
        let trees = 2 * self.surrogate.n_trees;
        let tau1 = c.scenario_year + c.surrogate_call(DAYS_PER_YEAR, trees);
        let tau2 = c.scenario_year + c.exact_call(HOURS_PER_YEAR) + c.surrogate_call(DAYS_PER_YEAR, trees);
        let needed = (self.mlmc.n_pilot + N_MIN) as f64 * (tau1 + tau2);
        (self.mlmc.t_sim < needed).then(|| {
            format!(
                "mlmc.t_sim = {} s is infeasible: pilot and minimum allocation need {needed:.3} s",
                self.mlmc.t_sim
            )
        })
    }

    pub fn validate(&self) -> Result<()> {
        let errs = self.violations();
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }
}

fn has_duplicates(v: &[usize]) -> bool {
    let mut s = v.to_vec();
    s.sort_unstable();
    s.windows(2).any(|w| w[0] == w[1])
}

const REQUIRED: [&str; 3] = ["system", "variants", "mlmc"];
const REQUIRED_SYSTEM: [&str; 2] = ["thermal", "storage"];

fn section<T: DeserializeOwned>(value: &toml::Value, name: &str, errs: &mut Vec<String>) -> Option<T> {
    match value.clone().try_into::<T>() {
        Ok(v) => Some(v),
        Err(e) => {
            errs.push(format!("{name}: {}", e.message().trim()));
            None
        }
    }
}

/// Parses configuration text, listing every structural problem and every
/// invariant violation. `base` resolves a relative `csv_dir`.
pub fn parse_config(text: &str, base: &Path) -> Result<ExperimentConfig> {
    let root: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(vec![format!("syntax: {}", e.message().trim())]))?;
    let mut errs = Vec::new();
    match root.get("version") {
        None => errs.push("missing key `version`".into()),
        Some(v) if v.as_integer() != Some(i64::from(CONFIG_VERSION)) => {
            errs.push(format!("version: expected {CONFIG_VERSION}, got {v}"))
        }
        _ => {}
    }
    for name in REQUIRED {
        if !root.contains_key(name) {
            errs.push(format!("missing section [{name}]"));
        }
    }
    if let Some(system) = root.get("system").and_then(|s| s.as_table()) {
        for name in REQUIRED_SYSTEM {
            if !system.contains_key(name) {
                errs.push(format!("missing section [system.{name}]"));
            }
        }
    }
    // Check each section on its own so that one bad section does not hide
    // problems in the others.
    let known = [
        "version",
        "seed",
        "repetitions",
        "output_dir",
        "clock",
        "system",
        "surrogate",
        "active_learning",
        "variants",
        "test_sets",
        "mlmc",
        "cost_model",
    ];
    for key in root.keys() {
        if !known.contains(&key.as_str()) {
            errs.push(format!("unknown top-level key `{key}`"));
        }
    }
    if let Some(v) = root.get("system") {
        if let Some(t) = v.get("thermal") {
            section::<ThermalConfig>(t, "system.thermal", &mut errs);
        }
        if let Some(t) = v.get("storage") {
            section::<StorageConfig>(t, "system.storage", &mut errs);
        }
        if let Some(t) = v.get("profiles") {
            section::<ProfilesConfig>(t, "system.profiles", &mut errs);
        }
    }
    let checks: [(&str, fn(&toml::Value, &str, &mut Vec<String>) -> bool); 6] = [
        ("surrogate", |v, n, e| section::<ForestParams>(v, n, e).is_some()),
        ("active_learning", |v, n, e| section::<ALConfig>(v, n, e).is_some()),
        ("variants", |v, n, e| section::<Variants>(v, n, e).is_some()),
        ("test_sets", |v, n, e| section::<TestSets>(v, n, e).is_some()),
        ("mlmc", |v, n, e| section::<MlmcConfig>(v, n, e).is_some()),
        ("cost_model", |v, n, e| section::<CostModel>(v, n, e).is_some()),
    ];
    for (name, check) in checks {
        if let Some(v) = root.get(name) {
            check(v, name, &mut errs);
        }
    }
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let mut cfg: ExperimentConfig = toml::Value::Table(root)
        .try_into()
        .map_err(|e: toml::de::Error| Error::Config(vec![e.message().trim().to_string()]))?;
    if let Some(dir) = &cfg.system.profiles.csv_dir {
        if dir.is_relative() {
            cfg.system.profiles.csv_dir = Some(base.join(dir));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, path.parent().unwrap_or(Path::new(".")))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
[system.thermal]
[system.storage]
preset = "reference"
[variants]
al_rounds = [1]
[mlmc]
"#;

    fn parse(text: &str) -> Result<ExperimentConfig> {
        parse_config(text, Path::new("."))
    }

    fn errors(text: &str) -> Vec<String> {
        match parse(text) {
            Err(Error::Config(e)) => e,
            other => panic!("expected config errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse(MINIMAL).unwrap();
        assert_eq!(cfg.repetitions, 10);
        assert_eq!(cfg.test_sets, TestSets { daily: 100_000, yearly: 1000 });
        assert_eq!(cfg.mlmc.t_sim, 2004.0);
        assert_eq!(cfg.active_learning, ALConfig::default());
        assert_eq!(cfg.storage_fleet().unwrap(), StorageFleet::reference());
        // The resolved dump parses back to the same configuration.
        assert_eq!(parse(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn missing_sections_are_named() {
        let errs = errors("version = 1\n[variants]\nal_rounds=[1]\n[mlmc]\n");
        assert!(errs.iter().any(|e| e.contains("[system]")), "{errs:?}");
        let errs = errors("version = 1\n[system.storage]\npreset=\"reference\"\n[variants]\nal_rounds=[1]\n[mlmc]\n");
        assert!(errs.iter().any(|e| e.contains("[system.thermal]")), "{errs:?}");
    }

    #[test]
    fn all_violations_are_listed() {
        let text = MINIMAL.replace("[mlmc]", "[mlmc]\nn_pilot = 1\n[active_learning]\nbatch_size = 5000\n[test_sets]\ndaily = 0");
        let errs = errors(&text);
        assert!(errs.iter().any(|e| e.contains("batch_size")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("n_pilot")), "{errs:?}");
        assert!(errs.iter().any(|e| e.contains("test_sets.daily")), "{errs:?}");
    }

    #[test]
    fn type_errors_in_several_sections_are_all_reported() {
        let text = MINIMAL.replace("[mlmc]", "[mlmc]\nt_sim = \"long\"\n[surrogate]\nn_trees = -3\nbogus = 1");
        let errs = errors(&text);
        assert!(errs.iter().any(|e| e.starts_with("mlmc:")), "{errs:?}");
        assert!(errs.iter().any(|e| e.starts_with("surrogate:")), "{errs:?}");
    }

    #[test]
    fn infeasible_budget_is_rejected() {
        let text = MINIMAL.replace("[mlmc]", "[mlmc]\nt_sim = 10.0") + "\nclock = \"synthetic\"\n";
        // `clock` after a table header belongs to that table; put it first.
        let text = format!("clock = \"synthetic\"\n{}", text.trim_end().trim_end_matches("clock = \"synthetic\""));
        let errs = errors(&text);
        assert!(errs.iter().any(|e| e.contains("infeasible")), "{errs:?}");
    }

    #[test]
    fn storage_needs_exactly_one_definition() {
        let text = MINIMAL.replace("preset = \"reference\"", "");
        assert!(errors(&text).iter().any(|e| e.contains("preset")));
        let text = MINIMAL.replace(
            "preset = \"reference\"",
            "preset = \"reference\"\nunits = [{ power = 1.0, energy_cap = 2.0 }]",
        );
        assert!(errors(&text).iter().any(|e| e.contains("not both")));
        let text = MINIMAL.replace("preset = \"reference\"", "units = [{ power = 1.0, energy_cap = 2.0 }]");
        assert_eq!(parse(&text).unwrap().storage_fleet().unwrap().units().len(), 1);
    }

    #[test]
    fn wrong_version_is_rejected() {
        let errs = errors(&MINIMAL.replace("version = 1", "version = 7"));
        assert!(errs.iter().any(|e| e.contains("version")));
    }
}
