//! Wind, demand and thermal-availability inputs, and the generation-margin
//! traces built from them.
//!
//! A margin scenario is `z[t] = available thermal capacity + wind - demand`,
//! with the wind and demand years drawn independently and uniformly from a
//! [`ProfileLibrary`]. Years are fixed at 365 days of 24 hours.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Seed, StreamRng};

pub const HOURS_PER_DAY: usize = 24;
pub const DAYS_PER_YEAR: usize = 365;
pub const HOURS_PER_YEAR: usize = HOURS_PER_DAY * DAYS_PER_YEAR;

pub const WIND_FILE: &str = "wind.csv";
pub const DEMAND_FILE: &str = "demand.csv";

/// Yearly wind and demand profiles in MW, 8760 values each.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileLibrary {
    wind_years: Vec<Vec<f64>>,
    demand_years: Vec<Vec<f64>>,
}

impl ProfileLibrary {
    pub fn new(wind_years: Vec<Vec<f64>>, demand_years: Vec<Vec<f64>>) -> Result<Self> {
        if wind_years.is_empty() || demand_years.is_empty() {
            return Err(Error::InvalidParameter(
                "profile library needs at least one wind and one demand year".into(),
            ));
        }
        for profile in wind_years.iter().chain(&demand_years) {
            if profile.len() != HOURS_PER_YEAR {
                return Err(Error::ProfileLength {
                    expected: HOURS_PER_YEAR,
                    found: profile.len(),
                });
            }
            if let Some(v) = profile.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::InvalidParameter(format!(
                    "profile values must be finite and nonnegative, found {v}"
                )));
            }
        }
        Ok(ProfileLibrary {
            wind_years,
            demand_years,
        })
    }

    pub fn wind_years(&self) -> &[Vec<f64>] {
        &self.wind_years
    }

    pub fn demand_years(&self) -> &[Vec<f64>] {
        &self.demand_years
    }

    pub fn mean_wind(&self) -> f64 {
        mean_of_years(&self.wind_years)
    }

    pub fn mean_demand(&self) -> f64 {
        mean_of_years(&self.demand_years)
    }
}

fn mean_of_years(years: &[Vec<f64>]) -> f64 {
    let total: f64 = years.iter().map(|y| y.iter().sum::<f64>()).sum();
    total / (years.len() * HOURS_PER_YEAR) as f64
}

/// Reads `wind.csv` and `demand.csv` from `dir`.
pub fn load_profiles(dir: impl AsRef<Path>) -> Result<ProfileLibrary> {
    let dir = dir.as_ref();
    let wind = load_profile_file(dir.join(WIND_FILE))?;
    let demand = load_profile_file(dir.join(DEMAND_FILE))?;
    ProfileLibrary::new(wind, demand)
}

/// Reads one profile CSV: a header naming each year, then one row per hour
/// with one column per year.
pub fn load_profile_file(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(file);
    let n_cols = reader.headers()?.len();
    if n_cols == 0 {
        return Err(Error::MalformedRow {
            path: path.into(),
            line: 1,
            reason: "empty header".into(),
        });
    }
    let mut columns = vec![Vec::with_capacity(HOURS_PER_YEAR); n_cols];
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != n_cols {
            return Err(Error::MalformedRow {
                path: path.into(),
                line,
                reason: format!("expected {n_cols} columns, found {}", record.len()),
            });
        }
        for (col, field) in columns.iter_mut().zip(record.iter()) {
            let value: f64 = field.trim().parse().map_err(|_| Error::MalformedRow {
                path: path.into(),
                line,
                reason: format!("not a number: {field:?}"),
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(Error::MalformedRow {
                    path: path.into(),
                    line,
                    reason: format!("negative or non-finite value {value}"),
                });
            }
            col.push(value);
        }
    }
    for col in &columns {
        if col.len() != HOURS_PER_YEAR {
            return Err(Error::ProfileLength {
                expected: HOURS_PER_YEAR,
                found: col.len(),
            });
        }
    }
    Ok(columns)
}

/// Writes the library as `wind.csv` and `demand.csv` in `dir`.
///
/// Values are written with Rust's shortest round-trip formatting, so loading
/// the files back reproduces the library bit for bit.
pub fn write_profiles(library: &ProfileLibrary, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_profile_file(library.wind_years(), dir.join(WIND_FILE))?;
    write_profile_file(library.demand_years(), dir.join(DEMAND_FILE))
}

fn write_profile_file(years: &[Vec<f64>], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record((1..=years.len()).map(|y| format!("year_{y}")))?;
    for hour in 0..HOURS_PER_YEAR {
        writer.write_record(years.iter().map(|y| format!("{:?}", y[hour])))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Parameters of the closed-form synthetic profile generator.
///
/// Wind capacity factor for hour `t` (day `d`, hour-of-day `h`):
///
/// ```text
/// cf(t) = clamp(mean_cf + seasonal·cos(2π d/365) + diurnal·cos(2π (h-3)/24) + noise·e(t), 0, 1)
/// wind(t) = capacity · cf(t)
/// ```
///
/// Demand:
///
/// ```text
/// shape(t)  = 1 + seasonal·cos(2π d/365) + diurnal·cos(2π (h-18)/24) - weekend·[d mod 7 ≥ 5]
/// demand(t) = max(0, mean · year_factor · shape(t) · (1 + noise·e(t)))
/// ```
///
/// `e(t)` is a unit-variance stationary AR(1) series and `year_factor` is
/// drawn once per year as `1 + year_sigma·ξ`. With every noise term set to
/// zero each generated year equals the base pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthParams {
    pub wind_capacity: f64,
    pub wind_mean_cf: f64,
    pub wind_seasonal_amp: f64,
    pub wind_diurnal_amp: f64,
    pub wind_noise: f64,
    pub wind_ar: f64,
    pub demand_mean: f64,
    pub demand_seasonal_amp: f64,
    pub demand_diurnal_amp: f64,
    pub demand_weekend_drop: f64,
    pub demand_noise: f64,
    pub demand_ar: f64,
    pub demand_year_sigma: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            wind_capacity: 400.0,
            wind_mean_cf: 0.32,
            wind_seasonal_amp: 0.08,
            wind_diurnal_amp: 0.04,
            wind_noise: 0.22,
            wind_ar: 0.97,
            demand_mean: 750.0,
            demand_seasonal_amp: 0.10,
            demand_diurnal_amp: 0.12,
            demand_weekend_drop: 0.06,
            demand_noise: 0.04,
            demand_ar: 0.9,
            demand_year_sigma: 0.02,
        }
    }
}

impl SynthParams {
    /// Same pattern with every stochastic term switched off.
    pub fn noiseless(self) -> Self {
        SynthParams {
            wind_noise: 0.0,
            demand_noise: 0.0,
            demand_year_sigma: 0.0,
            ..self
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errs = Vec::new();
        let nonneg = [
            ("wind_capacity", self.wind_capacity),
            ("wind_noise", self.wind_noise),
            ("demand_mean", self.demand_mean),
            ("demand_noise", self.demand_noise),
            ("demand_year_sigma", self.demand_year_sigma),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("synthetic.{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [("wind_ar", self.wind_ar), ("demand_ar", self.demand_ar)] {
            if !(0.0..1.0).contains(&v) {
                errs.push(format!("synthetic.{name} must lie in [0, 1), got {v}"));
            }
        }
        errs
    }

    fn wind_base(&self, hour: usize) -> f64 {
        let (d, h) = ((hour / HOURS_PER_DAY) as f64, (hour % HOURS_PER_DAY) as f64);
        self.wind_mean_cf
            + self.wind_seasonal_amp * (2.0 * PI * d / DAYS_PER_YEAR as f64).cos()
            + self.wind_diurnal_amp * (2.0 * PI * (h - 3.0) / 24.0).cos()
    }

    fn demand_shape(&self, hour: usize) -> f64 {
        let day = hour / HOURS_PER_DAY;
        let (d, h) = (day as f64, (hour % HOURS_PER_DAY) as f64);
        let weekend = if day % 7 >= 5 { self.demand_weekend_drop } else { 0.0 };
        1.0 + self.demand_seasonal_amp * (2.0 * PI * d / DAYS_PER_YEAR as f64).cos()
            + self.demand_diurnal_amp * (2.0 * PI * (h - 18.0) / 24.0).cos()
            - weekend
    }
}

fn ar1_series(rng: &mut StreamRng, phi: f64, out: &mut [f64]) {
    let innovation = (1.0 - phi * phi).sqrt();
    let mut e: f64 = rng.sample(StandardNormal);
    for slot in out.iter_mut() {
        *slot = e;
        let xi: f64 = rng.sample(StandardNormal);
        e = phi * e + innovation * xi;
    }
}

fn synth_wind_year(params: &SynthParams, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    let mut noise = vec![0.0; HOURS_PER_YEAR];
    ar1_series(&mut rng, params.wind_ar, &mut noise);
    noise
        .iter()
        .enumerate()
        .map(|(t, e)| {
            let cf = (params.wind_base(t) + params.wind_noise * e).clamp(0.0, 1.0);
            params.wind_capacity * cf
        })
        .collect()
}

fn synth_demand_year(params: &SynthParams, seed: Seed) -> Vec<f64> {
    let mut rng = seed.rng();
    let xi: f64 = rng.sample(StandardNormal);
    let year_factor = 1.0 + params.demand_year_sigma * xi;
    let mut noise = vec![0.0; HOURS_PER_YEAR];
    ar1_series(&mut rng, params.demand_ar, &mut noise);
    noise
        .iter()
        .enumerate()
        .map(|(t, e)| {
            let d = params.demand_mean
                * year_factor
                * params.demand_shape(t)
                * (1.0 + params.demand_noise * e);
            d.max(0.0)
        })
        .collect()
}

/// Deterministic synthetic library with `n_wind` wind and `n_demand` demand years.
pub fn synth_profiles(
    n_wind: usize,
    n_demand: usize,
    params: &SynthParams,
    seed: Seed,
) -> Result<ProfileLibrary> {
    if n_wind == 0 || n_demand == 0 {
        return Err(Error::InvalidParameter(
            "synthetic profile counts must be >= 1".into(),
        ));
    }
    let errs = params.validate();
    if !errs.is_empty() {
        return Err(Error::Config(errs));
    }
    let wind = (0..n_wind)
        .map(|i| synth_wind_year(params, seed.derive("synth-wind", i as u64)))
        .collect();
    let demand = (0..n_demand)
        .map(|i| synth_demand_year(params, seed.derive("synth-demand", i as u64)))
        .collect();
    ProfileLibrary::new(wind, demand)
}

/// Temporal structure of thermal outages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutageModel {
    /// Each generator-hour is available independently.
    IidHourly,
    /// Alternating up/down sojourns with mean repair time `mttr_hours`,
    /// started from the stationary distribution.
    TwoStateMarkov { mttr_hours: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThermalFleet {
    capacities: Vec<f64>,
    availability: f64,
    outage_model: OutageModel,
}

impl ThermalFleet {
    pub fn new(capacities: Vec<f64>, availability: f64, outage_model: OutageModel) -> Result<Self> {
        let errs = Self::check(&capacities, availability, outage_model);
        if errs.is_empty() {
            Ok(ThermalFleet {
                capacities,
                availability,
                outage_model,
            })
        } else {
            Err(Error::Config(errs))
        }
    }

    /// Every invariant violation of the given fleet definition.
    pub fn check(capacities: &[f64], availability: f64, outage_model: OutageModel) -> Vec<String> {
        let mut errs = Vec::new();
        if capacities.is_empty() {
            errs.push("thermal fleet needs at least one generator".to_string());
        }
        if let Some(c) = capacities.iter().find(|c| !(c.is_finite() && **c > 0.0)) {
            errs.push(format!("thermal capacities must be > 0, found {c}"));
        }
        if !(availability > 0.0 && availability <= 1.0) {
            errs.push(format!("availability must lie in (0, 1], got {availability}"));
        }
        if let OutageModel::TwoStateMarkov { mttr_hours } = outage_model {
            if !(mttr_hours >= 1.0 && mttr_hours.is_finite()) {
                errs.push(format!("mttr_hours must be >= 1, got {mttr_hours}"));
            } else if availability < 1.0 && availability * mttr_hours / (1.0 - availability) < 1.0 {
                errs.push(format!(
                    "mean time to failure implied by availability {availability} and mttr {mttr_hours} is below one hour"
                ));
            }
        }
        errs
    }

    /// `n` equal units of `capacity` MW.
    pub fn uniform(n: usize, capacity: f64, availability: f64, outage_model: OutageModel) -> Result<Self> {
        Self::new(vec![capacity; n], availability, outage_model)
    }

    pub fn capacities(&self) -> &[f64] {
        &self.capacities
    }

    pub fn availability(&self) -> f64 {
        self.availability
    }

    pub fn outage_model(&self) -> OutageModel {
        self.outage_model
    }

    pub fn total_capacity(&self) -> f64 {
        self.capacities.iter().sum()
    }

    /// Adds each generator's available capacity to `out` hour by hour.
    fn add_available(&self, rng: &mut StreamRng, out: &mut [f64]) {
        let total = self.total_capacity();
        out.iter_mut().for_each(|v| *v += total);
        let len = out.len();
        for &cap in &self.capacities {
            let mut outage = |hours: std::ops::Range<usize>| {
                out[hours].iter_mut().for_each(|v| *v -= cap);
            };
            match self.outage_model {
                OutageModel::IidHourly => iid_outages(rng, 1.0 - self.availability, len, &mut outage),
                OutageModel::TwoStateMarkov { mttr_hours } => {
                    markov_outages(rng, self.availability, mttr_hours, len, &mut outage)
                }
            }
        }
    }
}

/// Number of failures before the first success of a Bernoulli trial whose
/// failure probability `q` satisfies `rate = -ln q`.
#[inline]
fn geometric_gap(rng: &mut StreamRng, rate: f64) -> usize {
    let e: f64 = rng.sample(Exp1);
    let k = (e / rate).floor();
    if k >= usize::MAX as f64 {
        usize::MAX
    } else {
        k as usize
    }
}

/// Reports each of `len` hours as an outage independently with probability
/// `p_out`, skipping geometrically distributed runs of available hours.
fn iid_outages(rng: &mut StreamRng, p_out: f64, len: usize, outage: &mut impl FnMut(std::ops::Range<usize>)) {
    if p_out <= 0.0 {
        return;
    }
    if p_out >= 1.0 {
        outage(0..len);
        return;
    }
    let rate = -(1.0 - p_out).ln();
    let mut t = 0usize;
    loop {
        t = t.saturating_add(geometric_gap(rng, rate));
        if t >= len {
            break;
        }
        outage(t..t + 1);
        t += 1;
    }
}

fn markov_outages(
    rng: &mut StreamRng,
    availability: f64,
    mttr: f64,
    len: usize,
    outage: &mut impl FnMut(std::ops::Range<usize>),
) {
    if availability >= 1.0 {
        return;
    }
    let mttf = availability * mttr / (1.0 - availability);
    // Per-hour probability of leaving the current state.
    let leave_up = 1.0 / mttf;
    let leave_down = 1.0 / mttr;
    let mut is_up = rng.random::<f64>() < availability;
    let mut t = 0usize;
    while t < len {
        let p = if is_up { leave_up } else { leave_down };
        let run = if p >= 1.0 {
            1
        } else {
            1usize.saturating_add(geometric_gap(rng, -(1.0 - p).ln()))
        };
        let end = t.saturating_add(run).min(len);
        if !is_up {
            outage(t..end);
        }
        t = end;
        is_up = !is_up;
    }
}

/// One year of hourly margin (MW). Always 8760 values.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyTrace(Vec<f64>);

impl HourlyTrace {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != HOURS_PER_YEAR {
            return Err(Error::TraceLength {
                expected: HOURS_PER_YEAR,
                found: values.len(),
            });
        }
        Ok(HourlyTrace(values))
    }

    pub fn constant(value: f64) -> Self {
        HourlyTrace(vec![value; HOURS_PER_YEAR])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / HOURS_PER_YEAR as f64
    }

    /// The 24 hours of day `day` (0-based).
    pub fn day(&self, day: usize) -> DailyTrace {
        let mut out = [0.0; HOURS_PER_DAY];
        out.copy_from_slice(&self.0[day * HOURS_PER_DAY..(day + 1) * HOURS_PER_DAY]);
        DailyTrace(out)
    }
}

/// 24 hourly margin values (MW).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyTrace(pub [f64; HOURS_PER_DAY]);

impl DailyTrace {
    pub fn from_slice(values: &[f64]) -> Result<Self> {
        let arr: [f64; HOURS_PER_DAY] = values.try_into().map_err(|_| Error::TraceLength {
            expected: HOURS_PER_DAY,
            found: values.len(),
        })?;
        Ok(DailyTrace(arr))
    }

    pub fn values(&self) -> &[f64; HOURS_PER_DAY] {
        &self.0
    }
}

/// Splits a year into 365 consecutive days.
pub fn split_days(trace: &HourlyTrace) -> Vec<DailyTrace> {
    (0..DAYS_PER_YEAR).map(|d| trace.day(d)).collect()
}

/// Splits an arbitrary slice, rejecting anything other than 8760 values.
pub fn split_days_checked(values: &[f64]) -> Result<Vec<DailyTrace>> {
    if values.len() != HOURS_PER_YEAR {
        return Err(Error::TraceLength {
            expected: HOURS_PER_YEAR,
            found: values.len(),
        });
    }
    Ok(values
        .chunks_exact(HOURS_PER_DAY)
        .map(|c| DailyTrace::from_slice(c).expect("chunk of 24"))
        .collect())
}

pub fn concat_days(days: &[DailyTrace]) -> Result<HourlyTrace> {
    HourlyTrace::new(days.iter().flat_map(|d| d.0).collect())
}

/// Thermal fleet plus profile library: everything needed to draw margins.
#[derive(Debug, Clone)]
pub struct ScenarioSource {
    pub thermal: ThermalFleet,
    pub library: ProfileLibrary,
}

impl ScenarioSource {
    pub fn new(thermal: ThermalFleet, library: ProfileLibrary) -> Self {
        ScenarioSource { thermal, library }
    }

    pub fn margin_year(&self, rng: &mut StreamRng) -> HourlyTrace {
        sample_margin_year(&self.thermal, &self.library, rng)
    }

    pub fn margin_day(&self, rng: &mut StreamRng) -> DailyTrace {
        sample_margin_day(&self.thermal, &self.library, rng)
    }
}

/// Hourly available thermal capacity for one year.
pub fn sample_available_capacity(fleet: &ThermalFleet, rng: &mut StreamRng) -> HourlyTrace {
    let mut out = vec![0.0; HOURS_PER_YEAR];
    fleet.add_available(rng, &mut out);
    HourlyTrace(out)
}

/// `z[t] = available(t) + wind[w](t) - demand[d](t)` with `w` and `d` drawn
/// independently and uniformly.
pub fn sample_margin_year(
    fleet: &ThermalFleet,
    library: &ProfileLibrary,
    rng: &mut StreamRng,
) -> HourlyTrace {
    let wind = &library.wind_years[rng.random_range(0..library.wind_years.len())];
    let demand = &library.demand_years[rng.random_range(0..library.demand_years.len())];
    let mut out: Vec<f64> = wind.iter().zip(demand).map(|(w, d)| w - d).collect();
    fleet.add_available(rng, &mut out);
    HourlyTrace(out)
}

/// One day of margin: the same construction as [`sample_margin_year`]
/// restricted to a uniformly drawn day. Only the 24 hours of thermal
/// availability that are needed get sampled; for both outage models this
/// has the same distribution as cutting the day out of a full year.
pub fn sample_margin_day(
    fleet: &ThermalFleet,
    library: &ProfileLibrary,
    rng: &mut StreamRng,
) -> DailyTrace {
    let wind = &library.wind_years[rng.random_range(0..library.wind_years.len())];
    let demand = &library.demand_years[rng.random_range(0..library.demand_years.len())];
    let day = rng.random_range(0..DAYS_PER_YEAR);
    let range = day * HOURS_PER_DAY..(day + 1) * HOURS_PER_DAY;
    let mut out = [0.0; HOURS_PER_DAY];
    for ((slot, w), d) in out.iter_mut().zip(&wind[range.clone()]).zip(&demand[range]) {
        *slot = w - d;
    }
    fleet.add_available(rng, &mut out);
    DailyTrace(out)
}
