//! The exact adequacy model: storage dispatch over a margin trace.
//!
//! Every shortfall hour the fleet serves as much of the deficit as its power
//! and stored energy allow. Discharge is shared by water-filling on
//! time-to-empty (`soc / power`): the units with the most hours of energy
//! left give first, and partial dispatch equalises their remaining
//! time-to-empty. Surplus hours recharge by the mirror rule, raising the
//! units with the lowest time-to-empty first.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scenario::{DailyTrace, HourlyTrace};

/// Residual shortfall (MW) above which an hour counts as loss of load.
pub const LOL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StorageUnit {
    /// Symmetric charge/discharge limit, MW.
    pub power: f64,
    /// Energy capacity, MWh.
    pub energy_cap: f64,
}

impl StorageUnit {
    pub fn new(power: f64, energy_cap: f64) -> Self {
        StorageUnit { power, energy_cap }
    }

    fn time_to_empty(&self, soc: f64) -> f64 {
        if self.power > 0.0 {
            soc / self.power
        } else {
            f64::INFINITY
        }
    }
}

/// State of charge at the start of a simulated trace.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialSoc {
    #[default]
    Full,
    Empty,
    /// Same fraction of capacity for every unit.
    Fraction(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StorageFleet {
    units: Vec<StorageUnit>,
    charge_efficiency: f64,
    initial_soc: InitialSoc,
}

impl StorageFleet {
    pub fn new(units: Vec<StorageUnit>, charge_efficiency: f64, initial_soc: InitialSoc) -> Result<Self> {
        let errs = Self::check(&units, charge_efficiency, initial_soc);
        if errs.is_empty() {
            Ok(StorageFleet {
                units,
                charge_efficiency,
                initial_soc,
            })
        } else {
            Err(Error::Config(errs))
        }
    }

    pub fn check(units: &[StorageUnit], charge_efficiency: f64, initial_soc: InitialSoc) -> Vec<String> {
        let mut errs = Vec::new();
        for (i, u) in units.iter().enumerate() {
            if !(u.power.is_finite() && u.power >= 0.0) {
                errs.push(format!("storage unit {i}: power must be >= 0, got {}", u.power));
            }
            if !(u.energy_cap.is_finite() && u.energy_cap >= 0.0) {
                errs.push(format!("storage unit {i}: energy_cap must be >= 0, got {}", u.energy_cap));
            }
        }
        if !(charge_efficiency > 0.0 && charge_efficiency <= 1.0) {
            errs.push(format!("charge_efficiency must lie in (0, 1], got {charge_efficiency}"));
        }
        if let InitialSoc::Fraction(f) = initial_soc {
            if !(0.0..=1.0).contains(&f) {
                errs.push(format!("initial soc fraction must lie in [0, 1], got {f}"));
            }
        }
        errs
    }

    pub fn empty() -> Self {
        StorageFleet {
            units: Vec::new(),
            charge_efficiency: 1.0,
            initial_soc: InitialSoc::Full,
        }
    }

    /// The 27-unit reference fleet: powers of 1-4 MW and durations of
    /// 1, 2, 4 or 6 hours.
    pub fn reference() -> Self {
        const DURATIONS: [f64; 4] = [1.0, 2.0, 4.0, 6.0];
        let units = (0..27)
            .map(|i| {
                let power = 1.0 + 0.5 * (i % 7) as f64;
                StorageUnit::new(power, power * DURATIONS[i % 4])
            })
            .collect();
        StorageFleet::new(units, 1.0, InitialSoc::Full).expect("reference fleet is valid")
    }

    pub fn units(&self) -> &[StorageUnit] {
        &self.units
    }

    pub fn charge_efficiency(&self) -> f64 {
        self.charge_efficiency
    }

    pub fn initial_soc_policy(&self) -> InitialSoc {
        self.initial_soc
    }

    pub fn with_initial_soc(mut self, policy: InitialSoc) -> Self {
        self.initial_soc = policy;
        self
    }

    pub fn initial_soc(&self) -> Vec<f64> {
        self.units
            .iter()
            .map(|u| match self.initial_soc {
                InitialSoc::Full => u.energy_cap,
                InitialSoc::Empty => 0.0,
                InitialSoc::Fraction(f) => f * u.energy_cap,
            })
            .collect()
    }
}

/// Loss-of-load hours and energy not served over a trace.
///
/// The exact model always produces an integral `lol`; surrogate outputs
/// share the type and may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AdequacyOutcome {
    pub lol: f64,
    pub ens: f64,
}

impl AdequacyOutcome {
    pub fn as_array(&self) -> [f64; 2] {
        [self.lol, self.ens]
    }
}

/// Reusable dispatch state; avoids per-hour allocation on long traces.
struct Dispatcher<'a> {
    fleet: &'a StorageFleet,
    breakpoints: Vec<f64>,
}

impl<'a> Dispatcher<'a> {
    fn new(fleet: &'a StorageFleet) -> Self {
        Dispatcher {
            fleet,
            breakpoints: Vec::with_capacity(2 * fleet.units.len()),
        }
    }

    fn run(&mut self, margin: &[f64], soc: &mut [f64]) -> Result<AdequacyOutcome> {
        let units = &self.fleet.units;
        let mut full = units.iter().zip(soc.iter()).all(|(u, s)| *s >= u.energy_cap || u.power == 0.0);
        let mut outcome = AdequacyOutcome::default();
        for (t, &z) in margin.iter().enumerate() {
            if z.is_nan() {
                return Err(Error::NanMargin(t));
            }
            if z < 0.0 {
                let residual = self.discharge(-z, soc);
                if residual > LOL_THRESHOLD {
                    outcome.lol += 1.0;
                    outcome.ens += residual;
                }
                full = false;
            } else if z > 0.0 && !full {
                full = self.charge(z, soc);
            }
        }
        Ok(outcome)
    }

    /// Serves up to `deficit`; returns the unserved remainder.
    fn discharge(&mut self, deficit: f64, soc: &mut [f64]) -> f64 {
        let units = &self.fleet.units;
        let available: f64 = units.iter().zip(soc.iter()).map(|(u, s)| u.power.min(*s)).sum();
        if available <= deficit {
            for (u, s) in units.iter().zip(soc.iter_mut()) {
                *s = (*s - u.power.min(*s)).max(0.0);
            }
            return deficit - available;
        }
        // Water level L in time-to-empty units: unit i ends at
        // max(soc_i - power_i, min(soc_i, L·power_i)).
        let delivered = |level: f64, soc: &[f64]| -> f64 {
            units
                .iter()
                .zip(soc)
                .map(|(u, s)| (s - level * u.power).clamp(0.0, u.power.min(*s)))
                .sum::<f64>()
        };
        self.breakpoints.clear();
        for (u, s) in units.iter().zip(soc.iter()) {
            if u.power > 0.0 && *s > 0.0 {
                self.breakpoints.push((s - u.power).max(0.0) / u.power);
                self.breakpoints.push(s / u.power);
            }
        }
        self.breakpoints.sort_by(|a, b| a.total_cmp(b));
        self.breakpoints.dedup();
        // delivered() is nonincreasing; find the last breakpoint still
        // delivering at least the deficit, then interpolate.
        let mut lo = 0.0;
        let mut lo_val = delivered(0.0, soc);
        let mut level = lo;
        for &bp in &self.breakpoints {
            let val = delivered(bp, soc);
            if val < deficit {
                let frac = (lo_val - deficit) / (lo_val - val);
                level = lo + frac * (bp - lo);
                break;
            }
            lo = bp;
            lo_val = val;
            level = bp;
        }
        let mut served = 0.0;
        for (u, s) in units.iter().zip(soc.iter_mut()) {
            let d = (*s - level * u.power).clamp(0.0, u.power.min(*s));
            served += d;
            *s = (*s - d).max(0.0);
        }
        (deficit - served).max(0.0)
    }

    /// Absorbs up to `surplus`; returns whether every unit is now full.
    fn charge(&mut self, surplus: f64, soc: &mut [f64]) -> bool {
        let units = &self.fleet.units;
        let eta = self.fleet.charge_efficiency;
        let headroom = |u: &StorageUnit, s: f64| u.power.min((u.energy_cap - s).max(0.0) / eta);
        let wanted: f64 = units.iter().zip(soc.iter()).map(|(u, s)| headroom(u, *s)).sum();
        if wanted <= surplus {
            for (u, s) in units.iter().zip(soc.iter_mut()) {
                if u.power > 0.0 {
                    *s = (*s + eta * headroom(u, *s)).min(u.energy_cap);
                }
            }
            return true;
        }
        // Grid energy drawn by unit i at level L: clamp((L·p_i - soc_i)/eta, 0, headroom_i).
        let drawn = |level: f64, soc: &[f64]| -> f64 {
            units
                .iter()
                .zip(soc)
                .filter(|(u, _)| u.power > 0.0)
                .map(|(u, s)| ((level * u.power - s) / eta).clamp(0.0, headroom(u, *s)))
                .sum::<f64>()
        };
        self.breakpoints.clear();
        for (u, s) in units.iter().zip(soc.iter()) {
            let h = headroom(u, *s);
            if u.power > 0.0 && h > 0.0 {
                self.breakpoints.push(u.time_to_empty(*s));
                self.breakpoints.push((s + eta * h) / u.power);
            }
        }
        self.breakpoints.sort_by(|a, b| a.total_cmp(b));
        self.breakpoints.dedup();
        let mut lo = self.breakpoints.first().copied().unwrap_or(0.0);
        let mut lo_val = drawn(lo, soc);
        let mut level = lo;
        for &bp in &self.breakpoints {
            let val = drawn(bp, soc);
            if val > surplus {
                let frac = (surplus - lo_val) / (val - lo_val);
                level = lo + frac * (bp - lo);
                break;
            }
            lo = bp;
            lo_val = val;
            level = bp;
        }
        let mut all_full = true;
        for (u, s) in units.iter().zip(soc.iter_mut()) {
            if u.power > 0.0 {
                let c = ((level * u.power - *s) / eta).clamp(0.0, headroom(u, *s));
                *s = (*s + eta * c).min(u.energy_cap);
                all_full &= *s >= u.energy_cap;
            }
        }
        all_full
    }
}

fn check_soc(fleet: &StorageFleet, soc: &[f64]) -> Result<()> {
    if soc.len() != fleet.units.len() {
        return Err(Error::InvalidParameter(format!(
            "expected {} soc values, got {}",
            fleet.units.len(),
            soc.len()
        )));
    }
    for (i, (u, s)) in fleet.units.iter().zip(soc).enumerate() {
        if !(*s >= 0.0 && *s <= u.energy_cap) {
            return Err(Error::InvalidSoc {
                unit: i,
                soc: *s,
                cap: u.energy_cap,
            });
        }
    }
    Ok(())
}

/// Simulates the fleet over `margin` starting from `initial_soc`; returns
/// the outcome and the final state of charge.
pub fn dispatch_trace(
    margin: &[f64],
    fleet: &StorageFleet,
    initial_soc: &[f64],
) -> Result<(AdequacyOutcome, Vec<f64>)> {
    check_soc(fleet, initial_soc)?;
    let mut soc = initial_soc.to_vec();
    let outcome = Dispatcher::new(fleet).run(margin, &mut soc)?;
    Ok((outcome, soc))
}

/// Yearly LOL [h/y] and ENS [MWh/y] from the fleet's initial-soc policy.
pub fn evaluate_exact_year(margin: &HourlyTrace, fleet: &StorageFleet) -> Result<AdequacyOutcome> {
    let mut soc = fleet.initial_soc();
    Dispatcher::new(fleet).run(margin.values(), &mut soc)
}

/// Daily LOL [h/day] and ENS [MWh/day], soc reset by policy at day start.
pub fn label_day(day: &DailyTrace, fleet: &StorageFleet) -> Result<AdequacyOutcome> {
    let mut soc = fleet.initial_soc();
    Dispatcher::new(fleet).run(day.values(), &mut soc)
}

const MAX_BRUTE_HOURS: usize = 8;
const MAX_BRUTE_UNITS: usize = 3;
const MAX_BRUTE_WORK: u128 = 2_000_000_000;

fn grid_steps(x: f64, step: f64) -> Result<usize> {
    let k = x / step;
    let r = k.round();
    if (k - r).abs() > 1e-9 || r < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "{x} is not a nonnegative multiple of the grid step {step}"
        )));
    }
    Ok(r as usize)
}

/// Minimum total ENS over every dispatch schedule on a `grid_step` MWh grid.
///
/// Exhaustive dynamic programming over the discretised state of charge.
/// Each hour a unit may discharge (shortfall hours) or charge from surplus
/// (surplus hours) any grid multiple up to its power and energy limits;
/// storage-to-storage transfers are not part of the policy class. Capacities
/// and initial soc must lie on the grid.
pub fn brute_force_min_ens(
    margin: &[f64],
    fleet: &StorageFleet,
    initial_soc: &[f64],
    grid_step: f64,
) -> Result<f64> {
    if !(grid_step > 0.0) {
        return Err(Error::InvalidParameter("grid_step must be > 0".into()));
    }
    if margin.len() > MAX_BRUTE_HOURS || fleet.units.len() > MAX_BRUTE_UNITS {
        return Err(Error::InvalidParameter(format!(
            "brute force supports at most {MAX_BRUTE_HOURS} hours and {MAX_BRUTE_UNITS} units"
        )));
    }
    if let Some(t) = margin.iter().position(|z| z.is_nan()) {
        return Err(Error::NanMargin(t));
    }
    check_soc(fleet, initial_soc)?;
    let eta = fleet.charge_efficiency;
    let units = &fleet.units;
    let levels: Vec<usize> = units
        .iter()
        .map(|u| grid_steps(u.energy_cap, grid_step).map(|k| k + 1))
        .collect::<Result<_>>()?;
    let start: Vec<usize> = initial_soc
        .iter()
        .map(|s| grid_steps(*s, grid_step))
        .collect::<Result<_>>()?;
    // Largest per-hour soc move on the grid, for discharge and for charge.
    let max_out: Vec<usize> = units
        .iter()
        .map(|u| (u.power / grid_step + 1e-9).floor() as usize)
        .collect();
    let max_in: Vec<usize> = units
        .iter()
        .map(|u| (eta * u.power / grid_step + 1e-9).floor() as usize)
        .collect();

    let n_states: usize = levels.iter().product();
    let n_actions: u128 = max_out
        .iter()
        .zip(&max_in)
        .map(|(a, b)| (*a.max(b) + 1) as u128)
        .product();
    let work = n_states as u128 * n_actions * margin.len() as u128;
    if work > MAX_BRUTE_WORK {
        return Err(Error::SearchTooLarge(work));
    }

    let decode = |mut idx: usize, out: &mut [usize]| {
        for (o, l) in out.iter_mut().zip(&levels) {
            *o = idx % l;
            idx /= l;
        }
    };
    let encode = |s: &[usize]| -> usize {
        let mut idx = 0;
        for (k, l) in s.iter().zip(&levels).rev() {
            idx = idx * l + k;
        }
        idx
    };

    let n_units = units.len();
    let mut value = vec![0.0f64; n_states];
    let mut next = vec![0.0f64; n_states];
    let mut state = vec![0usize; n_units];
    let mut moves = vec![0usize; n_units];
    let mut target = vec![0usize; n_units];
    for &z in margin.iter().rev() {
        for idx in 0..n_states {
            decode(idx, &mut state);
            // Per-unit move limits for this hour.
            let limits: Vec<usize> = (0..n_units)
                .map(|i| {
                    if z < 0.0 {
                        max_out[i].min(state[i])
                    } else if z > 0.0 {
                        max_in[i].min(levels[i] - 1 - state[i])
                    } else {
                        0
                    }
                })
                .collect();
            let mut best = f64::INFINITY;
            moves.iter_mut().for_each(|m| *m = 0);
            loop {
                let energy = moves.iter().sum::<usize>() as f64 * grid_step;
                let cost = if z < 0.0 {
                    let residual = (-z - energy).max(0.0);
                    for i in 0..n_units {
                        target[i] = state[i] - moves[i];
                    }
                    residual
                } else {
                    // Grid energy drawn must fit within the surplus.
                    if energy / eta > z + 1e-9 {
                        f64::INFINITY
                    } else {
                        for i in 0..n_units {
                            target[i] = state[i] + moves[i];
                        }
                        0.0
                    }
                };
                if cost.is_finite() {
                    let total = cost + value[encode(&target)];
                    if total < best {
                        best = total;
                    }
                }
                // Odometer increment over the move vector.
                let mut i = 0;
                while i < n_units {
                    if moves[i] < limits[i] {
                        moves[i] += 1;
                        break;
                    }
                    moves[i] = 0;
                    i += 1;
                }
                if i == n_units {
                    break;
                }
            }
            next[idx] = best;
        }
        std::mem::swap(&mut value, &mut next);
    }
    Ok(value[encode(&start)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::HOURS_PER_YEAR;
    use proptest::prelude::*;

    fn fleet(units: &[(f64, f64)]) -> StorageFleet {
        StorageFleet::new(
            units.iter().map(|&(p, e)| StorageUnit::new(p, e)).collect(),
            1.0,
            InitialSoc::Full,
        )
        .unwrap()
    }

    #[test]
    fn no_shortfall_no_loss() {
        let f = fleet(&[(1.0, 2.0), (2.0, 4.0)]);
        let (out, soc) = dispatch_trace(&[1.0, 0.0, 3.0], &f, &[0.5, 1.0]).unwrap();
        assert_eq!(out, AdequacyOutcome::default());
        assert!(soc[0] >= 0.5 && soc[1] >= 1.0);
    }

    #[test]
    fn no_storage_counts_every_shortfall() {
        let (out, _) = dispatch_trace(&[-5.0, 3.0, -2.0], &StorageFleet::empty(), &[]).unwrap();
        assert_eq!(out.lol, 2.0);
        assert_eq!(out.ens, 7.0);
    }

    #[test]
    fn two_unit_three_hour_case() {
        let f = fleet(&[(1.0, 2.0), (2.0, 2.0)]);
        let margin = [-4.0, -4.0, -4.0];
        let (out, _) = dispatch_trace(&margin, &f, &[2.0, 2.0]).unwrap();
        let oracle = brute_force_min_ens(&margin, &f, &[2.0, 2.0], 0.25).unwrap();
        assert_eq!(oracle, 8.0);
        assert!((out.ens - oracle).abs() < 1e-9);
        assert_eq!(out.lol, 3.0);
    }

    #[test]
    fn yearly_edge_cases() {
        let f = StorageFleet::reference();
        let out = evaluate_exact_year(&HourlyTrace::constant(10.0), &f).unwrap();
        assert_eq!(out, AdequacyOutcome::default());
        let out = evaluate_exact_year(&HourlyTrace::constant(-1.0), &StorageFleet::empty()).unwrap();
        assert_eq!(out.lol, HOURS_PER_YEAR as f64);
        assert_eq!(out.ens, HOURS_PER_YEAR as f64);
    }

    #[test]
    fn label_day_single_step() {
        let f = fleet(&[(2.0, 2.0)]);
        let mut day = [0.0; 24];
        day[0] = -3.0;
        let out = label_day(&DailyTrace(day), &f).unwrap();
        assert_eq!(out, AdequacyOutcome { lol: 1.0, ens: 1.0 });
        let oracle = brute_force_min_ens(&day[..8], &f, &[2.0], 0.25).unwrap();
        assert_eq!(oracle, 1.0);

        let safe = DailyTrace(day.map(|z| z + 1e6));
        assert_eq!(label_day(&safe, &f).unwrap(), AdequacyOutcome::default());
    }

    #[test]
    fn water_filling_equalises_time_to_empty() {
        // Unit 0 holds 4 h of energy, unit 1 holds 1 h; a 1 MW deficit
        // comes from unit 0 alone.
        let f = fleet(&[(1.0, 4.0), (1.0, 1.0)]);
        let (_, soc) = dispatch_trace(&[-1.0], &f, &[4.0, 1.0]).unwrap();
        assert!((soc[0] - 3.0).abs() < 1e-12 && (soc[1] - 1.0).abs() < 1e-12);
        // Larger deficit: both end at equal time-to-empty.
        let f = fleet(&[(2.0, 4.0), (2.0, 2.0)]);
        let (_, soc) = dispatch_trace(&[-2.0], &f, &[4.0, 2.0]).unwrap();
        assert!((soc[0] - 2.0).abs() < 1e-12 && (soc[1] - 2.0).abs() < 1e-12);
        // Unit 0 reaches its power limit before the levels meet.
        let (_, soc) = dispatch_trace(&[-3.0], &f, &[4.0, 2.0]).unwrap();
        assert!((soc[0] - 2.0).abs() < 1e-12 && (soc[1] - 1.0).abs() < 1e-12);
        let f = fleet(&[(10.0, 6.0), (10.0, 3.0)]);
        let (_, soc) = dispatch_trace(&[-4.0], &f, &[6.0, 3.0]).unwrap();
        assert!((soc[0] - 2.5).abs() < 1e-12 && (soc[1] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn charging_fills_lowest_time_to_empty_first() {
        let f = fleet(&[(1.0, 4.0), (1.0, 4.0)]);
        let (_, soc) = dispatch_trace(&[0.5], &f, &[3.0, 1.0]).unwrap();
        assert!((soc[0] - 3.0).abs() < 1e-12 && (soc[1] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn charge_efficiency_scales_stored_energy() {
        let f = StorageFleet::new(vec![StorageUnit::new(2.0, 10.0)], 0.5, InitialSoc::Empty).unwrap();
        let (_, soc) = dispatch_trace(&[10.0], &f, &[0.0]).unwrap();
        assert!((soc[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_inputs() {
        let f = fleet(&[(1.0, 2.0)]);
        assert!(matches!(dispatch_trace(&[0.0], &f, &[3.0]), Err(Error::InvalidSoc { .. })));
        assert!(matches!(dispatch_trace(&[f64::NAN], &f, &[1.0]), Err(Error::NanMargin(0))));
        assert!(brute_force_min_ens(&[0.0; 9], &f, &[1.0], 0.25).is_err());
    }

    #[test]
    fn brute_force_closed_forms() {
        let margin = [-1.0, 2.0, -3.5];
        assert_eq!(brute_force_min_ens(&margin, &StorageFleet::empty(), &[], 0.25).unwrap(), 4.5);
        let f = fleet(&[(1.5, 3.0)]);
        for (soc, shortfall) in [(3.0, 2.0), (0.5, 2.0), (3.0, 1.0)] {
            let got = brute_force_min_ens(&[-shortfall], &f, &[soc], 0.25).unwrap();
            let expected = (shortfall - f64::min(1.5, soc)).max(0.0);
            assert_eq!(got, expected);
        }
    }

    fn micro_instance() -> impl Strategy<Value = (Vec<(f64, f64, f64)>, Vec<f64>)> {
        let unit = (1u32..=8, 0u32..=12, 0u32..=12).prop_map(|(p, e, s)| {
            let e = e as f64 * 0.25;
            (p as f64 * 0.25, e, (s as f64 * 0.25).min(e))
        });
        (
            prop::collection::vec(unit, 0..=3),
            prop::collection::vec(-12i32..=8, 1..=8).prop_map(|v| v.into_iter().map(|x| x as f64 * 0.25).collect()),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn greedy_matches_discretised_optimum((units, margin) in micro_instance()) {
            let f = fleet(&units.iter().map(|u| (u.0, u.1)).collect::<Vec<_>>());
            let soc: Vec<f64> = units.iter().map(|u| u.2).collect();
            let (out, _) = dispatch_trace(&margin, &f, &soc).unwrap();
            let oracle = brute_force_min_ens(&margin, &f, &soc, 0.25).unwrap();
            prop_assert!(out.ens <= oracle + 0.25, "greedy {} oracle {}", out.ens, oracle);
            prop_assert!(out.ens >= oracle - 1e-9, "greedy {} oracle {}", out.ens, oracle);
        }

        #[test]
        fn served_energy_bounded_by_fleet((units, margin) in micro_instance()) {
            let f = fleet(&units.iter().map(|u| (u.0, u.1)).collect::<Vec<_>>());
            let mut soc: Vec<f64> = units.iter().map(|u| u.2).collect();
            for z in margin {
                let before = soc.clone();
                let (out, after) = dispatch_trace(&[z], &f, &soc).unwrap();
                let cap: f64 = f.units().iter().zip(&before).map(|(u, s)| u.power.min(*s)).sum();
                let shortfall = (-z).max(0.0);
                let served = shortfall - out.ens;
                prop_assert!(served <= cap + 1e-9);
                let released: f64 = before.iter().zip(&after).map(|(b, a)| b - a).sum();
                if z < 0.0 {
                    prop_assert!((released - served).abs() < 1e-9);
                } else {
                    prop_assert!(-released <= z + 1e-9);
                }
                for (u, s) in f.units().iter().zip(&after) {
                    prop_assert!(*s >= 0.0 && *s <= u.energy_cap + 1e-12);
                }
                soc = after;
            }
        }

        #[test]
        fn ens_monotone_in_power_and_energy(
            (units, margin) in micro_instance(),
            which in 0usize..3,
            dp in 0u32..4,
            de in 0u32..4,
        ) {
            prop_assume!(!units.is_empty());
            let which = which % units.len();
            let base = fleet(&units.iter().map(|u| (u.0, u.1)).collect::<Vec<_>>());
            let mut bigger_units: Vec<(f64, f64)> = units.iter().map(|u| (u.0, u.1)).collect();
            bigger_units[which].0 += dp as f64 * 0.25;
            bigger_units[which].1 += de as f64 * 0.25;
            let bigger = fleet(&bigger_units);
            let soc: Vec<f64> = units.iter().map(|u| u.2).collect();
            let (a, _) = dispatch_trace(&margin, &base, &soc).unwrap();
            let (b, _) = dispatch_trace(&margin, &bigger, &soc).unwrap();
            prop_assert!(b.ens <= a.ens + 1e-9, "bigger {} base {}", b.ens, a.ens);
        }

        #[test]
        fn storage_never_hurts(margin in prop::collection::vec(-50.0f64..50.0, 1..200)) {
            let f = StorageFleet::reference();
            let (with, _) = dispatch_trace(&margin, &f, &f.initial_soc()).unwrap();
            let (without, _) = dispatch_trace(&margin, &StorageFleet::empty(), &[]).unwrap();
            prop_assert!(with.ens <= without.ens + 1e-9);
            prop_assert!(with.ens == 0.0 || with.lol >= 1.0);
        }

        #[test]
        fn identical_units_permute(margin in prop::collection::vec(-6.0f64..4.0, 1..50), split in 0usize..4) {
            let units = [(1.0, 2.0), (1.0, 2.0), (2.0, 1.0), (1.0, 2.0)];
            let mut permuted = units;
            permuted.swap(0, split);
            let (a, _) = dispatch_trace(&margin, &fleet(&units), &[2.0, 2.0, 1.0, 2.0]).unwrap();
            let soc_p: Vec<f64> = permuted.iter().map(|u| u.1).collect();
            let (b, _) = dispatch_trace(&margin, &fleet(&permuted), &soc_p).unwrap();
            prop_assert_eq!(a.lol, b.lol);
            prop_assert!((a.ens - b.ens).abs() < 1e-9);
        }
    }
}
