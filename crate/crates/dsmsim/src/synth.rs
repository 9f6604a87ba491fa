//! Synthetic scenario generator.
//!
//! Stands in for metered household data: produces per-day scenarios plus a
//! matching history file, calibrated to aggregate statistics (flexible
//! energy share, nonflexible scale) rather than to any particular
//! household. Nonflexible profiles carry a morning and an evening peak;
//! electric vehicles are only available overnight and in the evening,
//! furnaces across the cold hours.

use std::collections::BTreeSet;

use chrono::{Datelike, Days, NaiveDate};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_scenario, Appliance, Calendar, Consumer, CostModel, DayType, HistoryRecord, Horizon,
    Scenario, NONFLEXIBLE_ID,
};

/// Base generation cost installed in every synthetic scenario, in cents:
/// `0.1 + 8 L + 0.04 L^2`. At a 31.3 kWh hourly load its average price is
/// about 8.5 cents/kWh.
pub const SYNTH_COST: (f64, f64, f64) = (0.04, 8.0, 0.1);

const EV_CAP_KW: f64 = 3.3;
const FURNACE_CAP_KW: f64 = 2.0;
/// Relative weight of each archetype in the flexible-energy split, chosen
/// so vehicles alone carry about a 20.4% share and adding furnaces lifts
/// it to about 25.8%.
const EV_WEIGHT: f64 = 0.204;
const FURNACE_WEIGHT: f64 = 0.054;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Archetype {
    Ev,
    Furnace,
}

impl Archetype {
    fn id(self) -> &'static str {
        match self {
            Archetype::Ev => "ev",
            Archetype::Furnace => "furnace",
        }
    }

    fn cap(self) -> f64 {
        match self {
            Archetype::Ev => EV_CAP_KW,
            Archetype::Furnace => FURNACE_CAP_KW,
        }
    }

    fn weight(self) -> f64 {
        match self {
            Archetype::Ev => EV_WEIGHT,
            Archetype::Furnace => FURNACE_WEIGHT,
        }
    }
}

/// Targets for the generator. Exactly one of `mean_nonflexible_hourly`
/// (aggregate kWh per hour) and `daily_energy` (aggregate kWh per day,
/// flexible included) fixes the scale; the other is derived from it and
/// `flexible_share`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_consumers: usize,
    pub num_days: usize,
    /// Fraction of total daily energy that is flexible, in (0, 1).
    pub flexible_share: f64,
    #[serde(default)]
    pub mean_nonflexible_hourly: Option<f64>,
    #[serde(default)]
    pub daily_energy: Option<f64>,
    pub archetypes: Vec<Archetype>,
    pub seed: u64,
    /// First scheduling day, `YYYY-MM-DD`.
    #[serde(default = "default_start_date")]
    pub start_date: String,
}

fn default_start_date() -> String {
    "2016-01-02".to_string()
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            num_consumers: 30,
            num_days: 30,
            flexible_share: 0.204,
            mean_nonflexible_hourly: Some(31.3),
            daily_energy: None,
            archetypes: vec![Archetype::Ev],
            seed: 0,
            start_date: default_start_date(),
        }
    }
}

/// The three aggregate targets implied by a spec (per-day figures).
#[derive(Debug, Clone, Copy)]
pub struct Targets {
    pub daily_energy: f64,
    pub flexible_share: f64,
    pub nonflexible_daily: f64,
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_consumers == 0 || self.num_days == 0 {
            return Err(Error::invalid("generator needs at least one consumer and one day"));
        }
        if !(self.flexible_share > 0.0 && self.flexible_share < 1.0) {
            return Err(Error::invalid(format!(
                "flexible_share must lie strictly between 0 and 1, got {}",
                self.flexible_share
            )));
        }
        match (self.mean_nonflexible_hourly, self.daily_energy) {
            (Some(m), None) if m > 0.0 => {}
            (None, Some(e)) if e > 0.0 => {}
            (Some(_), Some(_)) => {
                return Err(Error::invalid(
                    "set either mean_nonflexible_hourly or daily_energy, not both",
                ));
            }
            _ => {
                return Err(Error::invalid(
                    "one positive scale anchor is required: mean_nonflexible_hourly or daily_energy",
                ));
            }
        }
        if self.archetypes.is_empty() {
            return Err(Error::invalid("at least one appliance archetype is required"));
        }
        let mut seen = BTreeSet::new();
        for a in &self.archetypes {
            if !seen.insert(*a) {
                return Err(Error::invalid(format!("duplicate archetype {:?}", a)));
            }
        }
        start_date(self)?;
        Ok(())
    }

    /// Resolve the redundant aggregate trio from the chosen anchor.
    pub fn targets(&self) -> Result<Targets> {
        self.validate()?;
        let s = self.flexible_share;
        let (nonflexible_daily, daily_energy) = match (self.mean_nonflexible_hourly, self.daily_energy) {
            (Some(m), None) => (24.0 * m, 24.0 * m / (1.0 - s)),
            (None, Some(e)) => (e * (1.0 - s), e),
            _ => unreachable!("validate enforces exactly one anchor"),
        };
        Ok(Targets { daily_energy, flexible_share: s, nonflexible_daily })
    }
}

fn start_date(spec: &SyntheticSpec) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(&spec.start_date, "%Y-%m-%d").map_err(|e| {
        Error::parse("date", Some(spec.start_date.clone()), e.to_string())
    })
}

/// One generated scheduling day.
#[derive(Debug, Clone)]
pub struct SyntheticDay {
    pub date: String,
    pub day_type: DayType,
    pub scenario: Scenario,
}

/// Full generator output: the day set plus a history and calendar that
/// replay to it.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub days: Vec<SyntheticDay>,
    pub history: Vec<HistoryRecord>,
    pub calendar: Calendar,
}

struct ConsumerShape {
    id: String,
    morning_weight: f64,
    evening_weight: f64,
    night_floor: f64,
    /// Energy weight per archetype, aligned with the generator spec's list.
    archetype_pull: Vec<f64>,
    windows: Vec<Vec<usize>>,
}

fn gaussian_bump(h: f64, center: f64, width: f64) -> f64 {
    let z = (h - center) / width;
    (-0.5 * z * z).exp()
}

fn ev_window(rng: &mut ChaCha8Rng) -> Vec<usize> {
    // Three commuter patterns. Overnight chargers see the whole night
    // valley, late returners a slice of it, and evening-only plug-ins are
    // pinned into the expensive evening hours. The mix is what makes flat
    // per-kWh billing unfair: a kWh forced into the peak costs the system
    // more than a kWh parked in the valley.
    match rng.random_range(0..3u32) {
        0 => {
            let plug_in = rng.random_range(17..=19usize);
            let plug_out = rng.random_range(6..=8usize);
            let mut hours: Vec<usize> = (plug_in..24).collect();
            hours.extend(0..plug_out);
            hours.sort_unstable();
            hours
        }
        1 => {
            let plug_in = rng.random_range(20..=22usize);
            let plug_out = rng.random_range(4..=7usize);
            let mut hours: Vec<usize> = (plug_in..24).collect();
            hours.extend(0..plug_out);
            hours.sort_unstable();
            hours
        }
        _ => {
            let plug_in = rng.random_range(17..=18usize);
            let unplug = rng.random_range(22..=23usize);
            (plug_in..=unplug).collect()
        }
    }
}

fn furnace_window(rng: &mut ChaCha8Rng) -> Vec<usize> {
    let morning_end = rng.random_range(7..=9usize);
    let evening_start = rng.random_range(18..=20usize);
    let mut hours: Vec<usize> = (0..morning_end).collect();
    hours.extend(evening_start..24);
    hours
}

/// Generate the day set, history, and calendar for a spec. Deterministic
/// in the seed: equal specs produce identical output.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    let targets = spec.targets()?;
    let first = start_date(spec)?;
    let hours = Horizon::DAY.hours;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut archetypes = spec.archetypes.clone();
    archetypes.sort();
    let weight_total: f64 = archetypes.iter().map(|a| a.weight()).sum();

    let id_width = spec.num_consumers.to_string().len().max(2);
    let shapes: Vec<ConsumerShape> = (0..spec.num_consumers)
        .map(|i| ConsumerShape {
            id: format!("c{:0width$}", i + 1, width = id_width),
            morning_weight: rng.random_range(0.8..1.2),
            evening_weight: rng.random_range(1.0..1.5),
            night_floor: rng.random_range(0.28..0.42),
            // Exponentiated uniform draw: household flexible demand varies
            // by up to a factor of about seven, not a few percent. The
            // spread is what separates bill shares from externality shares.
            archetype_pull: archetypes.iter().map(|_| rng.random_range(-1.0..1.0f64).exp()).collect(),
            windows: archetypes
                .iter()
                .map(|a| match a {
                    Archetype::Ev => ev_window(&mut rng),
                    Archetype::Furnace => furnace_window(&mut rng),
                })
                .collect(),
        })
        .collect();

    let cost = CostModel::uniform(hours, SYNTH_COST.0, SYNTH_COST.1, SYNTH_COST.2);
    let flexible_daily = targets.daily_energy - targets.nonflexible_daily;

    let mut days = Vec::with_capacity(spec.num_days);
    let mut history = Vec::new();
    let mut calendar = Calendar::default();

    for d in 0..spec.num_days {
        let date = first
            .checked_add_days(Days::new(d as u64))
            .ok_or_else(|| Error::invalid("date overflow past the calendar horizon"))?;
        let date_str = date.format("%Y-%m-%d").to_string();
        let day_type = match date.weekday() {
            chrono::Weekday::Sat | chrono::Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        };
        calendar.entries.insert(date_str.clone(), day_type);

        // Nonflexible draws: per-consumer two-bump shapes with hourly
        // jitter, rescaled so the day's aggregate hits its target exactly.
        let morning_center = if day_type == DayType::Weekend { 9.0 } else { 7.5 };
        let mut nf: Vec<Vec<f64>> = shapes
            .iter()
            .map(|shape| {
                (0..hours)
                    .map(|h| {
                        let base = shape.night_floor
                            + shape.morning_weight * gaussian_bump(h as f64, morning_center, 2.0)
                            + shape.evening_weight * gaussian_bump(h as f64, 19.0, 2.5);
                        base * rng.random_range(0.85..1.15)
                    })
                    .collect()
            })
            .collect();
        let day_nf_target = targets.nonflexible_daily * rng.random_range(0.99..1.01);
        let raw_total: f64 = nf.iter().flatten().sum();
        let scale = day_nf_target / raw_total;
        for row in &mut nf {
            for v in row.iter_mut() {
                *v *= scale;
            }
        }

        // Flexible energy: split the day total across archetypes by their
        // weights, then across consumers by their jittered pulls, spilling
        // any share a household's charger cannot absorb onto the others.
        let day_flex_target = flexible_daily * rng.random_range(0.97..1.03);
        let mut energies: Vec<Vec<f64>> = Vec::with_capacity(archetypes.len());
        for (k, &arch) in archetypes.iter().enumerate() {
            let arch_total = day_flex_target * arch.weight() / weight_total;
            let pulls: Vec<f64> = shapes.iter().map(|s| s.archetype_pull[k]).collect();
            let budgets: Vec<f64> = shapes
                .iter()
                .map(|s| 0.95 * arch.cap() * s.windows[k].len() as f64)
                .collect();
            let split = split_with_budgets(arch_total, &pulls, &budgets).ok_or_else(|| {
                Error::domain(format!(
                    "flexible share target unreachable: {} fleet needs {arch_total:.1} kWh on \
                     {date_str} but the {:.1} kW power cap over the plug-in windows admits only \
                     {:.1}",
                    arch.id(),
                    arch.cap(),
                    budgets.iter().sum::<f64>()
                ))
            })?;
            energies.push(split);
        }

        let mut consumers = Vec::with_capacity(spec.num_consumers);
        let mut placements: Vec<(String, String, Vec<f64>)> = Vec::new();
        for (i, shape) in shapes.iter().enumerate() {
            let mut appliances = Vec::new();
            for (k, &arch) in archetypes.iter().enumerate() {
                let energy = energies[k][i];
                let window = &shape.windows[k];
                appliances.push(Appliance::capped(arch.id(), energy, arch.cap(), window, hours));
                placements.push((
                    shape.id.clone(),
                    arch.id().to_string(),
                    place_usage(energy, arch.cap(), window, hours, &mut rng),
                ));
            }
            consumers.push(Consumer {
                id: shape.id.clone(),
                appliances,
                nonflexible: nf[i].clone(),
            });
        }

        let scenario = Scenario::new(Horizon::new(hours), consumers, cost.clone());
        let violations = validate_scenario(&scenario);
        if !violations.is_empty() {
            return Err(Error::invalid(format!(
                "generated scenario for {date_str} failed validation: {}",
                violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ")
            )));
        }

        for (i, shape) in shapes.iter().enumerate() {
            for (h, &kwh) in nf[i].iter().enumerate() {
                history.push(HistoryRecord {
                    consumer_id: shape.id.clone(),
                    appliance_id: NONFLEXIBLE_ID.to_string(),
                    date: date_str.clone(),
                    hour: h,
                    kwh,
                });
            }
        }
        for (consumer_id, appliance_id, usage) in placements {
            for (h, &kwh) in usage.iter().enumerate() {
                if kwh > 0.0 {
                    history.push(HistoryRecord {
                        consumer_id: consumer_id.clone(),
                        appliance_id: appliance_id.clone(),
                        date: date_str.clone(),
                        hour: h,
                        kwh,
                    });
                }
            }
        }

        days.push(SyntheticDay { date: date_str, day_type, scenario });
    }

    Ok(SyntheticData { days, history, calendar })
}

/// Split `total` across consumers proportionally to `weights`, except that
/// no share may exceed its budget; excess spills onto the unsaturated
/// consumers, again by weight. Returns `None` when the budgets cannot
/// absorb the total. The shares sum to `total` exactly.
fn split_with_budgets(total: f64, weights: &[f64], budgets: &[f64]) -> Option<Vec<f64>> {
    let n = weights.len();
    let mut out = vec![0.0; n];
    let mut saturated = vec![false; n];
    let mut remaining = total;
    loop {
        let open_weight: f64 =
            (0..n).filter(|&i| !saturated[i]).map(|i| weights[i]).sum();
        if open_weight <= 0.0 {
            return if remaining <= 1e-9 * total.max(1.0) { Some(out) } else { None };
        }
        let mut spilled = false;
        for i in 0..n {
            if !saturated[i] {
                out[i] = remaining * weights[i] / open_weight;
                if out[i] > budgets[i] {
                    out[i] = budgets[i];
                    saturated[i] = true;
                    spilled = true;
                }
            }
        }
        if !spilled {
            return Some(out);
        }
        remaining = total - (0..n).filter(|&i| saturated[i]).map(|i| out[i]).sum::<f64>();
    }
}

/// A plausible observed usage: fill plug-in hours at full power in a
/// random order until the energy budget runs out.
fn place_usage(
    energy: f64,
    cap: f64,
    window: &[usize],
    hours: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    let mut order = window.to_vec();
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let mut usage = vec![0.0; hours];
    let mut left = energy;
    for &h in &order {
        if left <= 0.0 {
            break;
        }
        let take = left.min(cap);
        usage[h] = take;
        left -= take;
    }
    usage
}

/// Aggregate statistics actually realized by a generated day set.
#[derive(Debug, Clone, Copy)]
pub struct AggregateStats {
    pub mean_daily_energy: f64,
    pub flexible_share: f64,
    pub mean_nonflexible_hourly: f64,
}

pub fn aggregate_stats(days: &[SyntheticDay]) -> AggregateStats {
    let mut flexible = 0.0;
    let mut nonflexible = 0.0;
    let mut hours = 0usize;
    for day in days {
        hours += day.scenario.num_hours();
        for c in &day.scenario.consumers {
            nonflexible += c.nonflexible.iter().sum::<f64>();
            flexible += c.energy();
        }
    }
    let total = flexible + nonflexible;
    AggregateStats {
        mean_daily_energy: total / days.len() as f64,
        flexible_share: flexible / total,
        mean_nonflexible_hourly: nonflexible / hours as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec { num_consumers: 12, num_days: 6, seed: 7, ..SyntheticSpec::default() }
    }

    #[test]
    fn aggregates_match_targets_within_five_percent() {
        let spec = small_spec();
        let data = generate_synthetic(&spec).unwrap();
        let targets = spec.targets().unwrap();
        let stats = aggregate_stats(&data.days);
        let rel = |value: f64, target: f64| (value / target - 1.0).abs();
        assert!(rel(stats.mean_daily_energy, targets.daily_energy) < 0.05);
        assert!(rel(stats.flexible_share, targets.flexible_share) < 0.05);
        assert!(rel(stats.mean_nonflexible_hourly, targets.nonflexible_daily / 24.0) < 0.05);
        assert_eq!(data.days.len(), 6);
        assert_eq!(data.days[0].date, "2016-01-02");
        assert_eq!(data.days[0].day_type, DayType::Weekend);
        assert_eq!(data.days[2].day_type, DayType::Weekday);
        for day in &data.days {
            assert!(validate_scenario(&day.scenario).is_empty());
        }
    }

    #[test]
    fn daily_energy_anchor_is_honored() {
        let spec = SyntheticSpec {
            mean_nonflexible_hourly: None,
            daily_energy: Some(1014.0),
            num_consumers: 10,
            num_days: 4,
            ..SyntheticSpec::default()
        };
        let stats = aggregate_stats(&generate_synthetic(&spec).unwrap().days);
        assert!((stats.mean_daily_energy / 1014.0 - 1.0).abs() < 0.05);
    }

    #[test]
    fn nonflexible_aggregate_has_morning_and_evening_peaks() {
        let data = generate_synthetic(&small_spec()).unwrap();
        for day in &data.days {
            let agg = day.scenario.aggregate_nonflexible();
            let morning = (5..=10).map(|h| agg[h]).fold(0.0, f64::max);
            let evening = (16..=22).map(|h| agg[h]).fold(0.0, f64::max);
            let midday = (11..=15).map(|h| agg[h]).fold(f64::INFINITY, f64::min);
            let night = (1..=4).map(|h| agg[h]).fold(f64::INFINITY, f64::min);
            assert!(morning > 1.15 * midday, "no morning peak on {}", day.date);
            assert!(evening > 1.15 * midday, "no evening peak on {}", day.date);
            assert!(evening > 1.3 * night, "evening should tower over the night floor");
        }
    }

    #[test]
    fn archetype_windows_follow_their_shapes() {
        let spec = SyntheticSpec {
            archetypes: vec![Archetype::Ev, Archetype::Furnace],
            flexible_share: 0.258,
            ..small_spec()
        };
        let data = generate_synthetic(&spec).unwrap();
        for day in &data.days {
            for c in &day.scenario.consumers {
                for a in &c.appliances {
                    let available = a.available_hours();
                    match a.id.as_str() {
                        "ev" => {
                            // Midday hours are never plug-in time.
                            for h in 9..=16 {
                                assert!(!available.contains(&h), "{}: ev available at {h}", c.id);
                            }
                            assert!(available.len() >= 5);
                        }
                        "furnace" => {
                            for h in 10..=17 {
                                assert!(!available.contains(&h));
                            }
                            assert!(available.contains(&2) && available.contains(&22));
                        }
                        other => panic!("unexpected appliance {other}"),
                    }
                }
            }
        }
    }

    #[test]
    fn generation_is_deterministic_in_the_seed() {
        let spec = small_spec();
        let a = generate_synthetic(&spec).unwrap();
        let b = generate_synthetic(&spec).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        let other = generate_synthetic(&SyntheticSpec { seed: 8, ..small_spec() }).unwrap();
        assert_ne!(format!("{a:?}"), format!("{other:?}"));
    }

    #[test]
    fn budget_split_is_exact_and_capped() {
        let w = vec![5.0, 1.0, 1.0];
        let b = vec![2.0, 10.0, 10.0];
        let s = split_with_budgets(7.0, &w, &b).unwrap();
        assert!((s.iter().sum::<f64>() - 7.0).abs() < 1e-12);
        assert_eq!(s[0], 2.0);
        assert!((s[1] - 2.5).abs() < 1e-12 && (s[2] - 2.5).abs() < 1e-12);
        assert!(split_with_budgets(23.0, &w, &b).is_none());
    }

    #[test]
    fn flexible_demand_is_heterogeneous_across_households() {
        let spec = SyntheticSpec { num_days: 1, ..SyntheticSpec::default() };
        let data = generate_synthetic(&spec).unwrap();
        let energies: Vec<f64> =
            data.days[0].scenario.consumers.iter().map(|c| c.energy()).collect();
        let max = energies.iter().fold(0.0f64, |m, &v| m.max(v));
        let min = energies.iter().fold(f64::INFINITY, |m, &v| m.min(v));
        assert!(max / min > 2.0, "flexible energies too even: {min:.2}..{max:.2}");
    }

    #[test]
    fn unreachable_share_reports_the_bottleneck() {
        let spec = SyntheticSpec { flexible_share: 0.999, ..small_spec() };
        let err = generate_synthetic(&spec).unwrap_err().to_string();
        assert!(err.contains("unreachable"), "got: {err}");
        assert!(err.contains("cap"), "got: {err}");
    }

    #[test]
    fn spec_validation_rejects_bad_anchors() {
        let both = SyntheticSpec {
            daily_energy: Some(1000.0),
            ..SyntheticSpec::default()
        };
        assert!(both.validate().is_err());
        let neither = SyntheticSpec {
            mean_nonflexible_hourly: None,
            ..SyntheticSpec::default()
        };
        assert!(neither.validate().is_err());
        let dup = SyntheticSpec {
            archetypes: vec![Archetype::Ev, Archetype::Ev],
            ..SyntheticSpec::default()
        };
        assert!(dup.validate().is_err());
    }

    #[test]
    fn history_replays_day_totals() {
        let data = generate_synthetic(&small_spec()).unwrap();
        let day = &data.days[0];
        let date = &day.date;
        // Flexible history rows of the day sum to the scenario's energies.
        for c in &day.scenario.consumers {
            for a in &c.appliances {
                let replayed: f64 = data
                    .history
                    .iter()
                    .filter(|r| r.date == *date && r.consumer_id == c.id && r.appliance_id == a.id)
                    .map(|r| r.kwh)
                    .sum();
                approx::assert_relative_eq!(replayed, a.energy, max_relative = 1e-9);
            }
            let nf: f64 = data
                .history
                .iter()
                .filter(|r| {
                    r.date == *date && r.consumer_id == c.id && r.appliance_id == NONFLEXIBLE_ID
                })
                .map(|r| r.kwh)
                .sum();
            approx::assert_relative_eq!(nf, c.nonflexible.iter().sum::<f64>(), max_relative = 1e-9);
        }
    }
}
