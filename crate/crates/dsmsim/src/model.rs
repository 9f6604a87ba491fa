//! Domain model for the energy scheduling game.
//!
//! A [`Scenario`] holds a set of consumers, each owning shiftable appliances,
//! plus the hourly generation cost curve seen by the utility. An appliance has
//! a daily energy requirement and per-hour power bounds; any schedule must
//! satisfy both. [`LoadProfile`] is a full assignment of hourly power to every
//! appliance of every consumer.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{Datelike, NaiveDate, Weekday};

use crate::error::{Error, Result};

/// Reserved appliance id for the non-shiftable portion of a consumer's load.
/// History rows carrying this id describe background consumption, not a
/// schedulable appliance, and are skipped by constraint derivation.
pub const NONFLEXIBLE_ID: &str = "nonflexible";

/// Default peak window for two-tier tariffs: 07-09h and 17-21h.
pub const DEFAULT_PEAK_HOURS: [usize; 6] = [7, 8, 17, 18, 19, 20];

/// Default peak/off-peak price ratio for two-tier tariffs.
pub const DEFAULT_PEAK_RATIO: f64 = 2.84;

/// Time discretization of one scheduling day.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizon {
    pub hours: usize,
}

impl Horizon {
    pub const DAY: Horizon = Horizon { hours: 24 };

    pub fn new(hours: usize) -> Self {
        Horizon { hours }
    }

    pub fn iter(&self) -> std::ops::Range<usize> {
        0..self.hours
    }
}

/// A shiftable appliance: it must draw `energy` kWh over the day, with the
/// hourly draw kept inside `[min_power, max_power]` (kW, on a 1h grid these
/// double as kWh per hour).
#[derive(Debug, Clone, PartialEq)]
pub struct Appliance {
    pub id: String,
    pub energy: f64,
    pub min_power: Vec<f64>,
    pub max_power: Vec<f64>,
}

impl Appliance {
    /// Appliance with no minimum draw and a flat cap over the given hours.
    pub fn capped(id: impl Into<String>, energy: f64, cap: f64, hours: &[usize], horizon: usize) -> Self {
        let mut max_power = vec![0.0; horizon];
        for &h in hours {
            max_power[h] = cap;
        }
        Appliance {
            id: id.into(),
            energy,
            min_power: vec![0.0; horizon],
            max_power,
        }
    }

    /// Hours in which the appliance may draw power (positive cap).
    pub fn available_hours(&self) -> Vec<usize> {
        (0..self.max_power.len()).filter(|&h| self.max_power[h] > 0.0).collect()
    }
}

/// A household: its shiftable appliances plus the hourly load it cannot
/// shift. The nonflexible part is billed separately and enters the game
/// only by raising the marginal cost seen by shiftable load.
#[derive(Debug, Clone, PartialEq)]
pub struct Consumer {
    pub id: String,
    pub appliances: Vec<Appliance>,
    pub nonflexible: Vec<f64>,
}

impl Consumer {
    pub fn new(id: impl Into<String>, appliances: Vec<Appliance>, horizon: usize) -> Self {
        Consumer {
            id: id.into(),
            appliances,
            nonflexible: vec![0.0; horizon],
        }
    }

    /// Total daily energy requirement across the consumer's appliances.
    pub fn energy(&self) -> f64 {
        self.appliances.iter().map(|a| a.energy).sum()
    }
}

/// Hourly generation cost, quadratic in the aggregate load:
/// `C_h(l) = a2[h] l^2 + a1[h] l + a0[h]` with `a2[h] > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub a2: Vec<f64>,
    pub a1: Vec<f64>,
    pub a0: Vec<f64>,
}

impl CostModel {
    pub fn uniform(hours: usize, a2: f64, a1: f64, a0: f64) -> Self {
        CostModel {
            a2: vec![a2; hours],
            a1: vec![a1; hours],
            a0: vec![a0; hours],
        }
    }

    pub fn hours(&self) -> usize {
        self.a2.len()
    }

    pub fn cost(&self, h: usize, load: f64) -> f64 {
        (self.a2[h] * load + self.a1[h]) * load + self.a0[h]
    }

    pub fn marginal(&self, h: usize, load: f64) -> f64 {
        2.0 * self.a2[h] * load + self.a1[h]
    }

    /// Total cost of serving an aggregate hourly load vector.
    pub fn total_cost(&self, load: &[f64]) -> f64 {
        load.iter().enumerate().map(|(h, &l)| self.cost(h, l)).sum()
    }

    /// True if any hour carries a fixed cost term `a0 != 0`.
    pub fn has_constant_term(&self) -> bool {
        self.a0.iter().any(|&c| c != 0.0)
    }
}

/// One scheduling day: who plays, what the cost curve is, and the tariff
/// window used by the two-tier reference bill.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub horizon: Horizon,
    pub consumers: Vec<Consumer>,
    pub cost_model: CostModel,
    pub peak_hours: BTreeSet<usize>,
    pub peak_price_ratio: f64,
}

impl Scenario {
    pub fn new(horizon: Horizon, consumers: Vec<Consumer>, cost_model: CostModel) -> Self {
        // The stock peak window is defined for a day; clip it for shorter
        // horizons so toy scenarios stay valid.
        let peak_hours = DEFAULT_PEAK_HOURS
            .iter()
            .copied()
            .filter(|&h| h < horizon.hours)
            .collect();
        Scenario {
            horizon,
            consumers,
            cost_model,
            peak_hours,
            peak_price_ratio: DEFAULT_PEAK_RATIO,
        }
    }

    pub fn num_consumers(&self) -> usize {
        self.consumers.len()
    }

    pub fn num_hours(&self) -> usize {
        self.horizon.hours
    }

    pub fn consumer_energy(&self, n: usize) -> f64 {
        self.consumers[n].energy()
    }

    pub fn total_energy(&self) -> f64 {
        self.consumers.iter().map(|c| c.energy()).sum()
    }

    pub fn offpeak_hours(&self) -> Vec<usize> {
        self.horizon.iter().filter(|h| !self.peak_hours.contains(h)).collect()
    }

    /// Hourly nonflexible load summed over all consumers.
    pub fn aggregate_nonflexible(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.num_hours()];
        for c in &self.consumers {
            for (h, v) in c.nonflexible.iter().enumerate() {
                out[h] += v;
            }
        }
        out
    }

    /// The scenario as the scheduling game sees it: the cost model is
    /// replaced by the incremental cost of shiftable load on top of the
    /// aggregate nonflexible draw (see [`flexible_cost_model`]).
    pub fn with_flexible_cost(&self) -> Result<Scenario> {
        let mut out = self.clone();
        out.cost_model = flexible_cost_model(&self.cost_model, &self.aggregate_nonflexible())?;
        Ok(out)
    }
}

/// Hourly power for every appliance of every consumer, indexed
/// `[consumer][appliance][hour]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub power: Vec<Vec<Vec<f64>>>,
}

impl LoadProfile {
    pub fn zeros(scenario: &Scenario) -> Self {
        let h = scenario.num_hours();
        LoadProfile {
            power: scenario
                .consumers
                .iter()
                .map(|c| vec![vec![0.0; h]; c.appliances.len()])
                .collect(),
        }
    }

    pub fn matches_shape(&self, scenario: &Scenario) -> bool {
        self.power.len() == scenario.num_consumers()
            && self.power.iter().zip(&scenario.consumers).all(|(block, c)| {
                block.len() == c.appliances.len()
                    && block.iter().all(|x| x.len() == scenario.num_hours())
            })
    }

    /// Hourly load of one consumer, summed over their appliances.
    pub fn consumer_load(&self, n: usize, hours: usize) -> Vec<f64> {
        let mut out = vec![0.0; hours];
        for x in &self.power[n] {
            for (h, v) in x.iter().enumerate() {
                out[h] += v;
            }
        }
        out
    }

    /// Hourly load summed over all consumers.
    pub fn aggregate_load(&self, hours: usize) -> Vec<f64> {
        let mut out = vec![0.0; hours];
        for block in &self.power {
            for x in block {
                for (h, v) in x.iter().enumerate() {
                    out[h] += v;
                }
            }
        }
        out
    }

    /// Constraint violations of this profile against the scenario, using a
    /// relative tolerance for the energy equality and an absolute one for
    /// the box bounds.
    pub fn feasibility_violations(&self, scenario: &Scenario, tol: f64) -> Vec<Violation> {
        let mut out = Vec::new();
        if !self.matches_shape(scenario) {
            out.push(Violation::new("profile", "shape", "dimensions do not match scenario"));
            return out;
        }
        for (n, consumer) in scenario.consumers.iter().enumerate() {
            for (a, app) in consumer.appliances.iter().enumerate() {
                let x = &self.power[n][a];
                let entity = format!("{}/{}", consumer.id, app.id);
                let mut worst_bound: f64 = 0.0;
                for h in scenario.horizon.iter() {
                    worst_bound = worst_bound.max(app.min_power[h] - x[h]).max(x[h] - app.max_power[h]);
                }
                if worst_bound > tol {
                    out.push(Violation::new(
                        &entity,
                        "hourly power bounds",
                        format!("exceeded by {worst_bound:.3e}"),
                    ));
                }
                let total: f64 = x.iter().sum();
                if (total - app.energy).abs() > tol * app.energy.abs().max(1.0) {
                    out.push(Violation::new(
                        &entity,
                        "daily energy",
                        format!("scheduled {total} kWh, requires {} kWh", app.energy),
                    ));
                }
            }
        }
        out
    }

    pub fn is_feasible(&self, scenario: &Scenario, tol: f64) -> bool {
        self.feasibility_violations(scenario, tol).is_empty()
    }
}

/// One broken invariant, reported with enough context to locate it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub entity: String,
    pub invariant: String,
    pub detail: String,
}

impl Violation {
    pub fn new(entity: impl Into<String>, invariant: impl Into<String>, detail: impl Into<String>) -> Self {
        Violation {
            entity: entity.into(),
            invariant: invariant.into(),
            detail: detail.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {} ({})", self.entity, self.invariant, self.detail)
    }
}

/// Structural checks for a scenario. Returns every violation found rather
/// than stopping at the first, so callers can report them all at once.
pub fn validate_scenario(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let hours = scenario.num_hours();
    if hours == 0 {
        out.push(Violation::new("scenario", "horizon", "zero hours"));
        return out;
    }
    let cm = &scenario.cost_model;
    if cm.a2.len() != hours || cm.a1.len() != hours || cm.a0.len() != hours {
        out.push(Violation::new(
            "cost model",
            "vector length",
            format!("coefficients must have {hours} entries"),
        ));
    } else {
        for h in scenario.horizon.iter() {
            if cm.a2[h] <= 0.0 {
                out.push(Violation::new(
                    "cost model",
                    "strict convexity",
                    format!("a2[{h}] = {} must be positive", cm.a2[h]),
                ));
            }
            if cm.a1[h] < 0.0 || cm.a0[h] < 0.0 {
                out.push(Violation::new(
                    "cost model",
                    "nonnegative coefficients",
                    format!("a1[{h}] = {}, a0[{h}] = {}", cm.a1[h], cm.a0[h]),
                ));
            }
        }
    }
    for &h in &scenario.peak_hours {
        if h >= hours {
            out.push(Violation::new("tariff", "peak hour range", format!("hour {h} outside horizon")));
        }
    }
    if scenario.peak_price_ratio < 1.0 {
        out.push(Violation::new(
            "tariff",
            "peak price ratio",
            format!("{} must be at least 1", scenario.peak_price_ratio),
        ));
    }

    let mut ids = BTreeSet::new();
    for consumer in &scenario.consumers {
        if !ids.insert(consumer.id.clone()) {
            out.push(Violation::new(&consumer.id, "unique consumer id", "duplicate"));
        }
        if consumer.nonflexible.len() != hours {
            out.push(Violation::new(
                &consumer.id,
                "vector length",
                format!("nonflexible load must have {hours} entries"),
            ));
        } else if let Some(h) = consumer.nonflexible.iter().position(|&v| v < 0.0) {
            out.push(Violation::new(
                &consumer.id,
                "nonnegative nonflexible load",
                format!("nonflexible[{h}] = {}", consumer.nonflexible[h]),
            ));
        }
        let mut app_ids = BTreeSet::new();
        for app in &consumer.appliances {
            let entity = format!("{}/{}", consumer.id, app.id);
            if !app_ids.insert(app.id.clone()) {
                out.push(Violation::new(&entity, "unique appliance id", "duplicate"));
            }
            if app.min_power.len() != hours || app.max_power.len() != hours {
                out.push(Violation::new(
                    &entity,
                    "vector length",
                    format!("power bounds must have {hours} entries"),
                ));
                continue;
            }
            if app.energy < 0.0 {
                out.push(Violation::new(&entity, "nonnegative energy", format!("{}", app.energy)));
            }
            for h in scenario.horizon.iter() {
                if app.min_power[h] < 0.0 {
                    out.push(Violation::new(
                        &entity,
                        "nonnegative minimum power",
                        format!("min_power[{h}] = {}", app.min_power[h]),
                    ));
                    break;
                }
            }
            for h in scenario.horizon.iter() {
                if app.min_power[h] > app.max_power[h] {
                    out.push(Violation::new(
                        &entity,
                        "ordered power bounds",
                        format!("min_power[{h}] = {} > max_power[{h}] = {}", app.min_power[h], app.max_power[h]),
                    ));
                    break;
                }
            }
            let lo: f64 = app.min_power.iter().sum();
            let hi: f64 = app.max_power.iter().sum();
            if app.energy < lo - 1e-12 || app.energy > hi + 1e-12 {
                out.push(Violation::new(
                    &entity,
                    "energy within bound budget",
                    format!("need {} kWh, bounds allow [{lo}, {hi}]", app.energy),
                ));
            }
        }
    }
    if scenario.total_energy() <= 0.0 {
        out.push(Violation::new("scenario", "positive total energy", "no energy to schedule"));
    }
    out
}

/// Cost curve faced by the shiftable portion of the load when the
/// non-shiftable hourly draw is fixed. Shifting `y` on top of a fixed base
/// `b` changes the hourly cost by `a2 y^2 + (a1 + 2 a2 b) y`, so the game
/// over shiftable load uses these adjusted linear terms and no constant.
pub fn flexible_cost_model(base: &CostModel, nonflexible: &[f64]) -> Result<CostModel> {
    if nonflexible.len() != base.hours() {
        return Err(Error::invalid(format!(
            "nonflexible load has {} entries, cost model has {}",
            nonflexible.len(),
            base.hours()
        )));
    }
    if let Some(h) = nonflexible.iter().position(|&v| v < 0.0) {
        return Err(Error::invalid(format!("nonflexible load negative at hour {h}")));
    }
    let hours = base.hours();
    let a1 = (0..hours)
        .map(|h| base.a1[h] + 2.0 * base.a2[h] * nonflexible[h])
        .collect();
    Ok(CostModel {
        a2: base.a2.clone(),
        a1,
        a0: vec![0.0; hours],
    })
}

/// Whether a calendar date counts as a working day or not.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DayType {
    Weekday,
    Weekend,
}

impl fmt::Display for DayType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DayType::Weekday => write!(f, "weekday"),
            DayType::Weekend => write!(f, "weekend"),
        }
    }
}

impl std::str::FromStr for DayType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "weekday" => Ok(DayType::Weekday),
            "weekend" => Ok(DayType::Weekend),
            other => Err(Error::parse("calendar", None, format!("unknown day type '{other}'"))),
        }
    }
}

/// Explicit date classification, with a fallback to the civil calendar for
/// dates not listed (Saturday and Sunday count as weekend).
#[derive(Debug, Clone, Default)]
pub struct Calendar {
    pub entries: BTreeMap<String, DayType>,
}

impl Calendar {
    pub fn classify(&self, date: &str) -> Result<DayType> {
        if let Some(&t) = self.entries.get(date) {
            return Ok(t);
        }
        let parsed = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .map_err(|e| Error::parse("calendar", Some(date.to_string()), e.to_string()))?;
        Ok(match parsed.weekday() {
            Weekday::Sat | Weekday::Sun => DayType::Weekend,
            _ => DayType::Weekday,
        })
    }
}

/// One metered observation: energy drawn by one appliance of one consumer
/// during one hour of one day.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryRecord {
    pub consumer_id: String,
    pub appliance_id: String,
    pub date: String,
    pub hour: usize,
    pub kwh: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DerivationWarning {
    pub consumer_id: String,
    pub appliance_id: String,
    pub message: String,
}

impl fmt::Display for DerivationWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}: {}", self.consumer_id, self.appliance_id, self.message)
    }
}

/// Appliance constraints recovered from metered history.
#[derive(Debug, Clone, Default)]
pub struct ConstraintDerivation {
    /// Derived appliances per consumer id, appliances sorted by id.
    pub appliances: BTreeMap<String, Vec<Appliance>>,
    /// Appliances skipped because they were never active on the requested day type.
    pub warnings: Vec<DerivationWarning>,
}

/// Recover scheduling constraints from observed consumption.
///
/// For each appliance seen in the history:
/// - the energy requirement is the mean daily total over all days of the
///   requested type (days with no activity count as zero),
/// - an hour is usable if the appliance ever drew power in it on a day of
///   the requested type,
/// - the cap in usable hours is the largest hourly draw seen anywhere in
///   the history (any day type), and zero elsewhere,
/// - the minimum draw is zero.
///
/// Appliances never active on the requested day type are omitted and
/// reported as warnings. Rows with the [`NONFLEXIBLE_ID`] appliance id are
/// background load, not appliances, and are ignored here.
pub fn derive_constraints(
    history: &[HistoryRecord],
    calendar: &Calendar,
    day_type: DayType,
    hours: usize,
) -> Result<ConstraintDerivation> {
    let mut typed_dates = BTreeSet::new();
    for rec in history {
        if rec.hour >= hours {
            return Err(Error::parse(
                "history",
                Some(format!("{}/{} {}", rec.consumer_id, rec.appliance_id, rec.date)),
                format!("hour {} outside horizon of {hours}", rec.hour),
            ));
        }
        if rec.kwh < 0.0 {
            return Err(Error::parse(
                "history",
                Some(format!("{}/{} {}", rec.consumer_id, rec.appliance_id, rec.date)),
                format!("negative energy {}", rec.kwh),
            ));
        }
        if calendar.classify(&rec.date)? == day_type {
            typed_dates.insert(rec.date.clone());
        }
    }
    if typed_dates.is_empty() {
        return Err(Error::invalid(format!("history contains no {day_type} days")));
    }

    struct Acc {
        daily: BTreeMap<String, f64>,
        active: BTreeSet<usize>,
        cap: f64,
    }
    let mut groups: BTreeMap<(String, String), Acc> = BTreeMap::new();
    for rec in history {
        if rec.appliance_id == NONFLEXIBLE_ID {
            continue;
        }
        let acc = groups
            .entry((rec.consumer_id.clone(), rec.appliance_id.clone()))
            .or_insert_with(|| Acc { daily: BTreeMap::new(), active: BTreeSet::new(), cap: 0.0 });
        acc.cap = acc.cap.max(rec.kwh);
        if typed_dates.contains(&rec.date) {
            *acc.daily.entry(rec.date.clone()).or_insert(0.0) += rec.kwh;
            if rec.kwh > 0.0 {
                acc.active.insert(rec.hour);
            }
        }
    }

    let mut out = ConstraintDerivation::default();
    for ((consumer_id, appliance_id), acc) in groups {
        if acc.active.is_empty() {
            out.warnings.push(DerivationWarning {
                consumer_id,
                appliance_id,
                message: format!("never active on a {day_type}; omitted"),
            });
            continue;
        }
        let energy: f64 = acc.daily.values().sum::<f64>() / typed_dates.len() as f64;
        let mut max_power = vec![0.0; hours];
        for &h in &acc.active {
            max_power[h] = acc.cap;
        }
        out.appliances.entry(consumer_id).or_default().push(Appliance {
            id: appliance_id,
            energy,
            min_power: vec![0.0; hours],
            max_power,
        });
    }
    for apps in out.appliances.values_mut() {
        apps.sort_by(|a, b| a.id.cmp(&b.id));
    }
    Ok(out)
}
