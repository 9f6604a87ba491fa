//! File formats: the scenario document, history and calendar tables, and
//! the delimited result files the command line tool emits.
//!
//! Everything is plain text. Floats are written in positional decimal
//! notation (never scientific), which keeps the files diff-friendly and
//! lets byte-equality stand in for semantic equality in golden tests.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::billing::{Mechanism, DEFAULT_OFFPEAK_PRICE};
use crate::dynamics::BrdTraceRecord;
use crate::error::{Error, Result};
use crate::metrics::{MechanismSummary, MetricsReport, SweepTable};
use crate::model::{
    validate_scenario, Appliance, Calendar, Consumer, CostModel, DayType, HistoryRecord, Horizon,
    Scenario,
};
use crate::synth::SyntheticSpec;

pub const HISTORY_HEADER: [&str; 5] = ["consumer_id", "appliance_id", "date", "hour", "kwh"];
pub const CALENDAR_HEADER: [&str; 2] = ["date", "day_type"];

fn io_err(context: &str, path: &Path, source: std::io::Error) -> Error {
    Error::Io { context: format!("{context} {}", path.display()), source }
}

/// Strict decimal parse: accepts `-12.5` style only, no exponents.
fn parse_decimal(field: &str, what: &str) -> Result<f64> {
    let s = field.trim();
    if s.contains(['e', 'E']) || s.is_empty() {
        return Err(Error::parse("number", Some(s.to_string()), format!("{what} must be a plain decimal")));
    }
    s.parse::<f64>()
        .map_err(|e| Error::parse("number", Some(s.to_string()), format!("{what}: {e}")))
}

fn parse_hour(field: &str) -> Result<usize> {
    let s = field.trim();
    s.parse::<usize>()
        .map_err(|e| Error::parse("hour", Some(s.to_string()), e.to_string()))
}

/// Shortest positional decimal that parses back to the same float.
pub fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

// ---------------------------------------------------------------- scenario

/// Scalar-or-vector shorthand: a single number in the file means "this
/// value every hour".
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrVec {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl NumOrVec {
    fn expand(&self, hours: usize, what: &str) -> Result<Vec<f64>> {
        match self {
            NumOrVec::Scalar(v) => Ok(vec![*v; hours]),
            NumOrVec::Vector(v) if v.len() == hours => Ok(v.clone()),
            NumOrVec::Vector(v) => Err(Error::invalid(format!(
                "{what} has {} values, horizon needs {hours}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    horizon: HorizonSection,
    cost_model: CostSection,
    #[serde(default)]
    peak: Option<PeakSection>,
    #[serde(default)]
    consumers: Vec<ConsumerSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HorizonSection {
    hours: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    a2: NumOrVec,
    a1: NumOrVec,
    #[serde(default)]
    a0: Option<NumOrVec>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeakSection {
    #[serde(default)]
    hours: Option<Vec<usize>>,
    #[serde(default)]
    price_ratio: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConsumerSection {
    id: String,
    #[serde(default)]
    nonflexible: Option<Vec<f64>>,
    #[serde(default)]
    appliances: Vec<ApplianceSection>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplianceSection {
    id: String,
    energy: f64,
    #[serde(default)]
    min_power: Option<NumOrVec>,
    max_power: NumOrVec,
}

pub fn scenario_from_toml(text: &str) -> Result<Scenario> {
    let file: ScenarioFile = toml::from_str(text)
        .map_err(|e| Error::Toml { context: "scenario".into(), message: e.to_string() })?;
    let hours = file.horizon.hours;
    let cost_model = CostModel {
        a2: file.cost_model.a2.expand(hours, "cost_model.a2")?,
        a1: file.cost_model.a1.expand(hours, "cost_model.a1")?,
        a0: match &file.cost_model.a0 {
            Some(v) => v.expand(hours, "cost_model.a0")?,
            None => vec![0.0; hours],
        },
    };
    let mut consumers = Vec::with_capacity(file.consumers.len());
    for c in &file.consumers {
        let mut appliances = Vec::with_capacity(c.appliances.len());
        for a in &c.appliances {
            appliances.push(Appliance {
                id: a.id.clone(),
                energy: a.energy,
                min_power: match &a.min_power {
                    Some(v) => v.expand(hours, &format!("{}/{}.min_power", c.id, a.id))?,
                    None => vec![0.0; hours],
                },
                max_power: a.max_power.expand(hours, &format!("{}/{}.max_power", c.id, a.id))?,
            });
        }
        let nonflexible = match &c.nonflexible {
            Some(v) if v.len() == hours => v.clone(),
            Some(v) => {
                return Err(Error::invalid(format!(
                    "consumer {} nonflexible has {} values, horizon needs {hours}",
                    c.id,
                    v.len()
                )))
            }
            None => vec![0.0; hours],
        };
        consumers.push(Consumer { id: c.id.clone(), appliances, nonflexible });
    }
    let mut scenario = Scenario::new(Horizon::new(hours), consumers, cost_model);
    if let Some(peak) = &file.peak {
        if let Some(hours_list) = &peak.hours {
            scenario.peak_hours = hours_list.iter().copied().collect();
        }
        if let Some(ratio) = peak.price_ratio {
            scenario.peak_price_ratio = ratio;
        }
    }
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        let detail = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("\n  ");
        return Err(Error::invalid(format!("scenario failed validation:\n  {detail}")));
    }
    Ok(scenario)
}

pub fn scenario_to_toml(s: &Scenario) -> Result<String> {
    let file = ScenarioFile {
        horizon: HorizonSection { hours: s.num_hours() },
        cost_model: CostSection {
            a2: NumOrVec::Vector(s.cost_model.a2.clone()),
            a1: NumOrVec::Vector(s.cost_model.a1.clone()),
            a0: Some(NumOrVec::Vector(s.cost_model.a0.clone())),
        },
        peak: Some(PeakSection {
            hours: Some(s.peak_hours.iter().copied().collect()),
            price_ratio: Some(s.peak_price_ratio),
        }),
        consumers: s
            .consumers
            .iter()
            .map(|c| ConsumerSection {
                id: c.id.clone(),
                nonflexible: Some(c.nonflexible.clone()),
                appliances: c
                    .appliances
                    .iter()
                    .map(|a| ApplianceSection {
                        id: a.id.clone(),
                        energy: a.energy,
                        min_power: Some(NumOrVec::Vector(a.min_power.clone())),
                        max_power: NumOrVec::Vector(a.max_power.clone()),
                    })
                    .collect(),
            })
            .collect(),
    };
    toml::to_string(&file)
        .map_err(|e| Error::Toml { context: "scenario".into(), message: e.to_string() })
}

pub fn read_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).map_err(|e| io_err("reading scenario", path, e))?;
    scenario_from_toml(&text)
        .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn write_scenario(path: &Path, s: &Scenario) -> Result<()> {
    fs::write(path, scenario_to_toml(s)?).map_err(|e| io_err("writing scenario", path, e))
}

// ------------------------------------------------------ history / calendar

fn check_header(actual: &csv::StringRecord, expected: &[&str], what: &str) -> Result<()> {
    let got: Vec<String> = actual.iter().map(|f| f.trim().to_string()).collect();
    if got != expected {
        return Err(Error::parse(
            "header",
            None,
            format!("{what} header must be `{}`, got `{}`", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_err("reading history", path, e))?;
    history_from_csv(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn history_from_csv(text: &str) -> Result<Vec<HistoryRecord>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    check_header(
        reader.headers().map_err(|e| Error::Csv { context: "history".into(), source: e })?,
        &HISTORY_HEADER,
        "history",
    )?;
    let mut out = Vec::new();
    for (i, row) in reader.records().enumerate() {
        let row = row.map_err(|e| Error::Csv { context: format!("history row {}", i + 2), source: e })?;
        if row.len() != 5 {
            return Err(Error::parse(
                "history",
                Some(format!("row {}", i + 2)),
                format!("expected 5 fields, got {}", row.len()),
            ));
        }
        out.push(HistoryRecord {
            consumer_id: row[0].to_string(),
            appliance_id: row[1].to_string(),
            date: row[2].to_string(),
            hour: parse_hour(&row[3])?,
            kwh: parse_decimal(&row[4], "kwh")?,
        });
    }
    Ok(out)
}

pub fn history_to_csv(records: &[HistoryRecord]) -> String {
    let mut out = String::from("consumer_id,appliance_id,date,hour,kwh\n");
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.consumer_id,
            r.appliance_id,
            r.date,
            r.hour,
            fmt_f64(r.kwh)
        ));
    }
    out
}

pub fn write_history(path: &Path, records: &[HistoryRecord]) -> Result<()> {
    fs::write(path, history_to_csv(records)).map_err(|e| io_err("writing history", path, e))
}

pub fn read_calendar(path: &Path) -> Result<Calendar> {
    let text = fs::read_to_string(path).map_err(|e| io_err("reading calendar", path, e))?;
    calendar_from_csv(&text).map_err(|e| Error::invalid(format!("{}: {e}", path.display())))
}

pub fn calendar_from_csv(text: &str) -> Result<Calendar> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    check_header(
        reader.headers().map_err(|e| Error::Csv { context: "calendar".into(), source: e })?,
        &CALENDAR_HEADER,
        "calendar",
    )?;
    let mut calendar = Calendar::default();
    for (i, row) in reader.records().enumerate() {
        let row =
            row.map_err(|e| Error::Csv { context: format!("calendar row {}", i + 2), source: e })?;
        let day_type: DayType = row[1]
            .parse()
            .map_err(|e: Error| Error::parse("day_type", Some(row[1].to_string()), e.to_string()))?;
        calendar.entries.insert(row[0].to_string(), day_type);
    }
    Ok(calendar)
}

pub fn calendar_to_csv(calendar: &Calendar) -> String {
    let mut out = String::from("date,day_type\n");
    for (date, day_type) in &calendar.entries {
        out.push_str(&format!("{date},{day_type}\n"));
    }
    out
}

pub fn write_calendar(path: &Path, calendar: &Calendar) -> Result<()> {
    fs::write(path, calendar_to_csv(calendar)).map_err(|e| io_err("writing calendar", path, e))
}

pub fn read_synthetic_spec(path: &Path) -> Result<SyntheticSpec> {
    let text = fs::read_to_string(path).map_err(|e| io_err("reading generator spec", path, e))?;
    let spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::Toml {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    spec.validate()?;
    Ok(spec)
}

// ----------------------------------------------------------- result files

/// Settings echoed into every results row so a row alone identifies its run.
#[derive(Debug, Clone)]
pub struct AuditInfo {
    pub seed: u64,
    pub order: String,
    pub brd_epsilon: f64,
    pub brd_max_rounds: usize,
    pub solve_tolerance: f64,
    pub solve_max_iterations: usize,
    pub shift_seed: u64,
}

pub fn results_to_csv(reports: &[MetricsReport], audit: &AuditInfo) -> String {
    let mut out = String::from(
        "day,mechanism,social_cost,optimum_cost,poa,poa_bound,fairness_index,uniqueness_ok,\
         seed,order,brd_epsilon,brd_max_rounds,solve_tolerance,solve_max_iterations,shift_seed\n",
    );
    for r in reports {
        let bound = r.poa_bound.map(fmt_f64).unwrap_or_default();
        let uniq = r.uniqueness_passes.map(|b| b.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
            r.day_id,
            r.mechanism,
            fmt_f64(r.social_cost),
            fmt_f64(r.optimum_cost),
            fmt_f64(r.poa),
            bound,
            fmt_f64(r.fairness_index),
            uniq,
            audit.seed,
            audit.order,
            fmt_f64(audit.brd_epsilon),
            audit.brd_max_rounds,
            fmt_f64(audit.solve_tolerance),
            audit.solve_max_iterations,
            audit.shift_seed,
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct BillRow {
    pub day_id: String,
    pub mechanism: Mechanism,
    pub consumer_id: String,
    pub bill: f64,
    pub externality: f64,
    pub vcg_bill: f64,
    pub fair_bill: f64,
}

pub fn bills_to_csv(rows: &[BillRow]) -> String {
    let mut out = String::from("day,mechanism,consumer_id,bill,externality,vcg_bill,fair_bill\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.day_id,
            r.mechanism,
            r.consumer_id,
            fmt_f64(r.bill),
            fmt_f64(r.externality),
            fmt_f64(r.vcg_bill),
            fmt_f64(r.fair_bill),
        ));
    }
    out
}

/// Table-style summary; the efficiency gap columns are percentages.
pub fn summary_to_csv(summary: &[MechanismSummary]) -> String {
    let mut out = String::from(
        "mechanism,days,mean_poa_minus_1_pct,std_poa_minus_1_pct,mean_fairness,std_fairness\n",
    );
    for s in summary {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            s.mechanism,
            s.days,
            fmt_f64(100.0 * s.mean_poa_minus_1),
            fmt_f64(100.0 * s.std_poa_minus_1),
            fmt_f64(s.mean_fairness),
            fmt_f64(s.std_fairness),
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct LoadSeriesRow {
    pub day_id: String,
    pub mechanism: Mechanism,
    pub hour: usize,
    pub nonflexible: f64,
    pub flexible: f64,
}

pub fn load_series_to_csv(rows: &[LoadSeriesRow]) -> String {
    let mut out = String::from("day,mechanism,hour,nonflexible,flexible,total\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.day_id,
            r.mechanism,
            r.hour,
            fmt_f64(r.nonflexible),
            fmt_f64(r.flexible),
            fmt_f64(r.nonflexible + r.flexible),
        ));
    }
    out
}

#[derive(Debug, Clone)]
pub struct ScatterRow {
    pub day_id: String,
    pub mechanism: Mechanism,
    pub poa_minus_1: f64,
    pub fairness_index: f64,
}

pub fn scatter_to_csv(rows: &[ScatterRow]) -> String {
    let mut out = String::from("day,mechanism,poa_minus_1,fairness_index\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.day_id,
            r.mechanism,
            fmt_f64(r.poa_minus_1),
            fmt_f64(r.fairness_index),
        ));
    }
    out
}

pub fn sweep_to_csv(table: &SweepTable) -> String {
    let mut out = String::from("factor,mechanism,fairness_index,poa\n");
    for e in &table.entries {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_f64(e.factor),
            e.mechanism,
            fmt_f64(e.fairness_index),
            fmt_f64(e.poa),
        ));
    }
    out
}

pub fn sweep_skipped_to_csv(table: &SweepTable) -> String {
    let mut out = String::from("factor,reason\n");
    for (factor, reason) in &table.skipped {
        out.push_str(&format!("{},\"{}\"\n", fmt_f64(*factor), reason.replace('"', "'")));
    }
    out
}

pub fn trace_to_csv(day_id: &str, mechanism: Mechanism, trace: &[BrdTraceRecord]) -> String {
    let mut out =
        String::from("day,mechanism,step,round,consumer,bill_before,bill_after,hour,aggregate_load\n");
    for t in trace {
        for (hour, &load) in t.aggregate_load.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                day_id,
                mechanism,
                t.step,
                t.round,
                t.consumer,
                fmt_f64(t.bill_before),
                fmt_f64(t.bill_after),
                hour,
                fmt_f64(load),
            ));
        }
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| io_err("creating directory", parent, e))?;
    }
    let mut f = fs::File::create(path).map_err(|e| io_err("creating", path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| io_err("writing", path, e))
}

/// Price a two-tier tariff description for documentation: peak price from
/// the scenario's ratio and the given off-peak price.
pub fn peak_price(s: &Scenario, offpeak_price: Option<f64>) -> (f64, f64) {
    let off = offpeak_price.unwrap_or(DEFAULT_OFFPEAK_PRICE);
    (s.peak_price_ratio * off, off)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::NONFLEXIBLE_ID;
    use approx::assert_relative_eq;

    const SCENARIO_DOC: &str = r#"
[horizon]
hours = 4

[cost_model]
a2 = 0.5
a1 = [1.0, 2.0, 3.0, 4.0]

[peak]
hours = [2, 3]
price_ratio = 2.0

[[consumers]]
id = "c1"
nonflexible = [0.1, 0.2, 0.3, 0.4]

[[consumers.appliances]]
id = "ev"
energy = 2.0
max_power = [1.5, 1.5, 0.0, 0.0]
"#;

    #[test]
    fn scenario_roundtrips_through_toml() {
        let s = scenario_from_toml(SCENARIO_DOC).unwrap();
        assert_eq!(s.num_hours(), 4);
        assert_eq!(s.cost_model.a2, vec![0.5; 4]);
        assert_eq!(s.cost_model.a1, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.cost_model.a0, vec![0.0; 4]);
        assert_eq!(s.peak_hours.iter().copied().collect::<Vec<_>>(), vec![2, 3]);
        assert_eq!(s.peak_price_ratio, 2.0);
        assert_eq!(s.consumers[0].appliances[0].min_power, vec![0.0; 4]);

        let text = scenario_to_toml(&s).unwrap();
        let again = scenario_from_toml(&text).unwrap();
        assert_eq!(format!("{s:?}"), format!("{again:?}"));
    }

    #[test]
    fn scenario_parse_reports_length_and_validity_errors() {
        let short = SCENARIO_DOC.replace("[1.0, 2.0, 3.0, 4.0]", "[1.0, 2.0]");
        let err = scenario_from_toml(&short).unwrap_err().to_string();
        assert!(err.contains("a1"), "got: {err}");

        let infeasible = SCENARIO_DOC.replace("energy = 2.0", "energy = 9.0");
        let err = scenario_from_toml(&infeasible).unwrap_err().to_string();
        assert!(err.contains("validation"), "got: {err}");

        let typo = SCENARIO_DOC.replace("price_ratio", "price_ration");
        assert!(scenario_from_toml(&typo).is_err());
    }

    #[test]
    fn history_roundtrips_and_enforces_header() {
        let records = vec![
            HistoryRecord {
                consumer_id: "c1".into(),
                appliance_id: "ev".into(),
                date: "2016-01-02".into(),
                hour: 5,
                kwh: 1.25,
            },
            HistoryRecord {
                consumer_id: "c1".into(),
                appliance_id: NONFLEXIBLE_ID.into(),
                date: "2016-01-02".into(),
                hour: 6,
                kwh: 0.5,
            },
        ];
        let text = history_to_csv(&records);
        assert!(text.starts_with("consumer_id,appliance_id,date,hour,kwh\n"));
        let back = history_from_csv(&text).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].hour, 5);
        assert_relative_eq!(back[0].kwh, 1.25);

        let bad_header = text.replace("kwh", "kw");
        assert!(history_from_csv(&bad_header).is_err());
        let scientific = text.replace("1.25", "1.25e0");
        assert!(history_from_csv(&scientific).is_err());
    }

    #[test]
    fn calendar_roundtrips() {
        let mut calendar = Calendar::default();
        calendar.entries.insert("2016-01-02".into(), DayType::Weekend);
        calendar.entries.insert("2016-01-04".into(), DayType::Weekday);
        let text = calendar_to_csv(&calendar);
        let back = calendar_from_csv(&text).unwrap();
        assert_eq!(back.entries, calendar.entries);
        assert!(calendar_from_csv("date,kind\n2016-01-02,weekend\n").is_err());
    }

    #[test]
    fn result_writers_emit_documented_headers() {
        let report = MetricsReport {
            day_id: "2016-01-02".into(),
            mechanism: Mechanism::HourlyProportional,
            social_cost: 10.0,
            optimum_cost: 9.5,
            poa: 10.0 / 9.5,
            poa_bound: Some(1.25),
            fairness_index: 0.4,
            uniqueness_passes: Some(true),
            externalities: vec![1.0],
            bills: vec![10.0],
        };
        let audit = AuditInfo {
            seed: 42,
            order: "random".into(),
            brd_epsilon: 1e-5,
            brd_max_rounds: 100,
            solve_tolerance: 1e-7,
            solve_max_iterations: 10_000,
            shift_seed: 42,
        };
        let text = results_to_csv(std::slice::from_ref(&report), &audit);
        let mut lines = text.lines();
        let header = lines.next().unwrap();
        assert!(header.starts_with("day,mechanism,social_cost"));
        assert!(header.ends_with("shift_seed"));
        let row = lines.next().unwrap();
        assert!(row.contains(",42,random,"), "audit columns missing: {row}");
        assert!(row.contains("HP"));

        let sweep = SweepTable {
            entries: vec![],
            skipped: vec![(0.5, "cap too small".into())],
        };
        assert!(sweep_skipped_to_csv(&sweep).contains("0.5,\"cap too small\""));
    }
}
