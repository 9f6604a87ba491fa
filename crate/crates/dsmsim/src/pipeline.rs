//! Experiment orchestration: resolve a run configuration, assemble the
//! scheduling days from scenario files, metered history, or the synthetic
//! generator, evaluate the configured mechanisms day by day, and write the
//! result tables.
//!
//! Output is fully determined by the config file and seed: file iteration
//! orders are fixed, every random draw is seeded, and floats are printed
//! in shortest-roundtrip form.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::billing::{bill_fair_reference, externalities, Mechanism};
use crate::dynamics::{BrdSettings, PlayerOrder, DEFAULT_EPSILON, DEFAULT_MAX_ROUNDS};
use crate::error::{Error, Result};
use crate::formats::{
    bills_to_csv, calendar_to_csv, history_to_csv, load_series_to_csv, read_calendar,
    read_history, read_scenario, results_to_csv, scatter_to_csv, scenario_to_toml,
    summary_to_csv, sweep_skipped_to_csv, sweep_to_csv, trace_to_csv, write_text, AuditInfo,
    BillRow, LoadSeriesRow, ScatterRow,
};
use crate::metrics::{
    constraint_scaling_sweep, evaluate_mechanism, summarize, EvaluationSettings,
    MechanismSummary, MetricsReport, SweepTable,
};
use crate::model::{
    validate_scenario, Calendar, Consumer, CostModel, DayType, HistoryRecord, Horizon,
    LoadProfile, Scenario, NONFLEXIBLE_ID,
};
use crate::qpsolve::{initial_profile, SolveSettings};
use crate::synth::{generate_synthetic, SyntheticSpec, SYNTH_COST};

pub const DEFAULT_SWEEP_FACTORS: [f64; 6] = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0];

// ------------------------------------------------------------- config file

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RunConfigFile {
    out: Option<PathBuf>,
    days: Option<Vec<String>>,
    mechanisms: Option<Vec<String>>,
    seed: Option<u64>,
    order: Option<String>,
    trace: Option<bool>,
    input: InputSection,
    solver: Option<SolverSection>,
    dynamics: Option<DynamicsSection>,
    prices: Option<PricesSection>,
    cost: Option<CostSection>,
    peak: Option<PeakSection>,
    sweep: Option<SweepSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InputSection {
    scenario: Option<PathBuf>,
    scenarios: Option<Vec<PathBuf>>,
    history: Option<PathBuf>,
    calendar: Option<PathBuf>,
    /// History mode: schedule each listed date with its observed energies
    /// (true) or schedule generic day types with mean energies (false).
    replay: Option<bool>,
    synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SolverSection {
    tolerance: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DynamicsSection {
    epsilon: Option<f64>,
    max_rounds: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PricesSection {
    baseline: Option<f64>,
    offpeak: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CostSection {
    a2: f64,
    a1: f64,
    #[serde(default)]
    a0: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PeakSection {
    hours: Option<Vec<usize>>,
    price_ratio: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepSection {
    factors: Option<Vec<f64>>,
    day: Option<String>,
}

/// Where the scheduling days come from.
#[derive(Debug, Clone)]
pub enum InputSource {
    /// Each file is one day, identified by its file stem.
    Scenarios(Vec<PathBuf>),
    History { history: PathBuf, calendar: PathBuf, replay: bool },
    Synthetic(SyntheticSpec),
}

/// Fully resolved run settings.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub out: PathBuf,
    pub input: InputSource,
    pub days: Vec<String>,
    pub mechanisms: Vec<Mechanism>,
    pub seed: u64,
    pub random_order: bool,
    pub trace: bool,
    pub solve: SolveSettings,
    pub brd_epsilon: f64,
    pub brd_max_rounds: usize,
    pub baseline_price: f64,
    pub offpeak_price: f64,
    /// Base generation cost for history and synthetic days (scenario files
    /// carry their own).
    pub cost: (f64, f64, f64),
    pub peak_hours: Option<Vec<usize>>,
    pub peak_ratio: Option<f64>,
    pub sweep_factors: Vec<f64>,
    pub sweep_day: Option<String>,
}

/// Command line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct CliOverrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trace: bool,
}

fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn load_run_config(path: &Path, overrides: &CliOverrides) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        context: format!("reading config {}", path.display()),
        source: e,
    })?;
    let file: RunConfigFile = toml::from_str(&text).map_err(|e| Error::Toml {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let base = path.parent().unwrap_or_else(|| Path::new(".")).to_path_buf();

    let mut sources = 0;
    if file.input.scenario.is_some() || file.input.scenarios.is_some() {
        sources += 1;
    }
    if file.input.history.is_some() {
        sources += 1;
    }
    if file.input.synthetic.is_some() {
        sources += 1;
    }
    if sources != 1 {
        return Err(Error::invalid(
            "config needs exactly one input source: scenario(s), history, or synthetic",
        ));
    }
    let input = if let Some(spec) = file.input.synthetic {
        let mut spec = spec;
        if let Some(seed) = overrides.seed {
            spec.seed = seed;
        }
        spec.validate()?;
        InputSource::Synthetic(spec)
    } else if let Some(history) = file.input.history {
        let calendar = file.input.calendar.ok_or_else(|| {
            Error::invalid("history input needs a calendar file for day types")
        })?;
        InputSource::History {
            history: resolve_path(&base, &history),
            calendar: resolve_path(&base, &calendar),
            replay: file.input.replay.unwrap_or(true),
        }
    } else {
        let mut paths = Vec::new();
        if let Some(p) = file.input.scenario {
            paths.push(resolve_path(&base, &p));
        }
        if let Some(list) = file.input.scenarios {
            paths.extend(list.iter().map(|p| resolve_path(&base, p)));
        }
        InputSource::Scenarios(paths)
    };

    let mechanisms = match file.mechanisms {
        Some(names) => {
            let mut out = Vec::new();
            for name in &names {
                let m: Mechanism = name.parse()?;
                if !out.contains(&m) {
                    out.push(m);
                }
            }
            if out.is_empty() {
                return Err(Error::invalid("mechanism list is empty"));
            }
            out
        }
        None => vec![Mechanism::DailyProportional, Mechanism::HourlyProportional],
    };

    let random_order = match file.order.as_deref() {
        None | Some("random") => true,
        Some("round_robin") | Some("round-robin") => false,
        Some(other) => {
            return Err(Error::invalid(format!(
                "unknown player order `{other}` (expected random or round_robin)"
            )))
        }
    };

    let mut solve = SolveSettings::default();
    if let Some(sec) = &file.solver {
        if let Some(t) = sec.tolerance {
            solve.tolerance = t;
        }
        if let Some(n) = sec.max_iterations {
            solve.max_iterations = n;
        }
    }
    solve.check()?;

    let (brd_epsilon, brd_max_rounds) = match &file.dynamics {
        Some(sec) => (
            sec.epsilon.unwrap_or(DEFAULT_EPSILON),
            sec.max_rounds.unwrap_or(DEFAULT_MAX_ROUNDS),
        ),
        None => (DEFAULT_EPSILON, DEFAULT_MAX_ROUNDS),
    };
    if brd_epsilon <= 0.0 || brd_epsilon.is_nan() || brd_max_rounds == 0 {
        return Err(Error::invalid("dynamics settings must be positive"));
    }

    let cost = match &file.cost {
        Some(c) => {
            if c.a2 <= 0.0 || c.a2.is_nan() || c.a1 < 0.0 || c.a0 < 0.0 {
                return Err(Error::invalid("cost coefficients need a2 > 0, a1 >= 0, a0 >= 0"));
            }
            (c.a2, c.a1, c.a0)
        }
        None => SYNTH_COST,
    };

    let defaults = EvaluationSettings::default();
    Ok(RunConfig {
        out: overrides
            .out
            .clone()
            .or(file.out.map(|p| resolve_path(&base, &p)))
            .unwrap_or_else(|| PathBuf::from("out")),
        input,
        days: file.days.unwrap_or_default(),
        mechanisms,
        seed: overrides.seed.or(file.seed).unwrap_or(0),
        random_order,
        trace: overrides.trace || file.trace.unwrap_or(false),
        solve,
        brd_epsilon,
        brd_max_rounds,
        baseline_price: file.prices.as_ref().and_then(|p| p.baseline).unwrap_or(defaults.baseline_price),
        offpeak_price: file.prices.as_ref().and_then(|p| p.offpeak).unwrap_or(defaults.offpeak_price),
        cost,
        peak_hours: file.peak.as_ref().and_then(|p| p.hours.clone()),
        peak_ratio: file.peak.as_ref().and_then(|p| p.price_ratio),
        sweep_factors: file
            .sweep
            .as_ref()
            .and_then(|s| s.factors.clone())
            .unwrap_or_else(|| DEFAULT_SWEEP_FACTORS.to_vec()),
        sweep_day: file.sweep.as_ref().and_then(|s| s.day.clone()),
    })
}

/// Stable per-day seed: mixes the master seed with the day id so day
/// shuffles differ while staying reproducible (FNV-1a).
pub fn day_seed(master: u64, day_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ master.wrapping_mul(0x0100_0000_01b3);
    for b in day_id.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

fn eval_for_day(cfg: &RunConfig, day_id: &str) -> EvaluationSettings {
    let seed = day_seed(cfg.seed, day_id);
    EvaluationSettings {
        solve: cfg.solve,
        brd: BrdSettings {
            order: if cfg.random_order {
                PlayerOrder::Random { seed }
            } else {
                PlayerOrder::RoundRobin
            },
            epsilon: cfg.brd_epsilon,
            max_rounds: cfg.brd_max_rounds,
        },
        shift_seed: seed,
        baseline_price: cfg.baseline_price,
        offpeak_price: cfg.offpeak_price,
    }
}

// ------------------------------------------------------------ day assembly

/// One scheduling day ready for evaluation.
#[derive(Debug, Clone)]
pub struct DayCase {
    pub day_id: String,
    /// Scenario with the base (total-load) generation cost.
    pub base: Scenario,
    /// The game view: flexible-load cost with no constant term.
    pub game: Scenario,
    /// Reference placement of the flexible load, used by the baseline and
    /// two-tier tariffs.
    pub observed: LoadProfile,
}

fn apply_peak_overrides(s: &mut Scenario, cfg: &RunConfig) {
    if let Some(hours) = &cfg.peak_hours {
        s.peak_hours = hours.iter().copied().collect();
    }
    if let Some(ratio) = cfg.peak_ratio {
        s.peak_price_ratio = ratio;
    }
}

fn day_case(day_id: String, base: Scenario, observed: Option<LoadProfile>) -> Result<DayCase> {
    let violations = validate_scenario(&base);
    if !violations.is_empty() {
        let detail = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
        return Err(Error::invalid(format!("day {day_id}: {detail}")));
    }
    let game = base.with_flexible_cost()?;
    let observed = match observed {
        Some(p) => p,
        None => initial_profile(&game)?,
    };
    if !observed.matches_shape(&game) {
        return Err(Error::invalid(format!("day {day_id}: observed profile shape mismatch")));
    }
    Ok(DayCase { day_id, base, game, observed })
}

fn filter_by_days(mut cases: Vec<DayCase>, days: &[String]) -> Result<Vec<DayCase>> {
    if days.is_empty() {
        return Ok(cases);
    }
    let mut out = Vec::with_capacity(days.len());
    for day in days {
        match cases.iter().position(|c| &c.day_id == day) {
            Some(i) => out.push(cases.remove(i)),
            None => {
                return Err(Error::invalid(format!(
                    "requested day {day} is not in the input day set"
                )))
            }
        }
    }
    Ok(out)
}

/// Build per-day flexible profiles out of history rows.
fn profile_from_rows(rows: &[&HistoryRecord], s: &Scenario) -> LoadProfile {
    let mut profile = LoadProfile::zeros(s);
    let index: BTreeMap<&str, usize> =
        s.consumers.iter().enumerate().map(|(n, c)| (c.id.as_str(), n)).collect();
    for rec in rows {
        let Some(&n) = index.get(rec.consumer_id.as_str()) else { continue };
        let Some(a) = s.consumers[n].appliances.iter().position(|a| a.id == rec.appliance_id)
        else {
            continue;
        };
        if rec.hour < s.num_hours() {
            profile.power[n][a][rec.hour] += rec.kwh;
        }
    }
    profile
}

pub fn assemble_days(cfg: &RunConfig) -> Result<Vec<DayCase>> {
    let cases = match &cfg.input {
        InputSource::Scenarios(paths) => {
            if paths.is_empty() {
                return Err(Error::invalid("no scenario files listed"));
            }
            let mut cases = Vec::with_capacity(paths.len());
            for path in paths {
                let mut base = read_scenario(path)?;
                apply_peak_overrides(&mut base, cfg);
                let day_id = path
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| path.display().to_string());
                cases.push(day_case(day_id, base, None)?);
            }
            filter_by_days(cases, &cfg.days)?
        }
        InputSource::Synthetic(spec) => {
            let data = generate_synthetic(spec)?;
            let mut cases = Vec::with_capacity(data.days.len());
            for day in &data.days {
                let mut base = day.scenario.clone();
                apply_peak_overrides(&mut base, cfg);
                let rows: Vec<&HistoryRecord> =
                    data.history.iter().filter(|r| r.date == day.date).collect();
                let observed = profile_from_rows(&rows, &base);
                cases.push(day_case(day.date.clone(), base, Some(observed))?);
            }
            filter_by_days(cases, &cfg.days)?
        }
        InputSource::History { history, calendar, replay } => {
            if cfg.days.is_empty() {
                return Err(Error::invalid(
                    "history input needs an explicit non-empty day list",
                ));
            }
            let records = read_history(history)?;
            let calendar = read_calendar(calendar)?;
            let hours = Horizon::DAY.hours;
            if *replay {
                assemble_replay_days(cfg, &records, &calendar, hours)?
            } else {
                assemble_daytype_days(cfg, &records, &calendar, hours)?
            }
        }
    };
    if cases.is_empty() {
        return Err(Error::invalid("day set is empty"));
    }
    Ok(cases)
}

fn base_cost_model(cfg: &RunConfig, hours: usize) -> CostModel {
    CostModel::uniform(hours, cfg.cost.0, cfg.cost.1, cfg.cost.2)
}

/// Replay mode: each requested date is scheduled with its own observed
/// appliance energies and nonflexible profile; plug-in windows and caps
/// come from the full history of its day type.
fn assemble_replay_days(
    cfg: &RunConfig,
    records: &[HistoryRecord],
    calendar: &Calendar,
    hours: usize,
) -> Result<Vec<DayCase>> {
    let mut cases = Vec::with_capacity(cfg.days.len());
    for date in &cfg.days {
        let day_type = calendar.classify(date)?;
        let derived = crate::model::derive_constraints(records, calendar, day_type, hours)?;
        let day_rows: Vec<&HistoryRecord> = records.iter().filter(|r| &r.date == date).collect();
        if day_rows.is_empty() {
            return Err(Error::invalid(format!("history has no rows for day {date}")));
        }

        let mut consumers = Vec::new();
        for (consumer_id, appliances) in &derived.appliances {
            let mut appliances = appliances.clone();
            for a in &mut appliances {
                a.energy = day_rows
                    .iter()
                    .filter(|r| &r.consumer_id == consumer_id && r.appliance_id == a.id)
                    .map(|r| r.kwh)
                    .sum();
            }
            let mut nonflexible = vec![0.0; hours];
            for r in &day_rows {
                if &r.consumer_id == consumer_id && r.appliance_id == NONFLEXIBLE_ID {
                    nonflexible[r.hour] += r.kwh;
                }
            }
            consumers.push(Consumer { id: consumer_id.clone(), appliances, nonflexible });
        }
        let mut base =
            Scenario::new(Horizon::new(hours), consumers, base_cost_model(cfg, hours));
        apply_peak_overrides(&mut base, cfg);
        let observed = profile_from_rows(&day_rows, &base);
        cases.push(day_case(date.clone(), base, Some(observed))?);
    }
    Ok(cases)
}

/// Day-type mode: each requested entry is `weekday` or `weekend`; energies
/// and nonflexible profiles are means over the typed days in the history.
fn assemble_daytype_days(
    cfg: &RunConfig,
    records: &[HistoryRecord],
    calendar: &Calendar,
    hours: usize,
) -> Result<Vec<DayCase>> {
    let mut cases = Vec::with_capacity(cfg.days.len());
    for entry in &cfg.days {
        let day_type: DayType = entry.parse()?;
        let derived = crate::model::derive_constraints(records, calendar, day_type, hours)?;
        let typed_dates: Vec<&str> = {
            let mut dates: Vec<&str> = records
                .iter()
                .filter(|r| calendar.classify(&r.date).map(|t| t == day_type).unwrap_or(false))
                .map(|r| r.date.as_str())
                .collect();
            dates.sort_unstable();
            dates.dedup();
            dates
        };
        if typed_dates.is_empty() {
            return Err(Error::invalid(format!("history has no {day_type} days")));
        }

        let mut consumers = Vec::new();
        for (consumer_id, appliances) in &derived.appliances {
            let mut nonflexible = vec![0.0; hours];
            for r in records {
                if &r.consumer_id == consumer_id
                    && r.appliance_id == NONFLEXIBLE_ID
                    && typed_dates.contains(&r.date.as_str())
                {
                    nonflexible[r.hour] += r.kwh;
                }
            }
            for v in &mut nonflexible {
                *v /= typed_dates.len() as f64;
            }
            consumers.push(Consumer {
                id: consumer_id.clone(),
                appliances: appliances.clone(),
                nonflexible,
            });
        }
        let mut base =
            Scenario::new(Horizon::new(hours), consumers, base_cost_model(cfg, hours));
        apply_peak_overrides(&mut base, cfg);
        cases.push(day_case(entry.clone(), base, None)?);
    }
    Ok(cases)
}

// ---------------------------------------------------------------- commands

/// Everything `simulate` and `compare` produce, both in memory and on disk.
#[derive(Debug)]
pub struct SimulateOutput {
    pub reports: Vec<MetricsReport>,
    pub summary: Vec<MechanismSummary>,
    pub written: Vec<PathBuf>,
}

fn audit_info(cfg: &RunConfig) -> AuditInfo {
    AuditInfo {
        seed: cfg.seed,
        order: if cfg.random_order { "random".into() } else { "round_robin".into() },
        brd_epsilon: cfg.brd_epsilon,
        brd_max_rounds: cfg.brd_max_rounds,
        solve_tolerance: cfg.solve.tolerance,
        solve_max_iterations: cfg.solve.max_iterations,
        shift_seed: cfg.seed,
    }
}

pub fn run_simulate(cfg: &RunConfig) -> Result<SimulateOutput> {
    run_days(cfg, false)
}

/// `simulate` across the full mechanism comparison set, plus the
/// efficiency/fairness scatter.
pub fn run_compare(cfg: &RunConfig) -> Result<SimulateOutput> {
    let mut cfg = cfg.clone();
    cfg.mechanisms = Mechanism::COMPARED.to_vec();
    run_days(&cfg, true)
}

fn run_days(cfg: &RunConfig, scatter: bool) -> Result<SimulateOutput> {
    let days = assemble_days(cfg)?;
    let mut reports = Vec::new();
    let mut bill_rows = Vec::new();
    let mut series_rows = Vec::new();
    let mut scatter_rows = Vec::new();
    let mut written = Vec::new();

    for day in &days {
        let eval = eval_for_day(cfg, &day.day_id);
        let ext = externalities(&day.game, &eval.solve)
            .map_err(|e| Error::invalid(format!("day {}: {e}", day.day_id)))?;
        let nonflexible = day.base.aggregate_nonflexible();

        for &mechanism in &cfg.mechanisms {
            let want_trace = cfg.trace && mechanism.game().is_some();
            let outcome = evaluate_mechanism(
                &day.game,
                mechanism,
                &day.observed,
                &ext,
                &eval,
                &day.day_id,
                want_trace,
            )
            .map_err(|e| Error::invalid(format!("day {}, {mechanism}: {e}", day.day_id)))?;

            let fair = bill_fair_reference(&outcome.profile, &day.game, &ext.values, ext.optimum_cost)
                .map_err(|e| Error::invalid(format!("day {}, {mechanism}: {e}", day.day_id)))?;
            for (n, c) in day.game.consumers.iter().enumerate() {
                bill_rows.push(BillRow {
                    day_id: day.day_id.clone(),
                    mechanism,
                    consumer_id: c.id.clone(),
                    bill: outcome.report.bills[n],
                    externality: ext.values[n],
                    vcg_bill: fair.vcg.bills[n],
                    fair_bill: fair.fair.bills[n],
                });
            }

            let flexible = outcome.profile.aggregate_load(day.game.num_hours());
            for hour in 0..day.game.num_hours() {
                series_rows.push(LoadSeriesRow {
                    day_id: day.day_id.clone(),
                    mechanism,
                    hour,
                    nonflexible: nonflexible[hour],
                    flexible: flexible[hour],
                });
            }
            scatter_rows.push(ScatterRow {
                day_id: day.day_id.clone(),
                mechanism,
                poa_minus_1: outcome.report.poa - 1.0,
                fairness_index: outcome.report.fairness_index,
            });

            if let Some(trace) = &outcome.trace {
                let path = cfg
                    .out
                    .join("trace")
                    .join(format!("{}-{}.csv", day.day_id, mechanism));
                write_text(&path, &trace_to_csv(&day.day_id, mechanism, trace))?;
                written.push(path);
            }
            reports.push(outcome.report);
        }
    }

    let summary = summarize(&reports);
    let audit = audit_info(cfg);
    for (name, text) in [
        ("results.csv", results_to_csv(&reports, &audit)),
        ("bills.csv", bills_to_csv(&bill_rows)),
        ("load_series.csv", load_series_to_csv(&series_rows)),
        ("summary.csv", summary_to_csv(&summary)),
    ] {
        let path = cfg.out.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }
    if scatter {
        let path = cfg.out.join("scatter.csv");
        write_text(&path, &scatter_to_csv(&scatter_rows))?;
        written.push(path);
    }
    Ok(SimulateOutput { reports, summary, written })
}

#[derive(Debug)]
pub struct SweepOutput {
    pub table: SweepTable,
    pub written: Vec<PathBuf>,
}

pub fn run_sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    let days = assemble_days(cfg)?;
    let day = match &cfg.sweep_day {
        Some(id) => days
            .iter()
            .find(|c| &c.day_id == id)
            .ok_or_else(|| Error::invalid(format!("sweep day {id} is not in the day set")))?,
        None => &days[0],
    };
    let mechanisms: Vec<Mechanism> =
        cfg.mechanisms.iter().copied().filter(|m| m.game().is_some()).collect();
    if mechanisms.is_empty() {
        return Err(Error::invalid("sweep needs at least one game mechanism (DP or HP)"));
    }
    let eval = eval_for_day(cfg, &day.day_id);
    let table = constraint_scaling_sweep(&day.game, &cfg.sweep_factors, &mechanisms, &eval)
        .map_err(|e| Error::invalid(format!("sweep on day {}: {e}", day.day_id)))?;

    let mut written = Vec::new();
    for (name, text) in
        [("sweep.csv", sweep_to_csv(&table)), ("sweep_skipped.csv", sweep_skipped_to_csv(&table))]
    {
        let path = cfg.out.join(name);
        write_text(&path, &text)?;
        written.push(path);
    }
    Ok(SweepOutput { table, written })
}

#[derive(Debug)]
pub struct GenerateOutput {
    pub day_ids: Vec<String>,
    pub written: Vec<PathBuf>,
}

/// Load a generator spec from either a full run config (its
/// `[input.synthetic]` table) or a bare spec file.
pub fn load_generate_spec(path: &Path, overrides: &CliOverrides) -> Result<(SyntheticSpec, PathBuf)> {
    if let Ok(cfg) = load_run_config(path, overrides) {
        if let InputSource::Synthetic(spec) = cfg.input {
            return Ok((spec, cfg.out));
        }
        return Err(Error::invalid("generate needs a [input.synthetic] table or a bare spec file"));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        context: format!("reading generator spec {}", path.display()),
        source: e,
    })?;
    let mut spec: SyntheticSpec = toml::from_str(&text).map_err(|e| Error::Toml {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    if let Some(seed) = overrides.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    let out = overrides.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    Ok((spec, out))
}

pub fn run_generate(spec: &SyntheticSpec, out: &Path) -> Result<GenerateOutput> {
    let data = generate_synthetic(spec)?;
    let mut written = Vec::new();
    let mut day_ids = Vec::new();
    for day in &data.days {
        let path = out.join("days").join(format!("scenario-{}.toml", day.date));
        write_text(&path, &scenario_to_toml(&day.scenario)?)?;
        written.push(path);
        day_ids.push(day.date.clone());
    }
    let history_path = out.join("history.csv");
    write_text(&history_path, &history_to_csv(&data.history))?;
    written.push(history_path);
    let calendar_path = out.join("calendar.csv");
    write_text(&calendar_path, &calendar_to_csv(&data.calendar))?;
    written.push(calendar_path);
    let spec_path = out.join("spec_used.toml");
    let spec_text = toml::to_string(spec)
        .map_err(|e| Error::Toml { context: "spec_used".into(), message: e.to_string() })?;
    write_text(&spec_path, &spec_text)?;
    written.push(spec_path);
    Ok(GenerateOutput { day_ids, written })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Archetype;

    fn synthetic_config_text(out: &Path, seed: u64) -> String {
        format!(
            r#"
out = "{}"
mechanisms = ["dp", "hp", "baseline", "peakoff"]
seed = {seed}

[input.synthetic]
num_consumers = 4
num_days = 2
flexible_share = 0.25
mean_nonflexible_hourly = 4.0
archetypes = ["ev"]
seed = {seed}
"#,
            out.display()
        )
    }

    fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn synthetic_compare_runs_and_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let out_a = tmp.path().join("a");
        let out_b = tmp.path().join("b");
        let cfg_a = write_config(tmp.path(), "a.toml", &synthetic_config_text(&out_a, 5));
        let cfg_b = write_config(tmp.path(), "b.toml", &synthetic_config_text(&out_b, 5));

        let cfg = load_run_config(&cfg_a, &CliOverrides::default()).unwrap();
        let output = run_compare(&cfg).unwrap();
        assert_eq!(output.reports.len(), 2 * 4);
        assert_eq!(output.summary.len(), 4);

        let cfg2 = load_run_config(&cfg_b, &CliOverrides::default()).unwrap();
        run_compare(&cfg2).unwrap();
        for name in ["results.csv", "bills.csv", "load_series.csv", "summary.csv", "scatter.csv"] {
            let a = fs::read(out_a.join(name)).unwrap();
            let b = fs::read(out_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
            assert!(!a.is_empty());
        }

        let results = fs::read_to_string(out_a.join("results.csv")).unwrap();
        assert_eq!(results.lines().count(), 1 + 8);
        let series = fs::read_to_string(out_a.join("load_series.csv")).unwrap();
        assert_eq!(series.lines().count(), 1 + 2 * 4 * 24);
        let scatter = fs::read_to_string(out_a.join("scatter.csv")).unwrap();
        assert_eq!(scatter.lines().count(), 1 + 8);
    }

    #[test]
    fn generated_files_replay_through_history_mode() {
        let tmp = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            num_consumers: 3,
            num_days: 2,
            flexible_share: 0.3,
            mean_nonflexible_hourly: Some(2.0),
            daily_energy: None,
            archetypes: vec![Archetype::Ev, Archetype::Furnace],
            seed: 11,
            start_date: "2016-01-04".into(),
        };
        let gen_out = tmp.path().join("gen");
        let generated = run_generate(&spec, &gen_out).unwrap();
        assert_eq!(generated.day_ids, vec!["2016-01-04", "2016-01-05"]);
        assert!(gen_out.join("days/scenario-2016-01-04.toml").is_file());

        let cfg_text = format!(
            r#"
out = "{}"
days = ["2016-01-04"]
seed = 3

[input]
history = "gen/history.csv"
calendar = "gen/calendar.csv"
replay = true
"#,
            tmp.path().join("replay-out").display()
        );
        let cfg_path = write_config(tmp.path(), "replay.toml", &cfg_text);
        let cfg = load_run_config(&cfg_path, &CliOverrides::default()).unwrap();
        let days = assemble_days(&cfg).unwrap();
        assert_eq!(days.len(), 1);
        let day = &days[0];
        assert_eq!(day.day_id, "2016-01-04");
        assert_eq!(day.base.num_consumers(), 3);

        // Observed energies match the generated scenario for that date.
        let direct = generate_synthetic(&spec).unwrap();
        let reference = &direct.days[0].scenario;
        for (c_ref, c_got) in reference.consumers.iter().zip(&day.base.consumers) {
            assert_eq!(c_ref.id, c_got.id);
            for (a_ref, a_got) in c_ref.appliances.iter().zip(&c_got.appliances) {
                assert_eq!(a_ref.id, a_got.id);
                approx::assert_relative_eq!(a_ref.energy, a_got.energy, max_relative = 1e-9);
            }
            for h in 0..24 {
                approx::assert_relative_eq!(
                    c_ref.nonflexible[h],
                    c_got.nonflexible[h],
                    max_relative = 1e-9
                );
            }
        }
        // The observed profile replays exactly and respects the constraints.
        assert!(day.observed.is_feasible(&day.base, 1e-6));

        let out = run_simulate(&cfg).unwrap();
        assert_eq!(out.reports.len(), 2);

        // Day-type mode assembles a generic weekday from the same files.
        let mean_cfg_text = cfg_text
            .replace("replay = true", "replay = false")
            .replace(r#"days = ["2016-01-04"]"#, r#"days = ["weekday"]"#)
            .replace("replay-out", "mean-out");
        let mean_cfg_path = write_config(tmp.path(), "mean.toml", &mean_cfg_text);
        let mean_cfg = load_run_config(&mean_cfg_path, &CliOverrides::default()).unwrap();
        let mean_days = assemble_days(&mean_cfg).unwrap();
        assert_eq!(mean_days[0].day_id, "weekday");
        // Mean over the two weekdays of each appliance's daily energy.
        let d0 = &direct.days[0].scenario.consumers[0].appliances[0];
        let d1 = &direct.days[1].scenario.consumers[0].appliances[0];
        let got = &mean_days[0].base.consumers[0].appliances[0];
        approx::assert_relative_eq!(got.energy, (d0.energy + d1.energy) / 2.0, max_relative = 1e-9);
    }

    #[test]
    fn sweep_runs_on_a_scenario_file() {
        let tmp = tempfile::tempdir().unwrap();
        let scenario_text = r#"
[horizon]
hours = 24

[cost_model]
a2 = 0.04
a1 = 8.0
a0 = 0.1

[[consumers]]
id = "c1"

[[consumers.appliances]]
id = "ev"
energy = 6.0
max_power = 1.0

[[consumers]]
id = "c2"

[[consumers.appliances]]
id = "ev"
energy = 4.0
max_power = 0.5
"#;
        let scenario_path = write_config(tmp.path(), "day.toml", scenario_text);
        let cfg_text = format!(
            r#"
out = "{}"

[input]
scenario = "{}"

[sweep]
factors = [0.2, 1.0, 2.0]
"#,
            tmp.path().join("sweep-out").display(),
            scenario_path.display()
        );
        let cfg_path = write_config(tmp.path(), "sweep.toml", &cfg_text);
        let cfg = load_run_config(&cfg_path, &CliOverrides::default()).unwrap();
        let out = run_sweep(&cfg).unwrap();
        // 0.2 shrinks c2's day budget to 24 * 0.1 < 4 kWh: skipped.
        assert_eq!(out.table.skipped.len(), 1);
        assert_eq!(out.table.entries.len(), 4);
        assert!(out.written.iter().all(|p| p.is_file()));
        let text = fs::read_to_string(&out.written[0]).unwrap();
        assert!(text.starts_with("factor,mechanism,fairness_index,poa\n"));
    }

    #[test]
    fn config_validation_rejects_ambiguous_input() {
        let tmp = tempfile::tempdir().unwrap();
        let bad = write_config(
            tmp.path(),
            "bad.toml",
            r#"
[input]
scenario = "a.toml"
history = "h.csv"
calendar = "c.csv"
"#,
        );
        assert!(load_run_config(&bad, &CliOverrides::default()).is_err());

        let no_calendar = write_config(
            tmp.path(),
            "nocal.toml",
            r#"
[input]
history = "h.csv"
"#,
        );
        assert!(load_run_config(&no_calendar, &CliOverrides::default()).is_err());

        let bad_mech = write_config(
            tmp.path(),
            "mech.toml",
            r#"
mechanisms = ["nope"]

[input]
scenario = "a.toml"
"#,
        );
        assert!(load_run_config(&bad_mech, &CliOverrides::default()).is_err());
    }

    #[test]
    fn cli_overrides_take_precedence() {
        let tmp = tempfile::tempdir().unwrap();
        let cfg_path =
            write_config(tmp.path(), "cfg.toml", &synthetic_config_text(&tmp.path().join("x"), 1));
        let overrides = CliOverrides {
            out: Some(tmp.path().join("override-out")),
            seed: Some(99),
            trace: true,
        };
        let cfg = load_run_config(&cfg_path, &overrides).unwrap();
        assert_eq!(cfg.out, tmp.path().join("override-out"));
        assert_eq!(cfg.seed, 99);
        assert!(cfg.trace);
        if let InputSource::Synthetic(spec) = &cfg.input {
            assert_eq!(spec.seed, 99);
        } else {
            panic!("expected synthetic input");
        }
    }
}
