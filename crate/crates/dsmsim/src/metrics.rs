//! Efficiency and fairness indicators, plus the orchestration needed to
//! evaluate one mechanism on one scheduling day.
//!
//! Efficiency is the price of anarchy: social cost of the profile a
//! mechanism induces over the optimal social cost. Fairness is the total
//! variation distance between bill proportions and externality
//! proportions; bills exactly proportional to externalities score zero.

use crate::billing::{
    bill_baseline, bill_peak_offpeak, greedy_offpeak_shift, BillVector, Externalities, Mechanism,
    DEFAULT_BASELINE_PRICE, DEFAULT_OFFPEAK_PRICE,
};
use crate::dynamics::{
    check_uniqueness, default_load_cap, run_brd, run_brd_traced, smoothness_certificate,
    BrdSettings, BrdTraceRecord, EquilibriumResult,
};
use crate::error::{Error, Result};
use crate::model::{validate_scenario, LoadProfile, Scenario};
use crate::qpsolve::{initial_profile, SolveSettings};

/// Social cost of a profile: the total generation cost of its aggregate.
pub fn social_cost(profile: &LoadProfile, s: &Scenario) -> f64 {
    s.cost_model.total_cost(&profile.aggregate_load(s.num_hours()))
}

/// Ratio of an equilibrium's social cost to the optimal one.
pub fn price_of_anarchy(equilibrium_cost: f64, optimum_cost: f64) -> Result<f64> {
    if optimum_cost <= 0.0 {
        return Err(Error::domain(format!(
            "price of anarchy undefined for optimum cost {optimum_cost}"
        )));
    }
    Ok(equilibrium_cost / optimum_cost)
}

/// Fairness index: `F = sum_n |V_n / sum V - b_n / sum b|`. Zero means the
/// bills split cost exactly in proportion to externalities; the theoretical
/// maximum is 2.
pub fn fairness_index(bills: &BillVector, values: &[f64]) -> Result<f64> {
    if bills.bills.len() != values.len() {
        return Err(Error::invalid("bill and externality vectors differ in length"));
    }
    let v_sum: f64 = values.iter().sum();
    let b_sum: f64 = bills.bills.iter().sum();
    if v_sum <= 0.0 {
        return Err(Error::domain("fairness index needs positive total externality"));
    }
    if b_sum <= 0.0 {
        return Err(Error::domain("fairness index needs positive total bills"));
    }
    Ok(bills
        .bills
        .iter()
        .zip(values)
        .map(|(&b, &v)| (v / v_sum - b / b_sum).abs())
        .sum())
}

/// Everything a single-day, single-mechanism evaluation needs beyond the
/// scenario itself.
#[derive(Debug, Clone)]
pub struct EvaluationSettings {
    pub solve: SolveSettings,
    pub brd: BrdSettings,
    /// Seed for the greedy off-peak shift's hour order.
    pub shift_seed: u64,
    pub baseline_price: f64,
    pub offpeak_price: f64,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        EvaluationSettings {
            solve: SolveSettings::default(),
            brd: BrdSettings::default(),
            shift_seed: 0,
            baseline_price: DEFAULT_BASELINE_PRICE,
            offpeak_price: DEFAULT_OFFPEAK_PRICE,
        }
    }
}

/// One row of the results table: one mechanism on one day.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub day_id: String,
    pub mechanism: Mechanism,
    pub social_cost: f64,
    pub optimum_cost: f64,
    pub poa: f64,
    /// Closed-form upper bound on the price of anarchy (hourly game only).
    pub poa_bound: Option<f64>,
    pub fairness_index: f64,
    /// Whether the sufficient uniqueness condition held at the equilibrium
    /// (game mechanisms only).
    pub uniqueness_passes: Option<bool>,
    pub externalities: Vec<f64>,
    pub bills: Vec<f64>,
}

/// Full outcome of evaluating one mechanism on one day.
#[derive(Debug, Clone)]
pub struct MechanismOutcome {
    pub report: MetricsReport,
    /// The profile the mechanism induced (equilibrium for games, observed
    /// or shifted for the references).
    pub profile: LoadProfile,
    pub equilibrium: Option<EquilibriumResult>,
    pub trace: Option<Vec<BrdTraceRecord>>,
}

/// Evaluate one mechanism on one day.
///
/// Game mechanisms run best response dynamics from the deterministic
/// initial profile. The baseline is priced at the observed profile; the
/// two-tier tariff at the greedy off-peak shift of it. Externalities are
/// shared across mechanisms, so they are computed once by the caller.
pub fn evaluate_mechanism(
    s: &Scenario,
    mechanism: Mechanism,
    observed: &LoadProfile,
    ext: &Externalities,
    eval: &EvaluationSettings,
    day_id: &str,
    want_trace: bool,
) -> Result<MechanismOutcome> {
    let (profile, bills, equilibrium, trace) = match mechanism {
        Mechanism::DailyProportional | Mechanism::HourlyProportional => {
            let game = mechanism.game().expect("game mechanism");
            let start = initial_profile(s)?;
            let (eq, trace) = if want_trace {
                let (eq, trace) = run_brd_traced(s, game, &eval.brd, &eval.solve, &start)?;
                (eq, Some(trace))
            } else {
                (run_brd(s, game, &eval.brd, &eval.solve, &start)?, None)
            };
            if !eq.converged {
                return Err(Error::no_convergence(format!(
                    "{mechanism} dynamics on day {day_id}: {} rounds, last improvement {}",
                    eq.rounds, eq.max_last_round_improvement
                )));
            }
            (eq.profile.clone(), eq.bills.clone(), Some(eq), trace)
        }
        Mechanism::Baseline => (
            observed.clone(),
            bill_baseline(observed, eval.baseline_price),
            None,
            None,
        ),
        Mechanism::PeakOffpeak => {
            let shifted = greedy_offpeak_shift(observed, s, eval.shift_seed)?;
            let bills = bill_peak_offpeak(&shifted, s, eval.offpeak_price)?;
            (shifted, bills, None, None)
        }
        Mechanism::Vcg | Mechanism::FairReference => {
            return Err(Error::invalid(format!(
                "{mechanism} is a reference bill, not a simulated mechanism"
            )));
        }
    };

    let sc = social_cost(&profile, s);
    let poa = price_of_anarchy(sc, ext.optimum_cost)?;
    let poa_bound = if mechanism == Mechanism::HourlyProportional {
        Some(smoothness_certificate(s, &default_load_cap(s))?.poa_bound)
    } else {
        None
    };
    let uniqueness_passes = if equilibrium.is_some() {
        Some(check_uniqueness(&profile, s)?.passes)
    } else {
        None
    };
    let fairness = fairness_index(&bills, &ext.values)?;

    Ok(MechanismOutcome {
        report: MetricsReport {
            day_id: day_id.to_string(),
            mechanism,
            social_cost: sc,
            optimum_cost: ext.optimum_cost,
            poa,
            poa_bound,
            fairness_index: fairness,
            uniqueness_passes,
            externalities: ext.values.clone(),
            bills: bills.bills.clone(),
        },
        profile,
        equilibrium,
        trace,
    })
}

/// Scenario with every appliance's hourly caps scaled by `factor`.
pub fn scale_max_power(s: &Scenario, factor: f64) -> Scenario {
    let mut out = s.clone();
    for c in &mut out.consumers {
        for a in &mut c.appliances {
            for v in &mut a.max_power {
                *v *= factor;
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub factor: f64,
    pub mechanism: Mechanism,
    pub fairness_index: f64,
    pub poa: f64,
}

#[derive(Debug, Clone, Default)]
pub struct SweepTable {
    pub entries: Vec<SweepEntry>,
    /// Factors that made some appliance infeasible, with the reason.
    pub skipped: Vec<(f64, String)>,
}

impl SweepTable {
    /// Fairness column for one mechanism, ordered by factor.
    pub fn fairness_of(&self, mechanism: Mechanism) -> Vec<(f64, f64)> {
        self.entries
            .iter()
            .filter(|e| e.mechanism == mechanism)
            .map(|e| (e.factor, e.fairness_index))
            .collect()
    }
}

/// Re-run the game mechanisms with every appliance cap scaled by each
/// factor, recomputing externalities per factor. Infeasible factors are
/// reported in `skipped` rather than failing the sweep; an all-infeasible
/// factor list is an error.
pub fn constraint_scaling_sweep(
    s: &Scenario,
    factors: &[f64],
    mechanisms: &[Mechanism],
    eval: &EvaluationSettings,
) -> Result<SweepTable> {
    if factors.is_empty() {
        return Err(Error::invalid("sweep needs at least one factor"));
    }
    for m in mechanisms {
        if m.game().is_none() {
            return Err(Error::invalid(format!(
                "sweep re-solves equilibria; {m} defines no game (only DP and HP are supported)"
            )));
        }
    }
    let mut table = SweepTable::default();
    for &factor in factors {
        if factor <= 0.0 || factor.is_nan() {
            table.skipped.push((factor, "factor must be positive".into()));
            continue;
        }
        let scaled = scale_max_power(s, factor);
        let violations = validate_scenario(&scaled);
        if !violations.is_empty() {
            let detail = violations.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; ");
            table.skipped.push((factor, detail));
            continue;
        }
        let ext = crate::billing::externalities(&scaled, &eval.solve)?;
        let observed = initial_profile(&scaled)?;
        for &mechanism in mechanisms {
            let outcome = evaluate_mechanism(
                &scaled,
                mechanism,
                &observed,
                &ext,
                eval,
                &format!("factor-{factor}"),
                false,
            )?;
            table.entries.push(SweepEntry {
                factor,
                mechanism,
                fairness_index: outcome.report.fairness_index,
                poa: outcome.report.poa,
            });
        }
    }
    if table.entries.is_empty() {
        let reasons = table
            .skipped
            .iter()
            .map(|(f, r)| format!("{f}: {r}"))
            .collect::<Vec<_>>()
            .join("\n");
        return Err(Error::invalid(format!("every sweep factor was infeasible:\n{reasons}")));
    }
    Ok(table)
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|&x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

/// Per-mechanism aggregation over days: mean and standard deviation of
/// `PoA - 1` (as a fraction) and of the fairness index.
#[derive(Debug, Clone)]
pub struct MechanismSummary {
    pub mechanism: Mechanism,
    pub days: usize,
    pub mean_poa_minus_1: f64,
    pub std_poa_minus_1: f64,
    pub mean_fairness: f64,
    pub std_fairness: f64,
}

pub fn summarize(reports: &[MetricsReport]) -> Vec<MechanismSummary> {
    let mut mechanisms: Vec<Mechanism> = reports.iter().map(|r| r.mechanism).collect();
    mechanisms.sort();
    mechanisms.dedup();
    mechanisms
        .into_iter()
        .map(|mechanism| {
            let poa: Vec<f64> = reports
                .iter()
                .filter(|r| r.mechanism == mechanism)
                .map(|r| r.poa - 1.0)
                .collect();
            let fairness: Vec<f64> = reports
                .iter()
                .filter(|r| r.mechanism == mechanism)
                .map(|r| r.fairness_index)
                .collect();
            let (mean_poa, std_poa) = mean_std(&poa);
            let (mean_f, std_f) = mean_std(&fairness);
            MechanismSummary {
                mechanism,
                days: poa.len(),
                mean_poa_minus_1: mean_poa,
                std_poa_minus_1: std_poa,
                mean_fairness: mean_f,
                std_fairness: std_f,
            }
        })
        .collect()
}

/// Spearman rank correlation between two equal-length samples. Ties get
/// midranks. Returns an error on degenerate (constant) inputs.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::invalid("spearman needs two samples of equal length >= 2"));
    }
    let rx = midranks(xs);
    let ry = midranks(ys);
    let (mx, sx) = mean_std(&rx);
    let (my, sy) = mean_std(&ry);
    if sx == 0.0 || sy == 0.0 {
        return Err(Error::domain("spearman undefined for constant samples"));
    }
    let cov = rx
        .iter()
        .zip(&ry)
        .map(|(&a, &b)| (a - mx) * (b - my))
        .sum::<f64>()
        / xs.len() as f64;
    Ok(cov / (sx * sy))
}

fn midranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::billing::externalities;
    use crate::model::{Appliance, Consumer, CostModel, Horizon};
    use approx::assert_relative_eq;

    #[test]
    fn fairness_index_hand_cases() {
        let bills = BillVector { mechanism: Mechanism::DailyProportional, bills: vec![2.0, 2.0] };
        let f = fairness_index(&bills, &[1.0, 3.0]).unwrap();
        assert_relative_eq!(f, 0.5, epsilon = 1e-12);

        let proportional = BillVector { mechanism: Mechanism::Vcg, bills: vec![1.5, 4.5] };
        assert_relative_eq!(fairness_index(&proportional, &[1.0, 3.0]).unwrap(), 0.0, epsilon = 1e-12);

        // Scale invariance: proportions are all that matter.
        let scaled = BillVector { mechanism: Mechanism::DailyProportional, bills: vec![20.0, 20.0] };
        assert_relative_eq!(fairness_index(&scaled, &[1.0, 3.0]).unwrap(), f, epsilon = 1e-12);

        // Disjoint supports cap out at 2.
        let disjoint = BillVector { mechanism: Mechanism::DailyProportional, bills: vec![0.0, 1.0] };
        let max_f = fairness_index(&disjoint, &[1.0, 0.0]).unwrap();
        assert_relative_eq!(max_f, 2.0, epsilon = 1e-12);

        assert!(fairness_index(&bills, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn poa_identity_and_degeneracy() {
        assert_relative_eq!(price_of_anarchy(3.5, 3.5).unwrap(), 1.0);
        assert!(price_of_anarchy(1.0, 0.0).is_err());
    }

    fn toy_scenario() -> Scenario {
        let hours = 3;
        let mk = |id: &str, e: f64, cap: f64| {
            Consumer::new(id, vec![Appliance::capped("a", e, cap, &[0, 1, 2], hours)], hours)
        };
        Scenario::new(
            Horizon::new(hours),
            vec![mk("c1", 2.0, 1.5), mk("c2", 1.0, 1.0)],
            CostModel {
                a2: vec![0.5, 1.0, 2.0],
                a1: vec![0.0, 0.5, 1.0],
                a0: vec![0.0; 3],
            },
        )
    }

    #[test]
    fn evaluation_covers_all_compared_mechanisms() {
        let s = toy_scenario();
        let eval = EvaluationSettings::default();
        let ext = externalities(&s, &eval.solve).unwrap();
        let observed = crate::qpsolve::initial_profile(&s).unwrap();
        let mut poa = std::collections::BTreeMap::new();
        for mechanism in Mechanism::COMPARED {
            let out = evaluate_mechanism(&s, mechanism, &observed, &ext, &eval, "d1", false).unwrap();
            assert!(out.report.poa >= 1.0 - 1e-6, "{mechanism}: poa {}", out.report.poa);
            assert!(out.report.fairness_index >= 0.0 && out.report.fairness_index <= 2.0);
            poa.insert(mechanism, out.report.poa);
        }
        assert_relative_eq!(poa[&Mechanism::DailyProportional], 1.0, epsilon = 1e-4);
        let hp = poa[&Mechanism::HourlyProportional];
        assert!(hp < 1.3, "hourly game should be near-optimal, got {hp}");
    }

    #[test]
    fn sweep_reproduces_identity_factor_and_skips_infeasible() {
        let s = toy_scenario();
        let eval = EvaluationSettings::default();
        let mechanisms = [Mechanism::DailyProportional, Mechanism::HourlyProportional];
        // Factor 0.3 shrinks c1's cap budget to 3 * 0.45 < 2: infeasible.
        let table = constraint_scaling_sweep(&s, &[0.3, 1.0, 2.0], &mechanisms, &eval).unwrap();
        assert_eq!(table.skipped.len(), 1);
        assert_eq!(table.skipped[0].0, 0.3);
        assert_eq!(table.entries.len(), 4);

        let ext = externalities(&s, &eval.solve).unwrap();
        let observed = crate::qpsolve::initial_profile(&s).unwrap();
        let direct = evaluate_mechanism(&s, Mechanism::DailyProportional, &observed, &ext, &eval, "d", false)
            .unwrap();
        let via_sweep = table
            .entries
            .iter()
            .find(|e| e.factor == 1.0 && e.mechanism == Mechanism::DailyProportional)
            .unwrap();
        assert_eq!(via_sweep.fairness_index, direct.report.fairness_index);
        assert!(constraint_scaling_sweep(&s, &[0.1], &mechanisms, &eval).is_err());
        assert!(constraint_scaling_sweep(&s, &[1.0], &[Mechanism::Baseline], &eval).is_err());
    }

    #[test]
    fn summary_aggregates_per_mechanism() {
        let mk = |day: &str, mech: Mechanism, poa: f64, f: f64| MetricsReport {
            day_id: day.into(),
            mechanism: mech,
            social_cost: poa,
            optimum_cost: 1.0,
            poa,
            poa_bound: None,
            fairness_index: f,
            uniqueness_passes: None,
            externalities: vec![],
            bills: vec![],
        };
        let reports = vec![
            mk("d1", Mechanism::DailyProportional, 1.0, 0.4),
            mk("d2", Mechanism::DailyProportional, 1.0, 0.6),
            mk("d1", Mechanism::Baseline, 1.2, 0.1),
        ];
        let summary = summarize(&reports);
        assert_eq!(summary.len(), 2);
        let dp = summary.iter().find(|s| s.mechanism == Mechanism::DailyProportional).unwrap();
        assert_eq!(dp.days, 2);
        assert_relative_eq!(dp.mean_fairness, 0.5, epsilon = 1e-12);
        assert_relative_eq!(dp.std_fairness, 0.1, epsilon = 1e-12);
        assert_relative_eq!(dp.mean_poa_minus_1, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn spearman_detects_monotone_trends() {
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap(), 1.0);
        assert_relative_eq!(spearman(&[1.0, 2.0, 3.0], &[5.0, 4.0, 3.0]).unwrap(), -1.0);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        assert!(r > 0.8);
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }
}
