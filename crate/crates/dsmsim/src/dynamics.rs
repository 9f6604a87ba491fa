//! Best response dynamics and equilibrium certificates.
//!
//! [`run_brd`] iterates per-consumer best responses against the current
//! aggregate load until a full round improves nobody's bill by more than
//! epsilon; the result is then confirmed by [`verify_nash`]. The module
//! also evaluates two closed-form certificates at a profile: a sufficient
//! condition for uniqueness of the equilibrium aggregate, and a local
//! smoothness bound on the price of anarchy.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::billing::{bill_dp, bill_hp, game_bill_against, BillVector, GameMechanism};
use crate::error::{Error, Result};
use crate::model::{LoadProfile, Scenario};
use crate::qpsolve::{best_response_from, SolveSettings};

pub const DEFAULT_EPSILON: f64 = 1e-5;
pub const DEFAULT_MAX_ROUNDS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlayerOrder {
    /// Fresh seeded shuffle of the consumers every round.
    Random { seed: u64 },
    RoundRobin,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrdSettings {
    pub order: PlayerOrder,
    /// Stop once a full round improves no bill by more than this, in cents.
    pub epsilon: f64,
    pub max_rounds: usize,
}

impl Default for BrdSettings {
    fn default() -> Self {
        BrdSettings {
            order: PlayerOrder::Random { seed: 0 },
            epsilon: DEFAULT_EPSILON,
            max_rounds: DEFAULT_MAX_ROUNDS,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EquilibriumResult {
    pub profile: LoadProfile,
    pub bills: BillVector,
    pub rounds: usize,
    pub total_best_responses: usize,
    pub max_last_round_improvement: f64,
    pub converged: bool,
    pub aggregate_load: Vec<f64>,
}

/// One best response inside a BRD run.
#[derive(Debug, Clone)]
pub struct BrdTraceRecord {
    pub step: usize,
    pub round: usize,
    pub consumer: String,
    pub bill_before: f64,
    pub bill_after: f64,
    pub aggregate_load: Vec<f64>,
}

pub fn run_brd(
    s: &Scenario,
    mechanism: GameMechanism,
    brd: &BrdSettings,
    solve: &SolveSettings,
    start: &LoadProfile,
) -> Result<EquilibriumResult> {
    run_brd_inner(s, mechanism, brd, solve, start, None)
}

/// [`run_brd`] plus the per-best-response trace.
pub fn run_brd_traced(
    s: &Scenario,
    mechanism: GameMechanism,
    brd: &BrdSettings,
    solve: &SolveSettings,
    start: &LoadProfile,
) -> Result<(EquilibriumResult, Vec<BrdTraceRecord>)> {
    let mut trace = Vec::new();
    let result = run_brd_inner(s, mechanism, brd, solve, start, Some(&mut trace))?;
    Ok((result, trace))
}

fn run_brd_inner(
    s: &Scenario,
    mechanism: GameMechanism,
    brd: &BrdSettings,
    solve: &SolveSettings,
    start: &LoadProfile,
    mut trace: Option<&mut Vec<BrdTraceRecord>>,
) -> Result<EquilibriumResult> {
    if brd.epsilon <= 0.0 || brd.epsilon.is_nan() {
        return Err(Error::invalid(format!("epsilon {} must be positive", brd.epsilon)));
    }
    if brd.max_rounds == 0 {
        return Err(Error::invalid("max_rounds must be at least 1"));
    }
    if !start.matches_shape(s) {
        return Err(Error::invalid("start profile does not match scenario shape"));
    }
    let hours = s.num_hours();
    let n = s.num_consumers();
    let mut profile = start.clone();
    let mut loads: Vec<Vec<f64>> = (0..n).map(|i| profile.consumer_load(i, hours)).collect();
    let mut aggregate = profile.aggregate_load(hours);

    let mut rng = match brd.order {
        PlayerOrder::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        PlayerOrder::RoundRobin => None,
    };

    let mut rounds = 0;
    let mut total_best_responses = 0;
    let mut max_last_round_improvement = f64::INFINITY;
    let mut converged = false;

    for round in 1..=brd.max_rounds {
        let mut order: Vec<usize> = (0..n).collect();
        if let Some(rng) = rng.as_mut() {
            order.shuffle(rng);
        }
        let mut round_max: f64 = 0.0;
        for &i in &order {
            if s.consumers[i].appliances.is_empty() {
                continue;
            }
            let others: Vec<f64> = (0..hours).map(|h| (aggregate[h] - loads[i][h]).max(0.0)).collect();
            let bill_before = game_bill_against(s, i, &loads[i], &others, mechanism)?;
            let out = best_response_from(s, i, &others, mechanism, &profile.power[i], solve)?;
            if !out.converged {
                return Err(Error::no_convergence(format!(
                    "best response of consumer '{}' in round {round} stopped at residual {}",
                    s.consumers[i].id, out.residual
                )));
            }
            round_max = round_max.max(bill_before - out.objective);
            profile.power[i] = out.solution;
            let mut own = vec![0.0; hours];
            for row in &profile.power[i] {
                for (h, v) in row.iter().enumerate() {
                    own[h] += v;
                }
            }
            for h in 0..hours {
                aggregate[h] = others[h] + own[h];
            }
            loads[i] = own;
            total_best_responses += 1;
            if let Some(sink) = trace.as_deref_mut() {
                sink.push(BrdTraceRecord {
                    step: total_best_responses,
                    round,
                    consumer: s.consumers[i].id.clone(),
                    bill_before,
                    bill_after: out.objective,
                    aggregate_load: aggregate.clone(),
                });
            }
        }
        rounds = round;
        max_last_round_improvement = round_max;
        // A round that moved nobody's bill is an equilibrium candidate; so
        // is any state with a single consumer, who best-responds once.
        if round_max <= brd.epsilon || n <= 1 {
            let nash = verify_nash(&profile, s, mechanism, brd.epsilon, solve)?;
            if nash.is_equilibrium {
                converged = true;
                break;
            }
        }
    }

    let bills = match mechanism {
        GameMechanism::DailyProportional => bill_dp(&profile, s)?,
        GameMechanism::HourlyProportional => bill_hp(&profile, s)?,
    };
    let aggregate_load = profile.aggregate_load(hours);
    Ok(EquilibriumResult {
        profile,
        bills,
        rounds,
        total_best_responses,
        max_last_round_improvement,
        converged,
        aggregate_load,
    })
}

#[derive(Debug, Clone)]
pub struct NashCheck {
    /// Per consumer: current bill minus best achievable bill, in cents.
    pub gaps: Vec<f64>,
    pub epsilon: f64,
    pub is_equilibrium: bool,
}

/// Measure how far each consumer is from their best response at a profile.
pub fn verify_nash(
    profile: &LoadProfile,
    s: &Scenario,
    mechanism: GameMechanism,
    epsilon: f64,
    solve: &SolveSettings,
) -> Result<NashCheck> {
    if !profile.matches_shape(s) {
        return Err(Error::invalid("profile does not match scenario shape"));
    }
    let hours = s.num_hours();
    let aggregate = profile.aggregate_load(hours);
    let mut gaps = Vec::with_capacity(s.num_consumers());
    for i in 0..s.num_consumers() {
        if s.consumers[i].appliances.is_empty() {
            gaps.push(0.0);
            continue;
        }
        let own = profile.consumer_load(i, hours);
        let others: Vec<f64> = (0..hours).map(|h| (aggregate[h] - own[h]).max(0.0)).collect();
        let bill_now = game_bill_against(s, i, &own, &others, mechanism)?;
        let out = best_response_from(s, i, &others, mechanism, &profile.power[i], solve)?;
        if !out.converged {
            return Err(Error::no_convergence(format!(
                "best response of consumer '{}' during verification stopped at residual {}",
                s.consumers[i].id, out.residual
            )));
        }
        gaps.push(bill_now - out.objective);
    }
    let is_equilibrium = gaps.iter().all(|&g| g <= epsilon);
    Ok(NashCheck { gaps, epsilon, is_equilibrium })
}

/// Per-hour evaluation of the sufficient uniqueness condition
/// `(l^h)^2 / sum_n (l_n^h)^2 > (l^h c_h'' / (2 c_h'))^2`, where `c_h` is
/// the per-unit price. Quadratic costs with `a0 = 0` have an affine
/// per-unit price, so the right-hand side is identically zero.
#[derive(Debug, Clone)]
pub struct UniquenessHour {
    pub hour: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    /// True when no consumer draws anything this hour, making the
    /// condition inapplicable there.
    pub vacuous: bool,
}

#[derive(Debug, Clone)]
pub struct UniquenessReport {
    pub hours: Vec<UniquenessHour>,
    /// True iff every non-vacuous hour has a strictly positive margin.
    pub passes: bool,
    /// Value the left-hand side takes when all consumers share load
    /// equally: the number of consumers.
    pub uniform_approximation: f64,
}

pub fn check_uniqueness(profile: &LoadProfile, s: &Scenario) -> Result<UniquenessReport> {
    if !profile.matches_shape(s) {
        return Err(Error::invalid("profile does not match scenario shape"));
    }
    if s.cost_model.has_constant_term() {
        return Err(Error::invalid(
            "uniqueness condition applies to per-unit prices, which need a0 = 0",
        ));
    }
    let hours = s.num_hours();
    let n = s.num_consumers();
    let loads: Vec<Vec<f64>> = (0..n).map(|i| profile.consumer_load(i, hours)).collect();
    let mut report = Vec::with_capacity(hours);
    let mut passes = true;
    for h in 0..hours {
        let total: f64 = loads.iter().map(|l| l[h]).sum();
        let sum_sq: f64 = loads.iter().map(|l| l[h] * l[h]).sum();
        if total <= 0.0 || sum_sq <= 0.0 {
            report.push(UniquenessHour { hour: h, lhs: 0.0, rhs: 0.0, margin: 0.0, vacuous: true });
            continue;
        }
        let lhs = total * total / sum_sq;
        // Per-unit price c(l) = a2 l + a1: second derivative zero.
        let second = 0.0;
        let first = s.cost_model.a2[h];
        let rhs = (total * second / (2.0 * first)).powi(2);
        let margin = lhs - rhs;
        if margin <= 0.0 {
            passes = false;
        }
        report.push(UniquenessHour { hour: h, lhs, rhs, margin, vacuous: false });
    }
    Ok(UniquenessReport {
        hours: report,
        passes,
        uniform_approximation: n as f64,
    })
}

/// Local smoothness certificate for the hourly proportional game.
#[derive(Debug, Clone)]
pub struct SmoothnessCert {
    /// `r_h = a1[h] / (a2[h] * load_cap[h])` for hours with a positive cap.
    pub r: Vec<f64>,
    pub mu: f64,
    pub lambda: f64,
    /// `1 + (3/4) sup_h 1/(1+r_h)`.
    pub poa_bound: f64,
    /// `lambda / (1 - mu)`, the smoothness route to the same bound.
    pub smoothness_bound: f64,
    pub load_cap: Vec<f64>,
    /// True iff `mu` landed strictly inside (0, 1).
    pub valid: bool,
}

/// Structural ceiling on the aggregate load: the sum of every appliance's
/// hourly cap. Hours where no appliance can draw return zero and are
/// excluded from the certificate's suprema.
pub fn default_load_cap(s: &Scenario) -> Vec<f64> {
    let mut cap = vec![0.0; s.num_hours()];
    for c in &s.consumers {
        for a in &c.appliances {
            for (h, v) in a.max_power.iter().enumerate() {
                cap[h] += v;
            }
        }
    }
    cap
}

pub fn smoothness_certificate(s: &Scenario, load_cap: &[f64]) -> Result<SmoothnessCert> {
    if s.cost_model.has_constant_term() {
        return Err(Error::invalid("the smoothness bound requires a0 = 0 at every hour"));
    }
    if load_cap.len() != s.num_hours() {
        return Err(Error::invalid("load_cap length does not match horizon"));
    }
    let mut r = Vec::new();
    for h in s.horizon.iter() {
        if load_cap[h] < 0.0 {
            return Err(Error::invalid(format!("load_cap[{h}] = {} is negative", load_cap[h])));
        }
        if load_cap[h] > 0.0 {
            r.push(s.cost_model.a1[h] / (s.cost_model.a2[h] * load_cap[h]));
        }
    }
    if r.is_empty() {
        return Err(Error::domain("no hour admits flexible load; the certificate is vacuous"));
    }
    let sup = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let poa_bound = 1.0 + 0.75 * sup(&mut r.iter().map(|&rh| 1.0 / (1.0 + rh)));
    let mu = sup(&mut r.iter().map(|&rh| {
        let q = 1.0 + rh;
        ((1.0 + q * q).sqrt() - 1.0) / (q * q)
    }));
    let lambda = sup(&mut r.iter().map(|&rh| {
        let t = 1.0 + rh * mu;
        (t * t + mu) / (4.0 * (1.0 + rh) * mu)
    }));
    let valid = mu > 0.0 && mu < 1.0;
    let smoothness_bound = if valid { lambda / (1.0 - mu) } else { f64::INFINITY };
    Ok(SmoothnessCert {
        r,
        mu,
        lambda,
        poa_bound,
        smoothness_bound,
        load_cap: load_cap.to_vec(),
        valid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Appliance, Consumer, CostModel, Horizon};
    use crate::qpsolve::{initial_profile, social_optimum};
    use approx::assert_relative_eq;

    fn toy_scenario(energies: &[f64], hours: usize) -> Scenario {
        let all: Vec<usize> = (0..hours).collect();
        let consumers = energies
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                Consumer::new(
                    format!("c{}", i + 1),
                    vec![Appliance::capped("a", e, e, &all, hours)],
                    hours,
                )
            })
            .collect();
        Scenario::new(
            Horizon::new(hours),
            consumers,
            CostModel {
                a2: vec![0.5, 1.0, 2.0],
                a1: vec![0.0, 0.5, 1.0],
                a0: vec![0.0; hours],
            },
        )
    }

    #[test]
    fn single_consumer_converges_in_one_best_response() {
        let s = toy_scenario(&[2.0], 3);
        let start = initial_profile(&s).unwrap();
        for mech in [GameMechanism::DailyProportional, GameMechanism::HourlyProportional] {
            let out = run_brd(&s, mech, &BrdSettings::default(), &SolveSettings::default(), &start).unwrap();
            assert!(out.converged);
            assert_eq!(out.rounds, 1);
            assert_eq!(out.total_best_responses, 1);
        }
    }

    #[test]
    fn dp_equilibrium_minimizes_social_cost() {
        let s = toy_scenario(&[2.0, 1.5, 1.0], 3);
        let start = initial_profile(&s).unwrap();
        let solve = SolveSettings { tolerance: 1e-9, ..SolveSettings::default() };
        let brd = BrdSettings { epsilon: 1e-8, ..BrdSettings::default() };
        let (eq, trace) = run_brd_traced(&s, GameMechanism::DailyProportional, &brd, &solve, &start).unwrap();
        assert!(eq.converged);
        let opt = social_optimum(&s, &solve).unwrap();
        let eq_cost = s.cost_model.total_cost(&eq.aggregate_load);
        assert_relative_eq!(eq_cost, opt.objective, max_relative = 1e-8);
        for h in 0..3 {
            assert_relative_eq!(eq.aggregate_load[h], opt.solution.aggregate_load(3)[h], epsilon = 1e-6);
        }
        // DP best responses each minimize a positive multiple of the social
        // cost, so the cost never rises along the trace.
        let mut last = f64::INFINITY;
        for rec in &trace {
            let sc = s.cost_model.total_cost(&rec.aggregate_load);
            assert!(sc <= last + 1e-9, "social cost rose from {last} to {sc}");
            last = sc;
        }
    }

    #[test]
    fn random_and_round_robin_orders_agree_on_the_aggregate() {
        let s = toy_scenario(&[2.0, 1.5, 1.0], 3);
        let start = initial_profile(&s).unwrap();
        let solve = SolveSettings { tolerance: 1e-9, ..SolveSettings::default() };
        let random = run_brd(
            &s,
            GameMechanism::DailyProportional,
            &BrdSettings { order: PlayerOrder::Random { seed: 42 }, epsilon: 1e-8, max_rounds: 200 },
            &solve,
            &start,
        )
        .unwrap();
        let robin = run_brd(
            &s,
            GameMechanism::DailyProportional,
            &BrdSettings { order: PlayerOrder::RoundRobin, epsilon: 1e-8, max_rounds: 200 },
            &solve,
            &start,
        )
        .unwrap();
        assert!(random.converged && robin.converged);
        for h in 0..3 {
            assert_relative_eq!(random.aggregate_load[h], robin.aggregate_load[h], epsilon = 1e-6);
        }
    }

    #[test]
    fn verify_nash_flags_perturbed_profiles() {
        let s = toy_scenario(&[2.0, 1.5], 3);
        let start = initial_profile(&s).unwrap();
        let solve = SolveSettings::default();
        let brd = BrdSettings::default();
        let eq = run_brd(&s, GameMechanism::HourlyProportional, &brd, &solve, &start).unwrap();
        assert!(eq.converged);
        let check = verify_nash(&eq.profile, &s, GameMechanism::HourlyProportional, brd.epsilon, &solve).unwrap();
        assert!(check.is_equilibrium);

        // Nudge consumer 1 off the equilibrium: shift 20% of their hour-0
        // load to hour 2 (feasible: caps equal the full energy).
        let mut bad = eq.profile.clone();
        let delta = 0.2 * bad.power[0][0][0];
        assert!(delta > 1e-4, "expected consumer 1 to use hour 0");
        bad.power[0][0][0] -= delta;
        bad.power[0][0][2] += delta;
        let check = verify_nash(&bad, &s, GameMechanism::HourlyProportional, brd.epsilon, &solve).unwrap();
        assert!(!check.is_equilibrium);
        assert!(check.gaps[0] > brd.epsilon);
    }

    #[test]
    fn uniqueness_margins_match_the_closed_forms() {
        let s = toy_scenario(&[2.0, 2.0], 3);
        let mut p = LoadProfile::zeros(&s);
        p.power[0][0] = vec![1.0, 1.0, 0.0];
        p.power[1][0] = vec![1.0, 1.0, 0.0];
        let report = check_uniqueness(&p, &s).unwrap();
        assert!(report.passes);
        assert_eq!(report.uniform_approximation, 2.0);
        // Uniform split: lhs is exactly N. Idle hour: vacuous.
        assert_relative_eq!(report.hours[0].lhs, 2.0, epsilon = 1e-12);
        assert_eq!(report.hours[0].rhs, 0.0);
        assert!(report.hours[2].vacuous);

        // One consumer carrying everything pushes the lhs to 1.
        p.power[0][0] = vec![2.0, 0.0, 0.0];
        p.power[1][0] = vec![0.0, 2.0, 0.0];
        let report = check_uniqueness(&p, &s).unwrap();
        assert_relative_eq!(report.hours[0].lhs, 1.0, epsilon = 1e-12);
        assert!(report.passes);
    }

    #[test]
    fn certificate_reproduces_hand_computed_bounds() {
        let hours = 2;
        let all: Vec<usize> = (0..hours).collect();
        let consumer = Consumer::new("c1", vec![Appliance::capped("a", 10.0, 100.0, &all, hours)], hours);
        let mut s = Scenario::new(
            Horizon::new(hours),
            vec![consumer],
            CostModel::uniform(hours, 0.04, 8.0, 0.0),
        );
        let cert = smoothness_certificate(&s, &[100.0, 100.0]).unwrap();
        // r = 8 / (0.04 * 100) = 2 at both hours.
        assert_relative_eq!(cert.r[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(cert.poa_bound, 1.25, epsilon = 1e-12);
        assert_relative_eq!(cert.mu, (10.0_f64.sqrt() - 1.0) / 9.0, epsilon = 1e-12);
        assert_relative_eq!(cert.lambda, 0.843607496131379, epsilon = 1e-9);
        assert_relative_eq!(cert.smoothness_bound, 1.1103796100280632, epsilon = 1e-9);
        assert!(cert.valid);

        s.cost_model.a1 = vec![0.0; hours];
        let cert = smoothness_certificate(&s, &[100.0, 100.0]).unwrap();
        assert_relative_eq!(cert.poa_bound, 1.75, epsilon = 1e-12);
        assert_relative_eq!(cert.mu, 2.0_f64.sqrt() - 1.0, epsilon = 1e-12);
        assert_relative_eq!(cert.lambda, 0.8535533905932737, epsilon = 1e-12);
        assert_relative_eq!(cert.smoothness_bound, 1.4571067811865475, epsilon = 1e-9);
    }

    #[test]
    fn certificate_rejects_bad_inputs() {
        let s = toy_scenario(&[2.0], 3);
        assert!(smoothness_certificate(&s, &[1.0, 1.0]).is_err());
        assert!(smoothness_certificate(&s, &[0.0, 0.0, 0.0]).is_err());
        let mut with_const = s.clone();
        with_const.cost_model.a0[0] = 0.1;
        assert!(smoothness_certificate(&with_const, &[1.0, 1.0, 1.0]).is_err());
        assert!(check_uniqueness(&LoadProfile::zeros(&with_const), &with_const).is_err());
    }
}
