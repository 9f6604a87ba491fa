//! Billing mechanisms.
//!
//! Two rules define scheduling games: daily proportional (DP) splits the
//! day's total generation cost in proportion to each consumer's daily
//! energy, and hourly proportional (HP) splits each hour's cost in
//! proportion to that hour's loads. Two non-game references are evaluated
//! at fixed profiles: a flat price per kWh and a two-tier peak/off-peak
//! tariff after a greedy off-peak shift. The externality (VCG) reference
//! prices each consumer at the system cost their presence adds.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{LoadProfile, Scenario};
use crate::qpsolve::{social_optimum, SolveSettings};

/// Flat price applied by the baseline reference, cents per kWh.
pub const DEFAULT_BASELINE_PRICE: f64 = 8.5;

/// Off-peak price for the two-tier reference, cents per kWh. The fairness
/// and efficiency metrics are invariant to this choice; it only scales the
/// reference bills.
pub const DEFAULT_OFFPEAK_PRICE: f64 = 8.5;

/// Billing rules under which consumers play a scheduling game.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GameMechanism {
    DailyProportional,
    HourlyProportional,
}

impl GameMechanism {
    pub fn mechanism(self) -> Mechanism {
        match self {
            GameMechanism::DailyProportional => Mechanism::DailyProportional,
            GameMechanism::HourlyProportional => Mechanism::HourlyProportional,
        }
    }
}

/// Every billing rule the simulator can evaluate or report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Mechanism {
    DailyProportional,
    HourlyProportional,
    Baseline,
    PeakOffpeak,
    Vcg,
    FairReference,
}

impl Mechanism {
    pub fn game(self) -> Option<GameMechanism> {
        match self {
            Mechanism::DailyProportional => Some(GameMechanism::DailyProportional),
            Mechanism::HourlyProportional => Some(GameMechanism::HourlyProportional),
            _ => None,
        }
    }

    /// The four mechanisms compared in reports, in report order.
    pub const COMPARED: [Mechanism; 4] = [
        Mechanism::DailyProportional,
        Mechanism::HourlyProportional,
        Mechanism::Baseline,
        Mechanism::PeakOffpeak,
    ];
}

impl fmt::Display for Mechanism {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self {
            Mechanism::DailyProportional => "DP",
            Mechanism::HourlyProportional => "HP",
            Mechanism::Baseline => "Baseline",
            Mechanism::PeakOffpeak => "PeakOff",
            Mechanism::Vcg => "VCG",
            Mechanism::FairReference => "FairRef",
        };
        f.write_str(tag)
    }
}

impl FromStr for Mechanism {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dp" | "daily" | "daily_proportional" => Ok(Mechanism::DailyProportional),
            "hp" | "hourly" | "hourly_proportional" => Ok(Mechanism::HourlyProportional),
            "baseline" => Ok(Mechanism::Baseline),
            "peakoff" | "peak_offpeak" | "peak-offpeak" => Ok(Mechanism::PeakOffpeak),
            "vcg" => Ok(Mechanism::Vcg),
            "fairref" | "fair_reference" => Ok(Mechanism::FairReference),
            other => Err(Error::parse("mechanism", None, format!("unknown mechanism '{other}'"))),
        }
    }
}

/// Per-consumer bills under one mechanism, in scenario consumer order.
#[derive(Debug, Clone, PartialEq)]
pub struct BillVector {
    pub mechanism: Mechanism,
    pub bills: Vec<f64>,
}

impl BillVector {
    pub fn total(&self) -> f64 {
        self.bills.iter().sum()
    }
}

fn check_profile(profile: &LoadProfile, s: &Scenario) -> Result<()> {
    if !profile.matches_shape(s) {
        return Err(Error::invalid("profile shape does not match scenario"));
    }
    Ok(())
}

/// Daily proportional bills: `b_n = (E_n / sum_m E_m) * sum_h C_h(l^h)`.
pub fn bill_dp(profile: &LoadProfile, s: &Scenario) -> Result<BillVector> {
    check_profile(profile, s)?;
    let total_energy = s.total_energy();
    if total_energy <= 0.0 {
        return Err(Error::domain("daily proportional billing needs positive total energy"));
    }
    let sc = s.cost_model.total_cost(&profile.aggregate_load(s.num_hours()));
    Ok(BillVector {
        mechanism: Mechanism::DailyProportional,
        bills: s.consumers.iter().map(|c| c.energy() / total_energy * sc).collect(),
    })
}

/// Hourly proportional bills: `b_n = sum_h (l_n^h / l^h) C_h(l^h)`, with a
/// zero payment whenever the consumer draws nothing that hour.
pub fn bill_hp(profile: &LoadProfile, s: &Scenario) -> Result<BillVector> {
    check_profile(profile, s)?;
    if s.cost_model.has_constant_term() {
        return Err(Error::invalid(
            "hourly proportional billing requires a0 = 0 at every hour (per-unit price undefined at zero load otherwise)",
        ));
    }
    let hours = s.num_hours();
    let n = s.num_consumers();
    let loads: Vec<Vec<f64>> = (0..n).map(|i| profile.consumer_load(i, hours)).collect();
    let mut bills = vec![0.0; n];
    for h in 0..hours {
        let total: f64 = loads.iter().map(|l| l[h]).sum();
        if total <= 0.0 {
            continue;
        }
        let cost = s.cost_model.cost(h, total);
        for i in 0..n {
            if loads[i][h] > 0.0 {
                bills[i] += loads[i][h] / total * cost;
            }
        }
    }
    Ok(BillVector { mechanism: Mechanism::HourlyProportional, bills })
}

/// Flat-price reference: each consumer pays `price` per kWh actually drawn
/// in the profile. Efficiency and fairness metrics downstream do not depend
/// on the price (it scales all bills equally).
pub fn bill_baseline(profile: &LoadProfile, price_per_kwh: f64) -> BillVector {
    let bills = profile
        .power
        .iter()
        .map(|block| price_per_kwh * block.iter().flatten().sum::<f64>())
        .collect();
    BillVector { mechanism: Mechanism::Baseline, bills }
}

/// Move on-peak load into off-peak hours, greedily per appliance.
///
/// Off-peak hours are visited in seeded-random order; within one, appliances
/// are processed in consumer-then-appliance order, draining their peak hours
/// in descending-load order until the off-peak cap is hit or no movable
/// on-peak load remains. Hourly bounds stay exactly satisfied and each
/// appliance's energy is conserved.
pub fn greedy_offpeak_shift(profile: &LoadProfile, s: &Scenario, seed: u64) -> Result<LoadProfile> {
    check_profile(profile, s)?;
    let mut out = profile.clone();
    let mut order = s.offpeak_hours();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let peak: Vec<usize> = s.peak_hours.iter().copied().filter(|&h| h < s.num_hours()).collect();

    for &h_off in &order {
        for (n, consumer) in s.consumers.iter().enumerate() {
            for (a, app) in consumer.appliances.iter().enumerate() {
                let x = &mut out.power[n][a];
                let mut room = app.max_power[h_off] - x[h_off];
                if room <= 0.0 {
                    continue;
                }
                let mut sources: Vec<usize> = peak.iter().copied().filter(|&h| x[h] > app.min_power[h]).collect();
                sources.sort_by(|&i, &j| x[j].partial_cmp(&x[i]).unwrap().then(i.cmp(&j)));
                for h_peak in sources {
                    let movable = x[h_peak] - app.min_power[h_peak];
                    if movable <= 0.0 {
                        continue;
                    }
                    let amount = movable.min(room);
                    if amount >= movable {
                        x[h_peak] = app.min_power[h_peak];
                    } else {
                        x[h_peak] -= amount;
                    }
                    if amount >= room {
                        x[h_off] = app.max_power[h_off];
                        room = 0.0;
                    } else {
                        x[h_off] = (x[h_off] + amount).min(app.max_power[h_off]);
                        room = app.max_power[h_off] - x[h_off];
                    }
                    if room <= 0.0 {
                        break;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Two-tier tariff on a (shifted) profile: peak hours cost
/// `peak_price_ratio * offpeak_price` per kWh, the rest `offpeak_price`.
pub fn bill_peak_offpeak(shifted: &LoadProfile, s: &Scenario, offpeak_price: f64) -> Result<BillVector> {
    check_profile(shifted, s)?;
    let hours = s.num_hours();
    let peak_price = s.peak_price_ratio * offpeak_price;
    let bills = (0..s.num_consumers())
        .map(|n| {
            let load = shifted.consumer_load(n, hours);
            load.iter()
                .enumerate()
                .map(|(h, &v)| if s.peak_hours.contains(&h) { peak_price * v } else { offpeak_price * v })
                .sum()
        })
        .collect();
    Ok(BillVector { mechanism: Mechanism::PeakOffpeak, bills })
}

/// Consumer `n`'s bill in a game mechanism, given their own hourly load and
/// the fixed aggregate load of everyone else.
pub fn game_bill_against(
    s: &Scenario,
    n: usize,
    own: &[f64],
    others: &[f64],
    mechanism: GameMechanism,
) -> Result<f64> {
    let hours = s.num_hours();
    if own.len() != hours || others.len() != hours {
        return Err(Error::invalid("load vectors must match the horizon"));
    }
    let cm = &s.cost_model;
    match mechanism {
        GameMechanism::DailyProportional => {
            let total_energy = s.total_energy();
            if total_energy <= 0.0 {
                return Err(Error::domain("daily proportional billing needs positive total energy"));
            }
            let share = s.consumer_energy(n) / total_energy;
            Ok(share * (0..hours).map(|h| cm.cost(h, own[h] + others[h])).sum::<f64>())
        }
        GameMechanism::HourlyProportional => {
            if cm.has_constant_term() {
                return Err(Error::invalid(
                    "hourly proportional billing requires a0 = 0 at every hour (per-unit price undefined at zero load otherwise)",
                ));
            }
            Ok((0..hours)
                .map(|h| own[h] * (cm.a2[h] * (own[h] + others[h]) + cm.a1[h]))
                .sum())
        }
    }
}

/// Externalities of every consumer: the full-population optimal cost minus
/// each leave-one-out optimal cost, plus both sets of optima.
#[derive(Debug, Clone)]
pub struct Externalities {
    pub values: Vec<f64>,
    pub optimum_cost: f64,
    pub leave_one_out_costs: Vec<f64>,
    pub optimum: LoadProfile,
}

pub fn externalities(s: &Scenario, settings: &SolveSettings) -> Result<Externalities> {
    let full = social_optimum(s, settings)?;
    if !full.converged {
        return Err(Error::no_convergence(format!(
            "full-population optimum stopped at residual {}",
            full.residual
        )));
    }
    let mut values = Vec::with_capacity(s.num_consumers());
    let mut leave_one_out_costs = Vec::with_capacity(s.num_consumers());
    for n in 0..s.num_consumers() {
        let mut sub = s.clone();
        sub.consumers.remove(n);
        let id = &s.consumers[n].id;
        let out = social_optimum(&sub, settings)
            .map_err(|e| Error::invalid(format!("optimum without consumer '{id}': {e}")))?;
        if !out.converged {
            return Err(Error::no_convergence(format!(
                "optimum without consumer '{id}' stopped at residual {}",
                out.residual
            )));
        }
        let v = full.objective - out.objective;
        if v < -1e-6 * full.objective.abs().max(1.0) {
            return Err(Error::domain(format!(
                "negative externality {v} for consumer '{id}' exceeds numerical slack"
            )));
        }
        values.push(v);
        leave_one_out_costs.push(out.objective);
    }
    Ok(Externalities {
        values,
        optimum_cost: full.objective,
        leave_one_out_costs,
        optimum: full.solution,
    })
}

/// Raw VCG bills at a profile plus the renormalized fair reference.
#[derive(Debug, Clone)]
pub struct FairReference {
    pub vcg: BillVector,
    pub fair: BillVector,
}

/// VCG bills `b_n = sum_h C_h(l^h) - C*_without_n` at the given profile and
/// the fair reference `b^F_n = (V_n / sum_m V_m) * C*`, which always sums
/// to the optimal cost.
pub fn bill_fair_reference(
    profile: &LoadProfile,
    s: &Scenario,
    values: &[f64],
    optimum_cost: f64,
) -> Result<FairReference> {
    check_profile(profile, s)?;
    if values.len() != s.num_consumers() {
        return Err(Error::invalid("externality vector does not match consumer count"));
    }
    let v_sum: f64 = values.iter().sum();
    if v_sum <= 0.0 {
        return Err(Error::domain("externalities sum to zero: no flexible demand to price"));
    }
    let sc = s.cost_model.total_cost(&profile.aggregate_load(s.num_hours()));
    let vcg = values.iter().map(|&v| sc - (optimum_cost - v)).collect();
    let fair = values.iter().map(|&v| v / v_sum * optimum_cost).collect();
    Ok(FairReference {
        vcg: BillVector { mechanism: Mechanism::Vcg, bills: vcg },
        fair: BillVector { mechanism: Mechanism::FairReference, bills: fair },
    })
}
