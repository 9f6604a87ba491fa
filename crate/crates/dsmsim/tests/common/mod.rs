//! Shared helpers for the integration tests: seeded instance generators,
//! an independent zoom grid search used as an optimization oracle, and
//! straightforward reimplementations of the bill formulas.
//!
//! Everything here is deliberately naive; agreement between these and the
//! library is the point of the tests that use them.

#![allow(dead_code)]

use dsmsim::model::{Appliance, Consumer, CostModel, Horizon, LoadProfile, Scenario};
use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

// ----------------------------------------------------------- tiny instances

/// A tiny scheduling instance the grid oracle can handle: up to 2
/// consumers, at most 3 appliances in total, at most 3 hours, zero lower
/// bounds, no nonflexible load, no constant cost term.
pub fn tiny_scenario(rng: &mut ChaCha8Rng) -> Scenario {
    let hours = rng.random_range(2..=3usize);
    let n = rng.random_range(1..=2usize);
    let mut total_apps = 0;
    let consumers: Vec<Consumer> = (0..n)
        .map(|i| {
            let max_apps = if total_apps >= 2 { 1 } else { 2 };
            let apps = rng.random_range(1..=max_apps);
            total_apps += apps;
            let appliances = (0..apps)
                .map(|a| {
                    let hi: Vec<f64> = (0..hours).map(|_| rng.random_range(0.6..1.5)).collect();
                    let cap_total: f64 = hi.iter().sum();
                    let energy = cap_total * rng.random_range(0.25..0.7);
                    Appliance {
                        id: format!("a{a}"),
                        energy,
                        min_power: vec![0.0; hours],
                        max_power: hi,
                    }
                })
                .collect();
            Consumer::new(format!("c{i}"), appliances, hours)
        })
        .collect();
    let cost = CostModel {
        a2: (0..hours).map(|_| rng.random_range(0.1..1.0)).collect(),
        a1: (0..hours).map(|_| rng.random_range(0.0..2.0)).collect(),
        a0: vec![0.0; hours],
    };
    Scenario::new(Horizon::new(hours), consumers, cost)
}

/// A desk-scale random scenario: N consumers, 24 hours, random plug-in
/// windows and caps, zero lower bounds, no constant cost term.
pub fn random_scenario(rng: &mut ChaCha8Rng, n: usize) -> Scenario {
    let hours = 24;
    let consumers: Vec<Consumer> = (0..n)
        .map(|i| {
            let apps = rng.random_range(1..=3usize);
            let appliances = (0..apps)
                .map(|a| {
                    let mut window: Vec<usize> =
                        (0..hours).filter(|_| rng.random_range(0.0..1.0) < 0.5).collect();
                    while window.len() < 4 {
                        let h = rng.random_range(0..hours);
                        if !window.contains(&h) {
                            window.push(h);
                        }
                    }
                    window.sort_unstable();
                    let cap = rng.random_range(0.5..3.0);
                    let energy = cap * window.len() as f64 * rng.random_range(0.1..0.6);
                    Appliance::capped(format!("a{a}"), energy, cap, &window, hours)
                })
                .collect();
            Consumer::new(format!("c{i:02}"), appliances, hours)
        })
        .collect();
    let cost = CostModel::uniform(
        hours,
        rng.random_range(0.01..0.2),
        rng.random_range(0.0..10.0),
        0.0,
    );
    Scenario::new(Horizon::new(hours), consumers, cost)
}

/// Random feasible placement for one appliance: fill hours in random
/// order, then smooth with random feasible transfers.
pub fn sample_feasible(
    rng: &mut ChaCha8Rng,
    energy: f64,
    lo: &[f64],
    hi: &[f64],
) -> Vec<f64> {
    let hours = lo.len();
    let mut x = lo.to_vec();
    let mut left = energy - lo.iter().sum::<f64>();
    let mut order: Vec<usize> = (0..hours).collect();
    for i in (1..hours).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    for &h in &order {
        if left <= 0.0 {
            break;
        }
        let take = left.min(hi[h] - lo[h]);
        x[h] += take;
        left -= take;
    }
    for _ in 0..20 {
        let from = rng.random_range(0..hours);
        let to = rng.random_range(0..hours);
        if from == to {
            continue;
        }
        let room = (x[from] - lo[from]).min(hi[to] - x[to]);
        if room > 0.0 {
            let delta = rng.random_range(0.0..room);
            x[from] -= delta;
            x[to] += delta;
        }
    }
    x
}

/// Random feasible profile for a whole scenario.
pub fn sample_profile(rng: &mut ChaCha8Rng, s: &Scenario) -> LoadProfile {
    let mut profile = LoadProfile::zeros(s);
    for (n, c) in s.consumers.iter().enumerate() {
        for (a, app) in c.appliances.iter().enumerate() {
            profile.power[n][a] = sample_feasible(rng, app.energy, &app.min_power, &app.max_power);
        }
    }
    profile
}

// ----------------------------------------------------------- grid oracle

/// Zoomed exhaustive grid search over the unit box. Evaluates `f` on a
/// `points`-per-axis lattice, recenters the box on the best point seen
/// with a width that still covers the neighbor cells, and repeats.
pub fn zoom_search<F>(dims: usize, points: usize, passes: usize, f: F) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    assert!(points >= 3);
    if dims == 0 {
        let value = f(&[]);
        return (Vec::new(), value);
    }
    let mut centers = vec![0.5; dims];
    let mut width = 1.0f64;
    let mut best = centers.clone();
    let mut best_value = f(&best);

    for _ in 0..passes {
        let axes: Vec<Vec<f64>> = (0..dims)
            .map(|d| {
                let lo = (centers[d] - 0.5 * width).max(0.0);
                let hi = (centers[d] + 0.5 * width).min(1.0);
                (0..points)
                    .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
                    .collect()
            })
            .collect();
        let mut idx = vec![0usize; dims];
        let mut point = vec![0.0; dims];
        loop {
            for d in 0..dims {
                point[d] = axes[d][idx[d]];
            }
            let value = f(&point);
            if value < best_value {
                best_value = value;
                best = point.clone();
            }
            let mut d = 0;
            loop {
                idx[d] += 1;
                if idx[d] < points {
                    break;
                }
                idx[d] = 0;
                d += 1;
                if d == dims {
                    break;
                }
            }
            if d == dims {
                break;
            }
        }
        centers.clone_from(&best);
        width *= 3.0 / points as f64;
    }
    (best, best_value)
}

/// Map a unit-box point to a feasible appliance load. Hour j takes
/// position `u[j]` inside the interval of loads that keep the remaining
/// energy reachable by the later hours; the last hour takes the exact
/// remainder. Every point of the box maps to a feasible load and every
/// feasible load is hit by some point, so a lattice over the box never
/// wastes an evaluation on an infeasible placement.
pub fn stick_point(app: &Appliance, u: &[f64]) -> Vec<f64> {
    let hours = app.max_power.len();
    let mut x = Vec::with_capacity(hours);
    let mut rem = app.energy;
    for (j, &u_j) in u.iter().enumerate().take(hours - 1) {
        let hi_rest: f64 = app.max_power[j + 1..].iter().sum();
        let lo_rest: f64 = app.min_power[j + 1..].iter().sum();
        let lo = app.min_power[j].max(rem - hi_rest);
        let hi = app.max_power[j].min(rem - lo_rest);
        let v = lo + u_j * (hi - lo).max(0.0);
        x.push(v);
        rem -= v;
    }
    x.push(rem);
    x
}

fn free_dims(apps: &[&Appliance]) -> usize {
    apps.iter().map(|a| a.max_power.len() - 1).sum()
}

/// Sum the stick-broken loads of a set of appliances into one vector.
fn accumulate(apps: &[&Appliance], u: &[f64], hours: usize) -> Vec<f64> {
    let mut load = vec![0.0; hours];
    let mut i = 0;
    for app in apps {
        let take = app.max_power.len() - 1;
        let x = stick_point(app, &u[i..i + take]);
        i += take;
        for h in 0..hours {
            load[h] += x[h];
        }
    }
    load
}

pub fn total_cost_direct(s: &Scenario, load: &[f64]) -> f64 {
    load.iter()
        .enumerate()
        .map(|(h, &l)| s.cost_model.a2[h] * l * l + s.cost_model.a1[h] * l + s.cost_model.a0[h])
        .sum()
}

/// Grid-search the social optimum of a tiny scenario.
pub fn grid_social_optimum(s: &Scenario, points: usize, passes: usize) -> f64 {
    let apps: Vec<&Appliance> =
        s.consumers.iter().flat_map(|c| c.appliances.iter()).collect();
    let hours = s.num_hours();
    let objective =
        |u: &[f64]| total_cost_direct(s, &accumulate(&apps, u, hours));
    zoom_search(free_dims(&apps), points, passes, objective).1
}

/// Independent bill formulas, straight from their definitions.
pub fn dp_bill_direct(s: &Scenario, n: usize, own: &[f64], others: &[f64]) -> f64 {
    let total_energy: f64 = (0..s.num_consumers()).map(|m| s.consumer_energy(m)).sum();
    let load: Vec<f64> = own.iter().zip(others).map(|(a, b)| a + b).collect();
    s.consumer_energy(n) / total_energy * total_cost_direct(s, &load)
}

pub fn hp_bill_direct(s: &Scenario, own: &[f64], others: &[f64]) -> f64 {
    let mut bill = 0.0;
    for h in 0..s.num_hours() {
        let l = own[h] + others[h];
        if own[h] > 0.0 && l > 0.0 {
            let c = s.cost_model.a2[h] * l * l + s.cost_model.a1[h] * l;
            bill += own[h] / l * c;
        }
    }
    bill
}

/// Grid-search one consumer's best response bill given the others' load.
pub fn grid_best_response(
    s: &Scenario,
    n: usize,
    others: &[f64],
    hourly: bool,
    points: usize,
    passes: usize,
) -> f64 {
    let apps: Vec<&Appliance> = s.consumers[n].appliances.iter().collect();
    let hours = s.num_hours();
    let objective = |u: &[f64]| {
        let own = accumulate(&apps, u, hours);
        if hourly {
            hp_bill_direct(s, &own, others)
        } else {
            dp_bill_direct(s, n, &own, others)
        }
    };
    zoom_search(free_dims(&apps), points, passes, objective).1
}

/// Remove one consumer, keeping ids and cost.
pub fn without_consumer(s: &Scenario, n: usize) -> Scenario {
    let mut out = s.clone();
    out.consumers.remove(n);
    out
}
