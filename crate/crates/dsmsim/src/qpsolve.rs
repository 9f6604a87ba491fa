//! Convex optimization kernel.
//!
//! Every solve in this crate minimizes a per-hour quadratic of some block's
//! hourly totals over a product of appliance feasible sets
//! `{x : sum_h x[h] = E, min_power <= x <= max_power}`. The projection onto
//! one appliance's set is computed exactly by bisection on the scalar dual
//! multiplier of the energy equality, and the block objective is minimized
//! by projected gradient descent with a spectral (Barzilai-Borwein) step and
//! Armijo backtracking.

use crate::billing::GameMechanism;
use crate::error::{Error, Result};
use crate::model::{Appliance, LoadProfile, Scenario};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_ITERATIONS: usize = 10_000;

const ARMIJO_SLOPE: f64 = 1e-4;
const MIN_BACKTRACK: f64 = 1e-12;
const BB_STEP_RANGE: (f64, f64) = (1e-12, 1e12);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepRule {
    /// Constant step 1/L derived from the objective's curvature.
    Fixed,
    /// Spectral step with monotone Armijo backtracking (default).
    Backtracking,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    /// Stopping threshold on the projected-gradient residual, relative to
    /// `1 + max |grad|` at the iterate.
    pub tolerance: f64,
    pub max_iterations: usize,
    pub step_rule: StepRule,
}

impl Default for SolveSettings {
    fn default() -> Self {
        SolveSettings {
            tolerance: DEFAULT_TOLERANCE,
            max_iterations: DEFAULT_MAX_ITERATIONS,
            step_rule: StepRule::Backtracking,
        }
    }
}

impl SolveSettings {
    pub fn check(&self) -> Result<()> {
        if self.tolerance <= 0.0 || self.tolerance.is_nan() {
            return Err(Error::invalid(format!("tolerance {} must be positive", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("max_iterations must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveOutcome<T> {
    pub solution: T,
    pub objective: f64,
    pub iterations: usize,
    /// Largest absolute entry of `x - P(x - grad f(x))` at exit.
    pub residual: f64,
    pub converged: bool,
}

impl<T> SolveOutcome<T> {
    fn map<U>(self, f: impl FnOnce(T) -> U) -> SolveOutcome<U> {
        SolveOutcome {
            solution: f(self.solution),
            objective: self.objective,
            iterations: self.iterations,
            residual: self.residual,
            converged: self.converged,
        }
    }
}

/// Exact Euclidean projection of `v` onto
/// `{x : sum_h x[h] = energy, min_power <= x <= max_power}`.
///
/// The optimality system is `x(t) = clip(v - t, min_power, max_power)` with
/// a scalar `t` chosen so the energy equality holds; `sum x(t)` is monotone
/// in `t`, so `t` is found by bisection and then polished to the exact root
/// for the active set the bisection identified.
pub fn project_appliance(v: &[f64], energy: f64, min_power: &[f64], max_power: &[f64]) -> Result<Vec<f64>> {
    let hours = v.len();
    if min_power.len() != hours || max_power.len() != hours {
        return Err(Error::invalid("projection: bound vectors must match the value vector length"));
    }
    if !energy.is_finite() {
        return Err(Error::invalid(format!("projection: energy {energy} is not finite")));
    }
    for h in 0..hours {
        if !v[h].is_finite() || !min_power[h].is_finite() || !max_power[h].is_finite() {
            return Err(Error::invalid(format!("projection: non-finite input at hour {h}")));
        }
        if min_power[h] > max_power[h] {
            return Err(Error::invalid(format!(
                "projection: min_power[{h}] = {} exceeds max_power[{h}] = {}",
                min_power[h], max_power[h]
            )));
        }
    }
    let lo_sum: f64 = min_power.iter().sum();
    let hi_sum: f64 = max_power.iter().sum();
    let slack = 1e-9 * energy.abs().max(1.0);
    if energy < lo_sum - slack || energy > hi_sum + slack {
        return Err(Error::invalid(format!(
            "projection infeasible: energy {energy} outside bound budget [{lo_sum}, {hi_sum}]"
        )));
    }
    if hours == 0 {
        return Ok(Vec::new());
    }

    let sum_at = |t: f64| -> f64 {
        (0..hours).map(|h| (v[h] - t).clamp(min_power[h], max_power[h])).sum()
    };

    // Bracket: at t_lo everything clips to max_power (sum >= energy), at
    // t_hi everything clips to min_power (sum <= energy).
    let mut t_lo = (0..hours).map(|h| v[h] - max_power[h]).fold(f64::INFINITY, f64::min);
    let mut t_hi = (0..hours).map(|h| v[h] - min_power[h]).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..200 {
        let mid = 0.5 * (t_lo + t_hi);
        if sum_at(mid) > energy {
            t_lo = mid;
        } else {
            t_hi = mid;
        }
        if t_hi - t_lo <= 1e-16 * (1.0 + t_lo.abs().max(t_hi.abs())) {
            break;
        }
    }
    let t = 0.5 * (t_lo + t_hi);
    let mut x: Vec<f64> = (0..hours).map(|h| (v[h] - t).clamp(min_power[h], max_power[h])).collect();

    // Polish: with the active set fixed, the exact multiplier solves the
    // equality in closed form. Accept it only if it keeps the free
    // coordinates inside their boxes (i.e. the active-set guess was right).
    let mut clipped_sum = 0.0;
    let mut free_v_sum = 0.0;
    let mut free = Vec::with_capacity(hours);
    for h in 0..hours {
        let raw = v[h] - t;
        if raw <= min_power[h] {
            clipped_sum += min_power[h];
        } else if raw >= max_power[h] {
            clipped_sum += max_power[h];
        } else {
            free.push(h);
            free_v_sum += v[h];
        }
    }
    if !free.is_empty() {
        let t_star = (free_v_sum + clipped_sum - energy) / free.len() as f64;
        let ok = free.iter().all(|&h| {
            let val = v[h] - t_star;
            val >= min_power[h] && val <= max_power[h]
        });
        if ok {
            for &h in &free {
                x[h] = v[h] - t_star;
            }
        }
    }

    let total: f64 = x.iter().sum();
    if (total - energy).abs() > 1e-9 * energy.abs().max(1.0) {
        return Err(Error::no_convergence(format!(
            "projection residual {} on energy equality", total - energy
        )));
    }
    Ok(x)
}

fn project_for(app: &Appliance, v: &[f64]) -> Result<Vec<f64>> {
    project_appliance(v, app.energy, &app.min_power, &app.max_power)
        .map_err(|e| Error::invalid(format!("appliance '{}': {e}", app.id)))
}

/// Separable quadratic of a block's hourly totals:
/// `f(x) = sum_h p2[h] y[h]^2 + p1[h] y[h] + p0` with `y[h] = sum_a x[a][h]`.
#[derive(Debug, Clone)]
pub(crate) struct HourQuad {
    pub p2: Vec<f64>,
    pub p1: Vec<f64>,
    pub p0: f64,
}

impl HourQuad {
    fn value(&self, y: &[f64]) -> f64 {
        let mut acc = self.p0;
        for (h, &load) in y.iter().enumerate() {
            acc += (self.p2[h] * load + self.p1[h]) * load;
        }
        acc
    }

    fn gradient(&self, y: &[f64], g: &mut [f64]) {
        for (h, &load) in y.iter().enumerate() {
            g[h] = 2.0 * self.p2[h] * load + self.p1[h];
        }
    }
}

fn totals(x: &[Vec<f64>], hours: usize) -> Vec<f64> {
    let mut y = vec![0.0; hours];
    for row in x {
        for (h, v) in row.iter().enumerate() {
            y[h] += v;
        }
    }
    y
}

/// Minimize an [`HourQuad`] over the product of the given appliances'
/// feasible sets, starting from `start` (projected first).
pub(crate) fn minimize_block(
    quad: &HourQuad,
    apps: &[&Appliance],
    start: &[Vec<f64>],
    settings: &SolveSettings,
) -> Result<SolveOutcome<Vec<Vec<f64>>>> {
    settings.check()?;
    let hours = quad.p2.len();
    if quad.p1.len() != hours {
        return Err(Error::invalid("objective coefficient lengths differ"));
    }
    if start.len() != apps.len() {
        return Err(Error::invalid("start profile does not match appliance count"));
    }
    let max_p2 = quad.p2.iter().fold(0.0_f64, |m, &v| m.max(v));
    if apps.is_empty() {
        return Ok(SolveOutcome {
            solution: Vec::new(),
            objective: quad.value(&vec![0.0; hours]),
            iterations: 0,
            residual: 0.0,
            converged: true,
        });
    }
    if max_p2 <= 0.0 || max_p2.is_nan() || quad.p2.iter().any(|&v| v < 0.0) {
        return Err(Error::domain("block objective must be convex with positive curvature somewhere"));
    }

    let mut x: Vec<Vec<f64>> = Vec::with_capacity(apps.len());
    for (app, row) in apps.iter().zip(start) {
        if row.len() != hours {
            return Err(Error::invalid(format!("start row for appliance '{}' has wrong length", app.id)));
        }
        x.push(project_for(app, row)?);
    }

    let lipschitz = 2.0 * apps.len() as f64 * max_p2;
    let fixed_step = 1.0 / lipschitz;
    let mut y = totals(&x, hours);
    let mut f = quad.value(&y);
    let mut g = vec![0.0; hours];
    let mut alpha = fixed_step;

    let mut steps = 0;
    let mut residual = f64::INFINITY;
    let mut converged = false;
    let mut target = vec![0.0; hours];

    for _ in 0..settings.max_iterations {
        quad.gradient(&y, &mut g);

        residual = 0.0;
        for (app, row) in apps.iter().zip(&x) {
            for h in 0..hours {
                target[h] = row[h] - g[h];
            }
            let proj = project_for(app, &target)?;
            for h in 0..hours {
                residual = residual.max((row[h] - proj[h]).abs());
            }
        }
        // The residual map displaces by a gradient's worth of load, so the
        // test is scaled by the gradient magnitude; an absolute threshold
        // on steep objectives would sit below what f64 arithmetic in the
        // objective can certify.
        let scale = 1.0 + g.iter().fold(0.0_f64, |m, &v| m.max(v.abs()));
        if residual <= settings.tolerance * scale {
            converged = true;
            break;
        }

        let step = match settings.step_rule {
            StepRule::Fixed => fixed_step,
            StepRule::Backtracking => alpha,
        };
        // d = P(x - step * g) - x, evaluated per appliance row.
        let mut d: Vec<Vec<f64>> = Vec::with_capacity(apps.len());
        let mut dy = vec![0.0; hours];
        let mut d_sq = 0.0;
        for (app, row) in apps.iter().zip(&x) {
            for h in 0..hours {
                target[h] = row[h] - step * g[h];
            }
            let proj = project_for(app, &target)?;
            let mut drow = Vec::with_capacity(hours);
            for h in 0..hours {
                let diff = proj[h] - row[h];
                dy[h] += diff;
                d_sq += diff * diff;
                drow.push(diff);
            }
            d.push(drow);
        }
        let slope: f64 = (0..hours).map(|h| g[h] * dy[h]).sum();
        if d_sq == 0.0 {
            // Stationary for this step size, hence stationary overall.
            converged = residual <= settings.tolerance * scale;
            break;
        }

        let mut lambda = 1.0;
        if settings.step_rule == StepRule::Backtracking {
            loop {
                let trial: f64 = quad.value(&(0..hours).map(|h| y[h] + lambda * dy[h]).collect::<Vec<_>>());
                if trial <= f + ARMIJO_SLOPE * lambda * slope {
                    break;
                }
                if lambda <= MIN_BACKTRACK {
                    lambda = 0.0;
                    break;
                }
                lambda *= 0.5;
            }
        }
        if lambda == 0.0 {
            // The spectral direction made no acceptable progress (it can
            // point along a curvature-free appliance swap). Restart from
            // the plain 1/L step, which always passes the Armijo test.
            if step == fixed_step {
                break;
            }
            alpha = fixed_step;
            continue;
        }

        for (row, drow) in x.iter_mut().zip(&d) {
            for h in 0..hours {
                row[h] += lambda * drow[h];
            }
        }
        y = totals(&x, hours);
        f = quad.value(&y);
        steps += 1;

        // Spectral step for the next iteration: with s = lambda d and
        // grad difference 2 p2 (lambda dy), the BB1 ratio reduces to
        // d_sq / (2 sum_h p2 dy^2), independent of lambda. The true ratio
        // never drops below 1/L, so the floor only strips roundoff.
        let curvature: f64 = (0..hours).map(|h| quad.p2[h] * dy[h] * dy[h]).sum();
        if curvature > 0.0 {
            alpha = (d_sq / (2.0 * curvature)).clamp(fixed_step, BB_STEP_RANGE.1);
        } else {
            alpha = fixed_step;
        }
    }

    Ok(SolveOutcome {
        solution: x,
        objective: f,
        iterations: steps,
        residual,
        converged,
    })
}

/// Deterministic starting profile: each appliance's energy spread over its
/// available hours proportionally to the hourly cap, then projected.
pub fn initial_profile(scenario: &Scenario) -> Result<LoadProfile> {
    let hours = scenario.num_hours();
    let mut profile = LoadProfile::zeros(scenario);
    for (n, consumer) in scenario.consumers.iter().enumerate() {
        for (a, app) in consumer.appliances.iter().enumerate() {
            let weight: f64 = app.max_power.iter().sum();
            let v: Vec<f64> = if weight > 0.0 {
                app.max_power.iter().map(|&w| app.energy * w / weight).collect()
            } else {
                vec![0.0; hours]
            };
            profile.power[n][a] = project_for(app, &v)?;
        }
    }
    Ok(profile)
}

fn flatten_apps(scenario: &Scenario) -> Vec<&Appliance> {
    scenario.consumers.iter().flat_map(|c| c.appliances.iter()).collect()
}

fn profile_rows(profile: &LoadProfile) -> Vec<Vec<f64>> {
    profile.power.iter().flat_map(|block| block.iter().cloned()).collect()
}

fn rows_to_profile(scenario: &Scenario, rows: Vec<Vec<f64>>) -> LoadProfile {
    let mut iter = rows.into_iter();
    LoadProfile {
        power: scenario
            .consumers
            .iter()
            .map(|c| (0..c.appliances.len()).map(|_| iter.next().expect("row count")).collect())
            .collect(),
    }
}

/// Minimize the total generation cost `sum_h C_h(l^h)` over all appliances
/// of all consumers.
pub fn social_optimum(scenario: &Scenario, settings: &SolveSettings) -> Result<SolveOutcome<LoadProfile>> {
    social_optimum_from(scenario, &initial_profile(scenario)?, settings)
}

/// Same as [`social_optimum`] but warm-started from a given profile.
pub fn social_optimum_from(
    scenario: &Scenario,
    start: &LoadProfile,
    settings: &SolveSettings,
) -> Result<SolveOutcome<LoadProfile>> {
    if !start.matches_shape(scenario) {
        return Err(Error::invalid("start profile does not match scenario shape"));
    }
    let cm = &scenario.cost_model;
    let quad = HourQuad {
        p2: cm.a2.clone(),
        p1: cm.a1.clone(),
        p0: cm.a0.iter().sum(),
    };
    let apps = flatten_apps(scenario);
    let rows = profile_rows(start);
    let out = minimize_block(&quad, &apps, &rows, settings)?;
    Ok(out.map(|rows| rows_to_profile(scenario, rows)))
}

fn best_response_quad(
    scenario: &Scenario,
    n: usize,
    others_load: &[f64],
    mechanism: GameMechanism,
) -> Result<HourQuad> {
    let hours = scenario.num_hours();
    if others_load.len() != hours {
        return Err(Error::invalid("others_load length does not match horizon"));
    }
    if let Some(h) = others_load.iter().position(|&v| v < 0.0) {
        return Err(Error::invalid(format!("others_load negative at hour {h}")));
    }
    let cm = &scenario.cost_model;
    match mechanism {
        GameMechanism::DailyProportional => {
            let total = scenario.total_energy();
            if total <= 0.0 {
                return Err(Error::domain("daily proportional billing needs positive total energy"));
            }
            let share = scenario.consumer_energy(n) / total;
            let mut p1 = Vec::with_capacity(hours);
            let mut p0 = 0.0;
            for (h, &other) in others_load.iter().enumerate() {
                p1.push(share * (2.0 * cm.a2[h] * other + cm.a1[h]));
                p0 += share * cm.cost(h, other);
            }
            Ok(HourQuad {
                p2: cm.a2.iter().map(|&a| share * a).collect(),
                p1,
                p0,
            })
        }
        GameMechanism::HourlyProportional => {
            if cm.has_constant_term() {
                return Err(Error::invalid(
                    "hourly proportional billing requires a0 = 0 at every hour (per-unit price undefined at zero load otherwise)",
                ));
            }
            let p1 = others_load
                .iter()
                .enumerate()
                .map(|(h, &other)| cm.a2[h] * other + cm.a1[h])
                .collect();
            Ok(HourQuad {
                p2: cm.a2.clone(),
                p1,
                p0: 0.0,
            })
        }
    }
}

/// Consumer `n`'s cheapest feasible schedule against a fixed aggregate load
/// of the others. The outcome's objective is that consumer's bill.
pub fn best_response(
    scenario: &Scenario,
    n: usize,
    others_load: &[f64],
    mechanism: GameMechanism,
    settings: &SolveSettings,
) -> Result<SolveOutcome<Vec<Vec<f64>>>> {
    let consumer = scenario
        .consumers
        .get(n)
        .ok_or_else(|| Error::invalid(format!("no consumer with index {n}")))?;
    let hours = scenario.num_hours();
    let start: Vec<Vec<f64>> = consumer
        .appliances
        .iter()
        .map(|app| {
            let weight: f64 = app.max_power.iter().sum();
            if weight > 0.0 {
                app.max_power.iter().map(|&w| app.energy * w / weight).collect()
            } else {
                vec![0.0; hours]
            }
        })
        .collect();
    best_response_from(scenario, n, others_load, mechanism, &start, settings)
}

/// [`best_response`] warm-started from the consumer's current block.
pub fn best_response_from(
    scenario: &Scenario,
    n: usize,
    others_load: &[f64],
    mechanism: GameMechanism,
    start: &[Vec<f64>],
    settings: &SolveSettings,
) -> Result<SolveOutcome<Vec<Vec<f64>>>> {
    let consumer = scenario
        .consumers
        .get(n)
        .ok_or_else(|| Error::invalid(format!("no consumer with index {n}")))?;
    let quad = best_response_quad(scenario, n, others_load, mechanism)?;
    let apps: Vec<&Appliance> = consumer.appliances.iter().collect();
    minimize_block(&quad, &apps, start, settings)
}
