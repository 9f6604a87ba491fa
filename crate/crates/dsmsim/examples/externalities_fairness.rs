//! Externalities, the reference bills they induce, and the fairness index
//! of the two game mechanisms.
//!
//! The externality of a household is the system cost its presence adds at
//! the optimum. A constrained household that can only consume on loaded
//! hours has a larger externality per kWh than a flexible one.

use dsmsim::billing::{bill_fair_reference, externalities, GameMechanism};
use dsmsim::dynamics::{run_brd, BrdSettings};
use dsmsim::metrics::fairness_index;
use dsmsim::model::{Appliance, Consumer, CostModel, Horizon, Scenario};
use dsmsim::qpsolve::{initial_profile, SolveSettings};

fn main() -> dsmsim::Result<()> {
    let hours = 6;
    let all: Vec<usize> = (0..hours).collect();
    let consumers = vec![
        // Free to move anywhere.
        Consumer::new("flexible", vec![Appliance::capped("a", 5.0, 2.0, &all, hours)], hours),
        // Pinned to two hours that the flexible one also wants.
        Consumer::new("rigid", vec![Appliance::capped("a", 3.0, 1.5, &[0, 1], hours)], hours),
    ];
    let s = Scenario::new(
        Horizon::new(hours),
        consumers,
        CostModel::uniform(hours, 0.5, 1.0, 0.0),
    );

    let solve = SolveSettings::default();
    let ext = externalities(&s, &solve)?;
    println!("optimal social cost = {:.4}", ext.optimum_cost);
    for (n, c) in s.consumers.iter().enumerate() {
        println!(
            "{:<9} energy {:>4.1} kWh  externality {:>7.4} ({:.3} per kWh)",
            c.id,
            s.consumer_energy(n),
            ext.values[n],
            ext.values[n] / s.consumer_energy(n),
        );
    }

    let start = initial_profile(&s)?;
    let brd = BrdSettings::default();
    println!();
    for mechanism in [GameMechanism::DailyProportional, GameMechanism::HourlyProportional] {
        let eq = run_brd(&s, mechanism, &brd, &solve, &start)?;
        let refs = bill_fair_reference(&eq.profile, &s, &ext.values, ext.optimum_cost)?;
        let f = fairness_index(&eq.bills, &ext.values)?;
        println!("{mechanism:?}: F = {f:.4}");
        println!("  bills      {:?}", round2(&eq.bills.bills));
        println!("  vcg        {:?}", round2(&refs.vcg.bills));
        println!("  fair ref   {:?}", round2(&refs.fair.bills));
    }
    Ok(())
}

fn round2(xs: &[f64]) -> Vec<f64> {
    xs.iter().map(|x| (x * 100.0).round() / 100.0).collect()
}
