//! Run best response dynamics to a Nash equilibrium under both game
//! billing rules and check the equilibrium and its uniqueness condition.

use dsmsim::billing::GameMechanism;
use dsmsim::dynamics::{check_uniqueness, run_brd, verify_nash, BrdSettings};
use dsmsim::model::{Appliance, Consumer, CostModel, Horizon, Scenario};
use dsmsim::qpsolve::{initial_profile, social_optimum, SolveSettings};

fn main() -> dsmsim::Result<()> {
    let hours = 8;
    let all: Vec<usize> = (0..hours).collect();
    let consumers: Vec<Consumer> = (1..=4)
        .map(|i| {
            let energy = 2.0 + i as f64;
            Consumer::new(
                format!("c{i}"),
                vec![Appliance::capped("load", energy, 2.5, &all, hours)],
                hours,
            )
        })
        .collect();
    let s = Scenario::new(
        Horizon::new(hours),
        consumers,
        CostModel::uniform(hours, 0.04, 8.0, 0.0),
    );

    let solve = SolveSettings::default();
    let brd = BrdSettings::default();
    let start = initial_profile(&s)?;
    let optimum = social_optimum(&s, &solve)?;

    for mechanism in [GameMechanism::DailyProportional, GameMechanism::HourlyProportional] {
        let eq = run_brd(&s, mechanism, &brd, &solve, &start)?;
        let check = verify_nash(&eq.profile, &s, mechanism, brd.epsilon, &solve)?;
        let uniq = check_uniqueness(&eq.profile, &s)?;
        let sc: f64 = s.cost_model.total_cost(&eq.aggregate_load);

        println!("{:?}", mechanism);
        println!("  rounds = {}, best responses = {}", eq.rounds, eq.total_best_responses);
        println!("  nash verified = {}, uniqueness condition = {}", check.is_equilibrium, uniq.passes);
        println!("  social cost = {:.6} (optimum {:.6})", sc, optimum.objective);
        println!("  bills: {:?}", eq.bills.bills.iter().map(|b| (b * 100.0).round() / 100.0).collect::<Vec<_>>());
        println!();
    }
    Ok(())
}
