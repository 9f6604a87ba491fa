//! Solve the social optimum of a small scheduling instance and show that
//! the marginal cost is equal across the hours that carry load.

use dsmsim::model::{Appliance, Consumer, CostModel, Horizon, Scenario};
use dsmsim::qpsolve::{social_optimum, SolveSettings};

fn main() -> dsmsim::Result<()> {
    let hours = 6;
    // Two consumers share a peaky cost curve; each must place 4 kWh.
    let cost = CostModel {
        a2: vec![0.5, 0.5, 0.5, 0.5, 0.5, 0.5],
        a1: vec![1.0, 1.0, 6.0, 6.0, 1.0, 1.0],
        a0: vec![0.0; hours],
    };
    let consumers = vec![
        Consumer::new("c1", vec![Appliance::capped("a", 4.0, 2.0, &[0, 1, 2, 3, 4, 5], hours)], hours),
        Consumer::new("c2", vec![Appliance::capped("a", 4.0, 2.0, &[0, 1, 2, 3, 4, 5], hours)], hours),
    ];
    let s = Scenario::new(Horizon::new(hours), consumers, cost);

    let settings = SolveSettings::default();
    let opt = social_optimum(&s, &settings)?;
    println!(
        "converged = {} after {} iterations, residual {:.2e}",
        opt.converged, opt.iterations, opt.residual
    );
    println!("social cost = {:.4} cents", opt.objective);

    let load = opt.solution.aggregate_load(hours);
    println!("\n hour  load    marginal cost");
    for (h, &l) in load.iter().enumerate() {
        let marginal = s.cost_model.marginal(h, l);
        println!("  {h:>2}   {l:>5.2}   {marginal:>6.3}");
    }
    println!("\nhours with load share one marginal price; the expensive");
    println!("midday hours stay empty until the cheap ones fill up.");
    Ok(())
}
