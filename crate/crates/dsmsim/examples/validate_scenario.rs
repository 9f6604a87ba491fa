//! Build a scenario in code, validate it, then break it and show the
//! violation report.

use dsmsim::model::{validate_scenario, Appliance, Consumer, CostModel, Horizon, Scenario};

fn main() {
    let hours = 24;
    let ev = Appliance::capped("ev", 10.0, 3.3, &[0, 1, 2, 3, 4, 5, 20, 21, 22, 23], hours);
    let mut nonflexible = vec![0.4; hours];
    nonflexible[8] = 1.2;
    nonflexible[19] = 1.5;
    let consumer = Consumer { id: "house-1".into(), appliances: vec![ev], nonflexible };

    let scenario = Scenario::new(
        Horizon::new(hours),
        vec![consumer],
        CostModel::uniform(hours, 0.04, 8.0, 0.1),
    );
    let violations = validate_scenario(&scenario);
    println!("valid scenario: {} violations", violations.len());

    // Now ask for more energy than the plug-in window can deliver.
    let mut broken = scenario.clone();
    broken.consumers[0].appliances[0].energy = 60.0;
    // And a nonsense tariff on top.
    broken.peak_price_ratio = 0.2;

    println!("\nbroken scenario:");
    for v in validate_scenario(&broken) {
        println!("  {v}");
    }
}
