//! Recover appliance scheduling constraints from metered history.

use dsmsim::model::{derive_constraints, Calendar, DayType, HistoryRecord};

fn rec(consumer: &str, appliance: &str, date: &str, hour: usize, kwh: f64) -> HistoryRecord {
    HistoryRecord {
        consumer_id: consumer.into(),
        appliance_id: appliance.into(),
        date: date.into(),
        hour,
        kwh,
    }
}

fn main() -> dsmsim::Result<()> {
    // Two observed weekdays and one weekend day. The dryer never runs on
    // weekdays, so a weekday derivation reports it instead of inventing
    // constraints for it.
    let history = vec![
        rec("c1", "ev", "2016-01-04", 22, 3.0),
        rec("c1", "ev", "2016-01-04", 23, 1.4),
        rec("c1", "ev", "2016-01-05", 21, 2.2),
        rec("c1", "ev", "2016-01-09", 10, 3.3), // weekend habit, caps still count
        rec("c1", "dryer", "2016-01-09", 15, 2.0),
    ];
    let calendar = Calendar::default(); // dates classify by weekday rule

    let derived = derive_constraints(&history, &calendar, DayType::Weekday, 24)?;
    for (consumer, appliances) in &derived.appliances {
        for a in appliances {
            println!("{consumer}/{}", a.id);
            println!("  energy/day  {:.2} kWh (mean over the 2 weekdays)", a.energy);
            println!("  usable hours {:?}", a.available_hours());
            println!("  cap          {:.1} kW (largest draw seen anywhere)", a.max_power.iter().cloned().fold(0.0, f64::max));
        }
    }
    for w in &derived.warnings {
        println!("skipped: {w:?}");
    }
    Ok(())
}
