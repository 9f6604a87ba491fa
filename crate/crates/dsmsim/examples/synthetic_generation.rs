//! Generate a synthetic day set and check the realized aggregates against
//! the calibration targets.

use dsmsim::synth::{aggregate_stats, generate_synthetic, Archetype, SyntheticSpec};

fn main() -> dsmsim::Result<()> {
    let spec = SyntheticSpec {
        num_consumers: 30,
        num_days: 10,
        flexible_share: 0.258,
        mean_nonflexible_hourly: Some(31.3),
        daily_energy: None,
        archetypes: vec![Archetype::Ev, Archetype::Furnace],
        seed: 2016,
        start_date: "2016-01-02".into(),
    };
    let targets = spec.targets()?;
    let data = generate_synthetic(&spec)?;
    let stats = aggregate_stats(&data.days);

    println!("target daily energy    {:>8.1} kWh   realized {:>8.1}", targets.daily_energy, stats.mean_daily_energy);
    println!("target flexible share  {:>8.3}       realized {:>8.3}", targets.flexible_share, stats.flexible_share);
    println!(
        "target mean hourly NF  {:>8.1} kWh   realized {:>8.1}",
        targets.nonflexible_daily / 24.0,
        stats.mean_nonflexible_hourly
    );

    let day = &data.days[0];
    println!("\n{} ({:?}), aggregate nonflexible load:", day.date, day.day_type);
    let agg = day.scenario.aggregate_nonflexible();
    let max = agg.iter().cloned().fold(0.0, f64::max);
    for (h, v) in agg.iter().enumerate() {
        let bar = "#".repeat((v / max * 40.0).round() as usize);
        println!("  {h:>2} {v:>6.1}  {bar}");
    }
    println!("\nhistory rows: {}, calendar days: {}", data.history.len(), data.calendar.entries.len());
    Ok(())
}
