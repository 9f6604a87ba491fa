//! End to end: generate synthetic data on disk, run the full mechanism
//! comparison over it through the same code path as the command line
//! tool, and print where everything landed.

use std::fs;

use dsmsim::pipeline::{load_run_config, run_compare, run_generate, CliOverrides};
use dsmsim::synth::{Archetype, SyntheticSpec};

fn main() -> dsmsim::Result<()> {
    let root = std::env::temp_dir().join("dsmsim-full-day-example");
    let _ = fs::remove_dir_all(&root);
    fs::create_dir_all(&root).expect("temp dir");

    let spec = SyntheticSpec {
        num_consumers: 10,
        num_days: 3,
        flexible_share: 0.204,
        mean_nonflexible_hourly: Some(10.0),
        daily_energy: None,
        archetypes: vec![Archetype::Ev],
        seed: 9,
        start_date: "2016-01-02".into(),
    };
    let data_dir = root.join("data");
    run_generate(&spec, &data_dir)?;

    // Point a run config at the generated files, replaying one day.
    let config_path = root.join("run.toml");
    fs::write(
        &config_path,
        format!(
            r#"
out = "{}"
days = ["2016-01-03"]
seed = 1

[input]
history = "data/history.csv"
calendar = "data/calendar.csv"
replay = true
"#,
            root.join("results").display()
        ),
    )
    .expect("write config");

    let cfg = load_run_config(&config_path, &CliOverrides::default())?;
    let out = run_compare(&cfg)?;

    println!("{:<10} {:>12} {:>10}", "mechanism", "PoA - 1 (%)", "F");
    for r in &out.reports {
        println!("{:<10} {:>12.4} {:>10.4}", r.mechanism.to_string(), 100.0 * (r.poa - 1.0), r.fairness_index);
    }
    println!();
    for p in &out.written {
        println!("wrote {}", p.display());
    }
    Ok(())
}
