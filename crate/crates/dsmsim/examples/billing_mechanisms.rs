//! Price one load profile under every billing rule.
//!
//! Three households with different placements of the same kind of load:
//! one concentrated on the evening peak, one off-peak, one spread out.

use dsmsim::billing::{
    bill_baseline, bill_dp, bill_hp, bill_peak_offpeak, greedy_offpeak_shift,
    DEFAULT_BASELINE_PRICE, DEFAULT_OFFPEAK_PRICE,
};
use dsmsim::model::{Appliance, Consumer, CostModel, Horizon, LoadProfile, Scenario};

fn main() -> dsmsim::Result<()> {
    let hours = 24;
    let mk = |id: &str| {
        Consumer::new(
            id,
            vec![Appliance::capped("load", 6.0, 3.0, &(0..hours).collect::<Vec<_>>(), hours)],
            hours,
        )
    };
    let s = Scenario::new(
        Horizon::new(hours),
        vec![mk("peaky"), mk("night-owl"), mk("spread")],
        CostModel::uniform(hours, 0.04, 8.0, 0.0),
    );

    let mut profile = LoadProfile::zeros(&s);
    profile.power[0][0][18] = 3.0; // on the evening peak
    profile.power[0][0][19] = 3.0;
    profile.power[1][0][2] = 3.0; // small hours
    profile.power[1][0][3] = 3.0;
    for h in 10..16 {
        profile.power[2][0][h] = 1.0;
    }
    assert!(profile.is_feasible(&s, 1e-9));

    let dp = bill_dp(&profile, &s)?;
    let hp = bill_hp(&profile, &s)?;
    let base = bill_baseline(&profile, DEFAULT_BASELINE_PRICE);
    let shifted = greedy_offpeak_shift(&profile, &s, 1)?;
    let peak = bill_peak_offpeak(&shifted, &s, DEFAULT_OFFPEAK_PRICE)?;

    println!("{:<10} {:>8} {:>8} {:>9} {:>9}", "consumer", "DP", "HP", "Baseline", "PeakOff");
    for (n, c) in s.consumers.iter().enumerate() {
        println!(
            "{:<10} {:>8.2} {:>8.2} {:>9.2} {:>9.2}",
            c.id, dp.bills[n], hp.bills[n], base.bills[n], peak.bills[n]
        );
    }
    println!("\ntotals    {:>8.2} {:>8.2}", dp.total(), hp.total());
    println!("(DP and HP split the whole system cost; equal energies mean");
    println!(" equal DP bills, while HP charges the peak placement more)");
    Ok(())
}
