//! The one-appliance building block: project a target power vector onto
//! the feasible set (fixed daily energy, hourly bounds).

use dsmsim::qpsolve::project_appliance;

fn main() -> dsmsim::Result<()> {
    let lo = vec![0.0; 6];
    let hi = vec![2.0; 6];

    // Wants 3 kWh in each of the first two hours, but must total 4 kWh.
    let x = project_appliance(&[3.0, 3.0, 0.0, 0.0, 0.0, 0.0], 4.0, &lo, &hi)?;
    println!("projected: {x:?}  (sum {})", x.iter().sum::<f64>());

    // An equal-preference target splits the budget evenly.
    let x = project_appliance(&[1.0; 6], 9.0, &lo, &hi)?;
    println!("projected: {x:?}  (sum {})", x.iter().sum::<f64>());

    // Caps bind: the excess spills into the remaining hours.
    let x = project_appliance(&[5.0, 5.0, 1.0, 0.0, 0.0, 0.0], 7.0, &lo, &hi)?;
    println!("projected: {x:?}  (sum {})", x.iter().sum::<f64>());

    // Infeasible budgets are refused, not clipped.
    let err = project_appliance(&[0.0; 6], 13.0, &lo, &hi).unwrap_err();
    println!("infeasible: {err}");
    Ok(())
}
