//! Cylinder events, their charge, lifting and finite additivity.
use cadlag_kit::events::{charge, finite_additivity_check, intersect, CylinderEvent};
use cadlag_kit::{FddFamily, RateMatrix, Time, TimeGrid, Truncation};

fn main() -> cadlag_kit::Result<()> {
    let fam = FddFamily::ctmc(vec![0.5, 0.5], RateMatrix::symmetric_two_state(1.0)?)?;
    let tr = Truncation::first(2);
    let half = Time::from_decimal(0.5)?;

    let a = CylinderEvent::state_at(half, 1);
    let b = CylinderEvent::changes(half, Time::from_int(1))?;
    let both = intersect(&a, &b);
    println!("P(X_0.5 = 1)            = {:.6}", charge(&fam, &a, tr)?.lo);
    println!("P(X_0.5 != X_1)         = {:.6}", charge(&fam, &b, tr)?.lo);
    println!("P(both) on {}   = {:.6}", both.grid(), charge(&fam, &both, tr)?.lo);

    let fine = TimeGrid::from_decimals(&[0.25, 0.5, 0.75, 1.0])?;
    println!("lifted to {fine}: {:.6}", charge(&fam, &both.lift(&fine)?, tr)?.lo);

    let parts: Vec<_> = (0..4)
        .map(|k| {
            let at_least = CylinderEvent::jumps_at_least(fine.clone(), k);
            intersect(&at_least, &CylinderEvent::jumps_at_least(fine.clone(), k + 1).complement())
        })
        .collect();
    let report = finite_additivity_check(&fam, &fine, &parts, tr, 1e-12)?;
    println!("exactly 0..3 jumps on {fine}: {:?}", report.verdict);
    for e in &report.estimates {
        println!("  {} = {:.3e}", e.name, e.value);
    }
    Ok(())
}
