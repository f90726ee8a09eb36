//! Regularity checks for a chain, a Poisson process and an iid family.
use cadlag_kit::grid::dense_countable_subset;
use cadlag_kit::regularity::{check_regularity, imprecise_norm_bound, overall_verdict, RateMatrixSet, RegularityParams};
use cadlag_kit::{FddFamily, RateMatrix, Time, TimeDomain, TimeGrid};

fn main() -> cadlag_kit::Result<()> {
    let q = RateMatrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![0.5, -1.0, 0.5], vec![0.0, 2.0, -2.0]])?;
    let qset = RateMatrixSet::new(vec![q.clone(), q.scaled(1.5)?])?;
    println!("rate bound over the set: {}", imprecise_norm_bound(&qset));

    let params = RegularityParams { window: 1, ..Default::default() };
    let times = dense_countable_subset(&TimeDomain::interval(Time::ZERO, Time::from_int(1))?, 1)?;
    let corpus = vec![TimeGrid::from_decimals(&[0.5, 1.0])?];

    let families = [
        ("chain", FddFamily::ctmc(vec![1.0, 0.0, 0.0], q)?),
        ("poisson", FddFamily::poisson(2.0)?),
        ("iid", FddFamily::iid(vec![0.5, 0.5])?),
    ];
    for (name, fam) in &families {
        let reports = check_regularity(fam, &times, &params, &corpus)?;
        println!("{name}: {:?}", overall_verdict(&reports));
        for r in &reports {
            let headline = r.estimates.first().map(|e| format!("{} = {:.4e}", e.name, e.value)).unwrap_or_default();
            println!("  {:<24} {:<13} {headline}", r.check, format!("{:?}", r.verdict));
        }
    }
    Ok(())
}
