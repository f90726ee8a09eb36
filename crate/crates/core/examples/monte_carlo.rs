//! Seeded path sampling, empirical laws and hitting probabilities.
use cadlag_kit::sampling::{empirical_fdd, hitting_probability, sample_paths, tv_distance};
use cadlag_kit::{FddFamily, RateMatrix, Time, TimeGrid, Truncation};

fn main() -> cadlag_kit::Result<()> {
    let q = RateMatrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![0.5, -1.0, 0.5], vec![0.0, 2.0, -2.0]])?;
    let chain = FddFamily::ctmc(vec![1.0, 0.0, 0.0], q)?;
    let horizon = Time::from_int(2);

    let paths = sample_paths(&chain, horizon, 7, 20_000)?;
    let u = TimeGrid::from_decimals(&[0.5, 1.0, 2.0])?;
    let emp = empirical_fdd(&paths, &u)?;
    println!("{} tuples seen on {u}", emp.support_size());
    println!("TV distance to the exact law: {:.4}", tv_distance(&emp, &chain, &u, Truncation::first(3))?);
    println!("first path: {:?}", paths[0].jumps().iter().map(|(t, x)| (t.to_f64(), *x)).collect::<Vec<_>>());

    for (name, fam, x) in [("chain", &chain, 2), ("poisson", &FddFamily::poisson(1.0)?, 3)] {
        let h = hitting_probability(fam, x, horizon, 11, 20_000)?;
        println!("{name}: P(hit {x} by {horizon}) ~ {:.4} (exact {:.4})", h.estimate, h.exact.unwrap_or(f64::NAN));
    }
    Ok(())
}
