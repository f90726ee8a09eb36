//! Building families and querying their finite-dimensional laws.
use cadlag_kit::fdd::transition_matrix;
use cadlag_kit::{FddFamily, RateMatrix, StateTuple, Time, TimeGrid, Truncation};

fn main() -> cadlag_kit::Result<()> {
    let q = RateMatrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![0.5, -1.0, 0.5], vec![0.0, 2.0, -2.0]])?;
    let p = transition_matrix(&q, 0.5, 1e-12)?;
    println!("exp(0.5 Q) =\n{}", p.entries);

    let chain = FddFamily::ctmc(vec![1.0, 0.0, 0.0], q)?;
    let poisson = FddFamily::poisson(2.0)?;
    let iid = FddFamily::iid(vec![0.5, 0.5])?;
    let perturbed = FddFamily::perturbed(FddFamily::iid(vec![0.6, 0.4])?, 0.1, Time::from_decimal(0.5)?)?;

    let u = TimeGrid::from_decimals(&[0.5, 1.0])?;
    for fam in [&chain, &poisson, &iid, &perturbed] {
        println!("{}", fam.describe());
        println!("  P(X = (1, 1) on {u}) = {:.6}", fam.mass(&u, &StateTuple(vec![1, 1]))?);
        println!("  P(X_0.5 != X_1)      = {:.6}", fam.change_prob(u.first(), u.last())?);
    }

    let one = TimeGrid::from_decimals(&[1.0])?;
    let tail = poisson.prob_event(&one, |x| x[0] >= 5, Truncation::first(40))?;
    println!("Poisson(2): P(N_1 >= 5) in [{:.3e}, {:.3e}]", tail.lo, tail.hi);
    Ok(())
}
