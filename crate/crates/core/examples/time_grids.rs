//! Exact dyadic times, grids, projections and dense subsets.
use cadlag_kit::grid::{dense_countable_subset, dense_mesh, dyadic_refinement, merge_grids, project_tuple};
use cadlag_kit::{StateTuple, Time, TimeDomain, TimeGrid, TimeSet};

fn main() -> cadlag_kit::Result<()> {
    let t = Time::from_decimal(0.3)?;
    println!("0.3 stored as {} (mantissa {}, shift {})", t, t.mantissa(), t.shift());

    let u = TimeGrid::from_decimals(&[0.25, 1.0])?;
    let v = TimeGrid::from_decimals(&[0.5, 1.0, 2.0])?;
    let w = merge_grids(&u, &v);
    println!("{u} merged with {v} = {w}");

    let x = StateTuple(vec![0, 1, 1, 3]);
    println!("project {:?} on {w} to {u}: {:?}", x.0, project_tuple(&x, &w, &u)?.0);

    let domain = TimeDomain::nonnegative_reals();
    for g in dyadic_refinement(&domain, (Time::ZERO, Time::from_int(1)), 3)? {
        println!("  mesh {:<6} {g}", g.mesh());
    }

    // [0, 1] ∪ {2} ∪ [3, ∞)
    let set = TimeSet::new(
        vec![(Time::ZERO, Time::from_int(1)), (Time::from_int(2), Time::from_int(2))],
        Some(Time::from_int(3)),
    )?;
    let dense = dense_countable_subset(&TimeDomain::new(set.clone()), 2)?;
    println!("depth-2 dense points ({}, mesh {}):", dense.len(), dense_mesh(&set, 2)?);
    println!("  {}", dense.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(" "));
    Ok(())
}
