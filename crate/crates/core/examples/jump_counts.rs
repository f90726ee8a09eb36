//! Jump counts on grids, their tails, and the dyadic count of a path.
use cadlag_kit::cadlag::CadlagPath;
use cadlag_kit::grid::dyadic_grid;
use cadlag_kit::jumps::{count_jumps_tuple, expected_jumps, jump_tails, path_jump_count_estimate};
use cadlag_kit::{FddFamily, Time, TimeDomain, Truncation};

fn main() -> cadlag_kit::Result<()> {
    println!("jumps in (0, 1, 1, 2, 0): {}", count_jumps_tuple(&[0, 1, 1, 2, 0]));

    let fam = FddFamily::poisson(1.5)?;
    let domain = TimeDomain::nonnegative_reals();
    for depth in [2, 4, 6] {
        let u = dyadic_grid(&domain, (Time::ZERO, Time::from_int(1)), depth)?;
        let tails = jump_tails(&fam, &u, 4, Truncation::first(40))?;
        let shown: Vec<String> = tails.iter().map(|p| format!("{:.4}", p.hi)).collect();
        println!(
            "depth {depth}: E[jumps] = {:.4}, P(>= k) for k = 0..4: {}",
            expected_jumps(&fam, &u)?,
            shown.join(" ")
        );
    }

    let d = Time::dyadic;
    let path = CadlagPath::new(
        TimeDomain::interval(Time::ZERO, Time::from_int(1))?,
        0,
        vec![(d(1, 3)?, 1), (d(45, 7)?, 0), (d(461, 9)?, 2)],
        None,
    )?;
    let est = path_jump_count_estimate(&path, (Time::ZERO, Time::from_int(1)), path.domain(), 10)?;
    println!("dyadic counts by depth: {:?}", est.levels);
    println!("limit {} (exact {}, converged {})", est.lower_bound, path.exact_jump_count(Time::ZERO, Time::from_int(1)), est.converged);
    Ok(())
}
