//! Jump-count functionals.
//!
//! `η̂_u` counts adjacent unequal components of a tuple on `u`; `η_S` is its
//! supremum over all finite grids in `S`. Refining a grid can only add
//! jumps, so `η_S` over a window is approached along nested dyadic grids.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fdd::{FamilyKind, FddFamily, InitialLaw, ProbInterval, StepKernel, Truncation};
use crate::grid::{dyadic_refinement, State, TimeDomain, TimeGrid};
use crate::time::Time;

/// `η̂_u(x_u)`: the number of `k ∈ {2..n}` with `x_{t_{k-1}} ≠ x_{t_k}`.
pub fn count_jumps_tuple(x: &[State]) -> usize {
    x.windows(2).filter(|w| w[0] != w[1]).count()
}

/// `E_{μ_u}(η̂_u) = Σ_k μ_{(t_{k-1}, t_k)}(𝒳²_≠)`.
pub fn expected_jumps(family: &FddFamily, u: &TimeGrid) -> Result<f64> {
    u.steps().map(|(s, r)| family.change_prob(s, r)).sum()
}

/// `μ_u(η̂_u ≥ k)`.
pub fn jump_tail_prob(family: &FddFamily, u: &TimeGrid, k: usize, truncation: Truncation) -> Result<ProbInterval> {
    Ok(jump_tails(family, u, k, truncation)?.pop().expect("tails include k"))
}

/// `μ_u(η̂_u ≥ j)` for every `j = 0..=k_max`.
///
/// Poisson families use the independent step-change indicators, finite
/// Markov families a dynamic program over (state, jumps so far capped at
/// `k_max`); anything else falls back to truncated enumeration.
pub fn jump_tails(family: &FddFamily, u: &TimeGrid, k_max: usize, truncation: Truncation) -> Result<Vec<ProbInterval>> {
    if let FamilyKind::Poisson { rate } = family.kind() {
        family.markov_view(u)?;
        let probs: Vec<f64> = u.steps().map(|(s, r)| -(-rate * (r - s).to_f64()).exp_m1()).collect();
        return Ok(tails_from_capped(&poisson_binomial_capped(&probs, k_max)));
    }
    if let Some((InitialLaw::Vector(init), kernels)) = family.markov_view(u)? {
        return Ok(tails_from_capped(&markov_jump_dp(&init, &kernels, k_max)));
    }
    (0..=k_max).map(|j| jump_tail_prob_enumerated(family, u, j, truncation)).collect()
}

/// Generic route: sums atoms with `η̂ ≥ k` inside the truncation.
pub fn jump_tail_prob_enumerated(
    family: &FddFamily,
    u: &TimeGrid,
    k: usize,
    truncation: Truncation,
) -> Result<ProbInterval> {
    family.prob_event(u, |x| count_jumps_tuple(x) >= k, truncation)
}

/// `out[j] = P(min(η̂, k_max) = j)`.
fn poisson_binomial_capped(probs: &[f64], k_max: usize) -> Vec<f64> {
    let mut dist = vec![0.0; k_max + 1];
    dist[0] = 1.0;
    for &p in probs {
        for j in (0..=k_max).rev() {
            let stay = if j == k_max { dist[j] } else { dist[j] * (1.0 - p) };
            let arrive = if j > 0 { dist[j - 1] * p } else { 0.0 };
            dist[j] = stay + arrive;
        }
    }
    dist
}

fn markov_jump_dp(init: &[f64], kernels: &[StepKernel], k_max: usize) -> Vec<f64> {
    let n = init.len();
    let mut f = vec![vec![0.0; k_max + 1]; n];
    for (x, &p) in init.iter().enumerate() {
        f[x][0] = p;
    }
    let mut next = vec![vec![0.0; k_max + 1]; n];
    for kernel in kernels {
        next.iter_mut().for_each(|row| row.iter_mut().for_each(|v| *v = 0.0));
        for x in 0..n {
            for j in 0..=k_max {
                let mass = f[x][j];
                if mass == 0.0 {
                    continue;
                }
                for (y, row) in next.iter_mut().enumerate() {
                    let q = kernel.prob(x as State, y as State);
                    if q == 0.0 {
                        continue;
                    }
                    let jj = if x == y { j } else { (j + 1).min(k_max) };
                    row[jj] += mass * q;
                }
            }
        }
        std::mem::swap(&mut f, &mut next);
    }
    (0..=k_max).map(|j| f.iter().map(|row| row[j]).sum()).collect()
}

fn tails_from_capped(dist: &[f64]) -> Vec<ProbInterval> {
    let mut tails = vec![ProbInterval::exact(0.0); dist.len()];
    let mut acc = 0.0;
    for j in (0..dist.len()).rev() {
        acc += dist[j];
        tails[j] = ProbInterval::exact(acc.min(1.0));
    }
    tails[0] = ProbInterval::exact(1.0);
    tails
}

/// `η` value: finite or unbounded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpCount {
    Finite(u64),
    Infinite,
}

/// Certified lower bound on `η_S` from a refinement sequence.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JumpEstimate {
    pub lower_bound: u64,
    /// The last three refinement levels agreed.
    pub converged: bool,
    /// `η̂` on `G_0, G_1, ..., G_max_depth`.
    pub levels: Vec<u64>,
}

/// Anything that can report its states along a grid.
pub trait PathOracle {
    fn values(&self, grid: &TimeGrid) -> Result<Vec<State>>;
}

impl<F> PathOracle for F
where
    F: Fn(&TimeGrid) -> Result<Vec<State>>,
{
    fn values(&self, grid: &TimeGrid) -> Result<Vec<State>> {
        self(grid)
    }
}

/// Evaluates `η̂` along the dyadic refinement of `window ∩ 𝒯`.
pub fn path_jump_count_estimate(
    path: &impl PathOracle,
    window: (Time, Time),
    domain: &TimeDomain,
    max_depth: u32,
) -> Result<JumpEstimate> {
    let levels = dyadic_refinement(domain, window, max_depth)?
        .iter()
        .map(|grid| Ok(count_jumps_tuple(&path.values(grid)?) as u64))
        .collect::<Result<Vec<_>>>()?;
    let lower_bound = *levels.last().expect("depth 0 is always present");
    let converged = levels.len() >= 3 && levels[levels.len() - 3..].iter().all(|&v| v == lower_bound);
    Ok(JumpEstimate { lower_bound, converged, levels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdd::RateMatrix;
    use crate::grid::StateTuple;
    use approx::assert_abs_diff_eq;

    fn g(times: &[f64]) -> TimeGrid {
        TimeGrid::from_decimals(times).unwrap()
    }

    fn t(x: f64) -> Time {
        Time::from_decimal(x).unwrap()
    }

    #[test]
    fn counting_adjacent_changes() {
        assert_eq!(count_jumps_tuple(&[3, 3, 3]), 0);
        assert_eq!(count_jumps_tuple(&[0, 0, 1, 1, 2]), 2);
        assert_eq!(count_jumps_tuple(&[5]), 0);
    }

    #[test]
    fn poisson_expected_jumps() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let e = expected_jumps(&fam, &g(&[0.0, 1.0, 2.0])).unwrap();
        assert_abs_diff_eq!(e, 1.2642411177, epsilon = 1e-10);
        assert_eq!(expected_jumps(&fam, &g(&[0.3])).unwrap(), 0.0);
    }

    #[test]
    fn poisson_tail_uses_independent_increments() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let u = g(&[0.0, 1.0, 2.0]);
        let p = jump_tail_prob(&fam, &u, 2, Truncation::first(40)).unwrap();
        assert_abs_diff_eq!(p.lo, 0.3995764009, epsilon = 1e-10);
        let brute = jump_tail_prob_enumerated(&fam, &u, 2, Truncation::first(40)).unwrap();
        assert!(brute.contains(p.lo, 1e-12));
        assert_eq!(jump_tail_prob(&fam, &u, 0, Truncation::first(1)).unwrap(), ProbInterval::exact(1.0));
    }

    #[test]
    fn markov_dp_matches_enumeration() {
        let fam = FddFamily::ctmc(vec![0.3, 0.7], RateMatrix::symmetric_two_state(1.0).unwrap()).unwrap();
        let u = g(&[0.0, 0.5, 1.0]);
        let dp = jump_tail_prob(&fam, &u, 1, Truncation::first(2)).unwrap();
        let mut brute = 0.0;
        for code in 0..8u32 {
            let x: Vec<State> = (0..3).map(|i| (code >> i) & 1).collect();
            if count_jumps_tuple(&x) >= 1 {
                brute += fam.mass(&u, &StateTuple(x)).unwrap();
            }
        }
        assert_abs_diff_eq!(dp.lo, brute, epsilon = 1e-12);
    }

    #[test]
    fn single_jump_path_converges() {
        let jump = t(0.3);
        let path = move |grid: &TimeGrid| -> Result<Vec<State>> {
            Ok(grid.times().iter().map(|&s| u32::from(s >= jump)).collect())
        };
        let unit = TimeDomain::interval(t(0.0), t(1.0)).unwrap();
        let est = path_jump_count_estimate(&path, (t(0.0), t(1.0)), &unit, 2).unwrap();
        assert_eq!(est.lower_bound, 1);
        assert!(est.converged);
        let constant = |grid: &TimeGrid| -> Result<Vec<State>> { Ok(vec![4; grid.len()]) };
        let est = path_jump_count_estimate(&constant, (t(0.0), t(1.0)), &unit, 5).unwrap();
        assert_eq!(est.lower_bound, 0);
        assert!(est.converged);
    }

    #[test]
    fn close_jumps_need_finer_grids() {
        let (a, b) = (t(0.25), t(0.375));
        let path = move |grid: &TimeGrid| -> Result<Vec<State>> {
            Ok(grid.times().iter().map(|&s| u32::from(s >= a) + u32::from(s >= b)).collect())
        };
        let unit = TimeDomain::interval(t(0.0), t(1.0)).unwrap();
        let est = path_jump_count_estimate(&path, (t(0.0), t(1.0)), &unit, 3).unwrap();
        assert_eq!(est.levels[1], 1);
        assert_eq!(est.levels[3], 2);
        assert!(est.levels.windows(2).all(|w| w[0] <= w[1]));
    }
}
