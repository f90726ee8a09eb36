//! Monte Carlo paths and empirical finite-dimensional statistics.

use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cadlag::CadlagPath;
use crate::error::{Error, Result};
use crate::fdd::{check_distribution, poisson_tail, transition_matrix, FamilyKind, FddFamily, RateMatrix, Truncation, KERNEL_TOL};
use crate::grid::{State, TimeDomain, TimeGrid};
use crate::time::Time;

/// Binary precision that sampled jump times are snapped to.
pub const JUMP_TIME_PRECISION: u32 = 40;

/// Independent random streams indexed by `(seed, stream)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        RngStream { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Jump clock snapping real arrival times to the dyadic precision.
struct Clock {
    real: f64,
    last: Time,
    horizon: Time,
}

enum Tick {
    Jump(Time),
    Redraw,
    Done,
}

impl Clock {
    fn new(horizon: Time) -> Self {
        Clock { real: 0.0, last: Time::ZERO, horizon }
    }

    /// A draw landing on or before the previous jump (including time 0) is
    /// discarded so that jump times stay strictly increasing.
    fn advance(&mut self, dt: f64) -> Result<Tick> {
        let candidate = self.real + dt;
        let snapped = Time::from_f64(candidate, JUMP_TIME_PRECISION)?;
        if snapped > self.horizon {
            return Ok(Tick::Done);
        }
        if snapped <= self.last {
            return Ok(Tick::Redraw);
        }
        self.real = candidate;
        self.last = snapped;
        Ok(Tick::Jump(snapped))
    }
}

/// Counting path from 0 at time 0 with exponential(`rate`) interarrivals.
pub fn sample_poisson_path(rate: f64, horizon: Time, stream: RngStream) -> Result<CadlagPath> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::param("rate", "must be finite and nonnegative"));
    }
    if horizon <= Time::ZERO {
        return Err(Error::param("horizon", "must be positive"));
    }
    let mut rng = stream.rng();
    let mut jumps = Vec::new();
    if rate > 0.0 {
        let exp = Exp::new(rate).map_err(|e| Error::param("rate", e.to_string()))?;
        let mut clock = Clock::new(horizon);
        let mut state: State = 0;
        loop {
            match clock.advance(exp.sample(&mut rng))? {
                Tick::Jump(t) => {
                    state += 1;
                    jumps.push((t, state));
                }
                Tick::Redraw => {}
                Tick::Done => break,
            }
        }
    }
    CadlagPath::new(TimeDomain::nonnegative_reals(), 0, jumps, Some(horizon))
}

/// Gillespie realization of a finite-state chain.
pub fn sample_ctmc_path(initial: &[f64], q: &RateMatrix, horizon: Time, stream: RngStream) -> Result<CadlagPath> {
    check_distribution(initial)?;
    if initial.len() != q.dim() {
        return Err(Error::param("initial", "length must match the rate matrix"));
    }
    if horizon <= Time::ZERO {
        return Err(Error::param("horizon", "must be positive"));
    }
    let mut rng = stream.rng();
    let start = WeightedIndex::new(initial).map_err(|e| Error::param("initial", e.to_string()))?;
    let anchor = start.sample(&mut rng) as State;
    let rows = q.rows();
    let mut state = anchor;
    let mut jumps = Vec::new();
    let mut clock = Clock::new(horizon);
    loop {
        let x = state as usize;
        let exit = -rows[x][x];
        if exit <= 0.0 {
            break;
        }
        let hold = Exp::new(exit).map_err(|e| Error::param("generator", e.to_string()))?;
        match clock.advance(hold.sample(&mut rng))? {
            Tick::Jump(t) => {
                let weights: Vec<f64> =
                    rows[x].iter().enumerate().map(|(y, &w)| if y == x { 0.0 } else { w.max(0.0) }).collect();
                let next = WeightedIndex::new(&weights).map_err(|e| Error::param("generator", e.to_string()))?;
                state = next.sample(&mut rng) as State;
                jumps.push((t, state));
            }
            Tick::Redraw => {}
            Tick::Done => break,
        }
    }
    CadlagPath::new(TimeDomain::nonnegative_reals(), anchor, jumps, Some(horizon))
}

/// One path of a Poisson or CTMC family.
pub fn sample_family_path(family: &FddFamily, horizon: Time, stream: RngStream) -> Result<CadlagPath> {
    match family.kind() {
        FamilyKind::Poisson { rate } => sample_poisson_path(*rate, horizon, stream),
        FamilyKind::Ctmc { initial, generator } => sample_ctmc_path(initial, generator, horizon, stream),
        _ => Err(Error::param("family", format!("no path sampler for {}", family.describe()))),
    }
}

/// Paths for streams `0..n`, generated in parallel and returned in stream order.
pub fn sample_paths(family: &FddFamily, horizon: Time, seed: u64, n: usize) -> Result<Vec<CadlagPath>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| sample_family_path(family, horizon, RngStream::new(seed, i)))
        .collect()
}

/// Atom counts of `ω(u)` over a sample of paths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    pub grid: TimeGrid,
    pub counts: BTreeMap<Vec<State>, u64>,
    pub n: u64,
}

impl EmpiricalDistribution {
    pub fn frequency(&self, x: &[State]) -> f64 {
        self.counts.get(x).copied().unwrap_or(0) as f64 / self.n as f64
    }

    pub fn support_size(&self) -> usize {
        self.counts.len()
    }
}

pub fn empirical_fdd(paths: &[CadlagPath], u: &TimeGrid) -> Result<EmpiricalDistribution> {
    let tuples = paths.par_iter().map(|p| Ok(p.restrict(u)?.0)).collect::<Result<Vec<_>>>()?;
    let mut counts = BTreeMap::new();
    for x in tuples {
        *counts.entry(x).or_insert(0) += 1;
    }
    Ok(EmpiricalDistribution { grid: u.clone(), counts, n: paths.len() as u64 })
}

/// `½ Σ |emp(x)/N - μ_u(x)|` over the truncated atoms, plus half of the
/// empirical mass they miss and half of the analytic tail.
pub fn tv_distance(emp: &EmpiricalDistribution, family: &FddFamily, u: &TimeGrid, truncation: Truncation) -> Result<f64> {
    if &emp.grid != u {
        return Err(Error::Misaligned { expected: emp.grid.len(), got: u.len() });
    }
    if emp.n == 0 {
        return Err(Error::param("sample", "must contain at least one path"));
    }
    let mut seen: BTreeSet<Vec<State>> = BTreeSet::new();
    let mut sum = 0.0;
    let total = family.for_each_atom(u, truncation, |x, p| {
        sum += (emp.frequency(x) - p).abs();
        seen.insert(x.to_vec());
    })?;
    let missed: f64 = emp.counts.iter().filter(|(x, _)| !seen.contains(*x)).map(|(_, &c)| c as f64).sum::<f64>()
        / emp.n as f64;
    Ok((0.5 * (sum + missed + (1.0 - total).max(0.0))).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HittingEstimate {
    pub state: State,
    pub horizon: Time,
    pub hits: u64,
    pub n: u64,
    pub estimate: f64,
    pub exact: Option<f64>,
}

/// Fraction of paths taking the value `x` somewhere on `[0, horizon]`.
pub fn empirical_hitting(paths: &[CadlagPath], x: State, horizon: Time) -> HittingEstimate {
    let hits = paths.iter().filter(|p| p.hits(x, horizon)).count() as u64;
    let n = paths.len() as u64;
    HittingEstimate { state: x, horizon, hits, n, estimate: hits as f64 / n.max(1) as f64, exact: None }
}

/// Closed form of `P(hit x by T)` where one is available.
///
/// Poisson paths are nondecreasing with unit steps, so hitting `x` by `T` is
/// `N(T) ≥ x`. For chains, `x` is made absorbing and the answer read off
/// `π₀ exp(Q' T)`.
pub fn exact_hitting_probability(family: &FddFamily, x: State, horizon: Time) -> Result<Option<f64>> {
    if horizon <= Time::ZERO {
        return Err(Error::param("horizon", "must be positive"));
    }
    match family.kind() {
        FamilyKind::Poisson { rate } => Ok(Some(poisson_tail(rate * horizon.to_f64(), x as u64))),
        FamilyKind::Ctmc { initial, generator } => {
            let n = generator.dim();
            if x as usize >= n {
                return Err(Error::UnknownState(x));
            }
            let mut absorbed = generator.entries().clone();
            absorbed.row_mut(x as usize).fill(0.0);
            let p = transition_matrix(&RateMatrix::new(absorbed)?, horizon.to_f64(), KERNEL_TOL)?;
            Ok(Some(initial.iter().enumerate().map(|(y, &w)| w * p.entries[(y, x as usize)]).sum::<f64>().min(1.0)))
        }
        _ => Ok(None),
    }
}

/// Monte Carlo estimate with the exact value attached when known.
pub fn hitting_probability(
    family: &FddFamily,
    x: State,
    horizon: Time,
    seed: u64,
    n: usize,
) -> Result<HittingEstimate> {
    let paths = sample_paths(family, horizon, seed, n)?;
    let mut est = empirical_hitting(&paths, x, horizon);
    est.exact = exact_hitting_probability(family, x, horizon)?;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(x: f64) -> Time {
        Time::from_decimal(x).unwrap()
    }

    #[test]
    fn streams_are_reproducible() {
        let a = sample_poisson_path(2.0, t(5.0), RngStream::new(7, 3)).unwrap();
        let b = sample_poisson_path(2.0, t(5.0), RngStream::new(7, 3)).unwrap();
        let c = sample_poisson_path(2.0, t(5.0), RngStream::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn poisson_paths() {
        let flat = sample_poisson_path(0.0, t(3.0), RngStream::new(1, 0)).unwrap();
        assert!(flat.jumps().is_empty());
        let fam = FddFamily::poisson(1.0).unwrap();
        let paths = sample_paths(&fam, t(1.0), 11, 20_000).unwrap();
        assert!(paths.iter().all(CadlagPath::is_monotone_increasing));
        let zero = paths.iter().filter(|p| p.jumps().is_empty()).count() as f64 / paths.len() as f64;
        assert!((zero - (-1.0f64).exp()).abs() < 0.015);
    }

    #[test]
    fn ctmc_paths() {
        let frozen = RateMatrix::zero(3).unwrap();
        let p = sample_ctmc_path(&[0.0, 1.0, 0.0], &frozen, t(4.0), RngStream::new(2, 0)).unwrap();
        assert_eq!((p.anchor(), p.jumps().len()), (1, 0));
        let q = RateMatrix::symmetric_two_state(1.0).unwrap();
        let fam = FddFamily::ctmc(vec![0.5, 0.5], q).unwrap();
        let paths = sample_paths(&fam, t(1.0), 5, 20_000).unwrap();
        let u = TimeGrid::from_decimals(&[0.0, 1.0]).unwrap();
        let emp = empirical_fdd(&paths, &u).unwrap();
        assert_eq!(emp.counts.values().sum::<u64>(), 20_000);
        assert!(tv_distance(&emp, &fam, &u, Truncation::first(2)).unwrap() < 0.02);
    }

    #[test]
    fn empirical_distribution_basics() {
        let d = TimeDomain::interval(t(0.0), t(1.0)).unwrap();
        let p = CadlagPath::constant(d, 2, None).unwrap();
        let u = TimeGrid::from_decimals(&[0.0, 0.5]).unwrap();
        let emp = empirical_fdd(std::slice::from_ref(&p), &u).unwrap();
        assert_eq!(emp.counts.get(&vec![2, 2]), Some(&1));
        let emp = empirical_fdd(&vec![p; 5], &u).unwrap();
        assert_eq!(emp.support_size(), 1);
        assert_eq!(emp.n, 5);
    }

    #[test]
    fn total_variation_extremes() {
        let fam = FddFamily::iid(vec![0.5, 0.5]).unwrap();
        let u = TimeGrid::singleton(t(0.5));
        let exact = EmpiricalDistribution { grid: u.clone(), counts: [(vec![0], 2), (vec![1], 2)].into(), n: 4 };
        assert_eq!(tv_distance(&exact, &fam, &u, Truncation::first(2)).unwrap(), 0.0);
        let point = FddFamily::iid(vec![1.0, 0.0]).unwrap();
        let disjoint = EmpiricalDistribution { grid: u.clone(), counts: [(vec![1], 3)].into(), n: 3 };
        assert_eq!(tv_distance(&disjoint, &point, &u, Truncation::first(2)).unwrap(), 1.0);
    }

    #[test]
    fn exact_hitting() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let p = exact_hitting_probability(&fam, 2, t(1.0)).unwrap().unwrap();
        assert_abs_diff_eq!(p, 1.0 - 2.0 * (-1.0f64).exp(), epsilon = 1e-12);
        assert_eq!(exact_hitting_probability(&fam, 0, t(3.0)).unwrap(), Some(1.0));

        let blocked = RateMatrix::from_rows(&[vec![-1.0, 1.0, 0.0], vec![1.0, -1.0, 0.0], vec![0.0, 0.0, 0.0]]).unwrap();
        let chain = FddFamily::ctmc(vec![1.0, 0.0, 0.0], blocked).unwrap();
        assert_eq!(exact_hitting_probability(&chain, 2, t(5.0)).unwrap(), Some(0.0));
        let est = hitting_probability(&chain, 0, t(1.0), 3, 100).unwrap();
        assert_eq!(est.estimate, 1.0);
        assert_abs_diff_eq!(est.exact.unwrap(), 1.0, epsilon = 1e-12);

        let two = FddFamily::ctmc(vec![1.0, 0.0], RateMatrix::symmetric_two_state(1.0).unwrap()).unwrap();
        assert_abs_diff_eq!(exact_hitting_probability(&two, 1, t(1.0)).unwrap().unwrap(), 1.0 - (-1.0f64).exp(), epsilon = 1e-12);
    }

    #[test]
    fn only_markov_families_are_sampled() {
        let fam = FddFamily::iid(vec![0.5, 0.5]).unwrap();
        assert!(sample_family_path(&fam, t(1.0), RngStream::new(0, 0)).is_err());
    }
}
