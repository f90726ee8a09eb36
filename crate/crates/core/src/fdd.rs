//! Finite-dimensional distribution families.
//!
//! A family assigns to every grid `u = (t_1, ..., t_n)` a distribution `μ_u`
//! on `𝒳^n`. The built-in families are Markov: `μ_u` factors as an initial
//! marginal at `t_1` times one transition kernel per step of the grid. The
//! perturbed family deliberately breaks that at a single instant.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{State, StateSpace, StateTuple, TimeDomain, TimeGrid};
use crate::time::Time;

/// Row-sum and normalization tolerance for generators and distributions.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Truncation error allowed when a family evaluates `exp(Q t)` internally.
pub const KERNEL_TOL: f64 = 1e-15;

/// A generator: nonnegative off-diagonal entries, rows summing to zero.
#[derive(Clone, PartialEq)]
pub struct RateMatrix {
    entries: DMatrix<f64>,
}

impl RateMatrix {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        if entries.nrows() != entries.ncols() || entries.nrows() == 0 {
            return Err(Error::InvalidRateMatrix { row: 0, reason: "matrix must be square and nonempty".into() });
        }
        if let Some((row, reason)) = rate_matrix_diagnostics(&entries).into_iter().next() {
            return Err(Error::InvalidRateMatrix { row, reason });
        }
        Ok(RateMatrix { entries })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidRateMatrix { row: 0, reason: "matrix must be square".into() });
        }
        Self::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }

    /// `[[-r, r], [r, -r]]`.
    pub fn symmetric_two_state(rate: f64) -> Result<Self> {
        Self::from_rows(&[vec![-rate, rate], vec![rate, -rate]])
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(DMatrix::zeros(n, n))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    /// `max_x |Q_xx|`.
    pub fn max_exit_rate(&self) -> f64 {
        (0..self.dim()).map(|i| self.entries[(i, i)].abs()).fold(0.0, f64::max)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.entries * factor)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim()).map(|i| self.entries.row(i).iter().copied().collect()).collect()
    }
}

impl fmt::Debug for RateMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateMatrix").field("rows", &self.rows()).finish()
    }
}

/// Every violated generator invariant, as `(row, message)` pairs.
pub fn rate_matrix_diagnostics(entries: &DMatrix<f64>) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for i in 0..entries.nrows() {
        let row = entries.row(i);
        if row.iter().any(|v| !v.is_finite()) {
            out.push((i, "entries must be finite".to_string()));
            continue;
        }
        for (j, &v) in row.iter().enumerate() {
            if i != j && v < 0.0 {
                out.push((i, format!("off-diagonal entry ({i}, {j}) = {v} is negative")));
            }
        }
        let sum: f64 = row.iter().sum();
        if sum.abs() > STRUCTURE_TOL {
            out.push((i, format!("row {i} sums to {sum:e}, not 0")));
        }
    }
    out
}

/// `exp(Q t)` together with the time it was evaluated at.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    pub entries: DMatrix<f64>,
    pub elapsed: f64,
    /// Bound on the neglected uniformization mass.
    pub truncation_error: f64,
}

/// `exp(Q dt)` by uniformization.
///
/// `Q = 0` gives the identity. Otherwise, with `q = max_x |Q_xx|` and `P = I + Q/q`, returns
/// `Σ_{m≤M} e^{-q dt} (q dt)^m / m! · P^m` where `M` leaves a Poisson tail
/// below `tol`. Long horizons are split into `2^s` equal pieces whose
/// results are squared back up, keeping `q dt` per piece at most 32.
pub fn transition_matrix(q: &RateMatrix, dt: f64, tol: f64) -> Result<TransitionMatrix> {
    if !(dt >= 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("{dt} must be finite and nonnegative")));
    }
    if !(tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }
    let exit = q.max_exit_rate();
    if exit == 0.0 {
        let n = q.dim();
        return Ok(TransitionMatrix { entries: DMatrix::identity(n, n), elapsed: dt, truncation_error: 0.0 });
    }
    let unif = exit;
    let total = unif * dt;
    let squarings = if total > 32.0 { (total / 32.0).log2().ceil() as u32 } else { 0 };
    let pieces = (squarings as f64).exp2();
    let piece_tol = tol / pieces;
    let (mut entries, piece_error) = uniformized_series(q, unif, dt / pieces, piece_tol);
    for _ in 0..squarings {
        entries = &entries * &entries;
    }
    Ok(TransitionMatrix { entries, elapsed: dt, truncation_error: piece_error * pieces })
}

fn uniformized_series(q: &RateMatrix, unif: f64, dt: f64, tol: f64) -> (DMatrix<f64>, f64) {
    let n = q.dim();
    let jump_chain = DMatrix::identity(n, n) + q.entries() / unif;
    let mean = unif * dt;
    let mut weight = (-mean).exp();
    let mut cumulative = weight;
    let mut power = DMatrix::identity(n, n);
    let mut acc = power.clone() * weight;
    let mut m = 0u32;
    // floor keeps the loop finite once rounding dominates the tail estimate
    let floor = tol.max(4.0 * f64::EPSILON);
    while 1.0 - cumulative >= floor && m < 100_000 {
        m += 1;
        power = &power * &jump_chain;
        weight *= mean / m as f64;
        cumulative += weight;
        acc += &power * weight;
        if weight == 0.0 && m as f64 > mean {
            break;
        }
    }
    (acc, (1.0 - cumulative).max(0.0))
}

/// Validates a probability vector.
pub fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution("empty".into()));
    }
    if let Some(v) = p.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::InvalidDistribution(format!("entry {v} is not a nonnegative number")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > STRUCTURE_TOL {
        return Err(Error::InvalidDistribution(format!("entries sum to {sum}, not 1")));
    }
    Ok(())
}

/// `e^{-mean} mean^k / k!`, evaluated in log space.
pub fn poisson_pmf(mean: f64, k: u64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let log_factorial: f64 = (2..=k).map(|i| (i as f64).ln()).sum();
    (-mean + k as f64 * mean.ln() - log_factorial).exp()
}

/// `P(N ≥ k)` for `N ~ Poisson(mean)`.
pub fn poisson_tail(mean: f64, k: u64) -> f64 {
    let below: f64 = (0..k).map(|j| poisson_pmf(mean, j)).sum();
    (1.0 - below).max(0.0)
}

/// Window of states enumerated when a state space is infinite: `{0, ..., states-1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Truncation {
    pub states: usize,
}

impl Truncation {
    pub fn first(states: usize) -> Self {
        Truncation { states }
    }

    fn cap(self, space: &StateSpace) -> Result<usize> {
        if self.states == 0 {
            return Err(Error::EmptyTruncation);
        }
        Ok(space.size().map_or(self.states, |n| n.min(self.states)))
    }
}

/// A probability known to lie in `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbInterval {
    pub lo: f64,
    pub hi: f64,
}

impl ProbInterval {
    pub fn exact(p: f64) -> Self {
        ProbInterval { lo: p, hi: p }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, p: f64, tol: f64) -> bool {
        self.lo - tol <= p && p <= self.hi + tol
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// Marginal law at the first time of a grid.
#[derive(Clone, Debug)]
pub(crate) enum InitialLaw {
    Vector(Vec<f64>),
    Poisson { mean: f64 },
}

impl InitialLaw {
    pub(crate) fn prob(&self, x: State) -> f64 {
        match self {
            InitialLaw::Vector(p) => p.get(x as usize).copied().unwrap_or(0.0),
            InitialLaw::Poisson { mean } => poisson_pmf(*mean, x as u64),
        }
    }
}

/// Transition law across one step of a grid.
#[derive(Clone, Debug)]
pub(crate) enum StepKernel {
    Matrix(Arc<DMatrix<f64>>),
    PoissonIncrement { mean: f64 },
    Independent(Arc<Vec<f64>>),
}

impl StepKernel {
    pub(crate) fn prob(&self, x: State, y: State) -> f64 {
        match self {
            StepKernel::Matrix(p) => p[(x as usize, y as usize)],
            StepKernel::PoissonIncrement { mean } => {
                if y < x {
                    0.0
                } else {
                    poisson_pmf(*mean, (y - x) as u64)
                }
            }
            StepKernel::Independent(m) => m.get(y as usize).copied().unwrap_or(0.0),
        }
    }
}

#[derive(Clone, Debug)]
pub enum FamilyKind {
    /// Counting process started at 0 at time 0 with independent Poisson increments.
    Poisson { rate: f64 },
    /// Finite-state homogeneous Markov chain.
    Ctmc { initial: Vec<f64>, generator: RateMatrix },
    /// The same marginal at every instant, independently.
    Iid { marginal: Vec<f64> },
    /// `base`, except that on the singleton grid `(defect_time)` a mass
    /// `defect` moves from the modal atom `donor` to `recipient`.
    Perturbed { base: Box<FddFamily>, defect: f64, defect_time: Time, donor: State, recipient: State },
}

type KernelCache = Arc<Mutex<HashMap<Time, Arc<DMatrix<f64>>>>>;

/// A family `μ_• = (μ_u)_u` of finite-dimensional distributions.
#[derive(Clone)]
pub struct FddFamily {
    kind: FamilyKind,
    domain: TimeDomain,
    space: StateSpace,
    kernels: KernelCache,
}

impl fmt::Debug for FddFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FddFamily").field("kind", &self.kind).finish()
    }
}

impl FddFamily {
    fn build(kind: FamilyKind, space: StateSpace) -> Self {
        FddFamily { kind, domain: TimeDomain::nonnegative_reals(), space, kernels: Arc::default() }
    }

    pub fn poisson(rate: f64) -> Result<Self> {
        if !(rate >= 0.0 && rate.is_finite()) {
            return Err(Error::param("rate", format!("{rate} must be finite and nonnegative")));
        }
        Ok(Self::build(FamilyKind::Poisson { rate }, StateSpace::NonNegativeIntegers))
    }

    pub fn ctmc(initial: Vec<f64>, generator: RateMatrix) -> Result<Self> {
        check_distribution(&initial)?;
        if initial.len() != generator.dim() {
            return Err(Error::param(
                "initial",
                format!("has {} entries but the rate matrix is {}x{}", initial.len(), generator.dim(), generator.dim()),
            ));
        }
        let space = StateSpace::numbered(initial.len())?;
        Ok(Self::build(FamilyKind::Ctmc { initial, generator }, space))
    }

    pub fn iid(marginal: Vec<f64>) -> Result<Self> {
        check_distribution(&marginal)?;
        let space = StateSpace::numbered(marginal.len())?;
        Ok(Self::build(FamilyKind::Iid { marginal }, space))
    }

    /// Breaks consistency at `defect_time` only, by moving mass `defect` out
    /// of the most likely state of the base marginal there.
    pub fn perturbed(base: FddFamily, defect: f64, defect_time: Time) -> Result<Self> {
        if !(defect > 0.0 && defect <= 1.0) {
            return Err(Error::param("defect", format!("{defect} must lie in (0, 1]")));
        }
        base.check_time(defect_time)?;
        let grid = TimeGrid::singleton(defect_time);
        let mut donor = 0;
        let mut best = -1.0;
        let mut seen = 0.0;
        let mut x: State = 0;
        loop {
            if !base.space.contains(x) {
                break;
            }
            let p = base.mass(&grid, &StateTuple(vec![x]))?;
            if p > best {
                best = p;
                donor = x;
            }
            seen += p;
            if seen >= 1.0 - 1e-12 || x >= 1_000_000 {
                break;
            }
            x += 1;
        }
        let recipient = match base.space.size() {
            Some(1) => return Err(Error::param("base", "a one-state family cannot be perturbed")),
            Some(n) => (donor + 1) % n as State,
            None => donor + 1,
        };
        if defect > best + 1e-15 {
            return Err(Error::param(
                "defect",
                format!("{defect} exceeds the modal mass {best} of the base marginal at {defect_time}"),
            ));
        }
        let space = base.space.clone();
        Ok(Self::build(
            FamilyKind::Perturbed { base: Box::new(base), defect, defect_time, donor, recipient },
            space,
        ))
    }

    pub fn kind(&self) -> &FamilyKind {
        &self.kind
    }

    pub fn domain(&self) -> &TimeDomain {
        &self.domain
    }

    pub fn state_space(&self) -> &StateSpace {
        &self.space
    }

    pub fn describe(&self) -> String {
        match &self.kind {
            FamilyKind::Poisson { rate } => format!("poisson(rate={rate})"),
            FamilyKind::Ctmc { generator, .. } => format!("ctmc({} states)", generator.dim()),
            FamilyKind::Iid { marginal } => format!("iid({} states)", marginal.len()),
            FamilyKind::Perturbed { base, defect, defect_time, .. } => {
                format!("perturbed({}, defect={defect}, at {defect_time})", base.describe())
            }
        }
    }

    /// A bound on the jump intensity when the family has one.
    pub fn rate_bound(&self) -> Option<f64> {
        match &self.kind {
            FamilyKind::Poisson { rate } => Some(*rate),
            FamilyKind::Ctmc { generator, .. } => Some(generator.max_exit_rate()),
            FamilyKind::Iid { .. } => None,
            FamilyKind::Perturbed { base, .. } => base.rate_bound(),
        }
    }

    pub(crate) fn check_time(&self, t: Time) -> Result<()> {
        if self.domain.restricted().contains(t) {
            Ok(())
        } else {
            Err(Error::OutsideDomain(t))
        }
    }

    fn check_grid(&self, u: &TimeGrid) -> Result<()> {
        u.times().iter().try_for_each(|&t| self.check_time(t))
    }

    fn kernel_matrix(&self, generator: &RateMatrix, dt: Time) -> Result<Arc<DMatrix<f64>>> {
        let mut cache = self.kernels.lock().expect("kernel cache poisoned");
        if let Some(p) = cache.get(&dt) {
            return Ok(Arc::clone(p));
        }
        let p = Arc::new(transition_matrix(generator, dt.to_f64(), KERNEL_TOL)?.entries);
        cache.insert(dt, Arc::clone(&p));
        Ok(p)
    }

    /// Distribution at a single instant, for finite-state families.
    pub fn marginal_vector(&self, t: Time) -> Result<Option<Vec<f64>>> {
        self.check_time(t)?;
        Ok(match &self.kind {
            FamilyKind::Poisson { .. } => None,
            FamilyKind::Ctmc { initial, generator } => {
                let p = self.kernel_matrix(generator, t)?;
                Some(row_times_matrix(initial, &p))
            }
            FamilyKind::Iid { marginal } => Some(marginal.clone()),
            FamilyKind::Perturbed { base, defect, defect_time, donor, recipient } => {
                base.marginal_vector(t)?.map(|mut v| {
                    if t == *defect_time {
                        v[*donor as usize] -= defect;
                        v[*recipient as usize] += defect;
                    }
                    v
                })
            }
        })
    }

    /// Factorization `μ_u(x) = init(x_1) ∏ kernel_k(x_{k-1}, x_k)`, when the
    /// family has one on `u`.
    pub(crate) fn markov_view(&self, u: &TimeGrid) -> Result<Option<(InitialLaw, Vec<StepKernel>)>> {
        self.check_grid(u)?;
        let t1 = u.first();
        Ok(match &self.kind {
            FamilyKind::Poisson { rate } => Some((
                InitialLaw::Poisson { mean: rate * t1.to_f64() },
                u.steps().map(|(s, r)| StepKernel::PoissonIncrement { mean: rate * (r - s).to_f64() }).collect(),
            )),
            FamilyKind::Ctmc { generator, .. } => {
                let init = self.marginal_vector(t1)?.expect("finite family");
                let kernels = u
                    .steps()
                    .map(|(s, r)| self.kernel_matrix(generator, r - s).map(StepKernel::Matrix))
                    .collect::<Result<_>>()?;
                Some((InitialLaw::Vector(init), kernels))
            }
            FamilyKind::Iid { marginal } => {
                let shared = Arc::new(marginal.clone());
                Some((
                    InitialLaw::Vector(marginal.clone()),
                    u.steps().map(|_| StepKernel::Independent(Arc::clone(&shared))).collect(),
                ))
            }
            FamilyKind::Perturbed { base, defect_time, .. } => {
                if u.len() == 1 && u.first() == *defect_time {
                    None
                } else {
                    base.markov_view(u)?
                }
            }
        })
    }

    /// `μ_u({x_u})`.
    pub fn mass(&self, u: &TimeGrid, x: &StateTuple) -> Result<f64> {
        x.aligned_with(u)?;
        self.check_grid(u)?;
        if let Some(&bad) = x.as_slice().iter().find(|&&s| !self.space.contains(s)) {
            return Err(Error::UnknownState(bad));
        }
        if let FamilyKind::Perturbed { base, defect, defect_time, donor, recipient } = &self.kind {
            if u.len() == 1 && u.first() == *defect_time {
                let state = x.0[0];
                let mut p = base.mass(u, x)?;
                if state == *donor {
                    p -= defect;
                }
                if state == *recipient {
                    p += defect;
                }
                return Ok(p.max(0.0));
            }
            return base.mass(u, x);
        }
        let (init, kernels) = self.markov_view(u)?.expect("built-in families are Markov");
        let states = x.as_slice();
        let mut p = init.prob(states[0]);
        for (k, kernel) in kernels.iter().enumerate() {
            if p == 0.0 {
                break;
            }
            p *= kernel.prob(states[k], states[k + 1]);
        }
        Ok(p)
    }

    /// Calls `visit` on every atom of `μ_u` with nonzero mass inside the
    /// truncation window, and returns the total mass visited.
    pub fn for_each_atom(
        &self,
        u: &TimeGrid,
        truncation: Truncation,
        mut visit: impl FnMut(&[State], f64),
    ) -> Result<f64> {
        let cap = truncation.cap(&self.space)? as State;
        self.check_grid(u)?;
        let mut total = 0.0;
        match self.markov_view(u)? {
            Some((init, kernels)) => {
                let mut stack = vec![0 as State; u.len()];
                for x in 0..cap {
                    let p = init.prob(x);
                    if p == 0.0 {
                        continue;
                    }
                    stack[0] = x;
                    descend(&kernels, cap, 1, p, &mut stack, &mut |xs, p| {
                        total += p;
                        visit(xs, p);
                    });
                }
            }
            None => {
                for x in 0..cap {
                    let p = self.mass(u, &StateTuple(vec![x]))?;
                    if p > 0.0 {
                        total += p;
                        visit(&[x], p);
                    }
                }
            }
        }
        Ok(total)
    }

    /// Bracketing `[lo, hi]` of `μ_u(A)`: `lo` sums the truncated atoms in
    /// `A`, `hi` adds all mass the truncation could not see.
    pub fn prob_event(
        &self,
        u: &TimeGrid,
        event: impl Fn(&[State]) -> bool,
        truncation: Truncation,
    ) -> Result<ProbInterval> {
        let mut lo = 0.0;
        let total = self.for_each_atom(u, truncation, |xs, p| {
            if event(xs) {
                lo += p;
            }
        })?;
        let unseen = (1.0 - total).max(0.0);
        Ok(ProbInterval { lo: lo.min(1.0), hi: (lo + unseen).min(1.0) })
    }

    /// `μ_{(s,r)}(𝒳²_≠)`.
    pub fn change_prob(&self, s: Time, r: Time) -> Result<f64> {
        if s >= r {
            return Err(Error::EmptyInterval(s, r));
        }
        self.check_time(s)?;
        self.check_time(r)?;
        Ok(match &self.kind {
            FamilyKind::Poisson { rate } => -(-rate * (r - s).to_f64()).exp_m1(),
            FamilyKind::Ctmc { generator, .. } => {
                let pi = self.marginal_vector(s)?.expect("finite family");
                let p = self.kernel_matrix(generator, r - s)?;
                let n = pi.len();
                let moved: f64 = (0..n)
                    .map(|x| pi[x] * (0..n).filter(|&y| y != x).map(|y| p[(x, y)]).sum::<f64>())
                    .sum();
                moved.clamp(0.0, 1.0)
            }
            FamilyKind::Iid { marginal } => {
                let same: f64 = marginal.iter().map(|m| m * m).sum();
                (1.0 - same).clamp(0.0, 1.0)
            }
            FamilyKind::Perturbed { base, .. } => base.change_prob(s, r)?,
        })
    }

    /// `μ_{(s,r)}(𝒳²_=)`, computed from the diagonal rather than as a complement.
    pub fn stay_prob(&self, s: Time, r: Time) -> Result<f64> {
        if s >= r {
            return Err(Error::EmptyInterval(s, r));
        }
        self.check_time(s)?;
        self.check_time(r)?;
        Ok(match &self.kind {
            FamilyKind::Poisson { rate } => (-rate * (r - s).to_f64()).exp(),
            FamilyKind::Ctmc { generator, .. } => {
                let pi = self.marginal_vector(s)?.expect("finite family");
                let p = self.kernel_matrix(generator, r - s)?;
                pi.iter().enumerate().map(|(x, w)| w * p[(x, x)]).sum()
            }
            FamilyKind::Iid { marginal } => marginal.iter().map(|m| m * m).sum(),
            FamilyKind::Perturbed { base, .. } => base.stay_prob(s, r)?,
        })
    }
}

fn descend(
    kernels: &[StepKernel],
    cap: State,
    depth: usize,
    p: f64,
    stack: &mut Vec<State>,
    emit: &mut impl FnMut(&[State], f64),
) {
    if depth == stack.len() {
        emit(stack, p);
        return;
    }
    let prev = stack[depth - 1];
    let kernel = &kernels[depth - 1];
    let start = match kernel {
        StepKernel::PoissonIncrement { .. } => prev,
        _ => 0,
    };
    for y in start..cap {
        let q = kernel.prob(prev, y);
        if q == 0.0 {
            continue;
        }
        stack[depth] = y;
        descend(kernels, cap, depth + 1, p * q, stack, emit);
    }
}

pub(crate) fn row_times_matrix(row: &[f64], m: &DMatrix<f64>) -> Vec<f64> {
    let n = row.len();
    (0..n).map(|y| (0..n).map(|x| row[x] * m[(x, y)]).sum()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(x: f64) -> Time {
        Time::from_decimal(x).unwrap()
    }

    fn g(times: &[f64]) -> TimeGrid {
        TimeGrid::from_decimals(times).unwrap()
    }

    fn two_state(initial: Vec<f64>) -> FddFamily {
        FddFamily::ctmc(initial, RateMatrix::symmetric_two_state(1.0).unwrap()).unwrap()
    }

    #[test]
    fn poisson_masses() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let m = fam.mass(&g(&[0.0, 1.0]), &StateTuple(vec![0, 0])).unwrap();
        assert_abs_diff_eq!(m, 0.3678794412, epsilon = 1e-10);
        assert_eq!(fam.mass(&g(&[1.0, 2.0]), &StateTuple(vec![1, 0])).unwrap(), 0.0);
        assert!(matches!(fam.mass(&g(&[-1.0]), &StateTuple(vec![0])), Err(Error::OutsideDomain(_))));
        assert!(matches!(fam.mass(&g(&[1.0]), &StateTuple(vec![0, 1])), Err(Error::Misaligned { .. })));
    }

    #[test]
    fn ctmc_two_state_mass() {
        let fam = two_state(vec![1.0, 0.0]);
        let m = fam.mass(&g(&[0.0, 1.0]), &StateTuple(vec![0, 1])).unwrap();
        assert_abs_diff_eq!(m, 0.4323323584, epsilon = 1e-10);
        assert!(matches!(fam.mass(&g(&[1.0]), &StateTuple(vec![2])), Err(Error::UnknownState(2))));
    }

    #[test]
    fn prob_event_brackets_poisson_cdf() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let iv = fam.prob_event(&g(&[0.0, 1.0]), |x| x[1] <= 1, Truncation::first(50)).unwrap();
        let exact = 2.0 * (-1.0f64).exp();
        assert!(iv.lo <= exact + 1e-15 && exact <= iv.hi + 1e-15);
        assert!(iv.width() < 1e-12);
        let all = fam.prob_event(&g(&[0.5, 1.0, 3.0]), |_| true, Truncation::first(40)).unwrap();
        assert!(all.hi >= 1.0 - 1e-12 && all.width() < 1e-12);
        let none = fam.prob_event(&g(&[0.5, 1.0]), |_| false, Truncation::first(40)).unwrap();
        assert_eq!(none.lo, 0.0);
        assert!(matches!(fam.prob_event(&g(&[1.0]), |_| true, Truncation::first(0)), Err(Error::EmptyTruncation)));
    }

    #[test]
    fn coarse_truncation_widens_the_bracket() {
        let fam = FddFamily::poisson(3.0).unwrap();
        let iv = fam.prob_event(&g(&[1.0]), |x| x[0] == 0, Truncation::first(3)).unwrap();
        assert_abs_diff_eq!(iv.lo, (-3.0f64).exp(), epsilon = 1e-15);
        assert_abs_diff_eq!(iv.width(), poisson_tail(3.0, 3), epsilon = 1e-12);
    }

    #[test]
    fn change_probabilities() {
        let poisson = FddFamily::poisson(1.0).unwrap();
        assert_abs_diff_eq!(poisson.change_prob(t(0.0), t(1.0)).unwrap(), 0.6321205588, epsilon = 1e-10);
        let ctmc = two_state(vec![0.5, 0.5]);
        assert_abs_diff_eq!(ctmc.change_prob(t(0.0), t(1.0)).unwrap(), 0.4323323584, epsilon = 1e-10);
        assert!(matches!(ctmc.change_prob(t(1.0), t(1.0)), Err(Error::EmptyInterval(..))));
        let iid = FddFamily::iid(vec![0.25, 0.75]).unwrap();
        assert_abs_diff_eq!(iid.change_prob(t(0.0), t(0.1)).unwrap(), 0.375, epsilon = 1e-15);
        let small: Vec<f64> = (1..12).map(|j| poisson.change_prob(t(0.0), t(0.5f64.powi(j))).unwrap()).collect();
        assert!(small.windows(2).all(|w| w[1] < w[0]) && small[10] < 1e-3);
    }

    #[test]
    fn transition_matrix_examples() {
        let zero = RateMatrix::zero(3).unwrap();
        let p = transition_matrix(&zero, 5.0, 1e-12).unwrap();
        assert_abs_diff_eq!(p.entries, DMatrix::identity(3, 3), epsilon = 1e-15);

        let q = RateMatrix::symmetric_two_state(1.0).unwrap();
        let p = transition_matrix(&q, 1.0, 1e-12).unwrap();
        let stay = 0.5 * (1.0 + (-2.0f64).exp());
        let expected = DMatrix::from_row_slice(2, 2, &[stay, 1.0 - stay, 1.0 - stay, stay]);
        assert_abs_diff_eq!(p.entries, expected, epsilon = 1e-12);
    }

    #[test]
    fn transition_matrix_long_horizon_uses_squaring() {
        let q = RateMatrix::symmetric_two_state(50.0).unwrap();
        let p = transition_matrix(&q, 10.0, 1e-12).unwrap();
        for i in 0..2 {
            assert_abs_diff_eq!(p.entries.row(i).sum(), 1.0, epsilon = 1e-10);
            assert_abs_diff_eq!(p.entries[(i, 0)], 0.5, epsilon = 1e-10);
        }
    }

    #[test]
    fn rate_matrix_validation() {
        assert!(RateMatrix::from_rows(&[vec![-1.0, 1.0], vec![1.0, -1.0 + 1e-6]]).is_err());
        assert!(RateMatrix::from_rows(&[vec![1.0, -1.0], vec![1.0, -1.0]]).is_err());
        assert!(RateMatrix::from_rows(&[vec![-1.0, 1.0]]).is_err());
        let diag = rate_matrix_diagnostics(&DMatrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0 + 1e-6]));
        assert_eq!(diag.len(), 1);
        assert_eq!(diag[0].0, 1);
    }

    #[test]
    fn family_validation() {
        assert!(FddFamily::poisson(-1.0).is_err());
        assert!(FddFamily::iid(vec![0.5, 0.6]).is_err());
        assert!(FddFamily::ctmc(vec![1.0], RateMatrix::symmetric_two_state(1.0).unwrap()).is_err());
        let base = two_state(vec![1.0, 0.0]);
        assert!(FddFamily::perturbed(base.clone(), 0.0, t(0.5)).is_err());
        assert!(FddFamily::perturbed(base.clone(), 0.9, t(0.5)).is_err());
        assert!(FddFamily::perturbed(base, 0.1, t(0.5)).is_ok());
    }

    #[test]
    fn perturbed_family_moves_mass_only_on_the_defect_singleton() {
        let base = two_state(vec![1.0, 0.0]);
        let fam = FddFamily::perturbed(base.clone(), 0.1, t(0.5)).unwrap();
        let at = g(&[0.5]);
        let d = fam.mass(&at, &StateTuple(vec![0])).unwrap() - base.mass(&at, &StateTuple(vec![0])).unwrap();
        assert_abs_diff_eq!(d, -0.1, epsilon = 1e-15);
        let pair = g(&[0.25, 0.5]);
        let x = StateTuple(vec![0, 1]);
        assert_eq!(fam.mass(&pair, &x).unwrap(), base.mass(&pair, &x).unwrap());
        let total = fam.prob_event(&at, |_| true, Truncation::first(2)).unwrap();
        assert_abs_diff_eq!(total.lo, 1.0, epsilon = 1e-12);
    }
}
