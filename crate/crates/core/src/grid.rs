//! State spaces, time domains, time grids and state tuples.
//!
//! A [`TimeGrid`] is a strictly increasing tuple of instants; `u ⊑ v` holds
//! when every instant of `u` also occurs in `v`. Grids are merged, tuples are
//! projected along sub-grids, and windows of a domain are exhausted by nested
//! dyadic grids.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::Time;

/// Index of a state in the canonical enumeration of its [`StateSpace`].
pub type State = u32;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum StateSpace {
    /// Finitely many labelled states, enumerated in list order.
    Finite { labels: Vec<String> },
    /// `{0, 1, 2, ...}` enumerated by value.
    NonNegativeIntegers,
}

impl StateSpace {
    pub fn finite(labels: Vec<String>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::param("state space", "needs at least one label"));
        }
        let distinct: BTreeSet<_> = labels.iter().collect();
        if distinct.len() != labels.len() {
            return Err(Error::param("state space", "labels must be distinct"));
        }
        Ok(StateSpace::Finite { labels })
    }

    /// Finite space labelled `0..n`.
    pub fn numbered(n: usize) -> Result<Self> {
        Self::finite((0..n).map(|i| i.to_string()).collect())
    }

    /// `None` for a countably infinite space.
    pub fn size(&self) -> Option<usize> {
        match self {
            StateSpace::Finite { labels } => Some(labels.len()),
            StateSpace::NonNegativeIntegers => None,
        }
    }

    pub fn contains(&self, state: State) -> bool {
        self.size().is_none_or(|n| (state as usize) < n)
    }

    pub fn label(&self, state: State) -> Option<String> {
        match self {
            StateSpace::Finite { labels } => labels.get(state as usize).cloned(),
            StateSpace::NonNegativeIntegers => Some(state.to_string()),
        }
    }

    pub fn index_of(&self, label: &str) -> Option<State> {
        match self {
            StateSpace::Finite { labels } => labels.iter().position(|l| l == label).map(|i| i as State),
            StateSpace::NonNegativeIntegers => label.parse().ok(),
        }
    }
}

/// A finite union of closed bounded intervals (possibly degenerate, i.e.
/// isolated points) followed by an optional closed half-line `[tail, +∞)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeSet {
    intervals: Vec<(Time, Time)>,
    tail: Option<Time>,
}

impl TimeSet {
    pub fn new(intervals: Vec<(Time, Time)>, tail: Option<Time>) -> Result<Self> {
        for &(s, r) in &intervals {
            if s > r {
                return Err(Error::InvalidDomain(format!("interval [{s}, {r}] is reversed")));
            }
        }
        for pair in intervals.windows(2) {
            if pair[0].1 >= pair[1].0 {
                return Err(Error::InvalidDomain(format!(
                    "intervals ending at {} and starting at {} are not sorted and disjoint",
                    pair[0].1, pair[1].0
                )));
            }
        }
        if let (Some(tail), Some(&(_, last))) = (tail, intervals.last()) {
            if tail <= last {
                return Err(Error::InvalidDomain(format!(
                    "unbounded tail at {tail} overlaps the interval ending at {last}"
                )));
            }
        }
        if intervals.is_empty() && tail.is_none() {
            return Err(Error::InvalidDomain("time set is empty".into()));
        }
        Ok(TimeSet { intervals, tail })
    }

    pub fn interval(s: Time, r: Time) -> Result<Self> {
        Self::new(vec![(s, r)], None)
    }

    pub fn half_line(start: Time) -> Self {
        TimeSet { intervals: Vec::new(), tail: Some(start) }
    }

    pub fn nonnegative_reals() -> Self {
        Self::half_line(Time::ZERO)
    }

    pub fn intervals(&self) -> &[(Time, Time)] {
        &self.intervals
    }

    pub fn tail(&self) -> Option<Time> {
        self.tail
    }

    pub fn contains(&self, t: Time) -> bool {
        self.tail.is_some_and(|a| a <= t) || self.intervals.iter().any(|&(s, r)| s <= t && t <= r)
    }

    /// Every `(t, t+δ)` meets the set.
    pub fn is_right_limit_point(&self, t: Time) -> bool {
        self.tail.is_some_and(|a| a <= t) || self.intervals.iter().any(|&(s, r)| s <= t && t < r)
    }

    /// Every `(t-δ, t)` meets the set.
    pub fn is_left_limit_point(&self, t: Time) -> bool {
        self.tail.is_some_and(|a| a < t) || self.intervals.iter().any(|&(s, r)| s < t && t <= r)
    }

    pub fn min(&self) -> Time {
        self.intervals.first().map(|iv| iv.0).or(self.tail).expect("time sets are nonempty")
    }

    /// Right edge, `None` when the set is unbounded.
    pub fn max(&self) -> Option<Time> {
        match self.tail {
            Some(_) => None,
            None => self.intervals.last().map(|iv| iv.1),
        }
    }

    /// `max(set ∩ (-∞, t])`, attained because every piece is closed.
    pub fn sup_at_or_below(&self, t: Time) -> Option<Time> {
        if let Some(a) = self.tail {
            if a <= t {
                return Some(t);
            }
        }
        self.intervals.iter().rev().find(|iv| iv.0 <= t).map(|&(_, r)| r.min(t))
    }

    /// The closed pieces of `set ∩ [lo, hi]`, in order.
    pub fn pieces_within(&self, lo: Time, hi: Time) -> Vec<(Time, Time)> {
        let mut out: Vec<(Time, Time)> = self
            .intervals
            .iter()
            .filter(|&&(s, r)| s <= hi && r >= lo)
            .map(|&(s, r)| (s.max(lo), r.min(hi)))
            .collect();
        if let Some(a) = self.tail {
            if a <= hi {
                out.push((a.max(lo), hi));
            }
        }
        out
    }

    /// `set ∩ [lo, hi]`, or `None` if empty.
    pub fn clip(&self, lo: Time, hi: Time) -> Option<TimeSet> {
        let pieces = self.pieces_within(lo, hi);
        if pieces.is_empty() {
            None
        } else {
            Some(TimeSet { intervals: pieces, tail: None })
        }
    }

    pub fn is_subset_of(&self, other: &TimeSet) -> bool {
        let piece_inside = |s: Time, r: Time| {
            other.tail.is_some_and(|a| a <= s) || other.intervals.iter().any(|&(a, b)| a <= s && r <= b)
        };
        let tail_ok = match self.tail {
            None => true,
            Some(a) => other.tail.is_some_and(|b| b <= a),
        };
        tail_ok && self.intervals.iter().all(|&(s, r)| piece_inside(s, r))
    }
}

/// The full time domain `𝕋` and the sub-domain `𝒯 ⊆ 𝕋` that events may
/// depend on.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeDomain {
    full: TimeSet,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    restriction: Option<TimeSet>,
}

impl TimeDomain {
    pub fn new(full: TimeSet) -> Self {
        TimeDomain { full, restriction: None }
    }

    pub fn with_restriction(full: TimeSet, restriction: TimeSet) -> Result<Self> {
        if !restriction.is_subset_of(&full) {
            return Err(Error::InvalidDomain("restriction is not contained in the full domain".into()));
        }
        Ok(TimeDomain { full, restriction: Some(restriction) })
    }

    pub fn nonnegative_reals() -> Self {
        Self::new(TimeSet::nonnegative_reals())
    }

    pub fn interval(s: Time, r: Time) -> Result<Self> {
        Ok(Self::new(TimeSet::interval(s, r)?))
    }

    pub fn full(&self) -> &TimeSet {
        &self.full
    }

    /// `𝒯`: the restriction if one was given, else the full domain.
    pub fn restricted(&self) -> &TimeSet {
        self.restriction.as_ref().unwrap_or(&self.full)
    }
}

#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct TimeGrid(Vec<Time>);

impl TimeGrid {
    pub fn new(times: Vec<Time>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("a grid needs at least one time".into()));
        }
        if let Some(pair) = times.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!("{} is not before {}", pair[0], pair[1])));
        }
        Ok(TimeGrid(times))
    }

    pub fn from_decimals(times: &[f64]) -> Result<Self> {
        Self::new(times.iter().map(|&t| Time::from_decimal(t)).collect::<Result<_>>()?)
    }

    pub fn singleton(t: Time) -> Self {
        TimeGrid(vec![t])
    }

    pub fn times(&self) -> &[Time] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> Time {
        self.0[0]
    }

    pub fn last(&self) -> Time {
        self.0[self.0.len() - 1]
    }

    /// `t_n - t_1`.
    pub fn span(&self) -> Time {
        self.last() - self.first()
    }

    /// Largest gap between consecutive times, zero for singletons.
    pub fn mesh(&self) -> Time {
        self.0.windows(2).map(|w| w[1] - w[0]).max().unwrap_or(Time::ZERO)
    }

    pub fn index_of(&self, t: Time) -> Option<usize> {
        self.0.binary_search(&t).ok()
    }

    pub fn contains(&self, t: Time) -> bool {
        self.index_of(t).is_some()
    }

    pub fn is_subgrid_of(&self, other: &TimeGrid) -> bool {
        is_subgrid(self, other)
    }

    pub fn within(&self, set: &TimeSet) -> bool {
        self.0.iter().all(|&t| set.contains(t))
    }

    /// Consecutive pairs `(t_{k-1}, t_k)`.
    pub fn steps(&self) -> impl Iterator<Item = (Time, Time)> + '_ {
        self.0.windows(2).map(|w| (w[0], w[1]))
    }
}

impl fmt::Debug for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("TimeGrid").field(&self.0).finish()
    }
}

impl fmt::Display for TimeGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, t) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}")?;
        }
        write!(f, ")")
    }
}

impl<'de> Deserialize<'de> for TimeGrid {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let times = Vec::<Time>::deserialize(deserializer)?;
        TimeGrid::new(times).map_err(serde::de::Error::custom)
    }
}

/// States `(x_{t_1}, ..., x_{t_n})` aligned with some grid.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateTuple(pub Vec<State>);

impl StateTuple {
    pub fn as_slice(&self) -> &[State] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn aligned_with(&self, grid: &TimeGrid) -> Result<()> {
        if self.len() != grid.len() {
            return Err(Error::Misaligned { expected: grid.len(), got: self.len() });
        }
        Ok(())
    }
}

impl From<Vec<State>> for StateTuple {
    fn from(states: Vec<State>) -> Self {
        StateTuple(states)
    }
}

/// `u ⊑ v`.
pub fn is_subgrid(u: &TimeGrid, v: &TimeGrid) -> bool {
    let mut rest = v.times().iter();
    u.times().iter().all(|t| rest.any(|s| s == t))
}

/// The sorted union of two grids: the smallest grid containing both.
pub fn merge_grids(u: &TimeGrid, v: &TimeGrid) -> TimeGrid {
    let (a, b) = (u.times(), v.times());
    let mut out = Vec::with_capacity(a.len() + b.len());
    let (mut i, mut j) = (0, 0);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) if x == y => {
                i += 1;
                j += 1;
                x
            }
            (Some(&x), Some(&y)) if x < y => {
                i += 1;
                x
            }
            (_, Some(&y)) => {
                j += 1;
                y
            }
            (Some(&x), None) => {
                i += 1;
                x
            }
            (None, None) => unreachable!(),
        };
        out.push(next);
    }
    TimeGrid(out)
}

/// Positions of the times of `v` inside `u`, if `v ⊑ u`.
pub fn subgrid_positions(u: &TimeGrid, v: &TimeGrid) -> Result<Vec<usize>> {
    let mut positions = Vec::with_capacity(v.len());
    let mut start = 0;
    for &t in v.times() {
        let offset = u.times()[start..].iter().position(|&s| s == t).ok_or(Error::NotSubgrid)?;
        positions.push(start + offset);
        start += offset + 1;
    }
    Ok(positions)
}

/// `x_v`: the components of `x_u` at the times of `v ⊑ u`.
pub fn project_tuple(x_u: &StateTuple, u: &TimeGrid, v: &TimeGrid) -> Result<StateTuple> {
    x_u.aligned_with(u)?;
    let positions = subgrid_positions(u, v)?;
    Ok(StateTuple(positions.into_iter().map(|i| x_u.0[i]).collect()))
}

/// Nested grids `G_0 ⊑ G_1 ⊑ ... ⊑ G_depth` exhausting `[s, r] ∩ 𝒯`.
///
/// `G_d` holds the dyadic points `s + j (r - s) / 2^d` that lie in `𝒯`, plus
/// the endpoints of every piece of `[s, r] ∩ 𝒯`.
pub fn dyadic_refinement(domain: &TimeDomain, window: (Time, Time), depth: u32) -> Result<Vec<TimeGrid>> {
    (0..=depth).map(|d| dyadic_grid(domain, window, d)).collect()
}

/// The single level `G_depth` of [`dyadic_refinement`].
pub fn dyadic_grid(domain: &TimeDomain, (s, r): (Time, Time), depth: u32) -> Result<TimeGrid> {
    if s > r {
        return Err(Error::EmptyInterval(s, r));
    }
    let set = domain.restricted();
    let pieces = set.pieces_within(s, r);
    if pieces.is_empty() {
        return Err(Error::EmptyWindow);
    }
    let step = (r - s).halve(depth)?;
    let mut times: Vec<Time> = Vec::new();
    if step == Time::ZERO {
        times.push(s);
    } else {
        let cells = 1i64.checked_shl(depth).ok_or(Error::TimeOverflow)?;
        let mut piece = 0;
        for j in 0..=cells {
            let t = s.checked_add(step.mul_int(j)?)?;
            while piece < pieces.len() && pieces[piece].1 < t {
                piece += 1;
            }
            if piece < pieces.len() && pieces[piece].0 <= t {
                times.push(t);
            }
        }
    }
    for &(a, b) in &pieces {
        times.push(a);
        times.push(b);
    }
    times.sort_unstable();
    times.dedup();
    TimeGrid::new(times)
}

/// Finite truncation of a countable right-dense subset `𝒟` of `𝒯`.
///
/// Every interval endpoint and isolated point is included, together with the
/// dyadic rationals `j 2^-depth` inside each piece; an unbounded tail `[a, ∞)`
/// is cut at `a + depth + 1`. The sets are nested in `depth` and their union
/// is right-dense in `𝒯`.
pub fn dense_countable_subset(domain: &TimeDomain, depth: u32) -> Result<Vec<Time>> {
    dense_points(domain.restricted(), depth)
}

/// `ceil(t 2^depth)`.
fn dyadic_index_ceil(t: Time, depth: u32) -> Result<i64> {
    let scaled = t.mul_int(1i64.checked_shl(depth).ok_or(Error::TimeOverflow)?)?;
    let k = scaled.floor();
    Ok(if Time::from_int(k) < scaled { k + 1 } else { k })
}

fn push_dyadics(out: &mut Vec<Time>, a: Time, b: Time, depth: u32) -> Result<()> {
    out.push(a);
    out.push(b);
    let first = dyadic_index_ceil(a, depth)?;
    let mut j = first;
    loop {
        let p = Time::dyadic(j, depth)?;
        if p > b {
            break;
        }
        out.push(p);
        j += 1;
    }
    Ok(())
}

pub(crate) fn dense_points(set: &TimeSet, depth: u32) -> Result<Vec<Time>> {
    let mut out = Vec::new();
    for &(a, b) in set.intervals() {
        push_dyadics(&mut out, a, b, depth)?;
    }
    if let Some(a) = set.tail() {
        push_dyadics(&mut out, a, a.checked_add(Time::from_int(depth as i64 + 1))?, depth)?;
    }
    out.sort_unstable();
    out.dedup();
    Ok(out)
}

/// Upper bound on the spacing inside any piece of [`dense_countable_subset`] at `depth`.
pub fn dense_mesh(set: &TimeSet, depth: u32) -> Result<Time> {
    if set.tail().is_some() || set.intervals().iter().any(|iv| iv.0 < iv.1) {
        Time::from_int(1).halve(depth)
    } else {
        Ok(Time::ZERO)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(x: f64) -> Time {
        Time::from_decimal(x).unwrap()
    }

    fn g(times: &[f64]) -> TimeGrid {
        TimeGrid::from_decimals(times).unwrap()
    }

    fn point_and_interval() -> TimeDomain {
        TimeDomain::new(TimeSet::new(vec![(t(0.0), t(0.0)), (t(2.0), t(3.0))], None).unwrap())
    }

    #[test]
    fn subgrid_relation() {
        assert!(is_subgrid(&g(&[1.0, 3.0]), &g(&[1.0, 2.0, 3.0])));
        assert!(!is_subgrid(&g(&[1.0, 3.0]), &g(&[1.0, 2.0])));
        assert!(is_subgrid(&g(&[2.0]), &g(&[2.0])));
    }

    #[test]
    fn merging_grids() {
        assert_eq!(merge_grids(&g(&[1.0, 3.0]), &g(&[2.0, 3.0])), g(&[1.0, 2.0, 3.0]));
        assert_eq!(merge_grids(&g(&[1.0, 2.0]), &g(&[1.0, 2.0])), g(&[1.0, 2.0]));
        assert_eq!(merge_grids(&g(&[0.0]), &g(&[5.0])), g(&[0.0, 5.0]));
    }

    #[test]
    fn projecting_tuples() {
        let u = g(&[1.0, 2.0, 3.0]);
        let x = StateTuple(vec![0, 1, 2]);
        assert_eq!(project_tuple(&x, &u, &g(&[1.0, 3.0])).unwrap().0, vec![0, 2]);
        assert_eq!(project_tuple(&x, &u, &u).unwrap(), x);
        let x2 = StateTuple(vec![0, 1]);
        assert_eq!(project_tuple(&x2, &g(&[1.0, 2.0]), &g(&[2.0])).unwrap().0, vec![1]);
        assert!(matches!(project_tuple(&x, &u, &g(&[4.0])), Err(Error::NotSubgrid)));
        assert!(matches!(project_tuple(&x2, &u, &u), Err(Error::Misaligned { .. })));
    }

    #[test]
    fn grids_reject_unsorted_or_empty() {
        assert!(TimeGrid::from_decimals(&[1.0, 1.0]).is_err());
        assert!(TimeGrid::from_decimals(&[2.0, 1.0]).is_err());
        assert!(TimeGrid::new(vec![]).is_err());
    }

    #[test]
    fn dyadic_refinement_on_unit_interval() {
        let domain = TimeDomain::interval(t(0.0), t(1.0)).unwrap();
        let grids = dyadic_refinement(&domain, (t(0.0), t(1.0)), 1).unwrap();
        assert_eq!(grids, vec![g(&[0.0, 1.0]), g(&[0.0, 0.5, 1.0])]);
    }

    #[test]
    fn dyadic_refinement_adds_piece_endpoints() {
        let grids = dyadic_refinement(&point_and_interval(), (t(0.0), t(3.0)), 0).unwrap();
        assert_eq!(grids, vec![g(&[0.0, 2.0, 3.0])]);
        let deep = dyadic_refinement(&point_and_interval(), (t(0.0), t(3.0)), 6).unwrap();
        for pair in deep.windows(2) {
            assert!(is_subgrid(&pair[0], &pair[1]));
        }
        assert!(matches!(
            dyadic_refinement(&point_and_interval(), (t(0.5), t(1.5)), 2),
            Err(Error::EmptyWindow)
        ));
    }

    #[test]
    fn right_limit_points() {
        let unit = TimeDomain::interval(t(0.0), t(1.0)).unwrap();
        assert!(unit.restricted().is_right_limit_point(t(0.0)));
        assert!(!unit.restricted().is_right_limit_point(t(1.0)));
        assert!(!point_and_interval().restricted().is_right_limit_point(t(0.0)));
        assert!(TimeSet::nonnegative_reals().is_right_limit_point(t(7.0)));
        assert!(!TimeSet::nonnegative_reals().is_left_limit_point(t(0.0)));
    }

    #[test]
    fn dense_subsets() {
        let unit = TimeDomain::interval(t(0.0), t(1.0)).unwrap();
        assert_eq!(
            dense_countable_subset(&unit, 2).unwrap(),
            vec![t(0.0), t(0.25), t(0.5), t(0.75), t(1.0)]
        );
        let point = TimeDomain::new(TimeSet::new(vec![(t(5.0), t(5.0))], None).unwrap());
        for depth in 0..4 {
            assert_eq!(dense_countable_subset(&point, depth).unwrap(), vec![t(5.0)]);
        }
        let coarse = dense_countable_subset(&point_and_interval(), 3).unwrap();
        let fine = dense_countable_subset(&point_and_interval(), 4).unwrap();
        assert!(coarse.iter().all(|x| fine.contains(x)));
        assert_eq!(dense_mesh(point_and_interval().restricted(), 3).unwrap(), t(0.125));
    }

    #[test]
    fn domain_validation() {
        assert!(TimeSet::new(vec![(t(0.0), t(2.0)), (t(1.0), t(3.0))], None).is_err());
        assert!(TimeSet::new(vec![(t(0.0), t(2.0))], Some(t(1.0))).is_err());
        let full = TimeSet::interval(t(0.0), t(3.0)).unwrap();
        let inner = TimeSet::new(vec![(t(0.0), t(0.0)), (t(2.0), t(3.0))], None).unwrap();
        assert!(TimeDomain::with_restriction(full.clone(), inner.clone()).is_ok());
        assert!(TimeDomain::with_restriction(inner, full).is_err());
    }

    #[test]
    fn sup_below() {
        let set = point_and_interval();
        let set = set.restricted();
        assert_eq!(set.sup_at_or_below(t(0.5)), Some(t(0.0)));
        assert_eq!(set.sup_at_or_below(t(2.5)), Some(t(2.5)));
        assert_eq!(set.sup_at_or_below(t(9.0)), Some(t(3.0)));
        assert_eq!(set.sup_at_or_below(t(-1.0)), None);
    }
}
