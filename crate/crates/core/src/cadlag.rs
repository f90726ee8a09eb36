//! Piecewise-constant right-continuous paths.
//!
//! A [`CadlagPath`] is an anchor state plus a finite list of jump records
//! `(time, new_state)`. The value at `t` is the state set by the last record
//! at or before `t`, so right-continuity holds by construction and left
//! limits exist everywhere.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dense_points, State, StateTuple, TimeDomain, TimeGrid, TimeSet};
use crate::jumps::PathOracle;
use crate::time::Time;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CadlagPath {
    domain: TimeDomain,
    anchor: State,
    jumps: Vec<(Time, State)>,
    horizon: Time,
}

impl CadlagPath {
    /// `horizon` is required on unbounded domains and defaults to the right
    /// edge otherwise.
    pub fn new(domain: TimeDomain, anchor: State, jumps: Vec<(Time, State)>, horizon: Option<Time>) -> Result<Self> {
        let set = domain.full();
        let horizon = match (horizon, set.max()) {
            (Some(h), Some(edge)) if h > edge => {
                return Err(Error::InvalidPath(format!("horizon {h} lies beyond the domain edge {edge}")))
            }
            (Some(h), _) => h,
            (None, Some(edge)) => edge,
            (None, None) => return Err(Error::InvalidPath("an unbounded domain needs a horizon".into())),
        };
        if horizon < set.min() {
            return Err(Error::InvalidPath(format!("horizon {horizon} precedes the domain")));
        }
        let mut prev_time = set.min();
        let mut prev_state = anchor;
        for (i, &(t, x)) in jumps.iter().enumerate() {
            if t <= prev_time {
                return Err(Error::InvalidPath(format!(
                    "jump {i} at {t} is not strictly after {prev_time}"
                )));
            }
            if !set.contains(t) || t > horizon {
                return Err(Error::InvalidPath(format!("jump {i} at {t} lies outside the domain")));
            }
            if x == prev_state {
                return Err(Error::InvalidPath(format!("jump {i} at {t} does not change the state {x}")));
            }
            prev_time = t;
            prev_state = x;
        }
        Ok(CadlagPath { domain, anchor, jumps, horizon })
    }

    pub fn constant(domain: TimeDomain, state: State, horizon: Option<Time>) -> Result<Self> {
        Self::new(domain, state, Vec::new(), horizon)
    }

    pub fn domain(&self) -> &TimeDomain {
        &self.domain
    }

    pub fn anchor(&self) -> State {
        self.anchor
    }

    pub fn jumps(&self) -> &[(Time, State)] {
        &self.jumps
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    pub fn start(&self) -> Time {
        self.domain.full().min()
    }

    fn check_time(&self, t: Time) -> Result<()> {
        if self.domain.full().contains(t) && t <= self.horizon {
            Ok(())
        } else {
            Err(Error::OutsideDomain(t))
        }
    }

    fn state_after(&self, records: usize) -> State {
        if records == 0 {
            self.anchor
        } else {
            self.jumps[records - 1].1
        }
    }

    pub fn eval(&self, t: Time) -> Result<State> {
        self.check_time(t)?;
        Ok(self.state_after(self.jumps.partition_point(|j| j.0 <= t)))
    }

    pub fn left_limit(&self, t: Time) -> Result<State> {
        if !self.domain.full().is_left_limit_point(t) || t > self.horizon {
            return Err(Error::NotLeftLimitPoint(t));
        }
        Ok(self.state_after(self.jumps.partition_point(|j| j.0 < t)))
    }

    /// `ω(u)`.
    pub fn restrict(&self, u: &TimeGrid) -> Result<StateTuple> {
        let mut out = Vec::with_capacity(u.len());
        let mut k = 0;
        for &t in u.times() {
            self.check_time(t)?;
            while k < self.jumps.len() && self.jumps[k].0 <= t {
                k += 1;
            }
            out.push(self.state_after(k));
        }
        Ok(StateTuple(out))
    }

    /// Number of jump records in `(s, r]`.
    pub fn exact_jump_count(&self, s: Time, r: Time) -> usize {
        if s >= r {
            return 0;
        }
        self.jumps.partition_point(|j| j.0 <= r) - self.jumps.partition_point(|j| j.0 <= s)
    }

    /// Smallest spacing between consecutive jump times.
    pub fn min_jump_gap(&self) -> Option<Time> {
        self.jumps.windows(2).map(|w| w[1].0 - w[0].0).min()
    }

    pub fn is_monotone_increasing(&self) -> bool {
        let mut prev = self.anchor;
        self.jumps.iter().all(|&(_, x)| {
            let ok = x > prev;
            prev = x;
            ok
        })
    }

    /// Whether the path ever takes the value `x` on `[start, t]`.
    pub fn hits(&self, x: State, t: Time) -> bool {
        self.anchor == x || self.jumps.iter().take_while(|j| j.0 <= t).any(|j| j.1 == x)
    }
}

impl PathOracle for CadlagPath {
    fn values(&self, grid: &TimeGrid) -> Result<Vec<State>> {
        Ok(self.restrict(grid)?.0)
    }
}

/// Which rule fixed the value of the extension at a given instant.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtensionCase {
    /// `t ∈ 𝒮`: the path's own value.
    InDomain,
    /// `t ∉ 𝒮` but a right limit point of `𝒮`: the right limit along `𝒮`.
    RightLimit,
    /// `s* = sup 𝒮_{≤t}` is attained: the value at `s*`.
    SupAttained,
    /// `s*` not attained: the left limit at `s*`.
    SupLeftLimit,
    /// `𝒮_{≤t} = ∅`: the fill state.
    Fill,
}

/// `ψ(t)` and the case that produced it.
///
/// Domains here are finite unions of closed pieces, so a point outside `𝒮`
/// is never a right limit point of `𝒮` and `sup 𝒮_{≤t}` is always attained;
/// the `RightLimit` and `SupLeftLimit` branches exist for completeness.
pub fn extension_value(path: &CadlagPath, fill: State, t: Time) -> Result<(State, ExtensionCase)> {
    let set = path.domain.full();
    if set.contains(t) {
        return Ok((path.eval(t)?, ExtensionCase::InDomain));
    }
    if set.is_right_limit_point(t) {
        let next = path.jumps.partition_point(|j| j.0 <= t);
        return Ok((path.state_after(next), ExtensionCase::RightLimit));
    }
    match set.sup_at_or_below(t) {
        Some(s) if set.contains(s) => Ok((path.eval(s)?, ExtensionCase::SupAttained)),
        Some(s) => Ok((path.left_limit(s)?, ExtensionCase::SupLeftLimit)),
        None => Ok((fill, ExtensionCase::Fill)),
    }
}

/// Extends a path on `𝒮` to all of ℝ, represented on `window`.
pub fn extend_to_reals(path: &CadlagPath, fill: State, (lo, hi): (Time, Time)) -> Result<CadlagPath> {
    if lo > hi {
        return Err(Error::EmptyInterval(lo, hi));
    }
    if hi > path.horizon && path.domain.full().max() != Some(path.horizon) {
        return Err(Error::OutsideDomain(hi));
    }
    let set = path.domain.full();
    let mut candidates: Vec<Time> = path.jumps.iter().map(|j| j.0).collect();
    candidates.extend(set.intervals().iter().map(|iv| iv.0));
    candidates.extend(set.tail());
    candidates.retain(|&c| lo < c && c <= hi);
    candidates.sort_unstable();
    candidates.dedup();

    let (anchor, _) = extension_value(path, fill, lo)?;
    let mut current = anchor;
    let mut jumps = Vec::new();
    for c in candidates {
        let (x, _) = extension_value(path, fill, c)?;
        if x != current {
            jumps.push((c, x));
            current = x;
        }
    }
    CadlagPath::new(TimeDomain::interval(lo, hi)?, anchor, jumps, None)
}

/// States of a path on a finite truncation of a right-dense subset `𝒟`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenseSampleTable {
    domain: TimeDomain,
    samples: Vec<(Time, State)>,
    mesh: Time,
}

impl DenseSampleTable {
    pub fn new(domain: TimeDomain, samples: Vec<(Time, State)>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidPath("sample table is empty".into()));
        }
        if samples.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::InvalidPath("sample times must be strictly increasing".into()));
        }
        if let Some(&(t, _)) = samples.iter().find(|s| !domain.restricted().contains(s.0)) {
            return Err(Error::OutsideDomain(t));
        }
        let set = domain.restricted();
        let mesh = samples
            .windows(2)
            .filter(|w| set.pieces_within(w[0].0, w[1].0).len() == 1)
            .map(|w| w[1].0 - w[0].0)
            .max()
            .unwrap_or(Time::ZERO);
        Ok(DenseSampleTable { domain, samples, mesh })
    }

    /// Samples `path` on the dense truncation at `depth` of `𝒯` up to the horizon.
    pub fn from_path(path: &CadlagPath, depth: u32) -> Result<Self> {
        let set = clipped(path)?;
        let samples = dense_points(&set, depth)?
            .into_iter()
            .map(|t| Ok((t, path.eval(t)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::new(TimeDomain::new(set), samples)
    }

    /// As [`from_path`](Self::from_path), then bisects every cell whose end
    /// values differ until it is at most `2^-precision` wide. All added
    /// points are dyadic, so the table stays inside `𝒟`.
    pub fn refined_from_path(path: &CadlagPath, depth: u32, precision: u32) -> Result<Self> {
        let base = Self::from_path(path, depth)?;
        let finest = Time::from_int(1).halve(precision)?;
        let set = base.domain.restricted().clone();
        let mut samples = Vec::with_capacity(base.samples.len());
        for w in base.samples.windows(2) {
            samples.push(w[0]);
            if w[0].1 != w[1].1 && set.pieces_within(w[0].0, w[1].0).len() == 1 {
                let (mut lo, mut hi) = (w[0].0, w[1].0);
                let mut inner = Vec::new();
                while hi - lo > finest {
                    let mid = lo.midpoint(hi)?;
                    let x = path.eval(mid)?;
                    inner.push((mid, x));
                    if x == w[0].1 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                inner.sort_unstable_by_key(|s| s.0);
                samples.extend(inner);
            }
        }
        samples.push(base.samples[base.samples.len() - 1]);
        Self::new(base.domain, samples)
    }

    pub fn domain(&self) -> &TimeDomain {
        &self.domain
    }

    pub fn samples(&self) -> &[(Time, State)] {
        &self.samples
    }

    /// Largest spacing between consecutive samples in the same piece.
    pub fn mesh(&self) -> Time {
        self.mesh
    }
}

fn clipped(path: &CadlagPath) -> Result<TimeSet> {
    let set = path.domain.restricted();
    set.clip(set.min(), path.horizon).ok_or(Error::EmptyWindow)
}

/// A reconstructed path with, for each jump, the interval `(previous
/// sample, jump time]` the true jump time is known to lie in.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub path: CadlagPath,
    pub brackets: Vec<(Time, Time)>,
}

/// Default jump budget per unit window for a process with the given rate bound.
pub fn default_jump_budget(rate_bound: f64) -> usize {
    ((10.0 * rate_bound).ceil() as usize).max(1)
}

/// Rebuilds the càdlàg path behind a dense sample table.
///
/// Each maximal constant run of samples becomes one piece, starting at the
/// run's first sample time. `max_window_jumps` caps the changes allowed in
/// each unit window `[k, k+1)`.
pub fn reconstruct_from_dense(table: &DenseSampleTable, max_window_jumps: usize) -> Result<Reconstruction> {
    let samples = &table.samples;
    let anchor = samples[0].1;
    let mut jumps = Vec::new();
    let mut brackets = Vec::new();
    let mut window = (i64::MIN, 0usize);
    for w in samples.windows(2) {
        let ((prev_t, prev_x), (t, x)) = (w[0], w[1]);
        if x == prev_x {
            continue;
        }
        let k = t.floor();
        window = if k == window.0 { (k, window.1 + 1) } else { (k, 1) };
        if window.1 > max_window_jumps {
            return Err(Error::JumpBudgetExceeded { window_start: k, changes: window.1, budget: max_window_jumps });
        }
        jumps.push((t, x));
        brackets.push((prev_t, t));
    }
    let horizon = samples[samples.len() - 1].0;
    let set = table.domain.restricted();
    let set = set.clip(set.min(), horizon).ok_or(Error::EmptyWindow)?;
    let path = CadlagPath::new(TimeDomain::new(set), anchor, jumps, Some(horizon))?;
    Ok(Reconstruction { path, brackets })
}

/// Whether two paths agree at every point of the dense truncation at `depth`.
pub fn paths_equal_on_dense(p1: &CadlagPath, p2: &CadlagPath, depth: u32) -> Result<bool> {
    if p1.domain != p2.domain {
        return Err(Error::InvalidPath("paths live on different domains".into()));
    }
    let horizon = p1.horizon.min(p2.horizon);
    let set = p1.domain.restricted();
    let set = set.clip(set.min(), horizon).ok_or(Error::EmptyWindow)?;
    for t in dense_points(&set, depth)? {
        if p1.eval(t)? != p2.eval(t)? {
            return Ok(false);
        }
    }
    Ok(true)
}
