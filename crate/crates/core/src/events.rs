//! Cylinder events `[X_u ∈ A]` and the charge a family induces on them.
//!
//! Membership is a predicate rather than a materialized atom set, so events
//! over countably infinite state spaces stay finite objects. Each leaf of a
//! predicate refers to instants, not positions, which lets an event be lifted
//! to any finer grid unchanged.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdd::{FddFamily, ProbInterval, Truncation};
use crate::grid::{is_subgrid, merge_grids, State, TimeGrid};
use crate::jumps::count_jumps_tuple;
use crate::report::{CheckReport, Witness};
use crate::time::Time;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "op")]
pub enum Predicate {
    True,
    False,
    /// Membership in an explicit list of tuples on `grid`. `exact` is false
    /// when the list was cut off by a truncation window.
    Atoms { grid: TimeGrid, atoms: BTreeSet<Vec<State>>, exact: bool },
    /// `x_time = state`.
    StateAt { time: Time, state: State },
    /// `x_s ≠ x_r`.
    Differ { s: Time, r: Time },
    /// Every component along `grid` is the same.
    AllEqual { grid: TimeGrid },
    /// `η̂_grid ≥ k`.
    JumpsAtLeast { grid: TimeGrid, k: usize },
    Not(Box<Predicate>),
    And(Vec<Predicate>),
    Or(Vec<Predicate>),
}

impl Predicate {
    /// Every instant the predicate reads.
    pub fn times(&self) -> BTreeSet<Time> {
        let mut out = BTreeSet::new();
        self.collect_times(&mut out);
        out
    }

    fn collect_times(&self, out: &mut BTreeSet<Time>) {
        match self {
            Predicate::True | Predicate::False => {}
            Predicate::Atoms { grid, .. } | Predicate::AllEqual { grid } | Predicate::JumpsAtLeast { grid, .. } => {
                out.extend(grid.times().iter().copied())
            }
            Predicate::StateAt { time, .. } => {
                out.insert(*time);
            }
            Predicate::Differ { s, r } => {
                out.insert(*s);
                out.insert(*r);
            }
            Predicate::Not(p) => p.collect_times(out),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().for_each(|p| p.collect_times(out)),
        }
    }

    fn compile(&self, grid: &TimeGrid) -> Result<Compiled> {
        let at = |t: Time| grid.index_of(t).ok_or(Error::NotSubgrid);
        let positions = |g: &TimeGrid| g.times().iter().map(|&t| at(t)).collect::<Result<Vec<_>>>();
        Ok(match self {
            Predicate::True => Compiled::Const(true),
            Predicate::False => Compiled::Const(false),
            Predicate::Atoms { grid: g, atoms, .. } => Compiled::Atoms(positions(g)?, atoms.clone()),
            Predicate::StateAt { time, state } => Compiled::StateAt(at(*time)?, *state),
            Predicate::Differ { s, r } => Compiled::Differ(at(*s)?, at(*r)?),
            Predicate::AllEqual { grid: g } => Compiled::AllEqual(positions(g)?),
            Predicate::JumpsAtLeast { grid: g, k } => Compiled::JumpsAtLeast(positions(g)?, *k),
            Predicate::Not(p) => Compiled::Not(Box::new(p.compile(grid)?)),
            Predicate::And(ps) => Compiled::And(ps.iter().map(|p| p.compile(grid)).collect::<Result<_>>()?),
            Predicate::Or(ps) => Compiled::Or(ps.iter().map(|p| p.compile(grid)).collect::<Result<_>>()?),
        })
    }

    fn exact(&self) -> bool {
        match self {
            Predicate::Atoms { exact, .. } => *exact,
            Predicate::Not(p) => p.exact(),
            Predicate::And(ps) | Predicate::Or(ps) => ps.iter().all(Predicate::exact),
            _ => true,
        }
    }
}

/// A predicate resolved against one grid's positions.
enum Compiled {
    Const(bool),
    Atoms(Vec<usize>, BTreeSet<Vec<State>>),
    StateAt(usize, State),
    Differ(usize, usize),
    AllEqual(Vec<usize>),
    JumpsAtLeast(Vec<usize>, usize),
    Not(Box<Compiled>),
    And(Vec<Compiled>),
    Or(Vec<Compiled>),
}

impl Compiled {
    fn holds(&self, x: &[State]) -> bool {
        let pick = |pos: &[usize]| pos.iter().map(|&i| x[i]).collect::<Vec<_>>();
        match self {
            Compiled::Const(b) => *b,
            Compiled::Atoms(pos, atoms) => atoms.contains(&pick(pos)),
            Compiled::StateAt(i, s) => x[*i] == *s,
            Compiled::Differ(i, j) => x[*i] != x[*j],
            Compiled::AllEqual(pos) => pos.windows(2).all(|w| x[w[0]] == x[w[1]]),
            Compiled::JumpsAtLeast(pos, k) => count_jumps_tuple(&pick(pos)) >= *k,
            Compiled::Not(p) => !p.holds(x),
            Compiled::And(ps) => ps.iter().all(|p| p.holds(x)),
            Compiled::Or(ps) => ps.iter().any(|p| p.holds(x)),
        }
    }
}

/// `[X_u ∈ A]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderEvent {
    grid: TimeGrid,
    predicate: Predicate,
}

impl CylinderEvent {
    pub fn new(grid: TimeGrid, predicate: Predicate) -> Result<Self> {
        if predicate.times().iter().any(|&t| !grid.contains(t)) {
            return Err(Error::NotSubgrid);
        }
        Ok(CylinderEvent { grid, predicate })
    }

    pub fn full(grid: TimeGrid) -> Self {
        CylinderEvent { grid, predicate: Predicate::True }
    }

    pub fn empty(grid: TimeGrid) -> Self {
        CylinderEvent { grid, predicate: Predicate::False }
    }

    pub fn atoms(grid: TimeGrid, atoms: impl IntoIterator<Item = Vec<State>>) -> Result<Self> {
        let atoms: BTreeSet<Vec<State>> = atoms.into_iter().collect();
        if let Some(bad) = atoms.iter().find(|a| a.len() != grid.len()) {
            return Err(Error::Misaligned { expected: grid.len(), got: bad.len() });
        }
        Ok(CylinderEvent { predicate: Predicate::Atoms { grid: grid.clone(), atoms, exact: true }, grid })
    }

    pub fn state_at(t: Time, state: State) -> Self {
        CylinderEvent { grid: TimeGrid::singleton(t), predicate: Predicate::StateAt { time: t, state } }
    }

    /// `[X_{(s,r)} ∈ 𝒳²_≠]`.
    pub fn changes(s: Time, r: Time) -> Result<Self> {
        Self::new(TimeGrid::new(vec![s, r])?, Predicate::Differ { s, r })
    }

    /// `[X_{(s,r)} ∈ 𝒳²_=]`.
    pub fn stays(s: Time, r: Time) -> Result<Self> {
        Ok(Self::changes(s, r)?.complement())
    }

    pub fn jumps_at_least(grid: TimeGrid, k: usize) -> Self {
        CylinderEvent { predicate: Predicate::JumpsAtLeast { grid: grid.clone(), k }, grid }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn predicate(&self) -> &Predicate {
        &self.predicate
    }

    pub fn contains(&self, x: &[State]) -> Result<bool> {
        if x.len() != self.grid.len() {
            return Err(Error::Misaligned { expected: self.grid.len(), got: x.len() });
        }
        Ok(self.predicate.compile(&self.grid)?.holds(x))
    }

    /// The same event represented on a finer grid `w ⊒ u`.
    pub fn lift(&self, w: &TimeGrid) -> Result<Self> {
        if !is_subgrid(&self.grid, w) {
            return Err(Error::NotSubgrid);
        }
        Ok(CylinderEvent { grid: w.clone(), predicate: self.predicate.clone() })
    }

    pub fn complement(&self) -> Self {
        let predicate = match &self.predicate {
            Predicate::True => Predicate::False,
            Predicate::False => Predicate::True,
            Predicate::Not(p) => (**p).clone(),
            p => Predicate::Not(Box::new(p.clone())),
        };
        CylinderEvent { grid: self.grid.clone(), predicate }
    }

    /// Membership test bound to `grid ⊒ self.grid`.
    pub fn matcher(&self, grid: &TimeGrid) -> Result<impl Fn(&[State]) -> bool> {
        let compiled = self.predicate.compile(grid)?;
        Ok(move |x: &[State]| compiled.holds(x))
    }
}

/// `e1 ∩ e2` on the merged grid.
pub fn intersect(e1: &CylinderEvent, e2: &CylinderEvent) -> CylinderEvent {
    let grid = merge_grids(&e1.grid, &e2.grid);
    let complementary = |a: &Predicate, b: &Predicate| matches!(b, Predicate::Not(inner) if **inner == *a);
    let predicate = match (&e1.predicate, &e2.predicate) {
        (Predicate::False, _) | (_, Predicate::False) => Predicate::False,
        (Predicate::True, p) | (p, Predicate::True) => p.clone(),
        (a, b) if complementary(a, b) || complementary(b, a) => Predicate::False,
        (a, b) => Predicate::And(vec![a.clone(), b.clone()]),
    };
    CylinderEvent { grid, predicate }
}

/// Value of the induced charge on one cylinder event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeValue {
    pub lo: f64,
    pub hi: f64,
    pub exact: bool,
}

impl ChargeValue {
    fn from_interval(iv: ProbInterval, exact: bool) -> Self {
        ChargeValue { lo: iv.lo.clamp(0.0, 1.0), hi: iv.hi.clamp(0.0, 1.0), exact }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

/// `P([X_u ∈ A]) = μ_u(A)`, bracketed when a truncation is involved.
pub fn charge(family: &FddFamily, event: &CylinderEvent, truncation: Truncation) -> Result<ChargeValue> {
    let exact = |p: f64| ChargeValue { lo: p, hi: p, exact: true };
    match &event.predicate {
        Predicate::True => return Ok(exact(1.0)),
        Predicate::False => return Ok(exact(0.0)),
        Predicate::Differ { s, r } if event.grid.len() == 2 => {
            return Ok(exact(family.change_prob(*s, *r)?));
        }
        Predicate::Not(inner) if event.grid.len() == 2 => {
            if let Predicate::Differ { s, r } = **inner {
                return Ok(exact(family.stay_prob(s, r)?));
            }
        }
        _ => {}
    }
    let matcher = event.matcher(&event.grid)?;
    let iv = family.prob_event(&event.grid, matcher, truncation)?;
    let finite = family.state_space().size().is_some_and(|n| n <= truncation.states);
    Ok(ChargeValue::from_interval(iv, finite && event.predicate.exact()))
}

/// Checks `charge(⋃ parts) = Σ charge(parts)` for pairwise disjoint parts.
///
/// Each part is charged on its own grid (which must be a sub-grid of `u`);
/// the union is charged on `u`. For a consistent family these agree up to
/// truncation slack; the reported gap is what is left over.
pub fn finite_additivity_check(
    family: &FddFamily,
    u: &TimeGrid,
    parts: &[CylinderEvent],
    truncation: Truncation,
    tolerance: f64,
) -> Result<CheckReport> {
    let matchers = parts
        .iter()
        .map(|p| {
            if !is_subgrid(p.grid(), u) {
                return Err(Error::NotSubgrid);
            }
            p.matcher(u)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut overlap: Option<Vec<State>> = None;
    family.for_each_atom(u, truncation, |x, _| {
        if overlap.is_none() && matchers.iter().filter(|m| m(x)).count() > 1 {
            overlap = Some(x.to_vec());
        }
    })?;
    if let Some(atom) = overlap {
        return Err(Error::OverlappingEvents(atom));
    }

    let union = CylinderEvent {
        grid: u.clone(),
        predicate: Predicate::Or(parts.iter().map(|p| p.predicate.clone()).collect()),
    };
    let whole = charge(family, &union, truncation)?;
    let pieces = parts.iter().map(|p| charge(family, p, truncation)).collect::<Result<Vec<_>>>()?;
    let sum_lo: f64 = pieces.iter().map(|c| c.lo).sum();
    let sum_hi: f64 = pieces.iter().map(|c| c.hi).sum();
    let slack = whole.width() + (sum_hi - sum_lo);
    let gap = (whole.lo - sum_lo).abs();

    let mut report = CheckReport::new("finite_additivity");
    report
        .tolerance("additivity", tolerance)
        .tolerance("truncation_slack", slack)
        .interval("union_charge", whole.lo, whole.hi, tolerance)
        .interval("sum_of_part_charges", sum_lo, sum_hi, tolerance)
        .estimate("gap", gap, slack + tolerance);
    for (i, (part, c)) in parts.iter().zip(&pieces).enumerate() {
        report.interval(&format!("part_{i}_on_{}", part.grid()), c.lo, c.hi, tolerance);
    }
    if gap > slack + tolerance {
        let mut worst = Witness::new("charge of the union differs from the sum of the parts").grid(u).gap(gap);
        if let Some(coarse) = parts.iter().map(|p| p.grid()).find(|g| *g != u) {
            worst = worst.other_grid(coarse);
        }
        report.fail(worst);
    }
    Ok(report)
}

/// Pushes `μ_v` forward to `u ⊑ v` by summing atoms inside the truncation.
pub(crate) fn marginalize(
    family: &FddFamily,
    v: &TimeGrid,
    u: &TimeGrid,
    truncation: Truncation,
) -> Result<(HashMap<Vec<State>, f64>, f64)> {
    let positions = crate::grid::subgrid_positions(v, u)?;
    let mut out: HashMap<Vec<State>, f64> = HashMap::new();
    let total = family.for_each_atom(v, truncation, |x, p| {
        let key: Vec<State> = positions.iter().map(|&i| x[i]).collect();
        *out.entry(key).or_insert(0.0) += p;
    })?;
    Ok((out, total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdd::RateMatrix;
    use crate::report::Verdict;
    use approx::assert_abs_diff_eq;

    fn t(x: f64) -> Time {
        Time::from_decimal(x).unwrap()
    }

    fn g(times: &[f64]) -> TimeGrid {
        TimeGrid::from_decimals(times).unwrap()
    }

    fn two_state() -> FddFamily {
        FddFamily::ctmc(vec![1.0, 0.0], RateMatrix::symmetric_two_state(1.0).unwrap()).unwrap()
    }

    #[test]
    fn charge_of_staying_put_under_poisson() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let stay = CylinderEvent::stays(t(0.0), t(1.0)).unwrap();
        let c = charge(&fam, &stay, Truncation::first(40)).unwrap();
        assert!(c.exact);
        assert_abs_diff_eq!(c.lo, 0.3678794412, epsilon = 1e-10);
        let enumerated = CylinderEvent::new(g(&[0.0, 1.0]), Predicate::AllEqual { grid: g(&[0.0, 1.0]) }).unwrap();
        let c2 = charge(&fam, &enumerated, Truncation::first(40)).unwrap();
        assert_abs_diff_eq!(c2.lo, c.lo, epsilon = 1e-12);
    }

    #[test]
    fn full_and_empty_events() {
        let fam = FddFamily::poisson(2.0).unwrap();
        let u = g(&[0.5, 1.5]);
        let full = charge(&fam, &CylinderEvent::full(u.clone()), Truncation::first(30)).unwrap();
        assert_eq!((full.lo, full.hi), (1.0, 1.0));
        let empty = charge(&fam, &CylinderEvent::empty(u), Truncation::first(30)).unwrap();
        assert_eq!((empty.lo, empty.hi), (0.0, 0.0));
    }

    #[test]
    fn intersection_lifts_to_merged_grid() {
        let a = CylinderEvent::state_at(t(1.0), 0);
        let b = CylinderEvent::state_at(t(2.0), 1);
        let ab = intersect(&a, &b);
        assert_eq!(ab.grid(), &g(&[1.0, 2.0]));
        assert!(ab.contains(&[0, 1]).unwrap());
        assert!(!ab.contains(&[1, 1]).unwrap());
        assert!(matches!(ab.predicate(), Predicate::And(ps) if ps.len() == 2));

        let id = intersect(&a, &CylinderEvent::full(g(&[2.0])));
        assert_eq!(id.predicate(), a.predicate());
        assert_eq!(id.grid(), &g(&[1.0, 2.0]));

        let none = intersect(&a, &a.complement());
        assert_eq!(none.predicate(), &Predicate::False);
        let c = charge(&two_state(), &none, Truncation::first(2)).unwrap();
        assert!(c.hi <= 1e-12);
    }

    #[test]
    fn lifting_preserves_charge_for_consistent_families() {
        let fam = FddFamily::poisson(1.5).unwrap();
        let e = CylinderEvent::jumps_at_least(g(&[0.0, 1.0, 2.0]), 2);
        let fine = e.lift(&g(&[0.0, 0.5, 1.0, 1.5, 2.0])).unwrap();
        let c1 = charge(&fam, &e, Truncation::first(30)).unwrap();
        let c2 = charge(&fam, &fine, Truncation::first(30)).unwrap();
        assert_abs_diff_eq!(c1.lo, c2.lo, epsilon = 1e-12);
        assert!(e.lift(&g(&[0.0, 2.0])).is_err());
    }

    #[test]
    fn monotone_in_the_event() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let u = g(&[0.0, 1.0]);
        let small = CylinderEvent::atoms(u.clone(), vec![vec![0, 1]]).unwrap();
        let big = CylinderEvent::atoms(u, vec![vec![0, 1], vec![0, 2]]).unwrap();
        let (a, b) = (charge(&fam, &small, Truncation::first(10)).unwrap(), charge(&fam, &big, Truncation::first(10)).unwrap());
        assert!(a.lo <= b.lo && a.hi <= b.hi);
    }

    #[test]
    fn additivity_on_singletons_of_a_finite_chain() {
        let u = g(&[0.0, 1.0]);
        let parts: Vec<_> = [[0, 0], [0, 1], [1, 0], [1, 1]]
            .iter()
            .map(|a| CylinderEvent::atoms(u.clone(), vec![a.to_vec()]).unwrap())
            .collect();
        let report = finite_additivity_check(&two_state(), &u, &parts, Truncation::first(2), 1e-12).unwrap();
        assert_eq!(report.verdict, Verdict::Pass);
        assert!(report.value("gap").unwrap() < 1e-12);
    }

    #[test]
    fn additivity_complement_law() {
        let fam = FddFamily::poisson(1.0).unwrap();
        let u = g(&[0.5, 1.0]);
        let a = CylinderEvent::jumps_at_least(u.clone(), 1);
        let report = finite_additivity_check(&fam, &u, &[a.clone(), a.complement()], Truncation::first(40), 1e-12).unwrap();
        assert!(report.passed());
        let total = report.get("sum_of_part_charges").unwrap();
        assert!(total.lo.unwrap() >= 1.0 - 1e-12 && total.hi.unwrap() <= 1.0 + 1e-12);
    }

    #[test]
    fn overlapping_parts_are_rejected() {
        let u = g(&[0.0, 1.0]);
        let a = CylinderEvent::state_at(t(0.0), 0);
        let b = CylinderEvent::jumps_at_least(u.clone(), 0);
        let err = finite_additivity_check(&two_state(), &u, &[a, b], Truncation::first(2), 1e-12);
        assert!(matches!(err, Err(Error::OverlappingEvents(_))));
    }

    #[test]
    fn additivity_exposes_a_perturbed_family() {
        let fam = FddFamily::perturbed(two_state(), 0.1, t(0.5)).unwrap();
        let donor = donor_of(&fam);
        let v = g(&[0.25, 0.5]);
        let on_singleton = CylinderEvent::state_at(t(0.5), donor);
        let rest = CylinderEvent::new(v.clone(), Predicate::Not(Box::new(Predicate::StateAt { time: t(0.5), state: donor }))).unwrap();
        let report = finite_additivity_check(&fam, &v, &[on_singleton, rest], Truncation::first(2), 1e-12).unwrap();
        assert_eq!(report.verdict, Verdict::Fail);
        // oracle: recompute both sides from raw masses
        let single = fam.mass(&g(&[0.5]), &crate::grid::StateTuple(vec![donor])).unwrap();
        let lifted: f64 = (0..2)
            .map(|x| fam.mass(&v, &crate::grid::StateTuple(vec![x, donor])).unwrap())
            .sum();
        assert_abs_diff_eq!(report.value("gap").unwrap(), (lifted - single).abs(), epsilon = 1e-12);
        assert_abs_diff_eq!(report.value("gap").unwrap(), 0.1, epsilon = 1e-9);
    }

    fn donor_of(fam: &FddFamily) -> State {
        match fam.kind() {
            crate::fdd::FamilyKind::Perturbed { donor, .. } => *donor,
            _ => unreachable!(),
        }
    }
}
