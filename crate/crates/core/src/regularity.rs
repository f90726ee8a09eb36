//! Numerical checks of consistency and regularity.
//!
//! A consistent family induces a countably additive charge on càdlàg paths
//! exactly when it is regular:
//!
//! * R1: `μ_{(t,r)}(𝒳²_=) → 1` as `r ↘ t`, at every right-limit point `t`;
//! * R2: `sup_u μ_u(η̂_u ≥ k) → 0` as `k → ∞`, over grids `u` in `[-n, n] ∩ 𝒯`.
//!
//! Limits are probed along geometric schedules and suprema along nested
//! dyadic grids. A finite probe can refute or support a condition up to its
//! tolerance; it never proves one.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::marginalize;
use crate::fdd::{FamilyKind, FddFamily, RateMatrix, Truncation};
use crate::grid::{dyadic_refinement, is_subgrid, merge_grids, State, TimeGrid};
use crate::jumps::{count_jumps_tuple, expected_jumps, jump_tails};
use crate::report::{CheckReport, Trace, Verdict, Witness};
use crate::time::Time;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegularityParams {
    /// `n` of the window `[-n, n]`.
    pub window: u32,
    /// Largest jump threshold `k` examined for R2.
    pub k_max: usize,
    /// Depth of the dyadic refinement used for suprema over grids.
    pub depth: u32,
    /// Ratio `ρ` of the geometric schedule `t ± h ρ^j`.
    pub ratio: f64,
    pub steps: usize,
    /// `h`, the first offset of the schedule.
    pub initial_step: f64,
    pub eps_limit: f64,
    pub eps_consistency: f64,
    /// `λ_n`; when absent the family's own rate bound is used.
    pub rate_bound: Option<f64>,
    /// States enumerated for countably infinite spaces.
    pub truncation: usize,
}

impl Default for RegularityParams {
    fn default() -> Self {
        RegularityParams {
            window: 1,
            k_max: 20,
            depth: 10,
            ratio: 0.5,
            steps: 30,
            initial_step: 1.0,
            eps_limit: 1e-6,
            eps_consistency: 1e-9,
            rate_bound: None,
            truncation: 60,
        }
    }
}

impl RegularityParams {
    /// Every violated constraint, as `(field, message)`.
    pub fn diagnostics(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut bad = |field: &str, msg: &str| out.push((field.to_string(), msg.to_string()));
        if self.window < 1 {
            bad("window", "must be at least 1");
        }
        if self.k_max < 1 {
            bad("k_max", "must be at least 1");
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            bad("ratio", "must lie in (0, 1)");
        }
        if self.steps < 2 {
            bad("steps", "must be at least 2");
        }
        if !(self.initial_step > 0.0 && self.initial_step.is_finite()) {
            bad("initial_step", "must be positive");
        }
        if !(self.eps_limit > 0.0) {
            bad("eps_limit", "must be positive");
        }
        if !(self.eps_consistency > 0.0) {
            bad("eps_consistency", "must be positive");
        }
        if self.rate_bound.is_some_and(|b| !(b >= 0.0 && b.is_finite())) {
            bad("rate_bound", "must be finite and nonnegative");
        }
        if self.truncation == 0 {
            bad("truncation", "must be at least 1");
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        match self.diagnostics().into_iter().next() {
            Some((field, msg)) => Err(Error::InvalidParameter { name: field, reason: msg }),
            None => Ok(()),
        }
    }

    /// Scales every tolerance by `factor`.
    pub fn scale_tolerances(&mut self, factor: f64) {
        self.eps_limit *= factor;
        self.eps_consistency *= factor;
    }

    fn window_bounds(&self) -> (Time, Time) {
        let n = Time::from_int(self.window as i64);
        (-n, n)
    }

    /// Offsets `h ρ^j`, exact whenever `ρ` and `h` are dyadic.
    fn offsets(&self) -> Result<Vec<Time>> {
        let mut out = Vec::with_capacity(self.steps);
        for j in 0..self.steps {
            let offset = Time::from_decimal(self.initial_step * self.ratio.powi(j as i32))?;
            if offset > Time::ZERO && out.last().is_none_or(|&prev| offset < prev) {
                out.push(offset);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Right,
    Left,
}

/// A nonempty bounded set `𝒬` of rate matrices on one state space.
#[derive(Clone, Debug)]
pub struct RateMatrixSet(Vec<RateMatrix>);

impl RateMatrixSet {
    pub fn new(matrices: Vec<RateMatrix>) -> Result<Self> {
        let Some(first) = matrices.first() else {
            return Err(Error::param("rate matrix set", "must not be empty"));
        };
        if matrices.iter().any(|q| q.dim() != first.dim()) {
            return Err(Error::param("rate matrix set", "matrices must share one dimension"));
        }
        Ok(RateMatrixSet(matrices))
    }

    pub fn matrices(&self) -> &[RateMatrix] {
        &self.0
    }
}

/// `½‖𝒬‖` with `‖Q‖ = 2 max_x |Q_xx|`, i.e. the largest exit rate in the set.
pub fn imprecise_norm_bound(qset: &RateMatrixSet) -> f64 {
    qset.0.iter().map(RateMatrix::max_exit_rate).fold(0.0, f64::max)
}

struct PairOutcome {
    u: TimeGrid,
    v: TimeGrid,
    events: usize,
    max_gap: f64,
    slack: f64,
    violation: Option<Witness>,
}

/// Two brackets disagree when they are separated by more than `eps`.
fn separation(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.1).max(b.0 - a.1).max(0.0)
}

fn compare_pair(family: &FddFamily, u: &TimeGrid, v: &TimeGrid, truncation: Truncation, eps: f64) -> Result<PairOutcome> {
    let mut atoms_u: Vec<(Vec<State>, f64)> = Vec::new();
    let total_u = family.for_each_atom(u, truncation, |x, p| atoms_u.push((x.to_vec(), p)))?;
    let (marginal, total_v) = marginalize(family, v, u, truncation)?;
    let tail_u = (1.0 - total_u).max(0.0);
    let tail_v = (1.0 - total_v).max(0.0);

    let mut outcome =
        PairOutcome { u: u.clone(), v: v.clone(), events: 0, max_gap: 0.0, slack: tail_u.max(tail_v), violation: None };
    let mut judge = |label: String, tuple: Option<&[State]>, lhs: (f64, f64), rhs: (f64, f64)| {
        outcome.events += 1;
        let gap = (lhs.0 - rhs.0).abs();
        outcome.max_gap = outcome.max_gap.max(gap);
        if outcome.violation.is_none() && separation(lhs, rhs) > eps {
            let mut w = Witness::new(label).grid(u).other_grid(v).gap(gap);
            if let Some(x) = tuple {
                w = w.tuple(x);
            }
            if u.len() == 1 {
                w = w.time(u.first());
            }
            outcome.violation = Some(w);
        }
    };

    let mut seen: BTreeSet<&[State]> = BTreeSet::new();
    for (x, p) in &atoms_u {
        let q = marginal.get(x).copied().unwrap_or(0.0);
        judge(format!("singleton {x:?}"), Some(x), (*p, *p), (q, q + tail_v));
        seen.insert(x);
    }
    let mut unmatched: Vec<(&Vec<State>, &f64)> = marginal.iter().filter(|(x, _)| !seen.contains(x.as_slice())).collect();
    unmatched.sort_by(|a, b| a.0.cmp(b.0));
    for (x, q) in unmatched {
        judge(format!("singleton {x:?}"), Some(x), (0.0, tail_u), (*q, q + tail_v));
    }
    for k in 1..u.len() {
        let lhs: f64 = atoms_u.iter().filter(|(x, _)| count_jumps_tuple(x) >= k).map(|(_, p)| p).sum();
        let rhs: f64 = marginal.iter().filter(|(x, _)| count_jumps_tuple(x) >= k).map(|(_, p)| p).sum();
        let label = if u.len() == 2 { "pair differs (jumps >= 1)".to_string() } else { format!("jumps >= {k}") };
        judge(label, None, (lhs, lhs + tail_u), (rhs, rhs + tail_v));
    }
    Ok(outcome)
}

/// Verifies `μ_u(A) = μ_v(lift A)` for nested pairs of the corpus and for
/// every grid against its merge with each other grid.
pub fn check_consistency(
    family: &FddFamily,
    corpus: &[TimeGrid],
    truncation: Truncation,
    eps_consistency: f64,
) -> Result<CheckReport> {
    if corpus.is_empty() {
        return Err(Error::param("corpus", "must contain at least one grid"));
    }
    let mut pairs: BTreeSet<(TimeGrid, TimeGrid)> = BTreeSet::new();
    for (i, u) in corpus.iter().enumerate() {
        for (j, v) in corpus.iter().enumerate() {
            if i == j || u == v {
                continue;
            }
            if is_subgrid(u, v) {
                pairs.insert((u.clone(), v.clone()));
            } else if !is_subgrid(v, u) {
                pairs.insert((u.clone(), merge_grids(u, v)));
            }
        }
    }
    let pairs: Vec<_> = pairs.into_iter().collect();
    let outcomes = pairs
        .par_iter()
        .map(|(u, v)| compare_pair(family, u, v, truncation, eps_consistency))
        .collect::<Result<Vec<_>>>()?;

    let mut report = CheckReport::new("consistency");
    let max_gap = outcomes.iter().map(|o| o.max_gap).fold(0.0, f64::max);
    let slack = outcomes.iter().map(|o| o.slack).fold(0.0, f64::max);
    let events: usize = outcomes.iter().map(|o| o.events).sum();
    report
        .tolerance("eps_consistency", eps_consistency)
        .tolerance("truncation_states", truncation.states as f64)
        .estimate("max_gap", max_gap, eps_consistency)
        .estimate("truncation_slack", slack, eps_consistency)
        .estimate("pairs_checked", outcomes.len() as f64, 0.0)
        .estimate("events_checked", events as f64, 0.0);
    let mut trace = Trace::new("consistency_pairs", &["pair", "u_len", "v_len", "events", "max_gap", "slack"]);
    for (i, o) in outcomes.iter().enumerate() {
        trace.push(vec![i as f64, o.u.len() as f64, o.v.len() as f64, o.events as f64, o.max_gap, o.slack]);
    }
    report.trace(trace);
    report.note(format!("family: {}", family.describe()));
    if let FamilyKind::Poisson { .. } = family.kind() {
        report.note("poisson marginal at t_1 assumes the count starts at 0 at time 0");
    }
    if pairs.is_empty() {
        report.note("corpus has no comparable pairs; nothing was checked");
    }
    if let Some(w) = outcomes.into_iter().find_map(|o| o.violation) {
        report.fail(w);
    } else if slack > eps_consistency {
        report.inconclusive(format!("truncation slack {slack:e} exceeds eps_consistency"));
    }
    Ok(report)
}

fn schedule(family: &FddFamily, t: Time, side: Side, params: &RegularityParams) -> Result<Vec<Time>> {
    let set = family.domain().restricted();
    let points: Vec<Time> = params
        .offsets()?
        .into_iter()
        .filter_map(|h| match side {
            Side::Right => t.checked_add(h).ok(),
            Side::Left => t.checked_sub(h).ok(),
        })
        .filter(|&p| set.contains(p))
        .collect();
    if points.len() < 2 {
        return Err(Error::NoApproachPoints(t));
    }
    Ok(points)
}

/// R1 at `t`: traces `μ_{(t,r_j)}(𝒳²_=)` along `r_j = t + h ρ^j`.
pub fn check_r1(family: &FddFamily, t: Time, params: &RegularityParams) -> Result<CheckReport> {
    params.validate()?;
    family.check_time(t)?;
    let eps = params.eps_limit;
    let mut report = CheckReport::new("r1_right_continuity");
    report.tolerance("eps_limit", eps).tolerance("ratio", params.ratio);
    if !family.domain().restricted().is_right_limit_point(t) {
        report.note(format!("{t} is not a right-sided limit point; the condition holds vacuously"));
        return Ok(report);
    }
    let points = schedule(family, t, Side::Right, params)?;
    let mut trace = Trace::new("r1_trace", &["step", "r", "offset", "stay_prob"]);
    let mut values = Vec::with_capacity(points.len());
    for (j, &r) in points.iter().enumerate() {
        let stay = family.stay_prob(t, r)?;
        trace.push(vec![j as f64, r.to_f64(), (r - t).to_f64(), stay]);
        values.push(stay);
    }
    let last = values[values.len() - 1];
    let before = values[values.len() - 2];
    let tail_start = values.len() / 2;
    let monotone = values[tail_start..].windows(2).all(|w| w[1] >= w[0] - eps);
    report.estimate("final_stay_prob", last, eps).estimate("limit_gap", 1.0 - last, eps).trace(trace);
    if last >= 1.0 - eps && monotone {
        return Ok(report);
    }
    if (last - before).abs() > eps {
        report.inconclusive("trace has not settled: the last two values differ by more than eps_limit");
    } else {
        report.fail(
            Witness::new(format!("stay probability settles at {last}, not 1"))
                .time(t)
                .grid(&TimeGrid::new(vec![t, points[points.len() - 1]])?)
                .gap(1.0 - last),
        );
    }
    Ok(report)
}

/// R2 on `[-n, n] ∩ 𝒯`: the supremum over grids is taken along the dyadic
/// refinement, which is exhaustive and monotone in `η̂`.
pub fn check_r2(family: &FddFamily, params: &RegularityParams) -> Result<CheckReport> {
    params.validate()?;
    let eps = params.eps_limit;
    let truncation = Truncation::first(params.truncation);
    let grids = dyadic_refinement(family.domain(), params.window_bounds(), params.depth)?;
    let table = grids
        .par_iter()
        .map(|g| jump_tails(family, g, params.k_max, truncation))
        .collect::<Result<Vec<_>>>()?;

    let mut report = CheckReport::new("r2_bounded_jumps");
    report
        .tolerance("eps_limit", eps)
        .tolerance("k_max", params.k_max as f64)
        .tolerance("depth", params.depth as f64)
        .note("supremum over grids approximated by the deepest dyadic refinement of the window");
    let mut full = Trace::new("r2_table", &["depth", "grid_points", "k", "tail_lo", "tail_hi"]);
    for (d, (g, tails)) in grids.iter().zip(&table).enumerate() {
        for (k, iv) in tails.iter().enumerate().skip(1) {
            full.push(vec![d as f64, g.len() as f64, k as f64, iv.lo, iv.hi]);
        }
    }
    let deepest = &table[table.len() - 1];
    let mut k_trace = Trace::new("r2_k_trace", &["k", "tail_lo", "tail_hi"]);
    for (k, iv) in deepest.iter().enumerate().skip(1) {
        k_trace.push(vec![k as f64, iv.lo, iv.hi]);
        report.interval(&format!("tail_k{k}"), iv.lo, iv.hi, eps);
    }
    report.trace(full).trace(k_trace);

    let k_max = params.k_max;
    let value = deepest[k_max].hi;
    let decreasing_in_k = deepest.windows(2).all(|w| w[1].hi <= w[0].hi + 1e-12);
    let increasing_in_depth =
        (1..=k_max).all(|k| table.windows(2).all(|w| w[1][k].lo >= w[0][k].lo - 1e-12));
    if !increasing_in_depth {
        report.note("tail probabilities decreased under refinement; the reduction to dyadic grids is approximate here");
    }
    let settled = table.len() < 2 || (value - table[table.len() - 2][k_max].hi).abs() <= eps;
    report.estimate("sup_tail_at_k_max", value, eps);

    if value <= eps && decreasing_in_k {
        if !settled {
            report.inconclusive("tail at k_max still moving between the two deepest refinements");
        }
        return Ok(report);
    }
    if !settled {
        report.inconclusive("tail at k_max still moving between the two deepest refinements");
        return Ok(report);
    }
    report.fail(
        Witness::new(format!("P(jumps >= {k_max}) = {value} on the deepest grid"))
            .grid(&grids[grids.len() - 1])
            .gap(value),
    );
    Ok(report)
}

/// Looks for a rate `λ̂` with `E(η̂_u) ≤ λ̂ (t_m - t_1)` over the corpus.
pub fn check_expected_bound(family: &FddFamily, params: &RegularityParams, corpus: &[TimeGrid]) -> Result<CheckReport> {
    params.validate()?;
    let (lo, hi) = params.window_bounds();
    let set = family.domain().restricted();
    let mut report = CheckReport::new("expected_jump_bound");
    report.tolerance("eps_limit", params.eps_limit);

    let mut rows: Vec<(TimeGrid, f64, f64)> = Vec::new();
    for u in corpus {
        if u.first() < lo || u.last() > hi || !u.within(set) {
            report.note(format!("grid {u} skipped: outside [-n, n] ∩ 𝒯"));
            continue;
        }
        if u.len() < 2 {
            continue;
        }
        let e = expected_jumps(family, u)?;
        rows.push((u.clone(), e, e / u.span().to_f64()));
    }
    let mut trace = Trace::new("expected_jumps", &["grid_points", "span", "mesh", "expected_jumps", "rate"]);
    for (u, e, rate) in &rows {
        trace.push(vec![u.len() as f64, u.span().to_f64(), u.mesh().to_f64(), *e, *rate]);
    }
    report.trace(trace);
    let Some((worst, _, lambda_hat)) = rows.iter().max_by(|a, b| a.2.total_cmp(&b.2)).cloned() else {
        report.inconclusive("no grid of positive span in the corpus");
        return Ok(report);
    };
    report.estimate("lambda_hat", lambda_hat, params.eps_limit);
    let mut implied = Trace::new("implied_r2_bound", &["k", "bound"]);
    for k in 1..=params.k_max {
        implied.push(vec![k as f64, 2.0 * params.window as f64 * lambda_hat / k as f64]);
    }
    report.trace(implied);

    if let FamilyKind::Poisson { rate } = family.kind() {
        let shortfall = rows.iter().map(|(u, e, _)| rate * u.span().to_f64() - e).fold(0.0, f64::max);
        report.estimate("linear_identity_shortfall", shortfall, params.eps_limit);
        if shortfall > params.eps_limit {
            report.note(format!(
                "E(jumps) = Σ(1 - e^(-λΔ)) stays below λ(t_m - t_1) by up to {shortfall:e}; \
                 the identity E(jumps) = λ(t_m - t_1) does not hold, only the bound"
            ));
        }
    }

    // Rates that grow like 1/mesh mean single-step change probabilities do
    // not vanish as the grid is refined.
    let mut by_mesh: Vec<(f64, f64)> = Vec::new();
    for (u, _, rate) in &rows {
        let mesh = u.mesh().to_f64();
        match by_mesh.iter_mut().find(|(m, _)| *m == mesh) {
            Some(entry) => entry.1 = entry.1.max(*rate),
            None => by_mesh.push((mesh, *rate)),
        }
    }
    by_mesh.sort_by(|a, b| b.0.total_cmp(&a.0));
    let diverging = by_mesh.len() >= 3
        && by_mesh.windows(2).rev().take(2).all(|w| {
            let shrink = w[0].0 / w[1].0;
            let growth = w[1].1 / w[0].1;
            growth >= 0.9 * shrink
        });
    let bound = params.rate_bound.or(family.rate_bound());
    if let Some(b) = bound {
        report.tolerance("rate_bound", b);
    }
    if diverging {
        report.fail(
            Witness::new("expected jumps per unit time grow in proportion to 1/mesh")
                .grid(&worst)
                .gap(lambda_hat),
        );
    } else if let Some(b) = params.rate_bound.filter(|b| lambda_hat > b + params.eps_limit) {
        report.fail(Witness::new(format!("rate {lambda_hat} exceeds the bound {b}")).grid(&worst).gap(lambda_hat - b));
    }
    Ok(report)
}

/// One-sided `limsup μ(𝒳²_≠)/Δ` along the schedule at `t`.
pub fn rate_limsup_probe(family: &FddFamily, t: Time, side: Side, params: &RegularityParams) -> Result<CheckReport> {
    params.validate()?;
    family.check_time(t)?;
    let set = family.domain().restricted();
    let admits = match side {
        Side::Right => set.is_right_limit_point(t),
        Side::Left => set.is_left_limit_point(t),
    };
    if !admits {
        return Err(Error::NoApproachPoints(t));
    }
    let points = schedule(family, t, side, params)?;
    let name = match side {
        Side::Right => "rate_limsup_right",
        Side::Left => "rate_limsup_left",
    };
    let mut report = CheckReport::new(name);
    report.tolerance("eps_limit", params.eps_limit).note("sampled probe of a limsup; not a certificate");
    let mut trace = Trace::new(format!("{name}_trace"), &["step", "point", "offset", "change_prob", "ratio"]);
    let mut ratios = Vec::with_capacity(points.len());
    for (j, &p) in points.iter().enumerate() {
        let (s, r) = match side {
            Side::Right => (t, p),
            Side::Left => (p, t),
        };
        let change = family.change_prob(s, r)?;
        let ratio = change / (r - s).to_f64();
        trace.push(vec![j as f64, p.to_f64(), (r - s).to_f64(), change, ratio]);
        ratios.push(ratio);
    }
    report.trace(trace);
    let tail = &ratios[ratios.len() / 2..];
    let estimate = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let n = ratios.len();
    let settled = (ratios[n - 1] - ratios[n - 2]).abs() <= params.eps_limit.max(1e-9 * ratios[n - 1].abs());
    report.estimate("limsup_estimate", estimate, params.eps_limit);

    // A change probability that stays put while the offset shrinks makes the
    // ratio grow like 1/offset: the limsup is infinite.
    let offsets: Vec<f64> = points.iter().map(|&p| (p - t).to_f64().abs()).collect();
    let diverging = n >= 3
        && ratios[n - 1] * offsets[n - 1] > params.eps_limit
        && (n - 3..n - 1).all(|j| ratios[j + 1] / ratios[j] >= 0.9 * offsets[j] / offsets[j + 1]);
    if diverging {
        report.fail(
            Witness::new(format!("ratio grows like 1/offset, reaching {}", ratios[n - 1]))
                .time(t)
                .gap(ratios[n - 1]),
        );
        return Ok(report);
    }

    let bound = params.rate_bound.or(family.rate_bound());
    match bound {
        Some(b) => {
            report.tolerance("rate_bound", b);
            if estimate > b + params.eps_limit {
                report.fail(
                    Witness::new(format!("ratio reaches {estimate}, above the bound {b}"))
                        .time(t)
                        .gap(estimate - b),
                );
            } else if !settled {
                report.inconclusive("ratio trace has not settled");
            }
        }
        None if !settled => {
            report.inconclusive("no rate bound given and the ratio trace has not settled");
        }
        None => {}
    }
    Ok(report)
}

/// R1 at each time, R2, the expected-jump bound and both rate probes.
pub fn check_regularity(
    family: &FddFamily,
    times: &[Time],
    params: &RegularityParams,
    corpus: &[TimeGrid],
) -> Result<Vec<CheckReport>> {
    let mut reports = Vec::new();
    for &t in times {
        reports.push(check_r1(family, t, params)?);
    }
    reports.push(check_r2(family, params)?);
    reports.push(check_expected_bound(family, params, corpus)?);
    let set = family.domain().restricted();
    for &t in times {
        if set.is_right_limit_point(t) {
            reports.push(rate_limsup_probe(family, t, Side::Right, params)?);
        }
        if set.is_left_limit_point(t) {
            reports.push(rate_limsup_probe(family, t, Side::Left, params)?);
        }
    }
    Ok(reports)
}

pub fn overall_verdict(reports: &[CheckReport]) -> Verdict {
    crate::report::overall(reports)
}
