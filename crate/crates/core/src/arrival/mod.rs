//! Externally arriving measurements with all energy available at time zero.
//!
//! Optimal transmission times are a running maximum: `t_1 = a_1` and
//! `t_i = max(a_i, t_{i-1} + d_{i-1})`. Fixing which branch of each maximum
//! is active (a [`ChoicePattern`]) turns the objective into
//! `const + sum c_i d_i` with positive `c_i`. Minimising that under the tight
//! energy constraint gives `c_i = -lambda f'(d_i)`, so `d_i = g(-c_i/lambda)`
//! and `lambda` solves `sum_i h(-c_i/lambda) = E`. Every pattern whose
//! KKT point reproduces its own branch choices is optimal; the enumeration
//! keeps the best of them.
//!
//! When an `Arrival` branch or the session deadline is violated by the plain
//! KKT point, the pattern is re-solved with the violated reception capped
//! (see [`capped`]), which covers optima sitting exactly on a branch kink.

mod capped;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bisect::bisect;
use crate::model::{age_area, delay_area, ArrivalSchedule, DelayFunction, SessionConfig, UpdatePolicy};
use crate::{Error, Result};

/// Patterns are enumerated exhaustively; beyond this many arrivals that is
/// no longer practical.
pub const MAX_ENUMERATED_ARRIVALS: usize = 24;

/// Relative bracket width at which the multiplier search stops.
const LAMBDA_REL_TOL: f64 = 1e-15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Choice {
    /// `t_i = a_i`.
    Arrival,
    /// `t_i = t_{i-1} + d_{i-1}`.
    Chain,
}

/// Active branch of the running maximum for updates `2..=N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChoicePattern {
    choices: Vec<Choice>,
}

impl ChoicePattern {
    pub fn new(choices: Vec<Choice>) -> Self {
        Self { choices }
    }

    /// Pattern for `n` updates from its index. The choice for update 2 is the
    /// most significant bit, `Arrival = 0` and `Chain = 1`, so numeric order
    /// is lexicographic order.
    pub fn from_index(index: u64, n: usize) -> Self {
        let len = n.saturating_sub(1);
        let choices =
            (0..len).map(|k| if (index >> (len - 1 - k)) & 1 == 1 { Choice::Chain } else { Choice::Arrival }).collect();
        Self { choices }
    }

    pub fn index(&self) -> u64 {
        self.choices.iter().fold(0, |acc, &c| (acc << 1) | u64::from(c == Choice::Chain))
    }

    pub fn choices(&self) -> &[Choice] {
        &self.choices
    }

    /// Number of updates the pattern describes.
    pub fn updates(&self) -> usize {
        self.choices.len() + 1
    }

    /// `r_i`: how many of the following updates chain back through update
    /// `i`, i.e. the length of the run of `Chain` right after it.
    pub fn chain_runs(&self) -> Vec<usize> {
        let n = self.updates();
        let mut runs = vec![0; n];
        for i in (0..n - 1).rev() {
            if self.choices[i] == Choice::Chain {
                runs[i] = runs[i + 1] + 1;
            }
        }
        runs
    }
}

impl fmt::Display for ChoicePattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for c in &self.choices {
            f.write_str(match c {
                Choice::Arrival => "A",
                Choice::Chain => "C",
            })?;
        }
        Ok(())
    }
}

/// Which objective a pattern solve minimises.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// `sum w_i (t_i + d_i)`, the age area up to a constant.
    Age,
    /// `sum (2 t_i + d_i)`, the delay area up to scale and a constant.
    Delay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSolution {
    pub metric: Metric,
    pub pattern: ChoicePattern,
    /// Effective coefficients, including any cap multiplier.
    pub coefficients: Vec<f64>,
    /// Cap multiplier added to each update's coefficient.
    pub cap_multipliers: Vec<f64>,
    pub lambda: f64,
    pub delays: Vec<f64>,
    pub times: Vec<f64>,
    pub arrivals: Vec<f64>,
    pub energy: f64,
    /// Value of the metric's linear objective.
    pub objective: f64,
    /// Age area of the policy.
    pub age: f64,
    /// Per-packet delay area of the policy.
    pub delay: f64,
}

impl PatternSolution {
    pub fn policy(&self) -> UpdatePolicy {
        UpdatePolicy::new(self.times.clone(), self.delays.clone()).expect("solver output is structurally valid")
    }

    pub fn energy_used(&self, delay_fn: &DelayFunction) -> f64 {
        self.delays.iter().map(|&d| delay_fn.energy_raw(d)).sum()
    }
}

/// Why a pattern's KKT point does not certify itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Inconsistency {
    /// The chosen branch at update `update` (1-based) is not the maximum.
    BranchNotMax { update: usize, chosen: f64, other: f64 },
    /// The last reception falls after the session end.
    LateReception { end: f64 },
    /// Holding the kink before update `update` would take a multiplier
    /// `theta` times the value of chaining into it.
    CapMultiplier { update: usize, theta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PatternOutcome {
    Solved(PatternSolution),
    Inconsistent(Inconsistency),
}

fn check_pattern(pattern: &ChoicePattern, n: usize) -> Result<()> {
    if pattern.updates() != n {
        return Err(Error::invalid(format!(
            "pattern describes {} updates but there are {n} arrivals",
            pattern.updates()
        )));
    }
    Ok(())
}

/// Age coefficients `c_i = sum_{j=i}^{i+r_i} w_j`.
pub fn pattern_coefficients(pattern: &ChoicePattern, arrivals: &ArrivalSchedule) -> Result<Vec<f64>> {
    check_pattern(pattern, arrivals.len())?;
    let w = arrivals.weights();
    Ok(pattern.chain_runs().iter().enumerate().map(|(i, &r)| w[i..=i + r].iter().sum()).collect())
}

/// Delay coefficients `c_i = 1 + 2 r_i`.
pub fn delay_coefficients(pattern: &ChoicePattern, n: usize) -> Result<Vec<f64>> {
    check_pattern(pattern, n)?;
    Ok(pattern.chain_runs().iter().map(|&r| 1.0 + 2.0 * r as f64).collect())
}

pub(crate) fn coefficients(metric: Metric, pattern: &ChoicePattern, arrivals: &ArrivalSchedule) -> Result<Vec<f64>> {
    match metric {
        Metric::Age => pattern_coefficients(pattern, arrivals),
        Metric::Delay => delay_coefficients(pattern, arrivals.len()),
    }
}

/// Service times at the KKT point for multiplier `lambda`.
fn kkt_delays(coefficients: &[f64], lambda: f64, delay_fn: &DelayFunction) -> Result<Vec<f64>> {
    coefficients.iter().map(|&c| delay_fn.delay_for_slope(-c / lambda)).collect()
}

/// The multiplier `lambda > 0` with `sum_i h(-c_i / lambda) = E`.
///
/// The left side falls strictly from infinity to `N * 2B ln 2` as `lambda`
/// grows, so the root is unique and bracketed by doubling.
pub fn solve_lambda(coefficients: &[f64], energy: f64, delay_fn: &DelayFunction) -> Result<f64> {
    if coefficients.is_empty() {
        return Err(Error::invalid("need at least one coefficient"));
    }
    if let Some(&bad) = coefficients.iter().find(|&&c| !(c.is_finite() && c > 0.0)) {
        return Err(Error::Domain { what: "pattern coefficient", value: bad });
    }
    if delay_fn.at_or_below_floor(energy, coefficients.len()) {
        let floor = coefficients.len() as f64 * delay_fn.shannon_floor();
        return Err(Error::EnergyBelowShannonFloor { energy, floor });
    }
    if !energy.is_finite() {
        return Err(Error::Domain { what: "energy", value: energy });
    }

    let spent =
        |lambda: f64| -> Result<f64> { coefficients.iter().map(|&c| delay_fn.energy_for_slope(-c / lambda)).sum() };

    let (mut lo, mut hi) = (1.0, 1.0);
    while spent(hi)? > energy {
        hi *= 2.0;
    }
    while spent(lo)? < energy {
        lo *= 0.5;
    }
    let mut failure = None;
    let lambda = bisect(lo, hi, LAMBDA_REL_TOL * hi, |lambda| match spent(lambda) {
        Ok(e) => e > energy,
        Err(err) => {
            failure.get_or_insert(err);
            false
        }
    });
    match failure {
        Some(err) => Err(err),
        None => Ok(lambda),
    }
}

/// Times induced by the pattern for fixed service times.
fn pattern_times(pattern: &ChoicePattern, arrivals: &[f64], delays: &[f64]) -> Vec<f64> {
    let mut times = Vec::with_capacity(arrivals.len());
    times.push(arrivals[0]);
    for i in 1..arrivals.len() {
        let t = match pattern.choices()[i - 1] {
            Choice::Arrival => arrivals[i],
            Choice::Chain => times[i - 1] + delays[i - 1],
        };
        times.push(t);
    }
    times
}

fn objective(metric: Metric, arrivals: &ArrivalSchedule, times: &[f64], delays: &[f64]) -> f64 {
    match metric {
        Metric::Age => arrivals.weights().iter().zip(times.iter().zip(delays)).map(|(w, (t, d))| w * (t + d)).sum(),
        Metric::Delay => times.iter().zip(delays).map(|(t, d)| 2.0 * t + d).sum(),
    }
}

fn validate_instance(arrivals: &ArrivalSchedule, session: &SessionConfig) -> Result<()> {
    arrivals.check_within(session)?;
    if arrivals.len() > MAX_ENUMERATED_ARRIVALS {
        return Err(Error::invalid(format!(
            "{} arrivals exceed the enumeration limit of {MAX_ENUMERATED_ARRIVALS}",
            arrivals.len()
        )));
    }
    Ok(())
}

/// KKT point of the age objective under one pattern.
pub fn solve_pattern(
    pattern: &ChoicePattern,
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
) -> Result<PatternOutcome> {
    arrivals.check_within(session)?;
    solve_pattern_for(Metric::Age, pattern, arrivals, energy, session, delay_fn)
}

pub(crate) fn solve_pattern_for(
    metric: Metric,
    pattern: &ChoicePattern,
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
) -> Result<PatternOutcome> {
    let c = coefficients(metric, pattern, arrivals)?;
    let lambda = solve_lambda(&c, energy, delay_fn)?;
    let delays = kkt_delays(&c, lambda, delay_fn)?;
    let a = arrivals.times();
    let n = a.len();
    let times = pattern_times(pattern, a, &delays);
    let tol = session.tolerance();

    let mut violation = None;
    for i in 1..n {
        let chained = times[i - 1] + delays[i - 1];
        let broken = match pattern.choices()[i - 1] {
            Choice::Chain if chained < a[i] - tol => Some((chained, a[i])),
            Choice::Arrival if chained > a[i] + tol => Some((a[i], chained)),
            _ => None,
        };
        if let Some((chosen, other)) = broken {
            violation = Some(Inconsistency::BranchNotMax { update: i + 1, chosen, other });
            break;
        }
    }
    let end = times[n - 1] + delays[n - 1];
    let late = match session.allow_late_reception() {
        false => end > session.duration() + tol,
        true => times[n - 1] > session.duration() + tol,
    };
    if violation.is_none() && late {
        violation = Some(Inconsistency::LateReception { end });
    }
    let Some(fallback) = violation else {
        let nu = vec![0.0; n];
        return finish(metric, pattern, arrivals, energy, session, delay_fn, c, nu, lambda, delays);
    };
    let blocks = pattern_blocks(pattern, a, session);
    if blocks.iter().all(|b| b.cap.is_none()) {
        return Ok(PatternOutcome::Inconsistent(fallback));
    }
    let Some(point) = capped::solve(&c, &blocks, energy, delay_fn)? else {
        return Ok(PatternOutcome::Inconsistent(fallback));
    };
    let mut nu = vec![0.0; n];
    for (b, &m) in blocks.iter().zip(&point.multipliers) {
        if let Some((through, _)) = b.cap {
            nu[b.head..=through].fill(m);
        }
    }
    // Marginal value of delaying each block head, accumulated backwards.
    let mut head_value = vec![0.0; blocks.len()];
    for k in (0..blocks.len()).rev() {
        let b = &blocks[k];
        let own: f64 = (b.head..=b.end).map(|j| time_weight(metric, arrivals, j)).sum();
        head_value[k] = own + point.multipliers[k];
    }
    for k in 0..blocks.len() - 1 {
        let theta = point.multipliers[k] / head_value[k + 1];
        if theta > 1.0 + 1e-9 {
            return Ok(PatternOutcome::Inconsistent(Inconsistency::CapMultiplier {
                update: blocks[k + 1].head + 1,
                theta,
            }));
        }
    }
    let times = pattern_times(pattern, a, &point.delays);
    for i in 1..n {
        let chained = times[i - 1] + point.delays[i - 1];
        let ok = match pattern.choices()[i - 1] {
            Choice::Chain => chained >= a[i] - tol,
            Choice::Arrival => chained <= a[i] + tol,
        };
        if !ok {
            return Ok(PatternOutcome::Inconsistent(Inconsistency::BranchNotMax {
                update: i + 1,
                chosen: if pattern.choices()[i - 1] == Choice::Chain { chained } else { a[i] },
                other: if pattern.choices()[i - 1] == Choice::Chain { a[i] } else { chained },
            }));
        }
    }
    let effective = c.iter().zip(&nu).map(|(c, v)| c + v).collect();
    finish(metric, pattern, arrivals, energy, session, delay_fn, effective, nu, point.lambda, point.delays)
}

/// `dF/dt_j` contributed by update `j` itself.
fn time_weight(metric: Metric, arrivals: &ArrivalSchedule, j: usize) -> f64 {
    match metric {
        Metric::Age => arrivals.weights()[j],
        Metric::Delay => 2.0,
    }
}

/// Runs of chained updates, each capped by the next arrival. The last run is
/// capped by the session end: its reception, or with late reception allowed
/// the start of its final update.
fn pattern_blocks(pattern: &ChoicePattern, a: &[f64], session: &SessionConfig) -> Vec<capped::Block> {
    let n = a.len();
    let mut blocks = Vec::new();
    let mut head = 0;
    for i in 1..n {
        if pattern.choices()[i - 1] == Choice::Arrival {
            blocks.push(capped::Block { head, end: i - 1, cap: Some((i - 1, a[i] - a[head])) });
            head = i;
        }
    }
    let room = session.duration() - a[head];
    let cap = match session.allow_late_reception() {
        false => Some((n - 1, room)),
        true if head < n - 1 => Some((n - 2, room)),
        true => None,
    };
    blocks.push(capped::Block { head, end: n - 1, cap });
    blocks
}

#[allow(clippy::too_many_arguments)]
fn finish(
    metric: Metric,
    pattern: &ChoicePattern,
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
    coefficients: Vec<f64>,
    cap_multipliers: Vec<f64>,
    lambda: f64,
    delays: Vec<f64>,
) -> Result<PatternOutcome> {
    let a = arrivals.times();
    let times = pattern_times(pattern, a, &delays);
    let policy = UpdatePolicy::new(times.clone(), delays.clone())?;
    let age = age_area(&policy, session.duration(), a);
    let delay = delay_area(&policy, arrivals, delay_fn.bits());
    Ok(PatternOutcome::Solved(PatternSolution {
        metric,
        objective: objective(metric, arrivals, &times, &delays),
        pattern: pattern.clone(),
        coefficients,
        cap_multipliers,
        lambda,
        delays,
        times,
        arrivals: a.to_vec(),
        energy,
        age,
        delay,
    }))
}

/// Enumerates all `2^(N-1)` patterns and keeps the consistent one with the
/// smallest metric value, ties going to the smaller pattern index.
pub(crate) fn solve_all_patterns(
    metric: Metric,
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
) -> Result<PatternSolution> {
    validate_instance(arrivals, session)?;
    let n = arrivals.len();
    if delay_fn.at_or_below_floor(energy, n) {
        let floor = n as f64 * delay_fn.shannon_floor();
        return Err(Error::EnergyBelowShannonFloor { energy, floor });
    }
    let tol = session.tolerance();
    let score = |s: &PatternSolution| match metric {
        Metric::Age => s.age,
        Metric::Delay => s.delay,
    };
    let mut best: Option<PatternSolution> = None;
    let mut late = None;
    for index in 0..1u64 << (n - 1) {
        let pattern = ChoicePattern::from_index(index, n);
        match solve_pattern_for(metric, &pattern, arrivals, energy, session, delay_fn)? {
            PatternOutcome::Solved(sol) => {
                if best.as_ref().is_none_or(|b| score(&sol) < score(b) - tol) {
                    best = Some(sol);
                }
            }
            PatternOutcome::Inconsistent(Inconsistency::LateReception { end }) => {
                late.get_or_insert(end);
            }
            PatternOutcome::Inconsistent(_) => {}
        }
    }
    best.ok_or_else(|| {
        Error::Infeasible(match late {
            Some(_) if session.allow_late_reception() => {
                format!("every consistent pattern starts its last update after the session end {}", session.duration())
            }
            Some(end) => format!(
                "every consistent pattern receives its last update at {end}, after the session end {}",
                session.duration()
            ),
            None => "no choice pattern is consistent with its own update times".into(),
        })
    })
}

/// Age-optimal schedule for externally arriving measurements.
pub fn solve_arrivals(
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
) -> Result<PatternSolution> {
    solve_all_patterns(Metric::Age, arrivals, energy, session, delay_fn)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrunedSolution {
    pub schedule: ArrivalSchedule,
    pub solution: PatternSolution,
    /// Measurements that were dropped as stale.
    pub dropped: Vec<f64>,
}

/// Drops measurements that are already superseded when they would be sent.
///
/// Whenever the solution sends update `i` after later measurements
/// `i+1..=i+l` have arrived, only the freshest of the queued block is kept
/// and the smaller instance is solved again, until nothing is stale.
pub fn prune_stale(
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
) -> Result<PrunedSolution> {
    let tol = session.tolerance();
    let mut schedule = arrivals.clone();
    let mut dropped = Vec::new();
    loop {
        let solution = solve_arrivals(&schedule, energy, session, delay_fn)?;
        let a = schedule.times();
        let stale = solution.times.iter().enumerate().find_map(|(i, &t)| {
            let last_queued = (i + 1..a.len()).take_while(|&j| t > a[j] + tol).last()?;
            Some((i, last_queued))
        });
        let Some((i, j)) = stale else {
            return Ok(PrunedSolution { schedule, solution, dropped });
        };
        dropped.extend_from_slice(&a[i..j]);
        let kept: Vec<f64> = a[..i].iter().chain(&a[j..]).copied().collect();
        schedule = ArrivalSchedule::new(kept)?;
    }
}
