//! Brute-force references for the analytic solvers.
//!
//! The grid searches work on integer multiples of `delta` and only use
//! facts that hold for every grid point: the objectives never decrease when
//! a service time grows with everything else fixed, the remaining age terms
//! are bounded below by an even split of the remaining time, and convexity
//! of `f` bounds the energy the remaining updates need. Nothing here relies
//! on water-filling or on the multiplier equation.

use serde::{Deserialize, Serialize};

use crate::arrival::{Choice, PatternSolution};
use crate::model::{age_area, delay_area, ArrivalSchedule, DelayFunction, EnergyProfile, SessionConfig, UpdatePolicy};
use crate::{Error, Result};

/// Slack allowed when comparing energy sums against what is available.
const ENERGY_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub delta: f64,
    pub node_budget: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { delta: 0.01, node_budget: 100_000_000 }
    }
}

impl GridSpec {
    pub fn new(delta: f64, node_budget: u64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::invalid(format!("grid step must be positive, got {delta}")));
        }
        Ok(Self { delta, node_budget })
    }
}

/// Best grid policy for the controlled model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledOptimum {
    pub policy: UpdatePolicy,
    pub age: f64,
    pub nodes: u64,
}

/// Which service times the controlled grid search may use. Transmission
/// times are always grid multiples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "delays", rename_all = "snake_case")]
pub enum DelaySearch {
    /// Every service time ranges over the grid on its own.
    Free,
    /// One common grid service time for all updates.
    Equal,
    /// Service times are taken as given.
    Fixed(Vec<f64>),
}

/// Smallest `k >= k_min` with `f(k delta) <= budget`, if any.
fn min_delay_index(delay_fn: &DelayFunction, delta: f64, k_min: i64, budget: f64) -> Option<i64> {
    if budget <= delay_fn.shannon_floor() {
        return None;
    }
    let fits = |k: i64| delay_fn.energy_raw(k as f64 * delta) <= budget + ENERGY_EPS;
    let guess = delay_fn.delay_for_energy(budget).ok()?;
    let mut k = ((guess / delta).ceil() as i64).max(k_min);
    while k > k_min && fits(k - 1) {
        k -= 1;
    }
    while !fits(k) {
        k += 1;
    }
    Some(k)
}

/// First grid index whose time is at or after `s`, matching the `s_j <= t`
/// convention of the harvest step function.
fn first_index_at_or_after(s: f64, delta: f64) -> i64 {
    let mut m = (s / delta).ceil() as i64;
    while m > 0 && (m - 1) as f64 * delta >= s {
        m -= 1;
    }
    while (m as f64) * delta < s {
        m += 1;
    }
    m
}

/// Last grid index at or before `s`, allowing for rounding in `s`.
fn last_index_at_or_before(s: f64, delta: f64) -> i64 {
    (s / delta + 1e-9).floor() as i64
}

struct ControlledSearch<'a> {
    n: usize,
    delta: f64,
    horizon: f64,
    last_index: i64,
    k_min: i64,
    energy_total: f64,
    profile: &'a EnergyProfile,
    delay_fn: &'a DelayFunction,
    /// `f(k delta)` for `k <= last_index`.
    energy_of: Vec<f64>,
    /// Grid index ranges `[lo, hi]` of constant harvest, with that harvest.
    segments: Vec<(i64, i64, f64)>,
    /// Given service times, with suffix sums of their lengths and energies.
    fixed: Option<(Vec<f64>, Vec<f64>, Vec<f64>)>,
    budget: u64,
    nodes: u64,
    best_cost: f64,
    best: Option<(Vec<i64>, Vec<f64>)>,
    t_idx: Vec<i64>,
    d_val: Vec<f64>,
}

impl ControlledSearch<'_> {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::OracleBudgetExceeded { budget: self.budget });
        }
        Ok(())
    }

    fn fix(&mut self, delays: Vec<f64>) {
        let n = delays.len();
        let mut length = vec![0.0; n + 1];
        let mut energy = vec![0.0; n + 1];
        for i in (0..n).rev() {
            length[i] = length[i + 1] + delays[i];
            energy[i] = energy[i + 1] + self.delay_fn.energy_raw(delays[i]);
        }
        self.fixed = Some((delays, length, energy));
    }

    fn dfs(&mut self, i: usize, prev_t: f64, earliest: i64, used: f64, cost: f64) -> Result<()> {
        if i + 1 == self.n {
            return self.leaf(prev_t, earliest, used, cost);
        }
        let (delta, horizon) = (self.delta, self.horizon);
        // Terms still to come after update i: the later updates plus the tail.
        let tail_terms = (self.n - i) as f64;
        let later = (self.n - 1 - i) as i64;
        let m_max = match &self.fixed {
            Some((_, length, _)) => last_index_at_or_before(horizon - length[i], delta),
            None => self.last_index - self.k_min * (later + 1),
        };
        let bound_argmin = (horizon + tail_terms * prev_t) / (tail_terms + 1.0);
        for m in earliest..=m_max {
            let t = m as f64 * delta;
            let gap = t - prev_t;
            let rest_bound = (horizon - t) * (horizon - t) / tail_terms;
            if cost + gap * gap + rest_bound >= self.best_cost {
                if t > bound_argmin {
                    break;
                }
                continue;
            }
            let available = self.profile.energy_at_raw(t);
            if let Some((delays, _, energy)) = &self.fixed {
                let (d, e, later_need) = (delays[i], energy[i] - energy[i + 1], energy[i + 1]);
                self.tick()?;
                if used + e > available + ENERGY_EPS || used + e + later_need > self.energy_total + ENERGY_EPS {
                    continue;
                }
                self.t_idx[i] = m;
                self.d_val[i] = d;
                let next = first_index_at_or_after(t + d - 1e-12, delta);
                self.dfs(i + 1, t, next, used + e, cost + gap * gap + 2.0 * gap * d)?;
                continue;
            }
            let k_max = self.last_index - m - self.k_min * later;
            for k in self.k_min..=k_max {
                self.tick()?;
                let e = self.energy_of[k as usize];
                if used + e > available + ENERGY_EPS {
                    continue;
                }
                let d = k as f64 * delta;
                let term = gap * gap + 2.0 * gap * d;
                if cost + term + rest_bound >= self.best_cost {
                    break;
                }
                let span = horizon - (m + k) as f64 * delta;
                let later_need = later as f64 * self.delay_fn.energy_raw(span / later as f64);
                if used + e + later_need > self.energy_total + ENERGY_EPS {
                    continue;
                }
                self.t_idx[i] = m;
                self.d_val[i] = d;
                self.dfs(i + 1, t, m + k, used + e, cost + term)?;
            }
        }
        Ok(())
    }

    fn leaf(&mut self, prev_t: f64, earliest: i64, used: f64, cost: f64) -> Result<()> {
        let (delta, horizon) = (self.delta, self.horizon);
        for s in 0..self.segments.len() {
            let (seg_lo, seg_hi, available) = self.segments[s];
            if seg_hi < earliest {
                continue;
            }
            self.tick()?;
            let (d, latest) = match &self.fixed {
                Some((delays, _, _)) => {
                    let d = delays[self.n - 1];
                    if used + self.delay_fn.energy_raw(d) > available + ENERGY_EPS {
                        continue;
                    }
                    (d, last_index_at_or_before(horizon - d, delta))
                }
                None => {
                    let Some(k) = min_delay_index(self.delay_fn, delta, self.k_min, available - used) else {
                        continue;
                    };
                    (k as f64 * delta, self.last_index - k)
                }
            };
            let lo = seg_lo.max(earliest);
            let hi = seg_hi.min(latest);
            if lo > hi {
                continue;
            }
            let total = |m: i64| {
                let t = m as f64 * delta;
                let gap = t - prev_t;
                cost + gap * gap + 2.0 * gap * d + (horizon - t) * (horizon - t)
            };
            let centre = (horizon + prev_t - d) / (2.0 * delta);
            let below = (centre.floor() as i64).clamp(lo, hi);
            let above = (centre.ceil() as i64).clamp(lo, hi);
            let (m, value) = if total(above) < total(below) { (above, total(above)) } else { (below, total(below)) };
            if value < self.best_cost {
                self.best_cost = value;
                let mut t_idx = self.t_idx.clone();
                let mut d_val = self.d_val.clone();
                t_idx[self.n - 1] = m;
                d_val[self.n - 1] = d;
                self.best = Some((t_idx, d_val));
            }
        }
        Ok(())
    }
}

/// Exhaustive grid search for the controlled model with `n` updates and
/// freely chosen grid service times. See [`grid_controlled_with`].
pub fn grid_controlled(
    n: usize,
    profile: &EnergyProfile,
    horizon: f64,
    delay_fn: &DelayFunction,
    grid: &GridSpec,
) -> Result<Option<ControlledOptimum>> {
    grid_controlled_with(n, profile, horizon, delay_fn, grid, &DelaySearch::Free)
}

/// Exhaustive grid search for the controlled model with `n` updates.
///
/// Transmission times are multiples of `delta`; service times follow
/// `delays`. Accepts harvesting profiles with any number of arrivals.
/// Returns `None` when no such policy is feasible.
pub fn grid_controlled_with(
    n: usize,
    profile: &EnergyProfile,
    horizon: f64,
    delay_fn: &DelayFunction,
    grid: &GridSpec,
    delays: &DelaySearch,
) -> Result<Option<ControlledOptimum>> {
    if n == 0 {
        return Err(Error::invalid("need at least one update"));
    }
    if let DelaySearch::Fixed(d) = delays {
        if d.len() != n {
            return Err(Error::invalid(format!("{} fixed service times for {n} updates", d.len())));
        }
        if let Some(&bad) = d.iter().find(|&&x| !(x.is_finite() && x > 0.0)) {
            return Err(Error::Domain { what: "service time", value: bad });
        }
    }
    let session = SessionConfig::new(horizon)?;
    let delta = grid.delta;
    let last_index = last_index_at_or_before(horizon, delta);
    let energy_total = profile.total();
    let Some(k_min) = min_delay_index(delay_fn, delta, 1, energy_total) else {
        return Ok(None);
    };
    // Even split of the whole session is the cheapest way to fit n updates.
    let fixed = matches!(delays, DelaySearch::Fixed(_));
    if (!fixed && k_min * n as i64 > last_index)
        || n as f64 * delay_fn.energy_raw(horizon / n as f64) > energy_total + ENERGY_EPS
    {
        return Ok(None);
    }
    let energy_of = match fixed {
        true => Vec::new(),
        false => (0..=last_index)
            .map(|k| if k == 0 { f64::INFINITY } else { delay_fn.energy_raw(k as f64 * delta) })
            .collect(),
    };

    let arrivals = profile.arrivals();
    let mut cumulative = 0.0;
    let mut segments = Vec::with_capacity(arrivals.len());
    for (j, &(s, e)) in arrivals.iter().enumerate() {
        cumulative += e;
        let lo = first_index_at_or_after(s, delta);
        let hi = match arrivals.get(j + 1) {
            Some(&(next, _)) => first_index_at_or_after(next, delta) - 1,
            None => last_index,
        };
        if lo <= hi.min(last_index) {
            segments.push((lo, hi.min(last_index), cumulative));
        }
    }

    let mut search = ControlledSearch {
        n,
        delta,
        horizon,
        last_index,
        k_min,
        energy_total,
        profile,
        delay_fn,
        energy_of,
        segments,
        fixed: None,
        budget: grid.node_budget,
        nodes: 0,
        best_cost: f64::INFINITY,
        best: None,
        t_idx: vec![0; n],
        d_val: vec![0.0; n],
    };
    // The equal-delay grid is small and its best point prunes the free search.
    if !fixed {
        for k in k_min..=last_index / n as i64 {
            if n as f64 * search.energy_of[k as usize] > energy_total + ENERGY_EPS {
                continue;
            }
            search.fix(vec![k as f64 * delta; n]);
            search.dfs(0, 0.0, 0, 0.0, 0.0)?;
        }
    }
    match delays {
        DelaySearch::Fixed(d) => {
            search.fix(d.clone());
            search.dfs(0, 0.0, 0, 0.0, 0.0)?;
        }
        DelaySearch::Free => {
            search.fixed = None;
            search.dfs(0, 0.0, 0, 0.0, 0.0)?;
        }
        DelaySearch::Equal => {}
    }

    let nodes = search.nodes;
    let Some((t_idx, delays)) = search.best else {
        return Ok(None);
    };
    let times = t_idx.iter().map(|&m| m as f64 * delta).collect();
    let policy = UpdatePolicy::new(times, delays)?;
    let age = age_area(&policy, session.duration(), policy.times());
    Ok(Some(ControlledOptimum { policy, age, nodes }))
}

/// Best grid policy for one of the arrival-model objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalOptimum {
    pub policy: UpdatePolicy,
    /// Linear objective: `sum w_i (t_i + d_i)` for age, `sum (2 t_i + d_i)`
    /// for delay.
    pub objective: f64,
    /// Age area or delay area of the policy.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalGridResult {
    pub age: Option<ArrivalOptimum>,
    pub delay: Option<ArrivalOptimum>,
    pub nodes: u64,
}

struct ArrivalSearch<'a> {
    arrivals: &'a [f64],
    weights: Vec<f64>,
    energy: f64,
    delta: f64,
    horizon: f64,
    late: bool,
    k_min: i64,
    delay_fn: &'a DelayFunction,
    budget: u64,
    nodes: u64,
    d_idx: Vec<i64>,
    best_age: Option<(f64, Vec<i64>)>,
    best_delay: Option<(f64, Vec<i64>)>,
}

impl ArrivalSearch<'_> {
    fn dfs(&mut self, i: usize, prev_end: f64, used: f64) -> Result<()> {
        let n = self.arrivals.len();
        let t = self.arrivals[i].max(prev_end);
        if i + 1 == n {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::OracleBudgetExceeded { budget: self.budget });
            }
            let Some(k) = min_delay_index(self.delay_fn, self.delta, self.k_min, self.energy - used) else {
                return Ok(());
            };
            if !self.late && t + k as f64 * self.delta > self.horizon + 1e-12 {
                return Ok(());
            }
            self.d_idx[i] = k;
            self.score();
            return Ok(());
        }
        let later = (n - 1 - i) as f64;
        let later_floor = later * self.delay_fn.shannon_floor();
        let mut k = self.k_min;
        loop {
            let d = k as f64 * self.delta;
            if t + d + later * self.k_min as f64 * self.delta > self.horizon + 1e-12 {
                break;
            }
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(Error::OracleBudgetExceeded { budget: self.budget });
            }
            let e = self.delay_fn.energy_raw(d);
            if used + e + later_floor < self.energy {
                self.d_idx[i] = k;
                self.dfs(i + 1, t + d, used + e)?;
            }
            k += 1;
        }
        Ok(())
    }

    fn score(&mut self) {
        let mut t_prev_end = 0.0f64;
        let mut age = 0.0;
        let mut delay = 0.0;
        for (i, &a) in self.arrivals.iter().enumerate() {
            let t = a.max(t_prev_end);
            let d = self.d_idx[i] as f64 * self.delta;
            age += self.weights[i] * (t + d);
            delay += 2.0 * t + d;
            t_prev_end = t + d;
        }
        if self.best_age.as_ref().is_none_or(|(v, _)| age < *v) {
            self.best_age = Some((age, self.d_idx.clone()));
        }
        if self.best_delay.as_ref().is_none_or(|(v, _)| delay < *v) {
            self.best_delay = Some((delay, self.d_idx.clone()));
        }
    }
}

/// Exhaustive grid search over service times for the arrival model, with
/// transmission times set to `max(a_i, t_{i-1} + d_{i-1})`. Minimises the
/// age and the delay objectives in one pass.
///
/// With late reception allowed the service times are still boxed by the
/// session length.
pub fn grid_arrivals(
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
    grid: &GridSpec,
) -> Result<ArrivalGridResult> {
    arrivals.check_within(session)?;
    let delta = grid.delta;
    let empty = ArrivalGridResult { age: None, delay: None, nodes: 0 };
    let Some(k_min) = min_delay_index(delay_fn, delta, 1, energy) else {
        return Ok(empty);
    };
    let mut search = ArrivalSearch {
        arrivals: arrivals.times(),
        weights: arrivals.weights(),
        energy,
        delta,
        horizon: session.duration(),
        late: session.allow_late_reception(),
        k_min,
        delay_fn,
        budget: grid.node_budget,
        nodes: 0,
        d_idx: vec![0; arrivals.len()],
        best_age: None,
        best_delay: None,
    };
    search.dfs(0, 0.0, 0.0)?;

    let build = |best: Option<(f64, Vec<i64>)>, age_metric: bool| -> Result<Option<ArrivalOptimum>> {
        let Some((objective, d_idx)) = best else { return Ok(None) };
        let delays: Vec<f64> = d_idx.iter().map(|&k| k as f64 * delta).collect();
        let mut times = Vec::with_capacity(delays.len());
        let mut prev_end = 0.0f64;
        for (&a, &d) in arrivals.times().iter().zip(&delays) {
            let t = a.max(prev_end);
            times.push(t);
            prev_end = t + d;
        }
        let policy = UpdatePolicy::new(times, delays)?;
        let value = if age_metric {
            age_area(&policy, session.duration(), arrivals.times())
        } else {
            delay_area(&policy, arrivals, delay_fn.bits())
        };
        Ok(Some(ArrivalOptimum { policy, objective, value }))
    };
    Ok(ArrivalGridResult {
        age: build(search.best_age, true)?,
        delay: build(search.best_delay, false)?,
        nodes: search.nodes,
    })
}

/// Residuals of a pattern solution against its optimality conditions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `|c_i + lambda f'(d_i)|`.
    pub coefficient_residuals: Vec<f64>,
    pub max_coefficient_residual: f64,
    /// `|sum f(d_i) - E|`.
    pub energy_residual: f64,
    /// `|t_i - max(a_i, t_{i-1} + d_{i-1})|`.
    pub consistency_slacks: Vec<f64>,
    pub max_consistency_slack: f64,
    /// Positions whose stored pattern branch is not the running maximum.
    pub branch_mismatches: Vec<usize>,
}

impl KktReport {
    pub fn within(&self, kkt_tol: f64, energy_tol: f64, consistency_tol: f64) -> bool {
        self.max_coefficient_residual <= kkt_tol
            && self.energy_residual <= energy_tol
            && self.max_consistency_slack <= consistency_tol
    }
}

pub fn kkt_audit(solution: &PatternSolution, delay_fn: &DelayFunction) -> KktReport {
    let d = &solution.delays;
    let t = &solution.times;
    let a = &solution.arrivals;

    let coefficient_residuals: Vec<f64> = solution
        .coefficients
        .iter()
        .zip(d)
        .map(|(&c, &di)| (c + solution.lambda * delay_fn.slope_raw(di)).abs())
        .collect();
    let spent: f64 = d.iter().map(|&di| delay_fn.energy_raw(di)).sum();

    let mut consistency_slacks = Vec::with_capacity(t.len());
    let mut branch_mismatches = Vec::new();
    for i in 0..t.len() {
        let (running_max, chained) = if i == 0 {
            (a[0], f64::NEG_INFINITY)
        } else {
            let chained = t[i - 1] + d[i - 1];
            (a[i].max(chained), chained)
        };
        consistency_slacks.push((t[i] - running_max).abs());
        if i > 0 {
            let branch = match solution.pattern.choices()[i - 1] {
                Choice::Arrival => a[i],
                Choice::Chain => chained,
            };
            if branch < running_max - 1e-9 {
                branch_mismatches.push(i + 1);
            }
        }
    }

    KktReport {
        max_coefficient_residual: coefficient_residuals.iter().copied().fold(0.0, f64::max),
        coefficient_residuals,
        energy_residual: (spent - solution.energy).abs(),
        max_consistency_slack: consistency_slacks.iter().copied().fold(0.0, f64::max),
        consistency_slacks,
        branch_mismatches,
    }
}
