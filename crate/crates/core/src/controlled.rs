//! Source-controlled measurements with all energy available at time zero.
//!
//! With `x_1 = t_1 + d_1`, `x_i = t_i + d_i - t_{i-1}` and
//! `x_{N+1} = T - t_N`, twice the age area is `sum x_i^2 - sum d_i^2`, the
//! intervals are bounded below by `d_1`, `d_i + d_{i-1}` and `d_N`, and they
//! must add up to `T + sum d_i`. For fixed service times the optimal
//! intervals level the smallest ones up to a common height; see
//! [`waterfill`].

use serde::{Deserialize, Serialize};

use crate::model::{age_area, DelayFunction, UpdatePolicy};
use crate::{Error, Result};

/// Inter-update intervals together with their lower bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterUpdateVector {
    pub x: Vec<f64>,
    pub floors: Vec<f64>,
}

impl InterUpdateVector {
    /// Interval form of an existing policy.
    pub fn from_policy(policy: &UpdatePolicy, horizon: f64) -> Result<Self> {
        let (t, d) = (policy.times(), policy.delays());
        if t.is_empty() {
            return Err(Error::invalid("interval form needs at least one update"));
        }
        let mut x = Vec::with_capacity(t.len() + 1);
        let mut prev = 0.0;
        for (&ti, &di) in t.iter().zip(d) {
            x.push(ti + di - prev);
            prev = ti;
        }
        x.push(horizon - prev);
        Ok(Self { x, floors: floors(d) })
    }

    pub fn budget(&self) -> f64 {
        self.x.iter().sum()
    }

    /// `sum x_i^2 - sum d_i^2`, twice the age area.
    pub fn objective(&self, delays: &[f64]) -> f64 {
        self.x.iter().map(|x| x * x).sum::<f64>() - delays.iter().map(|d| d * d).sum::<f64>()
    }
}

fn floors(d: &[f64]) -> Vec<f64> {
    let n = d.len();
    let mut l = Vec::with_capacity(n + 1);
    l.push(d[0]);
    l.extend(d.windows(2).map(|w| w[0] + w[1]));
    l.push(d[n - 1]);
    l
}

/// Validates the service times and returns `(floors, T + sum d)`.
fn setup(d: &[f64], horizon: f64) -> Result<(Vec<f64>, f64)> {
    if d.is_empty() {
        return Err(Error::invalid("need at least one service time"));
    }
    if let Some(&bad) = d.iter().find(|&&di| !(di.is_finite() && di > 0.0)) {
        return Err(Error::Domain { what: "service time", value: bad });
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::invalid(format!("session length T must be positive, got {horizon}")));
    }
    let total: f64 = d.iter().sum();
    if total > horizon {
        return Err(Error::InfeasibleSession { total_delay: total, session: horizon });
    }
    Ok((floors(d), horizon + total))
}

/// Optimal inter-update intervals for fixed service times `d` in a session
/// of length `horizon`.
///
/// Solves `x_i = max(l_i, level)` with `sum_i max(l_i, level) = T + sum d`.
/// The level is found exactly from the sorted floors.
pub fn waterfill(d: &[f64], horizon: f64) -> Result<InterUpdateVector> {
    let (floors, budget) = setup(d, horizon)?;
    let level = water_level(&floors, budget);
    let x = floors.iter().map(|&l| l.max(level)).collect();
    Ok(InterUpdateVector { x, floors })
}

fn water_level(floors: &[f64], budget: f64) -> f64 {
    let mut sorted = floors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut rest: f64 = sorted.iter().sum();
    for k in 1..=n {
        // Raise the k smallest floors; the others stay put.
        rest -= sorted[k - 1];
        let level = (budget - rest) / k as f64;
        if k == n || level <= sorted[k] {
            return level;
        }
    }
    unreachable!("loop returns at k == n")
}

/// Same result as [`waterfill`], computed by repeatedly raising the set of
/// smallest intervals together, jumping straight to the next distinct value
/// or to the level that spends the remaining budget, whichever comes first.
pub fn waterfill_literal(d: &[f64], horizon: f64) -> Result<InterUpdateVector> {
    let (floors, budget) = setup(d, horizon)?;
    let mut x = floors.clone();
    loop {
        let remaining = budget - x.iter().sum::<f64>();
        if remaining <= 0.0 {
            break;
        }
        let low = x.iter().copied().fold(f64::INFINITY, f64::min);
        let lowest: Vec<usize> = (0..x.len()).filter(|&i| x[i] == low).collect();
        let next = x.iter().copied().filter(|&v| v > low).fold(f64::INFINITY, f64::min);
        let count = lowest.len() as f64;
        let target = if (next - low) * count >= remaining { low + remaining / count } else { next };
        for &i in &lowest {
            x[i] = target;
        }
        if target != next {
            break;
        }
    }
    Ok(InterUpdateVector { x, floors })
}

/// Maps intervals back to transmission times: `t_1 = x_1 - d_1`,
/// `t_i = t_{i-1} + x_i - d_i`.
pub fn recover_times(intervals: &InterUpdateVector, d: &[f64]) -> Result<UpdatePolicy> {
    let x = &intervals.x;
    if d.is_empty() || x.len() != d.len() + 1 {
        return Err(Error::invalid(format!("{} intervals do not match {} service times", x.len(), d.len())));
    }
    let mut times = Vec::with_capacity(d.len());
    let mut prev = 0.0;
    for (xi, di) in x.iter().zip(d) {
        let t = prev + xi - di;
        times.push(t);
        prev = t;
    }
    UpdatePolicy::new(times, d.to_vec())
}

/// Equal-delay policy with `n` updates and the optimal intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlledSolution {
    pub policy: UpdatePolicy,
    pub intervals: InterUpdateVector,
    /// Common service time `f^-1(E / n)`.
    pub delay: f64,
    pub age: f64,
}

/// Sends `n` updates with equal service times that together spend all of
/// `energy`, then places them with [`waterfill`].
pub fn equal_delay_policy(n: usize, energy: f64, horizon: f64, delay_fn: &DelayFunction) -> Result<ControlledSolution> {
    if n == 0 {
        return Err(Error::invalid("need at least one update"));
    }
    if delay_fn.at_or_below_floor(energy, n) {
        return Err(Error::EnergyBelowShannonFloor { energy, floor: n as f64 * delay_fn.shannon_floor() });
    }
    let d = delay_fn.delay_for_energy(energy / n as f64)?;
    let delays = vec![d; n];
    let intervals = waterfill(&delays, horizon)?;
    let policy = recover_times(&intervals, &delays)?;
    let age = age_area(&policy, horizon, policy.times());
    Ok(ControlledSolution { policy, intervals, delay: d, age })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepStatus {
    Feasible,
    BelowShannonFloor,
    InfeasibleSession,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub status: SweepStatus,
    /// Equal service time, when the per-update energy is above the floor.
    pub delay: Option<f64>,
    pub age: Option<f64>,
}

impl SweepRow {
    pub fn feasible(&self) -> bool {
        self.status == SweepStatus::Feasible
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    /// Number of updates with the least age; the smaller count wins ties.
    pub best: Option<usize>,
}

/// Equal-delay policies for `n = 1..=n_max`.
pub fn sweep_n(energy: f64, horizon: f64, delay_fn: &DelayFunction, n_max: usize) -> Result<Sweep> {
    if n_max == 0 {
        return Err(Error::invalid("N_max must be at least 1"));
    }
    let mut rows = Vec::with_capacity(n_max);
    let mut best: Option<(usize, f64)> = None;
    for n in 1..=n_max {
        let row = match equal_delay_policy(n, energy, horizon, delay_fn) {
            Ok(sol) => {
                if best.is_none_or(|(_, age)| sol.age < age) {
                    best = Some((n, sol.age));
                }
                SweepRow { n, status: SweepStatus::Feasible, delay: Some(sol.delay), age: Some(sol.age) }
            }
            Err(Error::EnergyBelowShannonFloor { .. }) => {
                SweepRow { n, status: SweepStatus::BelowShannonFloor, delay: None, age: None }
            }
            Err(Error::InfeasibleSession { .. }) => SweepRow {
                n,
                status: SweepStatus::InfeasibleSession,
                delay: Some(delay_fn.delay_for_energy(energy / n as f64)?),
                age: None,
            },
            Err(e) => return Err(e),
        };
        rows.push(row);
    }
    Ok(Sweep { rows, best: best.map(|(n, _)| n) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn waterfill_examples() {
        let w = waterfill(&[1.0, 2.0], 4.0).unwrap();
        assert_eq!(w.floors, vec![1.0, 3.0, 2.0]);
        assert!(close(&w.x, &[2.0, 3.0, 2.0], 1e-12));

        let w = waterfill(&[1.0, 2.0], 7.0).unwrap();
        assert!(close(&w.x, &[10.0 / 3.0; 3], 1e-12));

        let w = waterfill(&[1.0, 1.0], 2.0).unwrap();
        assert_eq!(w.x, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn literal_examples() {
        let w = waterfill_literal(&[1.0, 2.0], 4.0).unwrap();
        assert!(close(&w.x, &[2.0, 3.0, 2.0], 1e-12));
        let w = waterfill_literal(&[1.0, 2.0], 7.0).unwrap();
        assert!(close(&w.x, &[10.0 / 3.0; 3], 1e-12));
        let w = waterfill_literal(&[1.0, 1.0], 2.0).unwrap();
        assert_eq!(w.x, vec![1.0, 2.0, 1.0]);
    }

    #[test]
    fn overfull_session_is_rejected() {
        assert!(matches!(waterfill(&[3.0, 2.0], 4.0), Err(Error::InfeasibleSession { .. })));
        assert!(matches!(waterfill_literal(&[3.0, 2.0], 4.0), Err(Error::InfeasibleSession { .. })));
        assert!(waterfill(&[], 4.0).is_err());
        assert!(waterfill(&[1.0, -1.0], 4.0).is_err());
    }

    #[test]
    fn recover_examples() {
        let iv = InterUpdateVector { x: vec![2.0, 3.0, 2.0], floors: vec![1.0, 3.0, 2.0] };
        let p = recover_times(&iv, &[1.0, 2.0]).unwrap();
        assert_eq!(p.times(), &[1.0, 2.0]);

        let iv = InterUpdateVector { x: vec![5.5, 5.5], floors: vec![1.0, 1.0] };
        let p = recover_times(&iv, &[1.0]).unwrap();
        assert_eq!(p.times(), &[4.5]);

        let back = InterUpdateVector::from_policy(&p, 10.0).unwrap();
        assert!(close(&back.x, &[5.5, 5.5], 1e-12));
    }

    #[test]
    fn single_update_closed_form() {
        let df = DelayFunction::new(1.0).unwrap();
        let sol = equal_delay_policy(1, 3.0, 10.0, &df).unwrap();
        assert!((sol.delay - 1.0).abs() < 1e-10);
        assert!((sol.policy.times()[0] - 4.5).abs() < 1e-10);
        assert!((sol.age - 29.75).abs() < 1e-8);
    }

    #[test]
    fn equal_delay_errors() {
        let df = DelayFunction::new(1.0).unwrap();
        assert!(matches!(equal_delay_policy(8, 20.0, 10.0, &df), Err(Error::InfeasibleSession { .. })));
        assert!(matches!(equal_delay_policy(3, 3.0, 10.0, &df), Err(Error::EnergyBelowShannonFloor { .. })));
        assert!(equal_delay_policy(0, 3.0, 10.0, &df).is_err());
    }

    #[test]
    fn equal_delay_spends_all_energy() {
        let df = DelayFunction::new(1.0).unwrap();
        for n in 1..=7 {
            let sol = equal_delay_policy(n, 20.0, 10.0, &df).unwrap();
            let spent = n as f64 * df.energy(sol.delay).unwrap();
            assert!((spent - 20.0).abs() < 1e-8, "n={n}: {spent}");
        }
    }

    #[test]
    fn sweep_small_energy() {
        let df = DelayFunction::new(1.0).unwrap();
        let s = sweep_n(3.0, 10.0, &df, 3).unwrap();
        let status: Vec<_> = s.rows.iter().map(|r| r.status).collect();
        assert_eq!(status, vec![SweepStatus::Feasible, SweepStatus::InfeasibleSession, SweepStatus::BelowShannonFloor]);
        // f^-1(1.5) is about 8.91, so two such updates need 17.8 > 10.
        assert!(s.rows[1].delay.unwrap() * 2.0 > 10.0);
        assert_eq!(s.best, Some(1));
    }

    #[test]
    fn sweep_huge_energy_first_row_is_feasible() {
        let df = DelayFunction::new(1.0).unwrap();
        let s = sweep_n(1e6, 10.0, &df, 1).unwrap();
        assert!(s.rows[0].feasible());
        assert!(s.rows[0].age.unwrap() > 0.0);
    }
}
