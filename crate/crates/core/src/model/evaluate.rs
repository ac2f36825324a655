use super::{AgeTrajectory, ArrivalSchedule, DelayFunction, SessionConfig, UpdatePolicy};
use crate::{Error, Result};

/// Age area `A_T = int_0^T a(t) dt` of a policy whose update `i` carries the
/// measurement timestamp `timestamps[i]` (its own start time in the
/// controlled model, its arrival time in the arrival model):
///
/// ```text
/// A_T = sum_i [ (r_i - u_{i-1})^2 - (r_i - u_i)^2 ] / 2 + (T - u_N)^2 / 2
/// ```
///
/// with `r_i = t_i + d_i` and `u_0 = 0`. When late reception is allowed the
/// same expression is used, which for `r_N > T` is the analytic objective
/// rather than a geometric area.
pub fn evaluate_age(policy: &UpdatePolicy, session: &SessionConfig, timestamps: &[f64]) -> Result<f64> {
    check_timeline(policy, session, timestamps)?;
    Ok(age_area(policy, session.duration(), timestamps))
}

pub(crate) fn age_area(policy: &UpdatePolicy, horizon: f64, timestamps: &[f64]) -> f64 {
    let mut prev = 0.0;
    let mut area = 0.0;
    for (r, &u) in policy.receptions().zip(timestamps) {
        area += 0.5 * ((r - prev) * (r - prev) - (r - u) * (r - u));
        prev = u;
    }
    area + 0.5 * (horizon - prev) * (horizon - prev)
}

/// Per-packet delay area `D_T = sum_i B (t_i - a_i) + B d_i / 2`.
pub fn evaluate_delay(policy: &UpdatePolicy, arrivals: &ArrivalSchedule, delay_fn: &DelayFunction) -> Result<f64> {
    if policy.len() != arrivals.len() {
        return Err(Error::Precondition(format!(
            "policy has {} updates but {} arrivals",
            policy.len(),
            arrivals.len()
        )));
    }
    let (t, d) = (policy.times(), policy.delays());
    for i in 0..t.len() {
        if t[i] < arrivals.times()[i] - 1e-9 {
            return Err(Error::Precondition(format!("update {} sent before its arrival", i + 1)));
        }
        if i + 1 < t.len() && t[i] + d[i] > t[i + 1] + 1e-9 {
            return Err(Error::Precondition(format!("update {} overlaps the next", i + 1)));
        }
    }
    Ok(delay_area(policy, arrivals, delay_fn.bits()))
}

pub(crate) fn delay_area(policy: &UpdatePolicy, arrivals: &ArrivalSchedule, bits: f64) -> f64 {
    policy
        .times()
        .iter()
        .zip(policy.delays())
        .zip(arrivals.times())
        .map(|((t, d), a)| bits * (t - a) + 0.5 * bits * d)
        .sum()
}

/// Vertices of the age curve on `[0, T]`.
///
/// Receptions after `T` (only possible with late reception allowed) do not
/// appear; the curve then covers only what happens inside the session.
pub fn age_trajectory(policy: &UpdatePolicy, session: &SessionConfig, timestamps: &[f64]) -> Result<AgeTrajectory> {
    check_timeline(policy, session, timestamps)?;
    let horizon = session.duration();
    let mut pts = vec![(0.0, 0.0)];
    let mut stamp = 0.0;
    for (r, &u) in policy.receptions().zip(timestamps) {
        if r > horizon {
            break;
        }
        pts.push((r, r - stamp));
        pts.push((r, r - u));
        stamp = u;
    }
    let end = (horizon, horizon - stamp);
    if pts.last() != Some(&end) {
        pts.push(end);
    }
    Ok(AgeTrajectory { breakpoints: pts })
}

fn check_timeline(policy: &UpdatePolicy, session: &SessionConfig, timestamps: &[f64]) -> Result<()> {
    let n = policy.len();
    if timestamps.len() != n {
        return Err(Error::Precondition(format!("{} timestamps for {n} updates", timestamps.len())));
    }
    let tol = session.tolerance();
    let (t, d) = (policy.times(), policy.delays());
    for i in 0..n {
        if timestamps[i] > t[i] + tol {
            return Err(Error::Precondition(format!(
                "update {} is stamped {} but sent at {}",
                i + 1,
                timestamps[i],
                t[i]
            )));
        }
        if i > 0 && timestamps[i] < timestamps[i - 1] {
            return Err(Error::Precondition(format!("timestamps decrease at update {}", i + 1)));
        }
        let next = match t.get(i + 1) {
            Some(&next) => next,
            None if session.allow_late_reception() => f64::INFINITY,
            None => session.duration(),
        };
        if t[i] + d[i] > next + tol {
            return Err(Error::Precondition(format!("update {} is still in service at {next}", i + 1)));
        }
    }
    if let Some(&last) = t.last() {
        if last > session.duration() + tol {
            return Err(Error::Precondition("last update starts after the session end".into()));
        }
    }
    Ok(())
}
