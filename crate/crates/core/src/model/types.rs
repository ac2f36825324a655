use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default absolute tolerance for constraint checks.
pub const DEFAULT_FEASIBILITY_TOL: f64 = 1e-9;

/// Session length plus the knobs shared by every constraint check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    duration: f64,
    allow_late_reception: bool,
    tol: f64,
}

impl SessionConfig {
    pub fn new(duration: f64) -> Result<Self> {
        if !(duration.is_finite() && duration > 0.0) {
            return Err(Error::invalid(format!("session length T must be positive, got {duration}")));
        }
        Ok(Self { duration, allow_late_reception: false, tol: DEFAULT_FEASIBILITY_TOL })
    }

    /// Lets the last update be received after the session ends. Only the
    /// arrival and delay models honour this; the controlled model always
    /// needs `t_N + d_N <= T`.
    pub fn with_late_reception(mut self, allow: bool) -> Self {
        self.allow_late_reception = allow;
        self
    }

    pub fn with_tolerance(mut self, tol: f64) -> Result<Self> {
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::invalid(format!("tolerance must be non-negative, got {tol}")));
        }
        self.tol = tol;
        Ok(self)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn allow_late_reception(&self) -> bool {
        self.allow_late_reception
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }
}

/// Transmission start times `t_i` and service times `d_i` of `N` updates.
///
/// Construction only checks shape; ordering and session limits are the job
/// of [`check_feasibility`](crate::check_feasibility). An empty policy is
/// allowed so that evaluators can score the never-updated baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdatePolicy {
    times: Vec<f64>,
    delays: Vec<f64>,
}

impl UpdatePolicy {
    pub fn new(times: Vec<f64>, delays: Vec<f64>) -> Result<Self> {
        if times.len() != delays.len() {
            return Err(Error::invalid(format!("policy has {} times but {} delays", times.len(), delays.len())));
        }
        for (i, (&t, &d)) in times.iter().zip(&delays).enumerate() {
            if !(t.is_finite() && t >= 0.0) {
                return Err(Error::invalid(format!("t[{i}] must be finite and >= 0, got {t}")));
            }
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::invalid(format!("d[{i}] must be finite and > 0, got {d}")));
            }
        }
        Ok(Self { times, delays })
    }

    pub fn empty() -> Self {
        Self { times: Vec::new(), delays: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn delays(&self) -> &[f64] {
        &self.delays
    }

    /// Reception instants `r_i = t_i + d_i`.
    pub fn receptions(&self) -> impl Iterator<Item = f64> + '_ {
        self.times.iter().zip(&self.delays).map(|(t, d)| t + d)
    }
}

/// Measurement arrival times `0 < a_1 < ... < a_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrivalSchedule {
    times: Vec<f64>,
}

impl ArrivalSchedule {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::invalid("arrival schedule needs at least one measurement"));
        }
        let mut prev = 0.0;
        for (i, &a) in times.iter().enumerate() {
            if !(a.is_finite() && a > prev) {
                return Err(Error::invalid(format!(
                    "arrivals[{i}]: arrival times must be positive and strictly increasing ({prev} then {a})"
                )));
            }
            prev = a;
        }
        Ok(Self { times })
    }

    /// Checks `a_N <= T`.
    pub fn check_within(&self, session: &SessionConfig) -> Result<()> {
        let last = self.last();
        if last > session.duration() {
            return Err(Error::invalid(format!("last arrival {last} is after the session end {}", session.duration())));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn last(&self) -> f64 {
        *self.times.last().expect("schedule is non-empty")
    }

    /// Inter-arrival weights `w_i = a_i - a_{i-1}` with `a_0 = 0`.
    pub fn weights(&self) -> Vec<f64> {
        let mut prev = 0.0;
        self.times
            .iter()
            .map(|&a| {
                let w = a - prev;
                prev = a;
                w
            })
            .collect()
    }
}

/// Vertices `(time, age)` of the piecewise-linear age curve on `[0, T]`.
///
/// Receptions appear as two vertices sharing a time: the age just before and
/// just after the drop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgeTrajectory {
    pub breakpoints: Vec<(f64, f64)>,
}

impl AgeTrajectory {
    /// Trapezoid rule over the vertices; exact for this curve.
    pub fn area(&self) -> f64 {
        self.breakpoints.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1 + w[1].1)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_shape_checks() {
        assert!(UpdatePolicy::new(vec![1.0], vec![]).is_err());
        assert!(UpdatePolicy::new(vec![-1.0], vec![1.0]).is_err());
        assert!(UpdatePolicy::new(vec![1.0], vec![0.0]).is_err());
        let p = UpdatePolicy::new(vec![1.0, 3.0], vec![1.0, 0.5]).unwrap();
        assert_eq!(p.receptions().collect::<Vec<_>>(), vec![2.0, 3.5]);
        assert!(UpdatePolicy::empty().is_empty());
    }

    #[test]
    fn arrival_schedule_checks() {
        assert!(ArrivalSchedule::new(vec![]).is_err());
        assert!(ArrivalSchedule::new(vec![0.0, 1.0]).is_err());
        assert!(ArrivalSchedule::new(vec![1.0, 1.0]).is_err());
        let a = ArrivalSchedule::new(vec![1.0, 3.0, 4.5]).unwrap();
        assert_eq!(a.weights(), vec![1.0, 2.0, 1.5]);
        let cfg = SessionConfig::new(4.0).unwrap();
        assert!(a.check_within(&cfg).is_err());
    }

    #[test]
    fn session_checks() {
        assert!(SessionConfig::new(0.0).is_err());
        assert!(SessionConfig::new(f64::INFINITY).is_err());
        assert!(SessionConfig::new(1.0).unwrap().with_tolerance(-1.0).is_err());
    }
}
