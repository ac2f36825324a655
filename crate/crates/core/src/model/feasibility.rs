use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ArrivalSchedule, DelayFunction, EnergyProfile, SessionConfig, UpdatePolicy};
use crate::{Error, Result};

/// A violated constraint. Indices are 1-based to match update numbering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "constraint", rename_all = "snake_case")]
pub enum Violation {
    /// Cumulative energy spent by update `k` exceeds the harvest by `t_k`.
    EnergyCausality { k: usize, excess: f64 },
    /// Update `i` is still in service when the next one (or the session
    /// end, for the last update) begins.
    Service { i: usize, overlap: f64 },
    /// Update `i` is sent before its measurement arrives.
    DataCausality { i: usize, early: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Violation::EnergyCausality { k, excess } => {
                write!(f, "energy causality at update {k}: spends {excess} more than harvested")
            }
            Violation::Service { i, overlap } => {
                write!(f, "service time of update {i} overruns the next start by {overlap}")
            }
            Violation::DataCausality { i, early } => {
                write!(f, "data causality at update {i}: sent {early} before its arrival")
            }
        }
    }
}

/// Per-constraint slacks (non-negative when satisfied) and the violations
/// beyond tolerance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    /// `E(t_k) - sum_{i<=k} f(d_i)`.
    pub energy_slack: Vec<f64>,
    /// `t_{i+1} - (t_i + d_i)` with `t_{N+1} = T`. With late reception
    /// allowed the last entry is `T - t_N` instead.
    pub service_slack: Vec<f64>,
    /// `t_i - a_i`, when an arrival schedule was supplied.
    pub data_slack: Option<Vec<f64>>,
    pub violations: Vec<Violation>,
}

impl FeasibilityReport {
    pub fn is_feasible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks energy causality, one-at-a-time service, and (when `arrivals` is
/// given) data causality. Accepts any harvesting profile.
///
/// Energy causality is enforced cumulatively against the harvest at each
/// start time: `sum_{i<=k} f(d_i) <= E(t_k)`.
pub fn check_feasibility(
    policy: &UpdatePolicy,
    profile: &EnergyProfile,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
    arrivals: Option<&ArrivalSchedule>,
) -> Result<FeasibilityReport> {
    let n = policy.len();
    if let Some(a) = arrivals {
        if a.len() != n {
            return Err(Error::invalid(format!("policy has {n} updates but the arrival schedule has {}", a.len())));
        }
    }
    let tol = session.tolerance();
    let (t, d) = (policy.times(), policy.delays());
    let mut violations = Vec::new();

    let mut spent = 0.0;
    let energy_slack: Vec<f64> = (0..n)
        .map(|k| {
            spent += delay_fn.energy_raw(d[k]);
            profile.energy_at_raw(t[k]) - spent
        })
        .collect();
    for (k, &s) in energy_slack.iter().enumerate() {
        if !(s >= -tol) {
            violations.push(Violation::EnergyCausality { k: k + 1, excess: -s });
        }
    }

    let service_slack: Vec<f64> = (0..n)
        .map(|i| match t.get(i + 1) {
            Some(&next) => next - (t[i] + d[i]),
            None if session.allow_late_reception() => session.duration() - t[i],
            None => session.duration() - (t[i] + d[i]),
        })
        .collect();
    for (i, &s) in service_slack.iter().enumerate() {
        if !(s >= -tol) {
            violations.push(Violation::Service { i: i + 1, overlap: -s });
        }
    }

    let data_slack = arrivals.map(|a| {
        let slack: Vec<f64> = t.iter().zip(a.times()).map(|(t, a)| t - a).collect();
        for (i, &s) in slack.iter().enumerate() {
            if !(s >= -tol) {
                violations.push(Violation::DataCausality { i: i + 1, early: -s });
            }
        }
        slack
    });

    Ok(FeasibilityReport { energy_slack, service_slack, data_slack, violations })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> DelayFunction {
        DelayFunction::new(1.0).unwrap()
    }

    #[test]
    fn single_update_is_tight() {
        let p = UpdatePolicy::new(vec![4.5], vec![1.0]).unwrap();
        let e = EnergyProfile::single(3.0).unwrap();
        let cfg = SessionConfig::new(10.0).unwrap();
        let r = check_feasibility(&p, &e, &cfg, &unit(), None).unwrap();
        assert!(r.is_feasible());
        assert!(r.energy_slack[0].abs() < 1e-12);
        assert_eq!(r.service_slack, vec![4.5]);
    }

    #[test]
    fn overlapping_service_is_reported() {
        let p = UpdatePolicy::new(vec![0.0, 1.0], vec![2.0, 1.0]).unwrap();
        let e = EnergyProfile::single(100.0).unwrap();
        let cfg = SessionConfig::new(10.0).unwrap();
        let r = check_feasibility(&p, &e, &cfg, &unit(), None).unwrap();
        assert_eq!(r.violations, vec![Violation::Service { i: 1, overlap: 1.0 }]);
    }

    #[test]
    fn early_transmission_is_reported() {
        let p = UpdatePolicy::new(vec![1.0, 2.0], vec![0.5, 0.5]).unwrap();
        let a = ArrivalSchedule::new(vec![1.0, 3.0]).unwrap();
        let e = EnergyProfile::single(100.0).unwrap();
        let cfg = SessionConfig::new(10.0).unwrap();
        let r = check_feasibility(&p, &e, &cfg, &unit(), Some(&a)).unwrap();
        assert_eq!(r.violations, vec![Violation::DataCausality { i: 2, early: 1.0 }]);
        assert_eq!(r.data_slack, Some(vec![0.0, -1.0]));
    }

    #[test]
    fn energy_causality_uses_harvest_at_start_time() {
        // f(1) = 3 each; the second packet only arrives at t = 4.
        let e = EnergyProfile::new(vec![(0.0, 3.0), (4.0, 3.0)]).unwrap();
        let cfg = SessionConfig::new(10.0).unwrap();
        let early = UpdatePolicy::new(vec![0.0, 2.0], vec![1.0, 1.0]).unwrap();
        let r = check_feasibility(&early, &e, &cfg, &unit(), None).unwrap();
        assert!(matches!(r.violations[..], [Violation::EnergyCausality { k: 2, .. }]));
        let late = UpdatePolicy::new(vec![0.0, 4.0], vec![1.0, 1.0]).unwrap();
        assert!(check_feasibility(&late, &e, &cfg, &unit(), None).unwrap().is_feasible());
    }

    #[test]
    fn late_reception_flag_relaxes_last_service() {
        let p = UpdatePolicy::new(vec![9.5], vec![1.0]).unwrap();
        let e = EnergyProfile::single(100.0).unwrap();
        let strict = SessionConfig::new(10.0).unwrap();
        assert!(!check_feasibility(&p, &e, &strict, &unit(), None).unwrap().is_feasible());
        let relaxed = strict.with_late_reception(true);
        assert!(check_feasibility(&p, &e, &relaxed, &unit(), None).unwrap().is_feasible());
    }

    #[test]
    fn arrival_length_mismatch_is_an_error() {
        let p = UpdatePolicy::new(vec![1.0], vec![0.5]).unwrap();
        let a = ArrivalSchedule::new(vec![1.0, 3.0]).unwrap();
        let e = EnergyProfile::single(100.0).unwrap();
        let cfg = SessionConfig::new(10.0).unwrap();
        assert!(check_feasibility(&p, &e, &cfg, &unit(), Some(&a)).is_err());
    }
}
