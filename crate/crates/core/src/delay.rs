//! Per-packet delay minimisation over the same constraints as the arrival
//! model. Its objective `sum (2 t_i + d_i)` has the same running-maximum
//! structure as the age objective, only with unit weights, so the pattern
//! and multiplier machinery of [`crate::arrival`] carries over with the
//! coefficients of [`delay_coefficients`].

use crate::arrival::{solve_all_patterns, Metric, PatternSolution};
use crate::model::{ArrivalSchedule, DelayFunction, SessionConfig};
use crate::Result;

pub use crate::arrival::delay_coefficients;

/// Delay-optimal schedule. The returned solution carries the delay area in
/// `delay` and, for comparison, the age area of the same policy in `age`.
pub fn solve_delay(
    arrivals: &ArrivalSchedule,
    energy: f64,
    session: &SessionConfig,
    delay_fn: &DelayFunction,
) -> Result<PatternSolution> {
    solve_all_patterns(Metric::Delay, arrivals, energy, session, delay_fn)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrival::solve_arrivals;
    use crate::evaluate_delay;

    fn unit() -> DelayFunction {
        DelayFunction::new(1.0).unwrap()
    }

    #[test]
    fn single_update() {
        let df = unit();
        let cfg = SessionConfig::new(10.0).unwrap();
        let a = ArrivalSchedule::new(vec![2.0]).unwrap();
        let s = solve_delay(&a, 3.0, &cfg, &df).unwrap();
        assert!((s.times[0] - 2.0).abs() < 1e-12);
        assert!((s.delays[0] - 1.0).abs() < 1e-10);
        assert!((s.delay - 0.5).abs() < 1e-10);
        assert!((s.delay - evaluate_delay(&s.policy(), &a, &df).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn equal_weights_without_chaining_agree_with_age() {
        // Evenly spaced arrivals far enough apart that neither optimum chains.
        let df = unit();
        let cfg = SessionConfig::new(10.0).unwrap();
        let a = ArrivalSchedule::new(vec![2.0, 4.0, 6.0]).unwrap();
        let by_delay = solve_delay(&a, 9.0, &cfg, &df).unwrap();
        let by_age = solve_arrivals(&a, 9.0, &cfg, &df).unwrap();
        assert_eq!(by_delay.pattern.index(), 0);
        assert_eq!(by_age.pattern.index(), 0);
        for (x, y) in by_delay.delays.iter().zip(&by_age.delays) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn delay_identity() {
        let df = DelayFunction::new(0.7).unwrap();
        let cfg = SessionConfig::new(10.0).unwrap();
        let a = ArrivalSchedule::new(vec![0.5, 0.9, 3.0]).unwrap();
        let s = solve_delay(&a, 6.0, &cfg, &df).unwrap();
        let sum_a: f64 = a.times().iter().sum();
        let via_objective = 0.5 * df.bits() * s.objective - df.bits() * sum_a;
        assert!((s.delay - via_objective).abs() < 1e-9);
    }
}
