//! Domain types, the delay-energy function, feasibility checks and the
//! exact age and delay evaluators.

mod delay_fn;
mod energy;
mod evaluate;
mod feasibility;
mod types;

pub use delay_fn::{DelayFunction, DEFAULT_BISECTION_TOL};
pub use energy::EnergyProfile;
pub(crate) use evaluate::{age_area, delay_area};
pub use evaluate::{age_trajectory, evaluate_age, evaluate_delay};
pub use feasibility::{check_feasibility, FeasibilityReport, Violation};
pub use types::{AgeTrajectory, ArrivalSchedule, SessionConfig, UpdatePolicy, DEFAULT_FEASIBILITY_TOL};
