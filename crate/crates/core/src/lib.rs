//! Offline age-of-information minimal scheduling for a single energy
//! harvesting source whose per-update service time is set by the energy
//! spent on it.
//!
//! The crate is organised around three solvers that share one model:
//!
//! - [`controlled`]: the source picks the number of updates and their
//!   transmission times; inter-update intervals are water-filled for given
//!   service times, and the number of updates is chosen by a sweep over the
//!   equal-delay family.
//! - [`arrival`]: measurements arrive externally; the optimal update times
//!   are a running maximum of arrival times and chained receptions, so each
//!   branch pattern reduces the problem to a linear objective whose KKT point
//!   is found by bisection on the Lagrange multiplier.
//! - [`delay`]: the per-packet delay variant of the arrival problem, solved
//!   with the same machinery.
//!
//! [`oracle`] holds brute-force grid searches and a KKT audit used to
//! cross-check all of the above.
//!
//! All solvers assume one energy arrival at time zero. The model layer and
//! the grid oracle accept general harvesting profiles.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrival;
mod bisect;
pub mod controlled;
pub mod delay;
mod error;
pub mod model;
pub mod oracle;

pub use error::{Error, Result};
pub use model::{
    age_trajectory, check_feasibility, evaluate_age, evaluate_delay, AgeTrajectory, ArrivalSchedule, DelayFunction,
    EnergyProfile, FeasibilityReport, SessionConfig, UpdatePolicy, Violation,
};
