//! Mode dispatch and solution records.

use aoi_core::arrival::{solve_arrivals, PatternSolution};
use aoi_core::controlled::{equal_delay_policy, sweep_n, ControlledSolution, Sweep};
use aoi_core::delay::solve_delay;
use aoi_core::oracle::kkt_audit;
use aoi_core::{age_trajectory, check_feasibility, AgeTrajectory, Error, FeasibilityReport, UpdatePolicy};
use serde::Serialize;

use crate::instance::{Mode, Problem};
use crate::validate::{run_validate, ValidateReport};

/// Largest `|c_i + lambda f'(d_i)|` an emitted solution may carry.
pub const KKT_TOL: f64 = 1e-6;
/// Largest `|sum f(d_i) - E|` an emitted solution may carry.
pub const ENERGY_TOL: f64 = 1e-8;

/// Why a run did not produce a solution.
#[derive(Debug)]
pub enum Failure {
    Input(String),
    /// No policy meets the named constraint.
    Infeasible {
        constraint: &'static str,
        detail: String,
    },
    /// A produced result failed its own checks.
    Check(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Infeasible { .. } => 2,
            Failure::Check(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Input(msg) => write!(f, "input error: {msg}"),
            Failure::Infeasible { constraint, detail } => write!(f, "infeasible ({constraint}): {detail}"),
            Failure::Check(msg) => write!(f, "check failed: {msg}"),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let constraint = match &e {
            Error::EnergyBelowShannonFloor { .. } => "energy budget",
            Error::InfeasibleSession { .. } => "session length",
            Error::Infeasible(_) => "session deadline",
            _ => return Failure::Input(e.to_string()),
        };
        let detail = match e {
            Error::Infeasible(msg) => msg,
            other => other.to_string(),
        };
        Failure::Infeasible { constraint, detail }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicyRecord {
    pub t: Vec<f64>,
    pub d: Vec<f64>,
}

impl From<&UpdatePolicy> for PolicyRecord {
    fn from(p: &UpdatePolicy) -> Self {
        Self { t: p.times().to_vec(), d: p.delays().to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Residuals {
    /// `max_i |c_i + lambda f'(d_i)|`; absent for the controlled model.
    pub kkt: Option<f64>,
    /// `|sum f(d_i) - E|`.
    pub energy: f64,
    /// Largest branch-consistency slack; absent for the controlled model.
    pub consistency: Option<f64>,
    /// Smallest constraint slack of the policy.
    pub min_slack: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionRecord {
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    pub policy: PolicyRecord,
    pub age: f64,
    pub delay: f64,
    pub lambda: Option<f64>,
    pub pattern: Option<String>,
    pub cap_multipliers: Option<Vec<f64>>,
    pub energy_used: f64,
    pub residuals: Residuals,
}

/// Everything a run writes.
#[derive(Debug)]
pub struct Outcome {
    pub solution: Option<SolutionRecord>,
    pub trajectory: Option<AgeTrajectory>,
    pub sweep: Option<Sweep>,
    pub validate: Option<ValidateReport>,
    /// Set when artifacts were written but the run still failed.
    pub failure: Option<Failure>,
}

impl Outcome {
    fn solved(solution: SolutionRecord, trajectory: AgeTrajectory) -> Self {
        Self { solution: Some(solution), trajectory: Some(trajectory), sweep: None, validate: None, failure: None }
    }
}

pub fn run(problem: &Problem) -> Result<Outcome, Failure> {
    match problem.mode {
        Mode::Controlled => {
            let n = match problem.n {
                Some(n) => n,
                None => best_of_sweep(problem)?.best.ok_or_else(no_feasible_n)?,
            };
            controlled(problem, n)
        }
        Mode::Arrivals | Mode::Delay => pattern(problem),
        Mode::Sweep => {
            let sweep = best_of_sweep(problem)?;
            let mut outcome = match sweep.best {
                Some(n) => controlled(problem, n)?,
                None => Outcome {
                    solution: None,
                    trajectory: None,
                    sweep: None,
                    validate: None,
                    failure: Some(no_feasible_n()),
                },
            };
            outcome.sweep = Some(sweep);
            Ok(outcome)
        }
        Mode::Validate => {
            let report = run_validate(problem)?;
            let failure = (!report.passed).then(|| {
                Failure::Check(format!("{} of {} validation cases out of tolerance", report.failed, report.cases.len()))
            });
            Ok(Outcome { solution: None, trajectory: None, sweep: None, validate: Some(report), failure })
        }
    }
}

fn no_feasible_n() -> Failure {
    Failure::Infeasible { constraint: "session length", detail: "no number of updates up to N_max is feasible".into() }
}

fn best_of_sweep(problem: &Problem) -> Result<Sweep, Failure> {
    let n_max = problem.n_max.ok_or_else(|| Failure::Input("field `N_max`: missing".into()))?;
    Ok(sweep_n(problem.energy(), problem.session.duration(), &problem.delay_fn, n_max)?)
}

fn controlled(problem: &Problem, n: usize) -> Result<Outcome, Failure> {
    let horizon = problem.session.duration();
    let sol: ControlledSolution = equal_delay_policy(n, problem.energy(), horizon, &problem.delay_fn)?;
    let used = energy_used(problem, &sol.policy)?;
    let report = feasibility(problem, &sol.policy, None)?;
    let energy_residual = (used - problem.energy()).abs();
    if energy_residual > ENERGY_TOL {
        return Err(Failure::Check(format!("energy residual {energy_residual} exceeds {ENERGY_TOL}")));
    }
    // Updates are generated when sent, so each packet waits only its own service time.
    let delay = 0.5 * problem.delay_fn.bits() * sol.policy.delays().iter().sum::<f64>();
    let trajectory = age_trajectory(&sol.policy, &problem.session, sol.policy.times())?;
    let record = SolutionRecord {
        mode: problem.mode,
        n,
        policy: (&sol.policy).into(),
        age: sol.age,
        delay,
        lambda: None,
        pattern: None,
        cap_multipliers: None,
        energy_used: used,
        residuals: Residuals { kkt: None, energy: energy_residual, consistency: None, min_slack: min_slack(&report) },
    };
    Ok(Outcome::solved(record, trajectory))
}

fn pattern(problem: &Problem) -> Result<Outcome, Failure> {
    let schedule = problem.arrivals.as_ref().ok_or_else(|| Failure::Input("field `arrivals`: missing".into()))?;
    let solve = if problem.mode == Mode::Arrivals { solve_arrivals } else { solve_delay };
    let sol: PatternSolution = solve(schedule, problem.energy(), &problem.session, &problem.delay_fn)?;
    let policy = sol.policy();
    let audit = kkt_audit(&sol, &problem.delay_fn);
    if !audit.within(KKT_TOL, ENERGY_TOL, problem.session.tolerance()) || !audit.branch_mismatches.is_empty() {
        return Err(Failure::Check(format!("KKT audit out of tolerance: {audit:?}")));
    }
    let report = feasibility(problem, &policy, Some(schedule))?;
    let trajectory = age_trajectory(&policy, &problem.session, schedule.times())?;
    let record = SolutionRecord {
        mode: problem.mode,
        n: policy.len(),
        policy: (&policy).into(),
        age: sol.age,
        delay: sol.delay,
        lambda: Some(sol.lambda),
        pattern: Some(sol.pattern.to_string()),
        cap_multipliers: Some(sol.cap_multipliers.clone()),
        energy_used: energy_used(problem, &policy)?,
        residuals: Residuals {
            kkt: Some(audit.max_coefficient_residual),
            energy: audit.energy_residual,
            consistency: Some(audit.max_consistency_slack),
            min_slack: min_slack(&report),
        },
    };
    Ok(Outcome::solved(record, trajectory))
}

fn energy_used(problem: &Problem, policy: &UpdatePolicy) -> Result<f64, Failure> {
    let mut total = 0.0;
    for &d in policy.delays() {
        total += problem.delay_fn.energy(d)?;
    }
    Ok(total)
}

fn feasibility(
    problem: &Problem,
    policy: &UpdatePolicy,
    arrivals: Option<&aoi_core::ArrivalSchedule>,
) -> Result<FeasibilityReport, Failure> {
    let report = check_feasibility(policy, &problem.profile, &problem.session, &problem.delay_fn, arrivals)?;
    if let Some(v) = report.violations.first() {
        return Err(Failure::Check(format!("solution violates {v}")));
    }
    Ok(report)
}

fn min_slack(report: &FeasibilityReport) -> f64 {
    report
        .energy_slack
        .iter()
        .chain(&report.service_slack)
        .chain(report.data_slack.iter().flatten())
        .copied()
        .fold(f64::INFINITY, f64::min)
}
