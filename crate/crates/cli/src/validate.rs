//! Seeded comparison of the analytic solvers against the grid oracle.

use aoi_core::arrival::solve_arrivals;
use aoi_core::controlled::waterfill;
use aoi_core::delay::solve_delay;
use aoi_core::oracle::{grid_arrivals, grid_controlled_with, kkt_audit, DelaySearch, GridSpec};
use aoi_core::{check_feasibility, ArrivalSchedule, Error, UpdatePolicy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::instance::Problem;
use crate::solve::{Failure, ENERGY_TOL, KKT_TOL};

/// Allowed excess of the grid optimum over the solver, in grid steps.
pub const GAP_STEPS: f64 = 10.0;
/// Allowed excess of the solver over the grid optimum.
pub const SOLVER_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseKind {
    /// Water-filled intervals for given service times.
    Controlled,
    Age,
    Delay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    /// Both found a policy and the gap is within bounds.
    Ok,
    BothInfeasible,
    /// The solver found a policy the grid is too coarse to represent.
    GridMissed,
    /// No solver applies; the oracle policy was checked for feasibility.
    OracleOnly,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Case {
    pub trial: usize,
    pub kind: CaseKind,
    #[serde(rename = "N")]
    pub n: usize,
    pub energy: f64,
    /// Measurement arrivals, or the fixed service times of a controlled case.
    pub inputs: Vec<f64>,
    pub solver: Option<f64>,
    pub oracle: Option<f64>,
    /// `oracle - solver`.
    pub gap: Option<f64>,
    pub nodes: u64,
    pub status: CaseStatus,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidateReport {
    pub seed: u64,
    pub trials: usize,
    pub grid_delta: f64,
    pub node_budget: u64,
    pub gap_limit: f64,
    pub cases: Vec<Case>,
    pub max_gap: Option<f64>,
    pub failed: usize,
    pub passed: bool,
}

pub fn run_validate(problem: &Problem) -> Result<ValidateReport, Failure> {
    let v = &problem.validate;
    let grid = GridSpec::new(v.grid_delta, v.node_budget).map_err(|e| Failure::Input(e.to_string()))?;
    let gap_limit = GAP_STEPS * grid.delta;
    let mut rng = ChaCha8Rng::seed_from_u64(v.seed);
    let mut cases = Vec::new();
    for trial in 0..v.trials {
        let n = match problem.n {
            Some(n) => n,
            None => rng.gen_range(1..=problem.n_max.unwrap_or(1)),
        };
        if problem.profile.is_single() {
            cases.push(controlled_case(problem, &grid, gap_limit, trial, n, &mut rng)?);
            cases.extend(arrival_cases(problem, &grid, gap_limit, trial, n, &mut rng)?);
        } else {
            cases.push(profile_case(problem, &grid, trial, n)?);
        }
    }
    let max_gap = cases.iter().filter_map(|c| c.gap).reduce(f64::max);
    let failed = cases.iter().filter(|c| c.status == CaseStatus::Failed).count();
    Ok(ValidateReport {
        seed: v.seed,
        trials: v.trials,
        grid_delta: grid.delta,
        node_budget: grid.node_budget,
        gap_limit,
        cases,
        max_gap,
        failed,
        passed: failed == 0,
    })
}

fn compare(solver: Option<f64>, oracle: Option<f64>, gap_limit: f64) -> (Option<f64>, CaseStatus) {
    match (solver, oracle) {
        (Some(s), Some(o)) => {
            let gap = o - s;
            let ok = gap >= -SOLVER_SLACK && gap <= gap_limit;
            (Some(gap), if ok { CaseStatus::Ok } else { CaseStatus::Failed })
        }
        (Some(_), None) => (None, CaseStatus::GridMissed),
        (None, None) => (None, CaseStatus::BothInfeasible),
        (None, Some(_)) => (None, CaseStatus::Failed),
    }
}

fn budget_note(e: Error) -> Result<String, Failure> {
    match e {
        Error::OracleBudgetExceeded { .. } => Ok(e.to_string()),
        other => Err(other.into()),
    }
}

/// Splits the energy at random above the per-update floor and compares the
/// water-filled intervals with a grid over transmission times.
fn controlled_case(
    problem: &Problem,
    grid: &GridSpec,
    gap_limit: f64,
    trial: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Case, Failure> {
    let df = &problem.delay_fn;
    let energy = problem.energy();
    let horizon = problem.session.duration();
    let mut case = Case {
        trial,
        kind: CaseKind::Controlled,
        n,
        energy,
        inputs: Vec::new(),
        solver: None,
        oracle: None,
        gap: None,
        nodes: 0,
        status: CaseStatus::BothInfeasible,
        note: None,
    };
    if df.at_or_below_floor(energy, n) {
        case.note = Some(Error::EnergyBelowShannonFloor { energy, floor: n as f64 * df.shannon_floor() }.to_string());
        return Ok(case);
    }
    let share: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    let spare = energy - n as f64 * df.shannon_floor();
    let total: f64 = share.iter().sum();
    let d = share
        .iter()
        .map(|s| df.delay_for_energy(df.shannon_floor() + spare * s / total))
        .collect::<Result<Vec<_>, _>>()?;
    case.inputs = d.clone();
    let solver = match waterfill(&d, horizon) {
        Ok(w) => Some(w.objective(&d) / 2.0),
        Err(Error::InfeasibleSession { .. }) => None,
        Err(e) => return Err(e.into()),
    };
    let oracle = match grid_controlled_with(n, &problem.profile, horizon, df, grid, &DelaySearch::Fixed(d.clone())) {
        Ok(best) => {
            case.nodes = best.as_ref().map_or(0, |b| b.nodes);
            best.map(|b| b.age)
        }
        Err(e) => {
            case.note = Some(budget_note(e)?);
            case.status = CaseStatus::Failed;
            return Ok(case);
        }
    };
    case.solver = solver;
    case.oracle = oracle;
    (case.gap, case.status) = compare(solver, oracle, gap_limit);
    Ok(case)
}

fn arrival_cases(
    problem: &Problem,
    grid: &GridSpec,
    gap_limit: f64,
    trial: usize,
    n: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Case>, Failure> {
    let df = &problem.delay_fn;
    let energy = problem.energy();
    let horizon = problem.session.duration();
    let schedule = loop {
        let mut a: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..0.7) * horizon).collect();
        a.sort_by(f64::total_cmp);
        if let Ok(s) = ArrivalSchedule::new(a) {
            break s;
        }
    };
    let base = Case {
        trial,
        kind: CaseKind::Age,
        n,
        energy,
        inputs: schedule.times().to_vec(),
        solver: None,
        oracle: None,
        gap: None,
        nodes: 0,
        status: CaseStatus::BothInfeasible,
        note: None,
    };
    let oracle = match grid_arrivals(&schedule, energy, &problem.session, df, grid) {
        Ok(r) => r,
        Err(e) => {
            let note = Some(budget_note(e)?);
            let failed = |kind| Case { kind, status: CaseStatus::Failed, note: note.clone(), ..base.clone() };
            return Ok(vec![failed(CaseKind::Age), failed(CaseKind::Delay)]);
        }
    };
    let mut cases = Vec::with_capacity(2);
    for kind in [CaseKind::Age, CaseKind::Delay] {
        let (solved, best) = match kind {
            CaseKind::Age => (solve_arrivals(&schedule, energy, &problem.session, df), &oracle.age),
            _ => (solve_delay(&schedule, energy, &problem.session, df), &oracle.delay),
        };
        let mut case = Case { kind, nodes: oracle.nodes, oracle: best.as_ref().map(|b| b.value), ..base.clone() };
        match solved {
            Ok(sol) => {
                case.solver = Some(if kind == CaseKind::Age { sol.age } else { sol.delay });
                let audit = kkt_audit(&sol, df);
                if !audit.within(KKT_TOL, ENERGY_TOL, problem.session.tolerance()) {
                    case.note = Some(format!(
                        "KKT residual {} energy residual {}",
                        audit.max_coefficient_residual, audit.energy_residual
                    ));
                    case.status = CaseStatus::Failed;
                    cases.push(case);
                    continue;
                }
            }
            Err(e @ (Error::Infeasible(_) | Error::EnergyBelowShannonFloor { .. })) => case.note = Some(e.to_string()),
            Err(e) => return Err(e.into()),
        }
        (case.gap, case.status) = compare(case.solver, case.oracle, gap_limit);
        cases.push(case);
    }
    Ok(cases)
}

/// With several energy arrivals no solver applies; the equal-delay grid
/// optimum is reported and checked against the harvest.
fn profile_case(problem: &Problem, grid: &GridSpec, trial: usize, n: usize) -> Result<Case, Failure> {
    let df = &problem.delay_fn;
    let horizon = problem.session.duration();
    let mut case = Case {
        trial,
        kind: CaseKind::Controlled,
        n,
        energy: problem.profile.total(),
        inputs: Vec::new(),
        solver: None,
        oracle: None,
        gap: None,
        nodes: 0,
        status: CaseStatus::OracleOnly,
        note: None,
    };
    match grid_controlled_with(n, &problem.profile, horizon, df, grid, &DelaySearch::Equal) {
        Ok(Some(best)) => {
            case.oracle = Some(best.age);
            case.nodes = best.nodes;
            case.inputs = best.policy.delays().to_vec();
            if let Some(v) = first_violation(problem, &best.policy)? {
                case.note = Some(v);
                case.status = CaseStatus::Failed;
            }
        }
        Ok(None) => case.note = Some("no grid policy is feasible".into()),
        Err(e) => {
            case.note = Some(budget_note(e)?);
            case.status = CaseStatus::Failed;
        }
    }
    Ok(case)
}

fn first_violation(problem: &Problem, policy: &UpdatePolicy) -> Result<Option<String>, Failure> {
    let session = problem.session.with_late_reception(false);
    let report = check_feasibility(policy, &problem.profile, &session, &problem.delay_fn, None)?;
    Ok(report.violations.first().map(ToString::to_string))
}
