//! Problem instances as read from and written to disk.

use std::fmt;

use aoi_core::model::DEFAULT_BISECTION_TOL;
use aoi_core::model::DEFAULT_FEASIBILITY_TOL;
use aoi_core::oracle::GridSpec;
use aoi_core::{ArrivalSchedule, DelayFunction, EnergyProfile, SessionConfig};
use serde::{Deserialize, Serialize};

/// Largest N the grid oracle is run at.
pub const MAX_VALIDATE_N: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Controlled,
    Arrivals,
    Delay,
    Sweep,
    Validate,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Controlled => "controlled",
            Mode::Arrivals => "arrivals",
            Mode::Delay => "delay",
            Mode::Sweep => "sweep",
            Mode::Validate => "validate",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Absolute slack allowed by constraint checks.
    #[serde(default = "default_feasibility")]
    pub feasibility: f64,
    /// Bisection tolerance of the delay-function inverses.
    #[serde(default = "default_bisection")]
    pub bisection: f64,
}

fn default_feasibility() -> f64 {
    DEFAULT_FEASIBILITY_TOL
}

fn default_bisection() -> f64 {
    DEFAULT_BISECTION_TOL
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { feasibility: default_feasibility(), bisection: default_bisection() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidateSettings {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_grid_delta")]
    pub grid_delta: f64,
    #[serde(default = "default_node_budget")]
    pub node_budget: u64,
}

fn default_trials() -> usize {
    10
}

fn default_grid_delta() -> f64 {
    GridSpec::default().delta
}

fn default_node_budget() -> u64 {
    GridSpec::default().node_budget
}

impl Default for ValidateSettings {
    fn default() -> Self {
        Self { seed: 0, trials: default_trials(), grid_delta: default_grid_delta(), node_budget: default_node_budget() }
    }
}

/// Instance file layout. Every optional field is filled in by [`Instance::normalize`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Instance {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<Mode>,
    #[serde(rename = "T")]
    pub horizon: f64,
    #[serde(rename = "B")]
    pub bits: f64,
    /// Energy packets as `[s, E]` pairs.
    pub energy: Vec<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<Vec<f64>>,
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(rename = "N_max", default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub late_reception: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validate: Option<ValidateSettings>,
}

/// Command-line overrides of instance settings.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub grid_delta: Option<f64>,
    pub node_budget: Option<u64>,
    pub allow_late_reception: bool,
}

/// Rejected input with the offending field.
#[derive(Debug, Clone, PartialEq)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn field(name: &str, msg: impl fmt::Display) -> InputError {
    InputError(format!("field `{name}`: {msg}"))
}

/// Validated model objects for one run.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mode: Mode,
    pub profile: EnergyProfile,
    pub session: SessionConfig,
    pub delay_fn: DelayFunction,
    pub arrivals: Option<ArrivalSchedule>,
    pub n: Option<usize>,
    pub n_max: Option<usize>,
    pub validate: ValidateSettings,
}

impl Problem {
    /// Energy of the single packet at time zero.
    pub fn energy(&self) -> f64 {
        self.profile.total()
    }
}

impl Instance {
    pub fn parse(text: &str, source: &str) -> Result<Self, InputError> {
        serde_json::from_str(text).map_err(|e| InputError(format!("{source}: {e}")))
    }

    /// Resolves the mode, applies overrides and fills in defaults so that
    /// the written instance reproduces the run without any flags.
    pub fn normalize(mut self, requested: Option<Mode>, overrides: &Overrides) -> Result<Self, InputError> {
        let mode = match (requested, self.mode) {
            (Some(r), Some(m)) if r != m => {
                return Err(field("mode", format!("instance is for `{m}` but `{r}` was requested")))
            }
            (Some(m), _) | (None, Some(m)) => m,
            (None, None) => return Err(field("mode", "missing; name it in the instance or use a mode subcommand")),
        };
        self.mode = Some(mode);
        let mut tolerances = self.tolerances.take().unwrap_or_default();
        if let Some(tol) = overrides.tol {
            tolerances.feasibility = tol;
        }
        self.tolerances = Some(tolerances);
        if overrides.allow_late_reception {
            self.late_reception = Some(true);
        }
        match mode {
            Mode::Arrivals | Mode::Delay | Mode::Validate => {
                self.late_reception.get_or_insert(false);
            }
            Mode::Controlled | Mode::Sweep => {
                if self.late_reception == Some(true) {
                    return Err(field("late_reception", format!("not supported in `{mode}` mode")));
                }
                self.late_reception = None;
            }
        }
        if mode == Mode::Validate {
            let mut v = self.validate.take().unwrap_or_default();
            if let Some(delta) = overrides.grid_delta {
                v.grid_delta = delta;
            }
            if let Some(budget) = overrides.node_budget {
                v.node_budget = budget;
            }
            self.validate = Some(v);
        } else if self.validate.is_some() {
            return Err(field("validate", format!("only allowed in `validate` mode, not `{mode}`")));
        }
        Ok(self)
    }

    /// Builds the model objects, enforcing what each mode needs.
    /// Expects a normalized instance.
    pub fn problem(&self) -> Result<Problem, InputError> {
        let mode = self.mode.ok_or_else(|| field("mode", "missing"))?;
        let tol = self.tolerances.clone().unwrap_or_default();
        DelayFunction::new(self.bits).map_err(|e| field("B", e))?;
        let delay_fn =
            DelayFunction::with_tolerance(self.bits, tol.bisection).map_err(|e| field("tolerances.bisection", e))?;
        let session = SessionConfig::new(self.horizon)
            .map_err(|e| field("T", e))?
            .with_tolerance(tol.feasibility)
            .map_err(|e| field("tolerances.feasibility", e))?
            .with_late_reception(self.late_reception.unwrap_or(false));
        let profile = EnergyProfile::new(self.energy.clone()).map_err(|e| field("energy", e))?;
        if mode != Mode::Validate && !profile.is_single() {
            return Err(field(
                "energy",
                format!("`{mode}` mode needs a single energy arrival at time 0, got {}", profile.arrivals().len()),
            ));
        }
        let arrivals = match (&self.arrivals, mode) {
            (Some(a), Mode::Arrivals | Mode::Delay) => {
                let s = ArrivalSchedule::new(a.clone()).map_err(|e| field("arrivals", e))?;
                s.check_within(&session).map_err(|e| field("arrivals", e))?;
                Some(s)
            }
            (None, Mode::Arrivals | Mode::Delay) => {
                return Err(field("arrivals", format!("required in `{mode}` mode")))
            }
            (Some(_), _) => return Err(field("arrivals", format!("not used in `{mode}` mode"))),
            (None, _) => None,
        };
        let positive = |name: &str, v: Option<usize>| match v {
            Some(0) => Err(field(name, "must be at least 1")),
            _ => Ok(v),
        };
        let n = positive("N", self.n)?;
        let n_max = positive("N_max", self.n_max)?;
        match mode {
            Mode::Controlled if n.is_none() && n_max.is_none() => {
                return Err(field("N", "`controlled` mode needs N, or N_max to pick the best N"));
            }
            Mode::Sweep if n_max.is_none() => return Err(field("N_max", "required in `sweep` mode")),
            Mode::Sweep if n.is_some() => return Err(field("N", "not used in `sweep` mode; set N_max")),
            Mode::Arrivals | Mode::Delay if n.is_some() || n_max.is_some() => {
                let name = if n.is_some() { "N" } else { "N_max" };
                return Err(field(name, "the number of updates is the number of arrivals"));
            }
            Mode::Validate => {
                let limit = n.or(n_max).ok_or_else(|| field("N", "`validate` mode needs N or N_max"))?;
                if limit > MAX_VALIDATE_N {
                    let name = if n.is_some() { "N" } else { "N_max" };
                    return Err(field(name, format!("the grid oracle runs only up to {MAX_VALIDATE_N} updates")));
                }
            }
            _ => {}
        }
        let validate = self.validate.clone().unwrap_or_default();
        GridSpec::new(validate.grid_delta, validate.node_budget).map_err(|e| field("validate.grid_delta", e))?;
        if mode == Mode::Validate && validate.trials == 0 {
            return Err(field("validate.trials", "must be at least 1"));
        }
        Ok(Problem { mode, profile, session, delay_fn, arrivals, n, n_max, validate })
    }
}
