use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::bisect::bisect;
use crate::{Error, Result};

/// Default absolute tolerance on the arguments recovered by bisection.
pub const DEFAULT_BISECTION_TOL: f64 = 1e-13;

const FLOOR_REL_MARGIN: f64 = 1e-12;

/// Bracket expansions allowed before giving up. Doubling from any finite
/// start overflows well before this.
const MAX_BRACKET_STEPS: usize = 4096;

/// Energy needed to deliver a `bits`-sized packet over a unit-bandwidth,
/// unit-noise AWGN link within a service time `d`:
///
/// ```text
/// f(d) = d (2^(2B/d) - 1)
/// ```
///
/// `f` is strictly decreasing and convex on `d > 0`, blows up as `d -> 0+`
/// and tends to the Shannon floor `2 B ln 2` as `d -> inf`. The inverse
/// `f^-1`, the slope inverse `g = (f')^-1` and the composite `h = f . g` have
/// no closed forms and are computed by bracketed bisection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayFunction {
    bits: f64,
    tol: f64,
}

impl DelayFunction {
    pub fn new(bits: f64) -> Result<Self> {
        Self::with_tolerance(bits, DEFAULT_BISECTION_TOL)
    }

    pub fn with_tolerance(bits: f64, tol: f64) -> Result<Self> {
        if !(bits.is_finite() && bits > 0.0) {
            return Err(Error::invalid(format!("packet size B must be positive, got {bits}")));
        }
        if !(tol.is_finite() && tol >= 0.0) {
            return Err(Error::invalid(format!("bisection tolerance must be non-negative, got {tol}")));
        }
        Ok(Self { bits, tol })
    }

    pub fn bits(&self) -> f64 {
        self.bits
    }

    pub fn tolerance(&self) -> f64 {
        self.tol
    }

    /// `2 B ln 2`, the infimum of `f` over finite delays.
    pub fn shannon_floor(&self) -> f64 {
        2.0 * self.bits * LN_2
    }

    /// Whether `energy` fails to beat the Shannon floor of `count` updates.
    /// Energies within a relative `1e-12` of the floor count as on it, since
    /// the service time there is beyond any meaningful precision.
    pub fn at_or_below_floor(&self, energy: f64, count: usize) -> bool {
        !(energy > count as f64 * self.shannon_floor() * (1.0 + FLOOR_REL_MARGIN))
    }

    /// `u = 2 B ln 2 / d`, so that `2^(2B/d) = e^u`.
    #[inline]
    fn exponent(&self, d: f64) -> f64 {
        self.shannon_floor() / d
    }

    #[inline]
    pub(crate) fn energy_raw(&self, d: f64) -> f64 {
        d * self.exponent(d).exp_m1()
    }

    #[inline]
    pub(crate) fn slope_raw(&self, d: f64) -> f64 {
        let u = self.exponent(d);
        if u < 0.5 {
            // e^u - 1 - u e^u = -sum_{k>=2} (k-1) u^k / k!, which avoids the
            // cancellation of the direct form for large d.
            let mut term = u;
            let mut sum = 0.0;
            for k in 2..40 {
                term *= u / k as f64;
                let next = (k - 1) as f64 * term;
                sum += next;
                if next < sum * 1e-18 {
                    break;
                }
            }
            -sum
        } else {
            -((u - 1.0) * u.exp() + 1.0)
        }
    }

    /// `f(d)`: energy spent to achieve service time `d`.
    pub fn energy(&self, d: f64) -> Result<f64> {
        check_delay(d)?;
        Ok(self.energy_raw(d))
    }

    /// `f'(d)`, always negative.
    pub fn slope(&self, d: f64) -> Result<f64> {
        check_delay(d)?;
        Ok(self.slope_raw(d))
    }

    /// `f^-1(e)`: the unique service time that consumes exactly `e`.
    pub fn delay_for_energy(&self, e: f64) -> Result<f64> {
        if e.is_nan() || e == f64::INFINITY {
            return Err(Error::Domain { what: "energy", value: e });
        }
        if self.at_or_below_floor(e, 1) {
            return Err(Error::EnergyBelowShannonFloor { energy: e, floor: self.shannon_floor() });
        }
        let (lo, hi) = self.bracket(|d| self.energy_raw(d) > e)?;
        Ok(bisect(lo, hi, self.tol, |d| self.energy_raw(d) > e))
    }

    /// `g(s) = (f')^-1(s)`: the service time at which the slope of `f` is `s`.
    pub fn delay_for_slope(&self, s: f64) -> Result<f64> {
        if !(s.is_finite() && s < 0.0) {
            return Err(Error::Domain { what: "slope", value: s });
        }
        let (lo, hi) = self.bracket(|d| self.slope_raw(d) < s)?;
        Ok(bisect(lo, hi, self.tol, |d| self.slope_raw(d) < s))
    }

    /// `h(s) = f(g(s))`.
    pub fn energy_for_slope(&self, s: f64) -> Result<f64> {
        Ok(self.energy_raw(self.delay_for_slope(s)?))
    }

    /// Grows a bracket outward from `d = B` until `go_right` is true at the
    /// low end and false at the high end.
    fn bracket<F: Fn(f64) -> bool>(&self, go_right: F) -> Result<(f64, f64)> {
        let mut lo = self.bits;
        let mut hi = self.bits;
        let mut steps = 0;
        while go_right(hi) {
            hi *= 2.0;
            steps += 1;
            if !hi.is_finite() || steps > MAX_BRACKET_STEPS {
                return Err(Error::Domain { what: "bracket upper end", value: hi });
            }
        }
        while !go_right(lo) {
            lo *= 0.5;
            steps += 1;
            if lo == 0.0 || steps > MAX_BRACKET_STEPS {
                return Err(Error::Domain { what: "bracket lower end", value: lo });
            }
        }
        Ok((lo, hi))
    }
}

fn check_delay(d: f64) -> Result<()> {
    if d.is_finite() && d > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain { what: "service time", value: d })
    }
}
