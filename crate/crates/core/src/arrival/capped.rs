//! Pattern solves with reception caps.
//!
//! An `Arrival` branch at update `i` holds only while the previous block is
//! received by `a_i`. When the plain KKT point breaks that, the optimum may
//! sit exactly on the kink `t_{i-1} + d_{i-1} = a_i`. Imposing
//! `sum_{m in block} d_m <= a_i - a_head` with multiplier `nu >= 0` shifts the
//! block's coefficients to `c_m + nu`. The kink is a genuine subgradient
//! point when `nu` does not exceed the marginal value of starting the next
//! block later. The session deadline is handled the same way, without that
//! upper limit; when late reception is allowed it caps the start of the last
//! update instead of its end.

use crate::bisect::bisect;
use crate::model::DelayFunction;
use crate::{Error, Result};

const MULTIPLIER_REL_TOL: f64 = 1e-15;
const MAX_BRACKET_STEPS: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(super) struct Block {
    pub head: usize,
    pub end: usize,
    /// Longest allowed `sum_{m=head}^{through} d_m` as `(through, length)`.
    pub cap: Option<(usize, f64)>,
}

impl Block {
    fn members(&self) -> std::ops::RangeInclusive<usize> {
        self.head..=self.end
    }

    fn size(&self) -> usize {
        self.end - self.head + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(super) struct CappedPoint {
    pub lambda: f64,
    pub delays: Vec<f64>,
    /// One multiplier per block, zero where the cap is slack.
    pub multipliers: Vec<f64>,
}

struct Solver<'a> {
    c: &'a [f64],
    blocks: &'a [Block],
    delay_fn: &'a DelayFunction,
}

impl Solver<'_> {
    /// Fills the block's delays and returns the capped length.
    fn delays_at(&self, block: &Block, lambda: f64, nu: f64, out: &mut [f64]) -> Result<f64> {
        let through = block.cap.map_or(block.end, |(through, _)| through);
        let mut total = 0.0;
        for m in block.members() {
            let extra = if m <= through { nu } else { 0.0 };
            let d = self.delay_fn.delay_for_slope(-(self.c[m] + extra) / lambda)?;
            out[m] = d;
            if m <= through {
                total += d;
            }
        }
        Ok(total)
    }

    /// Fills the block's delays for `lambda` and returns its multiplier.
    fn block(&self, block: &Block, lambda: f64, out: &mut [f64]) -> Result<f64> {
        let free = self.delays_at(block, lambda, 0.0, out)?;
        let Some((through, cap)) = block.cap else { return Ok(0.0) };
        if free <= cap {
            return Ok(0.0);
        }
        let mut hi = (block.head..=through).map(|m| self.c[m]).fold(0.0, f64::max);
        let mut steps = 0;
        while self.delays_at(block, lambda, hi, out)? > cap {
            hi *= 2.0;
            steps += 1;
            if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
                return Err(Error::Domain { what: "cap multiplier", value: hi });
            }
        }
        let mut failure = None;
        let nu =
            bisect(0.0, hi, MULTIPLIER_REL_TOL * hi, |nu| match self.delays_at(block, lambda, nu, &mut out.to_vec()) {
                Ok(total) => total > cap,
                Err(err) => {
                    failure.get_or_insert(err);
                    false
                }
            });
        if let Some(err) = failure {
            return Err(err);
        }
        self.delays_at(block, lambda, nu, out)?;
        Ok(nu)
    }

    fn point(&self, lambda: f64) -> Result<CappedPoint> {
        let mut delays = vec![0.0; self.c.len()];
        let multipliers = self.blocks.iter().map(|b| self.block(b, lambda, &mut delays)).collect::<Result<_>>()?;
        Ok(CappedPoint { lambda, delays, multipliers })
    }

    fn spent(&self, lambda: f64) -> Result<f64> {
        let p = self.point(lambda)?;
        Ok(p.delays.iter().map(|&d| self.delay_fn.energy_raw(d)).sum())
    }

    /// Energy needed as `lambda -> inf`: capped updates split their cap
    /// evenly, every other update sits at the Shannon floor.
    fn least_energy(&self) -> f64 {
        let floor = self.delay_fn.shannon_floor();
        self.blocks
            .iter()
            .map(|b| match b.cap {
                Some((through, cap)) => {
                    let k = (through - b.head + 1) as f64;
                    let free = (b.end - through) as f64 * floor;
                    if cap > 0.0 {
                        k * self.delay_fn.energy_raw(cap / k) + free
                    } else {
                        f64::INFINITY
                    }
                }
                None => b.size() as f64 * floor,
            })
            .sum()
    }
}

/// KKT point under the block caps, or `None` when `energy` cannot meet them.
pub(super) fn solve(c: &[f64], blocks: &[Block], energy: f64, delay_fn: &DelayFunction) -> Result<Option<CappedPoint>> {
    let s = Solver { c, blocks, delay_fn };
    if !(energy > s.least_energy()) {
        return Ok(None);
    }
    let (mut lo, mut hi) = (1.0, 1.0);
    let mut steps = 0;
    while s.spent(hi)? > energy {
        hi *= 2.0;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || !hi.is_finite() {
            return Ok(None);
        }
    }
    while s.spent(lo)? < energy {
        lo *= 0.5;
        steps += 1;
        if steps > MAX_BRACKET_STEPS || lo == 0.0 {
            return Err(Error::Domain { what: "multiplier bracket", value: lo });
        }
    }
    let mut failure = None;
    let lambda = bisect(lo, hi, MULTIPLIER_REL_TOL * hi, |lambda| match s.spent(lambda) {
        Ok(e) => e > energy,
        Err(err) => {
            failure.get_or_insert(err);
            false
        }
    });
    if let Some(err) = failure {
        return Err(err);
    }
    s.point(lambda).map(Some)
}
