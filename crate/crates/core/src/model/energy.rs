use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Harvested energy packets `(s_j, E_j)`; the first packet arrives at time 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyProfile {
    arrivals: Vec<(f64, f64)>,
}

impl EnergyProfile {
    pub fn new(arrivals: Vec<(f64, f64)>) -> Result<Self> {
        let Some(&(s1, _)) = arrivals.first() else {
            return Err(Error::invalid("energy profile needs at least one arrival"));
        };
        if s1 != 0.0 {
            return Err(Error::invalid(format!("energy[0]: first arrival must be at time 0, got {s1}")));
        }
        for (j, &(s, e)) in arrivals.iter().enumerate() {
            if !(s.is_finite() && e.is_finite() && e > 0.0) {
                return Err(Error::invalid(format!(
                    "energy[{j}]: need finite time and positive amount, got ({s}, {e})"
                )));
            }
            if j > 0 && s <= arrivals[j - 1].0 {
                return Err(Error::invalid(format!(
                    "energy[{j}]: arrival times must strictly increase ({} then {s})",
                    arrivals[j - 1].0
                )));
            }
        }
        Ok(Self { arrivals })
    }

    /// All energy available at the start of the session.
    pub fn single(energy: f64) -> Result<Self> {
        Self::new(vec![(0.0, energy)])
    }

    pub fn arrivals(&self) -> &[(f64, f64)] {
        &self.arrivals
    }

    pub fn is_single(&self) -> bool {
        self.arrivals.len() == 1
    }

    pub fn total(&self) -> f64 {
        self.arrivals.iter().map(|&(_, e)| e).sum()
    }

    /// Cumulative harvest `sum_{s_j <= t} E_j`.
    pub fn energy_at(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain { what: "time", value: t });
        }
        Ok(self.energy_at_raw(t))
    }

    pub(crate) fn energy_at_raw(&self, t: f64) -> f64 {
        self.arrivals.iter().take_while(|&&(s, _)| s <= t).map(|&(_, e)| e).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_function_examples() {
        let single = EnergyProfile::single(20.0).unwrap();
        assert_eq!(single.energy_at(5.0).unwrap(), 20.0);

        let two = EnergyProfile::new(vec![(0.0, 3.0), (4.0, 2.0)]).unwrap();
        assert_eq!(two.energy_at(4.0).unwrap(), 5.0);
        assert_eq!(two.energy_at(3.999).unwrap(), 3.0);
        assert_eq!(two.energy_at(0.0).unwrap(), 3.0);
        assert!(matches!(two.energy_at(-1.0), Err(Error::Domain { .. })));
        assert_eq!(two.total(), 5.0);
    }

    #[test]
    fn rejects_malformed_profiles() {
        assert!(EnergyProfile::new(vec![]).is_err());
        assert!(EnergyProfile::new(vec![(1.0, 3.0)]).is_err());
        assert!(EnergyProfile::new(vec![(0.0, 3.0), (0.0, 1.0)]).is_err());
        assert!(EnergyProfile::new(vec![(0.0, 0.0)]).is_err());
        assert!(EnergyProfile::new(vec![(0.0, 1.0), (2.0, -1.0)]).is_err());
    }
}
