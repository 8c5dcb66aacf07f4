use serde::{Deserialize, Serialize};

use super::time::{Share, SimTime};
use crate::error::{Error, Result};

/// Tunables shared by Af, Parades and the bound checker.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SchedulerParams {
    /// Utilization threshold δ.
    pub delta: f64,
    /// Desire adjustment factor ρ.
    pub rho: f64,
    /// Waiting-time factor τ.
    pub tau: f64,
    /// Minimum task resource requirement θ.
    pub theta: f64,
    /// Scheduling period length L.
    pub period: SimTime,
}

impl Default for SchedulerParams {
    fn default() -> Self {
        SchedulerParams {
            delta: 0.5,
            rho: 2.0,
            tau: 0.1,
            theta: 0.05,
            period: SimTime::from_secs(10),
        }
    }
}

impl SchedulerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Params(format!("delta {} not in (0,1)", self.delta)));
        }
        if !(self.rho > 1.0) || !self.rho.is_finite() {
            return Err(Error::Params(format!("rho {} must be > 1", self.rho)));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Params(format!("tau {} must be > 0", self.tau)));
        }
        if !(self.theta > 0.0 && self.theta <= 1.0) {
            return Err(Error::Params(format!("theta {} not in (0,1]", self.theta)));
        }
        if self.period == SimTime::ZERO {
            return Err(Error::Params("period length must be > 0".into()));
        }
        Ok(())
    }

    /// Largest admissible task requirement, `1 − δ`.
    pub fn max_task_share(&self) -> Share {
        Share(((1.0 - self.delta) * 1000.0 + 1e-9).floor() as u32)
    }

    /// Smallest admissible task requirement, `θ`.
    pub fn min_task_share(&self) -> Share {
        Share((self.theta * 1000.0 - 1e-9).ceil() as u32)
    }

    /// `n.free ≥ 1 − δ`, evaluated on the fixed-point share.
    pub fn mostly_free(&self, free: Share) -> bool {
        free.as_fraction() + 1e-9 >= 1.0 - self.delta
    }

    /// Rack-local waiting threshold `τ·p`.
    pub fn rack_threshold(&self, p: SimTime) -> SimTime {
        p.scale_ceil(self.tau)
    }

    /// Any-locality waiting threshold `2τ·p`.
    pub fn remote_threshold(&self, p: SimTime) -> SimTime {
        p.scale_ceil(2.0 * self.tau)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let p = SchedulerParams::default();
        p.validate().unwrap();
        assert_eq!(p.max_task_share(), Share(500));
        assert_eq!(p.min_task_share(), Share(50));
        assert_eq!(p.rack_threshold(SimTime::from_secs(10)), SimTime::from_secs(1));
        assert_eq!(p.remote_threshold(SimTime::from_secs(10)), SimTime::from_secs(2));
    }

    #[test]
    fn rejects_bad_rho() {
        let p = SchedulerParams { rho: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
        let p = SchedulerParams { delta: 1.0, ..Default::default() };
        assert!(p.validate().is_err());
    }
}
