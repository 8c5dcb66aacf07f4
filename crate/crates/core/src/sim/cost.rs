//! Machine and cross-data-center transfer cost accounting.
//!
//! Machine cost is summed exactly in integer micro-dollar·milliseconds per
//! hour and converted to dollars once, so price ratios carry over to cost
//! ratios without rounding.

use serde::{Deserialize, Serialize};

use crate::model::SimTime;

const MS_PER_HOUR: f64 = 3_600_000.0;
const MICRO: f64 = 1e6;
const BYTES_PER_GB: f64 = 1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceClass {
    OnDemand,
    Reserved,
    Spot,
}

/// Hourly instance prices and the per-GB cross-region transfer price.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriceTable {
    pub on_demand_per_hour: f64,
    pub reserved_per_hour: f64,
    pub spot_per_hour: f64,
    pub transfer_per_gb: f64,
}

impl Default for PriceTable {
    /// Only the ratios are meaningful: spot is 10× below on-demand and 3×
    /// below reserved; cross-region transfer costs 0.13 $/GB.
    fn default() -> Self {
        PriceTable { on_demand_per_hour: 1.0, reserved_per_hour: 0.3, spot_per_hour: 0.1, transfer_per_gb: 0.13 }
    }
}

impl PriceTable {
    /// Price in micro-dollars per hour.
    pub fn micros_per_hour(&self, class: PriceClass) -> u64 {
        let p = match class {
            PriceClass::OnDemand => self.on_demand_per_hour,
            PriceClass::Reserved => self.reserved_per_hour,
            PriceClass::Spot => self.spot_per_hour,
        };
        (p.max(0.0) * MICRO).round() as u64
    }
}

/// How long one host was billed and at which class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostUsage {
    pub host: String,
    pub class: PriceClass,
    pub uptime: SimTime,
}

/// The billing-relevant part of a run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageTrace {
    pub hosts: Vec<HostUsage>,
    pub cross_dc_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CostBreakdown {
    /// Exact machine cost in micro-dollar·ms/hour.
    pub machine_units: u128,
    pub machine_usd: f64,
    pub transfer_usd: f64,
    pub cross_dc_bytes: u64,
    pub per_host_units: Vec<u128>,
}

impl CostBreakdown {
    pub fn total_usd(&self) -> f64 {
        self.machine_usd + self.transfer_usd
    }
}

pub fn compute_cost(trace: &UsageTrace, prices: &PriceTable) -> CostBreakdown {
    let per_host_units: Vec<u128> = trace
        .hosts
        .iter()
        .map(|h| h.uptime.as_millis() as u128 * prices.micros_per_hour(h.class) as u128)
        .collect();
    let machine_units: u128 = per_host_units.iter().sum();
    CostBreakdown {
        machine_units,
        machine_usd: machine_units as f64 / MS_PER_HOUR / MICRO,
        transfer_usd: trace.cross_dc_bytes as f64 / BYTES_PER_GB * prices.transfer_per_gb,
        cross_dc_bytes: trace.cross_dc_bytes,
        per_host_units,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn usage(class: PriceClass, bytes: u64) -> UsageTrace {
        UsageTrace {
            hosts: (0..5).map(|i| HostUsage { host: format!("h{i}"), class, uptime: SimTime::from_secs(600 + i * 37) }).collect(),
            cross_dc_bytes: bytes,
        }
    }

    #[test]
    fn no_transfer_no_transfer_cost() {
        let c = compute_cost(&usage(PriceClass::Spot, 0), &PriceTable::default());
        assert_eq!(c.transfer_usd, 0.0);
    }

    #[test]
    fn ten_gigabytes() {
        let c = compute_cost(&usage(PriceClass::Spot, 10_000_000_000), &PriceTable::default());
        assert!((c.transfer_usd - 1.30).abs() < 1e-12);
    }

    #[test]
    fn spot_is_a_tenth_of_on_demand() {
        let p = PriceTable::default();
        let od = compute_cost(&usage(PriceClass::OnDemand, 0), &p);
        let spot = compute_cost(&usage(PriceClass::Spot, 0), &p);
        assert_eq!(od.machine_units, 10 * spot.machine_units);
        assert_eq!(od.per_host_units.iter().sum::<u128>(), od.machine_units);
    }

    #[test]
    fn one_hour_on_demand_is_one_dollar() {
        let t = UsageTrace {
            hosts: vec![HostUsage { host: "m".into(), class: PriceClass::OnDemand, uptime: SimTime::from_secs(3600) }],
            cross_dc_bytes: 0,
        };
        assert!((compute_cost(&t, &PriceTable::default()).machine_usd - 1.0).abs() < 1e-12);
    }
}
