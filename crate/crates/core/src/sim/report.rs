use serde::{Deserialize, Serialize};

use super::bound::BoundBreakdown;
use super::config::Deployment;
use super::cost::CostBreakdown;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub id: u32,
    pub name: String,
    pub release_s: f64,
    pub completion_s: Option<f64>,
    pub response_s: Option<f64>,
    pub tasks: usize,
    pub work: f64,
    /// Task placements, including re-executions.
    pub placements: u32,
    pub restarts: u32,
    pub aborted: bool,
}

/// One job-manager failure and how it was handled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryEntry {
    pub job: u32,
    pub dc: u16,
    pub role: String,
    pub failed_at_s: f64,
    pub detected_at_s: Option<f64>,
    pub elected: Option<u16>,
    pub replaced_at_s: Option<f64>,
    /// Failure to replacement (or restart) in seconds.
    pub interval_s: Option<f64>,
    pub aborted: bool,
}

/// A host that went down and the tasks its loss forced to run again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeFailure {
    pub node: u32,
    pub at_s: f64,
    pub reexecuted: Vec<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StealStats {
    pub requests: u32,
    pub nonempty_replies: u32,
    pub tasks_stolen: u32,
    pub stolen_placements: u32,
    pub mean_round_trip_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub makespan_s: f64,
    pub value_s: f64,
    pub holds: bool,
    pub breakdown: BoundBreakdown,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub deployment: Deployment,
    pub seed: u64,
    pub jobs_completed: usize,
    pub jobs_aborted: usize,
    pub jobs_unfinished: usize,
    /// Over completed jobs.
    pub makespan_s: f64,
    pub avg_response_s: f64,
    pub median_response_s: f64,
    pub jobs: Vec<JobReport>,
    pub machine_cost_usd: f64,
    pub transfer_cost_usd: f64,
    pub cross_dc_bytes: u64,
    pub cost: CostBreakdown,
    /// Present for Houtu runs only.
    pub bound: Option<BoundReport>,
    pub recovery: Vec<RecoveryEntry>,
    pub node_failures: Vec<NodeFailure>,
    pub steals: StealStats,
    pub placements: u32,
    pub reexecutions: u32,
    pub store_converged: bool,
    pub events: u64,
    pub end_time_s: f64,
}

impl MetricsReport {
    pub fn responses(&self) -> Vec<f64> {
        self.jobs.iter().filter_map(|j| j.response_s).collect()
    }
}

/// Median of `xs`; mean of the middle pair for even lengths, 0 when empty.
pub fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
