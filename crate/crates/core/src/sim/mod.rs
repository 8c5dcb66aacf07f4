//! Simulation of whole deployments: workload, failures, network and cost
//! models around the scheduling core.

pub mod bound;
pub mod config;
pub mod cost;
pub mod engine;
pub mod failure;
pub mod network;
pub mod report;
pub mod rng;
pub mod trace;
pub mod workload;

pub use config::{Deployment, ScenarioConfig};
pub use engine::{run, run_baseline, RunOutput};
pub use report::MetricsReport;
