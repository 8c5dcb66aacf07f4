//! Failure schedules: explicit kills plus exponential terminations of Spot
//! hosts.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use super::config::{FailureSpec, KillTarget};
use crate::model::{Reliability, SimTime, Topology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub at: SimTime,
    pub target: KillTarget,
}

/// Expands `spec` into time-ordered failure events. Each Spot node draws one
/// exponential lifetime; it fails if that falls inside `horizon`. Reliable
/// nodes never fail on their own.
pub fn inject_failures<R: Rng + ?Sized>(spec: &FailureSpec, topology: &Topology, horizon: SimTime, rng: &mut R) -> Vec<FailureEvent> {
    let mut out: Vec<FailureEvent> =
        spec.kills.iter().map(|k| FailureEvent { at: SimTime::from_secs_f64(k.at_s), target: k.target.clone() }).collect();
    if spec.spot_rate_per_hour > 0.0 {
        let exp = Exp::new(spec.spot_rate_per_hour / 3600.0).expect("positive rate");
        for node in &topology.nodes {
            // draw for every node so adding a reliable host keeps the others' draws
            let life: f64 = exp.sample(rng);
            if node.reliability == Reliability::Spot && life < horizon.as_secs_f64() {
                out.push(FailureEvent { at: SimTime::from_secs_f64(life), target: KillTarget::Node { node: node.id.0 } });
            }
        }
    }
    out.sort_by_key(|e| e.at);
    out
}
