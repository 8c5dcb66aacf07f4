//! Makespan upper bound for Af + Parades under per-data-center fair
//! scheduling.
//!
//! Per data center `i` with `|P_i|` containers:
//! `c_i = (2/(1−δ) + (1+ρ)/δ + 2τ/θ) / |P_i|` and `d_i = L·log_ρ|P_i| + 2L`.
//! The bound is `c_max·T1(J) + Σ d_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{job_work, DagJob, SchedulerParams, Topology};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundBreakdown {
    pub work: f64,
    pub c: Vec<f64>,
    pub c_max: f64,
    pub d: Vec<f64>,
    /// Upper bound on makespan, in seconds.
    pub value: f64,
}

/// `2/(1−δ) + (1+ρ)/δ + 2τ/θ`.
pub fn competitive_constant(params: &SchedulerParams) -> f64 {
    2.0 / (1.0 - params.delta) + (1.0 + params.rho) / params.delta + 2.0 * params.tau / params.theta
}

pub fn makespan_bound(params: &SchedulerParams, topology: &Topology, jobs: &[DagJob]) -> Result<BoundBreakdown> {
    for job in jobs {
        for t in job.tasks() {
            if t.r < params.min_task_share() {
                return Err(Error::BoundPrecondition { task: t.id, reason: format!("r={} below theta", t.r) });
            }
            if t.r > params.max_task_share() {
                return Err(Error::BoundPrecondition { task: t.id, reason: format!("r={} above 1-delta", t.r) });
            }
        }
    }
    let k = competitive_constant(params);
    let period = params.period.as_secs_f64();
    let mut c = Vec::new();
    let mut d = Vec::new();
    for dc in &topology.datacenters {
        let p = dc.containers.len().max(1) as f64;
        c.push(k / p);
        d.push(period * p.ln() / params.rho.ln() + 2.0 * period);
    }
    let c_max = c.iter().copied().fold(0.0, f64::max);
    let work: f64 = jobs.iter().map(job_work).sum();
    let value = c_max * work + d.iter().sum::<f64>();
    Ok(BoundBreakdown { work, c, c_max, d, value })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InputPlacement, JobId, JobSpec, StageInputSpec, StageSpec};

    fn fig6(topo: &Topology) -> DagJob {
        let st = |count, r, p, preds: Vec<u32>| StageSpec {
            count,
            r,
            p_s: p,
            input: preds.is_empty().then_some(StageInputSpec { bytes_per_task: 0, placement: InputPlacement::Even }),
            predecessors: preds,
            output_bytes: 0,
        };
        JobSpec { name: "f".into(), release_s: 0.0, stages: vec![st(3, 0.5, 4.0, vec![]), st(2, 0.5, 6.0, vec![0]), st(1, 0.5, 4.0, vec![1])] }
            .instantiate(JobId(0), topo)
            .unwrap()
    }

    #[test]
    fn hand_computed_single_dc() {
        // c = 2/0.5 + 3/0.5 + 0.2/0.05 = 14; |P| = 4, L = 10, T1 = 14
        // bound = 14·14/4 + 10·log2(4) + 20 = 49 + 40 = 89
        let topo = Topology::uniform(1, 1, 4, 1);
        let params = SchedulerParams::default();
        assert!((competitive_constant(&params) - 14.0).abs() < 1e-12);
        let job = fig6(&topo);
        assert!((job_work(&job) - 14.0).abs() < 1e-12);
        let b = makespan_bound(&params, &topo, &[job]).unwrap();
        assert!((b.value - 89.0).abs() < 1e-9, "{}", b.value);
    }

    #[test]
    fn empty_workload_is_sum_of_d() {
        let topo = Topology::uniform(3, 1, 2, 1);
        let b = makespan_bound(&SchedulerParams::default(), &topo, &[]).unwrap();
        assert_eq!(b.work, 0.0);
        assert!((b.value - 3.0 * 30.0).abs() < 1e-9);
    }

    #[test]
    fn smallest_dc_sets_c_max() {
        let spec = crate::model::TopologySpec {
            datacenters: vec![
                crate::model::DataCenterSpec {
                    name: "a".into(),
                    lan: None,
                    masters: 1,
                    racks: vec![crate::model::RackSpec { nodes: vec![crate::model::NodeSpec { containers: 8, reliability: Default::default() }] }],
                },
                crate::model::DataCenterSpec {
                    name: "b".into(),
                    lan: None,
                    masters: 1,
                    racks: vec![crate::model::RackSpec { nodes: vec![crate::model::NodeSpec { containers: 2, reliability: Default::default() }] }],
                },
            ],
            wan_default: None,
            wan_links: vec![],
        };
        let topo = spec.build().unwrap();
        let b = makespan_bound(&SchedulerParams::default(), &topo, &[]).unwrap();
        assert!((b.c_max - 7.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_oversized_task() {
        let topo = Topology::uniform(1, 1, 4, 1);
        let mut job = fig6(&topo);
        job.stages[0].tasks[0].r = crate::model::Share(900);
        assert!(makespan_bound(&SchedulerParams::default(), &topo, &[job]).is_err());
    }
}
