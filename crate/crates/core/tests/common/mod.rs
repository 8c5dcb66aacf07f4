#![allow(dead_code)]

use std::collections::BTreeSet;

use houtu::model::{DagJob, InputPlacement, JobSpec, NodeId, SchedulerParams, StageInputSpec, StageSpec, TaskId, TaskState};
use houtu::parades::Tier;
use houtu::sim::config::{Deployment, KillSpec, KillTarget, LoadInjection, RoleSelector, TopologySource, UniformTopology};
use houtu::sim::trace::PlacementRow;
use houtu::sim::{run, RunOutput, ScenarioConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn uniform(dcs: usize, racks: usize, nodes: usize) -> TopologySource {
    TopologySource::Uniform { uniform: UniformTopology { dcs, racks, nodes_per_rack: nodes, containers_per_node: 1 } }
}

/// Delay-guard violations in `rows` under the parameterized policy.
pub fn guard_violations(rows: &[PlacementRow], params: &SchedulerParams) -> Vec<String> {
    let num = |s: &str| s.parse::<f64>().unwrap();
    let mut bad = Vec::new();
    for row in rows {
        let (wait, p, free) = (num(&row.wait), num(&row.p), num(&row.free_before));
        let ok = match row.tier {
            Tier::Rack => wait + 1e-9 >= params.tau * p,
            Tier::Remote => wait + 1e-9 >= 2.0 * params.tau * p && free + 1e-9 >= 1.0 - params.delta,
            Tier::Node | Tier::Stolen => true,
        };
        if !ok {
            bad.push(format!("{} {} {:?} wait {} p {} free {}", row.time, row.task, row.tier, row.wait, row.p, row.free_before));
        }
    }
    bad
}

/// Runs `cfg` and fails on any delay-guard violation in its trace.
pub fn run_checked(cfg: &ScenarioConfig) -> RunOutput {
    let out = run(cfg).unwrap();
    if cfg.deployment != Deployment::CentStat {
        let bad = guard_violations(&out.traces.placements, &cfg.params);
        assert!(bad.is_empty(), "seed {} {}: {:?}", cfg.seed, cfg.deployment.name(), bad);
    }
    out
}

/// A five-stage chain, 100 tasks, inputs spread evenly over every DC.
pub fn long_job(seed: u64, p_deciseconds: (u32, u32)) -> JobSpec {
    let mut r = ChaCha8Rng::seed_from_u64(seed ^ 0x5a);
    let widths = [32, 32, 16, 16, 4];
    let stages = widths
        .iter()
        .enumerate()
        .map(|(i, w)| StageSpec {
            count: *w,
            r: r.random_range(4..=10) as f64 * 0.05,
            p_s: r.random_range(p_deciseconds.0..=p_deciseconds.1) as f64 / 10.0,
            predecessors: if i == 0 { vec![] } else { vec![i as u32 - 1] },
            output_bytes: 16_000_000,
            input: (i == 0).then_some(StageInputSpec { bytes_per_task: 64_000_000, placement: InputPlacement::Even }),
        })
        .collect();
    JobSpec { name: "long".into(), release_s: 0.0, stages }
}

/// The long job on the default four data centers, with three of them
/// taken over by outside tenants from 30 s to 180 s.
pub fn saturation(seed: u64, stealing: bool, inject: bool) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(seed);
    c.workload.jobs = vec![long_job(seed, (60, 140))];
    c.stealing = stealing;
    if inject {
        c.load = vec![LoadInjection { at_s: 30.0, dcs: vec![1, 2, 3], tenants: 4, duration_s: Some(150.0) }];
    }
    c
}

/// The long job with the host of one of its managers killed at 70 s.
pub fn host_kill(seed: u64, d: Deployment, role: Option<RoleSelector>) -> ScenarioConfig {
    let mut c = ScenarioConfig::new(seed);
    c.deployment = d;
    c.workload.jobs = vec![long_job(seed, (100, 200))];
    if let Some(role) = role {
        let dc = (role == RoleSelector::SemiActive).then_some(1 + (seed % 3) as u16);
        c.failures.kills = vec![KillSpec { at_s: 70.0, target: KillTarget::JmHost { job: 0, role, dc } }];
    }
    c
}

/// Smallest set of tasks that must run again after `dead` goes down, found
/// by trying every subset of the outputs it held. A lost output can stay
/// lost only if it has consumers and none of them will run again.
pub fn recompute_oracle(job: &DagJob, dead: NodeId, dead_containers: &BTreeSet<u32>) -> BTreeSet<TaskId> {
    let lost: Vec<TaskId> = job.tasks().filter(|t| t.state == TaskState::Done(dead)).map(|t| t.id).collect();
    let running: BTreeSet<TaskId> = job
        .tasks()
        .filter(|t| matches!(t.state, TaskState::Running(c) if dead_containers.contains(&c.0)))
        .map(|t| t.id)
        .collect();
    assert!(lost.len() <= 20, "{} lost outputs", lost.len());
    let mut best: Option<BTreeSet<TaskId>> = None;
    for mask in 0u32..(1 << lost.len()) {
        let r: BTreeSet<TaskId> = lost.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, t)| *t).collect();
        if best.as_ref().is_some_and(|b| r.len() >= b.len()) {
            continue;
        }
        let runs = |t: &TaskId| {
            r.contains(t) || running.contains(t) || matches!(job.task(*t).state, TaskState::Unreleased | TaskState::Waiting)
        };
        let ok = lost.iter().all(|t| {
            r.contains(t) || {
                let cs = job.consumers(*t);
                !cs.is_empty() && !cs.iter().any(runs)
            }
        });
        if ok {
            best = Some(r);
        }
    }
    let mut out = best.unwrap();
    out.extend(running);
    out
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}
