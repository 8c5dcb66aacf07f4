use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::params::SchedulerParams;
use super::time::{Share, SimTime};
use super::topology::{ContainerId, DcId, NodeId, Topology};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u32);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "j{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TaskId {
    pub job: JobId,
    pub stage: u32,
    pub index: u32,
}

impl TaskId {
    pub fn new(job: u32, stage: u32, index: u32) -> Self {
        TaskId { job: JobId(job), stage, index }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.s{}.t{}", self.job, self.stage, self.index)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskState {
    Unreleased,
    Waiting,
    Running(ContainerId),
    /// Completed; the output partition lives on this node.
    Done(NodeId),
}

impl TaskState {
    pub fn is_done(&self) -> bool {
        matches!(self, TaskState::Done(_))
    }

    /// Forward transitions of normal operation.
    pub fn can_advance_to(&self, next: &TaskState) -> bool {
        matches!(
            (self, next),
            (TaskState::Unreleased, TaskState::Waiting)
                | (TaskState::Waiting, TaskState::Running(_))
                | (TaskState::Running(_), TaskState::Done(_))
        )
    }

    /// Backward transitions allowed only while recovering from a failure.
    pub fn can_roll_back_to(&self, next: &TaskState) -> bool {
        matches!(
            (self, next),
            (TaskState::Running(_), TaskState::Waiting)
                | (TaskState::Running(_), TaskState::Unreleased)
                | (TaskState::Done(_), TaskState::Waiting)
                | (TaskState::Done(_), TaskState::Unreleased)
                | (TaskState::Waiting, TaskState::Unreleased)
        )
    }
}

/// One input partition a task reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Input {
    pub node: NodeId,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub id: TaskId,
    pub r: Share,
    pub p: SimTime,
    pub preferred_nodes: BTreeSet<NodeId>,
    pub inputs: Vec<Input>,
    pub wait: SimTime,
    pub state: TaskState,
}

impl Task {
    pub fn input_bytes(&self) -> u64 {
        self.inputs.iter().map(|i| i.bytes).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Stage {
    pub id: u32,
    pub tasks: Vec<Task>,
    pub predecessors: BTreeSet<u32>,
    /// Bytes each task writes for its consumers.
    pub output_bytes: u64,
}

impl Stage {
    pub fn r(&self) -> Share {
        self.tasks.first().map(|t| t.r).unwrap_or(Share::ZERO)
    }

    pub fn p(&self) -> SimTime {
        self.tasks.first().map(|t| t.p).unwrap_or(SimTime::ZERO)
    }

    pub fn is_done(&self) -> bool {
        self.tasks.iter().all(|t| t.state.is_done())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DagJob {
    pub id: JobId,
    pub name: String,
    pub stages: Vec<Stage>,
    pub release: SimTime,
    pub completion: Option<SimTime>,
}

/// Indices of the tasks of an upstream stage with `upstream` tasks that feed
/// task `index` of a stage with `width` tasks. Every upstream task feeds at
/// least one downstream task.
pub fn upstream_tasks(index: u32, width: u32, upstream: u32) -> BTreeSet<u32> {
    let mut out: BTreeSet<u32> = (0..upstream).filter(|j| j % width == index).collect();
    if upstream > 0 {
        out.insert(index % upstream);
    }
    out
}

impl DagJob {
    pub fn task(&self, id: TaskId) -> &Task {
        &self.stages[id.stage as usize].tasks[id.index as usize]
    }

    pub fn task_mut(&mut self, id: TaskId) -> &mut Task {
        &mut self.stages[id.stage as usize].tasks[id.index as usize]
    }

    pub fn tasks(&self) -> impl Iterator<Item = &Task> {
        self.stages.iter().flat_map(|s| s.tasks.iter())
    }

    pub fn task_count(&self) -> usize {
        self.stages.iter().map(|s| s.tasks.len()).sum()
    }

    pub fn is_complete(&self) -> bool {
        self.stages.iter().all(Stage::is_done)
    }

    /// Upstream tasks whose outputs `id` reads.
    pub fn dependencies(&self, id: TaskId) -> Vec<TaskId> {
        let stage = &self.stages[id.stage as usize];
        let width = stage.tasks.len() as u32;
        let mut deps = Vec::new();
        for &pred in &stage.predecessors {
            let upstream = self.stages[pred as usize].tasks.len() as u32;
            for j in upstream_tasks(id.index, width, upstream) {
                deps.push(TaskId { job: self.id, stage: pred, index: j });
            }
        }
        deps
    }

    /// Downstream tasks reading the output of `id`.
    pub fn consumers(&self, id: TaskId) -> Vec<TaskId> {
        let mut out = Vec::new();
        for stage in &self.stages {
            if stage.predecessors.contains(&id.stage) {
                let width = stage.tasks.len() as u32;
                for t in &stage.tasks {
                    let upstream = self.stages[id.stage as usize].tasks.len() as u32;
                    if upstream_tasks(t.id.index, width, upstream).contains(&id.index) {
                        out.push(t.id);
                    }
                }
            }
        }
        out
    }

    fn stage_ready(&self, stage: &Stage) -> bool {
        stage.predecessors.iter().all(|&p| self.stages[p as usize].is_done())
    }

    /// Moves every Unreleased task whose predecessor stages are all Done to
    /// Waiting with zero accumulated wait, wiring its inputs to the upstream
    /// output locations. Root-stage inputs are left as given.
    pub fn release_ready_tasks(&mut self, _now: SimTime) -> Vec<TaskId> {
        let ready: Vec<u32> = self
            .stages
            .iter()
            .filter(|s| self.stage_ready(s) && s.tasks.iter().any(|t| t.state == TaskState::Unreleased))
            .map(|s| s.id)
            .collect();
        let mut released = Vec::new();
        for sid in ready {
            let ids: Vec<TaskId> = self.stages[sid as usize]
                .tasks
                .iter()
                .filter(|t| t.state == TaskState::Unreleased)
                .map(|t| t.id)
                .collect();
            for id in ids {
                let deps = self.dependencies(id);
                if !deps.is_empty() {
                    let inputs: Vec<Input> = deps
                        .iter()
                        .map(|d| {
                            let node = match self.task(*d).state {
                                TaskState::Done(n) => n,
                                other => unreachable!("upstream {d} in state {other:?}"),
                            };
                            Input { node, bytes: self.stages[d.stage as usize].output_bytes }
                        })
                        .collect();
                    let task = self.task_mut(id);
                    task.preferred_nodes = inputs.iter().map(|i| i.node).collect();
                    task.inputs = inputs;
                }
                let task = self.task_mut(id);
                task.state = TaskState::Waiting;
                task.wait = SimTime::ZERO;
                released.push(id);
            }
        }
        released
    }

    /// Stage ids in a topological order; errors on a cycle or a dangling
    /// predecessor.
    pub fn topological_order(&self) -> Result<Vec<u32>> {
        let n = self.stages.len();
        let mut indeg = vec![0usize; n];
        for s in &self.stages {
            for &p in &s.predecessors {
                if p as usize >= n {
                    return Err(self.reject(format!("stage {} has unknown predecessor {p}", s.id)));
                }
                indeg[s.id as usize] += 1;
            }
        }
        let mut ready: BTreeSet<u32> = (0..n as u32).filter(|&i| indeg[i as usize] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = ready.pop_first() {
            order.push(s);
            for succ in &self.stages {
                if succ.predecessors.contains(&s) {
                    indeg[succ.id as usize] -= 1;
                    if indeg[succ.id as usize] == 0 {
                        ready.insert(succ.id);
                    }
                }
            }
        }
        if order.len() != n {
            return Err(self.reject("stage graph has a cycle".into()));
        }
        Ok(order)
    }

    fn reject(&self, reason: String) -> Error {
        Error::Admission { job: self.id, reason }
    }

    /// Admission checks: dense stage ids, acyclic stage graph, homogeneous
    /// stages, and `θ ≤ r`, `r + δ ≤ 1`, `r ≤ capacity` for every task.
    pub fn admit(&self, params: &SchedulerParams, capacity: Share) -> Result<()> {
        for (i, s) in self.stages.iter().enumerate() {
            if s.id as usize != i {
                return Err(self.reject(format!("stage ids must be dense, found {}", s.id)));
            }
            if s.tasks.is_empty() {
                return Err(self.reject(format!("stage {} has no tasks", s.id)));
            }
            let (r, p) = (s.r(), s.p());
            for t in &s.tasks {
                if t.r != r || t.p != p {
                    return Err(self.reject(format!("stage {} is heterogeneous at {}", s.id, t.id)));
                }
            }
            if r < params.min_task_share() {
                return Err(self.reject(format!("stage {} r={} below theta", s.id, r)));
            }
            if r > params.max_task_share() {
                return Err(self.reject(format!("stage {} r={} exceeds 1-delta", s.id, r)));
            }
            if r > capacity {
                return Err(self.reject(format!("stage {} r={} exceeds container capacity", s.id, r)));
            }
        }
        self.topological_order()?;
        Ok(())
    }
}

/// Largest-remainder apportionment of `total` items proportional to
/// `weights`. Remainder ties go to the lower key. All-zero weights yield an
/// empty map.
pub fn apportion<K: Ord + Copy>(total: u32, weights: &BTreeMap<K, f64>) -> BTreeMap<K, u32> {
    let sum: f64 = weights.values().filter(|w| **w > 0.0).sum();
    let mut out = BTreeMap::new();
    if sum <= 0.0 || total == 0 {
        return out;
    }
    let mut rems = Vec::new();
    let mut assigned = 0u32;
    for (&k, &w) in weights {
        let w = w.max(0.0);
        let exact = total as f64 * w / sum;
        let floor = exact.floor() as u32;
        out.insert(k, floor);
        assigned += floor;
        rems.push((exact - floor as f64, k));
    }
    rems.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (_, k) in rems.into_iter().take((total - assigned) as usize) {
        *out.get_mut(&k).unwrap() += 1;
    }
    out
}

/// Where the input partitions of a root stage live.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputPlacement {
    /// Round-robin over all data centers, then over each one's nodes.
    Even,
    /// Everything in one data center.
    Dc(u16),
    /// Proportional to the given weights (largest remainder).
    DcWeights(BTreeMap<u16, f64>),
    /// Explicit node per task, cycled.
    Nodes(Vec<u32>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageInputSpec {
    pub bytes_per_task: u64,
    pub placement: InputPlacement,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageSpec {
    pub count: u32,
    pub r: f64,
    pub p_s: f64,
    #[serde(default)]
    pub predecessors: Vec<u32>,
    #[serde(default)]
    pub output_bytes: u64,
    #[serde(default)]
    pub input: Option<StageInputSpec>,
}

/// On-disk job document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobSpec {
    pub name: String,
    #[serde(default)]
    pub release_s: f64,
    pub stages: Vec<StageSpec>,
}

impl JobSpec {
    /// Places root-stage partitions on `topology` and builds the job.
    pub fn instantiate(&self, id: JobId, topology: &Topology) -> Result<DagJob> {
        let reject = |reason: String| Error::Admission { job: id, reason };
        let mut stages = Vec::with_capacity(self.stages.len());
        for (si, s) in self.stages.iter().enumerate() {
            if s.count == 0 {
                return Err(reject(format!("stage {si} has zero tasks")));
            }
            let r = Share::from_fraction(s.r);
            let p = SimTime::from_secs_f64(s.p_s);
            let nodes = match (&s.input, s.predecessors.is_empty()) {
                (Some(input), true) => place_inputs(s.count, &input.placement, topology)
                    .map_err(|e| reject(format!("stage {si}: {e}")))?,
                (None, true) => return Err(reject(format!("root stage {si} needs an input spec"))),
                (_, false) => Vec::new(),
            };
            let bytes = s.input.as_ref().map(|i| i.bytes_per_task).unwrap_or(0);
            let tasks = (0..s.count)
                .map(|i| {
                    let inputs: Vec<Input> = nodes.get(i as usize).map(|&n| vec![Input { node: n, bytes }]).unwrap_or_default();
                    Task {
                        id: TaskId { job: id, stage: si as u32, index: i },
                        r,
                        p,
                        preferred_nodes: inputs.iter().map(|x| x.node).collect(),
                        inputs,
                        wait: SimTime::ZERO,
                        state: TaskState::Unreleased,
                    }
                })
                .collect();
            stages.push(Stage {
                id: si as u32,
                tasks,
                predecessors: s.predecessors.iter().copied().collect(),
                output_bytes: s.output_bytes,
            });
        }
        let job = DagJob {
            id,
            name: self.name.clone(),
            stages,
            release: SimTime::from_secs_f64(self.release_s),
            completion: None,
        };
        job.topological_order()?;
        Ok(job)
    }
}

fn place_inputs(count: u32, placement: &InputPlacement, topology: &Topology) -> std::result::Result<Vec<NodeId>, String> {
    let k = topology.datacenters.len();
    let in_dc = |dc: usize, slot: usize| {
        let nodes = &topology.datacenters[dc].nodes;
        nodes[slot % nodes.len()]
    };
    Ok(match placement {
        InputPlacement::Even => (0..count as usize).map(|i| in_dc(i % k, i / k)).collect(),
        InputPlacement::Dc(d) => {
            if *d as usize >= k {
                return Err(format!("unknown data center {d}"));
            }
            (0..count as usize).map(|i| in_dc(*d as usize, i)).collect()
        }
        InputPlacement::DcWeights(w) => {
            if w.keys().any(|d| *d as usize >= k) {
                return Err("weight for unknown data center".into());
            }
            let counts = apportion(count, &w.iter().map(|(d, x)| (DcId(*d), *x)).collect());
            if counts.is_empty() {
                return Err("all-zero data center weights".into());
            }
            let mut out = Vec::new();
            for (dc, n) in counts {
                out.extend((0..n as usize).map(|i| in_dc(dc.index(), i)));
            }
            out
        }
        InputPlacement::Nodes(list) => {
            if list.is_empty() || list.iter().any(|n| *n as usize >= topology.nodes.len()) {
                return Err("invalid explicit node list".into());
            }
            (0..count as usize).map(|i| NodeId(list[i % list.len()])).collect()
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn root(count: u32, r: f64, p: f64) -> StageSpec {
        StageSpec {
            count,
            r,
            p_s: p,
            predecessors: vec![],
            output_bytes: 1_000,
            input: Some(StageInputSpec { bytes_per_task: 10_000, placement: InputPlacement::Even }),
        }
    }

    fn child(count: u32, r: f64, p: f64, preds: &[u32]) -> StageSpec {
        StageSpec { count, r, p_s: p, predecessors: preds.to_vec(), output_bytes: 1_000, input: None }
    }

    pub(crate) fn fig6_like() -> JobSpec {
        JobSpec {
            name: "fig6".into(),
            release_s: 0.0,
            stages: vec![root(3, 0.5, 4.0), child(2, 0.5, 6.0, &[0]), child(1, 1.0, 2.0, &[1])],
        }
    }

    fn finish_stage(job: &mut DagJob, stage: u32) {
        for t in &mut job.stages[stage as usize].tasks {
            t.state = TaskState::Done(NodeId(t.id.index));
        }
    }

    #[test]
    fn upstream_mapping_covers_every_producer() {
        for width in 1..6u32 {
            for upstream in 1..8u32 {
                let mut seen = BTreeSet::new();
                for i in 0..width {
                    let deps = upstream_tasks(i, width, upstream);
                    assert!(!deps.is_empty());
                    seen.extend(deps);
                }
                assert_eq!(seen.len() as u32, upstream);
            }
        }
    }

    #[test]
    fn release_linear_job() {
        let topo = Topology::uniform(1, 1, 4, 1);
        let spec = JobSpec { name: "lin".into(), release_s: 0.0, stages: vec![root(2, 0.2, 1.0), child(3, 0.2, 1.0, &[0])] };
        let mut job = spec.instantiate(JobId(0), &topo).unwrap();
        let first = job.release_ready_tasks(SimTime::ZERO);
        assert_eq!(first.len(), 2);
        assert!(job.release_ready_tasks(SimTime::ZERO).is_empty());
        finish_stage(&mut job, 0);
        let second = job.release_ready_tasks(SimTime(5));
        assert_eq!(second.len(), 3);
        assert!(job.stages[1].tasks.iter().all(|t| t.state == TaskState::Waiting && t.wait == SimTime::ZERO));
        assert!(!job.stages[1].tasks[0].inputs.is_empty());
    }

    #[test]
    fn diamond_waits_for_both_branches() {
        let topo = Topology::uniform(1, 1, 2, 1);
        let spec = JobSpec {
            name: "diamond".into(),
            release_s: 0.0,
            stages: vec![root(1, 0.2, 1.0), child(1, 0.2, 1.0, &[0]), child(1, 0.2, 1.0, &[0]), child(1, 0.2, 1.0, &[1, 2])],
        };
        let mut job = spec.instantiate(JobId(1), &topo).unwrap();
        job.release_ready_tasks(SimTime::ZERO);
        finish_stage(&mut job, 0);
        job.release_ready_tasks(SimTime::ZERO);
        finish_stage(&mut job, 1);
        assert!(job.release_ready_tasks(SimTime::ZERO).is_empty());
        assert_eq!(job.stages[3].tasks[0].state, TaskState::Unreleased);
    }

    #[test]
    fn fig6_releases_last_stage_after_two() {
        let topo = Topology::uniform(3, 1, 2, 1);
        let mut job = fig6_like().instantiate(JobId(2), &topo).unwrap();
        job.release_ready_tasks(SimTime::ZERO);
        finish_stage(&mut job, 0);
        job.release_ready_tasks(SimTime::ZERO);
        assert_eq!(job.stages[2].tasks[0].state, TaskState::Unreleased);
        finish_stage(&mut job, 1);
        let released = job.release_ready_tasks(SimTime::ZERO);
        assert_eq!(released, vec![TaskId::new(2, 2, 0)]);
    }

    #[test]
    fn admission_checks() {
        let topo = Topology::uniform(1, 1, 1, 1);
        let params = SchedulerParams::default();
        let ok = JobSpec { name: "ok".into(), release_s: 0.0, stages: vec![root(2, 0.5, 1.0)] };
        ok.instantiate(JobId(0), &topo).unwrap().admit(&params, Share::FULL).unwrap();
        let big = JobSpec { name: "big".into(), release_s: 0.0, stages: vec![root(2, 0.6, 1.0)] };
        assert!(big.instantiate(JobId(0), &topo).unwrap().admit(&params, Share::FULL).is_err());
        let tiny = JobSpec { name: "tiny".into(), release_s: 0.0, stages: vec![root(2, 0.01, 1.0)] };
        assert!(tiny.instantiate(JobId(0), &topo).unwrap().admit(&params, Share::FULL).is_err());
        let cyc = JobSpec { name: "cyc".into(), release_s: 0.0, stages: vec![child(1, 0.2, 1.0, &[1]), child(1, 0.2, 1.0, &[0])] };
        assert!(cyc.instantiate(JobId(0), &topo).is_err());
        let mut hetero = ok.instantiate(JobId(0), &topo).unwrap();
        hetero.stages[0].tasks[1].p = SimTime(7);
        assert!(hetero.admit(&params, Share::FULL).is_err());
    }

    #[test]
    fn largest_remainder() {
        let w: BTreeMap<char, f64> = [('A', 50.0), ('B', 30.0), ('C', 20.0)].into();
        let a = apportion(7, &w);
        assert_eq!(a, [('A', 4), ('B', 2), ('C', 1)].into());
        let w: BTreeMap<char, f64> = [('A', 0.0), ('B', 0.0)].into();
        assert!(apportion(5, &w).is_empty());
    }

    #[test]
    fn dc_weight_placement() {
        let topo = Topology::uniform(2, 1, 2, 1);
        let mut w = BTreeMap::new();
        w.insert(0, 3.0);
        w.insert(1, 1.0);
        let nodes = place_inputs(4, &InputPlacement::DcWeights(w), &topo).unwrap();
        let in_dc0 = nodes.iter().filter(|n| topo.dc_of_node(**n) == DcId(0)).count();
        assert_eq!(in_dc0, 3);
    }

    #[test]
    fn transitions() {
        use TaskState::*;
        assert!(Unreleased.can_advance_to(&Waiting));
        assert!(!Unreleased.can_advance_to(&Running(ContainerId(0))));
        assert!(Running(ContainerId(0)).can_roll_back_to(&Waiting));
        assert!(!Waiting.can_roll_back_to(&Done(NodeId(0))));
    }
}
