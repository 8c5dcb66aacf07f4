//! Replicated job-manager state. Every job keeps one job manager per data
//! center; the primary does the initial assignment of released stages and
//! the others run semi-actively. Shared progress lives in a totally ordered
//! log so any survivor can continue the job after a failure.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{ContainerId, DcId, JobId, NodeId, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct JmId {
    pub dc: DcId,
    pub generation: u32,
}

impl fmt::Display for JmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "jm@{}#{}", self.dc, self.generation)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JmRole {
    Primary,
    SemiActive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JmStatus {
    Alive,
    Failed,
    /// Replacement requested but not yet running. Answers steals empty.
    Recovering,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JmState {
    pub id: JmId,
    pub role: JmRole,
    pub status: JmStatus,
    pub host: ContainerId,
}

impl JmState {
    pub fn is_alive(&self) -> bool {
        self.status == JmStatus::Alive
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InfoUpdate {
    PartitionDone { task: TaskId, node: NodeId },
    PartitionLost { task: TaskId },
    TaskAssigned { task: TaskId, owner: DcId },
    TaskReassigned { task: TaskId, from: DcId, to: DcId },
    ExecutorChange { container: ContainerId, owner: Option<JmId> },
    RoleChange { jm: JmId, role: Option<JmRole> },
    StageFrontier { stages: BTreeSet<u32> },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqUpdate {
    pub seq: u64,
    pub update: InfoUpdate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ApplyOutcome {
    /// Applied this update and this many buffered successors.
    Applied(usize),
    Duplicate,
    /// Arrived ahead of a gap; held until the gap fills.
    Buffered,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExecutorEntry {
    pub owner: JmId,
    pub role: JmRole,
}

/// jobId, stage frontier, executorList, taskMap and partitionList, plus the
/// job managers' roles.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntermediateInfo {
    pub job: JobId,
    pub stage_frontier: BTreeSet<u32>,
    pub executors: BTreeMap<ContainerId, ExecutorEntry>,
    pub task_map: BTreeMap<TaskId, DcId>,
    pub partitions: BTreeMap<TaskId, NodeId>,
    pub roles: BTreeMap<DcId, (JmId, JmRole)>,
    pub applied: u64,
    #[serde(skip)]
    pending: BTreeMap<u64, InfoUpdate>,
}

impl IntermediateInfo {
    pub fn new(job: JobId) -> Self {
        IntermediateInfo {
            job,
            stage_frontier: BTreeSet::new(),
            executors: BTreeMap::new(),
            task_map: BTreeMap::new(),
            partitions: BTreeMap::new(),
            roles: BTreeMap::new(),
            applied: 0,
            pending: BTreeMap::new(),
        }
    }

    pub fn primary(&self) -> Option<JmId> {
        self.roles.values().find(|(_, r)| *r == JmRole::Primary).map(|(id, _)| *id)
    }

    pub fn buffered(&self) -> usize {
        self.pending.len()
    }

    fn transition(&mut self, update: &InfoUpdate) {
        match update {
            InfoUpdate::PartitionDone { task, node } => {
                self.partitions.insert(*task, *node);
            }
            InfoUpdate::PartitionLost { task } => {
                self.partitions.remove(task);
            }
            InfoUpdate::TaskAssigned { task, owner } => {
                self.task_map.insert(*task, *owner);
            }
            InfoUpdate::TaskReassigned { task, to, .. } => {
                self.task_map.insert(*task, *to);
            }
            InfoUpdate::ExecutorChange { container, owner } => match owner {
                Some(jm) => {
                    let role = self.roles.get(&jm.dc).map_or(JmRole::SemiActive, |(_, r)| *r);
                    self.executors.insert(*container, ExecutorEntry { owner: *jm, role });
                }
                None => {
                    self.executors.remove(container);
                }
            },
            InfoUpdate::RoleChange { jm, role } => {
                match role {
                    Some(r) => {
                        self.roles.insert(jm.dc, (*jm, *r));
                    }
                    None => {
                        if self.roles.get(&jm.dc).is_some_and(|(id, _)| id == jm) {
                            self.roles.remove(&jm.dc);
                        }
                    }
                }
                for e in self.executors.values_mut() {
                    if let Some((id, r)) = self.roles.get(&e.owner.dc) {
                        if *id == e.owner {
                            e.role = *r;
                        }
                    }
                }
            }
            InfoUpdate::StageFrontier { stages } => {
                self.stage_frontier = stages.clone();
            }
        }
    }

    /// Applies `u` in sequence order. Duplicates are ignored and updates
    /// beyond a gap are buffered until the gap fills.
    pub fn apply_update(&mut self, u: SeqUpdate) -> ApplyOutcome {
        if u.seq <= self.applied {
            return ApplyOutcome::Duplicate;
        }
        if u.seq > self.applied + 1 {
            self.pending.insert(u.seq, u.update);
            return ApplyOutcome::Buffered;
        }
        self.transition(&u.update);
        self.applied = u.seq;
        let mut drained = 0;
        while let Some(next) = self.pending.remove(&(self.applied + 1)) {
            self.transition(&next);
            self.applied += 1;
            drained += 1;
        }
        ApplyOutcome::Applied(drained)
    }

    /// Tasks owned by `dc` according to the task map.
    pub fn owned_by(&self, dc: DcId) -> impl Iterator<Item = TaskId> + '_ {
        self.task_map.iter().filter(move |(_, d)| **d == dc).map(|(t, _)| *t)
    }
}

/// Totally ordered update log with one replica per data center. Writers
/// append to the log; replicas apply entries as they are delivered.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistentStore {
    log: Vec<InfoUpdate>,
    committed: IntermediateInfo,
    replicas: BTreeMap<DcId, IntermediateInfo>,
}

impl ConsistentStore {
    pub fn new(job: JobId, dcs: impl IntoIterator<Item = DcId>) -> Self {
        ConsistentStore {
            log: Vec::new(),
            committed: IntermediateInfo::new(job),
            replicas: dcs.into_iter().map(|d| (d, IntermediateInfo::new(job))).collect(),
        }
    }

    /// Appends an update and returns its sequence number.
    pub fn append(&mut self, update: InfoUpdate) -> u64 {
        self.log.push(update.clone());
        let seq = self.log.len() as u64;
        self.committed.apply_update(SeqUpdate { seq, update });
        seq
    }

    pub fn entry(&self, seq: u64) -> Option<SeqUpdate> {
        self.log.get(seq.checked_sub(1)? as usize).map(|u| SeqUpdate { seq, update: u.clone() })
    }

    pub fn head(&self) -> u64 {
        self.log.len() as u64
    }

    /// State after every appended update.
    pub fn committed(&self) -> &IntermediateInfo {
        &self.committed
    }

    pub fn replica(&self, dc: DcId) -> Option<&IntermediateInfo> {
        self.replicas.get(&dc)
    }

    /// Delivers log entry `seq` to the replica in `dc`.
    pub fn deliver(&mut self, dc: DcId, seq: u64) -> Option<ApplyOutcome> {
        let u = self.entry(seq)?;
        self.replicas.get_mut(&dc).map(|r| r.apply_update(u))
    }

    /// Brings a replica up to the head of the log.
    pub fn sync(&mut self, dc: DcId) {
        let head = self.head();
        let from = self.replicas.get(&dc).map_or(head, |r| r.applied);
        for seq in from + 1..=head {
            self.deliver(dc, seq);
        }
    }

    pub fn converged(&self) -> bool {
        self.replicas.values().all(|r| {
            r.applied == self.committed.applied
                && r.task_map == self.committed.task_map
                && r.partitions == self.committed.partitions
                && r.executors == self.committed.executors
                && r.roles == self.committed.roles
                && r.stage_frontier == self.committed.stage_frontier
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecoveryPlan {
    /// New primary, when the failed one was primary.
    pub elected: Option<DcId>,
    /// Data center that gets a replacement semi-active job manager.
    pub respawn: Option<DcId>,
    /// Who asks the data center's master for the replacement.
    pub requested_by: Option<DcId>,
    /// No job manager survived.
    pub abort: bool,
}

/// Lowest data center id among live semi-active job managers.
pub fn elect_primary<'a>(live: impl IntoIterator<Item = &'a JmState>) -> Option<DcId> {
    live.into_iter()
        .filter(|j| j.is_alive() && j.role == JmRole::SemiActive)
        .map(|j| j.id.dc)
        .min()
}

/// Decides the recovery steps once the failure of the job manager in
/// `failed` has been detected.
pub fn on_jm_failure(jms: &BTreeMap<DcId, JmState>, failed: DcId) -> RecoveryPlan {
    let live: Vec<&JmState> = jms.values().filter(|j| j.is_alive() && j.id.dc != failed).collect();
    if live.is_empty() {
        return RecoveryPlan { elected: None, respawn: None, requested_by: None, abort: true };
    }
    // a replacement may already have been elected while this failure went unnoticed
    let primary_alive = live.iter().any(|j| j.role == JmRole::Primary);
    let elected = if !primary_alive {
        elect_primary(live.iter().copied())
    } else {
        None
    };
    let requester = elected.or_else(|| live.iter().find(|j| j.role == JmRole::Primary).map(|j| j.id.dc));
    RecoveryPlan { elected, respawn: Some(failed), requested_by: requester, abort: false }
}

/// Re-owns the containers of `failed` to `new_jm`. Containers in `dead`
/// are dropped from the executor list instead.
pub fn inherit_containers(
    info: &IntermediateInfo,
    new_jm: JmId,
    failed: JmId,
    dead: &BTreeSet<ContainerId>,
) -> Vec<InfoUpdate> {
    let mut updates = Vec::new();
    for (c, e) in &info.executors {
        if e.owner.dc != failed.dc {
            continue;
        }
        let owner = if dead.contains(c) { None } else { Some(new_jm) };
        if owner != Some(e.owner) {
            updates.push(InfoUpdate::ExecutorChange { container: *c, owner });
        }
    }
    updates
}

/// Completed tasks whose output partitions were on `dead_nodes`.
pub fn lost_outputs(info: &IntermediateInfo, dead_nodes: &BTreeSet<NodeId>) -> BTreeSet<TaskId> {
    info.partitions
        .iter()
        .filter(|(_, n)| dead_nodes.contains(n))
        .map(|(t, _)| *t)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn jm(dc: u16, role: JmRole, status: JmStatus) -> (DcId, JmState) {
        (DcId(dc), JmState { id: JmId { dc: DcId(dc), generation: 0 }, role, status, host: ContainerId(dc as u32) })
    }

    #[test]
    fn partition_and_reassignment() {
        let mut info = IntermediateInfo::new(JobId(0));
        let t3 = TaskId::new(0, 0, 3);
        let t5 = TaskId::new(0, 0, 5);
        info.apply_update(SeqUpdate { seq: 1, update: InfoUpdate::PartitionDone { task: t3, node: NodeId(7) } });
        assert_eq!(info.partitions[&t3], NodeId(7));
        info.apply_update(SeqUpdate { seq: 2, update: InfoUpdate::TaskAssigned { task: t5, owner: DcId(1) } });
        info.apply_update(SeqUpdate { seq: 3, update: InfoUpdate::TaskReassigned { task: t5, from: DcId(1), to: DcId(0) } });
        assert_eq!(info.task_map[&t5], DcId(0));
    }

    #[test]
    fn duplicates_and_gaps() {
        let mut info = IntermediateInfo::new(JobId(0));
        let u = |seq, i| SeqUpdate { seq, update: InfoUpdate::PartitionDone { task: TaskId::new(0, 0, i), node: NodeId(i) } };
        assert_eq!(info.apply_update(u(1, 1)), ApplyOutcome::Applied(0));
        let before = info.clone();
        assert_eq!(info.apply_update(u(1, 1)), ApplyOutcome::Duplicate);
        assert_eq!(info, before);
        assert_eq!(info.apply_update(u(3, 3)), ApplyOutcome::Buffered);
        assert_eq!(info.partitions.len(), 1);
        assert_eq!(info.apply_update(u(2, 2)), ApplyOutcome::Applied(1));
        assert_eq!(info.partitions.len(), 3);
        assert_eq!(info.applied, 3);
    }

    #[test]
    fn store_replicas_converge() {
        let mut s = ConsistentStore::new(JobId(0), [DcId(0), DcId(1)]);
        for i in 0..5 {
            s.append(InfoUpdate::PartitionDone { task: TaskId::new(0, 0, i), node: NodeId(i) });
        }
        assert!(!s.converged());
        for seq in (1..=5).rev() {
            s.deliver(DcId(0), seq);
        }
        s.sync(DcId(1));
        assert!(s.converged());
        assert_eq!(s.replica(DcId(0)).unwrap().partitions.len(), 5);
    }

    #[test]
    fn semi_active_failure_respawns_locally() {
        let jms: BTreeMap<_, _> =
            [jm(0, JmRole::Primary, JmStatus::Alive), jm(1, JmRole::SemiActive, JmStatus::Failed)].into();
        let plan = on_jm_failure(&jms, DcId(1));
        assert_eq!(plan, RecoveryPlan { elected: None, respawn: Some(DcId(1)), requested_by: Some(DcId(0)), abort: false });
    }

    #[test]
    fn primary_failure_elects_then_respawns() {
        let jms: BTreeMap<_, _> = [
            jm(0, JmRole::Primary, JmStatus::Failed),
            jm(2, JmRole::SemiActive, JmStatus::Alive),
            jm(3, JmRole::SemiActive, JmStatus::Alive),
        ]
        .into();
        let plan = on_jm_failure(&jms, DcId(0));
        assert_eq!(plan.elected, Some(DcId(2)));
        assert_eq!(plan.respawn, Some(DcId(0)));
        assert_eq!(plan.requested_by, Some(DcId(2)));
    }

    #[test]
    fn stale_primary_does_not_elect_twice() {
        let jms: BTreeMap<_, _> = [
            jm(0, JmRole::Primary, JmStatus::Failed),
            jm(1, JmRole::Primary, JmStatus::Alive),
            jm(2, JmRole::SemiActive, JmStatus::Alive),
        ]
        .into();
        let plan = on_jm_failure(&jms, DcId(0));
        assert_eq!(plan.elected, None);
        assert_eq!(plan.requested_by, Some(DcId(1)));
    }

    #[test]
    fn sole_manager_failure_aborts() {
        let jms: BTreeMap<_, _> = [jm(0, JmRole::Primary, JmStatus::Failed)].into();
        assert!(on_jm_failure(&jms, DcId(0)).abort);
    }

    #[test]
    fn election_rule() {
        let a = jm(3, JmRole::SemiActive, JmStatus::Alive).1;
        assert_eq!(elect_primary([&a]), Some(DcId(3)));
        let b = jm(2, JmRole::SemiActive, JmStatus::Alive).1;
        let c = jm(1, JmRole::SemiActive, JmStatus::Failed).1;
        assert_eq!(elect_primary([&a, &b, &c]), Some(DcId(2)));
    }

    #[test]
    fn inheritance_drops_dead_containers() {
        let mut s = ConsistentStore::new(JobId(0), [DcId(0)]);
        let old = JmId { dc: DcId(1), generation: 0 };
        let new = JmId { dc: DcId(1), generation: 1 };
        for c in 0..3 {
            s.append(InfoUpdate::ExecutorChange { container: ContainerId(c), owner: Some(old) });
        }
        let ups = inherit_containers(s.committed(), new, old, &[ContainerId(2)].into());
        assert_eq!(ups.len(), 3);
        for u in ups {
            s.append(u);
        }
        let info = s.committed();
        assert_eq!(info.executors.len(), 2);
        assert!(info.executors.values().all(|e| e.owner == new));
    }

    #[test]
    fn lost_outputs_are_those_on_dead_nodes() {
        let mut s = ConsistentStore::new(JobId(0), [DcId(0)]);
        s.append(InfoUpdate::PartitionDone { task: TaskId::new(0, 0, 0), node: NodeId(4) });
        s.append(InfoUpdate::PartitionDone { task: TaskId::new(0, 0, 1), node: NodeId(4) });
        s.append(InfoUpdate::PartitionDone { task: TaskId::new(0, 0, 2), node: NodeId(5) });
        let lost = lost_outputs(s.committed(), &[NodeId(4)].into());
        assert_eq!(lost, [TaskId::new(0, 0, 0), TaskId::new(0, 0, 1)].into());
    }
}
