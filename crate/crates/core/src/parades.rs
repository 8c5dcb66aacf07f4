//! Task assignment inside a job manager: the primary's proportional initial
//! split of each released stage across data centers, then locality-tiered
//! delay scheduling with processing-time-scaled thresholds, plus stealing of
//! waiting tasks between job managers of the same job.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{apportion, ContainerId, DcId, NodeId, RackId, SchedulerParams, Share, SimTime, TaskId, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Locality {
    NodeLocal,
    RackLocal,
    Remote,
}

/// How a placement was admitted. `Stolen` marks tasks placed on the thief's
/// container straight from a steal reply.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    Node,
    Rack,
    Remote,
    Stolen,
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Tier::Node => "node",
            Tier::Rack => "rack",
            Tier::Remote => "remote",
            Tier::Stolen => "stolen",
        })
    }
}

/// The container descriptor `n` carried by updates and steal requests.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub container: ContainerId,
    pub node: NodeId,
    pub rack: RackId,
    pub dc: DcId,
    pub free: Share,
}

impl Slot {
    pub fn of(topology: &Topology, container: ContainerId, free: Share) -> Slot {
        let c = topology.container(container);
        Slot { container, node: c.node, rack: c.rack, dc: c.dc, free }
    }
}

pub fn locality_of(preferred: &BTreeSet<NodeId>, slot: &Slot, topology: &Topology) -> Locality {
    if preferred.contains(&slot.node) {
        Locality::NodeLocal
    } else if preferred.iter().any(|n| topology.rack_of_node(*n) == slot.rack) {
        Locality::RackLocal
    } else {
        Locality::Remote
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaitingTask {
    pub id: TaskId,
    pub r: Share,
    pub p: SimTime,
    pub preferred_nodes: BTreeSet<NodeId>,
    pub wait: SimTime,
    /// When the task joined this queue; wait accrues from here.
    pub entered: SimTime,
}

/// The waiting set a job manager owns for its sub-job.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct JmQueue {
    pub waiting: BTreeMap<TaskId, WaitingTask>,
    pub last_update: SimTime,
}

impl JmQueue {
    pub fn is_empty(&self) -> bool {
        self.waiting.is_empty()
    }

    pub fn len(&self) -> usize {
        self.waiting.len()
    }

    pub fn push(&mut self, mut task: WaitingTask, now: SimTime) {
        task.entered = now;
        self.waiting.insert(task.id, task);
    }

    pub fn remove(&mut self, id: &TaskId) -> Option<WaitingTask> {
        self.waiting.remove(id)
    }

    /// Adds the time since the last UPDATE to every waiting task.
    pub fn accrue(&mut self, now: SimTime) {
        for t in self.waiting.values_mut() {
            let from = self.last_update.max(t.entered);
            t.wait += now.saturating_sub(from);
            t.entered = now;
        }
        self.last_update = self.last_update.max(now);
    }
}

/// Waiting-time rule used at the rack and any-locality tiers.
#[derive(Clone, Debug, PartialEq)]
pub enum DelayPolicy {
    /// Thresholds `τ·p` and `2τ·p`; the any-locality tier also needs
    /// `n.free ≥ 1 − δ`.
    Parameterized(SchedulerParams),
    /// Classic delay scheduling: fixed waits, no free-capacity guard.
    Fixed { rack: SimTime, any: SimTime },
}

impl DelayPolicy {
    fn rack_ok(&self, t: &WaitingTask) -> bool {
        match self {
            DelayPolicy::Parameterized(p) => t.wait >= p.rack_threshold(t.p),
            DelayPolicy::Fixed { rack, .. } => t.wait >= *rack,
        }
    }

    fn any_ok(&self, t: &WaitingTask, free: Share) -> bool {
        match self {
            DelayPolicy::Parameterized(p) => t.wait >= p.remote_threshold(t.p) && p.mostly_free(free),
            DelayPolicy::Fixed { any, .. } => t.wait >= *any,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Placement {
    pub task: TaskId,
    pub container: ContainerId,
    pub tier: Tier,
    pub wait: SimTime,
    pub r: Share,
    pub p: SimTime,
    /// `n.free` just before this placement.
    pub free_before: Share,
}

#[derive(Clone, Debug, PartialEq)]
pub enum UpdateOutcome {
    Placed(Vec<(Placement, WaitingTask)>),
    /// The waiting set was empty: the caller should try to steal.
    NoWaitingTasks,
}

fn pick<'a>(cands: impl Iterator<Item = &'a WaitingTask>) -> Option<TaskId> {
    cands.max_by(|a, b| a.wait.cmp(&b.wait).then(b.id.cmp(&a.id))).map(|t| t.id)
}

/// The placement loop shared by local updates and steal handling. Removes
/// chosen tasks from `queue` and decrements `slot.free`.
fn assign(queue: &mut JmQueue, slot: &mut Slot, topology: &Topology, policy: &DelayPolicy) -> Vec<(Placement, WaitingTask)> {
    let mut placed = Vec::new();
    while !slot.free.is_zero() {
        let free = slot.free;
        let fits = |t: &&WaitingTask| t.r <= free;
        let node_local = pick(
            queue
                .waiting
                .values()
                .filter(fits)
                .filter(|t| locality_of(&t.preferred_nodes, slot, topology) == Locality::NodeLocal),
        );
        let choice = node_local
            .map(|id| (id, Tier::Node))
            .or_else(|| {
                pick(queue.waiting.values().filter(fits).filter(|t| {
                    locality_of(&t.preferred_nodes, slot, topology) == Locality::RackLocal && policy.rack_ok(t)
                }))
                .map(|id| (id, Tier::Rack))
            })
            .or_else(|| {
                pick(queue.waiting.values().filter(fits).filter(|t| policy.any_ok(t, free))).map(|id| {
                    // a task reaching this tier may still be rack-local; label by locality
                    let t = &queue.waiting[&id];
                    let tier = match locality_of(&t.preferred_nodes, slot, topology) {
                        Locality::NodeLocal => Tier::Node,
                        Locality::RackLocal => Tier::Rack,
                        Locality::Remote => Tier::Remote,
                    };
                    (id, tier)
                })
            });
        let Some((id, tier)) = choice else { break };
        let task = queue.waiting.remove(&id).unwrap();
        slot.free = slot.free - task.r;
        placed.push((
            Placement { task: id, container: slot.container, tier, wait: task.wait, r: task.r, p: task.p, free_before: free },
            task,
        ));
    }
    placed
}

/// Handles an UPDATE for container `slot` owned by this job manager.
pub fn on_update(
    queue: &mut JmQueue,
    slot: &mut Slot,
    topology: &Topology,
    policy: &DelayPolicy,
    now: SimTime,
) -> UpdateOutcome {
    queue.accrue(now);
    if queue.is_empty() {
        return UpdateOutcome::NoWaitingTasks;
    }
    UpdateOutcome::Placed(assign(queue, slot, topology, policy))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StealRequest {
    pub thief: DcId,
    pub victim: DcId,
    pub slot: Slot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StealReply {
    pub thief: DcId,
    pub victim: DcId,
    pub slot: Slot,
    pub granted: Vec<WaitingTask>,
}

/// Victim side of a steal: the same placement procedure, run against the
/// victim's waiting set on the thief's container, without recursing into a
/// steal. A victim that is not operating normally answers empty.
pub fn on_receive_steal(
    victim_queue: &mut JmQueue,
    req: &StealRequest,
    available: bool,
    topology: &Topology,
    policy: &DelayPolicy,
    now: SimTime,
) -> StealReply {
    let mut granted = Vec::new();
    if available {
        victim_queue.accrue(now);
        let mut slot = req.slot;
        granted = assign(victim_queue, &mut slot, topology, policy).into_iter().map(|(_, t)| t).collect();
    }
    StealReply { thief: req.thief, victim: req.victim, slot: req.slot, granted }
}

/// Victims ordered by descending backlog, then data center id.
pub fn victim_order(backlogs: &BTreeMap<DcId, usize>, thief: DcId) -> Vec<DcId> {
    let mut v: Vec<(DcId, usize)> = backlogs.iter().filter(|(d, n)| **d != thief && **n > 0).map(|(d, n)| (*d, *n)).collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    v.into_iter().map(|(d, _)| d).collect()
}

/// A job manager's peer as seen by a synchronous steal.
pub struct Peer<'a> {
    pub dc: DcId,
    pub queue: &'a mut JmQueue,
    pub available: bool,
}

/// Synchronous steal: asks peers in [`victim_order`] and takes the first
/// non-empty reply. Returns the victim and the re-owned tasks.
pub fn steal(
    thief: DcId,
    slot: &Slot,
    peers: &mut [Peer<'_>],
    topology: &Topology,
    policy: &DelayPolicy,
    now: SimTime,
) -> Option<(DcId, Vec<WaitingTask>)> {
    let backlogs: BTreeMap<DcId, usize> = peers.iter().map(|p| (p.dc, p.queue.len())).collect();
    for victim in victim_order(&backlogs, thief) {
        let peer = peers.iter_mut().find(|p| p.dc == victim).unwrap();
        let req = StealRequest { thief, victim, slot: *slot };
        let reply = on_receive_steal(peer.queue, &req, peer.available, topology, policy, now);
        if !reply.granted.is_empty() {
            return Some((victim, reply.granted));
        }
    }
    None
}

/// Tasks per data center, proportional to input bytes there. With no input
/// anywhere, everything goes to `fallback` (the primary's data center).
pub fn apportion_tasks(count: u32, bytes: &BTreeMap<DcId, u64>, fallback: DcId) -> BTreeMap<DcId, u32> {
    let weights: BTreeMap<DcId, f64> = bytes.iter().map(|(d, b)| (*d, *b as f64)).collect();
    let mut out = apportion(count, &weights);
    if out.is_empty() {
        out.insert(fallback, count);
    }
    out.retain(|_, n| *n > 0);
    out
}

/// Initial owner of each newly released task. Counts follow
/// [`apportion_tasks`]; a task goes to the data center holding most of its
/// input while that quota lasts, otherwise to the lowest-id data center with
/// quota left.
pub fn initial_assignment(
    tasks: &[(TaskId, BTreeMap<DcId, u64>)],
    fallback: DcId,
) -> BTreeMap<TaskId, DcId> {
    let mut total: BTreeMap<DcId, u64> = BTreeMap::new();
    for (_, per_dc) in tasks {
        for (d, b) in per_dc {
            *total.entry(*d).or_default() += b;
        }
    }
    let mut quota = apportion_tasks(tasks.len() as u32, &total, fallback);
    let mut out = BTreeMap::new();
    let mut rest = Vec::new();
    for (id, per_dc) in tasks {
        let home = per_dc
            .iter()
            .filter(|(_, b)| **b > 0)
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(d, _)| *d);
        match home.and_then(|h| quota.get_mut(&h).filter(|q| **q > 0).map(|q| (h, q))) {
            Some((h, q)) => {
                *q -= 1;
                out.insert(*id, h);
            }
            None => rest.push(*id),
        }
    }
    for id in rest {
        let (d, q) = quota.iter_mut().find(|(_, q)| **q > 0).expect("quota covers every task");
        *q -= 1;
        out.insert(id, *d);
    }
    out
}
