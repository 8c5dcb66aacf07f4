//! The discrete-event engine tying the schedulers together.
//!
//! Every job gets one job manager per scheduling domain: a data center for
//! the decentralized deployments, the whole system for the centralized ones.
//! Sub-job state (waiting queue, held containers, Af history) lives per
//! (job, domain) and survives job-manager failures; a manager's status only
//! decides whether it may schedule.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::fmt;
use std::path::Path;

use serde_json::json;

use super::bound::makespan_bound;
use super::config::{Deployment, KillTarget, Pricing, RoleSelector, ScenarioConfig};
use super::cost::{compute_cost, HostUsage, PriceClass, UsageTrace};
use super::failure::{inject_failures, FailureEvent};
use super::network::transfer_between;
use super::report::{median, BoundReport, JobReport, MetricsReport, NodeFailure, RecoveryEntry, StealStats};
use super::rng::Streams;
use super::trace::{PeriodRow, PlacementRow, ProtocolEvent, Traces};
use super::workload::generate_workload;
use crate::af::{classify_period, next_desire, PeriodRecord, UtilizationMeter};
use crate::coord::{
    elect_primary, inherit_containers, lost_outputs, on_jm_failure, ConsistentStore, InfoUpdate, JmId, JmRole, JmState,
    JmStatus,
};
use crate::error::{Error, Result};
use crate::fairsched::{allocate, reconcile, AllocationPlan, ContainerView};
use crate::model::{
    job_work, ContainerId, DagJob, DcId, JobId, NodeId, Reliability, Share, SimTime, TaskId, TaskState, Topology,
};
use crate::parades::{
    initial_assignment, on_receive_steal, on_update, victim_order, DelayPolicy, JmQueue, Placement, Slot, StealRequest,
    Tier, UpdateOutcome, WaitingTask,
};

/// Host id used for a job manager that runs on its data center's master
/// because no worker container was alive.
const ON_MASTER: ContainerId = ContainerId(u32::MAX);

struct Entry<E> {
    time: SimTime,
    seq: u64,
    ev: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (time, seq)
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Pending events, popped in (time, insertion) order.
pub struct EventQueue<E> {
    heap: BinaryHeap<Entry<E>>,
    seq: u64,
    now: SimTime,
}

impl<E> Default for EventQueue<E> {
    fn default() -> Self {
        EventQueue { heap: BinaryHeap::new(), seq: 0, now: SimTime::ZERO }
    }
}

impl<E> EventQueue<E> {
    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Schedules `ev` at `at`, which must not lie in the past.
    pub fn push(&mut self, at: SimTime, ev: E) {
        assert!(at >= self.now, "event scheduled in the past: {at} < {}", self.now);
        self.seq += 1;
        self.heap.push(Entry { time: at, seq: self.seq, ev });
    }

    pub fn pop(&mut self) -> Option<(SimTime, E)> {
        let e = self.heap.pop()?;
        self.now = e.time;
        Some((e.time, e.ev))
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

/// Claimant in a domain's fair scheduler. External tenants order first,
/// so they win allocation ties against jobs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SubJobKey {
    /// A tenant outside the simulated workload, used for load injection.
    External(u32),
    Job(JobId),
}

impl fmt::Display for SubJobKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubJobKey::Job(j) => write!(f, "{j}"),
            SubJobKey::External(e) => write!(f, "ext{e}"),
        }
    }
}

enum Ev {
    Arrival(usize),
    Boundary,
    Tick,
    Finish { job: usize, task: TaskId, container: ContainerId, attempt: u32 },
    StealAtVictim { job: usize, thief: u16, victim: u16, container: ContainerId, slot: Slot, sent: SimTime, tried: Vec<u16>, token: u64 },
    StealReply { job: usize, thief: u16, victim: u16, container: ContainerId, granted: Vec<WaitingTask>, sent: SimTime, tried: Vec<u16>, token: u64 },
    StoreDeliver { job: usize, dc: DcId, seq: u64 },
    Failure(usize),
    Detected { job: usize, domain: u16 },
    Spawned { job: usize, domain: u16, generation: u32 },
    Restart { job: usize, generation: u32 },
    LoadStart(usize),
    LoadEnd(usize),
}

#[derive(Clone, Debug, Default)]
struct Cont {
    alive: bool,
    running: BTreeSet<TaskId>,
    idle_since: SimTime,
    /// Token of the steal this container is waiting on.
    steal: Option<u64>,
    /// Held by an external tenant, fully used.
    external: bool,
}

struct Domain {
    containers: Vec<ContainerId>,
    plan: AllocationPlan<SubJobKey>,
    externals: BTreeSet<u32>,
}

#[derive(Default)]
struct SubJob {
    queue: JmQueue,
    meter: UtilizationMeter,
    q: u32,
    desire: u32,
    active: bool,
}

struct JobRt {
    job: DagJob,
    arrived: bool,
    done: bool,
    aborted: bool,
    ended_at: Option<SimTime>,
    home: DcId,
    store: ConsistentStore,
    jms: BTreeMap<DcId, JmState>,
    sub: BTreeMap<u16, SubJob>,
    attempts: BTreeMap<TaskId, u32>,
    placements: BTreeMap<TaskId, u32>,
    release_pending: bool,
    restarts: u32,
}

impl JobRt {
    fn terminal(&self) -> bool {
        self.done || self.aborted
    }

    fn live(&self) -> bool {
        self.arrived && !self.terminal()
    }
}

/// What a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub traces: Traces,
    /// Billing input, kept so the same schedule can be repriced.
    pub usage: UsageTrace,
    /// Final state of every job.
    pub jobs: Vec<DagJob>,
}

impl RunOutput {
    /// Writes `metrics.json`, `trace.csv`, `periods.csv` and
    /// `protocol.jsonl` into `dir`, creating it if needed.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })?;
        let path = dir.join("metrics.json");
        let mut text = serde_json::to_string_pretty(&self.report)
            .map_err(|source| Error::Parse { path: path.display().to_string(), source })?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        self.traces.write(dir)
    }
}

/// Runs a scenario to completion (or to `max_time_s`).
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let topo = cfg.build_topology()?;
    let mut rng = Streams::new(cfg.seed);
    let mut specs = cfg.workload.jobs.clone();
    if let Some(g) = &cfg.workload.generated {
        let (sizes, arrivals) = (&mut rng.sizes, &mut rng.arrivals);
        specs.extend(generate_workload(g, topo.datacenters.len() as u16, &cfg.params, sizes, arrivals));
    }
    let mut jobs = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let job = spec.instantiate(JobId(i as u32), &topo)?;
        job.admit(&cfg.params, Share::FULL)?;
        jobs.push(job);
    }
    let horizon = SimTime::from_secs_f64(cfg.failures.horizon_s.unwrap_or(cfg.max_time_s));
    let failures = inject_failures(&cfg.failures, &topo, horizon, &mut rng.failures);
    log::debug!("seed {} {}: {} jobs, {} failure events", cfg.seed, cfg.deployment.name(), jobs.len(), failures.len());
    let out = Sim::new(cfg, topo, rng, jobs, failures).run();
    log::info!(
        "seed {} {}: {} done, {} aborted, makespan {:.3} s after {} events",
        cfg.seed,
        cfg.deployment.name(),
        out.report.jobs_completed,
        out.report.jobs_aborted,
        out.report.makespan_s,
        out.report.events
    );
    Ok(out)
}

/// Runs one of the comparison deployments.
pub fn run_baseline(cfg: &ScenarioConfig) -> Result<RunOutput> {
    if cfg.deployment == Deployment::Houtu {
        return Err(Error::Config("run_baseline needs a baseline deployment".into()));
    }
    run(cfg)
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    topo: Topology,
    policy: DelayPolicy,
    rng: Streams,
    events: EventQueue<Ev>,
    conts: Vec<Cont>,
    domains: Vec<Domain>,
    jobs: Vec<JobRt>,
    failures: Vec<FailureEvent>,
    node_death: BTreeMap<NodeId, SimTime>,
    node_failures: Vec<NodeFailure>,
    ext_next: u32,
    load_keys: BTreeMap<usize, Vec<(usize, u32)>>,
    traces: Traces,
    cross_dc_bytes: u64,
    steals: StealStats,
    rtt_total_ms: u64,
    rtt_count: u64,
    recovery: Vec<RecoveryEntry>,
    steal_token: u64,
    processed: u64,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, topo: Topology, rng: Streams, jobs: Vec<DagJob>, failures: Vec<FailureEvent>) -> Self {
        let centralized = cfg.deployment.is_centralized();
        let policy = match cfg.deployment {
            Deployment::CentStat => DelayPolicy::Fixed {
                rack: SimTime::from_secs_f64(cfg.fixed_delay.rack_s),
                any: SimTime::from_secs_f64(cfg.fixed_delay.any_s),
            },
            _ => DelayPolicy::Parameterized(cfg.params.clone()),
        };
        let domains: Vec<Domain> = if centralized {
            vec![Domain {
                containers: topo.containers.iter().map(|c| c.id).collect(),
                plan: AllocationPlan::default(),
                externals: BTreeSet::new(),
            }]
        } else {
            topo.datacenters
                .iter()
                .map(|d| Domain { containers: d.containers.clone(), plan: AllocationPlan::default(), externals: BTreeSet::new() })
                .collect()
        };
        let conts = vec![Cont { alive: true, ..Default::default() }; topo.containers.len()];
        let jobs = jobs
            .into_iter()
            .map(|job| JobRt {
                store: ConsistentStore::new(job.id, []),
                job,
                arrived: false,
                done: false,
                aborted: false,
                ended_at: None,
                home: DcId(0),
                jms: BTreeMap::new(),
                sub: BTreeMap::new(),
                attempts: BTreeMap::new(),
                placements: BTreeMap::new(),
                release_pending: false,
                restarts: 0,
            })
            .collect();
        Sim {
            cfg,
            topo,
            policy,
            rng,
            events: EventQueue::default(),
            conts,
            domains,
            jobs,
            failures,
            node_death: BTreeMap::new(),
            node_failures: Vec::new(),
            ext_next: 0,
            load_keys: BTreeMap::new(),
            traces: Traces::default(),
            cross_dc_bytes: 0,
            steals: StealStats::default(),
            rtt_total_ms: 0,
            rtt_count: 0,
            recovery: Vec::new(),
            steal_token: 0,
            processed: 0,
        }
    }

    fn now(&self) -> SimTime {
        self.events.now()
    }

    fn centralized(&self) -> bool {
        self.cfg.deployment.is_centralized()
    }

    fn domain_of_dc(&self, dc: DcId) -> usize {
        if self.centralized() {
            0
        } else {
            dc.index()
        }
    }

    fn domain_of(&self, c: ContainerId) -> usize {
        self.domain_of_dc(self.topo.container(c).dc)
    }

    fn capacity(&self, d: usize) -> u32 {
        self.domains[d].containers.iter().filter(|c| self.conts[c.index()].alive).count() as u32
    }

    fn jm_alive(&self, j: usize, d: usize) -> bool {
        self.jobs[j].jms.get(&DcId(d as u16)).is_some_and(JmState::is_alive)
    }

    fn primary_alive(&self, j: usize) -> bool {
        self.jobs[j].jms.values().any(|m| m.is_alive() && m.role == JmRole::Primary)
    }

    fn primary_dc(&self, j: usize) -> Option<DcId> {
        self.jobs[j].jms.values().find(|m| m.is_alive() && m.role == JmRole::Primary).map(|m| m.id.dc)
    }

    fn jm_label(&self, j: usize, d: usize) -> String {
        self.jobs[j].jms.get(&DcId(d as u16)).map_or_else(|| format!("dc{d}"), |m| m.id.to_string())
    }

    fn work_remains(&self) -> bool {
        self.jobs.iter().any(|j| !j.terminal())
    }

    fn log(&mut self, job: Option<usize>, event: &str, actor: String, payload: serde_json::Value) {
        let time = self.now().to_string();
        self.traces.protocol.push(ProtocolEvent { time, job: job.map(|j| j as u32), event: event.into(), actor, payload });
    }

    fn store_append(&mut self, j: usize, update: InfoUpdate) {
        let seq = self.jobs[j].store.append(update.clone());
        let now = self.now();
        let replicas: Vec<DcId> = self.jobs[j].sub.keys().map(|d| DcId(*d)).collect();
        for dc in replicas {
            let delay = self.cfg.delays.store.sample(&mut self.rng.store);
            self.events.push(now + delay, Ev::StoreDeliver { job: j, dc, seq });
        }
        self.log(Some(j), "append", "store".into(), json!({ "seq": seq, "update": update }));
    }

    fn pick_host(&self, dc: DcId, j: usize) -> ContainerId {
        let live: Vec<ContainerId> =
            self.topo.dc(dc).containers.iter().copied().filter(|c| self.conts[c.index()].alive).collect();
        if live.is_empty() {
            ON_MASTER
        } else {
            live[j % live.len()]
        }
    }

    fn held(&self, d: usize, key: SubJobKey) -> Vec<ContainerId> {
        self.domains[d].plan.held.get(&key).map(|s| s.iter().copied().collect()).unwrap_or_default()
    }

    fn unfinished_owned(&self, j: usize, d: usize) -> bool {
        let rt = &self.jobs[j];
        rt.store
            .committed()
            .owned_by(DcId(d as u16))
            .any(|t| matches!(rt.job.task(t).state, TaskState::Waiting | TaskState::Running(_)))
    }

    fn preferred(&self, d: usize) -> BTreeMap<SubJobKey, BTreeSet<NodeId>> {
        let mut out = BTreeMap::new();
        for key in self.domains[d].plan.targets.keys() {
            if let SubJobKey::Job(id) = key {
                if let Some(sub) = self.jobs[id.0 as usize].sub.get(&(d as u16)) {
                    let nodes: BTreeSet<NodeId> =
                        sub.queue.waiting.values().flat_map(|t| t.preferred_nodes.iter().copied()).collect();
                    out.insert(*key, nodes);
                }
            }
        }
        out
    }

    // ---- container ownership ----

    fn dispense(&mut self, d: usize) {
        let mut pool: BTreeSet<(ContainerId, NodeId)> = self.domains[d]
            .containers
            .iter()
            .filter(|c| self.conts[c.index()].alive && self.domains[d].plan.owner_of(**c).is_none())
            .map(|c| (*c, self.topo.container(*c).node))
            .collect();
        if pool.is_empty() {
            return;
        }
        let pref = self.preferred(d);
        let before = self.domains[d].plan.granted.len();
        self.domains[d].plan.dispense(&mut pool, &pref);
        let new: Vec<(SubJobKey, ContainerId)> = self.domains[d].plan.granted[before..].to_vec();
        for (k, c) in &new {
            self.note_grant(*k, *c);
        }
        for (k, c) in new {
            if matches!(k, SubJobKey::Job(_)) {
                self.update(c, true);
            }
        }
    }

    fn note_grant(&mut self, key: SubJobKey, c: ContainerId) {
        match key {
            SubJobKey::External(_) => self.conts[c.index()].external = true,
            SubJobKey::Job(id) => {
                let j = id.0 as usize;
                let d = self.domain_of(c);
                let jm = self.jobs[j].jms.get(&DcId(d as u16)).map(|m| m.id);
                self.store_append(j, InfoUpdate::ExecutorChange { container: c, owner: jm });
            }
        }
    }

    fn note_release(&mut self, key: SubJobKey, c: ContainerId) {
        match key {
            SubJobKey::External(_) => self.conts[c.index()].external = false,
            SubJobKey::Job(id) => {
                let j = id.0 as usize;
                if !self.jobs[j].terminal() {
                    self.store_append(j, InfoUpdate::ExecutorChange { container: c, owner: None });
                }
            }
        }
    }

    fn activate(&mut self, j: usize, d: usize) {
        let cap = self.capacity(d).max(1);
        let af = self.cfg.deployment.uses_af();
        let sub = self.jobs[j].sub.get_mut(&(d as u16)).expect("sub-job exists");
        if sub.active {
            return;
        }
        sub.active = true;
        if sub.q == 0 {
            sub.q = 1;
            sub.desire = if af { 1 } else { cap };
        }
        let target = sub.desire.min(cap);
        self.domains[d].plan.targets.insert(SubJobKey::Job(JobId(j as u32)), target);
        self.dispense(d);
    }

    /// An Af sub-job with nothing left to run gives its containers back.
    fn maybe_retire(&mut self, j: usize, d: usize) {
        if !self.cfg.deployment.uses_af() || self.jobs[j].terminal() {
            return;
        }
        let Some(sub) = self.jobs[j].sub.get(&(d as u16)) else { return };
        if !sub.active || !self.jm_alive(j, d) || self.unfinished_owned(j, d) {
            return;
        }
        let key = SubJobKey::Job(JobId(j as u32));
        let held = self.held(d, key);
        if held.iter().any(|c| {
            let s = &self.conts[c.index()];
            s.steal.is_some() || !s.running.is_empty()
        }) {
            return;
        }
        self.domains[d].plan.remove(&key);
        for c in held {
            self.note_release(key, c);
        }
        self.jobs[j].sub.get_mut(&(d as u16)).unwrap().active = false;
        self.dispense(d);
    }

    // ---- scheduling ----

    fn update(&mut self, c: ContainerId, may_steal: bool) {
        let ci = c.index();
        if !self.conts[ci].alive || self.conts[ci].steal.is_some() {
            return;
        }
        let d = self.domain_of(c);
        let Some(SubJobKey::Job(id)) = self.domains[d].plan.owner_of(c) else { return };
        let j = id.0 as usize;
        if self.jobs[j].terminal() || !self.jm_alive(j, d) {
            return;
        }
        let key = SubJobKey::Job(id);
        if self.domains[d].plan.is_draining(&key) {
            if !self.conts[ci].running.is_empty() {
                return;
            }
            if self.domains[d].plan.on_idle(key, c) {
                self.note_release(key, c);
                self.dispense(d);
                return;
            }
        }
        let free = self.topo.container(c).free;
        if free.is_zero() {
            return;
        }
        let mut slot = Slot::of(&self.topo, c, free);
        let now = self.now();
        let sub = self.jobs[j].sub.get_mut(&(d as u16)).unwrap();
        match on_update(&mut sub.queue, &mut slot, &self.topo, &self.policy, now) {
            UpdateOutcome::Placed(list) => {
                for (pl, _) in list {
                    self.start_task(j, d, pl);
                }
            }
            UpdateOutcome::NoWaitingTasks => {
                if may_steal && self.cfg.stealing && !self.centralized() {
                    self.send_steal(j, d, c, Vec::new());
                } else {
                    self.maybe_retire(j, d);
                }
            }
        }
    }

    fn start_task(&mut self, j: usize, d: usize, pl: Placement) {
        let c = pl.container;
        let node = self.topo.container(c).node;
        let dc = self.topo.container(c).dc;
        let placed = self.topo.container_mut(c).place(pl.r);
        assert!(placed, "{} does not fit on {c}", pl.task);
        self.conts[c.index()].running.insert(pl.task);
        let rt = &mut self.jobs[j];
        let task = rt.job.task_mut(pl.task);
        debug_assert!(task.state.can_advance_to(&TaskState::Running(c)), "{} from {:?}", pl.task, task.state);
        task.state = TaskState::Running(c);
        task.wait = pl.wait;
        let inputs = task.inputs.clone();
        let attempt = {
            let a = rt.attempts.entry(pl.task).or_default();
            *a += 1;
            *a
        };
        *rt.placements.entry(pl.task).or_default() += 1;
        let resample = SimTime::from_secs_f64(self.cfg.resample_s);
        let mut fetch = SimTime::ZERO;
        for inp in inputs {
            if inp.node == node {
                continue;
            }
            if self.topo.dc_of_node(inp.node) != dc {
                self.cross_dc_bytes += inp.bytes;
            }
            let t = transfer_between(&self.topo, inp.node, node, inp.bytes, resample, &mut self.rng.bandwidth);
            fetch += t;
        }
        let now = self.now();
        self.events.push(now + fetch + pl.p, Ev::Finish { job: j, task: pl.task, container: c, attempt });
        if pl.tier == Tier::Stolen {
            self.steals.stolen_placements += 1;
        }
        let jm = self.jm_label(j, d);
        self.traces.placements.push(PlacementRow {
            time: now.to_string(),
            job: j as u32,
            task: pl.task.to_string(),
            jm,
            container: c.0,
            tier: pl.tier,
            wait: pl.wait.to_string(),
            r: pl.r.to_string(),
            p: pl.p.to_string(),
            free_before: pl.free_before.to_string(),
        });
    }

    fn send_steal(&mut self, j: usize, d: usize, c: ContainerId, mut tried: Vec<u16>) {
        let backlogs: BTreeMap<DcId, usize> = self.jobs[j]
            .sub
            .iter()
            .filter(|(k, _)| !tried.contains(k))
            .map(|(k, s)| (DcId(*k), s.queue.len()))
            .collect();
        let Some(victim) = victim_order(&backlogs, DcId(d as u16)).first().copied() else {
            self.conts[c.index()].steal = None;
            self.maybe_retire(j, d);
            return;
        };
        self.steal_token += 1;
        let token = self.steal_token;
        self.conts[c.index()].steal = Some(token);
        let slot = Slot::of(&self.topo, c, self.topo.container(c).free);
        let now = self.now();
        let delay = self.cfg.delays.steal.sample(&mut self.rng.steal);
        self.steals.requests += 1;
        tried.push(victim.0);
        let actor = self.jm_label(j, d);
        self.log(Some(j), "steal_request", actor, json!({ "thief": d, "victim": victim.0, "container": c.0, "free": slot.free.0 }));
        self.events.push(
            now + delay,
            Ev::StealAtVictim { job: j, thief: d as u16, victim: victim.0, container: c, slot, sent: now, tried, token },
        );
    }

    #[allow(clippy::too_many_arguments)]
    fn on_steal_at_victim(&mut self, j: usize, thief: u16, victim: u16, c: ContainerId, slot: Slot, sent: SimTime, tried: Vec<u16>, token: u64) {
        let now = self.now();
        let available = !self.jobs[j].terminal() && self.jm_alive(j, victim as usize);
        let req = StealRequest { thief: DcId(thief), victim: DcId(victim), slot };
        let granted = match self.jobs[j].sub.get_mut(&victim) {
            Some(sub) => on_receive_steal(&mut sub.queue, &req, available, &self.topo, &self.policy, now).granted,
            None => Vec::new(),
        };
        for t in &granted {
            self.store_append(j, InfoUpdate::TaskReassigned { task: t.id, from: DcId(victim), to: DcId(thief) });
        }
        let ids: Vec<String> = granted.iter().map(|t| t.id.to_string()).collect();
        let actor = self.jm_label(j, victim as usize);
        self.log(Some(j), "steal_reply", actor, json!({ "thief": thief, "victim": victim, "container": c.0, "granted": ids }));
        if !self.jobs[j].terminal() {
            self.maybe_retire(j, victim as usize);
        }
        let delay = self.cfg.delays.steal.sample(&mut self.rng.steal);
        self.events.push(now + delay, Ev::StealReply { job: j, thief, victim, container: c, granted, sent, tried, token });
    }

    #[allow(clippy::too_many_arguments)]
    fn on_steal_reply(&mut self, j: usize, thief: u16, victim: u16, c: ContainerId, granted: Vec<WaitingTask>, sent: SimTime, tried: Vec<u16>, token: u64) {
        let now = self.now();
        let actor = self.jm_label(j, thief as usize);
        self.log(Some(j), "steal_received", actor, json!({ "victim": victim, "container": c.0, "tasks": granted.len() }));
        let ci = c.index();
        let current = self.conts[ci].steal == Some(token);
        if current {
            self.conts[ci].steal = None;
            self.rtt_total_ms += (now - sent).as_millis();
            self.rtt_count += 1;
        }
        if self.jobs[j].terminal() {
            return;
        }
        let d = thief as usize;
        let key = SubJobKey::Job(JobId(j as u32));
        // keep only tasks this data center still owns and that are still waiting
        let granted: Vec<WaitingTask> = granted
            .into_iter()
            .filter(|t| {
                self.jobs[j].job.task(t.id).state == TaskState::Waiting
                    && self.jobs[j].store.committed().task_map.get(&t.id) == Some(&DcId(thief))
            })
            .collect();
        if granted.is_empty() {
            if current && self.domains[d].plan.owner_of(c) == Some(key) && self.conts[ci].alive {
                self.send_steal(j, d, c, tried);
            } else {
                self.maybe_retire(j, d);
            }
            return;
        }
        self.steals.nonempty_replies += 1;
        self.steals.tasks_stolen += granted.len() as u32;
        let ids: Vec<TaskId> = granted.iter().map(|t| t.id).collect();
        let sub = self.jobs[j].sub.get_mut(&thief).unwrap();
        for t in granted {
            sub.queue.push(t, now);
        }
        let usable = current
            && self.conts[ci].alive
            && self.domains[d].plan.owner_of(c) == Some(key)
            && !self.domains[d].plan.is_draining(&key)
            && self.jm_alive(j, d);
        if usable {
            self.jobs[j].sub.get_mut(&thief).unwrap().queue.accrue(now);
            for id in ids {
                let free = self.topo.container(c).free;
                let sub = self.jobs[j].sub.get_mut(&thief).unwrap();
                if sub.queue.waiting.get(&id).is_some_and(|t| t.r <= free) {
                    let t = sub.queue.remove(&id).unwrap();
                    let pl = Placement { task: id, container: c, tier: Tier::Stolen, wait: t.wait, r: t.r, p: t.p, free_before: free };
                    self.start_task(j, d, pl);
                }
            }
            self.update(c, true);
        }
        self.activate(j, d);
    }

    /// The primary releases every stage whose predecessors are done and
    /// splits the new tasks across data centers.
    fn release_stages(&mut self, j: usize) {
        if self.jobs[j].terminal() {
            return;
        }
        if !self.primary_alive(j) {
            self.jobs[j].release_pending = true;
            return;
        }
        self.jobs[j].release_pending = false;
        let now = self.now();
        let released = self.jobs[j].job.release_ready_tasks(now);
        if released.is_empty() {
            return;
        }
        let mut owners: BTreeMap<TaskId, DcId> = BTreeMap::new();
        if self.centralized() {
            owners.extend(released.iter().map(|t| (*t, DcId(0))));
        } else {
            let home = self.primary_dc(j).expect("primary alive");
            // input bytes per DC for each released task, grouped by stage
            type ByDc = Vec<(TaskId, BTreeMap<DcId, u64>)>;
            let mut by_stage: BTreeMap<u32, ByDc> = BTreeMap::new();
            for id in &released {
                let mut per_dc = BTreeMap::new();
                for inp in &self.jobs[j].job.task(*id).inputs {
                    *per_dc.entry(self.topo.dc_of_node(inp.node)).or_insert(0u64) += inp.bytes.max(1);
                }
                by_stage.entry(id.stage).or_default().push((*id, per_dc));
            }
            for tasks in by_stage.values() {
                owners.extend(initial_assignment(tasks, home));
            }
        }
        let mut touched = BTreeSet::new();
        for (id, owner) in &owners {
            self.store_append(j, InfoUpdate::TaskAssigned { task: *id, owner: *owner });
            let t = self.jobs[j].job.task(*id);
            let wt = WaitingTask { id: *id, r: t.r, p: t.p, preferred_nodes: t.preferred_nodes.clone(), wait: SimTime::ZERO, entered: now };
            self.jobs[j].sub.get_mut(&owner.0).expect("owner sub-job").queue.push(wt, now);
            touched.insert(owner.0 as usize);
        }
        let frontier: BTreeSet<u32> = self.jobs[j]
            .job
            .stages
            .iter()
            .filter(|s| s.tasks.iter().any(|t| matches!(t.state, TaskState::Waiting | TaskState::Running(_))))
            .map(|s| s.id)
            .collect();
        self.store_append(j, InfoUpdate::StageFrontier { stages: frontier });
        let key = SubJobKey::Job(JobId(j as u32));
        for d in touched {
            self.activate(j, d);
            for c in self.held(d, key) {
                self.update(c, false);
            }
        }
    }

    fn on_finish(&mut self, j: usize, task: TaskId, c: ContainerId, attempt: u32) {
        let rt = &self.jobs[j];
        if rt.terminal() || rt.attempts.get(&task) != Some(&attempt) || rt.job.task(task).state != TaskState::Running(c) {
            return;
        }
        let now = self.now();
        let r = rt.job.task(task).r;
        self.topo.container_mut(c).release(r);
        let cs = &mut self.conts[c.index()];
        cs.running.remove(&task);
        if cs.running.is_empty() {
            cs.idle_since = now;
        }
        let node = self.topo.container(c).node;
        self.jobs[j].job.task_mut(task).state = TaskState::Done(node);
        self.store_append(j, InfoUpdate::PartitionDone { task, node });
        let owner = self.jobs[j].store.committed().task_map.get(&task).map(|d| d.index());
        self.release_stages(j);
        if self.jobs[j].job.is_complete() {
            self.complete_job(j);
            return;
        }
        self.update(c, true);
        if let Some(d) = owner {
            self.maybe_retire(j, d);
        }
    }

    fn complete_job(&mut self, j: usize) {
        let now = self.now();
        self.jobs[j].done = true;
        self.jobs[j].ended_at = Some(now);
        self.jobs[j].job.completion = Some(now);
        let name = self.jobs[j].job.name.clone();
        self.log(Some(j), "job_complete", format!("j{j}"), json!({ "name": name }));
        self.free_job(j);
    }

    fn abort_job(&mut self, j: usize) {
        let now = self.now();
        self.jobs[j].aborted = true;
        self.jobs[j].ended_at = Some(now);
        self.kill_running(j);
        self.log(Some(j), "job_abort", format!("j{j}"), json!({}));
        self.free_job(j);
    }

    fn kill_running(&mut self, j: usize) {
        let now = self.now();
        let running: Vec<(TaskId, ContainerId, Share)> = self.jobs[j]
            .job
            .tasks()
            .filter_map(|t| match t.state {
                TaskState::Running(c) => Some((t.id, c, t.r)),
                _ => None,
            })
            .collect();
        for (id, c, r) in running {
            let cs = &mut self.conts[c.index()];
            if cs.running.remove(&id) {
                self.topo.container_mut(c).release(r);
                if cs.running.is_empty() {
                    cs.idle_since = now;
                }
            }
            *self.jobs[j].attempts.entry(id).or_default() += 1;
            self.jobs[j].job.task_mut(id).state = TaskState::Unreleased;
        }
    }

    fn free_job(&mut self, j: usize) {
        let key = SubJobKey::Job(JobId(j as u32));
        let doms: Vec<usize> = self.jobs[j].sub.keys().map(|d| *d as usize).collect();
        for d in doms {
            let held = self.domains[d].plan.remove(&key);
            for c in held {
                self.conts[c.index()].steal = None;
                self.note_release(key, c);
            }
            if let Some(sub) = self.jobs[j].sub.get_mut(&(d as u16)) {
                sub.active = false;
                sub.queue.waiting.clear();
            }
            self.dispense(d);
        }
    }

    // ---- periods ----

    fn on_tick(&mut self) {
        let now = self.now();
        let mut revive = Vec::new();
        for j in 0..self.jobs.len() {
            if !self.jobs[j].live() {
                continue;
            }
            let key = SubJobKey::Job(JobId(j as u32));
            let doms: Vec<u16> = self.jobs[j].sub.keys().copied().collect();
            for d in doms {
                let du = d as usize;
                if !self.jobs[j].sub[&d].active {
                    continue;
                }
                let held = self.held(du, key);
                let used: Vec<f64> = held.iter().map(|c| self.topo.container(*c).used().as_fraction()).collect();
                let sub = self.jobs[j].sub.get_mut(&d).unwrap();
                let waiting = !sub.queue.is_empty();
                sub.meter.sample_tick(used, waiting);
                if waiting && self.jm_alive(j, du) {
                    revive.extend(held.into_iter().filter(|c| {
                        !self.topo.container(*c).free.is_zero() && self.conts[c.index()].steal.is_none()
                    }));
                }
            }
        }
        for c in revive {
            self.update(c, false);
        }
        if self.work_remains() {
            self.events.push(now + SimTime::from_secs(1), Ev::Tick);
        }
    }

    fn on_boundary(&mut self) {
        let now = self.now();
        let params = self.cfg.params.clone();
        let af = self.cfg.deployment.uses_af();
        for d in 0..self.domains.len() {
            let cap = self.capacity(d);
            let mut desires: BTreeMap<SubJobKey, u32> = BTreeMap::new();
            let mut rows: Vec<(SubJobKey, PeriodRow)> = Vec::new();
            for j in 0..self.jobs.len() {
                if !self.jobs[j].live() {
                    continue;
                }
                let key = SubJobKey::Job(JobId(j as u32));
                let alive = self.jm_alive(j, d);
                let target = self.domains[d].plan.targets.get(&key).copied().unwrap_or(0);
                let Some(sub) = self.jobs[j].sub.get_mut(&(d as u16)) else { continue };
                if !sub.active {
                    continue;
                }
                if !alive {
                    // nobody to compute a new desire; keep the current one
                    sub.meter = UtilizationMeter::default();
                    desires.insert(key, sub.desire.clamp(1, cap.max(1)));
                    continue;
                }
                let (u, w) = sub.meter.finish();
                let rec = PeriodRecord { q: sub.q, desire: sub.desire, allocation: target, utilization: u, had_waiting_tasks: w };
                let class = classify_period(&rec, params.delta);
                let next = if af { next_desire(Some(&rec), &params, cap.max(1)) } else { cap.max(1) };
                rows.push((
                    key,
                    PeriodRow {
                        time: now.to_string(),
                        dc: d as u16,
                        subjob: key.to_string(),
                        q: rec.q,
                        desire: rec.desire,
                        allocation: rec.allocation,
                        utilization: format!("{u:.4}"),
                        class: class.to_string(),
                        granted: 0,
                        reclaimed: 0,
                    },
                ));
                sub.q += 1;
                sub.desire = next;
                desires.insert(key, next);
            }
            for e in &self.domains[d].externals {
                desires.insert(SubJobKey::External(*e), cap.max(1));
            }
            let alloc = allocate(&desires, cap);
            let views: Vec<ContainerView<SubJobKey>> = self.domains[d]
                .containers
                .iter()
                .filter(|c| self.conts[c.index()].alive)
                .map(|c| {
                    let s = &self.conts[c.index()];
                    ContainerView {
                        id: *c,
                        node: self.topo.container(*c).node,
                        owner: self.domains[d].plan.owner_of(*c),
                        busy: !s.running.is_empty() || s.steal.is_some(),
                        idle_since: s.idle_since,
                    }
                })
                .collect();
            let pref = self.preferred(d);
            let plan = reconcile(&self.domains[d].plan, &alloc, &views, &pref);
            let reclaimed = plan.reclaimed.clone();
            let granted = plan.granted.clone();
            self.domains[d].plan = plan;
            for (k, c) in &reclaimed {
                self.note_release(*k, *c);
            }
            for (k, c) in &granted {
                self.note_grant(*k, *c);
            }
            for (k, row) in &mut rows {
                row.granted = granted.iter().filter(|(g, _)| g == k).count() as u32;
                row.reclaimed = reclaimed.iter().filter(|(g, _)| g == k).count() as u32;
            }
            for e in &self.domains[d].externals {
                let k = SubJobKey::External(*e);
                rows.push((
                    k,
                    PeriodRow {
                        time: now.to_string(),
                        dc: d as u16,
                        subjob: k.to_string(),
                        q: self.domains[d].plan.q,
                        desire: cap.max(1),
                        allocation: alloc.get(&k).copied().unwrap_or(0),
                        utilization: "1.0000".into(),
                        class: "external".into(),
                        granted: granted.iter().filter(|(g, _)| *g == k).count() as u32,
                        reclaimed: reclaimed.iter().filter(|(g, _)| *g == k).count() as u32,
                    },
                ));
            }
            self.traces.periods.extend(rows.into_iter().map(|(_, r)| r));
            let mut sweep: Vec<ContainerId> = self.domains[d]
                .plan
                .held
                .iter()
                .filter(|(k, _)| matches!(k, SubJobKey::Job(_)))
                .flat_map(|(_, s)| s.iter().copied())
                .collect();
            sweep.sort();
            for c in sweep {
                self.update(c, true);
            }
            // containers freed by retirements during the sweep
            self.dispense(d);
        }
        if self.work_remains() {
            self.events.push(now + params.period, Ev::Boundary);
        }
    }

    // ---- arrivals and failures ----

    fn on_arrival(&mut self, j: usize) {
        let k = self.topo.datacenters.len();
        self.jobs[j].arrived = true;
        let home = (0..k)
            .map(|i| DcId(((j + i) % k) as u16))
            .find(|dc| self.topo.dc(*dc).containers.iter().any(|c| self.conts[c.index()].alive));
        let doms: Vec<u16> = if self.centralized() { vec![0] } else { (0..k as u16).collect() };
        self.jobs[j].store = ConsistentStore::new(self.jobs[j].job.id, doms.iter().map(|d| DcId(*d)));
        for d in &doms {
            self.jobs[j].sub.insert(*d, SubJob::default());
        }
        let name = self.jobs[j].job.name.clone();
        self.log(Some(j), "job_arrival", format!("j{j}"), json!({ "name": name }));
        let Some(home) = home else {
            self.abort_job(j);
            return;
        };
        self.jobs[j].home = home;
        for d in &doms {
            let (dc_for_host, role) = if self.centralized() {
                (home, JmRole::Primary)
            } else {
                (DcId(*d), if DcId(*d) == home { JmRole::Primary } else { JmRole::SemiActive })
            };
            let host = self.pick_host(dc_for_host, j);
            let st = JmState { id: JmId { dc: DcId(*d), generation: 0 }, role, status: JmStatus::Alive, host };
            self.jobs[j].jms.insert(DcId(*d), st.clone());
            self.store_append(j, InfoUpdate::RoleChange { jm: st.id, role: Some(role) });
        }
        if !self.cfg.deployment.uses_af() {
            for d in &doms {
                self.activate(j, *d as usize);
            }
        }
        self.release_stages(j);
    }

    fn resolve_jm(&self, job: u32, role: RoleSelector, dc: Option<u16>) -> Option<(usize, usize)> {
        let j = job as usize;
        let rt = self.jobs.get(j)?;
        if !rt.live() {
            return None;
        }
        if self.centralized() {
            // the lone manager stands in for every role
            return rt.jms.values().find(|m| m.is_alive()).map(|m| (j, m.id.dc.index()));
        }
        let pick = rt.jms.values().filter(|m| m.is_alive()).find(|m| match role {
            RoleSelector::Primary => m.role == JmRole::Primary,
            RoleSelector::SemiActive => m.role == JmRole::SemiActive && dc.is_none_or(|x| m.id.dc == DcId(x)),
        })?;
        Some((j, pick.id.dc.index()))
    }

    fn on_failure(&mut self, i: usize) {
        let ev = self.failures[i].clone();
        match ev.target {
            KillTarget::Node { node } => {
                if (node as usize) < self.topo.nodes.len() {
                    self.kill_node(NodeId(node));
                }
            }
            KillTarget::JmHost { job, role, dc } | KillTarget::JmProcess { job, role, dc } => {
                let host_kill = matches!(ev.target, KillTarget::JmHost { .. });
                match self.resolve_jm(job, role, dc) {
                    Some((j, d)) => {
                        let host = self.jobs[j].jms[&DcId(d as u16)].host;
                        if host_kill && host != ON_MASTER {
                            let node = self.topo.container(host).node;
                            self.kill_node(node);
                        } else {
                            self.jm_fail(j, d);
                        }
                    }
                    None => {
                        let payload = serde_json::to_value(&ev.target).unwrap_or_default();
                        self.log(Some(job as usize), "failure_skipped", "injector".into(), payload);
                    }
                }
            }
        }
    }

    fn kill_node(&mut self, n: NodeId) {
        if self.node_death.contains_key(&n) {
            return;
        }
        let now = self.now();
        self.node_death.insert(n, now);
        self.log(None, "node_killed", format!("{n}"), json!({ "node": n.0 }));
        let cs = self.topo.node(n).containers.clone();
        let mut victims = Vec::new();
        for (j, rt) in self.jobs.iter().enumerate() {
            if !rt.live() {
                continue;
            }
            for (d, m) in &rt.jms {
                if m.is_alive() && cs.contains(&m.host) {
                    victims.push((j, d.index()));
                }
            }
        }
        let mut lost_running: BTreeMap<usize, Vec<TaskId>> = BTreeMap::new();
        let mut touched = BTreeSet::new();
        for c in &cs {
            let d = self.domain_of(*c);
            touched.insert(d);
            let owner = self.domains[d].plan.owner_of(*c);
            self.domains[d].plan.forget(*c);
            if let Some(k) = owner {
                self.note_release(k, *c);
            }
            let st = &mut self.conts[c.index()];
            st.alive = false;
            st.steal = None;
            st.external = false;
            for t in std::mem::take(&mut st.running) {
                lost_running.entry(t.job.0 as usize).or_default().push(t);
            }
            let cap = self.topo.container(*c).capacity;
            self.topo.container_mut(*c).free = cap;
        }
        for (j, d) in victims {
            self.jm_fail(j, d);
        }
        let mut record = NodeFailure { node: n.0, at_s: now.as_secs_f64(), reexecuted: Vec::new() };
        for j in 0..self.jobs.len() {
            if !self.jobs[j].live() {
                continue;
            }
            let lost = lost_running.remove(&j).unwrap_or_default();
            let redo = self.rollback(j, lost, n);
            record.reexecuted.extend(redo.iter().map(|t| t.to_string()));
        }
        self.node_failures.push(record);
        for d in touched {
            self.dispense(d);
        }
    }

    /// Rolls back what `n`'s death destroyed for job `j`: tasks running
    /// there, plus the lineage closure of lost outputs that something still
    /// needs. Returns the tasks that will run again.
    fn rollback(&mut self, j: usize, lost_running: Vec<TaskId>, n: NodeId) -> BTreeSet<TaskId> {
        let dead: BTreeSet<NodeId> = self.node_death.keys().copied().collect();
        let job = &self.jobs[j].job;
        let lost: BTreeSet<TaskId> = lost_outputs(self.jobs[j].store.committed(), &dead)
            .into_iter()
            .filter(|t| matches!(job.task(*t).state, TaskState::Done(x) if dead.contains(&x)))
            .collect();
        let mut redo: BTreeSet<TaskId> = lost_running.iter().copied().collect();
        loop {
            let needed: Vec<TaskId> = lost
                .iter()
                .filter(|t| !redo.contains(t))
                .filter(|t| {
                    let consumers = job.consumers(**t);
                    // running consumers read their inputs when they started
                    consumers.is_empty()
                        || consumers.iter().any(|c| {
                            redo.contains(c) || matches!(job.task(*c).state, TaskState::Unreleased | TaskState::Waiting)
                        })
                })
                .copied()
                .collect();
            if needed.is_empty() {
                break;
            }
            redo.extend(needed);
        }
        for t in lost_running {
            *self.jobs[j].attempts.entry(t).or_default() += 1;
            let task = self.jobs[j].job.task_mut(t);
            task.state = TaskState::Unreleased;
            task.wait = SimTime::ZERO;
        }
        for t in lost.intersection(&redo) {
            self.jobs[j].job.task_mut(*t).state = TaskState::Unreleased;
            self.store_append(j, InfoUpdate::PartitionLost { task: *t });
        }
        if redo.is_empty() {
            return redo;
        }
        // waiting tasks whose inputs are gone go back to unreleased
        let job = &self.jobs[j].job;
        let blocked: Vec<TaskId> = job
            .stages
            .iter()
            .filter(|s| s.predecessors.iter().any(|p| !job.stages[*p as usize].is_done()))
            .flat_map(|s| s.tasks.iter().filter(|t| t.state == TaskState::Waiting).map(|t| t.id))
            .collect();
        for t in blocked {
            for sub in self.jobs[j].sub.values_mut() {
                sub.queue.remove(&t);
            }
            self.jobs[j].job.task_mut(t).state = TaskState::Unreleased;
        }
        let ids: Vec<String> = redo.iter().map(|t| t.to_string()).collect();
        self.log(Some(j), "rollback", format!("{n}"), json!({ "tasks": ids }));
        self.release_stages(j);
        let doms: Vec<usize> = self.jobs[j].sub.keys().map(|d| *d as usize).collect();
        for d in doms {
            self.maybe_retire(j, d);
        }
        redo
    }

    fn jm_fail(&mut self, j: usize, d: usize) {
        let now = self.now();
        let Some(m) = self.jobs[j].jms.get_mut(&DcId(d as u16)) else { return };
        if !m.is_alive() {
            return;
        }
        m.status = JmStatus::Failed;
        let role = if m.role == JmRole::Primary { "primary" } else { "semi-active" };
        let label = m.id.to_string();
        self.log(Some(j), "jm_failed", label, json!({ "dc": d, "role": role }));
        self.recovery.push(RecoveryEntry {
            job: j as u32,
            dc: d as u16,
            role: role.into(),
            failed_at_s: now.as_secs_f64(),
            detected_at_s: None,
            elected: None,
            replaced_at_s: None,
            interval_s: None,
            aborted: false,
        });
        let delay = SimTime::from_secs_f64(self.cfg.delays.detection_s);
        self.events.push(now + delay, Ev::Detected { job: j, domain: d as u16 });
    }

    fn open_recovery(&mut self, j: usize, d: u16) -> Option<&mut RecoveryEntry> {
        self.recovery.iter_mut().rev().find(|e| e.job == j as u32 && e.dc == d && e.replaced_at_s.is_none() && !e.aborted)
    }

    fn on_detected(&mut self, j: usize, d: u16) {
        if self.jobs[j].terminal() {
            return;
        }
        let now = self.now();
        let spawn = SimTime::from_secs_f64(self.cfg.delays.spawn_s);
        if let Some(e) = self.open_recovery(j, d) {
            e.detected_at_s = Some(now.as_secs_f64());
        }
        let failed = self.jobs[j].jms[&DcId(d)].clone();
        if self.centralized() {
            self.jobs[j].jms.get_mut(&DcId(d)).unwrap().status = JmStatus::Recovering;
            self.log(Some(j), "failure_detected", failed.id.to_string(), json!({ "action": "resubmit" }));
            self.events.push(now + spawn, Ev::Restart { job: j, generation: failed.id.generation + 1 });
            return;
        }
        let plan = on_jm_failure(&self.jobs[j].jms, DcId(d));
        self.log(Some(j), "failure_detected", failed.id.to_string(), serde_json::to_value(&plan).unwrap_or_default());
        if plan.abort {
            if let Some(e) = self.open_recovery(j, d) {
                e.aborted = true;
            }
            self.abort_job(j);
            return;
        }
        if let Some(e) = plan.elected {
            let m = self.jobs[j].jms.get_mut(&e).unwrap();
            m.role = JmRole::Primary;
            let id = m.id;
            self.store_append(j, InfoUpdate::RoleChange { jm: id, role: Some(JmRole::Primary) });
            self.log(Some(j), "elected", id.to_string(), json!({ "dc": e.0 }));
            if let Some(entry) = self.open_recovery(j, d) {
                entry.elected = Some(e.0);
            }
        }
        self.store_append(j, InfoUpdate::RoleChange { jm: failed.id, role: None });
        let m = self.jobs[j].jms.get_mut(&DcId(d)).unwrap();
        m.status = JmStatus::Recovering;
        m.role = JmRole::SemiActive;
        self.events.push(now + spawn, Ev::Spawned { job: j, domain: d, generation: failed.id.generation + 1 });
        if self.jobs[j].release_pending {
            self.release_stages(j);
        }
    }

    fn on_spawned(&mut self, j: usize, d: u16, generation: u32) {
        if self.jobs[j].terminal() {
            return;
        }
        let now = self.now();
        let old = self.jobs[j].jms[&DcId(d)].clone();
        let host = self.pick_host(DcId(d), j);
        let new = JmState { id: JmId { dc: DcId(d), generation }, role: JmRole::SemiActive, status: JmStatus::Alive, host };
        self.jobs[j].jms.insert(DcId(d), new.clone());
        self.store_append(j, InfoUpdate::RoleChange { jm: new.id, role: Some(JmRole::SemiActive) });
        let dead: BTreeSet<ContainerId> =
            self.conts.iter().enumerate().filter(|(_, s)| !s.alive).map(|(i, _)| ContainerId(i as u32)).collect();
        for u in inherit_containers(self.jobs[j].store.committed(), new.id, old.id, &dead) {
            self.store_append(j, u);
        }
        if let Some(e) = self.open_recovery(j, d) {
            e.replaced_at_s = Some(now.as_secs_f64());
            e.interval_s = Some(now.as_secs_f64() - e.failed_at_s);
        }
        self.log(Some(j), "jm_spawned", new.id.to_string(), json!({ "host": host.0 }));
        if !self.primary_alive(j) {
            if let Some(e) = elect_primary(self.jobs[j].jms.values()) {
                let m = self.jobs[j].jms.get_mut(&e).unwrap();
                m.role = JmRole::Primary;
                let id = m.id;
                self.store_append(j, InfoUpdate::RoleChange { jm: id, role: Some(JmRole::Primary) });
                self.log(Some(j), "elected", id.to_string(), json!({ "dc": e.0 }));
            }
        }
        if self.jobs[j].release_pending {
            self.release_stages(j);
        }
        let key = SubJobKey::Job(JobId(j as u32));
        for c in self.held(d as usize, key) {
            self.update(c, true);
        }
        self.maybe_retire(j, d as usize);
    }

    /// Centralized recovery: the job is resubmitted and starts over.
    fn on_restart(&mut self, j: usize, generation: u32) {
        if self.jobs[j].terminal() {
            return;
        }
        let now = self.now();
        self.kill_running(j);
        let key = SubJobKey::Job(JobId(j as u32));
        let held = self.domains[0].plan.remove(&key);
        for c in held {
            self.conts[c.index()].steal = None;
        }
        for s in &mut self.jobs[j].job.stages {
            for t in &mut s.tasks {
                t.state = TaskState::Unreleased;
                t.wait = SimTime::ZERO;
            }
        }
        let rt = &mut self.jobs[j];
        rt.store = ConsistentStore::new(rt.job.id, [DcId(0)]);
        rt.sub.insert(0, SubJob::default());
        rt.restarts += 1;
        let home = rt.home;
        let host = {
            let h = self.pick_host(home, j);
            if h == ON_MASTER {
                self.topo.dc_ids().map(|dc| self.pick_host(dc, j)).find(|h| *h != ON_MASTER).unwrap_or(ON_MASTER)
            } else {
                h
            }
        };
        let st = JmState { id: JmId { dc: DcId(0), generation }, role: JmRole::Primary, status: JmStatus::Alive, host };
        self.jobs[j].jms.insert(DcId(0), st.clone());
        self.store_append(j, InfoUpdate::RoleChange { jm: st.id, role: Some(JmRole::Primary) });
        if let Some(e) = self.open_recovery(j, 0) {
            e.replaced_at_s = Some(now.as_secs_f64());
            e.interval_s = Some(now.as_secs_f64() - e.failed_at_s);
        }
        self.log(Some(j), "restart", st.id.to_string(), json!({ "restarts": self.jobs[j].restarts }));
        self.dispense(0);
        if !self.cfg.deployment.uses_af() {
            self.activate(j, 0);
        }
        self.release_stages(j);
    }

    fn on_load_start(&mut self, i: usize) {
        let inj = self.cfg.load[i].clone();
        let mut keys = Vec::new();
        let mut touched = BTreeSet::new();
        for dc in &inj.dcs {
            if *dc as usize >= self.topo.datacenters.len() {
                continue;
            }
            let d = self.domain_of_dc(DcId(*dc));
            let cap = self.capacity(d).max(1);
            for _ in 0..inj.tenants {
                let id = self.ext_next;
                self.ext_next += 1;
                self.domains[d].externals.insert(id);
                self.domains[d].plan.targets.insert(SubJobKey::External(id), cap);
                keys.push((d, id));
            }
            touched.insert(d);
        }
        self.log(None, "load_start", "injector".into(), json!({ "dcs": inj.dcs, "tenants": inj.tenants }));
        self.load_keys.insert(i, keys);
        for d in touched {
            self.dispense(d);
        }
        if let Some(dur) = inj.duration_s {
            let now = self.now();
            self.events.push(now + SimTime::from_secs_f64(dur), Ev::LoadEnd(i));
        }
    }

    fn on_load_end(&mut self, i: usize) {
        let keys = self.load_keys.remove(&i).unwrap_or_default();
        let mut touched = BTreeSet::new();
        for (d, id) in keys {
            self.domains[d].externals.remove(&id);
            let key = SubJobKey::External(id);
            for c in self.domains[d].plan.remove(&key) {
                self.note_release(key, c);
            }
            touched.insert(d);
        }
        self.log(None, "load_end", "injector".into(), json!({ "injection": i }));
        for d in touched {
            self.dispense(d);
        }
    }

    // ---- driver ----

    fn run(mut self) -> RunOutput {
        for (j, rt) in self.jobs.iter().enumerate() {
            self.events.push(rt.job.release, Ev::Arrival(j));
        }
        for (i, f) in self.failures.iter().enumerate() {
            self.events.push(f.at, Ev::Failure(i));
        }
        for (i, l) in self.cfg.load.iter().enumerate() {
            self.events.push(SimTime::from_secs_f64(l.at_s), Ev::LoadStart(i));
        }
        self.events.push(self.cfg.params.period, Ev::Boundary);
        self.events.push(SimTime::from_secs(1), Ev::Tick);
        let limit = SimTime::from_secs_f64(self.cfg.max_time_s);
        while let Some((t, ev)) = self.events.pop() {
            if t > limit {
                break;
            }
            self.processed += 1;
            match ev {
                Ev::Arrival(j) => self.on_arrival(j),
                Ev::Boundary => self.on_boundary(),
                Ev::Tick => self.on_tick(),
                Ev::Finish { job, task, container, attempt } => self.on_finish(job, task, container, attempt),
                Ev::StealAtVictim { job, thief, victim, container, slot, sent, tried, token } => {
                    self.on_steal_at_victim(job, thief, victim, container, slot, sent, tried, token)
                }
                Ev::StealReply { job, thief, victim, container, granted, sent, tried, token } => {
                    self.on_steal_reply(job, thief, victim, container, granted, sent, tried, token)
                }
                Ev::StoreDeliver { job, dc, seq } => {
                    self.jobs[job].store.deliver(dc, seq);
                }
                Ev::Failure(i) => self.on_failure(i),
                Ev::Detected { job, domain } => self.on_detected(job, domain),
                Ev::Spawned { job, domain, generation } => self.on_spawned(job, domain, generation),
                Ev::Restart { job, generation } => self.on_restart(job, generation),
                Ev::LoadStart(i) => self.on_load_start(i),
                Ev::LoadEnd(i) => self.on_load_end(i),
            }
        }
        self.finish()
    }

    fn finish(self) -> RunOutput {
        let end = self.jobs.iter().filter_map(|j| j.ended_at).max().unwrap_or(SimTime::ZERO);
        let completed: Vec<DagJob> = self.jobs.iter().filter(|j| j.done).map(|j| j.job.clone()).collect();
        let makespan = completed.iter().filter_map(|j| j.completion).max().unwrap_or(SimTime::ZERO);
        let responses: Vec<f64> =
            completed.iter().map(|j| (j.completion.unwrap() - j.release).as_secs_f64()).collect();
        let avg = if responses.is_empty() { 0.0 } else { responses.iter().sum::<f64>() / responses.len() as f64 };

        let pricing = self.cfg.pricing();
        let class_of = |reliable: bool| match pricing {
            Pricing::AllOnDemand => PriceClass::OnDemand,
            Pricing::AllSpot => PriceClass::Spot,
            Pricing::ByReliability => {
                if reliable {
                    PriceClass::OnDemand
                } else {
                    PriceClass::Spot
                }
            }
        };
        let mut hosts = Vec::new();
        for dc in &self.topo.datacenters {
            for m in 0..dc.masters {
                hosts.push(HostUsage { host: format!("{}-master{m}", dc.name), class: class_of(true), uptime: end });
            }
        }
        for n in &self.topo.nodes {
            let up = self.node_death.get(&n.id).map_or(end, |t| (*t).min(end));
            hosts.push(HostUsage { host: n.id.to_string(), class: class_of(n.reliability == Reliability::Reliable), uptime: up });
        }
        let usage = UsageTrace { hosts, cross_dc_bytes: self.cross_dc_bytes };
        let cost = compute_cost(&usage, &self.cfg.prices);

        let bound = (self.cfg.deployment == Deployment::Houtu).then(|| {
            makespan_bound(&self.cfg.params, &self.topo, &completed).ok().map(|b| BoundReport {
                makespan_s: makespan.as_secs_f64(),
                value_s: b.value,
                holds: makespan.as_secs_f64() <= b.value + 1e-9,
                breakdown: b,
            })
        });

        let jobs: Vec<JobReport> = self
            .jobs
            .iter()
            .map(|rt| JobReport {
                id: rt.job.id.0,
                name: rt.job.name.clone(),
                release_s: rt.job.release.as_secs_f64(),
                completion_s: rt.job.completion.map(SimTime::as_secs_f64),
                response_s: rt.job.completion.map(|c| (c - rt.job.release).as_secs_f64()),
                tasks: rt.job.task_count(),
                work: job_work(&rt.job),
                placements: rt.placements.values().sum(),
                restarts: rt.restarts,
                aborted: rt.aborted,
            })
            .collect();
        let placements: u32 = jobs.iter().map(|j| j.placements).sum();
        let reexecutions: u32 = self.jobs.iter().flat_map(|j| j.placements.values()).map(|n| n.saturating_sub(1)).sum();
        let mut steals = self.steals.clone();
        steals.mean_round_trip_ms = if self.rtt_count == 0 { 0.0 } else { self.rtt_total_ms as f64 / self.rtt_count as f64 };

        let report = MetricsReport {
            deployment: self.cfg.deployment,
            seed: self.cfg.seed,
            jobs_completed: completed.len(),
            jobs_aborted: self.jobs.iter().filter(|j| j.aborted).count(),
            jobs_unfinished: self.jobs.iter().filter(|j| !j.terminal()).count(),
            makespan_s: makespan.as_secs_f64(),
            avg_response_s: avg,
            median_response_s: median(&responses),
            jobs,
            machine_cost_usd: cost.machine_usd,
            transfer_cost_usd: cost.transfer_usd,
            cross_dc_bytes: self.cross_dc_bytes,
            cost,
            bound: bound.flatten(),
            recovery: self.recovery,
            node_failures: self.node_failures,
            steals,
            placements,
            reexecutions,
            store_converged: self.jobs.iter().all(|j| j.store.converged()),
            events: self.processed,
            end_time_s: self.events.now().as_secs_f64(),
        };
        RunOutput { report, traces: self.traces, usage, jobs: self.jobs.into_iter().map(|j| j.job).collect() }
    }
}
