//! Exhaustive interleaving checker for one job's managers.
//!
//! A tiny scenario (a few data centers, one container each, a handful of
//! tasks) is driven through every ordering of steal messages, task
//! completions and job-manager failures, detections and respawns, using the
//! same Parades and coordination primitives as the engine. Every reachable
//! state is checked for:
//!
//! * at most one live primary job manager, and one present after every
//!   detection or respawn;
//! * every unfinished task sitting in exactly one place (a waiting queue or
//!   an in-flight steal reply), and that place agreeing with the store's
//!   task map.

use std::collections::{BTreeMap, BTreeSet};

use crate::coord::{elect_primary, on_jm_failure, ConsistentStore, InfoUpdate, JmId, JmRole, JmState, JmStatus};
use crate::model::{ContainerId, DcId, JobId, SchedulerParams, Share, SimTime, TaskId, Topology};
use crate::parades::{on_receive_steal, victim_order, DelayPolicy, JmQueue, Slot, StealRequest, WaitingTask};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CheckConfig {
    pub dcs: u16,
    pub tasks_per_dc: u32,
    /// Job-manager failures injected along a path.
    pub max_failures: u32,
    /// Steal exchanges started along a path.
    pub max_steals: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct CheckReport {
    pub states: usize,
    pub transitions: usize,
    pub aborted_paths: usize,
    pub violations: Vec<String>,
}

#[derive(Clone, Debug)]
enum Msg {
    Request { thief: DcId, victim: DcId, tried: Vec<DcId> },
    Reply { thief: DcId, granted: Vec<WaitingTask>, tried: Vec<DcId> },
}

#[derive(Clone, Debug)]
struct State {
    jms: BTreeMap<DcId, JmState>,
    queues: BTreeMap<DcId, JmQueue>,
    store: ConsistentStore,
    flights: Vec<Msg>,
    stealing: BTreeSet<DcId>,
    done: BTreeSet<TaskId>,
    failures: u32,
    steals: u32,
    aborted: bool,
}

#[derive(Clone, Debug)]
enum Action {
    SendSteal(DcId),
    Deliver(usize),
    Complete(DcId),
    Fail(DcId),
    Detect(DcId),
    Respawn(DcId),
}

struct Ctx {
    topo: Topology,
    policy: DelayPolicy,
    cfg: CheckConfig,
    tasks: Vec<TaskId>,
}

const NOW: SimTime = SimTime(10_000);

impl Ctx {
    fn slot(&self, dc: DcId) -> Slot {
        Slot::of(&self.topo, self.topo.dc(dc).containers[0], Share::FULL)
    }

    fn initial(&self) -> State {
        let dcs: Vec<DcId> = (0..self.cfg.dcs).map(DcId).collect();
        let mut store = ConsistentStore::new(JobId(0), dcs.iter().copied());
        let mut jms = BTreeMap::new();
        let mut queues: BTreeMap<DcId, JmQueue> = BTreeMap::new();
        for dc in &dcs {
            let role = if dc.0 == 0 { JmRole::Primary } else { JmRole::SemiActive };
            let st = JmState { id: JmId { dc: *dc, generation: 0 }, role, status: JmStatus::Alive, host: ContainerId(dc.0 as u32) };
            store.append(InfoUpdate::RoleChange { jm: st.id, role: Some(role) });
            jms.insert(*dc, st);
            queues.insert(*dc, JmQueue::default());
        }
        for t in &self.tasks {
            // task index i belongs to data center i / tasks_per_dc
            let dc = DcId((t.index / self.cfg.tasks_per_dc) as u16);
            store.append(InfoUpdate::TaskAssigned { task: *t, owner: dc });
            let node = self.topo.container(self.topo.dc(dc).containers[0]).node;
            let wt = WaitingTask {
                id: *t,
                r: Share(250),
                p: SimTime::from_secs(1),
                preferred_nodes: BTreeSet::from([node]),
                wait: SimTime::ZERO,
                entered: SimTime::ZERO,
            };
            queues.get_mut(&dc).unwrap().push(wt, SimTime::ZERO);
        }
        State { jms, queues, store, flights: Vec::new(), stealing: BTreeSet::new(), done: BTreeSet::new(), failures: 0, steals: 0, aborted: false }
    }

    fn key(s: &State) -> String {
        let queues: BTreeMap<&DcId, Vec<&TaskId>> = s.queues.iter().map(|(d, q)| (d, q.waiting.keys().collect())).collect();
        format!(
            "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}|{}|{}|{}",
            s.jms, queues, s.store.committed().task_map, s.flights, s.stealing, s.done, s.failures, s.steals, s.aborted
        )
    }

    fn enabled(&self, s: &State) -> Vec<Action> {
        if s.aborted {
            return Vec::new();
        }
        let mut out = Vec::new();
        for (dc, jm) in &s.jms {
            let q = &s.queues[dc];
            if jm.is_alive() {
                if q.is_empty() && !s.stealing.contains(dc) && s.steals < self.cfg.max_steals {
                    out.push(Action::SendSteal(*dc));
                }
                if !q.is_empty() {
                    out.push(Action::Complete(*dc));
                }
                if s.failures < self.cfg.max_failures {
                    out.push(Action::Fail(*dc));
                }
            }
            match jm.status {
                JmStatus::Failed => out.push(Action::Detect(*dc)),
                JmStatus::Recovering => out.push(Action::Respawn(*dc)),
                JmStatus::Alive => {}
            }
        }
        out.extend((0..s.flights.len()).map(Action::Deliver));
        out
    }

    fn next_victim(&self, s: &State, thief: DcId, tried: &[DcId]) -> Option<DcId> {
        let backlogs: BTreeMap<DcId, usize> =
            s.queues.iter().filter(|(d, _)| !tried.contains(d)).map(|(d, q)| (*d, q.len())).collect();
        victim_order(&backlogs, thief).first().copied()
    }

    fn apply(&self, s: &State, a: &Action) -> State {
        let mut s = s.clone();
        match a {
            Action::SendSteal(thief) => {
                if let Some(victim) = self.next_victim(&s, *thief, &[]) {
                    s.steals += 1;
                    s.stealing.insert(*thief);
                    s.flights.push(Msg::Request { thief: *thief, victim, tried: vec![victim] });
                }
            }
            Action::Deliver(i) => match s.flights.remove(*i) {
                Msg::Request { thief, victim, tried } => {
                    let available = s.jms[&victim].is_alive();
                    let req = StealRequest { thief, victim, slot: self.slot(thief) };
                    let reply =
                        on_receive_steal(s.queues.get_mut(&victim).unwrap(), &req, available, &self.topo, &self.policy, NOW);
                    for t in &reply.granted {
                        s.store.append(InfoUpdate::TaskReassigned { task: t.id, from: victim, to: thief });
                    }
                    s.flights.push(Msg::Reply { thief, granted: reply.granted, tried });
                }
                Msg::Reply { thief, granted, mut tried, .. } => {
                    if granted.is_empty() {
                        match self.next_victim(&s, thief, &tried) {
                            Some(v) if s.jms[&thief].is_alive() => {
                                tried.push(v);
                                s.flights.push(Msg::Request { thief, victim: v, tried });
                            }
                            _ => {
                                s.stealing.remove(&thief);
                            }
                        }
                    } else {
                        s.stealing.remove(&thief);
                        let q = s.queues.get_mut(&thief).unwrap();
                        for t in granted {
                            if s.store.committed().task_map.get(&t.id) == Some(&thief) {
                                q.push(t, NOW);
                            }
                        }
                    }
                }
            },
            Action::Complete(dc) => {
                let q = s.queues.get_mut(dc).unwrap();
                let t = *q.waiting.keys().next().unwrap();
                q.remove(&t);
                s.done.insert(t);
            }
            Action::Fail(dc) => {
                s.failures += 1;
                s.jms.get_mut(dc).unwrap().status = JmStatus::Failed;
            }
            Action::Detect(dc) => {
                let plan = on_jm_failure(&s.jms, *dc);
                if plan.abort {
                    s.aborted = true;
                    return s;
                }
                if let Some(e) = plan.elected {
                    s.jms.get_mut(&e).unwrap().role = JmRole::Primary;
                    s.store.append(InfoUpdate::RoleChange { jm: s.jms[&e].id, role: Some(JmRole::Primary) });
                }
                let m = s.jms.get_mut(dc).unwrap();
                m.role = JmRole::SemiActive;
                m.status = JmStatus::Recovering;
            }
            Action::Respawn(dc) => {
                let m = s.jms.get_mut(dc).unwrap();
                m.id.generation += 1;
                m.status = JmStatus::Alive;
                m.role = JmRole::SemiActive;
                let id = m.id;
                s.store.append(InfoUpdate::RoleChange { jm: id, role: Some(JmRole::SemiActive) });
                if !s.jms.values().any(|j| j.is_alive() && j.role == JmRole::Primary) {
                    if let Some(e) = elect_primary(s.jms.values()) {
                        s.jms.get_mut(&e).unwrap().role = JmRole::Primary;
                    }
                }
            }
        }
        s
    }

    fn violations(&self, s: &State, a: Option<&Action>, out: &mut Vec<String>) {
        let at = || format!("after {a:?}");
        let primaries = s.jms.values().filter(|j| j.is_alive() && j.role == JmRole::Primary).count();
        if primaries > 1 {
            out.push(format!("{} live primaries {}", primaries, at()));
        }
        if let Some(Action::Detect(_) | Action::Respawn(_)) = a {
            if !s.aborted && primaries == 0 {
                out.push(format!("no live primary {}", at()));
            }
        }
        if s.aborted {
            return;
        }
        let map = &s.store.committed().task_map;
        for t in &self.tasks {
            if s.done.contains(t) {
                continue;
            }
            let mut places: Vec<DcId> = s.queues.iter().filter(|(_, q)| q.waiting.contains_key(t)).map(|(d, _)| *d).collect();
            for m in &s.flights {
                if let Msg::Reply { thief, granted, .. } = m {
                    if granted.iter().any(|g| g.id == *t) {
                        places.push(*thief);
                    }
                }
            }
            if places.len() != 1 {
                out.push(format!("{t} held in {} places {}", places.len(), at()));
            } else if map.get(t) != places.first() {
                out.push(format!("{t} owned by {:?} but held by {:?} {}", map.get(t), places[0], at()));
            }
        }
    }
}

/// Explores every interleaving reachable under `cfg`.
pub fn check(cfg: &CheckConfig) -> CheckReport {
    let topo = Topology::uniform(cfg.dcs as usize, 1, 1, 1);
    let tasks: Vec<TaskId> = (0..cfg.dcs as u32 * cfg.tasks_per_dc).map(|i| TaskId::new(0, 0, i)).collect();
    let ctx = Ctx { topo, policy: DelayPolicy::Parameterized(SchedulerParams::default()), cfg: cfg.clone(), tasks };
    let mut report = CheckReport::default();
    let init = ctx.initial();
    let mut seen = BTreeSet::from([Ctx::key(&init)]);
    ctx.violations(&init, None, &mut report.violations);
    let mut stack = vec![init];
    while let Some(s) = stack.pop() {
        report.states += 1;
        for a in ctx.enabled(&s) {
            report.transitions += 1;
            let next = ctx.apply(&s, &a);
            if !seen.insert(Ctx::key(&next)) {
                continue;
            }
            ctx.violations(&next, Some(&a), &mut report.violations);
            if next.aborted {
                report.aborted_paths += 1;
            }
            stack.push(next);
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_dcs_no_events() {
        let r = check(&CheckConfig { dcs: 2, tasks_per_dc: 1, max_failures: 0, max_steals: 0 });
        assert!(r.violations.is_empty(), "{:?}", r.violations);
        assert!(r.states > 1);
    }

    #[test]
    fn steal_and_failure_small() {
        let r = check(&CheckConfig { dcs: 2, tasks_per_dc: 2, max_failures: 1, max_steals: 1 });
        assert!(r.violations.is_empty(), "{:?}", r.violations);
    }
}
