//! Per-data-center job scheduler: max-min fair division of whole containers
//! among sub-jobs at period boundaries, and the bookkeeping that turns a new
//! allocation into concrete grants and reclamations.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{ContainerId, NodeId, SimTime};

/// Progressive filling capped by desire: one container at a time to the
/// claimant holding the fewest, lowest key first on ties.
pub fn allocate<K: Ord + Copy>(desires: &BTreeMap<K, u32>, capacity: u32) -> BTreeMap<K, u32> {
    let mut grants: BTreeMap<K, u32> = desires.keys().map(|k| (*k, 0)).collect();
    let mut left = capacity;
    while left > 0 {
        let next = desires
            .iter()
            .filter(|(k, d)| grants[*k] < **d)
            .min_by_key(|(k, _)| (grants[*k], **k))
            .map(|(k, _)| *k);
        match next {
            Some(k) => {
                *grants.get_mut(&k).unwrap() += 1;
                left -= 1;
            }
            None => break,
        }
    }
    grants
}

/// What the scheduler needs to know about one container of its data center.
#[derive(Clone, Debug, PartialEq)]
pub struct ContainerView<K> {
    pub id: ContainerId,
    pub node: NodeId,
    pub owner: Option<K>,
    pub busy: bool,
    /// When the container last became idle; orders idle reclamation.
    pub idle_since: SimTime,
}

/// Container ownership for one data center, carried across periods.
#[derive(Clone, Debug, PartialEq)]
pub struct AllocationPlan<K: Ord> {
    pub q: u32,
    /// Allocation decided at the last boundary, per sub-job.
    pub targets: BTreeMap<K, u32>,
    /// Containers currently held, including ones awaiting reclamation.
    pub held: BTreeMap<K, BTreeSet<ContainerId>>,
    /// Busy surplus: the next this-many containers of the sub-job to become
    /// idle are reclaimed, and none of its busy containers take new tasks.
    pub draining: BTreeMap<K, u32>,
    /// Containers granted during the last step.
    pub granted: Vec<(K, ContainerId)>,
    /// Containers reclaimed during the last step.
    pub reclaimed: Vec<(K, ContainerId)>,
}

impl<K: Ord + Copy> Default for AllocationPlan<K> {
    fn default() -> Self {
        AllocationPlan {
            q: 0,
            targets: BTreeMap::new(),
            held: BTreeMap::new(),
            draining: BTreeMap::new(),
            granted: Vec::new(),
            reclaimed: Vec::new(),
        }
    }
}

impl<K: Ord + Copy> AllocationPlan<K> {
    pub fn held_count(&self, k: &K) -> u32 {
        self.held.get(k).map_or(0, |s| s.len() as u32)
    }

    pub fn draining_count(&self, k: &K) -> u32 {
        self.draining.get(k).copied().unwrap_or(0)
    }

    /// Held containers that are not earmarked for reclamation.
    pub fn effective(&self, k: &K) -> u32 {
        self.held_count(k).saturating_sub(self.draining_count(k))
    }

    pub fn is_draining(&self, k: &K) -> bool {
        self.draining_count(k) > 0
    }

    pub fn owner_of(&self, c: ContainerId) -> Option<K> {
        self.held.iter().find(|(_, s)| s.contains(&c)).map(|(k, _)| *k)
    }

    fn take(&mut self, k: K, c: ContainerId) {
        if let Some(s) = self.held.get_mut(&k) {
            s.remove(&c);
            if s.is_empty() {
                self.held.remove(&k);
            }
        }
        self.reclaimed.push((k, c));
    }

    /// A container of `k` has just become idle. Returns true if it was
    /// reclaimed to satisfy a pending shrink.
    pub fn on_idle(&mut self, k: K, c: ContainerId) -> bool {
        let pending = self.draining_count(&k);
        if pending == 0 || !self.held.get(&k).is_some_and(|s| s.contains(&c)) {
            return false;
        }
        if pending == 1 {
            self.draining.remove(&k);
        } else {
            self.draining.insert(k, pending - 1);
        }
        self.take(k, c);
        true
    }

    /// Drops `k` entirely (job finished or aborted). Returns what it held.
    pub fn remove(&mut self, k: &K) -> BTreeSet<ContainerId> {
        self.targets.remove(k);
        self.draining.remove(k);
        self.held.remove(k).unwrap_or_default()
    }

    /// Forgets a container that no longer exists.
    pub fn forget(&mut self, c: ContainerId) {
        if let Some(k) = self.owner_of(c) {
            if let Some(s) = self.held.get_mut(&k) {
                s.remove(&c);
                if s.is_empty() {
                    self.held.remove(&k);
                }
            }
            let d = self.draining_count(&k);
            let held = self.held_count(&k);
            if d > held {
                self.draining.insert(k, held);
            }
            if self.draining_count(&k) == 0 {
                self.draining.remove(&k);
            }
        }
    }

    /// Hands unowned containers in `pool` to sub-jobs below target, fewest
    /// held first. Each grant prefers a container on one of the sub-job's
    /// preferred nodes, then the lowest id.
    pub fn dispense(&mut self, pool: &mut BTreeSet<(ContainerId, NodeId)>, preferred: &BTreeMap<K, BTreeSet<NodeId>>) {
        loop {
            if pool.is_empty() {
                return;
            }
            let claimant = self
                .targets
                .iter()
                .filter(|(k, t)| self.held_count(k) < **t && !self.is_draining(k))
                .min_by_key(|(k, _)| (self.held_count(k), **k))
                .map(|(k, _)| *k);
            let Some(k) = claimant else { return };
            let pick = preferred
                .get(&k)
                .and_then(|nodes| pool.iter().find(|(_, n)| nodes.contains(n)).copied())
                .or_else(|| pool.iter().next().copied())
                .unwrap();
            pool.remove(&pick);
            self.held.entry(k).or_default().insert(pick.0);
            self.granted.push((k, pick.0));
        }
    }
}

/// Applies a new allocation at a period boundary: shrinking sub-jobs give up
/// idle containers at once (earliest idle first) and mark the rest of their
/// surplus as draining; growing sub-jobs receive unowned containers. Grants
/// that cannot be met yet are filled later through [`AllocationPlan::dispense`].
pub fn reconcile<K: Ord + Copy>(
    plan_prev: &AllocationPlan<K>,
    alloc_next: &BTreeMap<K, u32>,
    containers: &[ContainerView<K>],
    preferred: &BTreeMap<K, BTreeSet<NodeId>>,
) -> AllocationPlan<K> {
    let mut plan = plan_prev.clone();
    plan.q += 1;
    plan.granted.clear();
    plan.reclaimed.clear();
    plan.targets = alloc_next.clone();

    let owners: Vec<K> = plan.held.keys().copied().collect();
    for k in owners {
        let target = alloc_next.get(&k).copied().unwrap_or(0);
        let held = plan.held_count(&k);
        let draining = plan.draining_count(&k);
        let effective = held.saturating_sub(draining);
        if target >= effective {
            let cancel = (target - effective).min(draining);
            let left = draining - cancel;
            if left == 0 {
                plan.draining.remove(&k);
            } else {
                plan.draining.insert(k, left);
            }
            continue;
        }
        let mut surplus = effective - target;
        let mut idle: Vec<&ContainerView<K>> = containers
            .iter()
            .filter(|c| c.owner == Some(k) && !c.busy && plan.held[&k].contains(&c.id))
            .collect();
        idle.sort_by_key(|c| (c.idle_since, c.id));
        // containers already counted as draining are busy; idle ones can go now
        for c in idle {
            if surplus == 0 {
                break;
            }
            plan.take(k, c.id);
            surplus -= 1;
        }
        if surplus > 0 {
            plan.draining.insert(k, draining + surplus);
        }
    }

    let held: BTreeSet<ContainerId> = plan.held.values().flatten().copied().collect();
    let mut pool: BTreeSet<(ContainerId, NodeId)> = containers
        .iter()
        .filter(|c| !held.contains(&c.id) && (c.owner.is_none() || plan.reclaimed.iter().any(|(_, r)| *r == c.id)))
        .map(|c| (c.id, c.node))
        .collect();
    plan.dispense(&mut pool, preferred);
    plan
}
