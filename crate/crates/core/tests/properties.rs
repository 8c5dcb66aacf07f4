use std::collections::{BTreeMap, BTreeSet};

use houtu::af::{next_desire, PeriodRecord};
use houtu::coord::{ConsistentStore, InfoUpdate};
use houtu::fairsched::{allocate, reconcile, AllocationPlan, ContainerView};
use houtu::model::{ContainerId, DcId, JobId, NodeId, SchedulerParams, SimTime, TaskId};
use proptest::prelude::*;

proptest! {
    #[test]
    fn allocate_is_max_min_fair(desires in prop::collection::vec(0u32..40, 1..8), capacity in 0u32..120) {
        let map: BTreeMap<usize, u32> = desires.iter().copied().enumerate().collect();
        let a = allocate(&map, capacity);
        let total: u32 = a.values().sum();
        prop_assert_eq!(total, capacity.min(desires.iter().sum()));
        for (k, got) in &a {
            prop_assert!(*got <= map[k]);
        }
        // nobody left short holds more than one less than anyone else
        for (i, ai) in &a {
            if *ai < map[i] {
                for aj in a.values() {
                    prop_assert!(*aj <= ai + 1);
                }
            }
        }
    }

    #[test]
    fn reconcile_never_double_grants(
        steps in prop::collection::vec((prop::collection::vec(0u32..6, 3), prop::collection::vec(any::<bool>(), 8)), 1..12),
    ) {
        let n = 8u32;
        let mut plan: AllocationPlan<u8> = AllocationPlan::default();
        for (desires, busy) in steps {
            let map: BTreeMap<u8, u32> = desires.iter().enumerate().map(|(k, d)| (k as u8, *d)).collect();
            let alloc = allocate(&map, n);
            let views: Vec<ContainerView<u8>> = (0..n)
                .map(|c| {
                    let owner = plan.owner_of(ContainerId(c));
                    ContainerView { id: ContainerId(c), node: NodeId(c / 2), owner, busy: owner.is_some() && busy[c as usize], idle_since: SimTime::ZERO }
                })
                .collect();
            plan = reconcile(&plan, &alloc, &views, &BTreeMap::new());
            let mut seen = BTreeSet::new();
            for set in plan.held.values() {
                for c in set {
                    prop_assert!(seen.insert(*c), "{:?} held twice", c);
                }
            }
            prop_assert!(seen.len() as u32 <= n);
            for k in map.keys() {
                prop_assert!(plan.effective(k) <= alloc[k]);
                prop_assert!(plan.draining_count(k) <= plan.held_count(k));
            }
        }
    }

    #[test]
    fn desire_stays_in_range(
        desire in 1u32..64, allocation in 0u32..64, utilization in 0.0f64..=1.0, waiting: bool, cap in 1u32..64,
    ) {
        let params = SchedulerParams::default();
        let rec = PeriodRecord { q: 3, desire, allocation, utilization, had_waiting_tasks: waiting };
        let d = next_desire(Some(&rec), &params, cap);
        prop_assert!((1..=cap).contains(&d));
        prop_assert_eq!(d, next_desire(Some(&rec), &params, cap));
    }

    #[test]
    fn replicas_converge_in_any_delivery_order(order in prop::collection::vec((0u16..3, 1u64..12), 0..60)) {
        let dcs = [DcId(0), DcId(1), DcId(2)];
        let mut store = ConsistentStore::new(JobId(0), dcs);
        for i in 0..11u32 {
            let task = TaskId::new(0, 0, i % 4);
            store.append(if i % 3 == 0 {
                InfoUpdate::TaskAssigned { task, owner: DcId((i % 3) as u16) }
            } else {
                InfoUpdate::TaskReassigned { task, from: DcId(0), to: DcId((i % 3) as u16) }
            });
        }
        for (dc, seq) in order {
            store.deliver(DcId(dc), seq.min(store.head()));
        }
        for dc in dcs {
            store.sync(dc);
        }
        prop_assert!(store.converged());
        for dc in dcs {
            prop_assert_eq!(store.replica(dc).unwrap(), store.committed());
        }
    }
}
