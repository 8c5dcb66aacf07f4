//! Domain types: topology, DAG jobs, scheduler parameters and the metric
//! definitions every other module shares.

mod job;
mod metrics;
mod params;
mod time;
mod topology;

pub use job::{
    apportion, upstream_tasks, DagJob, Input, InputPlacement, JobId, JobSpec, Stage, StageInputSpec, StageSpec, Task,
    TaskId, TaskState,
};
pub use metrics::{avg_response_time, job_work, makespan};
pub use params::SchedulerParams;
pub use time::{Share, SimTime};
pub use topology::{
    Container, ContainerId, DataCenter, DataCenterSpec, DcId, LinkModel, Node, NodeId, NodeSpec, Rack, RackId,
    RackSpec, Reliability, Topology, TopologySpec, WanLinkSpec,
};
