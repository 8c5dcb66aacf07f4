//! Scenario documents.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::cost::PriceTable;
use super::network::LatencyModel;
use super::workload::WorkloadSpec;
use crate::error::{Error, Result};
use crate::model::{SchedulerParams, Topology, TopologySpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Deployment {
    /// Per-data-center job managers, Af and Parades with stealing.
    Houtu,
    /// Per-data-center job managers, static grants, Parades.
    DecentStat,
    /// One global scheduler, static grants, fixed-wait delay scheduling.
    CentStat,
    /// One global scheduler, Af and parameterized delay scheduling.
    CentDyna,
}

impl Deployment {
    pub const ALL: [Deployment; 4] = [Deployment::Houtu, Deployment::DecentStat, Deployment::CentStat, Deployment::CentDyna];

    pub fn is_centralized(self) -> bool {
        matches!(self, Deployment::CentStat | Deployment::CentDyna)
    }

    pub fn uses_af(self) -> bool {
        matches!(self, Deployment::Houtu | Deployment::CentDyna)
    }

    pub fn name(self) -> &'static str {
        match self {
            Deployment::Houtu => "houtu",
            Deployment::DecentStat => "decent-stat",
            Deployment::CentStat => "cent-stat",
            Deployment::CentDyna => "cent-dyna",
        }
    }

    pub fn parse(s: &str) -> Option<Deployment> {
        Deployment::ALL.into_iter().find(|d| d.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoleSelector {
    Primary,
    SemiActive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KillTarget {
    /// Terminates the host of a job manager, with every container on it.
    /// `dc` picks among semi-active managers; the lowest other one otherwise.
    JmHost { job: u32, role: RoleSelector, #[serde(default)] dc: Option<u16> },
    /// Crashes only the job manager process.
    JmProcess { job: u32, role: RoleSelector, #[serde(default)] dc: Option<u16> },
    Node { node: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KillSpec {
    pub at_s: f64,
    #[serde(flatten)]
    pub target: KillTarget,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FailureSpec {
    pub kills: Vec<KillSpec>,
    /// Termination rate per Spot host per hour.
    pub spot_rate_per_hour: f64,
    /// Window over which stochastic terminations are drawn.
    pub horizon_s: Option<f64>,
}

/// External tenants saturating data centers from `at_s` on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadInjection {
    pub at_s: f64,
    pub dcs: Vec<u16>,
    #[serde(default = "three")]
    pub tenants: u32,
    #[serde(default)]
    pub duration_s: Option<f64>,
}

fn three() -> u32 {
    3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Delays {
    pub detection_s: f64,
    pub spawn_s: f64,
    pub store: LatencyModel,
    pub steal: LatencyModel,
}

impl Default for Delays {
    fn default() -> Self {
        Delays {
            detection_s: 5.0,
            spawn_s: 10.0,
            store: LatencyModel { mean_ms: 163.5, stddev_ms: 49.05 },
            steal: LatencyModel { mean_ms: 163.5, stddev_ms: 49.05 },
        }
    }
}

/// Fixed waits of the classic delay scheduler used by cent-stat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedDelay {
    pub rack_s: f64,
    pub any_s: f64,
}

impl Default for FixedDelay {
    fn default() -> Self {
        FixedDelay { rack_s: 3.0, any_s: 6.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pricing {
    /// Reliable hosts and masters on-demand, Spot hosts at the spot price.
    ByReliability,
    AllOnDemand,
    AllSpot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformTopology {
    pub dcs: usize,
    #[serde(default = "one")]
    pub racks: usize,
    pub nodes_per_rack: usize,
    #[serde(default = "one")]
    pub containers_per_node: usize,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySource {
    File { file: PathBuf },
    Uniform { uniform: UniformTopology },
    Inline(TopologySpec),
}

impl TopologySource {
    pub fn build(&self, base: Option<&Path>) -> Result<Topology> {
        match self {
            TopologySource::File { file } => {
                let path = match base {
                    Some(b) if file.is_relative() => b.join(file),
                    _ => file.clone(),
                };
                let spec: TopologySpec = read_json(&path)?;
                spec.build()
            }
            TopologySource::Uniform { uniform: u } => {
                if u.dcs == 0 || u.racks == 0 || u.nodes_per_rack == 0 || u.containers_per_node == 0 {
                    return Err(Error::Topology("uniform topology needs non-zero sizes".into()));
                }
                Ok(Topology::uniform(u.dcs, u.racks, u.nodes_per_rack, u.containers_per_node))
            }
            TopologySource::Inline(spec) => spec.build(),
        }
    }
}

impl Default for TopologySource {
    fn default() -> Self {
        TopologySource::Uniform { uniform: UniformTopology { dcs: 4, racks: 2, nodes_per_rack: 2, containers_per_node: 1 } }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    #[serde(default)]
    pub topology: TopologySource,
    #[serde(default)]
    pub workload: WorkloadSpec,
    #[serde(default)]
    pub params: SchedulerParams,
    #[serde(default = "houtu")]
    pub deployment: Deployment,
    #[serde(default)]
    pub failures: FailureSpec,
    #[serde(default)]
    pub prices: PriceTable,
    /// Defaults to by-reliability for decentralized deployments and
    /// all-on-demand for centralized ones.
    #[serde(default)]
    pub pricing: Option<Pricing>,
    #[serde(default)]
    pub delays: Delays,
    #[serde(default = "yes")]
    pub stealing: bool,
    #[serde(default)]
    pub load: Vec<LoadInjection>,
    #[serde(default)]
    pub fixed_delay: FixedDelay,
    #[serde(default = "five")]
    pub resample_s: f64,
    /// Simulation stops here even if jobs are unfinished.
    #[serde(default = "horizon")]
    pub max_time_s: f64,
    /// Directory that relative topology paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn houtu() -> Deployment {
    Deployment::Houtu
}

fn yes() -> bool {
    true
}

fn five() -> f64 {
    5.0
}

fn horizon() -> f64 {
    200_000.0
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text).map_err(|source| Error::Parse { path: path.display().to_string(), source })
}

impl ScenarioConfig {
    /// A default scenario on the given seed: desk-scale topology, generated
    /// workload, Houtu.
    pub fn new(seed: u64) -> Self {
        ScenarioConfig {
            seed,
            topology: TopologySource::default(),
            workload: WorkloadSpec::default(),
            params: SchedulerParams::default(),
            deployment: Deployment::Houtu,
            failures: FailureSpec::default(),
            prices: PriceTable::default(),
            pricing: None,
            delays: Delays::default(),
            stealing: true,
            load: Vec::new(),
            fixed_delay: FixedDelay::default(),
            resample_s: 5.0,
            max_time_s: horizon(),
            base_dir: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ScenarioConfig = read_json(path)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pricing(&self) -> Pricing {
        self.pricing.unwrap_or(if self.deployment.is_centralized() { Pricing::AllOnDemand } else { Pricing::ByReliability })
    }

    pub fn build_topology(&self) -> Result<Topology> {
        self.topology.build(self.base_dir.as_deref())
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.delays.detection_s >= 0.0 && self.delays.spawn_s >= 0.0) {
            return bad("delays must be non-negative");
        }
        if !(self.resample_s > 0.0) {
            return bad("resample interval must be positive");
        }
        if !(self.max_time_s > 0.0) {
            return bad("max_time_s must be positive");
        }
        if !(self.failures.spot_rate_per_hour >= 0.0) {
            return bad("spot termination rate must be non-negative");
        }
        if self.failures.kills.iter().any(|k| !(k.at_s >= 0.0)) || self.load.iter().any(|l| !(l.at_s >= 0.0)) {
            return bad("event times must be non-negative");
        }
        if let Some(g) = &self.workload.generated {
            if g.mix.iter().any(|x| !(*x >= 0.0)) || g.mix.iter().sum::<f64>() <= 0.0 {
                return bad("size mix must be non-negative and not all zero");
            }
            if !(g.mean_interarrival_s >= 0.0) {
                return bad("mean interarrival must be non-negative");
            }
        }
        let p = &self.prices;
        if [p.on_demand_per_hour, p.reserved_per_hour, p.spot_per_hour, p.transfer_per_gb].iter().any(|x| !(*x >= 0.0)) {
            return bad("prices must be non-negative");
        }
        Ok(())
    }
}
