use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::time::Share;
use crate::error::{Error, Result};

macro_rules! id_type {
    ($name:ident, $inner:ty, $prefix:literal) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl $name {
            pub fn index(self) -> usize {
                self.0 as usize
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_type!(DcId, u16, "dc");
id_type!(RackId, u32, "rack");
id_type!(NodeId, u32, "n");
id_type!(ContainerId, u32, "c");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reliability {
    Reliable,
    #[default]
    Spot,
}

/// Stochastic bandwidth of a link, in Mbps.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub mean_mbps: f64,
    #[serde(default)]
    pub stddev_mbps: f64,
    pub floor_mbps: f64,
}

impl LinkModel {
    /// Typical inter-region link: ~100 Mbps with 30% deviation.
    pub const WAN: LinkModel = LinkModel { mean_mbps: 100.0, stddev_mbps: 30.0, floor_mbps: 10.0 };
    /// Typical intra-region link: ~820 Mbps.
    pub const LAN: LinkModel = LinkModel { mean_mbps: 820.0, stddev_mbps: 40.0, floor_mbps: 100.0 };

    pub fn constant(mbps: f64) -> LinkModel {
        LinkModel { mean_mbps: mbps, stddev_mbps: 0.0, floor_mbps: mbps }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.mean_mbps > 0.0
            && self.stddev_mbps >= 0.0
            && self.floor_mbps > 0.0
            && self.floor_mbps <= self.mean_mbps
            && self.mean_mbps.is_finite()
            && self.stddev_mbps.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Topology(format!("invalid link model {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Rack {
    pub id: RackId,
    pub dc: DcId,
    pub nodes: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub rack: RackId,
    pub dc: DcId,
    pub reliability: Reliability,
    pub containers: Vec<ContainerId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Container {
    pub id: ContainerId,
    pub node: NodeId,
    pub rack: RackId,
    pub dc: DcId,
    pub capacity: Share,
    pub free: Share,
    pub reliability: Reliability,
}

impl Container {
    /// Reserves `r` for a newly placed task. Returns false (and leaves the
    /// container untouched) when `r` does not fit.
    pub fn place(&mut self, r: Share) -> bool {
        if r > self.free {
            return false;
        }
        self.free = self.free - r;
        true
    }

    pub fn release(&mut self, r: Share) {
        debug_assert!(self.free + r <= self.capacity, "release beyond capacity on {}", self.id);
        self.free = (self.free + r).min(self.capacity);
    }

    pub fn used(&self) -> Share {
        self.capacity - self.free
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DataCenter {
    pub id: DcId,
    pub name: String,
    pub racks: Vec<RackId>,
    pub nodes: Vec<NodeId>,
    pub containers: Vec<ContainerId>,
    pub lan: LinkModel,
    /// Reliable master hosts; they run no tasks but are billed.
    pub masters: u32,
}

/// Data centers, racks, worker nodes and containers, stored as dense arenas
/// indexed by their ids.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology {
    pub datacenters: Vec<DataCenter>,
    pub racks: Vec<Rack>,
    pub nodes: Vec<Node>,
    pub containers: Vec<Container>,
    pub wan_links: BTreeMap<(DcId, DcId), LinkModel>,
}

impl Topology {
    pub fn dc(&self, id: DcId) -> &DataCenter {
        &self.datacenters[id.index()]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.index()]
    }

    pub fn container(&self, id: ContainerId) -> &Container {
        &self.containers[id.index()]
    }

    pub fn container_mut(&mut self, id: ContainerId) -> &mut Container {
        &mut self.containers[id.index()]
    }

    pub fn dc_ids(&self) -> impl Iterator<Item = DcId> + '_ {
        self.datacenters.iter().map(|d| d.id)
    }

    pub fn dc_of_node(&self, id: NodeId) -> DcId {
        self.node(id).dc
    }

    pub fn rack_of_node(&self, id: NodeId) -> RackId {
        self.node(id).rack
    }

    /// |P|, the total container count.
    pub fn total_containers(&self) -> usize {
        self.containers.len()
    }

    /// The link a transfer between two nodes crosses; `None` for node-local.
    pub fn link(&self, src: NodeId, dst: NodeId) -> Option<LinkModel> {
        if src == dst {
            return None;
        }
        let (a, b) = (self.dc_of_node(src), self.dc_of_node(dst));
        if a == b {
            Some(self.dc(a).lan)
        } else {
            Some(self.wan_links[&(a, b)])
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.datacenters.is_empty() {
            return Err(Error::Topology("at least one data center required".into()));
        }
        for (i, dc) in self.datacenters.iter().enumerate() {
            if dc.id.index() != i {
                return Err(Error::Topology(format!("data center ids must be dense, found {}", dc.id)));
            }
            if dc.nodes.is_empty() {
                return Err(Error::Topology(format!("{} has no nodes", dc.name)));
            }
            dc.lan.validate()?;
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id.index() != i {
                return Err(Error::Topology(format!("node ids must be dense, found {}", node.id)));
            }
            let rack = &self.racks[node.rack.index()];
            if rack.dc != node.dc || !rack.nodes.contains(&node.id) {
                return Err(Error::Topology(format!("{} not consistently placed in {}", node.id, node.rack)));
            }
        }
        for (i, c) in self.containers.iter().enumerate() {
            if c.id.index() != i {
                return Err(Error::Topology(format!("container ids must be dense, found {}", c.id)));
            }
            let node = self.node(c.node);
            if node.rack != c.rack || node.dc != c.dc || !node.containers.contains(&c.id) {
                return Err(Error::Topology(format!("{} not consistently placed on {}", c.id, c.node)));
            }
            if c.free > c.capacity {
                return Err(Error::Topology(format!("{} free exceeds capacity", c.id)));
            }
        }
        let k = self.datacenters.len();
        for a in 0..k {
            for b in 0..k {
                if a == b {
                    continue;
                }
                let key = (DcId(a as u16), DcId(b as u16));
                match self.wan_links.get(&key) {
                    Some(l) => l.validate()?,
                    None => return Err(Error::Topology(format!("missing WAN link {}→{}", key.0, key.1))),
                }
            }
        }
        Ok(())
    }

    /// A regular topology: `dcs` data centers of `racks × nodes_per_rack`
    /// spot workers, each hosting `containers_per_node` containers.
    pub fn uniform(dcs: usize, racks: usize, nodes_per_rack: usize, containers_per_node: usize) -> Topology {
        let spec = TopologySpec {
            datacenters: (0..dcs)
                .map(|i| DataCenterSpec {
                    name: format!("DC-{i}"),
                    lan: None,
                    masters: 1,
                    racks: (0..racks)
                        .map(|_| RackSpec {
                            nodes: (0..nodes_per_rack)
                                .map(|_| NodeSpec { containers: containers_per_node as u32, reliability: Reliability::Spot })
                                .collect(),
                        })
                        .collect(),
                })
                .collect(),
            wan_default: None,
            wan_links: Vec::new(),
        };
        spec.build().expect("uniform topology is valid")
    }
}

/// On-disk topology document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub datacenters: Vec<DataCenterSpec>,
    #[serde(default)]
    pub wan_default: Option<LinkModel>,
    #[serde(default)]
    pub wan_links: Vec<WanLinkSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataCenterSpec {
    pub name: String,
    #[serde(default)]
    pub lan: Option<LinkModel>,
    #[serde(default = "one")]
    pub masters: u32,
    pub racks: Vec<RackSpec>,
}

fn one() -> u32 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RackSpec {
    pub nodes: Vec<NodeSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    #[serde(default = "one")]
    pub containers: u32,
    #[serde(default)]
    pub reliability: Reliability,
}

/// Directed WAN link override; `symmetric` also sets the reverse direction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WanLinkSpec {
    pub from: u16,
    pub to: u16,
    pub link: LinkModel,
    #[serde(default = "yes")]
    pub symmetric: bool,
}

fn yes() -> bool {
    true
}

impl TopologySpec {
    pub fn build(&self) -> Result<Topology> {
        let mut datacenters = Vec::new();
        let mut racks = Vec::new();
        let mut nodes = Vec::new();
        let mut containers = Vec::new();
        for (di, dspec) in self.datacenters.iter().enumerate() {
            let dc_id = DcId(di as u16);
            let mut dc = DataCenter {
                id: dc_id,
                name: dspec.name.clone(),
                racks: Vec::new(),
                nodes: Vec::new(),
                containers: Vec::new(),
                lan: dspec.lan.unwrap_or(LinkModel::LAN),
                masters: dspec.masters,
            };
            for rspec in &dspec.racks {
                let rack_id = RackId(racks.len() as u32);
                let mut rack = Rack { id: rack_id, dc: dc_id, nodes: Vec::new() };
                for nspec in &rspec.nodes {
                    let node_id = NodeId(nodes.len() as u32);
                    let mut node = Node {
                        id: node_id,
                        rack: rack_id,
                        dc: dc_id,
                        reliability: nspec.reliability,
                        containers: Vec::new(),
                    };
                    for _ in 0..nspec.containers {
                        let cid = ContainerId(containers.len() as u32);
                        containers.push(Container {
                            id: cid,
                            node: node_id,
                            rack: rack_id,
                            dc: dc_id,
                            capacity: Share::FULL,
                            free: Share::FULL,
                            reliability: nspec.reliability,
                        });
                        node.containers.push(cid);
                        dc.containers.push(cid);
                    }
                    rack.nodes.push(node_id);
                    dc.nodes.push(node_id);
                    nodes.push(node);
                }
                dc.racks.push(rack_id);
                racks.push(rack);
            }
            datacenters.push(dc);
        }
        let default = self.wan_default.unwrap_or(LinkModel::WAN);
        let k = datacenters.len() as u16;
        let mut wan_links = BTreeMap::new();
        for a in 0..k {
            for b in 0..k {
                if a != b {
                    wan_links.insert((DcId(a), DcId(b)), default);
                }
            }
        }
        for l in &self.wan_links {
            if l.from >= k || l.to >= k || l.from == l.to {
                return Err(Error::Topology(format!("bad WAN link {}→{}", l.from, l.to)));
            }
            wan_links.insert((DcId(l.from), DcId(l.to)), l.link);
            if l.symmetric {
                wan_links.insert((DcId(l.to), DcId(l.from)), l.link);
            }
        }
        let topo = Topology { datacenters, racks, nodes, containers, wan_links };
        topo.validate()?;
        Ok(topo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_topology_is_consistent() {
        let t = Topology::uniform(4, 2, 2, 1);
        assert_eq!(t.datacenters.len(), 4);
        assert_eq!(t.total_containers(), 16);
        assert_eq!(t.dc(DcId(3)).containers.len(), 4);
        let c = t.container(ContainerId(5));
        assert_eq!(t.node(c.node).dc, c.dc);
        assert_eq!(t.wan_links.len(), 12);
    }

    #[test]
    fn link_selection() {
        let t = Topology::uniform(2, 1, 2, 1);
        assert_eq!(t.link(NodeId(0), NodeId(0)), None);
        assert_eq!(t.link(NodeId(0), NodeId(1)), Some(LinkModel::LAN));
        assert_eq!(t.link(NodeId(0), NodeId(2)), Some(LinkModel::WAN));
    }

    #[test]
    fn empty_topology_rejected() {
        let spec = TopologySpec { datacenters: vec![], wan_default: None, wan_links: vec![] };
        assert!(spec.build().is_err());
        let spec = TopologySpec {
            datacenters: vec![DataCenterSpec { name: "x".into(), lan: None, masters: 1, racks: vec![] }],
            wan_default: None,
            wan_links: vec![],
        };
        assert!(spec.build().is_err());
    }

    #[test]
    fn container_conservation() {
        let mut t = Topology::uniform(1, 1, 1, 1);
        let c = t.container_mut(ContainerId(0));
        assert!(c.place(Share(400)));
        assert!(!c.place(Share(700)));
        assert_eq!(c.free, Share(600));
        c.release(Share(400));
        assert_eq!(c.free, c.capacity);
    }

    #[test]
    fn spec_parses_from_json() {
        let doc = r#"{
            "datacenters": [
                {"name": "A", "racks": [{"nodes": [{"containers": 2}, {"reliability": "reliable"}]}]},
                {"name": "B", "racks": [{"nodes": [{}]}]}
            ],
            "wan_links": [{"from": 0, "to": 1, "link": {"mean_mbps": 50, "floor_mbps": 5}}]
        }"#;
        let spec: TopologySpec = serde_json::from_str(doc).unwrap();
        let t = spec.build().unwrap();
        assert_eq!(t.total_containers(), 4);
        assert_eq!(t.node(NodeId(1)).reliability, Reliability::Reliable);
        assert_eq!(t.wan_links[&(DcId(1), DcId(0))].mean_mbps, 50.0);
    }
}
