//! Scenario description: topology, key and ring configuration, traffic.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    /// Authentication server.
    As,
    /// Internet gateway; joins and relays like a mesh router.
    Igw,
    /// Mesh router.
    Mr,
    /// Mesh client.
    Mc,
}

impl NodeKind {
    /// Routers and gateways form the wireless backbone.
    pub fn is_backbone(self) -> bool {
        matches!(self, NodeKind::Igw | NodeKind::Mr)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSpec {
    pub id: NodeId,
    pub kind: NodeKind,
    /// When the node powers up and starts scanning.
    #[serde(default)]
    pub start_ms: u64,
    /// Offset of the node's clock from true time.
    #[serde(default)]
    pub clock_skew_us: i64,
}

/// One-way propagation delay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DelayDist {
    Fixed { us: u64 },
    Uniform { min_us: u64, max_us: u64 },
}

impl DelayDist {
    fn validate(&self) -> Result<()> {
        match *self {
            DelayDist::Uniform { min_us, max_us } if min_us > max_us => {
                Err(Error::Config("uniform delay with min > max".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    pub a: NodeId,
    pub b: NodeId,
    /// Wired links carry no 802.11-style association (the AS uplink).
    #[serde(default)]
    pub wired: bool,
    pub delay: DelayDist,
    /// Per-transmission loss probability for data packets.
    #[serde(default)]
    pub loss: f64,
    pub bandwidth_bps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResponseDelay {
    /// Each node's base AS response delay is uniform in `[min_ms, max_ms]`,
    /// drawn once per run.
    pub min_ms: u64,
    pub max_ms: u64,
    /// Extra uniform `[0, jitter_ms]` delay added to every response.
    #[serde(default)]
    pub jitter_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyConfig {
    pub cardinality: usize,
    pub timeout_ms: u64,
    /// Use the correction factor when scheduling renewals; `false` pins `c = 0`.
    #[serde(default = "default_true")]
    pub correction: bool,
    pub response_delay: ResponseDelay,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingConfig {
    pub n: usize,
    pub p_bits: u32,
    pub q_bits: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrafficKind {
    /// Retransmits dropped packets (TCP stand-in).
    ReliableStream,
    /// Fire and forget (UDP/VoIP stand-in).
    Datagram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub source: NodeId,
    pub sink: NodeId,
    pub rate_bps: u64,
    pub payload_bytes: u32,
    pub start_ms: u64,
    pub duration_ms: u64,
    pub kind: TrafficKind,
}

impl FlowSpec {
    pub fn interval_us(&self) -> u64 {
        (self.payload_bytes as u64 * 8 * 1_000_000 / self.rate_bps).max(1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyMode {
    StaticKey,
    RotatingKey,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingConfig {
    pub scan_interval_ms: u64,
    /// Handshake processing at the associating neighbor.
    pub association_us: u64,
    /// Ring-signature verification time at the AS.
    pub auth_service_us: u64,
    /// Per-hop encryption cost, paid in both modes.
    pub crypto_service_us: u64,
    /// Extra per-hop key-list lookup cost in rotating mode.
    pub key_lookup_us: u64,
    pub retransmit_timeout_ms: u64,
    pub header_bytes: u32,
}

impl Default for TimingConfig {
    fn default() -> Self {
        TimingConfig {
            scan_interval_ms: 100,
            association_us: 2_000,
            auth_service_us: 3_000,
            crypto_service_us: 4,
            key_lookup_us: 1,
            retransmit_timeout_ms: 200,
            header_bytes: 40,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub name: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub mode: KeyMode,
    pub nodes: Vec<NodeSpec>,
    pub links: Vec<LinkSpec>,
    pub key: KeyConfig,
    pub ring: RingConfig,
    #[serde(default)]
    pub flows: Vec<FlowSpec>,
    #[serde(default)]
    pub timing: TimingConfig,
}

pub(crate) struct Adjacency {
    pub(crate) neighbors: BTreeMap<NodeId, Vec<(NodeId, usize)>>,
}

impl Adjacency {
    pub(crate) fn new(s: &SimScenario) -> Self {
        let mut neighbors: BTreeMap<NodeId, Vec<(NodeId, usize)>> =
            s.nodes.iter().map(|n| (n.id, Vec::new())).collect();
        for (i, l) in s.links.iter().enumerate() {
            neighbors.entry(l.a).or_default().push((l.b, i));
            neighbors.entry(l.b).or_default().push((l.a, i));
        }
        for v in neighbors.values_mut() {
            v.sort();
        }
        Adjacency { neighbors }
    }

    /// Breadth-first shortest paths from `root` through nodes accepted by
    /// `relay`; returns each reached node's parent (lowest id wins ties).
    pub(crate) fn bfs_parents(
        &self,
        root: NodeId,
        relay: impl Fn(NodeId) -> bool,
    ) -> BTreeMap<NodeId, Option<NodeId>> {
        let mut parent = BTreeMap::new();
        parent.insert(root, None);
        let mut queue = VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            if u != root && !relay(u) {
                continue;
            }
            for &(w, _) in &self.neighbors[&u] {
                if let std::collections::btree_map::Entry::Vacant(e) = parent.entry(w) {
                    e.insert(Some(u));
                    queue.push_back(w);
                }
            }
        }
        parent
    }
}

pub(crate) fn path_from_parents(parents: &BTreeMap<NodeId, Option<NodeId>>, to: NodeId) -> Option<Vec<NodeId>> {
    let mut path = vec![to];
    let mut cur = to;
    loop {
        match parents.get(&cur)? {
            Some(p) => {
                path.push(*p);
                cur = *p;
            }
            None => break,
        }
    }
    path.reverse();
    Some(path)
}

impl SimScenario {
    pub fn node(&self, id: NodeId) -> Option<&NodeSpec> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn auth_server(&self) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.kind == NodeKind::As).map(|n| n.id)
    }

    pub fn kind_of(&self, id: NodeId) -> Option<NodeKind> {
        self.node(id).map(|n| n.kind)
    }

    pub(crate) fn is_relay(&self, id: NodeId) -> bool {
        self.kind_of(id).is_some_and(NodeKind::is_backbone)
    }

    /// Data route from `source` to `sink` relaying only through the backbone.
    pub fn data_route(&self, source: NodeId, sink: NodeId) -> Option<Vec<NodeId>> {
        let adj = Adjacency::new(self);
        let parents = adj.bfs_parents(source, |n| self.is_relay(n));
        path_from_parents(&parents, sink)
    }

    /// Backbone path from `node` up to the AS.
    pub fn path_to_server(&self, node: NodeId) -> Option<Vec<NodeId>> {
        let root = self.auth_server()?;
        let adj = Adjacency::new(self);
        let parents = adj.bfs_parents(root, |n| self.is_relay(n));
        let mut path = path_from_parents(&parents, node)?;
        path.reverse();
        Some(path)
    }

    /// Checks the structural invariants the simulator relies on.
    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        let ids: BTreeSet<NodeId> = self.nodes.iter().map(|n| n.id).collect();
        if ids.len() != self.nodes.len() {
            return cfg("duplicate node ids".into());
        }
        let servers = self.nodes.iter().filter(|n| n.kind == NodeKind::As).count();
        if servers != 1 {
            return cfg(format!("expected exactly one AS, found {servers}"));
        }
        for l in &self.links {
            if !ids.contains(&l.a) || !ids.contains(&l.b) {
                return cfg(format!("link {}-{} references an unknown node", l.a, l.b));
            }
            if l.a == l.b {
                return cfg(format!("self-loop on node {}", l.a));
            }
            if !(0.0..=1.0).contains(&l.loss) {
                return cfg(format!("link {}-{} loss outside [0, 1]", l.a, l.b));
            }
            if l.bandwidth_bps == 0 {
                return cfg(format!("link {}-{} has zero bandwidth", l.a, l.b));
            }
            l.delay.validate()?;
        }
        for n in self.nodes.iter().filter(|n| n.kind.is_backbone()) {
            if self.path_to_server(n.id).is_none() {
                return cfg(format!("router {} has no path to the AS", n.id));
            }
        }
        let k = &self.key;
        if k.cardinality == 0 || k.cardinality > u16::MAX as usize {
            return cfg("key cardinality must be in 1..=65535".into());
        }
        if k.timeout_ms == 0 {
            return cfg("key timeout must be positive".into());
        }
        if k.response_delay.min_ms > k.response_delay.max_ms {
            return cfg("response delay min exceeds max".into());
        }
        let r = &self.ring;
        if r.n == 0 || r.q_bits < 2 || r.q_bits >= r.p_bits {
            return cfg("ring needs n >= 1 and 2 <= q_bits < p_bits".into());
        }
        if self.timing.scan_interval_ms == 0 {
            return cfg("scan interval must be positive".into());
        }
        for f in &self.flows {
            for end in [f.source, f.sink] {
                match self.kind_of(end) {
                    None => return cfg(format!("flow endpoint {end} does not exist")),
                    Some(NodeKind::As) => return cfg("flows may not terminate at the AS".into()),
                    _ => {}
                }
            }
            if f.source == f.sink {
                return cfg(format!("flow from {} to itself", f.source));
            }
            if f.rate_bps == 0 || f.payload_bytes == 0 {
                return cfg("flow rate and payload must be positive".into());
            }
            if self.data_route(f.source, f.sink).is_none() {
                return cfg(format!("no route from {} to {}", f.source, f.sink));
            }
        }
        Ok(())
    }

    /// Same scenario in another key mode.
    pub fn with_mode(&self, mode: KeyMode) -> Self {
        SimScenario { mode, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimScenario { seed, ..self.clone() }
    }
}

fn wireless(a: NodeId, b: NodeId, delay_us: u64, bandwidth_bps: u64) -> LinkSpec {
    LinkSpec {
        a,
        b,
        wired: false,
        delay: DelayDist::Fixed { us: delay_us },
        loss: 0.0,
        bandwidth_bps,
    }
}

fn wired(a: NodeId, b: NodeId) -> LinkSpec {
    LinkSpec {
        a,
        b,
        wired: true,
        delay: DelayDist::Fixed { us: 500 },
        loss: 0.0,
        bandwidth_bps: 100_000_000,
    }
}

fn default_key_config() -> KeyConfig {
    KeyConfig {
        cardinality: 10,
        timeout_ms: 1_000,
        correction: true,
        response_delay: ResponseDelay {
            min_ms: 100,
            max_ms: 2_400,
            jitter_ms: 0,
        },
    }
}

const BACKBONE_BPS: u64 = 54_000_000;
const ACCESS_BPS: u64 = 11_000_000;

/// Number of mesh routers in [`build_paper_topology`].
pub const PAPER_ROUTERS: u32 = 5;
/// Mesh clients attached to each router in [`build_paper_topology`].
pub const PAPER_CLIENTS_PER_ROUTER: u32 = 9;

/// The evaluation topology: 5 MRs in a ring, 9 MCs per MR (50 mesh nodes),
/// plus the AS wired to the first router.
///
/// Node 0 is the AS, nodes 1..=5 the routers and 6..=50 the clients, with
/// clients `6 + 9(r-1) ..` attached to router `r`.
pub fn build_paper_topology() -> SimScenario {
    let mut nodes = vec![NodeSpec {
        id: 0,
        kind: NodeKind::As,
        start_ms: 0,
        clock_skew_us: 0,
    }];
    let mut links = vec![wired(0, 1)];
    for r in 1..=PAPER_ROUTERS {
        nodes.push(NodeSpec {
            id: r,
            kind: NodeKind::Mr,
            start_ms: 0,
            clock_skew_us: 0,
        });
        let next = r % PAPER_ROUTERS + 1;
        links.push(wireless(r, next, 2_000, BACKBONE_BPS));
    }
    for r in 1..=PAPER_ROUTERS {
        for j in 0..PAPER_CLIENTS_PER_ROUTER {
            let id = PAPER_ROUTERS + 1 + (r - 1) * PAPER_CLIENTS_PER_ROUTER + j;
            nodes.push(NodeSpec {
                id,
                kind: NodeKind::Mc,
                start_ms: 0,
                clock_skew_us: 0,
            });
            links.push(wireless(id, r, 1_000, ACCESS_BPS));
        }
    }
    let client = |router: u32, j: u32| PAPER_ROUTERS + 1 + (router - 1) * PAPER_CLIENTS_PER_ROUTER + j;
    let flows = vec![
        // TCP between a pair of routers.
        FlowSpec {
            source: 1,
            sink: 3,
            rate_bps: 4_000_000,
            payload_bytes: 1_460,
            start_ms: 10_000,
            duration_ms: 50_000,
            kind: TrafficKind::ReliableStream,
        },
        // 1 Mbps VoIP-style datagrams between two routers.
        FlowSpec {
            source: 2,
            sink: 4,
            rate_bps: 1_000_000,
            payload_bytes: 1_000,
            start_ms: 10_000,
            duration_ms: 50_000,
            kind: TrafficKind::Datagram,
        },
        FlowSpec {
            source: client(5, 0),
            sink: client(3, 0),
            rate_bps: 256_000,
            payload_bytes: 500,
            start_ms: 10_000,
            duration_ms: 50_000,
            kind: TrafficKind::Datagram,
        },
        FlowSpec {
            source: client(4, 1),
            sink: client(1, 1),
            rate_bps: 256_000,
            payload_bytes: 500,
            start_ms: 10_000,
            duration_ms: 50_000,
            kind: TrafficKind::ReliableStream,
        },
    ];
    SimScenario {
        name: "mesh-50".into(),
        seed: 1,
        duration_ms: 60_000,
        mode: KeyMode::RotatingKey,
        nodes,
        links,
        key: default_key_config(),
        ring: RingConfig {
            n: 5,
            p_bits: 128,
            q_bits: 64,
        },
        flows,
        timing: TimingConfig::default(),
    }
}

/// Four routers bootstrapping from a single AS-wired router: A (1) is wired
/// to the AS (0); B (2) and C (3) neighbor A and each other; D (4) is
/// reachable only through B and C.
pub fn build_bootstrap_topology() -> SimScenario {
    let node = |id, kind| NodeSpec {
        id,
        kind,
        start_ms: 0,
        clock_skew_us: 0,
    };
    SimScenario {
        name: "bootstrap-fig4".into(),
        seed: 1,
        duration_ms: 20_000,
        mode: KeyMode::RotatingKey,
        nodes: vec![
            node(0, NodeKind::As),
            node(1, NodeKind::Mr),
            node(2, NodeKind::Mr),
            node(3, NodeKind::Mr),
            node(4, NodeKind::Mr),
        ],
        links: vec![
            wired(0, 1),
            wireless(1, 2, 2_000, BACKBONE_BPS),
            wireless(1, 3, 2_000, BACKBONE_BPS),
            wireless(2, 3, 2_000, BACKBONE_BPS),
            wireless(2, 4, 2_000, BACKBONE_BPS),
            wireless(3, 4, 2_000, BACKBONE_BPS),
        ],
        key: default_key_config(),
        ring: RingConfig {
            n: 4,
            p_bits: 64,
            q_bits: 32,
        },
        flows: Vec::new(),
        timing: TimingConfig::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_topology_shape() {
        let s = build_paper_topology();
        s.validate().unwrap();
        assert_eq!(s.nodes.len(), 51);
        assert_eq!(s.nodes.iter().filter(|n| n.kind == NodeKind::Mr).count(), 5);
        assert_eq!(s.nodes.iter().filter(|n| n.kind == NodeKind::Mc).count(), 45);
        for r in 1..=5 {
            let clients = s
                .links
                .iter()
                .filter(|l| l.b == r && s.kind_of(l.a) == Some(NodeKind::Mc))
                .count();
            assert_eq!(clients, 9, "router {r}");
        }
    }

    #[test]
    fn routes() {
        let s = build_paper_topology();
        assert_eq!(s.data_route(1, 3).unwrap(), vec![1, 2, 3]);
        assert_eq!(s.data_route(2, 4).unwrap(), vec![2, 3, 4]);
        assert_eq!(s.path_to_server(4).unwrap(), vec![4, 5, 1, 0]);
        // Clients never relay.
        assert_eq!(s.data_route(6, 7).unwrap(), vec![6, 1, 7]);
    }

    #[test]
    fn validation_failures() {
        let base = build_bootstrap_topology();
        let mut s = base.clone();
        s.nodes[2].kind = NodeKind::As;
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.links.retain(|l| l.a != 0);
        assert!(s.validate().is_err());
        let mut s = base.clone();
        s.flows.push(FlowSpec {
            source: 1,
            sink: 99,
            rate_bps: 1,
            payload_bytes: 1,
            start_ms: 0,
            duration_ms: 1,
            kind: TrafficKind::Datagram,
        });
        assert!(s.validate().is_err());
        let mut s = base;
        s.key.cardinality = 0;
        assert!(s.validate().is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = build_paper_topology();
        let json = serde_json::to_string(&s).unwrap();
        let back: SimScenario = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
