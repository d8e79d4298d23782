//! The discrete-event loop.
//!
//! Events are ordered by `(time, node id, sequence number)`. Time is in
//! microseconds. Control traffic (association, authentication, key-list
//! messages) is lossless and pre-empts queued data on each link, but still
//! occupies link capacity; data packets queue FIFO per link direction.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::metrics::{ControlCounts, Metrics, PacketCounts};
use super::scenario::{
    Adjacency, DelayDist, KeyMode, NodeId, NodeKind, SimScenario, TrafficKind,
};
use crate::error::{Error, Result};
use crate::group::seeded_rng;
use crate::keylist::{key_list_response_len, KeyDistributor, KeyList, KeyListRequest, SchedulerState};
use crate::ring::{
    client_confirm, derive_seed, generate_ring, generate_server, sign_and_initiate, AuthServer, ClientSession,
    ClientVerdict, CombiningConfig, RingDirectory, RingSignature, ServerPublic, ServerResponse, ServerVerdict,
};
use crate::trapdoor::TrapdoorPrivate;

const ASSOC_MESSAGE_BYTES: usize = 64;
const REPLAY_WINDOW: usize = 4096;

/// Join progress of a node. Clients stop at `AssociatedAsMc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum JoinPhase {
    Detached,
    AssociatedAsMc,
    AuthenticatedToAs,
    FullMr,
}

impl JoinPhase {
    pub fn next(self) -> Option<Self> {
        match self {
            JoinPhase::Detached => Some(JoinPhase::AssociatedAsMc),
            JoinPhase::AssociatedAsMc => Some(JoinPhase::AuthenticatedToAs),
            JoinPhase::AuthenticatedToAs => Some(JoinPhase::FullMr),
            JoinPhase::FullMr => None,
        }
    }
}

/// One processed event, for debugging and determinism checks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_us: u64,
    pub node: NodeId,
    pub event: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub metrics: Metrics,
    pub trace: Vec<TraceRecord>,
}

impl SimOutput {
    /// Join-related records for `node`, in processing order.
    pub fn join_trace(&self, node: NodeId) -> Vec<&TraceRecord> {
        self.trace
            .iter()
            .filter(|r| r.node == node && r.event.starts_with("join:"))
            .collect()
    }

    /// The trace as newline-delimited JSON.
    pub fn trace_ndjson(&self) -> String {
        let mut out = String::new();
        for r in &self.trace {
            out.push_str(&serde_json::to_string(r).expect("trace records serialize"));
            out.push('\n');
        }
        out
    }
}

/// Runs `scenario` to completion.
pub fn run(scenario: &SimScenario) -> Result<Metrics> {
    Ok(Simulator::new(scenario, false)?.run()?.metrics)
}

/// Runs `scenario` and records every processed event.
pub fn run_with_trace(scenario: &SimScenario) -> Result<SimOutput> {
    Simulator::new(scenario, true)?.run()
}

/// Digest of the scenario with its key mode normalized.
pub fn scenario_fingerprint(scenario: &SimScenario) -> String {
    let normalized = scenario.with_mode(KeyMode::StaticKey);
    let json = serde_json::to_vec(&normalized).expect("scenario serializes");
    hex::encode(Sha256::digest(&json))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum RequestKind {
    Current,
    Next,
}

#[derive(Debug, Clone)]
struct Packet {
    flow: usize,
    payload: u32,
    /// `(TS_KL, key index)` of the key the last backbone hop used.
    tag: Option<(u64, u64)>,
}

#[derive(Debug, Clone)]
enum Msg {
    AssocRequest,
    AssocAccept,
    AuthRequest {
        sig: Box<RingSignature>,
        identity: Vec<u8>,
    },
    AuthResponse(Option<Box<ServerResponse>>),
    KeyRequest {
        kind: RequestKind,
        req: KeyListRequest,
    },
    /// `None` hands out the static key.
    KeyResponse(Option<Rc<KeyList>>),
    Data(Packet),
}

impl Msg {
    fn label(&self) -> &'static str {
        match self {
            Msg::AssocRequest => "assoc-request",
            Msg::AssocAccept => "assoc-accept",
            Msg::AuthRequest { .. } => "auth-request",
            Msg::AuthResponse(_) => "auth-response",
            Msg::KeyRequest { .. } => "key-request",
            Msg::KeyResponse(_) => "key-response",
            Msg::Data(_) => "data",
        }
    }
}

#[derive(Debug)]
enum Event {
    Scan,
    Arrive { path: Rc<[NodeId]>, hop: usize, msg: Msg },
    Send { path: Rc<[NodeId]>, msg: Msg, bytes: usize },
    FlowTick { flow: usize },
    Retransmit { flow: usize },
    Renew { ts_kl: u64 },
    KeyExpiry,
}

#[derive(Debug)]
struct Scheduled {
    time: u64,
    node: NodeId,
    seq: u64,
    event: Event,
}

impl Scheduled {
    fn key(&self) -> (u64, NodeId, u64) {
        (self.time, self.node, self.seq)
    }
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

#[derive(Debug)]
struct NodeState {
    kind: NodeKind,
    start_us: u64,
    skew_us: i64,
    phase: JoinPhase,
    peer: Option<NodeId>,
    assoc_pending: bool,
    lists: Vec<Rc<KeyList>>,
    static_key: bool,
    sched: SchedulerState,
    pending_request: bool,
    request_counter: u32,
    auth_counter: u32,
    session: Option<ClientSession>,
    first_path: Option<Rc<[NodeId]>>,
    response_delay_us: u64,
    had_key: bool,
    outage_since: Option<u64>,
    outage_us: u64,
}

#[derive(Debug, Clone, Copy)]
struct LinkState {
    a: NodeId,
    delay: DelayDist,
    loss: f64,
    bandwidth_bps: u64,
    /// Transmitter free time, indexed by direction (0: a→b, 1: b→a).
    busy_until: [u64; 2],
}

struct Crypto {
    ring: RingDirectory,
    secrets: Vec<TrapdoorPrivate>,
    server_public: ServerPublic,
    cfg: CombiningConfig,
    server: AuthServer,
    /// Ring slot used by each router.
    slot: BTreeMap<NodeId, usize>,
}

impl Crypto {
    fn new(s: &SimScenario) -> Result<Self> {
        let seed = s.seed.to_be_bytes();
        let (ring, secrets) = generate_ring(s.ring.n, s.ring.p_bits, s.ring.q_bits, &derive_seed(&seed, "sim-ring", 0))?;
        let cfg = ring.combining_config()?;
        let keys = generate_server(s.ring.p_bits, s.ring.q_bits, &derive_seed(&seed, "sim-server", 0))?;
        let server_public = keys.public();
        let server = AuthServer::new(keys, ring.clone(), cfg, REPLAY_WINDOW);
        let slot = s
            .nodes
            .iter()
            .filter(|n| n.kind.is_backbone())
            .enumerate()
            .map(|(i, n)| (n.id, i % s.ring.n))
            .collect();
        Ok(Crypto {
            ring,
            secrets,
            server_public,
            cfg,
            server,
            slot,
        })
    }
}

struct Simulator<'a> {
    s: &'a SimScenario,
    rng: ChaCha20Rng,
    now: u64,
    end: u64,
    seq: u64,
    queue: BinaryHeap<Scheduled>,
    nodes: BTreeMap<NodeId, NodeState>,
    links: Vec<LinkState>,
    link_of: BTreeMap<(NodeId, NodeId), usize>,
    adjacency: Adjacency,
    server_id: NodeId,
    server_paths: BTreeMap<NodeId, Rc<[NodeId]>>,
    flow_routes: Vec<Rc<[NodeId]>>,
    distributor: KeyDistributor,
    timeout_us: u64,
    crypto: Crypto,
    packets: PacketCounts,
    delivered_bytes: u64,
    control: ControlCounts,
    signature_bytes: BTreeMap<NodeId, usize>,
    join_latency: BTreeMap<NodeId, Option<u64>>,
    join_order: Vec<NodeId>,
    trace: Option<Vec<TraceRecord>>,
}

impl<'a> Simulator<'a> {
    fn new(s: &'a SimScenario, tracing: bool) -> Result<Self> {
        s.validate()?;
        let mut rng = seeded_rng("mesh-sim", &s.seed.to_be_bytes());
        let server_id = s.auth_server().expect("validated");
        let adjacency = Adjacency::new(s);
        let rd = &s.key.response_delay;
        let mut nodes = BTreeMap::new();
        for n in &s.nodes {
            let response_delay_us = rng.gen_range(rd.min_ms * 1000..=rd.max_ms * 1000);
            nodes.insert(
                n.id,
                NodeState {
                    kind: n.kind,
                    start_us: n.start_ms * 1000,
                    skew_us: n.clock_skew_us,
                    phase: JoinPhase::Detached,
                    peer: None,
                    assoc_pending: false,
                    lists: Vec::new(),
                    static_key: false,
                    sched: SchedulerState::default(),
                    pending_request: false,
                    request_counter: 0,
                    auth_counter: 0,
                    session: None,
                    first_path: None,
                    response_delay_us,
                    had_key: false,
                    outage_since: None,
                    outage_us: 0,
                },
            );
        }
        let links: Vec<LinkState> = s
            .links
            .iter()
            .map(|l| LinkState {
                a: l.a,
                delay: l.delay,
                loss: l.loss,
                bandwidth_bps: l.bandwidth_bps,
                busy_until: [0, 0],
            })
            .collect();
        let mut link_of = BTreeMap::new();
        for (i, l) in s.links.iter().enumerate() {
            link_of.entry((l.a, l.b)).or_insert(i);
            link_of.entry((l.b, l.a)).or_insert(i);
        }
        let mut server_paths = BTreeMap::new();
        for n in s.nodes.iter().filter(|n| n.kind.is_backbone()) {
            let path = s.path_to_server(n.id).expect("validated");
            server_paths.insert(n.id, Rc::from(path));
        }
        let flow_routes = s
            .flows
            .iter()
            .map(|f| Rc::from(s.data_route(f.source, f.sink).expect("validated")))
            .collect();
        let timeout_us = s.key.timeout_ms * 1000;
        let distributor = KeyDistributor::new(&s.seed.to_be_bytes(), 0, s.key.cardinality, timeout_us)?;
        let join_latency = s
            .nodes
            .iter()
            .filter(|n| n.kind != NodeKind::As)
            .map(|n| (n.id, None))
            .collect();
        Ok(Simulator {
            s,
            rng,
            now: 0,
            end: s.duration_ms * 1000,
            seq: 0,
            queue: BinaryHeap::new(),
            nodes,
            links,
            link_of,
            adjacency,
            server_id,
            server_paths,
            flow_routes,
            distributor,
            timeout_us,
            crypto: Crypto::new(s)?,
            packets: PacketCounts::default(),
            delivered_bytes: 0,
            control: ControlCounts::default(),
            signature_bytes: BTreeMap::new(),
            join_latency,
            join_order: Vec::new(),
            trace: tracing.then(Vec::new),
        })
    }

    fn rotating(&self) -> bool {
        self.s.mode == KeyMode::RotatingKey
    }

    fn schedule(&mut self, time: u64, node: NodeId, event: Event) {
        if time >= self.end {
            return;
        }
        self.seq += 1;
        self.queue.push(Scheduled {
            time,
            node,
            seq: self.seq,
            event,
        });
    }

    fn record(&mut self, node: NodeId, event: impl FnOnce() -> String) {
        if let Some(trace) = self.trace.as_mut() {
            trace.push(TraceRecord {
                t_us: self.now,
                node,
                event: event(),
            });
        }
    }

    fn local_time(&self, node: NodeId, t: u64) -> u64 {
        let skew = self.nodes[&node].skew_us;
        (t as i64).saturating_add(skew).max(0) as u64
    }

    fn global_time(&self, node: NodeId, local: u64) -> u64 {
        let skew = self.nodes[&node].skew_us;
        (local as i64).saturating_sub(skew).max(0) as u64
    }

    fn run(mut self) -> Result<SimOutput> {
        for n in &self.s.nodes {
            if n.kind != NodeKind::As {
                self.schedule(n.start_ms * 1000, n.id, Event::Scan);
            }
        }
        for (i, f) in self.s.flows.iter().enumerate() {
            self.schedule(f.start_ms * 1000, f.source, Event::FlowTick { flow: i });
        }
        while let Some(item) = self.queue.pop() {
            debug_assert!(item.time >= self.now);
            self.now = item.time;
            self.dispatch(item.node, item.event)?;
        }
        self.now = self.end;
        self.finish()
    }

    fn dispatch(&mut self, node: NodeId, event: Event) -> Result<()> {
        match event {
            Event::Scan => self.on_scan(node),
            Event::Arrive { path, hop, msg } => self.on_arrive(path, hop, msg),
            Event::Send { path, msg, bytes } => {
                self.send_control(path, msg, bytes);
                Ok(())
            }
            Event::FlowTick { flow } => {
                let f = &self.s.flows[flow];
                let next = self.now + f.interval_us();
                if next < (f.start_ms + f.duration_ms) * 1000 {
                    self.schedule(next, node, Event::FlowTick { flow });
                }
                self.inject(flow)
            }
            Event::Retransmit { flow } => self.inject(flow),
            Event::Renew { ts_kl } => self.on_renew(node, ts_kl),
            Event::KeyExpiry => self.on_key_expiry(node),
        }
    }

    fn advance_phase(&mut self, node: NodeId, to: JoinPhase) -> Result<()> {
        let st = self.nodes.get_mut(&node).expect("known node");
        if st.phase.next() != Some(to) {
            return Err(Error::Invariant(format!(
                "node {node} jumped from {:?} to {to:?}",
                st.phase
            )));
        }
        st.phase = to;
        let finished = match st.kind {
            NodeKind::Mc => to == JoinPhase::AssociatedAsMc,
            _ => to == JoinPhase::FullMr,
        };
        if finished {
            let latency = self.now - st.start_us;
            self.join_latency.insert(node, Some(latency));
            self.join_order.push(node);
        }
        self.record(node, || format!("join:{to:?}"));
        Ok(())
    }

    fn is_joined(&self, node: NodeId) -> bool {
        let st = &self.nodes[&node];
        match st.kind {
            NodeKind::As => true,
            NodeKind::Mc => st.phase >= JoinPhase::AssociatedAsMc,
            _ => st.phase == JoinPhase::FullMr,
        }
    }

    fn hop_distance(&self, node: NodeId) -> usize {
        if node == self.server_id {
            0
        } else {
            self.server_paths[&node].len() - 1
        }
    }

    // ---- join ----------------------------------------------------------

    fn on_scan(&mut self, node: NodeId) -> Result<()> {
        let st = &self.nodes[&node];
        if st.phase != JoinPhase::Detached || st.assoc_pending {
            return Ok(());
        }
        let backbone = st.kind.is_backbone();
        let candidate = self.adjacency.neighbors[&node]
            .iter()
            .filter(|&&(w, link)| {
                if w == self.server_id {
                    backbone && self.s.links[link].wired
                } else {
                    self.nodes[&w].kind.is_backbone() && self.nodes[&w].phase == JoinPhase::FullMr
                }
            })
            .map(|&(w, _)| (self.hop_distance(w), w))
            .min();
        match candidate {
            None => {
                self.record(node, || "join:scan-none".into());
                let next = self.now + self.s.timing.scan_interval_ms * 1000;
                self.schedule(next, node, Event::Scan);
            }
            Some((_, peer)) => {
                self.record(node, || format!("join:scan-found:{peer}"));
                let st = self.nodes.get_mut(&node).expect("known node");
                st.peer = Some(peer);
                st.assoc_pending = true;
                self.send_control(Rc::from([node, peer]), Msg::AssocRequest, ASSOC_MESSAGE_BYTES);
            }
        }
        Ok(())
    }

    fn start_authentication(&mut self, node: NodeId) -> Result<()> {
        let peer = self.nodes[&node].peer.expect("associated node has a peer");
        let path: Rc<[NodeId]> = if peer == self.server_id {
            Rc::from([node, peer])
        } else {
            let mut p = vec![node];
            p.extend_from_slice(&self.server_paths[&peer]);
            Rc::from(p)
        };
        let st = self.nodes.get_mut(&node).expect("known node");
        st.auth_counter += 1;
        let counter = st.auth_counter;
        st.first_path = Some(path.clone());
        let identity = format!("node-{node}-auth-{counter}").into_bytes();
        let slot = self.crypto.slot[&node];
        let seed = derive_seed(&self.s.seed.to_be_bytes(), "sim-sign", ((node as u64) << 32) | counter as u64);
        let (sig, session) = sign_and_initiate(
            &self.crypto.ring,
            slot,
            &self.crypto.secrets[slot],
            &self.crypto.server_public,
            &identity,
            &self.crypto.cfg,
            &seed,
        )?;
        let sig_len = sig.encode(&self.crypto.cfg)?.len();
        self.signature_bytes.insert(node, sig_len);
        self.nodes.get_mut(&node).expect("known node").session = Some(session);
        let bytes = sig_len + identity.len();
        self.send_control(
            path,
            Msg::AuthRequest {
                sig: Box::new(sig),
                identity,
            },
            bytes,
        );
        Ok(())
    }

    fn request_keys(&mut self, node: NodeId, kind: RequestKind, path: Rc<[NodeId]>) {
        let local = self.local_time(node, self.now);
        let st = self.nodes.get_mut(&node).expect("known node");
        st.sched.record_request(local);
        st.pending_request = true;
        let req = KeyListRequest {
            node_id: node,
            counter: st.request_counter,
        };
        st.request_counter += 1;
        self.control.key_requests += 1;
        self.record(node, || format!("keys:request:{kind:?}"));
        self.send_control(path, Msg::KeyRequest { kind, req }, req.encode().len());
    }

    // ---- message delivery ---------------------------------------------

    fn link_between(&self, from: NodeId, to: NodeId) -> (usize, usize) {
        let idx = self.link_of[&(from, to)];
        let dir = if self.links[idx].a == from { 0 } else { 1 };
        (idx, dir)
    }

    fn sample_delay(&mut self, delay: DelayDist) -> u64 {
        match delay {
            DelayDist::Fixed { us } => us,
            DelayDist::Uniform { min_us, max_us } => self.rng.gen_range(min_us..=max_us),
        }
    }

    fn tx_time(bytes: usize, bandwidth_bps: u64) -> u64 {
        ((bytes as u64 * 8 * 1_000_000).div_ceil(bandwidth_bps)).max(1)
    }

    /// Sends a control message from `path[0]` one hop onward.
    fn send_control(&mut self, path: Rc<[NodeId]>, msg: Msg, bytes: usize) {
        self.control.messages += 1;
        self.forward_control(path, 0, msg, bytes);
    }

    fn forward_control(&mut self, path: Rc<[NodeId]>, hop: usize, msg: Msg, bytes: usize) {
        let (idx, dir) = self.link_between(path[hop], path[hop + 1]);
        let tx = Self::tx_time(bytes, self.links[idx].bandwidth_bps);
        let prop = self.sample_delay(self.links[idx].delay);
        let link = &mut self.links[idx];
        link.busy_until[dir] = link.busy_until[dir].max(self.now) + tx;
        self.control.bytes += bytes as u64;
        let arrival = self.now + tx + prop;
        let to = path[hop + 1];
        self.schedule(arrival, to, Event::Arrive { path, hop: hop + 1, msg });
    }

    fn control_size(&self, msg: &Msg) -> usize {
        match msg {
            Msg::AssocRequest | Msg::AssocAccept => ASSOC_MESSAGE_BYTES,
            Msg::AuthRequest { sig, identity } => {
                sig.encode(&self.crypto.cfg).map(|b| b.len()).unwrap_or(0) + identity.len()
            }
            Msg::AuthResponse(r) => r.as_ref().map_or(1, |r| r.encode().len()),
            Msg::KeyRequest { req, .. } => req.encode().len(),
            Msg::KeyResponse(list) => key_list_response_len(list.as_ref().map_or(1, |l| l.cardinality())),
            Msg::Data(p) => (p.payload + self.s.timing.header_bytes) as usize,
        }
    }

    fn reply(&mut self, path: &Rc<[NodeId]>, after_us: u64, msg: Msg) {
        let back: Rc<[NodeId]> = path.iter().rev().copied().collect::<Vec<_>>().into();
        let bytes = self.control_size(&msg);
        let from = back[0];
        self.schedule(self.now + after_us, from, Event::Send { path: back, msg, bytes });
    }

    fn on_arrive(&mut self, path: Rc<[NodeId]>, hop: usize, msg: Msg) -> Result<()> {
        let node = path[hop];
        if let Msg::Data(packet) = msg {
            return self.on_data(path, hop, packet);
        }
        if hop + 1 < path.len() {
            let bytes = self.control_size(&msg);
            self.forward_control(path, hop, msg, bytes);
            return Ok(());
        }
        self.record(node, || format!("recv:{}", msg.label()));
        match msg {
            Msg::AssocRequest => {
                let after = self.s.timing.association_us;
                self.reply(&path, after, Msg::AssocAccept);
            }
            Msg::AssocAccept => {
                self.nodes.get_mut(&node).expect("known node").assoc_pending = false;
                self.advance_phase(node, JoinPhase::AssociatedAsMc)?;
                if self.nodes[&node].kind.is_backbone() {
                    self.start_authentication(node)?;
                }
            }
            Msg::AuthRequest { sig, identity } => {
                let requester = path[0];
                let seed = derive_seed(&self.s.seed.to_be_bytes(), "sim-server", self.control.auth_exchanges);
                self.control.auth_exchanges += 1;
                let verdict = match self.crypto.server.handle(&sig, &identity, &seed) {
                    Ok(v) => v,
                    Err(_) => ServerVerdict::Reject(crate::ring::RejectReason::RingEquation),
                };
                let response = match verdict {
                    ServerVerdict::Accept { response, .. } => Some(Box::new(response)),
                    ServerVerdict::Reject(reason) => {
                        self.control.auth_rejects += 1;
                        self.record(requester, || format!("auth:reject:{reason}"));
                        None
                    }
                };
                let after = self.s.timing.auth_service_us;
                self.reply(&path, after, Msg::AuthResponse(response));
            }
            Msg::AuthResponse(response) => {
                let accepted = match (response, self.nodes[&node].session.as_ref()) {
                    (Some(resp), Some(session)) => matches!(client_confirm(session, &resp), ClientVerdict::Accept(_)),
                    _ => false,
                };
                if accepted {
                    self.advance_phase(node, JoinPhase::AuthenticatedToAs)?;
                    let path = self.nodes[&node].first_path.clone().expect("set at authentication");
                    self.request_keys(node, RequestKind::Current, path);
                } else {
                    self.record(node, || "join:auth-failed".into());
                    // Retry over the same association with a fresh identity.
                    self.start_authentication(node)?;
                }
            }
            Msg::KeyRequest { kind, req } => {
                let requester = req.node_id;
                let as_local = self.local_time(node, self.now);
                let list = self.rotating().then(|| {
                    Rc::new(match kind {
                        RequestKind::Current => self.distributor.current_list(as_local),
                        RequestKind::Next => self.distributor.next_list(as_local),
                    })
                });
                let jitter_ms = self.s.key.response_delay.jitter_ms;
                let jitter = if jitter_ms > 0 { self.rng.gen_range(0..=jitter_ms * 1000) } else { 0 };
                let after = self.nodes[&requester].response_delay_us + jitter;
                self.reply(&path, after, Msg::KeyResponse(list));
            }
            Msg::KeyResponse(list) => self.on_key_response(node, list)?,
            Msg::Data(_) => unreachable!("handled above"),
        }
        Ok(())
    }

    // ---- key lists -----------------------------------------------------

    fn key_tag(&self, node: NodeId, t: u64) -> Option<(u64, u64)> {
        let local = self.local_time(node, t);
        let st = &self.nodes[&node];
        st.lists.iter().find(|l| l.covers(local)).map(|l| {
            let (_, handle) = l.lookup(local).expect("covering list yields a key");
            (l.ts_kl, handle.key_idx)
        })
    }

    fn has_key(&self, node: NodeId, t: u64) -> bool {
        self.nodes[&node].static_key || self.key_tag(node, t).is_some()
    }

    fn on_key_response(&mut self, node: NodeId, list: Option<Rc<KeyList>>) -> Result<()> {
        self.control.key_responses += 1;
        let local = self.local_time(node, self.now);
        let timeout = self.timeout_us;
        let correction = self.s.key.correction;
        {
            let st = self.nodes.get_mut(&node).expect("known node");
            st.pending_request = false;
            st.sched.record_response(local, timeout);
            if !correction {
                st.sched.c = 0;
            }
        }
        match list {
            None => {
                self.nodes.get_mut(&node).expect("known node").static_key = true;
            }
            Some(list) => {
                let expiry = self.global_time(node, list.expires_at());
                {
                    let st = self.nodes.get_mut(&node).expect("known node");
                    st.lists.retain(|l| l.expires_at() > local && l.ts_kl != list.ts_kl);
                    st.lists.push(list.clone());
                    st.lists.sort_by_key(|l| l.ts_kl);
                }
                if expiry > self.now {
                    self.schedule(expiry, node, Event::KeyExpiry);
                }
                let c = self.nodes[&node].sched.c;
                self.record(node, || format!("keys:install:{}:c={c}", list.ts_kl));
                if self.has_key(node, self.now) {
                    let st = self.nodes.get_mut(&node).expect("known node");
                    st.had_key = true;
                    if let Some(since) = st.outage_since.take() {
                        st.outage_us += self.now - since;
                    }
                }
                self.schedule_renewal(node)?;
            }
        }
        if self.nodes[&node].phase == JoinPhase::AuthenticatedToAs {
            self.advance_phase(node, JoinPhase::FullMr)?;
        }
        Ok(())
    }

    fn schedule_renewal(&mut self, node: NodeId) -> Result<()> {
        let local = self.local_time(node, self.now);
        let st = &self.nodes[&node];
        let latest = st.lists.last().expect("just installed").clone();
        if latest.expires_at() <= local {
            let path = self.server_paths[&node].clone();
            self.request_keys(node, RequestKind::Current, path);
            return Ok(());
        }
        let trigger = st.sched.trigger_index(latest.cardinality() as u64);
        let at_local = latest.window_start(trigger).max(local);
        let at = self.global_time(node, at_local).max(self.now);
        self.schedule(at, node, Event::Renew { ts_kl: latest.ts_kl });
        Ok(())
    }

    fn on_renew(&mut self, node: NodeId, ts_kl: u64) -> Result<()> {
        let st = &self.nodes[&node];
        if st.pending_request || st.lists.last().map(|l| l.ts_kl) != Some(ts_kl) {
            return Ok(());
        }
        let path = self.server_paths[&node].clone();
        self.request_keys(node, RequestKind::Next, path);
        Ok(())
    }

    fn on_key_expiry(&mut self, node: NodeId) -> Result<()> {
        if self.has_key(node, self.now) {
            return Ok(());
        }
        self.record(node, || "keys:outage".into());
        let st = self.nodes.get_mut(&node).expect("known node");
        if st.had_key && st.outage_since.is_none() {
            st.outage_since = Some(self.now);
        }
        if !st.pending_request {
            let path = self.server_paths[&node].clone();
            self.request_keys(node, RequestKind::Current, path);
        }
        Ok(())
    }

    // ---- data ----------------------------------------------------------

    fn inject(&mut self, flow: usize) -> Result<()> {
        self.packets.sent += 1;
        self.packets.in_flight += 1;
        let packet = Packet {
            flow,
            payload: self.s.flows[flow].payload_bytes,
            tag: None,
        };
        let route = self.flow_routes[flow].clone();
        self.forward_data(route, 0, packet)
    }

    fn drop_packet(&mut self, packet: &Packet, cause: DropCause) {
        self.packets.in_flight -= 1;
        let d = &mut self.packets.dropped;
        match cause {
            DropCause::NoKey => d.no_key += 1,
            DropCause::InFlightAtExpiry => d.in_flight_at_expiry += 1,
            DropCause::LinkLoss => d.link_loss += 1,
        }
        let f = &self.s.flows[packet.flow];
        if f.kind == TrafficKind::ReliableStream {
            let at = self.now + self.s.timing.retransmit_timeout_ms * 1000;
            self.schedule(at, f.source, Event::Retransmit { flow: packet.flow });
        }
    }

    fn is_backbone_hop(&self, u: NodeId, w: NodeId) -> bool {
        self.nodes[&u].kind.is_backbone() && self.nodes[&w].kind.is_backbone()
    }

    fn forward_data(&mut self, path: Rc<[NodeId]>, hop: usize, mut packet: Packet) -> Result<()> {
        let (u, w) = (path[hop], path[hop + 1]);
        if !self.is_joined(u) || !self.is_joined(w) {
            self.drop_packet(&packet, DropCause::NoKey);
            return Ok(());
        }
        let keyed = self.rotating() && self.is_backbone_hop(u, w);
        let timing = &self.s.timing;
        let service = timing.crypto_service_us + if keyed { timing.key_lookup_us } else { 0 };
        let bytes = (packet.payload + timing.header_bytes) as usize;
        let (idx, dir) = self.link_between(u, w);
        let link = self.links[idx];
        let start = (self.now + service).max(link.busy_until[dir]);
        packet.tag = None;
        if keyed {
            match self.key_tag(u, start) {
                None => {
                    self.drop_packet(&packet, DropCause::NoKey);
                    return Ok(());
                }
                Some(tag) => {
                    self.assert_key_live(u, start, tag)?;
                    packet.tag = Some(tag);
                }
            }
        }
        let tx = Self::tx_time(bytes, link.bandwidth_bps);
        self.links[idx].busy_until[dir] = start + tx;
        let prop = self.sample_delay(link.delay);
        if link.loss > 0.0 && self.rng.gen_bool(link.loss) {
            self.drop_packet(&packet, DropCause::LinkLoss);
            return Ok(());
        }
        self.schedule(
            start + tx + prop,
            w,
            Event::Arrive {
                path,
                hop: hop + 1,
                msg: Msg::Data(packet),
            },
        );
        Ok(())
    }

    /// A backbone transmission must use a key that is live at send time.
    fn assert_key_live(&self, node: NodeId, t: u64, (ts_kl, idx): (u64, u64)) -> Result<()> {
        let local = self.local_time(node, t);
        let live = self.nodes[&node]
            .lists
            .iter()
            .any(|l| l.ts_kl == ts_kl && l.lookup(local).map(|(_, h)| h.key_idx) == Ok(idx));
        if !live {
            return Err(Error::Invariant(format!(
                "node {node} transmitting under expired key {ts_kl}/{idx} at {t}"
            )));
        }
        Ok(())
    }

    fn on_data(&mut self, path: Rc<[NodeId]>, hop: usize, packet: Packet) -> Result<()> {
        let node = path[hop];
        if let Some(tag) = packet.tag {
            match self.key_tag(node, self.now) {
                None => {
                    self.drop_packet(&packet, DropCause::NoKey);
                    return Ok(());
                }
                Some(mine) if mine != tag => {
                    self.drop_packet(&packet, DropCause::InFlightAtExpiry);
                    return Ok(());
                }
                Some(_) => {}
            }
        }
        if hop + 1 == path.len() {
            self.packets.in_flight -= 1;
            self.packets.delivered += 1;
            self.delivered_bytes += packet.payload as u64;
            return Ok(());
        }
        self.forward_data(path, hop, packet)
    }

    // ---- wrap-up -------------------------------------------------------

    fn finish(mut self) -> Result<SimOutput> {
        let p = &self.packets;
        if p.delivered + p.dropped.total() + p.in_flight != p.sent {
            return Err(Error::Invariant(format!("packet conservation violated: {p:?}")));
        }
        let mut key_outage_us = BTreeMap::new();
        if self.rotating() {
            for (&id, st) in self.nodes.iter_mut() {
                if !st.kind.is_backbone() {
                    continue;
                }
                if let Some(since) = st.outage_since.take() {
                    st.outage_us += self.end - since;
                }
                key_outage_us.insert(id, st.outage_us);
            }
        }
        let secs = self.end as f64 / 1e6;
        let throughput_bps = if secs > 0.0 {
            self.delivered_bytes as f64 * 8.0 / secs
        } else {
            0.0
        };
        let metrics = Metrics {
            scenario: self.s.name.clone(),
            fingerprint: scenario_fingerprint(self.s),
            seed: self.s.seed,
            mode: self.s.mode,
            sim_time_us: self.end,
            packets: self.packets,
            delivered_payload_bytes: self.delivered_bytes,
            throughput_bps,
            control: self.control,
            key_outage_us,
            signature_bytes: self.signature_bytes,
            join_latency_us: self.join_latency,
            join_order: self.join_order,
        };
        Ok(SimOutput {
            metrics,
            trace: self.trace.unwrap_or_default(),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum DropCause {
    NoKey,
    InFlightAtExpiry,
    LinkLoss,
}
