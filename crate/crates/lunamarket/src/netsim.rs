//! Deterministic discrete-event message network.
//!
//! Nodes are single-hop peers over undirected links with base latency,
//! bounded uniform jitter, optional bandwidth, drop probability and
//! partition flags. An Earth-to-Moon traversal is one aggregate link
//! that must carry at least 5000 ms of one-way latency; the robot mesh
//! defaults to 50 ms. Jitter and drops come from a seeded ChaCha8
//! stream, so a fixed seed replays the exact same delivery schedule.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::contentstore::Blob;
use crate::ledger::{AccountId, Micro};
use crate::marketplace::{ContractId, JobParams, JobRequest, MapMetadata};

pub const DEFAULT_MESH_LATENCY_MS: u64 = 50;
pub const DEFAULT_EARTH_LATENCY_MS: u64 = 5_000;
/// Physical floor for one Earth-Moon traversal.
pub const EARTH_LATENCY_FLOOR_MS: u64 = 5_000;

pub const JOB_REQUEST_MSG_BYTES: u64 = 2_048;
pub const BID_MSG_BYTES: u64 = 256;
pub const CONTRACT_MSG_BYTES: u64 = 512;
pub const LEDGER_TX_MSG_BYTES: u64 = 512;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(name: &str) -> NodeId {
        NodeId(name.to_string())
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeRole {
    EarthStation,
    Robot,
    Sequencer,
}

#[derive(Clone, Debug)]
pub struct NodeSpec {
    pub id: NodeId,
    pub role: NodeRole,
}

/// Per-link parameters; absent links fall back to role-based defaults.
#[derive(Clone, Debug)]
pub struct LinkConfig {
    pub a: NodeId,
    pub b: NodeId,
    pub latency_ms: u64,
    pub jitter_ms: u64,
    pub bandwidth_bytes_per_sec: Option<u64>,
    pub drop_prob: f64,
}

#[derive(Clone, Debug, Default)]
pub struct LinkDefaults {
    pub jitter_ms: u64,
    pub drop_prob: f64,
    pub bandwidth_bytes_per_sec: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct TopologySpec {
    pub nodes: Vec<NodeSpec>,
    /// Overrides for specific pairs; all other pairs get default links.
    pub links: Vec<LinkConfig>,
    pub defaults: LinkDefaults,
}

#[derive(Debug, Error, PartialEq)]
pub enum NetError {
    #[error("duplicate node id {0}")]
    DuplicateNode(NodeId),
    #[error("link references unknown node {0}")]
    DanglingLink(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("earth link {a}<->{b} latency {latency_ms} ms below the {floor} ms floor")]
    EarthLinkBelowFloor {
        a: NodeId,
        b: NodeId,
        latency_ms: u64,
        floor: u64,
    },
    #[error("step target {requested} is before the current time {now}")]
    TimeWentBackwards { requested: u64, now: u64 },
}

/// Typed message payloads moving between nodes.
#[derive(Clone, Debug)]
pub enum Payload {
    JobRequest(JobRequestMsg),
    Bid(BidMsg),
    Contract(ContractMsg),
    LedgerTx(LedgerTxMsg),
    Deliverable(DeliverableMsg),
}

/// Job-request traffic: a client's posting inbound to the sequencer, or
/// the sequencer's announcement of an opened contract.
#[derive(Clone, Debug)]
pub enum JobRequestMsg {
    Post(JobParams),
    Announce {
        contract_id: ContractId,
        job: JobRequest,
    },
}

#[derive(Clone, Debug)]
pub struct BidMsg {
    pub contract_id: ContractId,
    pub bidder: AccountId,
    pub price_micro: Micro,
}

/// Contract status traffic (standing-low updates, finalization notices,
/// execution orders, settlement notices).
#[derive(Clone, Debug)]
pub enum ContractMsg {
    StandingLow {
        contract_id: ContractId,
        price_micro: Micro,
        bidder: AccountId,
    },
    Finalized {
        contract_id: ContractId,
        winner: AccountId,
        price_micro: Micro,
    },
    Expired {
        contract_id: ContractId,
    },
    ExecutionOrder {
        contract_id: ContractId,
    },
    Failed {
        contract_id: ContractId,
        reason: String,
    },
    Settled {
        contract_id: ContractId,
        winner: AccountId,
        price_micro: Micro,
    },
}

/// A signed ledger interaction carried over the network (the client's
/// escrow authorization).
#[derive(Clone, Debug)]
pub struct LedgerTxMsg {
    pub contract_id: ContractId,
    pub accept: bool,
}

#[derive(Clone, Debug)]
pub struct DeliverableMsg {
    pub contract_id: ContractId,
    pub blob: Blob,
    pub metadata: MapMetadata,
}

impl Payload {
    pub fn size_bytes(&self) -> u64 {
        match self {
            Payload::JobRequest(_) => JOB_REQUEST_MSG_BYTES,
            Payload::Bid(_) => BID_MSG_BYTES,
            Payload::Contract(_) => CONTRACT_MSG_BYTES,
            Payload::LedgerTx(_) => LEDGER_TX_MSG_BYTES,
            Payload::Deliverable(d) => d.blob.size_bytes().max(1),
        }
    }

    pub fn kind_label(&self) -> &'static str {
        match self {
            Payload::JobRequest(_) => "job_request",
            Payload::Bid(_) => "bid",
            Payload::Contract(_) => "contract",
            Payload::LedgerTx(_) => "ledger_tx",
            Payload::Deliverable(_) => "deliverable",
        }
    }

    pub fn contract_id(&self) -> Option<ContractId> {
        match self {
            Payload::JobRequest(JobRequestMsg::Post(_)) => None,
            Payload::JobRequest(JobRequestMsg::Announce { contract_id, .. }) => Some(*contract_id),
            Payload::Bid(m) => Some(m.contract_id),
            Payload::Contract(m) => Some(match m {
                ContractMsg::StandingLow { contract_id, .. }
                | ContractMsg::Finalized { contract_id, .. }
                | ContractMsg::Expired { contract_id }
                | ContractMsg::ExecutionOrder { contract_id }
                | ContractMsg::Failed { contract_id, .. }
                | ContractMsg::Settled { contract_id, .. } => *contract_id,
            }),
            Payload::LedgerTx(m) => Some(m.contract_id),
            Payload::Deliverable(m) => Some(m.contract_id),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Destination {
    Node(NodeId),
    Broadcast,
}

#[derive(Clone, Debug)]
pub struct Envelope {
    pub src: NodeId,
    pub dst: Destination,
    pub payload: Payload,
    pub send_time_ms: u64,
}

/// What `send` returns: where and when deliveries were scheduled.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScheduledDelivery {
    pub dst: NodeId,
    pub deliver_at_ms: u64,
    pub seq: u64,
}

/// A message handed to its destination by `step`.
#[derive(Clone, Debug)]
pub struct DeliveryEvent {
    pub deliver_at_ms: u64,
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub sent_at_ms: u64,
    pub size_bytes: u64,
    pub payload: Payload,
}

#[derive(Clone, Debug)]
pub enum Fault {
    Partition {
        a: NodeId,
        b: NodeId,
        partitioned: bool,
    },
    SetDropProb {
        a: NodeId,
        b: NodeId,
        prob: f64,
    },
    Crash(NodeId),
    Restore(NodeId),
}

#[derive(Clone, Copy, Debug, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LinkStats {
    pub delivered_count: u64,
    pub delivered_bytes: u64,
    pub dropped_count: u64,
    pub dropped_bytes: u64,
    /// Blocked by partition or crashed endpoint; never entered the link.
    pub blocked_count: u64,
    pub blocked_bytes: u64,
}

#[derive(Clone, Debug)]
struct Link {
    latency_ms: u64,
    jitter_ms: u64,
    bandwidth_bytes_per_sec: Option<u64>,
    drop_prob: f64,
    partitioned: bool,
    stats: LinkStats,
}

#[derive(Clone, Debug)]
struct NodeState {
    role: NodeRole,
    crashed: bool,
}

#[derive(Debug)]
struct Queued {
    deliver_at_ms: u64,
    seq: u64,
    src: NodeId,
    dst: NodeId,
    sent_at_ms: u64,
    size_bytes: u64,
    payload: Payload,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        (self.deliver_at_ms, self.seq) == (other.deliver_at_ms, other.seq)
    }
}
impl Eq for Queued {}
impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Queued {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.deliver_at_ms, self.seq).cmp(&(other.deliver_at_ms, other.seq))
    }
}

fn link_key(a: &NodeId, b: &NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a.clone(), b.clone())
    } else {
        (b.clone(), a.clone())
    }
}

#[derive(Debug)]
pub struct Network {
    nodes: BTreeMap<NodeId, NodeState>,
    links: BTreeMap<(NodeId, NodeId), Link>,
    queue: BinaryHeap<Reverse<Queued>>,
    next_seq: u64,
    now_ms: u64,
    rng: ChaCha8Rng,
}

impl Network {
    /// Build the network: explicit links override the role-derived
    /// defaults (mesh 50 ms between Moon-side nodes, 5000 ms to Earth).
    pub fn build(spec: &TopologySpec, seed: u64) -> Result<Network, NetError> {
        let mut nodes: BTreeMap<NodeId, NodeState> = BTreeMap::new();
        for n in &spec.nodes {
            if nodes.contains_key(&n.id) {
                return Err(NetError::DuplicateNode(n.id.clone()));
            }
            nodes.insert(
                n.id.clone(),
                NodeState {
                    role: n.role,
                    crashed: false,
                },
            );
        }

        let mut links: BTreeMap<(NodeId, NodeId), Link> = BTreeMap::new();
        let ids: Vec<NodeId> = nodes.keys().cloned().collect();
        for (i, a) in ids.iter().enumerate() {
            for b in ids.iter().skip(i + 1) {
                let earth_leg = (nodes[a].role == NodeRole::EarthStation)
                    != (nodes[b].role == NodeRole::EarthStation);
                let latency = if earth_leg {
                    DEFAULT_EARTH_LATENCY_MS
                } else {
                    DEFAULT_MESH_LATENCY_MS
                };
                links.insert(
                    link_key(a, b),
                    Link {
                        latency_ms: latency,
                        jitter_ms: spec.defaults.jitter_ms,
                        bandwidth_bytes_per_sec: spec.defaults.bandwidth_bytes_per_sec,
                        drop_prob: spec.defaults.drop_prob,
                        partitioned: false,
                        stats: LinkStats::default(),
                    },
                );
            }
        }
        for l in &spec.links {
            for end in [&l.a, &l.b] {
                if !nodes.contains_key(end) {
                    return Err(NetError::DanglingLink(end.clone()));
                }
            }
            links.insert(
                link_key(&l.a, &l.b),
                Link {
                    latency_ms: l.latency_ms,
                    jitter_ms: l.jitter_ms,
                    bandwidth_bytes_per_sec: l.bandwidth_bytes_per_sec,
                    drop_prob: l.drop_prob,
                    partitioned: false,
                    stats: LinkStats::default(),
                },
            );
        }
        // one-way Earth-Moon latency can never dip under the physical floor
        for ((a, b), link) in &links {
            let earth_leg = (nodes[a].role == NodeRole::EarthStation)
                != (nodes[b].role == NodeRole::EarthStation);
            if earth_leg && link.latency_ms < EARTH_LATENCY_FLOOR_MS {
                return Err(NetError::EarthLinkBelowFloor {
                    a: a.clone(),
                    b: b.clone(),
                    latency_ms: link.latency_ms,
                    floor: EARTH_LATENCY_FLOOR_MS,
                });
            }
        }

        Ok(Network {
            nodes,
            links,
            queue: BinaryHeap::new(),
            next_seq: 0,
            now_ms: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn now_ms(&self) -> u64 {
        self.now_ms
    }

    pub fn node_role(&self, id: &NodeId) -> Option<NodeRole> {
        self.nodes.get(id).map(|n| n.role)
    }

    pub fn nodes_with_role(&self, role: NodeRole) -> Vec<NodeId> {
        self.nodes
            .iter()
            .filter(|(_, s)| s.role == role)
            .map(|(id, _)| id.clone())
            .collect()
    }

    pub fn link_latency_ms(&self, a: &NodeId, b: &NodeId) -> Option<u64> {
        self.links.get(&link_key(a, b)).map(|l| l.latency_ms)
    }

    pub fn link_stats(&self) -> impl Iterator<Item = (&(NodeId, NodeId), &LinkStats)> {
        self.links.iter().map(|(k, l)| (k, &l.stats))
    }

    /// Schedule deliveries for an envelope. Unicast yields zero or one
    /// delivery; broadcast yields one per reachable peer, scheduled in
    /// ascending peer-id order. Dropped, partitioned or crashed targets
    /// yield nothing.
    pub fn send(&mut self, env: Envelope) -> Result<Vec<ScheduledDelivery>, NetError> {
        let src_state = self
            .nodes
            .get(&env.src)
            .ok_or_else(|| NetError::UnknownNode(env.src.clone()))?;
        if src_state.crashed {
            return Ok(Vec::new());
        }
        let targets: Vec<NodeId> = match &env.dst {
            Destination::Node(d) => {
                if !self.nodes.contains_key(d) {
                    return Err(NetError::UnknownNode(d.clone()));
                }
                vec![d.clone()]
            }
            Destination::Broadcast => self
                .nodes
                .keys()
                .filter(|id| **id != env.src)
                .cloned()
                .collect(),
        };

        let size = env.payload.size_bytes();
        let mut scheduled = Vec::new();
        for dst in targets {
            let key = link_key(&env.src, &dst);
            let Some(link) = self.links.get_mut(&key) else {
                continue; // no link: unreachable peer
            };
            if link.partitioned || self.nodes[&dst].crashed {
                link.stats.blocked_count += 1;
                link.stats.blocked_bytes += size;
                continue;
            }
            if link.drop_prob > 0.0 && self.rng.random_bool(link.drop_prob.clamp(0.0, 1.0)) {
                link.stats.dropped_count += 1;
                link.stats.dropped_bytes += size;
                continue;
            }
            let jitter = if link.jitter_ms > 0 {
                self.rng.random_range(0..=link.jitter_ms)
            } else {
                0
            };
            let transmit = match link.bandwidth_bytes_per_sec {
                Some(bw) if bw > 0 => (size * 1000).div_ceil(bw),
                _ => 0,
            };
            let deliver_at_ms = env.send_time_ms + link.latency_ms + jitter + transmit;
            let seq = self.next_seq;
            self.next_seq += 1;
            self.queue.push(Reverse(Queued {
                deliver_at_ms,
                seq,
                src: env.src.clone(),
                dst: dst.clone(),
                sent_at_ms: env.send_time_ms,
                size_bytes: size,
                payload: env.payload.clone(),
            }));
            scheduled.push(ScheduledDelivery {
                dst,
                deliver_at_ms,
                seq,
            });
        }
        Ok(scheduled)
    }

    pub fn peek_next_time(&self) -> Option<u64> {
        self.queue.peek().map(|Reverse(q)| q.deliver_at_ms)
    }

    /// Deliver everything due at or before `until_ms`, in (time, seq)
    /// order, and advance the clock. Messages whose link is partitioned
    /// or whose destination is crashed at delivery time are blocked.
    pub fn step(&mut self, until_ms: u64) -> Result<Vec<DeliveryEvent>, NetError> {
        if until_ms < self.now_ms {
            return Err(NetError::TimeWentBackwards {
                requested: until_ms,
                now: self.now_ms,
            });
        }
        let mut delivered = Vec::new();
        while let Some(Reverse(q)) = self.queue.peek() {
            if q.deliver_at_ms > until_ms {
                break;
            }
            let Reverse(q) = self.queue.pop().unwrap();
            let key = link_key(&q.src, &q.dst);
            let link = self
                .links
                .get_mut(&key)
                .expect("scheduled over a known link");
            if link.partitioned || self.nodes[&q.dst].crashed {
                link.stats.blocked_count += 1;
                link.stats.blocked_bytes += q.size_bytes;
                continue;
            }
            link.stats.delivered_count += 1;
            link.stats.delivered_bytes += q.size_bytes;
            delivered.push(DeliveryEvent {
                deliver_at_ms: q.deliver_at_ms,
                seq: q.seq,
                src: q.src,
                dst: q.dst,
                sent_at_ms: q.sent_at_ms,
                size_bytes: q.size_bytes,
                payload: q.payload,
            });
        }
        self.now_ms = until_ms;
        Ok(delivered)
    }

    pub fn inject_fault(&mut self, fault: Fault) -> Result<(), NetError> {
        match fault {
            Fault::Partition { a, b, partitioned } => {
                let key = link_key(&a, &b);
                let link = self
                    .links
                    .get_mut(&key)
                    .ok_or(NetError::UnknownNode(a.clone()))?;
                link.partitioned = partitioned;
            }
            Fault::SetDropProb { a, b, prob } => {
                let key = link_key(&a, &b);
                let link = self
                    .links
                    .get_mut(&key)
                    .ok_or(NetError::UnknownNode(a.clone()))?;
                link.drop_prob = prob.clamp(0.0, 1.0);
            }
            Fault::Crash(node) => {
                self.nodes
                    .get_mut(&node)
                    .ok_or(NetError::UnknownNode(node.clone()))?
                    .crashed = true;
            }
            Fault::Restore(node) => {
                self.nodes
                    .get_mut(&node)
                    .ok_or(NetError::UnknownNode(node.clone()))?
                    .crashed = false;
            }
        }
        Ok(())
    }
}
