//! Adaptive-broadcast-period clustering node.
//!
//! Each node broadcasts one Hello per broadcast period and, at the end of the
//! period, acts on the freshest Hello it holds from each neighbor:
//!
//! * First period: only counts neighbors (its degree).
//! * Afterwards, a node without a cluster picks the best competence among
//!   itself and every neighbor; a clustered node picks among itself and the
//!   neighbors that announce themselves as heads. Heads advertising a full
//!   cluster (`Option >= T`) are skipped unless they are the current head.
//!   Ties go to the lower ID.
//! * Heads admit at most `T` members; rejected requesters head a singleton
//!   cluster and retry later ([`resolve_admissions`]).
//!
//! Only heads choose a broadcast period (from their neighborhood history);
//! members copy the period advertised by their head. A period is announced in
//! a Hello before it is used, so a neighbor can always bound the gap to the
//! sender's next Hello by the sum of its last two advertised periods.

use std::collections::{BTreeMap, BTreeSet};

use crate::codec::{bp_to_code, ChcQuantizer, HelloPacket, NO_CLUSTER};
use crate::mobility::{adapt_bp, mobility_rate, BpController, BpError, TopologyHistoryTable};
use crate::world::Graph;
use crate::NodeId;

use super::{chc, classify_roles, ChcParams, ClusterAssignment};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AbpParams {
    pub chc: ChcParams,
    pub quantizer: ChcQuantizer,
    /// Bounds and gain of the period controller; its current value is the startup period.
    pub bp: BpController,
    /// Simulation ticks per `bp_min`.
    pub bp_min_ticks: u64,
    /// Rows kept in the topology history table.
    pub history_depth: usize,
}

impl AbpParams {
    pub fn bp_max_code(&self) -> u8 {
        bp_to_code(self.bp.to_grid(self.bp.bp_max()), self.bp.bp_min())
    }

    pub fn code_ticks(&self, code: u8) -> u64 {
        code.max(1) as u64 * self.bp_min_ticks
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Candidate {
    pub id: NodeId,
    pub chc: u8,
    pub option: u8,
}

/// Drops candidates whose cluster is full (`option >= t`), except `current_ch`.
pub fn admission_filter(candidates: &[Candidate], t: u8, current_ch: NodeId) -> Vec<Candidate> {
    candidates
        .iter()
        .filter(|c| c.option < t || c.id == current_ch)
        .copied()
        .collect()
}

/// Highest competence wins; equal competence goes to the lower ID.
pub fn select_head(own: Candidate, others: &[Candidate]) -> NodeId {
    others
        .iter()
        .chain(std::iter::once(&own))
        .max_by(|a, b| a.chc.cmp(&b.chc).then(b.id.cmp(&a.id)))
        .map(|c| c.id)
        .unwrap_or(own.id)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborEntry {
    pub packet: HelloPacket,
    pub heard_at: u64,
    /// Tick at which the neighbor is presumed gone if nothing newer arrived.
    pub expires_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Joined,
    Switched,
    BecameHead,
    ResignedHead,
    LostHead,
    Rejected,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Joined => "joined",
            EventKind::Switched => "switched",
            EventKind::BecameHead => "became_head",
            EventKind::ResignedHead => "resigned_head",
            EventKind::LostHead => "lost_head",
            EventKind::Rejected => "rejected",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeEvent {
    pub node: NodeId,
    pub kind: EventKind,
    pub old_ch: NodeId,
    pub new_ch: NodeId,
}

fn transition(node: NodeId, old: NodeId, new: NodeId) -> Option<NodeEvent> {
    let kind = match (old, new) {
        _ if old == new => return None,
        (_, n) if n == node => EventKind::BecameHead,
        (o, _) if o == node => EventKind::ResignedHead,
        (NO_CLUSTER, _) => EventKind::Joined,
        (_, NO_CLUSTER) => EventKind::LostHead,
        _ => EventKind::Switched,
    };
    Some(NodeEvent {
        node,
        kind,
        old_ch: old,
        new_ch: new,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    /// Has not yet counted its neighbors.
    Fresh,
    Ready,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbpNode {
    pub id: NodeId,
    pub ch_id: NodeId,
    /// Mirrored from the world before each broadcast.
    pub battery: f64,
    pub degree: usize,
    pub member_count: u8,
    phase: Phase,
    neighbors: BTreeMap<NodeId, NeighborEntry>,
    tht: TopologyHistoryTable,
    bp: BpController,
    window_code: u8,
    advertised_code: u8,
    last_chc: u8,
    periods: u64,
}

impl AbpNode {
    /// A node that has just joined: no cluster, startup period `bp_min`.
    pub fn new(id: NodeId, battery: f64, params: &AbpParams) -> Self {
        AbpNode {
            id,
            ch_id: NO_CLUSTER,
            battery,
            degree: 0,
            member_count: 0,
            phase: Phase::Fresh,
            neighbors: BTreeMap::new(),
            tht: TopologyHistoryTable::new(params.history_depth.max(1)),
            bp: params.bp,
            window_code: 1,
            advertised_code: 1,
            last_chc: 0,
            periods: 0,
        }
    }

    pub fn is_head(&self) -> bool {
        self.ch_id == self.id
    }

    fn is_member(&self) -> bool {
        self.ch_id != NO_CLUSTER && self.ch_id != self.id
    }

    pub fn neighbors(&self) -> &BTreeMap<NodeId, NeighborEntry> {
        &self.neighbors
    }

    pub fn history(&self) -> &TopologyHistoryTable {
        &self.tht
    }

    /// Length of the current broadcast period in `bp_min` units.
    pub fn window_code(&self) -> u8 {
        self.window_code
    }

    pub fn advertised_code(&self) -> u8 {
        self.advertised_code
    }

    /// Quantized competence carried by the last Hello.
    pub fn last_chc(&self) -> u8 {
        self.last_chc
    }

    /// Forget everything; used when the node's battery runs out.
    pub fn shut_down(&mut self) {
        self.ch_id = NO_CLUSTER;
        self.member_count = 0;
        self.neighbors.clear();
    }

    /// Stores a received Hello.
    pub fn receive(&mut self, packet: &HelloPacket, now: u64, params: &AbpParams) {
        if packet.mh_id == self.id {
            return;
        }
        let known = self.neighbors.get(&packet.mh_id).filter(|e| e.expires_at > now);
        let prev = known.map(|e| e.packet.bp_code.max(1)).unwrap_or(params.bp_max_code());
        let adv = packet.bp_code.max(1);
        let horizon = (prev as u64 + adv as u64) * params.bp_min_ticks;
        self.neighbors.insert(
            packet.mh_id,
            NeighborEntry {
                packet: *packet,
                heard_at: now,
                expires_at: now + horizon,
            },
        );
    }

    /// Broadcast period (in `bp_min` units) of the cluster this node belongs to.
    pub fn cluster_bp_code(&self, params: &AbpParams) -> u8 {
        if self.is_head() {
            return bp_to_code(self.bp.current(), self.bp.bp_min());
        }
        if self.is_member() {
            if let Some(e) = self.neighbors.get(&self.ch_id) {
                if e.packet.is_cluster_head() {
                    return e.packet.bp_code.clamp(1, params.bp_max_code());
                }
            }
        }
        1
    }

    pub fn cluster_bp(&self, params: &AbpParams) -> f64 {
        self.cluster_bp_code(params) as f64 * params.bp.bp_min()
    }

    /// A head sets its cluster's period; anyone else is refused.
    pub fn request_bp_change(&mut self, bp: f64) -> Result<(), BpError> {
        if !self.is_head() {
            return Err(BpError::NotEntitled);
        }
        self.bp.set(bp);
        Ok(())
    }

    /// Builds this period's Hello.
    pub fn make_hello(&mut self, params: &AbpParams) -> HelloPacket {
        let is_ch = self.is_head();
        let score = chc(self.degree, self.battery, is_ch, &params.chc);
        let code = params.quantizer.quantize(score).unwrap_or(0);
        let bp_code = self.cluster_bp_code(params);
        self.last_chc = code;
        self.advertised_code = bp_code;
        HelloPacket {
            mh_id: self.id,
            ch_id: self.ch_id,
            chc: code,
            option: if is_ch { self.member_count.min(15) } else { 0 },
            bp_code,
        }
    }

    fn choose_head(&self, params: &AbpParams) -> NodeId {
        let forming = self.ch_id == NO_CLUSTER;
        let heard: Vec<Candidate> = self
            .neighbors
            .values()
            .filter(|e| forming || e.packet.is_cluster_head())
            .map(|e| Candidate {
                id: e.packet.mh_id,
                chc: e.packet.chc,
                option: e.packet.option,
            })
            .collect();
        let admissible = admission_filter(&heard, params.chc.t, self.ch_id);
        let own = Candidate {
            id: self.id,
            chc: self.last_chc,
            option: 0,
        };
        select_head(own, &admissible)
    }

    /// End-of-period processing: expire silent neighbors, count the degree,
    /// record history, elect, and (for heads) adapt the period.
    pub fn end_cycle(&mut self, now: u64, params: &AbpParams) -> Vec<NodeEvent> {
        self.neighbors.retain(|_, e| e.expires_at > now);
        self.degree = self.neighbors.len();
        let row: BTreeSet<NodeId> = self.neighbors.keys().copied().collect();
        self.tht.record(self.periods, row);
        self.periods += 1;

        if self.phase == Phase::Fresh {
            self.phase = Phase::Ready;
            return Vec::new();
        }

        let mut events = Vec::new();
        if self.is_member() && !self.neighbors.contains_key(&self.ch_id) {
            events.extend(transition(self.id, self.ch_id, NO_CLUSTER));
            self.ch_id = NO_CLUSTER;
        }
        let old = self.ch_id;
        let was_head = self.is_head();
        self.ch_id = self.choose_head(params);
        events.extend(transition(self.id, old, self.ch_id));
        if self.is_head() {
            if let Some(mr) = mobility_rate(&self.tht) {
                // a node that leaves another cluster to head its own before
                // its history spans n periods may shorten but not lengthen
                // its running period, so the clustering around it can still
                // settle at the fast rate
                let target = adapt_bp(mr, &self.bp);
                let running = self.window_code as f64 * params.bp.bp_min();
                let settling = !was_head && old != NO_CLUSTER && self.tht.len() < self.tht.capacity();
                self.bp.set(if settling { target.min(running) } else { target });
            }
        }
        events
    }

    /// Starts the next period and returns its length in ticks. A longer
    /// period only takes effect once it has been advertised.
    pub fn begin_cycle(&mut self, params: &AbpParams) -> u64 {
        let desired = self.cluster_bp_code(params);
        self.window_code = desired.min(self.advertised_code).max(1);
        params.code_ticks(self.window_code)
    }

    pub(crate) fn make_head(&mut self) {
        self.ch_id = self.id;
    }
}

/// Enforces the cluster-size cap after a round of decisions.
///
/// `prior` maps each node to its head before the round. Members a head already
/// had keep their place; newcomers are admitted in ascending ID order until
/// the head holds `t` members, and the rest head their own cluster.
pub fn resolve_admissions(nodes: &mut [AbpNode], prior: &BTreeMap<NodeId, NodeId>, t: u8) -> Vec<NodeEvent> {
    let mut events = Vec::new();
    let was_head = |c: NodeId| prior.get(&c) == Some(&c);
    loop {
        let mut by_head: BTreeMap<NodeId, Vec<usize>> = BTreeMap::new();
        let heads: BTreeSet<NodeId> = nodes.iter().filter(|n| n.is_head()).map(|n| n.id).collect();
        for (i, n) in nodes.iter().enumerate() {
            if n.ch_id != n.id && heads.contains(&n.ch_id) {
                by_head.entry(n.ch_id).or_default().push(i);
            }
        }
        let mut rejected = Vec::new();
        for (head, mut members) in by_head {
            if members.len() <= t as usize {
                continue;
            }
            members.sort_by_key(|&i| {
                let id = nodes[i].id;
                let incumbent = was_head(head) && prior.get(&id) == Some(&head);
                (!incumbent, id)
            });
            rejected.extend(members.into_iter().skip(t as usize).map(|i| (i, head)));
        }
        if rejected.is_empty() {
            break;
        }
        for (i, head) in rejected {
            let n = &mut nodes[i];
            events.push(NodeEvent {
                node: n.id,
                kind: EventKind::Rejected,
                old_ch: head,
                new_ch: n.id,
            });
            n.make_head();
        }
    }
    let mut counts: BTreeMap<NodeId, u8> = BTreeMap::new();
    for n in nodes.iter().filter(|n| n.ch_id != n.id && n.ch_id != NO_CLUSTER) {
        *counts.entry(n.ch_id).or_default() += 1;
    }
    for n in nodes.iter_mut() {
        n.member_count = if n.is_head() { counts.get(&n.id).copied().unwrap_or(0) } else { 0 };
    }
    events
}

/// One node's view of a period: absorb `inbox`, run end-of-period
/// processing at `now`, start the next period and emit its Hello.
pub fn abp_cycle(
    node: &mut AbpNode,
    inbox: &[HelloPacket],
    now: u64,
    params: &AbpParams,
) -> (Vec<NodeEvent>, HelloPacket) {
    for p in inbox {
        node.receive(p, now, params);
    }
    let events = node.end_cycle(now, params);
    node.begin_cycle(params);
    (events, node.make_hello(params))
}

/// Lockstep execution on a fixed graph: every round each node sends one
/// Hello to its graph neighbors, then all nodes finish the period together.
#[derive(Debug, Clone)]
pub struct LockstepNetwork {
    graph: Graph,
    params: AbpParams,
    nodes: Vec<AbpNode>,
    round: u64,
}

impl LockstepNetwork {
    pub fn new(graph: Graph, batteries: &BTreeMap<NodeId, f64>, params: AbpParams) -> Self {
        let nodes = graph
            .vertices()
            .map(|v| AbpNode::new(v, batteries.get(&v).copied().unwrap_or(0.0), &params))
            .collect();
        LockstepNetwork {
            graph,
            params,
            nodes,
            round: 0,
        }
    }

    pub fn nodes(&self) -> &[AbpNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Option<&AbpNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn rounds_run(&self) -> u64 {
        self.round
    }

    /// Runs one Hello period; returns the events it produced.
    pub fn round(&mut self) -> Vec<NodeEvent> {
        let sent_at = self.round * self.params.bp_min_ticks;
        let end = sent_at + self.params.bp_min_ticks;
        let index: BTreeMap<NodeId, usize> = self.nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let hellos: Vec<HelloPacket> = self.nodes.iter_mut().map(|n| n.make_hello(&self.params)).collect();
        for hello in &hellos {
            for u in self.graph.neighbors(hello.mh_id) {
                self.nodes[index[&u]].receive(hello, sent_at, &self.params);
            }
        }
        let prior: BTreeMap<NodeId, NodeId> = self.nodes.iter().map(|n| (n.id, n.ch_id)).collect();
        let mut events = Vec::new();
        for n in &mut self.nodes {
            events.extend(n.end_cycle(end, &self.params));
        }
        events.extend(resolve_admissions(&mut self.nodes, &prior, self.params.chc.t));
        for n in &mut self.nodes {
            n.begin_cycle(&self.params);
        }
        self.round += 1;
        events
    }

    pub fn assignment(&self) -> ClusterAssignment {
        let ch_of = self.nodes.iter().map(|n| (n.id, n.ch_id)).collect();
        classify_roles(&ClusterAssignment::from_heads(ch_of), &self.graph)
    }
}
