//! Pruning over edge-set views with failure detection.
//!
//! Node failures are detected by silence (`timeout` rounds), edge failures by
//! the corruption flag on deliveries. Detections and recoveries travel as
//! [`Signal`]s piggybacked on round messages; a node relays each signal state
//! at most once. Pruning decisions, equilibrium and closeness are computed on
//! the node lift of the edge view (all endpoints plus self).

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::str::FromStr;

use num_traits::Zero;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Closeness, NodeId};
use crate::pruning::{detect_leaves, detect_no_news, detect_triangles, should_self_prune, FirstHop};
use crate::view::{NodeSet, ProtocolError, Termination, ViewCore};

/// Undirected edge, stored with the smaller endpoint first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeId(NodeId, NodeId);

impl EdgeId {
    pub fn new(u: NodeId, v: NodeId) -> EdgeId {
        if u <= v {
            EdgeId(u, v)
        } else {
            EdgeId(v, u)
        }
    }

    pub fn endpoints(self) -> (NodeId, NodeId) {
        (self.0, self.1)
    }

    pub fn touches(self, x: NodeId) -> bool {
        self.0 == x || self.1 == x
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.0, self.1)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("invalid edge {0:?}, expected u-v")]
pub struct EdgeParseError(pub String);

impl FromStr for EdgeId {
    type Err = EdgeParseError;

    fn from_str(s: &str) -> Result<EdgeId, EdgeParseError> {
        let err = || EdgeParseError(s.to_string());
        let (a, b) = s.split_once('-').ok_or_else(err)?;
        let a: u32 = a.trim().parse().map_err(|_| err())?;
        let b: u32 = b.trim().parse().map_err(|_| err())?;
        if a == b {
            return Err(err());
        }
        Ok(EdgeId::new(NodeId(a), NodeId(b)))
    }
}

pub type EdgeSet = BTreeSet<EdgeId>;

/// The `S` bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SignalKind {
    Failure,
    Recovery,
}

impl SignalKind {
    pub fn negated(self) -> SignalKind {
        match self {
            SignalKind::Failure => SignalKind::Recovery,
            SignalKind::Recovery => SignalKind::Failure,
        }
    }
}

/// What a signal is about; the variant is the `Q` bit.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Subject {
    Node(NodeId),
    Edge(EdgeId),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Signal {
    pub kind: SignalKind,
    pub origin: NodeId,
    pub subject: Subject,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SignalError {
    #[error("signal bits ({s}, {q}) out of range")]
    BadBits { s: u8, q: u8 },
    #[error("Q bit {q} does not match subject {subject:?}")]
    SubjectMismatch { q: u8, subject: Subject },
}

impl Signal {
    pub fn new(kind: SignalKind, origin: NodeId, subject: Subject) -> Signal {
        Signal { kind, origin, subject }
    }

    /// Builds a signal from raw `(S, Q)` bits.
    pub fn from_bits(s: u8, q: u8, origin: NodeId, subject: Subject) -> Result<Signal, SignalError> {
        let kind = match s {
            0 => SignalKind::Failure,
            1 => SignalKind::Recovery,
            _ => return Err(SignalError::BadBits { s, q }),
        };
        match (q, subject) {
            (0, Subject::Node(_)) | (1, Subject::Edge(_)) => Ok(Signal { kind, origin, subject }),
            (0 | 1, _) => Err(SignalError::SubjectMismatch { q, subject }),
            _ => Err(SignalError::BadBits { s, q }),
        }
    }

    pub fn bits(&self) -> (u8, u8) {
        let s = match self.kind {
            SignalKind::Failure => 0,
            SignalKind::Recovery => 1,
        };
        let q = match self.subject {
            Subject::Node(_) => 0,
            Subject::Edge(_) => 1,
        };
        (s, q)
    }

    fn key(&self) -> (SignalKind, Subject) {
        (self.kind, self.subject)
    }
}

/// Signal memory `Γ`, keyed by `(kind, subject)`; the stored signal keeps the
/// first origin seen.
pub type SignalMemory = BTreeMap<(SignalKind, Subject), Signal>;

/// Records `sig` unless an equivalent one is stored; drops its negation.
/// Returns whether the signal was new.
pub fn is_persistent(sig: &Signal, memory: &mut SignalMemory) -> bool {
    if memory.contains_key(&sig.key()) {
        return false;
    }
    memory.insert(sig.key(), *sig);
    memory.remove(&(sig.kind.negated(), sig.subject));
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdMessage {
    pub sender: NodeId,
    pub frontier: Vec<EdgeId>,
    pub signals: Vec<Signal>,
}

/// A message as it arrives: `corrupted` is the checksum verdict, `closing`
/// marks the empty message a node sends once it stops early.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Delivery {
    pub msg: FdMessage,
    pub corrupted: bool,
    pub closing: bool,
}

#[derive(Clone, Debug)]
pub struct FdState {
    id: NodeId,
    neighbours: NodeSet,
    round: u32,
    max_rounds: u32,
    timeout: u32,
    edge_frontier: EdgeSet,
    edge_view: EdgeSet,
    core: ViewCore,
    inbox: VecDeque<Delivery>,
    signal_queue: VecDeque<Signal>,
    memory: SignalMemory,
    down_nodes: NodeSet,
    down_edges: EdgeSet,
    last_heard: BTreeMap<NodeId, u32>,
    heard_clean: NodeSet,
    outbox: BTreeMap<NodeId, Vec<Signal>>,
    first_hop: FirstHop,
    pruned_all: NodeSet,
    pruned_by_round: Vec<NodeSet>,
    ended_neighbours: NodeSet,
    muted_by: NodeSet,
    round_listening: NodeSet,
    round_listeners: NodeSet,
    down_nodes_history: Vec<NodeSet>,
    down_edges_history: Vec<EdgeSet>,
    held_rounds: u32,
    termination: Option<Termination>,
    closeness: Option<Closeness>,
    finalized: bool,
}

impl FdState {
    pub fn new(id: NodeId, neighbours: NodeSet, max_rounds: u32, timeout: u32) -> Result<FdState, ProtocolError> {
        if max_rounds < 1 {
            return Err(ProtocolError::InvalidRounds);
        }
        if timeout < 1 {
            return Err(ProtocolError::InvalidTimeout);
        }
        if neighbours.is_empty() {
            return Err(ProtocolError::NoNeighbours(id));
        }
        let incident: EdgeSet = neighbours.iter().map(|&j| EdgeId::new(id, j)).collect();
        let core = ViewCore::new(id, &neighbours);
        Ok(FdState {
            id,
            round: 0,
            max_rounds,
            timeout,
            edge_frontier: incident.clone(),
            edge_view: incident,
            core,
            inbox: VecDeque::new(),
            signal_queue: VecDeque::new(),
            memory: SignalMemory::new(),
            down_nodes: NodeSet::new(),
            down_edges: EdgeSet::new(),
            last_heard: neighbours.iter().map(|&j| (j, 0)).collect(),
            heard_clean: NodeSet::new(),
            outbox: BTreeMap::new(),
            first_hop: FirstHop::new(),
            pruned_all: NodeSet::new(),
            pruned_by_round: Vec::new(),
            ended_neighbours: NodeSet::new(),
            muted_by: NodeSet::new(),
            round_listening: NodeSet::new(),
            round_listeners: NodeSet::new(),
            down_nodes_history: Vec::new(),
            down_edges_history: Vec::new(),
            held_rounds: 0,
            termination: None,
            closeness: None,
            finalized: false,
            neighbours,
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn neighbours(&self) -> &NodeSet {
        &self.neighbours
    }

    pub fn round(&self) -> u32 {
        self.round
    }

    pub fn timeout(&self) -> u32 {
        self.timeout
    }

    pub fn edge_frontier(&self) -> &EdgeSet {
        &self.edge_frontier
    }

    pub fn edge_view(&self) -> &EdgeSet {
        &self.edge_view
    }

    /// Node lift of the view: endpoints of known edges plus self.
    pub fn node_view(&self) -> &NodeSet {
        &self.core.view
    }

    pub fn node_frontier(&self) -> &NodeSet {
        &self.core.frontier
    }

    pub fn delta(&self) -> u64 {
        self.core.delta
    }

    pub fn memory(&self) -> &SignalMemory {
        &self.memory
    }

    pub fn down_nodes(&self) -> &NodeSet {
        &self.down_nodes
    }

    pub fn down_edges(&self) -> &EdgeSet {
        &self.down_edges
    }

    /// Neighbours across a known-failed edge.
    pub fn edge_down_neighbours(&self) -> NodeSet {
        self.neighbours.iter().filter(|&&j| self.down_edges.contains(&EdgeId::new(self.id, j))).copied().collect()
    }

    pub fn pruned_all(&self) -> &NodeSet {
        &self.pruned_all
    }

    pub fn pruned_by_round(&self) -> &[NodeSet] {
        &self.pruned_by_round
    }

    pub fn down_nodes_history(&self) -> &[NodeSet] {
        &self.down_nodes_history
    }

    pub fn down_edges_history(&self) -> &[EdgeSet] {
        &self.down_edges_history
    }

    /// Rounds with an empty frontier that did not end the node because of
    /// known failures or a disturbed neighbourhood.
    pub fn held_rounds(&self) -> u32 {
        self.held_rounds
    }

    pub fn listening(&self) -> NodeSet {
        self.neighbours
            .iter()
            .filter(|j| !self.pruned_all.contains(j) && !self.ended_neighbours.contains(j))
            .copied()
            .collect()
    }

    /// Send targets: active neighbours that still listen and are not known down.
    /// Failed edges stay in the set; their deliveries arrive corrupted.
    pub fn listeners(&self) -> NodeSet {
        self.neighbours
            .iter()
            .filter(|j| {
                !self.muted_by.contains(j) && !self.ended_neighbours.contains(j) && !self.down_nodes.contains(j)
            })
            .copied()
            .collect()
    }

    /// Neighbours whose silence counts toward failure.
    fn expected_senders(&self) -> NodeSet {
        self.round_listening.difference(&self.down_nodes).copied().collect()
    }

    /// Neighbours signals are broadcast to.
    fn signal_targets(&self) -> NodeSet {
        let edge_down = self.edge_down_neighbours();
        self.neighbours
            .iter()
            .filter(|j| !self.ended_neighbours.contains(j) && !self.down_nodes.contains(j) && !edge_down.contains(j))
            .copied()
            .collect()
    }

    pub fn one_hop(&mut self) -> Vec<(NodeId, FdMessage)> {
        if self.is_ended() {
            return Vec::new();
        }
        self.round_listening = self.listening();
        self.round_listeners = self.listeners();
        let edge_down = self.edge_down_neighbours();
        let frontier: Vec<EdgeId> = self.edge_frontier.iter().copied().collect();
        let mut out = Vec::with_capacity(self.round_listeners.len());
        for &k in &self.round_listeners {
            let confirmed = self.heard_clean.contains(&k) || !self.round_listening.contains(&k);
            let signals = if confirmed && !edge_down.contains(&k) {
                self.outbox.remove(&k).unwrap_or_default()
            } else {
                Vec::new()
            };
            out.push((k, FdMessage { sender: self.id, frontier: frontier.clone(), signals }));
        }
        out
    }

    pub fn receive(&mut self, delivery: Delivery) {
        self.inbox.push_back(delivery);
    }

    /// Signals waiting for a clean channel, per neighbour.
    pub fn pending_signals(&self) -> &BTreeMap<NodeId, Vec<Signal>> {
        &self.outbox
    }

    /// Subjects this node monitors itself; relayed reports about them are ignored.
    fn observes(&self, subject: Subject) -> bool {
        match subject {
            Subject::Node(c) => c == self.id || self.neighbours.contains(&c),
            Subject::Edge(e) => e.touches(self.id),
        }
    }

    fn broadcast(&mut self, sig: Signal) -> Vec<(NodeId, Signal)> {
        let stale = sig.kind.negated();
        for queued in self.outbox.values_mut() {
            queued.retain(|q| !(q.kind == stale && q.subject == sig.subject));
        }
        let targets = self.signal_targets();
        for &k in &targets {
            self.outbox.entry(k).or_default().push(sig);
        }
        targets.into_iter().map(|k| (k, sig)).collect()
    }

    fn originate(&mut self, kind: SignalKind, subject: Subject) -> Option<Signal> {
        let sig = Signal::new(kind, self.id, subject);
        if is_persistent(&sig, &mut self.memory) {
            self.broadcast(sig);
            Some(sig)
        } else {
            None
        }
    }

    /// Flags `j` as failed if it has been silent for more than `timeout` rounds.
    pub fn node_failure_detection(&mut self, j: NodeId, now: u32) -> Option<Signal> {
        if self.down_nodes.contains(&j) || !self.neighbours.contains(&j) {
            return None;
        }
        let last = self.last_heard.get(&j).copied().unwrap_or(0);
        if now.saturating_sub(last) <= self.timeout {
            return None;
        }
        self.down_nodes.insert(j);
        self.originate(SignalKind::Failure, Subject::Node(j))
    }

    /// Checksum verdict for a delivery from `j`; a corrupted one marks the edge down.
    pub fn edge_failure_detection(&mut self, j: NodeId, corrupted: bool) -> bool {
        if corrupted {
            let e = EdgeId::new(self.id, j);
            if self.down_edges.insert(e) {
                self.originate(SignalKind::Failure, Subject::Edge(e));
            }
        }
        corrupted
    }

    /// After a delivery from `j`: restores `j` or the edge to it if known down.
    pub fn recovery_detection(&mut self, j: NodeId, has_failed: bool) -> Vec<Signal> {
        let mut out = Vec::new();
        if has_failed {
            return out;
        }
        if self.down_nodes.remove(&j) {
            out.extend(self.originate(SignalKind::Recovery, Subject::Node(j)));
        }
        let e = EdgeId::new(self.id, j);
        if self.down_edges.remove(&e) {
            out.extend(self.originate(SignalKind::Recovery, Subject::Edge(e)));
        }
        out
    }

    /// Drains received signals, applies the new ones and queues their relay.
    pub fn forward_failure_signals(&mut self) -> Vec<(NodeId, Signal)> {
        let mut relayed = Vec::new();
        while let Some(sig) = self.signal_queue.pop_front() {
            if self.observes(sig.subject) || !is_persistent(&sig, &mut self.memory) {
                continue;
            }
            match (sig.kind, sig.subject) {
                (SignalKind::Failure, Subject::Node(c)) => {
                    if c != self.id {
                        self.down_nodes.insert(c);
                    }
                }
                (SignalKind::Recovery, Subject::Node(c)) => {
                    self.down_nodes.remove(&c);
                }
                (SignalKind::Failure, Subject::Edge(e)) => {
                    self.down_edges.insert(e);
                }
                (SignalKind::Recovery, Subject::Edge(e)) => {
                    self.down_edges.remove(&e);
                }
            }
            relayed.extend(self.broadcast(sig));
        }
        relayed
    }

    pub fn update(&mut self) -> Result<(), ProtocolError> {
        if self.is_ended() {
            return Err(ProtocolError::Ended(self.id));
        }
        let t = self.round + 1;
        self.round = t;
        self.heard_clean.clear();
        let deliveries: Vec<_> = self.inbox.drain(..).collect();
        let mut heard = NodeSet::new();
        let mut clean = Vec::new();
        let mut disturbed = false;
        for d in deliveries {
            let j = d.msg.sender;
            if !self.neighbours.contains(&j) {
                return Err(ProtocolError::UnexpectedSender { node: self.id, sender: j, round: t });
            }
            self.last_heard.insert(j, t);
            heard.insert(j);
            if d.closing {
                continue;
            }
            let is_down = self.edge_failure_detection(j, d.corrupted);
            self.recovery_detection(j, is_down);
            if is_down {
                disturbed = true;
            } else {
                self.heard_clean.insert(j);
                self.signal_queue.extend(d.msg.signals.iter().copied());
                clean.push(d.msg);
            }
        }
        for j in self.expected_senders() {
            if !heard.contains(&j) {
                disturbed = true;
                self.node_failure_detection(j, t);
            }
        }

        let fresh: EdgeSet =
            clean.iter().flat_map(|m| m.frontier.iter().copied()).filter(|e| !self.edge_view.contains(e)).collect();
        self.edge_view.extend(fresh.iter().copied());
        let prev_view = self.core.view.clone();
        self.core.absorb(t, fresh.iter().flat_map(|e| [e.0, e.1]));
        self.edge_frontier = fresh;
        let learned = !self.core.frontier.is_empty();
        self.forward_failure_signals();

        let detected = if t == 1 {
            for m in &clean {
                let q = m.frontier.iter().flat_map(|e| [e.0, e.1]).filter(|&v| v != m.sender).collect();
                self.first_hop.insert(m.sender, q);
            }
            if learned {
                let mut found = detect_leaves(self.id, &self.neighbours, &self.first_hop);
                found.extend(detect_triangles(self.id, &self.round_listening, &self.neighbours, &self.first_hop));
                found
            } else {
                NodeSet::new()
            }
        } else {
            let lifted: Vec<(NodeId, Vec<NodeId>)> =
                clean.iter().map(|m| (m.sender, m.frontier.iter().flat_map(|e| [e.0, e.1]).collect())).collect();
            // No-news inference assumes failure-free shells.
            let mut found = if self.holding() {
                NodeSet::new()
            } else {
                detect_no_news(&prev_view, lifted.iter().map(|(j, f)| (*j, f.as_slice())))
            };
            let edge_down = self.edge_down_neighbours();
            let listening: NodeSet = self
                .round_listening
                .iter()
                .filter(|j| !self.down_nodes.contains(j) && !edge_down.contains(j))
                .copied()
                .collect();
            let listeners: NodeSet = self.round_listeners.difference(&self.down_nodes).copied().collect();
            if should_self_prune(&listening, &listeners, learned) {
                found.insert(self.id);
            }
            found
        };

        self.pruned_all.extend(detected.iter().copied());
        let self_pruned = detected.contains(&self.id);
        self.pruned_by_round.push(detected);
        self.down_nodes_history.push(self.down_nodes.clone());
        self.down_edges_history.push(self.down_edges.clone());

        if self_pruned {
            self.termination = Some(Termination::Pruned(t));
        } else if !learned && (disturbed || self.holding()) {
            self.held_rounds += 1;
            if t == self.max_rounds {
                self.termination = Some(Termination::RoundLimit(t));
            }
        } else if !learned {
            self.termination = Some(Termination::Equilibrium(t));
        } else if t == self.max_rounds {
            self.termination = Some(Termination::RoundLimit(t));
        }
        Ok(())
    }

    /// Known failures and undelivered signals keep the node exchanging
    /// messages until they clear or the round bound is hit.
    pub fn holding(&self) -> bool {
        let undelivered = self
            .outbox
            .iter()
            .any(|(k, v)| !v.is_empty() && !self.ended_neighbours.contains(k) && !self.down_nodes.contains(k));
        undelivered
            || !self.down_nodes.is_empty()
            || !self.down_edges.is_empty()
            || self.memory.values().any(|s| s.kind == SignalKind::Failure)
    }

    pub fn newly_pruned(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.pruned_by_round.last().into_iter().flatten().copied().filter(move |&j| j != self.id)
    }

    pub fn is_ended(&self) -> bool {
        self.termination.is_some() || self.round >= self.max_rounds
    }

    pub fn self_pruned(&self) -> bool {
        self.pruned_all.contains(&self.id)
    }

    pub fn neighbour_ended(&mut self, j: NodeId) {
        if self.neighbours.contains(&j) {
            self.ended_neighbours.insert(j);
        }
    }

    pub fn muted_by(&mut self, j: NodeId) {
        if self.neighbours.contains(&j) {
            self.muted_by.insert(j);
        }
    }

    /// Resumes after a crash at round `now`: the round counter catches up and
    /// silence observed while down is forgiven.
    pub fn resume(&mut self, now: u32) {
        let last = now.saturating_sub(1);
        self.round = self.round.max(last);
        for stamp in self.last_heard.values_mut() {
            *stamp = last;
        }
        self.heard_clean.clear();
        self.inbox.clear();
    }

    /// Closing step. Returns the empty messages owed to active neighbours when
    /// stopping before the round bound, and strips failed edges and edges of
    /// failed nodes from the view. Runs once.
    pub fn final_iteration(&mut self) -> Vec<(NodeId, FdMessage)> {
        if self.finalized {
            return Vec::new();
        }
        self.finalized = true;
        if self.termination.is_none() {
            self.termination = Some(Termination::RoundLimit(self.round));
        }
        let value = if self.self_pruned() { Closeness::zero() } else { self.core.estimate() };
        self.closeness = Some(value);
        let down_nodes = &self.down_nodes;
        let down_edges = &self.down_edges;
        self.edge_view.retain(|e| !down_edges.contains(e) && !down_nodes.contains(&e.0) && !down_nodes.contains(&e.1));
        if self.round >= self.max_rounds {
            return Vec::new();
        }
        self.listeners()
            .into_iter()
            .map(|k| (k, FdMessage { sender: self.id, frontier: Vec::new(), signals: Vec::new() }))
            .collect()
    }

    pub fn finalized(&self) -> bool {
        self.finalized
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    pub fn pruned_round(&self) -> Option<u32> {
        match self.termination {
            Some(Termination::Pruned(t)) => Some(t),
            _ => None,
        }
    }

    pub fn equilibrium_round(&self) -> Option<u32> {
        match self.termination {
            Some(Termination::Equilibrium(t)) => Some(t),
            _ => None,
        }
    }

    pub fn closeness(&self) -> Option<Closeness> {
        self.closeness
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(ids: &[u32]) -> NodeSet {
        ids.iter().map(|&i| NodeId(i)).collect()
    }

    fn e(u: u32, v: u32) -> EdgeId {
        EdgeId::new(NodeId(u), NodeId(v))
    }

    fn msg(sender: u32, frontier: &[EdgeId]) -> FdMessage {
        FdMessage { sender: NodeId(sender), frontier: frontier.to_vec(), signals: Vec::new() }
    }

    #[test]
    fn init_holds_incident_edges() {
        let s = FdState::new(NodeId(3), set(&[1, 4, 5]), 4, 1).unwrap();
        assert_eq!(s.edge_view(), &[e(1, 3), e(3, 4), e(3, 5)].into_iter().collect::<EdgeSet>());
        assert_eq!(s.timeout(), 1);
        assert_eq!(FdState::new(NodeId(3), set(&[1]), 0, 1).unwrap_err(), ProtocolError::InvalidRounds);
        assert_eq!(FdState::new(NodeId(3), set(&[1]), 2, 0).unwrap_err(), ProtocolError::InvalidTimeout);
    }

    #[test]
    fn edge_parsing() {
        assert_eq!("4-2".parse::<EdgeId>().unwrap(), e(2, 4));
        assert!("4-4".parse::<EdgeId>().is_err());
        assert!("4".parse::<EdgeId>().is_err());
        assert_eq!(e(2, 4).to_string(), "2-4");
    }

    #[test]
    fn signal_bits() {
        let s = Signal::from_bits(1, 1, NodeId(0), Subject::Edge(e(0, 1))).unwrap();
        assert_eq!(s.kind, SignalKind::Recovery);
        assert_eq!(s.bits(), (1, 1));
        assert!(matches!(
            Signal::from_bits(2, 0, NodeId(0), Subject::Node(NodeId(1))),
            Err(SignalError::BadBits { .. })
        ));
        assert!(matches!(
            Signal::from_bits(0, 1, NodeId(0), Subject::Node(NodeId(1))),
            Err(SignalError::SubjectMismatch { .. })
        ));
    }

    #[test]
    fn persistence_and_negation() {
        let mut mem = SignalMemory::new();
        let fail = Signal::new(SignalKind::Failure, NodeId(1), Subject::Edge(e(1, 2)));
        assert!(is_persistent(&fail, &mut mem));
        assert!(!is_persistent(&fail, &mut mem));
        let other_origin = Signal { origin: NodeId(2), ..fail };
        assert!(!is_persistent(&other_origin, &mut mem));
        let rec = Signal { kind: SignalKind::Recovery, ..fail };
        assert!(is_persistent(&rec, &mut mem));
        assert_eq!(mem.len(), 1);
        assert!(mem.contains_key(&(SignalKind::Recovery, Subject::Edge(e(1, 2)))));
    }

    #[test]
    fn silence_detection_respects_timeout() {
        let mut s = FdState::new(NodeId(0), set(&[1, 2]), 10, 1).unwrap();
        assert_eq!(s.node_failure_detection(NodeId(1), 1), None);
        let sig = s.node_failure_detection(NodeId(1), 2).unwrap();
        assert_eq!((sig.kind, sig.subject), (SignalKind::Failure, Subject::Node(NodeId(1))));
        assert!(s.down_nodes().contains(&NodeId(1)));
        assert_eq!(s.node_failure_detection(NodeId(1), 3), None);
        let back = s.recovery_detection(NodeId(1), false);
        assert_eq!(back.len(), 1);
        assert!(s.down_nodes().is_empty());
        assert!(s.recovery_detection(NodeId(2), false).is_empty());
    }

    #[test]
    fn corrupted_delivery_is_not_fused() {
        let mut s = FdState::new(NodeId(0), set(&[1, 2]), 10, 1).unwrap();
        s.one_hop();
        s.receive(Delivery { msg: msg(1, &[e(0, 1), e(1, 5)]), corrupted: true, closing: false });
        s.receive(Delivery { msg: msg(2, &[e(0, 2), e(2, 6)]), corrupted: false, closing: false });
        s.update().unwrap();
        assert!(s.down_edges().contains(&e(0, 1)));
        assert!(!s.edge_view().contains(&e(1, 5)));
        assert!(s.edge_view().contains(&e(2, 6)));
        assert_eq!(s.edge_down_neighbours(), set(&[1]));
        assert_eq!(s.memory().len(), 1);
        assert!(s.pending_signals().contains_key(&NodeId(2)));
        let out = s.one_hop();
        let to2 = out.iter().find(|(k, _)| *k == NodeId(2)).unwrap();
        assert_eq!(to2.1.signals.len(), 1);
        let to1 = out.iter().find(|(k, _)| *k == NodeId(1)).unwrap();
        assert!(to1.1.signals.is_empty());
    }

    #[test]
    fn relays_once_and_applies_effects() {
        let mut s = FdState::new(NodeId(0), set(&[1, 2]), 10, 1).unwrap();
        let sig = Signal::new(SignalKind::Failure, NodeId(7), Subject::Node(NodeId(9)));
        s.signal_queue.extend([sig, sig]);
        let relayed = s.forward_failure_signals();
        assert_eq!(relayed.len(), 2);
        assert!(s.down_nodes().contains(&NodeId(9)));
        s.signal_queue.push_back(Signal::new(SignalKind::Recovery, NodeId(8), Subject::Node(NodeId(9))));
        assert_eq!(s.forward_failure_signals().len(), 2);
        assert!(s.down_nodes().is_empty());
    }

    #[test]
    fn final_iteration_cleans_view() {
        let mut s = FdState::new(NodeId(4), set(&[2, 5, 6]), 10, 1).unwrap();
        s.edge_view.insert(e(1, 2));
        s.down_nodes.insert(NodeId(4));
        s.termination = Some(Termination::Equilibrium(3));
        s.round = 3;
        let out = s.final_iteration();
        assert!(s.edge_view().iter().all(|x| !x.touches(NodeId(4))));
        assert!(s.edge_view().contains(&e(1, 2)));
        assert_eq!(out.len(), 3);
        assert!(s.final_iteration().is_empty());
    }
}
