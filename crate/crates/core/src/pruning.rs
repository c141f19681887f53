//! View construction with pruning.
//!
//! Round 1 removes leaves and triangle-causing nodes. From round 2 on, node `i`
//! stops listening to a neighbour whose frontier brought nothing new to `i`'s
//! previous view. Muting is one-directional: `i` keeps sending to `j` for as
//! long as `j` listens to `i`. A node prunes itself when it listens to a single
//! neighbour, still learns something, and nobody else listens to it.

use std::collections::{BTreeMap, VecDeque};

use num_traits::Zero;

use crate::graph::{Closeness, NodeId};
use crate::view::{check_senders, NeighbouringMessage, NodeSet, ProtocolError, Termination, ViewCore};

/// `Q_ij`: the neighbour set each neighbour `j` reported in round 1.
pub type FirstHop = BTreeMap<NodeId, NodeSet>;

/// Nodes among `neighbours ∪ {id}` of degree one.
pub fn detect_leaves(id: NodeId, neighbours: &NodeSet, first_hop: &FirstHop) -> NodeSet {
    neighbours
        .iter()
        .chain(std::iter::once(&id))
        .filter(|j| degree_set(id, neighbours, first_hop, **j).is_some_and(|q| q.len() == 1))
        .copied()
        .collect()
}

/// Nodes among `scan ∪ {id}` of degree two whose two neighbours are adjacent.
pub fn detect_triangles(id: NodeId, scan: &NodeSet, neighbours: &NodeSet, first_hop: &FirstHop) -> NodeSet {
    let adjacent = |f: NodeId, g: NodeId| {
        degree_set(id, neighbours, first_hop, g).is_some_and(|q| q.contains(&f))
            || degree_set(id, neighbours, first_hop, f).is_some_and(|q| q.contains(&g))
    };
    scan.iter()
        .chain(std::iter::once(&id))
        .filter(|j| match degree_set(id, neighbours, first_hop, **j) {
            Some(q) if q.len() == 2 => {
                let mut it = q.iter();
                let (f, g) = (*it.next().unwrap(), *it.next().unwrap());
                adjacent(f, g)
            }
            _ => false,
        })
        .copied()
        .collect()
}

fn degree_set<'a>(id: NodeId, neighbours: &'a NodeSet, first_hop: &'a FirstHop, j: NodeId) -> Option<&'a NodeSet> {
    if j == id {
        Some(neighbours)
    } else {
        first_hop.get(&j)
    }
}

/// Senders whose frontier is already contained in `prev_view`.
pub fn detect_no_news<'a>(prev_view: &NodeSet, received: impl IntoIterator<Item = (NodeId, &'a [NodeId])>) -> NodeSet {
    received
        .into_iter()
        .filter(|(_, frontier)| frontier.iter().all(|v| prev_view.contains(v)))
        .map(|(j, _)| j)
        .collect()
}

/// Self-prune test on the sets as they stood in this round's send phase.
pub fn should_self_prune(listening: &NodeSet, listeners: &NodeSet, learned_something: bool) -> bool {
    listening.len() == 1 && learned_something && listeners.is_subset(listening)
}

#[derive(Clone, Debug)]
pub struct PruningState {
    id: NodeId,
    neighbours: NodeSet,
    round: u32,
    max_rounds: u32,
    core: ViewCore,
    inbox: VecDeque<NeighbouringMessage>,
    first_hop: FirstHop,
    pruned_all: NodeSet,
    pruned_by_round: Vec<NodeSet>,
    frontier_history: Vec<NodeSet>,
    ended_neighbours: NodeSet,
    muted_by: NodeSet,
    round_listening: NodeSet,
    round_listeners: NodeSet,
    termination: Option<Termination>,
    closeness: Option<Closeness>,
}

impl PruningState {
    pub fn new(id: NodeId, neighbours: NodeSet, max_rounds: u32) -> Result<PruningState, ProtocolError> {
        if max_rounds < 1 {
            return Err(ProtocolError::InvalidRounds);
        }
        if neighbours.is_empty() {
            return Err(ProtocolError::NoNeighbours(id));
        }
        let core = ViewCore::new(id, &neighbours);
        Ok(PruningState {
            id,
            frontier_history: vec![core.frontier.clone()],
            core,
            neighbours,
            round: 0,
            max_rounds,
            inbox: VecDeque::new(),
            first_hop: FirstHop::new(),
            pruned_all: NodeSet::new(),
            pruned_by_round: Vec::new(),
            ended_neighbours: NodeSet::new(),
            muted_by: NodeSet::new(),
            round_listening: NodeSet::new(),
            round_listeners: NodeSet::new(),
            termination: None,
            closeness: None,
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

    pub fn frontier(&self) -> &NodeSet {
        &self.core.frontier
    }

    pub fn view(&self) -> &NodeSet {
        &self.core.view
    }

    pub fn delta(&self) -> u64 {
        self.core.delta
    }

    pub fn first_hop(&self) -> &FirstHop {
        &self.first_hop
    }

    /// Every node this one has pruned so far (`F_{i,t}`).
    pub fn pruned_all(&self) -> &NodeSet {
        &self.pruned_all
    }

    /// `F_i^{(t)}` for `t = 1..=round`.
    pub fn pruned_by_round(&self) -> &[NodeSet] {
        &self.pruned_by_round
    }

    /// Frontier after each round, starting with round 0.
    pub fn frontier_history(&self) -> &[NodeSet] {
        &self.frontier_history
    }

    /// Neighbours this node still waits for.
    pub fn listening(&self) -> NodeSet {
        self.neighbours
            .iter()
            .filter(|j| !self.pruned_all.contains(j) && !self.ended_neighbours.contains(j))
            .copied()
            .collect()
    }

    /// Active neighbours that still wait for this node.
    pub fn listeners(&self) -> NodeSet {
        self.neighbours
            .iter()
            .filter(|j| !self.muted_by.contains(j) && !self.ended_neighbours.contains(j))
            .copied()
            .collect()
    }

    pub fn one_hop(&mut self) -> Vec<(NodeId, NeighbouringMessage)> {
        if self.is_ended() {
            self.finish();
            return Vec::new();
        }
        self.round_listening = self.listening();
        self.round_listeners = self.listeners();
        let msg = NeighbouringMessage { sender: self.id, frontier: self.core.frontier.iter().copied().collect() };
        self.round_listeners.iter().map(|&k| (k, msg.clone())).collect()
    }

    pub fn receive(&mut self, msg: NeighbouringMessage) {
        self.inbox.push_back(msg);
    }

    /// Fuses this round's messages, then runs detection.
    pub fn update(&mut self) -> Result<(), ProtocolError> {
        if self.is_ended() {
            return Err(ProtocolError::Ended(self.id));
        }
        let t = self.round + 1;
        check_senders(self.id, t, &self.round_listening, self.inbox.iter().map(|m| m.sender))?;
        self.round = t;
        let msgs: Vec<_> = self.inbox.drain(..).collect();
        let prev_view = self.core.view.clone();
        self.core.absorb(t, msgs.iter().flat_map(|m| m.frontier.iter().copied()));
        self.frontier_history.push(self.core.frontier.clone());
        let learned = !self.core.frontier.is_empty();

        let detected = if t == 1 {
            for m in &msgs {
                self.first_hop.insert(m.sender, m.frontier.iter().copied().collect());
            }
            if learned {
                let mut found = detect_leaves(self.id, &self.neighbours, &self.first_hop);
                found.extend(detect_triangles(self.id, &self.round_listening, &self.neighbours, &self.first_hop));
                found
            } else {
                NodeSet::new()
            }
        } else {
            let mut found = detect_no_news(&prev_view, msgs.iter().map(|m| (m.sender, m.frontier.as_slice())));
            if should_self_prune(&self.round_listening, &self.round_listeners, learned) {
                found.insert(self.id);
            }
            found
        };
        self.pruned_all.extend(detected.iter().copied());
        let self_pruned = detected.contains(&self.id);
        self.pruned_by_round.push(detected);

        if self_pruned {
            self.termination = Some(Termination::Pruned(t));
        } else if !learned {
            self.termination = Some(Termination::Equilibrium(t));
        } else if t == self.max_rounds {
            self.termination = Some(Termination::RoundLimit(t));
        }
        Ok(())
    }

    /// Neighbours (not self) pruned in the latest round.
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

    /// Neighbour `j` stopped listening to this node.
    pub fn muted_by(&mut self, j: NodeId) {
        if self.neighbours.contains(&j) {
            self.muted_by.insert(j);
        }
    }

    pub fn finish(&mut self) -> Closeness {
        if self.termination.is_none() {
            self.termination = Some(Termination::RoundLimit(self.round));
        }
        let value = if self.self_pruned() { Closeness::zero() } else { self.core.estimate() };
        *self.closeness.get_or_insert(value)
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    /// `L_i`; `None` stands for an unpruned node.
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
