//! Baseline view construction: every node floods its newest shell to all
//! neighbours each round until its view stops growing or the round bound hits.

use std::collections::VecDeque;

use crate::graph::{Closeness, NodeId};
use crate::view::{check_senders, NeighbouringMessage, NodeSet, ProtocolError, Termination, ViewCore};

#[derive(Clone, Debug)]
pub struct YtqState {
    id: NodeId,
    neighbours: NodeSet,
    round: u32,
    max_rounds: u32,
    core: ViewCore,
    inbox: VecDeque<NeighbouringMessage>,
    ended_neighbours: NodeSet,
    termination: Option<Termination>,
    closeness: Option<Closeness>,
}

impl YtqState {
    pub fn new(id: NodeId, neighbours: NodeSet, max_rounds: u32) -> Result<YtqState, ProtocolError> {
        if max_rounds < 1 {
            return Err(ProtocolError::InvalidRounds);
        }
        if neighbours.is_empty() {
            return Err(ProtocolError::NoNeighbours(id));
        }
        let core = ViewCore::new(id, &neighbours);
        Ok(YtqState {
            id,
            neighbours,
            round: 0,
            max_rounds,
            core,
            inbox: VecDeque::new(),
            ended_neighbours: NodeSet::new(),
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

    /// Known nodes, self included.
    pub fn view(&self) -> &NodeSet {
        &self.core.view
    }

    pub fn delta(&self) -> u64 {
        self.core.delta
    }

    /// Neighbours this node still expects a message from.
    pub fn expected_senders(&self) -> NodeSet {
        self.neighbours.difference(&self.ended_neighbours).copied().collect()
    }

    /// Send phase. An ended node sends nothing and finalizes its estimate.
    pub fn one_hop(&mut self) -> Vec<(NodeId, NeighbouringMessage)> {
        if self.is_ended() {
            self.finish();
            return Vec::new();
        }
        let msg = NeighbouringMessage { sender: self.id, frontier: self.core.frontier.iter().copied().collect() };
        self.expected_senders().into_iter().map(|k| (k, msg.clone())).collect()
    }

    pub fn receive(&mut self, msg: NeighbouringMessage) {
        self.inbox.push_back(msg);
    }

    /// Update phase: fuse one message from every expected neighbour.
    pub fn update(&mut self) -> Result<(), ProtocolError> {
        if self.is_ended() {
            return Err(ProtocolError::Ended(self.id));
        }
        let next = self.round + 1;
        let expected = self.expected_senders();
        check_senders(self.id, next, &expected, self.inbox.iter().map(|m| m.sender))?;
        self.round = next;
        let msgs: Vec<_> = self.inbox.drain(..).collect();
        self.core.absorb(next, msgs.iter().flat_map(|m| m.frontier.iter().copied()));
        if self.core.frontier.is_empty() {
            self.termination = Some(Termination::Equilibrium(next));
        } else if next == self.max_rounds {
            self.termination = Some(Termination::RoundLimit(next));
        }
        Ok(())
    }

    pub fn is_ended(&self) -> bool {
        self.core.frontier.is_empty() || self.round >= self.max_rounds
    }

    /// Records that neighbour `j` stopped participating.
    pub fn neighbour_ended(&mut self, j: NodeId) {
        if self.neighbours.contains(&j) {
            self.ended_neighbours.insert(j);
        }
    }

    /// Finalizes the estimate; idempotent.
    pub fn finish(&mut self) -> Closeness {
        if self.termination.is_none() {
            self.termination = Some(Termination::RoundLimit(self.round));
        }
        *self.closeness.get_or_insert_with(|| self.core.estimate())
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    /// Round at which the frontier first became empty.
    pub fn equilibrium_round(&self) -> Option<u32> {
        match self.termination {
            Some(Termination::Equilibrium(t)) => Some(t),
            _ => None,
        }
    }

    /// `(|view| - 1) / delta`, available once finished.
    pub fn closeness(&self) -> Option<Closeness> {
        self.closeness
    }
}
