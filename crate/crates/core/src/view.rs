//! State shared by the three protocol flavours.

use std::collections::BTreeSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Closeness, NodeId};

pub type NodeSet = BTreeSet<NodeId>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ProtocolError {
    #[error("round bound must be at least 1")]
    InvalidRounds,
    #[error("timeout must be at least 1 round")]
    InvalidTimeout,
    #[error("node {0} has no neighbours")]
    NoNeighbours(NodeId),
    #[error("node {node}: unexpected message from {sender} in round {round}")]
    UnexpectedSender { node: NodeId, sender: NodeId, round: u32 },
    #[error("node {node}: no message from {sender} in round {round}")]
    MissingMessage { node: NodeId, sender: NodeId, round: u32 },
    #[error("node {0} has already ended")]
    Ended(NodeId),
}

/// Frontier message: the sender's newest discoveries, sorted.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighbouringMessage {
    pub sender: NodeId,
    pub frontier: Vec<NodeId>,
}

/// How and when a node stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "round", rename_all = "kebab-case")]
pub enum Termination {
    Equilibrium(u32),
    Pruned(u32),
    RoundLimit(u32),
}

impl Termination {
    pub fn round(self) -> u32 {
        match self {
            Termination::Equilibrium(t) | Termination::Pruned(t) | Termination::RoundLimit(t) => t,
        }
    }
}

/// Node-level view: cumulative set (self included), newest shell and the
/// running distance sum.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct ViewCore {
    pub frontier: NodeSet,
    pub view: NodeSet,
    pub delta: u64,
}

impl ViewCore {
    pub fn new(id: NodeId, neighbours: &NodeSet) -> ViewCore {
        let mut view = neighbours.clone();
        view.insert(id);
        ViewCore { frontier: neighbours.clone(), view, delta: neighbours.len() as u64 }
    }

    /// Folds round-`t` discoveries in. Nodes first seen at round `t` sit at
    /// distance `t + 1`.
    pub fn absorb(&mut self, t: u32, candidates: impl IntoIterator<Item = NodeId>) {
        let fresh: NodeSet = candidates.into_iter().filter(|v| !self.view.contains(v)).collect();
        self.view.extend(fresh.iter().copied());
        self.delta += (t as u64 + 1) * fresh.len() as u64;
        self.frontier = fresh;
    }

    pub fn estimate(&self) -> Closeness {
        Ratio::new(self.view.len() as u64 - 1, self.delta)
    }
}

/// Checks that `senders` is exactly `expected`.
pub(crate) fn check_senders(
    node: NodeId,
    round: u32,
    expected: &NodeSet,
    senders: impl IntoIterator<Item = NodeId>,
) -> Result<(), ProtocolError> {
    let mut seen = NodeSet::new();
    for s in senders {
        if !expected.contains(&s) || !seen.insert(s) {
            return Err(ProtocolError::UnexpectedSender { node, sender: s, round });
        }
    }
    if let Some(&missing) = expected.difference(&seen).next() {
        return Err(ProtocolError::MissingMessage { node, sender: missing, round });
    }
    Ok(())
}
