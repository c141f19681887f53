//! Run reports and their JSON/CSV forms.

use std::fmt;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::fd::{EdgeId, Signal};
use crate::graph::{Closeness, NodeId};
use crate::schedule::FailureEvent;
use crate::view::Termination;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Ytq,
    Pruning,
    Fd,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Ytq => "ytq",
            Protocol::Pruning => "pruning",
            Protocol::Fd => "fd",
        })
    }
}

impl std::str::FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> Result<Protocol, String> {
        match s {
            "ytq" => Ok(Protocol::Ytq),
            "pruning" => Ok(Protocol::Pruning),
            "fd" => Ok(Protocol::Fd),
            other => Err(format!("unknown protocol {other:?} (ytq, pruning, fd)")),
        }
    }
}

/// `pruner` stopped listening to its neighbour `pruned` in `round`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneEvent {
    pub pruner: NodeId,
    pub pruned: NodeId,
    pub round: u32,
    /// The pruner's own frontier was empty in that round.
    pub pruner_at_equilibrium: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FdNodeReport {
    pub down_nodes_history: Vec<Vec<NodeId>>,
    pub down_edges_history: Vec<Vec<EdgeId>>,
    pub signal_memory: Vec<Signal>,
    pub final_edges: Vec<EdgeId>,
    pub held_rounds: u32,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeReport {
    pub id: NodeId,
    pub label: u64,
    pub degree: u32,
    /// Neighbouring messages received (Y or P).
    pub received: u64,
    pub sent: u64,
    /// Empty closing messages received from neighbours that stopped early.
    pub closing_received: u64,
    pub signals_received: u64,
    pub signals_sent: u64,
    pub termination: Termination,
    /// `L_i`; `None` is the unpruned sentinel.
    pub pruned_round: Option<u32>,
    /// `H_i`; `None` if the node never reached equilibrium.
    pub equilibrium_round: Option<u32>,
    pub self_pruned: bool,
    pub failed: bool,
    pub closeness: Closeness,
    /// Final node-level view, self included.
    pub final_view: Vec<NodeId>,
    /// `F_i^{(t)}` for each round the node took part in.
    pub pruned_by_round: Vec<Vec<NodeId>>,
    /// `h_i^{(l)}`: neighbours dropping out at round `l` through equilibrium.
    pub equilibrium_drops: Vec<u32>,
    /// `u_i^{(l)}`: neighbours dropping out at round `l` through pruning.
    pub pruning_drops: Vec<u32>,
    pub fd: Option<FdNodeReport>,
}

impl NodeReport {
    pub fn closeness_f64(&self) -> f64 {
        *self.closeness.numer() as f64 / *self.closeness.denom() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub protocol: Protocol,
    pub max_rounds: u32,
    pub timeout: u32,
    pub seed: u64,
    /// Rounds actually executed.
    pub rounds: u32,
    pub nodes: Vec<NodeReport>,
    pub prune_events: Vec<PruneEvent>,
    pub schedule: Vec<FailureEvent>,
}

/// One cell of the per-round pruning table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PruneCell {
    Set(Vec<NodeId>),
    /// Pruned itself in an earlier round.
    Pruned,
    /// Stopped in an earlier round without being pruned.
    Ended,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MessageCounts {
    pub total: u64,
    pub mean: f64,
    pub max: u64,
}

impl RunReport {
    pub fn estimates(&self) -> Vec<Closeness> {
        self.nodes.iter().map(|n| n.closeness).collect()
    }

    pub fn received(&self) -> Vec<u64> {
        self.nodes.iter().map(|n| n.received).collect()
    }

    pub fn message_counts(&self) -> MessageCounts {
        count_messages(&self.received())
    }

    /// Rows `i`, columns `t = 1..=rounds`.
    pub fn prune_table(&self, rounds: u32) -> Vec<Vec<PruneCell>> {
        self.nodes
            .iter()
            .map(|n| {
                (1..=rounds as usize)
                    .map(|t| match n.pruned_by_round.get(t - 1) {
                        Some(set) => PruneCell::Set(set.clone()),
                        None if n.self_pruned => PruneCell::Pruned,
                        None => PruneCell::Ended,
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Result<String> {
        serde_json::to_string_pretty(self)
    }

    pub fn from_json(text: &str) -> serde_json::Result<RunReport> {
        serde_json::from_str(text)
    }

    /// Per-node CSV. Node ids in the pruning trace are printed as labels.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let label = |v: &NodeId| self.nodes[v.index()].label.to_string();
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "id",
            "label",
            "degree",
            "received",
            "sent",
            "closing_received",
            "signals_received",
            "signals_sent",
            "termination",
            "termination_round",
            "pruned_round",
            "equilibrium_round",
            "self_pruned",
            "failed",
            "closeness_num",
            "closeness_den",
            "closeness",
            "view_size",
            "prune_trace",
        ])?;
        let table = self.prune_table(self.rounds);
        for (n, row) in self.nodes.iter().zip(table) {
            let trace: Vec<String> = row
                .iter()
                .map(|c| match c {
                    PruneCell::Set(s) => format!("{{{}}}", s.iter().map(label).collect::<Vec<_>>().join(" ")),
                    PruneCell::Pruned => "⊥".to_string(),
                    PruneCell::Ended => "⊤".to_string(),
                })
                .collect();
            let kind = match n.termination {
                Termination::Equilibrium(_) => "equilibrium",
                Termination::Pruned(_) => "pruned",
                Termination::RoundLimit(_) => "round-limit",
            };
            let opt = |x: Option<u32>| x.map_or("inf".to_string(), |t| t.to_string());
            w.write_record([
                n.id.to_string(),
                n.label.to_string(),
                n.degree.to_string(),
                n.received.to_string(),
                n.sent.to_string(),
                n.closing_received.to_string(),
                n.signals_received.to_string(),
                n.signals_sent.to_string(),
                kind.to_string(),
                n.termination.round().to_string(),
                opt(n.pruned_round),
                opt(n.equilibrium_round),
                n.self_pruned.to_string(),
                n.failed.to_string(),
                n.closeness.numer().to_string(),
                n.closeness.denom().to_string(),
                format!("{:.6}", n.closeness_f64()),
                n.final_view.len().to_string(),
                trace.join("|"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Total, mean and max of per-node counts.
pub fn count_messages(per_node: &[u64]) -> MessageCounts {
    let total: u64 = per_node.iter().sum();
    let mean = if per_node.is_empty() { 0.0 } else { total as f64 / per_node.len() as f64 };
    MessageCounts { total, mean, max: per_node.iter().copied().max().unwrap_or(0) }
}
