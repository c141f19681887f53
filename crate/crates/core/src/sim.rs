//! Synchronous round engine.
//!
//! Each round: apply scheduled failures, deliver closing messages owed from the
//! previous round, run the send phase of every live node, deliver, then run
//! the update phase. Who has stopped or muted whom is passed on between rounds
//! as bookkeeping and does not count as a message.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fd::{Delivery, EdgeId, FdMessage, FdState};
use crate::graph::{Closeness, Graph, GraphError, NodeId};
use crate::pruning::PruningState;
use crate::report::{FdNodeReport, NodeReport, PruneEvent, RunReport};
use crate::schedule::{Action, FailureSchedule, ScheduleError, Target};
use crate::view::{NeighbouringMessage, NodeSet, ProtocolError, Termination};
use crate::ytq::YtqState;

pub use crate::report::Protocol;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation input must be a connected graph with at least two nodes")]
    NotConnected,
    #[error("failure schedules are only supported by the fd protocol")]
    ScheduleNeedsFd,
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeliveryOrder {
    /// Ascending sender id within each round.
    #[default]
    Ascending,
    /// Seeded shuffle of each round's deliveries.
    Shuffled,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunConfig {
    pub protocol: Protocol,
    pub max_rounds: u32,
    /// FD silence timeout in rounds.
    pub timeout: u32,
    pub seed: u64,
    pub delivery: DeliveryOrder,
}

impl RunConfig {
    pub fn new(protocol: Protocol, max_rounds: u32) -> RunConfig {
        RunConfig { protocol, max_rounds, timeout: 1, seed: 0, delivery: DeliveryOrder::Ascending }
    }
}

/// Runs one protocol on `g` for at most `max_rounds` rounds.
pub fn run(
    g: &Graph,
    protocol: Protocol,
    max_rounds: u32,
    schedule: &FailureSchedule,
    seed: u64,
) -> Result<RunReport, SimError> {
    let config = RunConfig { seed, ..RunConfig::new(protocol, max_rounds) };
    run_with(g, &config, schedule)
}

enum Agent {
    Ytq(YtqState),
    Pruning(PruningState),
    Fd(Box<FdState>),
}

enum Payload {
    Node(NeighbouringMessage),
    Fd(FdMessage),
}

impl Payload {
    fn signal_count(&self) -> u64 {
        match self {
            Payload::Node(_) => 0,
            Payload::Fd(m) => m.signals.len() as u64,
        }
    }
}

impl Agent {
    fn is_ended(&self) -> bool {
        match self {
            Agent::Ytq(s) => s.is_ended(),
            Agent::Pruning(s) => s.is_ended(),
            Agent::Fd(s) => s.is_ended(),
        }
    }

    fn one_hop(&mut self) -> Vec<(NodeId, Payload)> {
        match self {
            Agent::Ytq(s) => s.one_hop().into_iter().map(|(k, m)| (k, Payload::Node(m))).collect(),
            Agent::Pruning(s) => s.one_hop().into_iter().map(|(k, m)| (k, Payload::Node(m))).collect(),
            Agent::Fd(s) => s.one_hop().into_iter().map(|(k, m)| (k, Payload::Fd(m))).collect(),
        }
    }

    fn receive(&mut self, payload: Payload, corrupted: bool, closing: bool) {
        match (self, payload) {
            (Agent::Ytq(s), Payload::Node(m)) => s.receive(m),
            (Agent::Pruning(s), Payload::Node(m)) => s.receive(m),
            (Agent::Fd(s), Payload::Fd(msg)) => s.receive(Delivery { msg, corrupted, closing }),
            _ => unreachable!("payload kind matches protocol"),
        }
    }

    fn update(&mut self) -> Result<(), ProtocolError> {
        match self {
            Agent::Ytq(s) => s.update(),
            Agent::Pruning(s) => s.update(),
            Agent::Fd(s) => s.update(),
        }
    }

    fn newly_pruned(&self) -> Vec<NodeId> {
        match self {
            Agent::Ytq(_) => Vec::new(),
            Agent::Pruning(s) => s.newly_pruned().collect(),
            Agent::Fd(s) => s.newly_pruned().collect(),
        }
    }

    fn frontier_empty(&self) -> bool {
        match self {
            Agent::Ytq(s) => s.frontier().is_empty(),
            Agent::Pruning(s) => s.frontier().is_empty(),
            Agent::Fd(s) => s.node_frontier().is_empty(),
        }
    }

    fn neighbour_ended(&mut self, j: NodeId) {
        match self {
            Agent::Ytq(s) => s.neighbour_ended(j),
            Agent::Pruning(s) => s.neighbour_ended(j),
            Agent::Fd(s) => s.neighbour_ended(j),
        }
    }

    fn muted_by(&mut self, j: NodeId) {
        match self {
            Agent::Ytq(_) => {}
            Agent::Pruning(s) => s.muted_by(j),
            Agent::Fd(s) => s.muted_by(j),
        }
    }

    /// Finalizes the estimate; FD nodes may owe closing messages.
    fn finish(&mut self) -> Vec<(NodeId, FdMessage)> {
        match self {
            Agent::Ytq(s) => {
                s.finish();
                Vec::new()
            }
            Agent::Pruning(s) => {
                s.finish();
                Vec::new()
            }
            Agent::Fd(s) => s.final_iteration(),
        }
    }

    fn termination(&self) -> Option<Termination> {
        match self {
            Agent::Ytq(s) => s.termination(),
            Agent::Pruning(s) => s.termination(),
            Agent::Fd(s) => s.termination(),
        }
    }
}

/// Runs one protocol under an explicit configuration.
pub fn run_with(g: &Graph, config: &RunConfig, schedule: &FailureSchedule) -> Result<RunReport, SimError> {
    if g.node_count() < 2 || !g.is_connected() {
        return Err(SimError::NotConnected);
    }
    if !schedule.is_empty() {
        if config.protocol != Protocol::Fd {
            return Err(SimError::ScheduleNeedsFd);
        }
        schedule.validate(g)?;
        let reference = run_with(g, &RunConfig::new(Protocol::Pruning, config.max_rounds), &FailureSchedule::empty())?;
        let pruned: Vec<_> = reference.nodes.iter().map(|n| n.pruned_round).collect();
        schedule.check_against_pruning(&pruned)?;
    }

    let n = g.node_count();
    let mut agents = Vec::with_capacity(n);
    for i in g.nodes() {
        let nb: NodeSet = g.neighbours(i).iter().copied().collect();
        agents.push(match config.protocol {
            Protocol::Ytq => Agent::Ytq(YtqState::new(i, nb, config.max_rounds)?),
            Protocol::Pruning => Agent::Pruning(PruningState::new(i, nb, config.max_rounds)?),
            Protocol::Fd => Agent::Fd(Box::new(FdState::new(i, nb, config.max_rounds, config.timeout)?)),
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut failed = vec![false; n];
    let mut failed_edges: BTreeSet<EdgeId> = BTreeSet::new();
    let mut sent = vec![0u64; n];
    let mut received = vec![0u64; n];
    let mut closing_received = vec![0u64; n];
    let mut signals_sent = vec![0u64; n];
    let mut signals_received = vec![0u64; n];
    let mut closing: Vec<(NodeId, NodeId, FdMessage)> = Vec::new();
    let mut prune_events = Vec::new();
    let mut finished = vec![false; n];

    let mut t = 0;
    while t < config.max_rounds {
        let quiet = (0..n).all(|i| failed[i] || agents[i].is_ended());
        if quiet && closing.is_empty() && schedule.last_round() <= t {
            break;
        }
        t += 1;

        for ev in schedule.at(t) {
            match (ev.target, ev.action) {
                (Target::Node(v), Action::Fail) => failed[v.index()] = true,
                (Target::Node(v), Action::Recover) => {
                    failed[v.index()] = false;
                    if let Agent::Fd(s) = &mut agents[v.index()] {
                        s.resume(t);
                    }
                }
                (Target::Edge(e), Action::Fail) => {
                    failed_edges.insert(e);
                }
                (Target::Edge(e), Action::Recover) => {
                    failed_edges.remove(&e);
                }
            }
        }

        let mut deliveries: Vec<(NodeId, NodeId, Payload, bool)> =
            closing.drain(..).map(|(from, to, m)| (from, to, Payload::Fd(m), true)).collect();
        for i in g.nodes() {
            if failed[i.index()] || agents[i.index()].is_ended() {
                continue;
            }
            for (k, payload) in agents[i.index()].one_hop() {
                sent[i.index()] += 1;
                signals_sent[i.index()] += payload.signal_count();
                deliveries.push((i, k, payload, false));
            }
        }
        match config.delivery {
            DeliveryOrder::Ascending => deliveries.sort_by_key(|d| (d.0, !d.3)),
            DeliveryOrder::Shuffled => deliveries.shuffle(&mut rng),
        }
        for (from, to, payload, is_closing) in deliveries {
            let k = to.index();
            if failed[k] || agents[k].is_ended() {
                continue;
            }
            let corrupted = failed_edges.contains(&EdgeId::new(from, to));
            if is_closing {
                closing_received[k] += 1;
            } else {
                received[k] += 1;
                if !corrupted {
                    signals_received[k] += payload.signal_count();
                }
            }
            agents[k].receive(payload, corrupted, is_closing);
        }

        let mut updated = Vec::new();
        for i in 0..n {
            if failed[i] || agents[i].is_ended() {
                continue;
            }
            agents[i].update()?;
            updated.push(i);
        }
        for &i in &updated {
            let at_equilibrium = agents[i].frontier_empty();
            for j in agents[i].newly_pruned() {
                prune_events.push(PruneEvent {
                    pruner: NodeId::from(i),
                    pruned: j,
                    round: t,
                    pruner_at_equilibrium: at_equilibrium,
                });
                agents[j.index()].muted_by(NodeId::from(i));
            }
        }
        for &i in &updated {
            if !agents[i].is_ended() {
                continue;
            }
            for &k in g.neighbours(NodeId::from(i)) {
                agents[k.index()].neighbour_ended(NodeId::from(i));
            }
            finished[i] = true;
            for (k, m) in agents[i].finish() {
                closing.push((NodeId::from(i), k, m));
            }
        }
    }
    for i in 0..n {
        if !finished[i] {
            agents[i].finish();
        }
    }

    let nodes = g
        .nodes()
        .map(|i| {
            let k = i.index();
            node_report(
                g,
                &agents[k],
                i,
                failed[k],
                [sent[k], received[k], closing_received[k], signals_sent[k], signals_received[k]],
            )
        })
        .collect::<Vec<_>>();
    let mut report = RunReport {
        protocol: config.protocol,
        max_rounds: config.max_rounds,
        timeout: config.timeout,
        seed: config.seed,
        rounds: t,
        nodes,
        prune_events,
        schedule: schedule.events().to_vec(),
    };
    fill_drop_tallies(g, &mut report);
    Ok(report)
}

fn node_report(g: &Graph, agent: &Agent, i: NodeId, failed: bool, counts: [u64; 5]) -> NodeReport {
    let [sent, received, closing_received, signals_sent, signals_received] = counts;
    let termination = agent.termination().expect("finished");
    let (closeness, final_view, pruned_by_round, self_pruned, fd): (Closeness, Vec<NodeId>, Vec<Vec<NodeId>>, bool, _) =
        match agent {
            Agent::Ytq(s) => {
                (s.closeness().expect("finished"), s.view().iter().copied().collect(), Vec::new(), false, None)
            }
            Agent::Pruning(s) => (
                s.closeness().expect("finished"),
                s.view().iter().copied().collect(),
                s.pruned_by_round().iter().map(|f| f.iter().copied().collect()).collect(),
                s.self_pruned(),
                None,
            ),
            Agent::Fd(s) => {
                let mut view: NodeSet = s.edge_view().iter().flat_map(|e| [e.endpoints().0, e.endpoints().1]).collect();
                view.insert(i);
                let fd = FdNodeReport {
                    down_nodes_history: s.down_nodes_history().iter().map(|x| x.iter().copied().collect()).collect(),
                    down_edges_history: s.down_edges_history().iter().map(|x| x.iter().copied().collect()).collect(),
                    signal_memory: s.memory().values().copied().collect(),
                    final_edges: s.edge_view().iter().copied().collect(),
                    held_rounds: s.held_rounds(),
                };
                (
                    s.closeness().expect("finished"),
                    view.into_iter().collect(),
                    s.pruned_by_round().iter().map(|f| f.iter().copied().collect()).collect(),
                    s.self_pruned(),
                    Some(fd),
                )
            }
        };
    let pruned_round = match termination {
        Termination::Pruned(t) => Some(t),
        _ => None,
    };
    let equilibrium_round = match termination {
        Termination::Equilibrium(t) => Some(t),
        _ => None,
    };
    NodeReport {
        id: i,
        label: g.label(i),
        degree: g.degree(i) as u32,
        received,
        sent,
        closing_received,
        signals_received,
        signals_sent,
        termination,
        pruned_round,
        equilibrium_round,
        self_pruned,
        failed,
        closeness,
        final_view,
        pruned_by_round,
        equilibrium_drops: Vec::new(),
        pruning_drops: Vec::new(),
        fd,
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Drop {
    Equilibrium,
    Pruning,
}

/// For every node, the round at which each neighbour stopped being waited for
/// and why. When a neighbour both reached equilibrium and got pruned in the
/// same round, equilibrium wins.
fn fill_drop_tallies(g: &Graph, report: &mut RunReport) {
    let rounds = report.rounds as usize;
    let mut muted: Vec<Vec<(NodeId, u32)>> = vec![Vec::new(); g.node_count()];
    for ev in &report.prune_events {
        muted[ev.pruner.index()].push((ev.pruned, ev.round));
    }
    let status: Vec<(Option<u32>, Option<u32>)> =
        report.nodes.iter().map(|n| (n.pruned_round, n.equilibrium_round)).collect();
    for i in g.nodes() {
        let mut h = vec![0u32; rounds + 1];
        let mut u = vec![0u32; rounds + 1];
        for &j in g.neighbours(i) {
            let (lj, hj) = status[j.index()];
            let by_me = muted[i.index()].iter().find(|(x, _)| *x == j).map(|&(_, r)| r);
            let first =
                [by_me.map(|r| (r, Drop::Pruning)), lj.map(|r| (r, Drop::Pruning)), hj.map(|r| (r, Drop::Equilibrium))]
                    .into_iter()
                    .flatten()
                    .min();
            match first {
                Some((r, Drop::Equilibrium)) => h[r as usize] += 1,
                Some((r, Drop::Pruning)) => u[r as usize] += 1,
                None => {}
            }
        }
        let node = &mut report.nodes[i.index()];
        node.equilibrium_drops = h;
        node.pruning_drops = u;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{closeness_all, golden_graph, v};

    #[test]
    fn single_edge_one_round() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let r = run(&g, Protocol::Ytq, 1, &FailureSchedule::empty(), 0).unwrap();
        assert_eq!(r.received(), vec![1, 1]);
    }

    #[test]
    fn first_round_receives_degree() {
        let g = golden_graph();
        let r = run(&g, Protocol::Ytq, 1, &FailureSchedule::empty(), 0).unwrap();
        let degrees: Vec<u64> = g.nodes().map(|i| g.degree(i) as u64).collect();
        assert_eq!(r.received(), degrees);
    }

    #[test]
    fn golden_ytq_is_exact() {
        let g = golden_graph();
        let r = run(&g, Protocol::Ytq, 6, &FailureSchedule::empty(), 0).unwrap();
        let exact = closeness_all(&g).unwrap();
        for n in &r.nodes {
            assert_eq!(n.final_view.len(), 10);
            assert_eq!(n.closeness, exact[n.id.index()]);
        }
    }

    #[test]
    fn golden_leaves_end_first() {
        let g = golden_graph();
        let r = run(&g, Protocol::Pruning, 4, &FailureSchedule::empty(), 0).unwrap();
        for k in [1, 5, 6, 9, 10] {
            assert_eq!(r.nodes[v(k).index()].pruned_round, Some(1), "v{k}");
        }
    }

    #[test]
    fn schedule_requires_fd() {
        let g = golden_graph();
        let s = FailureSchedule::parse("2 edge 2-6 fail").unwrap();
        assert!(matches!(run(&g, Protocol::Pruning, 4, &s, 0), Err(SimError::ScheduleNeedsFd)));
        let leaf = FailureSchedule::parse("2 node 4 fail").unwrap();
        assert!(matches!(
            run(&g, Protocol::Fd, 4, &leaf, 0),
            Err(SimError::Schedule(ScheduleError::PrunedTarget { .. }))
        ));
    }

    #[test]
    fn rejects_disconnected() {
        let g = Graph::from_edges(4, &[(0, 1), (2, 3)]).unwrap();
        assert!(matches!(run(&g, Protocol::Ytq, 3, &FailureSchedule::empty(), 0), Err(SimError::NotConnected)));
    }
}
