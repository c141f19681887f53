//! Scripted failures for FD runs.
//!
//! File format, one event per line (`#` starts a comment):
//!
//! ```text
//! 2 edge 2-6 fail
//! 4 edge 2-6 recover
//! 3 node 7 fail
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fd::EdgeId;
use crate::graph::{Graph, NodeId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Node(NodeId),
    Edge(EdgeId),
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Target::Node(v) => write!(f, "node {v}"),
            Target::Edge(e) => write!(f, "edge {e}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Action {
    Fail,
    Recover,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FailureEvent {
    pub round: u32,
    pub target: Target,
    pub action: Action,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScheduleError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("round {round}: {target} does not exist in the graph")]
    UnknownTarget { round: u32, target: Target },
    #[error("round {round}: {target} fails more than once")]
    DoubleFail { round: u32, target: Target },
    #[error("round {round}: {target} {action:?} does not alternate with its previous event")]
    NotAlternating { round: u32, target: Target, action: Action },
    #[error("round {round}: node {node} is already pruned by then and cannot fail")]
    PrunedTarget { round: u32, node: NodeId },
    #[error("events start at round 1")]
    RoundZero,
    #[error("i/o error on {path}: {msg}")]
    Io { path: String, msg: String },
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FailureSchedule {
    events: Vec<FailureEvent>,
}

impl FailureSchedule {
    pub fn new(mut events: Vec<FailureEvent>) -> FailureSchedule {
        events.sort();
        FailureSchedule { events }
    }

    pub fn empty() -> FailureSchedule {
        FailureSchedule::default()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[FailureEvent] {
        &self.events
    }

    pub fn at(&self, round: u32) -> impl Iterator<Item = &FailureEvent> {
        self.events.iter().filter(move |e| e.round == round)
    }

    pub fn last_round(&self) -> u32 {
        self.events.iter().map(|e| e.round).max().unwrap_or(0)
    }

    pub fn parse(text: &str) -> Result<FailureSchedule, ScheduleError> {
        let mut events = Vec::new();
        for (k, raw) in text.lines().enumerate() {
            let line = k + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |msg: &str| ScheduleError::Parse { line, msg: msg.to_string() };
            let tokens: Vec<_> = body.split_whitespace().collect();
            let [round, kind, id, action] = tokens[..] else {
                return Err(err("expected: round node|edge id fail|recover"));
            };
            let round: u32 = round.parse().map_err(|_| err("invalid round"))?;
            let target = match kind {
                "node" => Target::Node(NodeId(id.parse().map_err(|_| err("invalid node id"))?)),
                "edge" => Target::Edge(id.parse().map_err(|e: crate::fd::EdgeParseError| err(&e.to_string()))?),
                _ => return Err(err("kind must be node or edge")),
            };
            let action = match action {
                "fail" => Action::Fail,
                "recover" => Action::Recover,
                _ => return Err(err("action must be fail or recover")),
            };
            events.push(FailureEvent { round, target, action });
        }
        Ok(FailureSchedule::new(events))
    }

    pub fn load(path: &Path) -> Result<FailureSchedule, ScheduleError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScheduleError::Io { path: path.display().to_string(), msg: e.to_string() })?;
        FailureSchedule::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            let (kind, id) = match e.target {
                Target::Node(v) => ("node", v.to_string()),
                Target::Edge(x) => ("edge", x.to_string()),
            };
            let action = match e.action {
                Action::Fail => "fail",
                Action::Recover => "recover",
            };
            out.push_str(&format!("{} {kind} {id} {action}\n", e.round));
        }
        out
    }

    /// Structural checks against the graph: targets exist, at most one failure
    /// per target per round, fail and recover alternate starting with fail.
    pub fn validate(&self, g: &Graph) -> Result<(), ScheduleError> {
        let mut state: BTreeMap<Target, (u32, Action)> = BTreeMap::new();
        for ev in &self.events {
            if ev.round == 0 {
                return Err(ScheduleError::RoundZero);
            }
            let exists = match ev.target {
                Target::Node(v) => v.index() < g.node_count(),
                Target::Edge(e) => {
                    let (u, v) = e.endpoints();
                    v.index() < g.node_count() && g.has_edge(u, v)
                }
            };
            if !exists {
                return Err(ScheduleError::UnknownTarget { round: ev.round, target: ev.target });
            }
            match (state.get(&ev.target), ev.action) {
                (Some(&(r, Action::Fail)), Action::Fail) if r == ev.round => {
                    return Err(ScheduleError::DoubleFail { round: ev.round, target: ev.target })
                }
                (Some(&(_, prev)), action) if prev == action => {
                    return Err(ScheduleError::NotAlternating { round: ev.round, target: ev.target, action })
                }
                (None, Action::Recover) => {
                    return Err(ScheduleError::NotAlternating { round: ev.round, target: ev.target, action: ev.action })
                }
                (Some(&(r, _)), _) if r == ev.round => {
                    return Err(ScheduleError::NotAlternating { round: ev.round, target: ev.target, action: ev.action })
                }
                _ => {}
            }
            state.insert(ev.target, (ev.round, ev.action));
        }
        Ok(())
    }

    /// Rejects node failures from the round a node gets pruned onwards, where
    /// `pruned_round[v]` comes from a failure-free reference run.
    pub fn check_against_pruning(&self, pruned_round: &[Option<u32>]) -> Result<(), ScheduleError> {
        for ev in &self.events {
            if let (Target::Node(v), Action::Fail) = (ev.target, ev.action) {
                if let Some(Some(l)) = pruned_round.get(v.index()) {
                    if ev.round >= *l {
                        return Err(ScheduleError::PrunedTarget { round: ev.round, node: v });
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::golden_graph;

    #[test]
    fn parses_and_round_trips() {
        let s = FailureSchedule::parse("# x\n4 edge 6-2 recover\n2 edge 2-6 fail\n3 node 7 fail  # c\n").unwrap();
        assert_eq!(s.events().len(), 3);
        assert_eq!(s.events()[0].round, 2);
        assert_eq!(FailureSchedule::parse(&s.to_text()).unwrap(), s);
        assert!(matches!(FailureSchedule::parse("2 edge 2-6"), Err(ScheduleError::Parse { line: 1, .. })));
        assert!(matches!(FailureSchedule::parse("\n2 link 2-6 fail"), Err(ScheduleError::Parse { line: 2, .. })));
    }

    #[test]
    fn validation() {
        let g = golden_graph();
        let ok = FailureSchedule::parse("2 edge 2-6 fail\n4 edge 2-6 recover").unwrap();
        assert!(ok.validate(&g).is_ok());
        let missing = FailureSchedule::parse("2 edge 0-9 fail").unwrap();
        assert!(matches!(missing.validate(&g), Err(ScheduleError::UnknownTarget { .. })));
        let double = FailureSchedule::parse("2 node 2 fail\n2 node 2 fail").unwrap();
        assert!(matches!(double.validate(&g), Err(ScheduleError::DoubleFail { .. })));
        let recover_first = FailureSchedule::parse("2 node 2 recover").unwrap();
        assert!(matches!(recover_first.validate(&g), Err(ScheduleError::NotAlternating { .. })));
    }

    #[test]
    fn pruned_nodes_cannot_fail() {
        let s = FailureSchedule::parse("2 node 4 fail").unwrap();
        let mut pruned = vec![None; 10];
        pruned[4] = Some(1);
        assert!(matches!(s.check_against_pruning(&pruned), Err(ScheduleError::PrunedTarget { .. })));
        pruned[4] = Some(2);
        assert!(s.check_against_pruning(&pruned).is_err());
        pruned[4] = Some(3);
        assert!(s.check_against_pruning(&pruned).is_ok());
    }
}
