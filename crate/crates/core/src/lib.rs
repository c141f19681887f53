//! Decentralized network-view construction for closeness-centrality
//! estimation: a flooding baseline, a pruning variant, a failure-detecting
//! extension of the pruning variant, a deterministic round simulator, exact
//! oracles and the statistics used to compare the protocols.

pub mod fd;
pub mod graph;
pub mod metrics;
pub mod pruning;
pub mod report;
pub mod schedule;
pub mod sim;
pub mod view;
pub mod ytq;

pub use graph::{Closeness, Graph, NodeId};
pub use report::{Protocol, RunReport};
pub use schedule::FailureSchedule;
pub use sim::{run, run_with, RunConfig};
