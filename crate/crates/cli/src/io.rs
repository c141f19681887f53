//! Exit codes, atomic output and the on-disk run record.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use netview::graph::{diameter, load_edge_list, load_edge_list_file, save_edge_list, GraphError};
use netview::sim::RunConfig;
use netview::{Graph, RunReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const TOOL: &str = concat!("netview ", env!("CARGO_PKG_VERSION"));

/// Error carrying a process exit code.
#[derive(Debug)]
pub struct Exit {
    pub code: u8,
    pub msg: String,
}

impl fmt::Display for Exit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.msg)
    }
}

impl std::error::Error for Exit {}

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_MISSING: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;

pub fn exit(code: u8, msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Exit { code, msg: msg.into() })
}

pub fn require_file(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(exit(EXIT_MISSING, format!("no such file: {}", path.display())))
    }
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("temp file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn fingerprint(g: &Graph) -> String {
    format!("{:x}", Sha256::digest(save_edge_list(g).as_bytes()))
}

/// Input files: plain paths, or every file with `ext` inside a directory.
pub fn expand_inputs(paths: &[PathBuf], ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        require_file(p)?;
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|q| q.extension().is_some_and(|x| x == ext))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphInfo {
    pub source: String,
    pub fingerprint: String,
    pub nodes: usize,
    pub edges: usize,
    pub diameter: u32,
    /// Node count of the file before the largest component was extracted.
    pub file_nodes: usize,
    /// Canonical edge list with dense ids.
    pub edge_list: String,
}

pub struct LoadedGraph {
    pub graph: Graph,
    pub info: GraphInfo,
}

pub fn load_graph(path: &Path) -> Result<LoadedGraph> {
    require_file(path)?;
    let raw = load_edge_list_file(path).map_err(|e| match e {
        GraphError::Io { path, source } if source.kind() == std::io::ErrorKind::NotFound => {
            exit(EXIT_MISSING, format!("no such file: {path}"))
        }
        other => anyhow::Error::new(other).context(format!("loading {}", path.display())),
    })?;
    let file_nodes = raw.node_count();
    let graph = if raw.is_connected() {
        raw
    } else {
        let g = raw.largest_component();
        eprintln!(
            "note: {} is disconnected; using its largest component ({} of {file_nodes} nodes)",
            path.display(),
            g.node_count()
        );
        g
    };
    if graph.node_count() < 2 {
        return Err(exit(EXIT_FAILURE, format!("{}: need a connected graph with at least two nodes", path.display())));
    }
    let info = GraphInfo {
        source: path.display().to_string(),
        fingerprint: fingerprint(&graph),
        nodes: graph.node_count(),
        edges: graph.edge_count(),
        diameter: diameter(&graph)?,
        file_nodes,
        edge_list: save_edge_list(&graph),
    };
    Ok(LoadedGraph { graph, info })
}

impl GraphInfo {
    pub fn graph(&self) -> Result<Graph> {
        Ok(load_edge_list(&self.edge_list)?)
    }

    pub fn stem(&self) -> String {
        Path::new(&self.source).file_stem().map_or("graph".into(), |s| s.to_string_lossy().into_owned())
    }
}

/// Everything needed to repeat one run, plus its report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunRecord {
    pub tool: String,
    pub graph: GraphInfo,
    pub config: RunConfig,
    pub d_policy: String,
    pub repetition: u32,
    pub schedule: Option<String>,
    pub checks: Vec<String>,
    pub report: RunReport,
}

impl RunRecord {
    pub fn load(path: &Path) -> Result<RunRecord> {
        require_file(path)?;
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("{} is not a run record", path.display()))
    }
}
