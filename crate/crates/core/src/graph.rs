//! Undirected simple graphs, edge-list I/O, random geometric generation and
//! exact centrality oracles.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use num_rational::Ratio;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Dense node identifier, `0..n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for NodeId {
    fn from(i: usize) -> Self {
        NodeId(i as u32)
    }
}

/// Exact closeness value.
pub type Closeness = Ratio<u64>;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("graph has no edges")]
    Empty,
    #[error("graph is not connected")]
    Disconnected,
    #[error("closeness is undefined for a single-node graph")]
    SingleNode,
    #[error("node {0} out of range")]
    NodeOutOfRange(NodeId),
    #[error("invalid generator parameters: {0}")]
    InvalidParams(String),
    #[error("no connected sample after {attempts} attempts")]
    GenerationFailed { attempts: u32 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Undirected simple graph with sorted adjacency lists.
///
/// `labels[i]` is the identifier node `i` had in its source (file ids, or
/// 1-based names for the reference graph).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    adj: Vec<Vec<NodeId>>,
    edge_count: usize,
    labels: Vec<u64>,
}

impl Graph {
    /// Builds a graph on `n` nodes. Self-loops and duplicates are dropped.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Graph, GraphError> {
        let labels = (0..n as u64).collect();
        Graph::with_labels(n, edges, labels)
    }

    fn with_labels(n: usize, edges: &[(usize, usize)], labels: Vec<u64>) -> Result<Graph, GraphError> {
        let mut adj: Vec<Vec<NodeId>> = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n {
                return Err(GraphError::NodeOutOfRange(u.into()));
            }
            if v >= n {
                return Err(GraphError::NodeOutOfRange(v.into()));
            }
            if u == v {
                continue;
            }
            adj[u].push(v.into());
            adj[v].push(u.into());
        }
        let mut edge_count = 0;
        for list in &mut adj {
            list.sort_unstable();
            list.dedup();
            edge_count += list.len();
        }
        Ok(Graph { adj, edge_count: edge_count / 2, labels })
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.adj.len()).map(NodeId::from)
    }

    pub fn neighbours(&self, i: NodeId) -> &[NodeId] {
        &self.adj[i.index()]
    }

    pub fn degree(&self, i: NodeId) -> usize {
        self.adj[i.index()].len()
    }

    pub fn has_edge(&self, u: NodeId, v: NodeId) -> bool {
        self.adj[u.index()].binary_search(&v).is_ok()
    }

    /// Edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adj.iter().enumerate().flat_map(|(u, list)| {
            let u = NodeId::from(u);
            list.iter().filter(move |&&v| u < v).map(move |&v| (u, v))
        })
    }

    pub fn label(&self, i: NodeId) -> u64 {
        self.labels[i.index()]
    }

    pub fn labels(&self) -> &[u64] {
        &self.labels
    }

    /// Connected components, each sorted, ordered by smallest member.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let n = self.node_count();
        let mut seen = vec![false; n];
        let mut out = Vec::new();
        for s in 0..n {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![NodeId::from(s)];
            let mut queue = VecDeque::from([NodeId::from(s)]);
            while let Some(u) = queue.pop_front() {
                for &v in self.neighbours(u) {
                    if !seen[v.index()] {
                        seen[v.index()] = true;
                        comp.push(v);
                        queue.push_back(v);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    pub fn is_connected(&self) -> bool {
        self.node_count() > 0 && self.components().len() == 1
    }

    /// Induced subgraph on `nodes`, renumbered in the given order. Labels carry over.
    pub fn induced(&self, nodes: &[NodeId]) -> Graph {
        let mut index = HashMap::with_capacity(nodes.len());
        for (k, &v) in nodes.iter().enumerate() {
            index.insert(v, k);
        }
        let mut edges = Vec::new();
        for (k, &u) in nodes.iter().enumerate() {
            for v in self.neighbours(u) {
                if let Some(&kv) = index.get(v) {
                    if k < kv {
                        edges.push((k, kv));
                    }
                }
            }
        }
        let labels = nodes.iter().map(|&v| self.label(v)).collect();
        Graph::with_labels(nodes.len(), &edges, labels).expect("indices in range")
    }

    /// Largest connected component (ties: the one holding the smallest id).
    pub fn largest_component(&self) -> Graph {
        let comps = self.components();
        let mut best = 0;
        for (k, c) in comps.iter().enumerate() {
            if c.len() > comps[best].len() {
                best = k;
            }
        }
        match comps.get(best) {
            Some(c) if comps.len() > 1 => self.induced(c),
            _ => self.clone(),
        }
    }
}

/// Parses a whitespace-separated edge list. Lines starting with `#` and blank
/// lines are skipped; ids are remapped densely in ascending order.
pub fn load_edge_list(text: &str) -> Result<Graph, GraphError> {
    let mut raw = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line_no = k + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut tokens = trimmed.split_whitespace();
        let mut next = || -> Result<u64, GraphError> {
            let tok = tokens
                .next()
                .ok_or_else(|| GraphError::Parse { line: line_no, msg: "expected two node ids".into() })?;
            tok.parse::<u64>().map_err(|_| GraphError::Parse { line: line_no, msg: format!("invalid node id {tok:?}") })
        };
        let a = next()?;
        let b = next()?;
        if tokens.next().is_some() {
            return Err(GraphError::Parse { line: line_no, msg: "trailing tokens".into() });
        }
        raw.push((a, b));
    }
    let mut ids: BTreeMap<u64, usize> = raw.iter().flat_map(|&(a, b)| [(a, 0), (b, 0)]).collect();
    for (k, slot) in ids.values_mut().enumerate() {
        *slot = k;
    }
    let labels = ids.keys().copied().collect();
    let edges: Vec<_> = raw.iter().map(|(a, b)| (ids[a], ids[b])).collect();
    let g = Graph::with_labels(ids.len(), &edges, labels)?;
    if g.edge_count() == 0 {
        return Err(GraphError::Empty);
    }
    Ok(g)
}

pub fn load_edge_list_file(path: &Path) -> Result<Graph, GraphError> {
    let text =
        std::fs::read_to_string(path).map_err(|source| GraphError::Io { path: path.display().to_string(), source })?;
    load_edge_list(&text)
}

/// Canonical form: one `u v` per line with `u < v`, sorted, dense ids.
pub fn save_edge_list(g: &Graph) -> String {
    let mut out = String::new();
    for (u, v) in g.edges() {
        out.push_str(&format!("{u} {v}\n"));
    }
    out
}

/// Like [`save_edge_list`] but writes node labels instead of dense ids.
pub fn save_edge_list_labelled(g: &Graph) -> String {
    let mut out = String::new();
    for (u, v) in g.edges() {
        out.push_str(&format!("{} {}\n", g.label(u), g.label(v)));
    }
    out
}

/// Sampling strategy for [`random_geometric`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Place distinct random grid points one at a time and return the first
    /// connected cluster that reaches exactly `nodes` points.
    FirstCluster,
    /// Place `nodes` distinct random points at once; resample until connected.
    Rejection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeometricParams {
    pub nodes: usize,
    /// Points closer than this (strictly) are joined.
    pub comm_range: u32,
    /// Side of the square integer lattice.
    pub grid_size: u32,
    pub sampling: Sampling,
    pub max_attempts: u32,
}

impl Default for GeometricParams {
    fn default() -> Self {
        GeometricParams {
            nodes: 100,
            comm_range: 8,
            grid_size: 200,
            sampling: Sampling::FirstCluster,
            max_attempts: 1000,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GeometricGraph {
    pub graph: Graph,
    pub positions: Vec<(u32, u32)>,
    /// Attempts used, starting at 1.
    pub attempts: u32,
}

/// `(nodes, seed)` for a family of `count` graphs with sizes spread evenly over
/// `min..=max` and seeds `base_seed, base_seed + 1, ...`.
pub fn corpus_plan(count: usize, min: usize, max: usize, base_seed: u64) -> Vec<(usize, u64)> {
    (0..count)
        .map(|k| {
            let n = if count < 2 { min } else { min + (max - min) * k / (count - 1) };
            (n, base_seed + k as u64)
        })
        .collect()
}

/// Unit-disk graph over explicit lattice points (edge iff squared distance < range²).
pub fn geometric_graph(positions: &[(u32, u32)], comm_range: u32) -> Result<Graph, GraphError> {
    let mut cells: HashMap<(u32, u32), usize> = HashMap::with_capacity(positions.len());
    for (k, &p) in positions.iter().enumerate() {
        if cells.insert(p, k).is_some() {
            return Err(GraphError::InvalidParams(format!("duplicate point {p:?}")));
        }
    }
    let mut edges = Vec::new();
    for (k, &p) in positions.iter().enumerate() {
        for j in in_range(&cells, p, comm_range) {
            if j < k {
                edges.push((j, k));
            }
        }
    }
    Graph::from_edges(positions.len(), &edges)
}

fn in_range(cells: &HashMap<(u32, u32), usize>, p: (u32, u32), r: u32) -> Vec<usize> {
    let r = r as i64;
    let r2 = r * r;
    let mut out = Vec::new();
    for dx in -(r - 1)..r {
        for dy in -(r - 1)..r {
            if (dx == 0 && dy == 0) || dx * dx + dy * dy >= r2 {
                continue;
            }
            let (x, y) = (p.0 as i64 + dx, p.1 as i64 + dy);
            if x < 0 || y < 0 {
                continue;
            }
            if let Some(&j) = cells.get(&(x as u32, y as u32)) {
                out.push(j);
            }
        }
    }
    out
}

/// Seeded random geometric graph on a `grid_size × grid_size` integer lattice.
///
/// Attempt `k` draws from the ChaCha8 stream `k` of `seed`, so output depends only
/// on `(params, seed)`.
pub fn random_geometric(params: &GeometricParams, seed: u64) -> Result<GeometricGraph, GraphError> {
    let cells = params.grid_size as usize * params.grid_size as usize;
    if params.nodes < 2 {
        return Err(GraphError::InvalidParams("need at least 2 nodes".into()));
    }
    if params.nodes > cells {
        return Err(GraphError::InvalidParams(format!("{} nodes exceed grid capacity {cells}", params.nodes)));
    }
    if params.comm_range == 0 {
        return Err(GraphError::InvalidParams("communication range must be positive".into()));
    }
    for attempt in 0..params.max_attempts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(attempt as u64);
        let found = match params.sampling {
            Sampling::Rejection => rejection_sample(params, cells, &mut rng)?,
            Sampling::FirstCluster => cluster_sample(params, cells, &mut rng)?,
        };
        if let Some((graph, positions)) = found {
            return Ok(GeometricGraph { graph, positions, attempts: attempt + 1 });
        }
    }
    Err(GraphError::GenerationFailed { attempts: params.max_attempts })
}

type Sample = Option<(Graph, Vec<(u32, u32)>)>;

fn cell_point(params: &GeometricParams, c: usize) -> (u32, u32) {
    let side = params.grid_size as usize;
    ((c / side) as u32, (c % side) as u32)
}

fn rejection_sample(params: &GeometricParams, cells: usize, rng: &mut ChaCha8Rng) -> Result<Sample, GraphError> {
    let positions: Vec<_> = sample(rng, cells, params.nodes).into_iter().map(|c| cell_point(params, c)).collect();
    let g = geometric_graph(&positions, params.comm_range)?;
    Ok(g.is_connected().then_some((g, positions)))
}

fn cluster_sample(params: &GeometricParams, cells: usize, rng: &mut ChaCha8Rng) -> Result<Sample, GraphError> {
    let order = sample(rng, cells, cells);
    let mut placed: HashMap<(u32, u32), usize> = HashMap::new();
    let mut positions = Vec::new();
    let mut dsu = Dsu::default();
    for c in order.into_iter() {
        let p = cell_point(params, c);
        let k = positions.len();
        positions.push(p);
        dsu.push();
        for j in in_range(&placed, p, params.comm_range) {
            dsu.union(j, k);
        }
        placed.insert(p, k);
        let root = dsu.find(k);
        if dsu.size[root] == params.nodes {
            let members: Vec<usize> = (0..positions.len()).filter(|&x| dsu.find(x) == root).collect();
            let pts: Vec<_> = members.iter().map(|&x| positions[x]).collect();
            let g = geometric_graph(&pts, params.comm_range)?;
            return Ok(Some((g, pts)));
        }
    }
    Ok(None)
}

#[derive(Default)]
struct Dsu {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl Dsu {
    fn push(&mut self) {
        self.parent.push(self.parent.len());
        self.size.push(1);
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut a, mut b) = (self.find(a), self.find(b));
        if a == b {
            return;
        }
        if self.size[a] < self.size[b] {
            std::mem::swap(&mut a, &mut b);
        }
        self.parent[b] = a;
        self.size[a] += self.size[b];
    }
}

/// Hop distances from one source. Unreachable nodes hold `u32::MAX`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceRow {
    pub source: NodeId,
    pub dist: Vec<u32>,
}

pub fn bfs_distances(g: &Graph, s: NodeId) -> DistanceRow {
    let mut dist = vec![u32::MAX; g.node_count()];
    dist[s.index()] = 0;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        let du = dist[u.index()];
        for &v in g.neighbours(u) {
            if dist[v.index()] == u32::MAX {
                dist[v.index()] = du + 1;
                queue.push_back(v);
            }
        }
    }
    DistanceRow { source: s, dist }
}

/// All-pairs hop distances, row `i` from node `i`.
pub fn all_distances(g: &Graph) -> Vec<Vec<u32>> {
    g.nodes().map(|s| bfs_distances(g, s).dist).collect()
}

/// `(n-1) / Σ_j dist(i, j)` as an exact fraction.
pub fn closeness_exact(g: &Graph, i: NodeId) -> Result<Closeness, GraphError> {
    check_node(g, i)?;
    if g.node_count() == 1 {
        return Err(GraphError::SingleNode);
    }
    let row = bfs_distances(g, i);
    let mut sum = 0u64;
    for &d in &row.dist {
        if d == u32::MAX {
            return Err(GraphError::Disconnected);
        }
        sum += d as u64;
    }
    Ok(Ratio::new(g.node_count() as u64 - 1, sum))
}

pub fn closeness_all(g: &Graph) -> Result<Vec<Closeness>, GraphError> {
    g.nodes().map(|i| closeness_exact(g, i)).collect()
}

pub fn eccentricity_exact(g: &Graph, i: NodeId) -> Result<u32, GraphError> {
    check_node(g, i)?;
    let row = bfs_distances(g, i);
    let max = row.dist.iter().copied().max().unwrap_or(0);
    if max == u32::MAX {
        return Err(GraphError::Disconnected);
    }
    Ok(max)
}

pub fn eccentricities(g: &Graph) -> Result<Vec<u32>, GraphError> {
    g.nodes().map(|i| eccentricity_exact(g, i)).collect()
}

pub fn diameter(g: &Graph) -> Result<u32, GraphError> {
    Ok(eccentricities(g)?.into_iter().max().unwrap_or(0))
}

pub fn radius(g: &Graph) -> Result<u32, GraphError> {
    Ok(eccentricities(g)?.into_iter().min().unwrap_or(0))
}

fn check_node(g: &Graph, i: NodeId) -> Result<(), GraphError> {
    if i.index() >= g.node_count() {
        return Err(GraphError::NodeOutOfRange(i));
    }
    Ok(())
}

/// The ten-node reference graph. Node `k` is `v{k+1}`; labels are 1-based.
pub fn golden_graph() -> Graph {
    const EDGES: [(usize, usize); 10] =
        [(1, 2), (1, 3), (2, 3), (2, 4), (4, 5), (4, 6), (3, 7), (7, 8), (8, 9), (8, 10)];
    let edges: Vec<_> = EDGES.iter().map(|&(u, v)| (u - 1, v - 1)).collect();
    Graph::with_labels(10, &edges, (1..=10).collect()).expect("static edges")
}

/// `v{k}` name of a 1-based reference-graph node.
pub fn v(k: u32) -> NodeId {
    NodeId(k - 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        let edges: Vec<_> = (1..n).map(|k| (k - 1, k)).collect();
        Graph::from_edges(n, &edges).unwrap()
    }

    fn complete(n: usize) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for w in u + 1..n {
                edges.push((u, w));
            }
        }
        Graph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn loads_path() {
        let g = load_edge_list("0 1\n1 2").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (3, 2));
    }

    #[test]
    fn drops_loops_and_duplicates() {
        let g = load_edge_list("# c\n5 9\n9 5\n5 5").unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        assert_eq!(g.labels(), &[5, 9]);
    }

    #[test]
    fn extracts_component() {
        let g = load_edge_list("0 1\n2 3").unwrap();
        assert!(!g.is_connected());
        assert_eq!(g.largest_component().node_count(), 2);
    }

    #[test]
    fn parse_errors_carry_line() {
        match load_edge_list("0 1\n\n1 x\n") {
            Err(GraphError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(load_edge_list("0 1 2"), Err(GraphError::Parse { line: 1, .. })));
        assert!(matches!(load_edge_list("# only\n"), Err(GraphError::Empty)));
        assert!(matches!(load_edge_list("3 3\n"), Err(GraphError::Empty)));
    }

    #[test]
    fn small_oracles() {
        let p = path(3);
        assert_eq!(bfs_distances(&p, NodeId(0)).dist, vec![0, 1, 2]);
        assert_eq!(closeness_exact(&p, NodeId(1)).unwrap(), Ratio::new(1, 1));
        assert_eq!(closeness_exact(&p, NodeId(0)).unwrap(), Ratio::new(2, 3));
        assert_eq!(eccentricity_exact(&p, NodeId(1)).unwrap(), 1);
        assert_eq!(diameter(&path(7)).unwrap(), 6);
        let k4 = complete(4);
        assert!(k4.nodes().all(|i| eccentricity_exact(&k4, i).unwrap() == 1));
        assert_eq!(diameter(&complete(5)).unwrap(), 1);
        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(bfs_distances(&star, NodeId(0)).dist, vec![0, 1, 1, 1]);
        let single = Graph::from_edges(1, &[]).unwrap();
        assert!(matches!(closeness_exact(&single, NodeId(0)), Err(GraphError::SingleNode)));
    }

    #[test]
    fn golden_eccentricities() {
        let g = golden_graph();
        assert_eq!(eccentricities(&g).unwrap(), vec![4, 4, 3, 5, 6, 6, 4, 5, 6, 6]);
        assert_eq!(diameter(&g).unwrap(), 6);
        assert_eq!(bfs_distances(&g, v(3)).dist.iter().max(), Some(&3));
        assert_eq!(g.degree(v(1)), 2);
        assert!(g.has_edge(v(2), v(3)));
    }

    #[test]
    fn golden_v3_is_most_central() {
        let g = golden_graph();
        let c = closeness_all(&g).unwrap();
        let best = c[v(3).index()];
        assert!(g.nodes().filter(|&i| i != v(3)).all(|i| c[i.index()] < best));
    }

    #[test]
    fn two_point_geometric() {
        let g = geometric_graph(&[(0, 0), (3, 4)], 8).unwrap();
        assert_eq!((g.node_count(), g.edge_count()), (2, 1));
        let g = geometric_graph(&[(0, 0), (0, 8)], 8).unwrap();
        assert_eq!(g.edge_count(), 0);
    }

    #[test]
    fn generator_is_deterministic() {
        let p = GeometricParams { nodes: 120, ..Default::default() };
        let a = random_geometric(&p, 7).unwrap();
        let b = random_geometric(&p, 7).unwrap();
        assert_eq!(a.graph, b.graph);
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.graph.node_count(), 120);
        assert!(a.graph.is_connected());
    }

    #[test]
    fn rejection_mode_reports_attempts() {
        let p = GeometricParams { nodes: 60, sampling: Sampling::Rejection, max_attempts: 3, ..Default::default() };
        match random_geometric(&p, 1) {
            Err(GraphError::GenerationFailed { attempts }) => assert_eq!(attempts, 3),
            other => panic!("{other:?}"),
        }
        let dense = GeometricParams { nodes: 60, grid_size: 12, sampling: Sampling::Rejection, ..Default::default() };
        assert!(random_geometric(&dense, 1).unwrap().graph.is_connected());
    }

    #[test]
    fn save_is_canonical() {
        let g = load_edge_list("2 1\n1 0\n").unwrap();
        assert_eq!(save_edge_list(&g), "0 1\n1 2\n");
        assert_eq!(g.labels(), &[0, 1, 2]);
        let h = load_edge_list(&save_edge_list(&g)).unwrap();
        assert_eq!(save_edge_list(&h), save_edge_list(&g));
    }

    #[test]
    fn labelled_save_keeps_labels() {
        let g = golden_graph();
        let text = save_edge_list_labelled(&g);
        assert!(text.starts_with("1 2\n1 3\n"));
        let back = load_edge_list(&text).unwrap();
        assert_eq!(back.labels(), g.labels());
        assert_eq!(save_edge_list(&back), save_edge_list(&g));
    }
}
