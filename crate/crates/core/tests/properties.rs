use std::collections::BTreeSet;

use netview::graph::{
    all_distances, bfs_distances, closeness_all, diameter, eccentricities, load_edge_list, random_geometric,
    save_edge_list, GeometricParams,
};
use netview::metrics::{
    argmax, central_node_distance, delta_formula, kendall_tau, p_formula, spearman_rho, wilcoxon_signed_rank,
    y_formula, CountTrace, WilcoxonMethod,
};
use netview::pruning::PruningState;
use netview::sim::DeliveryOrder;
use netview::view::NodeSet;
use netview::ytq::YtqState;
use netview::{run, run_with, Closeness, FailureSchedule, Graph, NodeId, Protocol, RunConfig};
use proptest::prelude::*;

/// Connected graph: a random tree plus extra edges.
fn connected_graph(max_nodes: usize) -> impl Strategy<Value = Graph> {
    (2..=max_nodes)
        .prop_flat_map(|n| {
            let parents: Vec<BoxedStrategy<usize>> = (1..n).map(|i| (0..i).boxed()).collect();
            (Just(n), parents, prop::collection::vec((0..n, 0..n), 0..n))
        })
        .prop_map(|(n, parents, extra)| {
            let mut edges: Vec<(usize, usize)> = parents.iter().enumerate().map(|(k, &p)| (k + 1, p)).collect();
            edges.extend(extra.into_iter().filter(|(a, b)| a != b));
            Graph::from_edges(n, &edges).unwrap()
        })
}

fn none() -> FailureSchedule {
    FailureSchedule::empty()
}

/// Floyd-Warshall distances.
fn floyd(g: &Graph) -> Vec<Vec<u32>> {
    let n = g.node_count();
    let inf = u32::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
        for &j in g.neighbours(NodeId::from(i)) {
            row[j.index()] = 1;
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                d[i][j] = d[i][j].min(d[i][k] + d[k][j]);
            }
        }
    }
    d
}

/// Estimate from the ball of radius `r` around `i`.
fn ball_estimate(dist: &[u32], r: u32) -> Closeness {
    let inside: Vec<u32> = dist.iter().copied().filter(|&x| x <= r).collect();
    let total: u64 = inside.iter().map(|&x| x as u64).sum();
    Closeness::new(inside.len() as u64 - 1, total)
}

/// Runs YTQ states directly, returning each node's frontier per round.
fn drive_ytq(g: &Graph, d: u32) -> Vec<Vec<NodeSet>> {
    let n = g.node_count();
    let mut st: Vec<YtqState> =
        g.nodes().map(|i| YtqState::new(i, g.neighbours(i).iter().copied().collect(), d).unwrap()).collect();
    let mut history = vec![Vec::new(); n];
    for _ in 0..d {
        let active: Vec<usize> = (0..n).filter(|&i| !st[i].is_ended()).collect();
        if active.is_empty() {
            break;
        }
        let mut outbox = Vec::new();
        for &i in &active {
            outbox.extend(st[i].one_hop());
        }
        for (k, m) in outbox {
            if !st[k.index()].is_ended() {
                st[k.index()].receive(m);
            }
        }
        for &i in &active {
            st[i].update().unwrap();
            history[i].push(st[i].frontier().clone());
        }
        for &i in &active {
            if st[i].is_ended() {
                for &k in g.neighbours(NodeId::from(i)) {
                    st[k.index()].neighbour_ended(NodeId::from(i));
                }
            }
        }
    }
    history
}

/// Runs pruning states directly, checking after every update that the
/// cumulative view is self plus the union of all frontiers so far.
fn drive_pruning_views_agree(g: &Graph, d: u32) -> bool {
    let n = g.node_count();
    let mut st: Vec<PruningState> =
        g.nodes().map(|i| PruningState::new(i, g.neighbours(i).iter().copied().collect(), d).unwrap()).collect();
    for _ in 0..d {
        let active: Vec<usize> = (0..n).filter(|&i| !st[i].is_ended()).collect();
        if active.is_empty() {
            break;
        }
        let mut outbox = Vec::new();
        for &i in &active {
            outbox.extend(st[i].one_hop());
        }
        for (k, m) in outbox {
            if !st[k.index()].is_ended() {
                st[k.index()].receive(m);
            }
        }
        for &i in &active {
            st[i].update().unwrap();
            let mut union: NodeSet = st[i].frontier_history().iter().flatten().copied().collect();
            union.extend(st[i].neighbours().iter().copied());
            union.insert(NodeId::from(i));
            if &union != st[i].view() {
                return false;
            }
        }
        for &i in &active {
            let pruned: Vec<NodeId> = st[i].newly_pruned().collect();
            for j in pruned {
                st[j.index()].muted_by(NodeId::from(i));
            }
        }
        for &i in &active {
            if st[i].is_ended() {
                for &k in g.neighbours(NodeId::from(i)) {
                    st[k.index()].neighbour_ended(NodeId::from(i));
                }
            }
        }
    }
    true
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn graph_structure(g in connected_graph(30)) {
        for i in g.nodes() {
            let nb = g.neighbours(i);
            prop_assert!(nb.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!nb.contains(&i));
            for &j in nb {
                prop_assert!(g.neighbours(j).contains(&i));
            }
        }
        prop_assert_eq!(g.edges().count(), g.edge_count());
        let reloaded = load_edge_list(&save_edge_list(&g)).unwrap();
        prop_assert_eq!(save_edge_list(&reloaded), save_edge_list(&g));
    }

    #[test]
    fn distances_match_floyd(g in connected_graph(25)) {
        let oracle = floyd(&g);
        prop_assert_eq!(&all_distances(&g), &oracle);
        for (u, v) in g.edges() {
            let row = bfs_distances(&g, u);
            prop_assert!(row.dist[u.index()] == 0);
            prop_assert!(row.dist[u.index()].abs_diff(row.dist[v.index()]) <= 1);
        }
        let exact = closeness_all(&g).unwrap();
        for i in 0..g.node_count() {
            let total: u64 = oracle[i].iter().map(|&x| x as u64).sum();
            prop_assert_eq!(exact[i], Closeness::new(g.node_count() as u64 - 1, total));
        }
        let ecc: Vec<u32> = oracle.iter().map(|r| *r.iter().max().unwrap()).collect();
        prop_assert_eq!(eccentricities(&g).unwrap(), ecc);
    }

    #[test]
    fn geometric_contract(nodes in 2usize..40, seed in any::<u64>()) {
        let params = GeometricParams { nodes, grid_size: 20, ..GeometricParams::default() };
        let a = random_geometric(&params, seed).unwrap();
        let b = random_geometric(&params, seed).unwrap();
        prop_assert_eq!(save_edge_list(&a.graph), save_edge_list(&b.graph));
        prop_assert_eq!(a.graph.node_count(), nodes);
        prop_assert!(a.graph.is_connected());
        let distinct: BTreeSet<_> = a.positions.iter().collect();
        prop_assert_eq!(distinct.len(), nodes);
        for u in 0..nodes {
            for v in u + 1..nodes {
                let (p, q) = (a.positions[u], a.positions[v]);
                let dx = p.0 as i64 - q.0 as i64;
                let dy = p.1 as i64 - q.1 as i64;
                let close = dx * dx + dy * dy < 64;
                prop_assert_eq!(close, a.graph.has_edge(NodeId::from(u), NodeId::from(v)));
            }
        }
    }

    #[test]
    fn ytq_frontier_is_next_shell(g in connected_graph(25), d in 1u32..8) {
        let dist = floyd(&g);
        for (i, rounds) in drive_ytq(&g, d).into_iter().enumerate() {
            for (k, frontier) in rounds.iter().enumerate() {
                let shell: NodeSet = (0..g.node_count()).filter(|&u| dist[i][u] == k as u32 + 2).map(NodeId::from).collect();
                prop_assert_eq!(frontier, &shell);
            }
        }
    }

    #[test]
    fn ytq_estimate_is_ball_estimate(g in connected_graph(25), d in 1u32..8) {
        let dist = floyd(&g);
        let r = run(&g, Protocol::Ytq, d, &none(), 0).unwrap();
        for n in &r.nodes {
            prop_assert_eq!(n.closeness, ball_estimate(&dist[n.id.index()], d + 1));
        }
    }

    #[test]
    fn exact_at_diameter(g in connected_graph(25)) {
        let d = diameter(&g).unwrap();
        let exact = closeness_all(&g).unwrap();
        let y = run(&g, Protocol::Ytq, d, &none(), 0).unwrap();
        let p = run(&g, Protocol::Pruning, d, &none(), 0).unwrap();
        for (a, b) in y.nodes.iter().zip(&p.nodes) {
            prop_assert_eq!(a.closeness, exact[a.id.index()]);
            if b.pruned_round.is_none() {
                prop_assert_eq!(b.closeness, exact[b.id.index()]);
            } else {
                prop_assert_eq!(b.closeness, Closeness::new(0, 1));
            }
        }
        prop_assert_eq!(central_node_distance(&g, &y.estimates()).unwrap(), 0);
        // The pruning leader is the most central node that was not pruned,
        // and a minimum-eccentricity node is never pruned.
        let kept: Vec<usize> = p.nodes.iter().filter(|n| n.pruned_round.is_none()).map(|n| n.id.index()).collect();
        let best_kept = kept.iter().map(|&k| exact[k]).max().unwrap();
        prop_assert_eq!(exact[argmax(&p.estimates()).unwrap()], best_kept);
        let ecc = eccentricities(&g).unwrap();
        let radius = *ecc.iter().min().unwrap();
        prop_assert!(kept.iter().any(|&k| ecc[k] == radius));
    }

    #[test]
    fn views_are_union_of_frontiers(g in connected_graph(25), d in 1u32..8) {
        prop_assert!(drive_pruning_views_agree(&g, d));
    }

    #[test]
    fn delivery_order_is_irrelevant(g in connected_graph(20), d in 1u32..7, seed in any::<u64>()) {
        for protocol in [Protocol::Ytq, Protocol::Pruning, Protocol::Fd] {
            let base = RunConfig::new(protocol, d);
            let shuffled = RunConfig { delivery: DeliveryOrder::Shuffled, seed, ..base.clone() };
            let a = run_with(&g, &base, &none()).unwrap();
            let mut b = run_with(&g, &shuffled, &none()).unwrap();
            b.seed = a.seed;
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn count_formulas_match_simulation(g in connected_graph(25), d in 1u32..8) {
        let y = run(&g, Protocol::Ytq, d, &none(), 0).unwrap();
        let p = run(&g, Protocol::Pruning, d, &none(), 0).unwrap();
        let (ty, tp) = (CountTrace::from_report(&y), CountTrace::from_report(&p));
        for k in 0..g.node_count() {
            let i = NodeId::from(k);
            prop_assert_eq!(y_formula(&ty, i), y.nodes[k].received);
            prop_assert_eq!(p_formula(&tp, i), p.nodes[k].received);
            prop_assert!(y.nodes[k].received >= p.nodes[k].received);
            prop_assert_eq!(delta_formula(&ty, &tp, i), y.nodes[k].received - p.nodes[k].received);
        }
    }

    #[test]
    fn pruning_respects_eccentricity(g in connected_graph(25), d in 1u32..8) {
        let ecc = eccentricities(&g).unwrap();
        let p = run(&g, Protocol::Pruning, d, &none(), 0).unwrap();
        for e in &p.prune_events {
            prop_assert!(ecc[e.pruned.index()] >= ecc[e.pruner.index()]);
        }
    }

    #[test]
    fn fd_without_failures_matches_pruning(g in connected_graph(20), d in 1u32..7) {
        let p = run(&g, Protocol::Pruning, d, &none(), 0).unwrap();
        let f = run(&g, Protocol::Fd, d, &none(), 0).unwrap();
        for (a, b) in p.nodes.iter().zip(&f.nodes) {
            let va: BTreeSet<_> = a.final_view.iter().collect();
            let vb: BTreeSet<_> = b.final_view.iter().collect();
            prop_assert_eq!(va, vb);
            prop_assert_eq!(a.termination, b.termination);
            prop_assert_eq!(a.received, b.received);
            prop_assert_eq!(a.closeness, b.closeness);
            prop_assert_eq!(&a.pruned_by_round, &b.pruned_by_round);
        }
        prop_assert_eq!(p.prune_events, f.prune_events);
    }

    #[test]
    fn rank_correlations_ignore_monotone_maps(
        pairs in prop::collection::vec((-20i32..20, -20i32..20), 3..30)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let fx: Vec<f64> = x.iter().map(|v| v * v * v + 2.0 * v).collect();
        let gy: Vec<f64> = y.iter().map(|v| (v / 7.0).exp()).collect();
        match (spearman_rho(&x, &y), spearman_rho(&fx, &gy)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{other:?}"),
        }
        match (kendall_tau(&x, &y), kendall_tau(&fx, &gy)) {
            (Ok(a), Ok(b)) => prop_assert!((a - b).abs() < 1e-12),
            (Err(_), Err(_)) => {}
            other => prop_assert!(false, "{other:?}"),
        }
    }

    #[test]
    fn spearman_without_ties_matches_rank_difference_formula(perm in Just((0..12).collect::<Vec<u32>>()).prop_shuffle()) {
        let x: Vec<f64> = (0..perm.len()).map(|k| k as f64).collect();
        let y: Vec<f64> = perm.iter().map(|&v| v as f64).collect();
        let n = x.len() as f64;
        let d2: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum();
        let oracle = 1.0 - 6.0 * d2 / (n * (n * n - 1.0));
        prop_assert!((spearman_rho(&x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_matches_sign_flip_enumeration(
        pairs in prop::collection::vec((0i32..8, 0i32..8), 1..12)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        let diffs: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
        if diffs.is_empty() {
            prop_assert_eq!(r.p_value, 1.0);
            return Ok(());
        }
        // Midranks by counting.
        let ranks: Vec<f64> = diffs
            .iter()
            .map(|d| {
                let less = diffs.iter().filter(|e| e.abs() < d.abs()).count() as f64;
                let equal = diffs.iter().filter(|e| e.abs() == d.abs()).count() as f64;
                less + (equal + 1.0) / 2.0
            })
            .collect();
        let observed: f64 = diffs.iter().zip(&ranks).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();
        let m = diffs.len();
        let (mut le, mut ge) = (0u64, 0u64);
        for mask in 0u32..(1 << m) {
            let w: f64 = (0..m).filter(|b| mask & (1 << b) != 0).map(|b| ranks[b]).sum();
            le += (w <= observed + 1e-9) as u64;
            ge += (w >= observed - 1e-9) as u64;
        }
        let total = (1u64 << m) as f64;
        let oracle = (2.0 * (le as f64 / total).min(ge as f64 / total)).min(1.0);
        prop_assert_eq!(r.method, WilcoxonMethod::Exact);
        prop_assert_eq!(r.statistic, observed);
        prop_assert!((r.p_value - oracle).abs() < 1e-12, "{} vs {}", r.p_value, oracle);
    }
}

#[test]
fn wilcoxon_normal_branch_is_close_to_exact_on_large_samples() {
    // 30 distinct positive and negative differences; compare against exact enumeration
    // by dynamic programming over integer ranks.
    let d: Vec<f64> = (1..=30).map(|k| if k % 3 == 0 { -(k as f64) } else { k as f64 }).collect();
    let zeros = vec![0.0; d.len()];
    let r = wilcoxon_signed_rank(&d, &zeros).unwrap();
    assert_eq!(r.method, WilcoxonMethod::Normal);
    let total: usize = (1..=30).sum();
    let mut counts = vec![0f64; total + 1];
    counts[0] = 1.0;
    for w in 1..=30usize {
        for s in (w..=total).rev() {
            counts[s] += counts[s - w];
        }
    }
    let w = r.statistic as usize;
    let all = 2f64.powi(30);
    let exact = 2.0 * (counts[..=w].iter().sum::<f64>() / all).min(counts[w..].iter().sum::<f64>() / all);
    assert!((r.p_value - exact).abs() < 0.01, "{} vs {}", r.p_value, exact);
}

#[test]
fn pruning_can_drop_the_closeness_maximum() {
    // Hub 1 with four leaves and a branch 1-5-6-7, 5-8. The hub has the unique
    // highest closeness but self-prunes once its leaves are gone; the survivor
    // is the eccentricity centre 5.
    let g = Graph::from_edges(9, &[(0, 1), (1, 2), (1, 3), (1, 4), (1, 5), (5, 6), (6, 7), (5, 8)]).unwrap();
    let exact = closeness_all(&g).unwrap();
    assert_eq!(argmax(&exact), Some(1));
    let d = diameter(&g).unwrap();
    let p = run(&g, Protocol::Pruning, d, &none(), 0).unwrap();
    assert_eq!(p.nodes[1].pruned_round, Some(2));
    assert_eq!(argmax(&p.estimates()), Some(5));
    assert_eq!(central_node_distance(&g, &p.estimates()).unwrap(), 1);
    let y = run(&g, Protocol::Ytq, d, &none(), 0).unwrap();
    assert_eq!(central_node_distance(&g, &y.estimates()).unwrap(), 0);
}
