//! Message-count formulas, leader quality and rank statistics.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::graph::{bfs_distances, closeness_all, Closeness, Graph, GraphError, NodeId};
use crate::report::RunReport;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("samples differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least {needed} samples, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("sample has zero variance")]
    ZeroVariance,
    #[error("estimates cover {got} nodes, graph has {expected}")]
    Coverage { expected: usize, got: usize },
    #[error("column {0:?} not found")]
    MissingColumn(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {msg}")]
    BadValue { row: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Per-node inputs of the count formulas.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeTrace {
    pub degree: u32,
    pub equilibrium_round: Option<u32>,
    pub pruned_round: Option<u32>,
    /// `h^{(l)}`, indexed by round; index 0 is always zero.
    pub equilibrium_drops: Vec<u32>,
    /// `u^{(l)}`, indexed by round; index 0 is always zero.
    pub pruning_drops: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountTrace {
    pub max_rounds: u32,
    pub nodes: Vec<NodeTrace>,
}

impl CountTrace {
    pub fn from_report(r: &RunReport) -> CountTrace {
        CountTrace {
            max_rounds: r.max_rounds,
            nodes: r
                .nodes
                .iter()
                .map(|n| NodeTrace {
                    degree: n.degree,
                    equilibrium_round: n.equilibrium_round,
                    pruned_round: n.pruned_round,
                    equilibrium_drops: n.equilibrium_drops.clone(),
                    pruning_drops: n.pruning_drops.clone(),
                })
                .collect(),
        }
    }
}

fn at(v: &[u32], l: u32) -> u64 {
    v.get(l as usize).copied().unwrap_or(0) as u64
}

fn cap(x: Option<u32>) -> u32 {
    x.unwrap_or(u32::MAX)
}

/// Messages still arriving in round `t` when `drops` neighbours have left before it.
fn incoming(n: &NodeTrace, t: u32, drops: &[&[u32]]) -> u64 {
    let gone: u64 = (0..t).map(|l| drops.iter().map(|d| at(d, l)).sum::<u64>()).sum();
    n.degree as u64 - gone
}

/// Received messages under flooding.
pub fn y_formula(trace: &CountTrace, i: NodeId) -> u64 {
    let n = &trace.nodes[i.index()];
    let end = trace.max_rounds.min(cap(n.equilibrium_round));
    (1..=end).map(|t| incoming(n, t, &[&n.equilibrium_drops])).sum()
}

/// Received messages under pruning.
pub fn p_formula(trace: &CountTrace, i: NodeId) -> u64 {
    let n = &trace.nodes[i.index()];
    let end = trace.max_rounds.min(cap(n.equilibrium_round)).min(cap(n.pruned_round));
    (1..=end).map(|t| incoming(n, t, &[&n.equilibrium_drops, &n.pruning_drops])).sum()
}

/// Messages saved by pruning. `flooding` supplies `h` and `H`, `pruning`
/// supplies `u` and `L`.
pub fn delta_formula(flooding: &CountTrace, pruning: &CountTrace, i: NodeId) -> u64 {
    let y = &flooding.nodes[i.index()];
    let p = &pruning.nodes[i.index()];
    let d = flooding.max_rounds;
    let full = d.min(cap(y.equilibrium_round));
    let cut = full.min(cap(p.pruned_round));
    let early: u64 = (1..=cut).map(|t| (0..t).map(|l| at(&p.pruning_drops, l)).sum::<u64>()).sum();
    let late: u64 = (cut + 1..=full).map(|t| incoming(y, t, &[&y.equilibrium_drops])).sum();
    early + late
}

/// Index of the largest value, lowest index on ties.
pub fn argmax<T: PartialOrd>(values: &[T]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, x) in values.iter().enumerate() {
        if best.is_none_or(|b| *x > values[b]) {
            best = Some(k);
        }
    }
    best
}

/// Hop distance between the estimated and the exact most central node.
pub fn central_node_distance(g: &Graph, estimates: &[Closeness]) -> Result<u32, StatsError> {
    if estimates.len() != g.node_count() {
        return Err(StatsError::Coverage { expected: g.node_count(), got: estimates.len() });
    }
    let exact = closeness_all(g)?;
    let a = argmax(estimates).expect("nonempty");
    let b = argmax(&exact).expect("nonempty");
    Ok(bfs_distances(g, NodeId::from(a)).dist[b])
}

/// Average (fractional) ranks, 1-based.
pub fn ranks(x: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut out = vec![0.0; x.len()];
    let mut k = 0;
    while k < idx.len() {
        let mut j = k;
        while j + 1 < idx.len() && x[idx[j + 1]] == x[idx[k]] {
            j += 1;
        }
        let r = (k + j) as f64 / 2.0 + 1.0;
        for &p in &idx[k..=j] {
            out[p] = r;
        }
        k = j + 1;
    }
    out
}

fn check_pair(x: &[f64], y: &[f64], min: usize) -> Result<(), StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.len() < min {
        return Err(StatsError::TooFew { needed: min, got: x.len() });
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n - 1 denominator).
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() as f64 - 1.0)).sqrt()
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    let (mx, my) = (mean(x), mean(y));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman's rho with average ranks for ties.
pub fn spearman_rho(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    pearson(&ranks(x), &ranks(y))
}

/// Kendall's tau-b.
pub fn kendall_tau(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let n = x.len();
    let (mut concordant, mut discordant, mut tie_x, mut tie_y) = (0i64, 0i64, 0i64, 0i64);
    for a in 0..n {
        for b in a + 1..n {
            let dx = x[a].total_cmp(&x[b]) as i64;
            let dy = y[a].total_cmp(&y[b]) as i64;
            match (dx, dy) {
                (0, 0) => {}
                (0, _) => tie_x += 1,
                (_, 0) => tie_y += 1,
                _ if dx == dy => concordant += 1,
                _ => discordant += 1,
            }
        }
    }
    let left = (concordant + discordant + tie_x) as f64;
    let right = (concordant + discordant + tie_y) as f64;
    if left == 0.0 || right == 0.0 {
        return Err(StatsError::ZeroVariance);
    }
    Ok((concordant - discordant) as f64 / (left * right).sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WilcoxonMethod {
    Exact,
    Normal,
    /// Every difference was zero.
    Degenerate,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatResult {
    /// Sum of ranks of positive differences `x - y`.
    pub statistic: f64,
    pub p_value: f64,
    /// Cohen's d of the paired differences.
    pub effect_size: f64,
    /// Pairs left after dropping zero differences.
    pub n_used: usize,
    pub method: WilcoxonMethod,
}

/// Largest sample size handled by exact enumeration.
pub const EXACT_LIMIT: usize = 25;

/// Effect sizes at or above this are "large".
pub const LARGE_EFFECT: f64 = 0.8;

pub fn is_large_effect(e: f64) -> bool {
    e.abs() >= LARGE_EFFECT
}

/// Cohen's d of paired differences: mean over sample standard deviation.
pub fn cohens_d(x: &[f64], y: &[f64]) -> Result<f64, StatsError> {
    check_pair(x, y, 2)?;
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let (m, s) = (mean(&d), std_dev(&d));
    Ok(if s == 0.0 {
        if m == 0.0 {
            0.0
        } else {
            m.signum() * f64::INFINITY
        }
    } else {
        m / s
    })
}

/// Two-sided Wilcoxon signed-rank test on paired samples.
///
/// Zero differences are dropped. Up to [`EXACT_LIMIT`] remaining pairs the null
/// distribution is enumerated with the observed (possibly tied) ranks; beyond
/// that a tie-corrected normal approximation is used.
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<StatResult, StatsError> {
    check_pair(x, y, 1)?;
    let effect_size = if x.len() >= 2 { cohens_d(x, y)? } else { 0.0 };
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).filter(|d| *d != 0.0).collect();
    let n = diffs.len();
    if n == 0 {
        return Ok(StatResult {
            statistic: 0.0,
            p_value: 1.0,
            effect_size,
            n_used: 0,
            method: WilcoxonMethod::Degenerate,
        });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let r = ranks(&abs);
    let w_plus: f64 = diffs.iter().zip(&r).filter(|(d, _)| **d > 0.0).map(|(_, r)| r).sum();

    if n <= EXACT_LIMIT {
        // Ranks are multiples of 1/2; work with doubled integer ranks.
        let doubled: Vec<usize> = r.iter().map(|x| (x * 2.0).round() as usize).collect();
        let total: usize = doubled.iter().sum();
        let mut counts = vec![0f64; total + 1];
        counts[0] = 1.0;
        for &w in &doubled {
            for s in (w..=total).rev() {
                counts[s] += counts[s - w];
            }
        }
        let all = 2f64.powi(n as i32);
        let obs = (w_plus * 2.0).round() as usize;
        let lower: f64 = counts[..=obs].iter().sum::<f64>() / all;
        let upper: f64 = counts[obs..].iter().sum::<f64>() / all;
        let p_value = (2.0 * lower.min(upper)).min(1.0);
        return Ok(StatResult { statistic: w_plus, p_value, effect_size, n_used: n, method: WilcoxonMethod::Exact });
    }

    let nf = n as f64;
    let expected = nf * (nf + 1.0) / 4.0;
    let mut tie_term = 0.0;
    let mut sorted = abs.clone();
    sorted.sort_by(f64::total_cmp);
    let mut k = 0;
    while k < n {
        let mut j = k;
        while j + 1 < n && sorted[j + 1] == sorted[k] {
            j += 1;
        }
        let t = (j - k + 1) as f64;
        tie_term += t * t * t - t;
        k = j + 1;
    }
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
    let p_value = if var <= 0.0 {
        1.0
    } else {
        let z = (w_plus - expected) / var.sqrt();
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * normal.sf(z.abs())).min(1.0)
    };
    Ok(StatResult { statistic: w_plus, p_value, effect_size, n_used: n, method: WilcoxonMethod::Normal })
}

/// Reads the named numeric columns from CSV with a header row.
pub fn read_columns<R: Read>(input: R, columns: &[&str]) -> Result<Vec<Vec<f64>>, StatsError> {
    let mut rdr = csv::Reader::from_reader(input);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = columns
        .iter()
        .map(|c| headers.iter().position(|h| h == *c).ok_or_else(|| StatsError::MissingColumn(c.to_string())))
        .collect::<Result<_, _>>()?;
    let mut out = vec![Vec::new(); columns.len()];
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let raw = rec.get(i).unwrap_or("");
            let v: f64 = raw.trim().parse().map_err(|_| StatsError::BadValue {
                row: row + 1,
                msg: format!("{raw:?} in column {:?}", columns[k]),
            })?;
            out[k].push(v);
        }
    }
    Ok(out)
}

/// Writes equal-length columns as CSV with a header row.
pub fn write_columns<W: Write>(out: W, names: &[&str], columns: &[Vec<f64>]) -> Result<(), StatsError> {
    let len = columns.first().map_or(0, Vec::len);
    if let Some(bad) = columns.iter().find(|c| c.len() != len) {
        return Err(StatsError::LengthMismatch(len, bad.len()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(names)?;
    for row in 0..len {
        w.write_record(columns.iter().map(|c| c[row].to_string()))?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn average_ranks() {
        assert_eq!(ranks(&[10.0, 20.0, 20.0, 5.0]), vec![2.0, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn correlation_extremes() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y = [5.0, 4.0, 3.0, 2.0, 1.0];
        assert_eq!(spearman_rho(&x, &x).unwrap(), 1.0);
        assert_eq!(spearman_rho(&x, &y).unwrap(), -1.0);
        assert_eq!(kendall_tau(&x, &x).unwrap(), 1.0);
        assert_eq!(kendall_tau(&x, &y).unwrap(), -1.0);
        assert!(matches!(spearman_rho(&x, &y[..3]), Err(StatsError::LengthMismatch(5, 3))));
    }

    #[test]
    fn tau_b_with_ties() {
        // Hand count: pairs (C, D, Tx, Ty) = (4, 0, 1, 1) -> 4 / sqrt(5 * 5).
        let x = [1.0, 1.0, 2.0, 3.0];
        let y = [1.0, 2.0, 3.0, 3.0];
        assert!((kendall_tau(&x, &y).unwrap() - 0.8).abs() < 1e-12);
    }

    #[test]
    fn wilcoxon_identity_is_degenerate() {
        let x = [1.0, 2.0, 3.0];
        let r = wilcoxon_signed_rank(&x, &x).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.method, WilcoxonMethod::Degenerate);
    }

    #[test]
    fn wilcoxon_small_exact() {
        // Six positive differences with distinct ranks: p = 2 / 64.
        let x = [2.0, 3.0, 4.0, 5.0, 6.0, 7.0];
        let y = [1.0; 6];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.method, WilcoxonMethod::Exact);
        assert_eq!(r.statistic, 21.0);
        assert!((r.p_value - 2.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn effect_size_threshold() {
        assert!(is_large_effect(0.8));
        assert!(!is_large_effect(0.79));
    }

    #[test]
    fn csv_round_trip() {
        let mut buf = Vec::new();
        write_columns(&mut buf, &["a", "b"], &[vec![1.0, 2.5], vec![3.0, 4.0]]).unwrap();
        let cols = read_columns(buf.as_slice(), &["b", "a"]).unwrap();
        assert_eq!(cols, vec![vec![3.0, 4.0], vec![1.0, 2.5]]);
        assert!(matches!(read_columns(buf.as_slice(), &["z"]), Err(StatsError::MissingColumn(_))));
    }
}
