use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::Args;
use netview::metrics::{central_node_distance, is_large_effect, mean, wilcoxon_signed_rank, StatResult};
use serde::Serialize;

use crate::io::{exit, expand_inputs, write_atomic, write_json, RunRecord, EXIT_FAILURE, TOOL};

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Run records (JSON) of the reference protocol, or directories of them.
    #[arg(long, required = true, num_args = 1..)]
    pub baseline: Vec<PathBuf>,
    /// Run records of the protocol being compared against the baseline.
    #[arg(long, required = true, num_args = 1..)]
    pub candidate: Vec<PathBuf>,
    /// Histogram bin width for deltas and diameters.
    #[arg(long, default_value_t = 2)]
    pub binwidth: u32,
}

/// Graph fingerprint, round bound, repetition.
type Key = (String, u32, u32);

fn key(r: &RunRecord) -> Key {
    (r.graph.fingerprint.clone(), r.config.max_rounds, r.repetition)
}

fn load_side(paths: &[PathBuf], side: &str) -> Result<BTreeMap<Key, (PathBuf, RunRecord)>> {
    let files = expand_inputs(paths, "json")?;
    if files.is_empty() {
        return Err(exit(EXIT_FAILURE, format!("no {side} run records found")));
    }
    let mut out: BTreeMap<Key, (PathBuf, RunRecord)> = BTreeMap::new();
    for f in files {
        let rec = RunRecord::load(&f)?;
        if let Some((prev, _)) = out.get(&key(&rec)) {
            return Err(exit(
                EXIT_FAILURE,
                format!("{side}: {} and {} cover the same graph, D and repetition", prev.display(), f.display()),
            ));
        }
        out.insert(key(&rec), (f, rec));
    }
    Ok(out)
}

#[derive(Serialize)]
struct PairRow {
    graph: String,
    fingerprint: String,
    nodes: usize,
    edges: usize,
    diameter: u32,
    d: u32,
    repetition: u32,
    baseline_protocol: String,
    candidate_protocol: String,
    baseline_mean: f64,
    baseline_max: u64,
    candidate_mean: f64,
    candidate_max: u64,
    reduction_percent: f64,
    delta_min: i64,
    delta_mean: f64,
    delta_max: i64,
    baseline_leader_distance: u32,
    candidate_leader_distance: u32,
}

#[derive(Serialize)]
struct DeltaRow<'a> {
    graph: &'a str,
    d: u32,
    repetition: u32,
    node: usize,
    label: u64,
    degree: u32,
    baseline_received: u64,
    candidate_received: u64,
    delta: i64,
}

#[derive(Serialize)]
struct LeaderRow {
    d: u32,
    pairs: usize,
    baseline_mean_distance: f64,
    candidate_mean_distance: f64,
    baseline_max_distance: u32,
    candidate_max_distance: u32,
}

#[derive(Serialize)]
struct HistRow {
    quantity: &'static str,
    bin_start: i64,
    bin_end: i64,
    count: usize,
}

#[derive(Serialize)]
struct Summary {
    tool: &'static str,
    baseline_inputs: Vec<String>,
    candidate_inputs: Vec<String>,
    binwidth: u32,
    pairs: usize,
    baseline_mean_of_means: f64,
    candidate_mean_of_means: f64,
    mean_reduction_percent: f64,
    wilcoxon: Option<StatResult>,
    wilcoxon_error: Option<String>,
    large_effect: Option<bool>,
    configs: Vec<serde_json::Value>,
}

fn histogram(quantity: &'static str, values: impl IntoIterator<Item = i64>, width: i64) -> Vec<HistRow> {
    let mut bins: BTreeMap<i64, usize> = BTreeMap::new();
    for v in values {
        *bins.entry(v.div_euclid(width) * width).or_default() += 1;
    }
    bins.into_iter()
        .map(|(start, count)| HistRow { quantity, bin_start: start, bin_end: start + width, count })
        .collect()
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    write_atomic(path, &w.into_inner()?)
}

pub fn cmd_compare(args: &CompareArgs, out: &Path) -> Result<()> {
    if args.binwidth == 0 {
        return Err(exit(EXIT_FAILURE, "--binwidth must be at least 1"));
    }
    let base = load_side(&args.baseline, "baseline")?;
    let cand = load_side(&args.candidate, "candidate")?;
    let describe = |k: &Key, side: &BTreeMap<Key, (PathBuf, RunRecord)>| {
        format!("{} (D={}, rep={})", side[k].0.display(), k.1, k.2)
    };
    let mut mismatches: Vec<String> = Vec::new();
    mismatches.extend(
        base.keys().filter(|k| !cand.contains_key(*k)).map(|k| format!("baseline only: {}", describe(k, &base))),
    );
    mismatches.extend(
        cand.keys().filter(|k| !base.contains_key(*k)).map(|k| format!("candidate only: {}", describe(k, &cand))),
    );
    for (k, (bp, b)) in &base {
        if let Some((cp, c)) = cand.get(k) {
            if b.report.nodes.len() != c.report.nodes.len() {
                mismatches.push(format!("{} and {} differ in node count", bp.display(), cp.display()));
            }
        }
    }
    if !mismatches.is_empty() {
        return Err(exit(EXIT_FAILURE, format!("unpaired inputs:\n{}", mismatches.join("\n"))));
    }

    let mut pairs = Vec::new();
    let mut deltas_out = Vec::new();
    let mut all_deltas = Vec::new();
    let mut diameters: BTreeMap<String, u32> = BTreeMap::new();
    let mut configs = BTreeSet::new();
    for (k, (_, b)) in &base {
        let c = &cand[k].1;
        let g = b.graph.graph()?;
        let bc = b.report.message_counts();
        let cc = c.report.message_counts();
        let deltas: Vec<i64> =
            b.report.nodes.iter().zip(&c.report.nodes).map(|(x, y)| x.received as i64 - y.received as i64).collect();
        for (x, (y, &d)) in b.report.nodes.iter().zip(c.report.nodes.iter().zip(&deltas)) {
            deltas_out.push(DeltaRow {
                graph: &b.graph.source,
                d: k.1,
                repetition: k.2,
                node: x.id.index(),
                label: x.label,
                degree: x.degree,
                baseline_received: x.received,
                candidate_received: y.received,
                delta: d,
            });
        }
        all_deltas.extend(&deltas);
        diameters.insert(b.graph.fingerprint.clone(), b.graph.diameter);
        configs.insert(serde_json::to_string(&b.config)?);
        configs.insert(serde_json::to_string(&c.config)?);
        pairs.push(PairRow {
            graph: b.graph.source.clone(),
            fingerprint: b.graph.fingerprint.clone(),
            nodes: b.graph.nodes,
            edges: b.graph.edges,
            diameter: b.graph.diameter,
            d: k.1,
            repetition: k.2,
            baseline_protocol: b.report.protocol.to_string(),
            candidate_protocol: c.report.protocol.to_string(),
            baseline_mean: bc.mean,
            baseline_max: bc.max,
            candidate_mean: cc.mean,
            candidate_max: cc.max,
            reduction_percent: if bc.mean > 0.0 { 100.0 * (bc.mean - cc.mean) / bc.mean } else { 0.0 },
            delta_min: deltas.iter().copied().min().unwrap_or(0),
            delta_mean: deltas.iter().sum::<i64>() as f64 / deltas.len().max(1) as f64,
            delta_max: deltas.iter().copied().max().unwrap_or(0),
            baseline_leader_distance: central_node_distance(&g, &b.report.estimates())?,
            candidate_leader_distance: central_node_distance(&g, &c.report.estimates())?,
        });
    }

    let mut by_d: BTreeMap<u32, Vec<&PairRow>> = BTreeMap::new();
    for p in &pairs {
        by_d.entry(p.d).or_default().push(p);
    }
    let leader: Vec<LeaderRow> = by_d
        .into_iter()
        .map(|(d, rows)| {
            let bd: Vec<f64> = rows.iter().map(|r| r.baseline_leader_distance as f64).collect();
            let cd: Vec<f64> = rows.iter().map(|r| r.candidate_leader_distance as f64).collect();
            LeaderRow {
                d,
                pairs: rows.len(),
                baseline_mean_distance: mean(&bd),
                candidate_mean_distance: mean(&cd),
                baseline_max_distance: rows.iter().map(|r| r.baseline_leader_distance).max().unwrap_or(0),
                candidate_max_distance: rows.iter().map(|r| r.candidate_leader_distance).max().unwrap_or(0),
            }
        })
        .collect();

    let width = args.binwidth as i64;
    let mut hist = histogram("delta", all_deltas, width);
    hist.extend(histogram("diameter", diameters.values().map(|&d| d as i64), width));

    let bm: Vec<f64> = pairs.iter().map(|p| p.baseline_mean).collect();
    let cm: Vec<f64> = pairs.iter().map(|p| p.candidate_mean).collect();
    let red: Vec<f64> = pairs.iter().map(|p| p.reduction_percent).collect();
    let (wilcoxon, wilcoxon_error) = match wilcoxon_signed_rank(&bm, &cm) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = Summary {
        tool: TOOL,
        baseline_inputs: args.baseline.iter().map(|p| p.display().to_string()).collect(),
        candidate_inputs: args.candidate.iter().map(|p| p.display().to_string()).collect(),
        binwidth: args.binwidth,
        pairs: pairs.len(),
        baseline_mean_of_means: mean(&bm),
        candidate_mean_of_means: mean(&cm),
        mean_reduction_percent: mean(&red),
        large_effect: wilcoxon.map(|w| is_large_effect(w.effect_size)),
        wilcoxon,
        wilcoxon_error,
        configs: configs.iter().map(|s| serde_json::from_str(s)).collect::<Result<_, _>>()?,
    };

    let written = [
        ("compare_pairs.csv", write_csv(&out.join("compare_pairs.csv"), &pairs)),
        ("compare_deltas.csv", write_csv(&out.join("compare_deltas.csv"), &deltas_out)),
        ("compare_leader.csv", write_csv(&out.join("compare_leader.csv"), &leader)),
        ("compare_hist.csv", write_csv(&out.join("compare_hist.csv"), &hist)),
        ("compare_summary.json", write_json(&out.join("compare_summary.json"), &summary)),
    ];
    for (name, r) in written {
        r?;
        println!("{}", out.join(name).display());
    }
    Ok(())
}
