use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};
use netview::graph::{closeness_all, eccentricities};
use netview::metrics::{
    cohens_d, is_large_effect, kendall_tau, mean, read_columns, spearman_rho, wilcoxon_signed_rank,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::io::{expand_inputs, load_graph, require_file, write_atomic, write_json, TOOL};

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[command(subcommand)]
    pub cmd: StatsCmd,
}

#[derive(Subcommand, Debug)]
pub enum StatsCmd {
    /// Paired tests on two numeric columns of a CSV file.
    Paired {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        x: String,
        #[arg(long)]
        y: String,
    },
    /// Rank correlation of eccentricity and closeness centrality per graph.
    Centrality {
        /// Edge-list files, or directories of `.edges` files.
        #[arg(long = "graph", required = true, num_args = 1..)]
        graphs: Vec<PathBuf>,
    },
}

fn err_text<T, E: ToString>(r: std::result::Result<T, E>) -> (Option<T>, Option<String>) {
    match r {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e.to_string())),
    }
}

#[derive(Serialize)]
struct Paired {
    tool: &'static str,
    input: String,
    x: String,
    y: String,
    n: usize,
    mean_x: f64,
    mean_y: f64,
    wilcoxon: Option<netview::metrics::StatResult>,
    large_effect: Option<bool>,
    spearman_rho: Option<f64>,
    kendall_tau: Option<f64>,
    cohens_d: Option<f64>,
    errors: Vec<String>,
}

#[derive(Serialize)]
struct CentralityRow {
    graph: String,
    nodes: usize,
    edges: usize,
    diameter: u32,
    spearman_rho: f64,
    kendall_tau: f64,
}

#[derive(Serialize)]
struct CentralitySummary {
    tool: &'static str,
    graphs: usize,
    mean_spearman_rho: f64,
    mean_kendall_tau: f64,
    min_spearman_rho: f64,
    min_kendall_tau: f64,
}

pub fn cmd_stats(args: &StatsArgs, out: &Path) -> Result<()> {
    match &args.cmd {
        StatsCmd::Paired { input, x, y } => paired(input, x, y, out),
        StatsCmd::Centrality { graphs } => centrality(graphs, out),
    }
}

fn paired(input: &Path, x: &str, y: &str, out: &Path) -> Result<()> {
    require_file(input)?;
    let file = std::fs::File::open(input).with_context(|| format!("opening {}", input.display()))?;
    let cols = read_columns(file, &[x, y]).with_context(|| format!("reading {}", input.display()))?;
    let (xs, ys) = (&cols[0], &cols[1]);
    let mut errors = Vec::new();
    let mut keep = |(v, e): (Option<f64>, Option<String>), name: &str| {
        errors.extend(e.map(|e| format!("{name}: {e}")));
        v
    };
    let spearman = keep(err_text(spearman_rho(xs, ys)), "spearman");
    let kendall = keep(err_text(kendall_tau(xs, ys)), "kendall");
    let d = keep(err_text(cohens_d(xs, ys)), "cohens_d");
    let (wilcoxon, we) = err_text(wilcoxon_signed_rank(xs, ys));
    errors.extend(we.map(|e| format!("wilcoxon: {e}")));
    let result = Paired {
        tool: TOOL,
        input: input.display().to_string(),
        x: x.into(),
        y: y.into(),
        n: xs.len(),
        mean_x: mean(xs),
        mean_y: mean(ys),
        large_effect: wilcoxon.map(|w| is_large_effect(w.effect_size)),
        wilcoxon,
        spearman_rho: spearman,
        kendall_tau: kendall,
        cohens_d: d,
        errors,
    };
    let path = out.join("stats_paired.json");
    write_json(&path, &result)?;
    println!("{}", serde_json::to_string_pretty(&result)?);
    Ok(())
}

fn centrality(graphs: &[PathBuf], out: &Path) -> Result<()> {
    let paths = expand_inputs(graphs, "edges")?;
    let rows: Vec<CentralityRow> = paths
        .par_iter()
        .map(|p| -> Result<CentralityRow> {
            let lg = load_graph(p)?;
            let ecc: Vec<f64> = eccentricities(&lg.graph)?.iter().map(|&e| 1.0 / e as f64).collect();
            let clo: Vec<f64> =
                closeness_all(&lg.graph)?.iter().map(|c| *c.numer() as f64 / *c.denom() as f64).collect();
            Ok(CentralityRow {
                graph: lg.info.source.clone(),
                nodes: lg.info.nodes,
                edges: lg.info.edges,
                diameter: lg.info.diameter,
                spearman_rho: spearman_rho(&ecc, &clo).with_context(|| p.display().to_string())?,
                kendall_tau: kendall_tau(&ecc, &clo).with_context(|| p.display().to_string())?,
            })
        })
        .collect::<Result<_>>()?;
    let rho: Vec<f64> = rows.iter().map(|r| r.spearman_rho).collect();
    let tau: Vec<f64> = rows.iter().map(|r| r.kendall_tau).collect();
    let summary = CentralitySummary {
        tool: TOOL,
        graphs: rows.len(),
        mean_spearman_rho: mean(&rho),
        mean_kendall_tau: mean(&tau),
        min_spearman_rho: rho.iter().copied().fold(f64::INFINITY, f64::min),
        min_kendall_tau: tau.iter().copied().fold(f64::INFINITY, f64::min),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    let csv_path = out.join("stats_centrality.csv");
    write_atomic(&csv_path, &w.into_inner()?)?;
    let json_path = out.join("stats_centrality.json");
    write_json(&json_path, &summary)?;
    println!("{}", csv_path.display());
    println!("{}", json_path.display());
    Ok(())
}
