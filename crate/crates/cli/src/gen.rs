use std::path::{Path, PathBuf};

use anyhow::Result;
use clap::{Args, ValueEnum};
use netview::graph::{
    corpus_plan, diameter, golden_graph, random_geometric, save_edge_list, save_edge_list_labelled, GeometricParams,
    Sampling,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::io::{write_atomic, write_json, TOOL};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SamplingArg {
    FirstCluster,
    Rejection,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Number of graphs in the family.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    /// Smallest graph size in the family.
    #[arg(long, default_value_t = 50)]
    pub min_n: usize,
    /// Largest graph size in the family.
    #[arg(long, default_value_t = 500)]
    pub max_n: usize,
    /// Generate a single graph with this many nodes instead of a family.
    #[arg(long)]
    pub n: Option<usize>,
    /// Seed of the first graph; graph k uses seed + k.
    #[arg(long, default_value_t = 2020)]
    pub seed: u64,
    /// Communication range; points strictly closer are joined.
    #[arg(long, default_value_t = 8)]
    pub range: u32,
    /// Side of the square integer grid.
    #[arg(long, default_value_t = 200)]
    pub grid: u32,
    #[arg(long, value_enum, default_value_t = SamplingArg::FirstCluster)]
    pub sampling: SamplingArg,
    #[arg(long, default_value_t = 1000)]
    pub max_attempts: u32,
    /// Write the ten-node reference graph instead.
    #[arg(long)]
    pub golden: bool,
}

#[derive(Serialize)]
struct GraphMeta<'a> {
    tool: &'a str,
    file: String,
    nodes: usize,
    edges: usize,
    diameter: u32,
    seed: Option<u64>,
    attempts: Option<u32>,
    params: Option<&'a GeometricParams>,
    positions: Option<Vec<(u32, u32)>>,
}

pub fn cmd_gen(args: &GenArgs, out: &Path) -> Result<()> {
    if args.golden {
        let g = golden_graph();
        let file = out.join("golden.edges");
        write_atomic(&file, save_edge_list_labelled(&g).as_bytes())?;
        let meta = GraphMeta {
            tool: TOOL,
            file: file.display().to_string(),
            nodes: g.node_count(),
            edges: g.edge_count(),
            diameter: diameter(&g)?,
            seed: None,
            attempts: None,
            params: None,
            positions: None,
        };
        write_json(&out.join("golden.json"), &meta)?;
        println!("{}", file.display());
        return Ok(());
    }
    let base = GeometricParams {
        nodes: 0,
        comm_range: args.range,
        grid_size: args.grid,
        sampling: match args.sampling {
            SamplingArg::FirstCluster => Sampling::FirstCluster,
            SamplingArg::Rejection => Sampling::Rejection,
        },
        max_attempts: args.max_attempts,
    };
    let plan = match args.n {
        Some(n) => vec![(n, args.seed)],
        None => corpus_plan(args.count, args.min_n, args.max_n, args.seed),
    };
    let files: Vec<PathBuf> = plan
        .par_iter()
        .map(|&(nodes, seed)| -> Result<PathBuf> {
            let params = GeometricParams { nodes, ..base.clone() };
            let made = random_geometric(&params, seed)?;
            let file = out.join(format!("geo_n{nodes}_s{seed}.edges"));
            write_atomic(&file, save_edge_list(&made.graph).as_bytes())?;
            let meta = GraphMeta {
                tool: TOOL,
                file: file.display().to_string(),
                nodes,
                edges: made.graph.edge_count(),
                diameter: diameter(&made.graph)?,
                seed: Some(seed),
                attempts: Some(made.attempts),
                params: Some(&params),
                positions: Some(made.positions),
            };
            write_json(&file.with_extension("json"), &meta)?;
            Ok(file)
        })
        .collect::<Result<_>>()?;
    for f in &files {
        println!("{}", f.display());
    }
    Ok(())
}
