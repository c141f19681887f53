use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{Context, Result};
use clap::Args;
use netview::graph::closeness_all;
use netview::metrics::{p_formula, y_formula, CountTrace};
use netview::sim::{run_with, DeliveryOrder, RunConfig};
use netview::{FailureSchedule, NodeId, Protocol};
use rayon::prelude::*;

use crate::io::{
    exit, expand_inputs, load_graph, require_file, write_atomic, write_json, RunRecord, EXIT_FAILURE, EXIT_INVARIANT,
    TOOL,
};

/// How many rounds to run on a given graph.
#[derive(Clone, Debug, PartialEq)]
pub enum DPolicy {
    Fixed(u32),
    Diameter,
    Fraction(f64),
    Sweep(Vec<u32>),
}

impl DPolicy {
    pub fn rounds(&self, diameter: u32) -> Vec<u32> {
        match self {
            DPolicy::Fixed(d) => vec![*d],
            DPolicy::Diameter => vec![diameter],
            DPolicy::Fraction(f) => vec![((diameter as f64 * f).round() as u32).max(1)],
            DPolicy::Sweep(ds) => ds.clone(),
        }
    }

    fn label(&self) -> String {
        match self {
            DPolicy::Fixed(d) => format!("fixed:{d}"),
            DPolicy::Diameter => "diameter".into(),
            DPolicy::Fraction(f) => format!("fraction:{f}"),
            DPolicy::Sweep(ds) => format!("sweep:{}", ds.iter().map(u32::to_string).collect::<Vec<_>>().join(",")),
        }
    }
}

/// `8`, `diameter`, `fraction:0.5` or `sweep:2,6,10`.
impl FromStr for DPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<DPolicy, String> {
        let positive = |t: &str| match t.trim().parse::<u32>() {
            Ok(d) if d > 0 => Ok(d),
            _ => Err(format!("round bound must be a positive integer, got {t:?}")),
        };
        if s == "diameter" {
            Ok(DPolicy::Diameter)
        } else if let Some(f) = s.strip_prefix("fraction:") {
            match f.parse::<f64>() {
                Ok(x) if x > 0.0 && x.is_finite() => Ok(DPolicy::Fraction(x)),
                _ => Err(format!("fraction must be positive, got {f:?}")),
            }
        } else if let Some(list) = s.strip_prefix("sweep:") {
            Ok(DPolicy::Sweep(list.split(',').map(positive).collect::<Result<_, _>>()?))
        } else {
            positive(s).map(DPolicy::Fixed)
        }
    }
}

#[derive(Args, Debug)]
pub struct RunArgs {
    /// Edge-list files, or directories of `.edges` files.
    #[arg(long = "graph", required = true, num_args = 1..)]
    pub graphs: Vec<PathBuf>,
    /// Protocols to run.
    #[arg(long = "protocol", value_delimiter = ',', default_value = "ytq,pruning")]
    pub protocols: Vec<Protocol>,
    /// Round bound: N, `diameter`, `fraction:F` or `sweep:D1,D2,...`.
    #[arg(long = "d", default_value = "sweep:2,6,10,14,18,22,26")]
    pub d: DPolicy,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Repetitions per configuration; repetition r uses seed + r.
    #[arg(long, default_value_t = 1)]
    pub reps: u32,
    /// Shuffle deliveries within each round (seeded).
    #[arg(long)]
    pub shuffle: bool,
    /// Failure schedule (fd protocol only).
    #[arg(long)]
    pub schedule: Option<PathBuf>,
    /// Silence timeout in rounds for fd.
    #[arg(long, default_value_t = 1)]
    pub timeout: u32,
}

struct Job<'a> {
    graph: &'a crate::io::LoadedGraph,
    protocol: Protocol,
    d: u32,
    rep: u32,
}

pub fn cmd_run(args: &RunArgs, out: &Path) -> Result<()> {
    let schedule = match &args.schedule {
        Some(p) => {
            require_file(p)?;
            if args.protocols.iter().any(|&x| x != Protocol::Fd) {
                return Err(exit(EXIT_FAILURE, "failure schedules need --protocol fd"));
            }
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let parsed = FailureSchedule::parse(&text).with_context(|| format!("in {}", p.display()))?;
            Some((text, parsed))
        }
        None => None,
    };
    if args.reps == 0 {
        return Err(exit(EXIT_FAILURE, "--reps must be at least 1"));
    }
    let paths = expand_inputs(&args.graphs, "edges")?;
    if paths.is_empty() {
        return Err(exit(EXIT_FAILURE, "no graph files found"));
    }
    let graphs = paths.iter().map(|p| load_graph(p)).collect::<Result<Vec<_>>>()?;
    let mut jobs = Vec::new();
    for g in &graphs {
        for &protocol in &args.protocols {
            for d in args.d.rounds(g.info.diameter) {
                for rep in 0..args.reps {
                    jobs.push(Job { graph: g, protocol, d, rep });
                }
            }
        }
    }
    let empty = FailureSchedule::empty();
    let results: Vec<Result<(PathBuf, Vec<String>)>> = jobs
        .par_iter()
        .map(|job| {
            let config = RunConfig {
                protocol: job.protocol,
                max_rounds: job.d,
                timeout: args.timeout,
                seed: args.seed + job.rep as u64,
                delivery: if args.shuffle { DeliveryOrder::Shuffled } else { DeliveryOrder::Ascending },
            };
            let sched = schedule.as_ref().map_or(&empty, |s| &s.1);
            let report = run_with(&job.graph.graph, &config, sched)
                .with_context(|| format!("{} {} D={}", job.graph.info.source, job.protocol, job.d))?;
            let (checks, failures) = check_invariants(job, &report, sched.is_empty())?;
            let record = RunRecord {
                tool: TOOL.into(),
                graph: job.graph.info.clone(),
                config,
                d_policy: args.d.label(),
                repetition: job.rep,
                schedule: schedule.as_ref().map(|s| s.0.clone()),
                checks,
                report,
            };
            let stem = format!("{}__{}__D{}__r{}", job.graph.info.stem(), job.protocol, job.d, job.rep);
            let json = out.join(format!("{stem}.json"));
            write_json(&json, &record)?;
            let mut csv = Vec::new();
            record.report.write_csv(&mut csv)?;
            write_atomic(&out.join(format!("{stem}.csv")), &csv)?;
            Ok((json, failures))
        })
        .collect();
    let mut broken = Vec::new();
    for r in results {
        let (path, failures) = r?;
        println!("{}", path.display());
        broken.extend(failures.into_iter().map(|f| format!("{}: {f}", path.display())));
    }
    if !broken.is_empty() {
        return Err(exit(EXIT_INVARIANT, format!("invariant checks failed:\n{}", broken.join("\n"))));
    }
    Ok(())
}

/// Returns the names of the checks that ran, and descriptions of any failures.
fn check_invariants(job: &Job, report: &netview::RunReport, failure_free: bool) -> Result<(Vec<String>, Vec<String>)> {
    let mut ran = Vec::new();
    let mut failed = Vec::new();
    if !failure_free {
        return Ok((ran, failed));
    }
    let trace = CountTrace::from_report(report);
    let (name, formula): (&str, fn(&CountTrace, NodeId) -> u64) = match job.protocol {
        Protocol::Ytq => ("received-equals-y-formula", y_formula),
        Protocol::Pruning | Protocol::Fd => ("received-equals-p-formula", p_formula),
    };
    ran.push(name.to_string());
    let bad = report.nodes.iter().filter(|n| formula(&trace, n.id) != n.received).count();
    if bad > 0 {
        failed.push(format!("{name}: {bad} nodes differ"));
    }
    if job.d >= job.graph.info.diameter {
        ran.push("exact-at-diameter".into());
        let exact = closeness_all(&job.graph.graph)?;
        let bad =
            report.nodes.iter().filter(|n| n.pruned_round.is_none() && n.closeness != exact[n.id.index()]).count();
        if bad > 0 {
            failed.push(format!("exact-at-diameter: {bad} unpruned nodes differ from exact closeness"));
        }
    }
    Ok((ran, failed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_policies() {
        assert_eq!("8".parse::<DPolicy>().unwrap(), DPolicy::Fixed(8));
        assert_eq!("diameter".parse::<DPolicy>().unwrap(), DPolicy::Diameter);
        assert_eq!("sweep:2,6".parse::<DPolicy>().unwrap(), DPolicy::Sweep(vec![2, 6]));
        assert_eq!("fraction:0.5".parse::<DPolicy>().unwrap().rounds(9), vec![5]);
        assert!("0".parse::<DPolicy>().is_err());
        assert!("sweep:2,0".parse::<DPolicy>().is_err());
        assert!("fraction:-1".parse::<DPolicy>().is_err());
        assert_eq!(DPolicy::Sweep(vec![2, 6, 10, 14, 18, 22, 26]).label(), "sweep:2,6,10,14,18,22,26");
    }
}
