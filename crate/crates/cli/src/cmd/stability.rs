use std::path::PathBuf;

use clap::Args;
use qbmvae::energy::{brute_force_maxcut, maxcut_to_ising, mobius_ladder, Graph};
use qbmvae::samplers::{stability_harness, write_stability_csv, StabilityConfig};

use super::maxcut::known_optimum;
use crate::config::write_manifest;
use crate::{CliError, CliResult, OutArgs, ScheduleArgs};

#[derive(Args, Debug, Clone)]
pub struct StabilityArgs {
    /// Möbius ladder size; ignored when --graph-file is given.
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    /// Edge list: `N M` header, then one `i j` line per edge.
    #[arg(long, value_name = "FILE")]
    pub graph_file: Option<PathBuf>,
    /// Maximum cut of the instance; computed when the graph is small.
    #[arg(long)]
    pub known_optimum: Option<usize>,
    /// Annealing solves per tick.
    #[arg(long, default_value_t = 512)]
    pub batch: usize,
    /// Seconds between ticks.
    #[arg(long, default_value_t = 1.0)]
    pub interval: f64,
    /// Total seconds.
    #[arg(long, default_value_t = 60.0)]
    pub duration: f64,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(a: &StabilityArgs, flags: &[(String, String)]) -> CliResult<()> {
    if a.batch == 0 || !(a.interval > 0.0) || !(a.duration > 0.0) {
        return Err(CliError::Usage(
            "--batch, --interval and --duration must be positive".into(),
        ));
    }
    let (graph, optimum) = match &a.graph_file {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read graph {}: {e}", path.display())))?;
            let g = Graph::from_text(&text)?;
            let opt = match a.known_optimum {
                Some(o) => o,
                None if g.n_vertices() <= 20 => brute_force_maxcut(&g)?,
                None => {
                    return Err(CliError::Usage(
                        "--known-optimum is required for graphs above 20 vertices".into(),
                    ))
                }
            };
            (g, opt)
        }
        None => {
            if a.n < 4 || a.n % 2 != 0 {
                return Err(CliError::Usage(format!("--n must be even and at least 4, got {}", a.n)));
            }
            let opt = match a.known_optimum {
                Some(o) => o,
                None => known_optimum(a.n)?.ok_or_else(|| {
                    CliError::Usage(format!("no known optimum for n = {}; pass --known-optimum", a.n))
                })?,
            };
            (mobius_ladder(a.n)?, opt)
        }
    };
    let edges = graph.edges().len();
    if optimum > edges {
        return Err(CliError::Usage(format!(
            "--known-optimum {optimum} exceeds the edge count {edges}"
        )));
    }
    let problem = maxcut_to_ising(&graph);
    let cfg = StabilityConfig {
        batch: a.batch,
        interval_seconds: a.interval,
        duration_seconds: a.duration,
        schedule: a.schedule.schedule(graph.n_vertices())?,
        seed: a.seed,
    };
    let out = a.out.prepare()?;
    // Optimal cut c corresponds to the energy |E| - 2c.
    let target = edges as f64 - 2.0 * optimum as f64;
    let series = stability_harness(&problem, target, &cfg)?;
    let mut csv = Vec::new();
    write_stability_csv(&series, &mut csv)?;
    std::fs::write(out.join("stability.csv"), csv)?;
    write_manifest(
        out,
        "stability",
        flags,
        &[("optimum_cut".to_string(), optimum.to_string())],
    )?;
    let mean = series.iter().map(|t| t.success_probability).sum::<f64>() / series.len() as f64;
    println!("{} ticks, mean success probability {mean:.4}", series.len());
    Ok(())
}
