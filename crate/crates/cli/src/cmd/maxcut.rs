use std::fmt::Write as _;
use std::time::Instant;

use clap::Args;
use qbmvae::energy::{brute_force_maxcut, cut_from_energy, maxcut_to_ising, mobius_ladder};
use qbmvae::rng::derive_seed;
use qbmvae::samplers::simulated_annealing;

use crate::config::write_manifest;
use crate::{CliError, CliResult, OutArgs, ScheduleArgs};

/// Published optimum of the 1000-vertex ladder.
const LARGE_N: usize = 1000;
const LARGE_OPTIMUM: usize = 1498;
/// Largest ladder solved exhaustively.
const BRUTE_FORCE_MAX: usize = 20;

#[derive(Args, Debug, Clone)]
pub struct MaxcutArgs {
    /// Ladder sizes, comma separated; each must be even.
    #[arg(long, value_delimiter = ',', default_value = "8")]
    pub n: Vec<usize>,
    /// Independent annealing runs per size.
    #[arg(long, default_value_t = 20)]
    pub runs: usize,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn known_optimum(n: usize) -> CliResult<Option<usize>> {
    if n <= BRUTE_FORCE_MAX {
        Ok(Some(brute_force_maxcut(&mobius_ladder(n)?)?))
    } else if n == LARGE_N {
        Ok(Some(LARGE_OPTIMUM))
    } else {
        Ok(None)
    }
}

pub fn run(a: &MaxcutArgs, flags: &[(String, String)]) -> CliResult<()> {
    if a.runs == 0 {
        return Err(CliError::Usage("--runs must be positive".into()));
    }
    for &n in &a.n {
        if n < 4 || n % 2 != 0 {
            return Err(CliError::Usage(format!("--n must be even and at least 4, got {n}")));
        }
    }
    let out = a.out.prepare()?;
    let mut csv = String::from("n,edges,runs,best_cut,mean_cut,optimum,success_fraction,ms_per_solve\n");
    for &n in &a.n {
        let g = mobius_ladder(n)?;
        let p = maxcut_to_ising(&g);
        let schedule = a.schedule.schedule(n)?;
        let start = Instant::now();
        let result = simulated_annealing(&p, &schedule, a.runs, derive_seed(a.seed, n as u64))?;
        let ms = start.elapsed().as_secs_f64() * 1e3 / a.runs as f64;
        let cuts: Vec<usize> = result
            .run_best_energies
            .iter()
            .map(|&e| cut_from_energy(&g, e))
            .collect();
        let best = cuts.iter().copied().max().unwrap_or(0);
        let mean = cuts.iter().sum::<usize>() as f64 / cuts.len() as f64;
        let optimum = known_optimum(n)?;
        let (opt_s, frac_s) = match optimum {
            Some(o) => {
                let hits = cuts.iter().filter(|&&c| c >= o).count();
                (o.to_string(), (hits as f64 / a.runs as f64).to_string())
            }
            None => (String::new(), String::new()),
        };
        let _ = writeln!(
            csv,
            "{n},{},{},{best},{mean},{opt_s},{frac_s},{ms:.3}",
            g.edges().len(),
            a.runs
        );
        println!("n={n} best_cut={best} optimum={opt_s} success={frac_s} ms_per_solve={ms:.3}");
    }
    std::fs::write(out.join("maxcut.csv"), csv)?;
    write_manifest(out, "maxcut", flags, &[])?;
    Ok(())
}
