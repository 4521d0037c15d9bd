use std::io::Write;
use std::time::{Duration, Instant};

use super::anneal::{simulated_annealing, AnnealSchedule};
use crate::energy::IsingProblem;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Clone, Debug)]
pub struct StabilityConfig {
    /// Solves per tick.
    pub batch: usize,
    pub interval_seconds: f64,
    pub duration_seconds: f64,
    pub schedule: AnnealSchedule,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityTick {
    pub tick: usize,
    /// Seconds since the harness started; the only non-deterministic column.
    pub elapsed_seconds: f64,
    pub successes: usize,
    pub batch: usize,
    pub success_probability: f64,
}

/// Repeats a batch of annealing solves every `interval_seconds` for
/// `duration_seconds`, recording the fraction of solves whose best energy
/// reaches `known_optimum` (an energy of `p`). Tick `t` is seeded with
/// `derive_seed(seed, t)`, so the success column is reproducible.
pub fn stability_harness(p: &IsingProblem, known_optimum: f64, cfg: &StabilityConfig) -> Result<Vec<StabilityTick>> {
    if !(cfg.interval_seconds > 0.0) || !(cfg.duration_seconds > 0.0) {
        return Err(Error::InvalidArgument("interval and duration must be positive".into()));
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidArgument("batch must be positive".into()));
    }
    let n_ticks = ((cfg.duration_seconds / cfg.interval_seconds) + 1e-9).floor().max(1.0) as usize;
    let start = Instant::now();
    let mut series = Vec::with_capacity(n_ticks);
    for tick in 0..n_ticks {
        let result = simulated_annealing(p, &cfg.schedule, cfg.batch, derive_seed(cfg.seed, tick as u64))?;
        let successes = result
            .run_best_energies
            .iter()
            .filter(|&&e| e <= known_optimum + 1e-9)
            .count();
        series.push(StabilityTick {
            tick,
            elapsed_seconds: start.elapsed().as_secs_f64(),
            successes,
            batch: cfg.batch,
            success_probability: successes as f64 / cfg.batch as f64,
        });
        let next = Duration::from_secs_f64(cfg.interval_seconds * (tick + 1) as f64);
        let now = start.elapsed();
        if tick + 1 < n_ticks && now < next {
            std::thread::sleep(next - now);
        }
    }
    Ok(series)
}

/// CSV `tick,elapsed_s,successes,batch,success_probability`.
pub fn write_stability_csv<W: Write>(series: &[StabilityTick], mut out: W) -> Result<()> {
    writeln!(out, "tick,elapsed_s,successes,batch,success_probability")?;
    for t in series {
        writeln!(
            out,
            "{},{:.3},{},{},{:?}",
            t.tick, t.elapsed_seconds, t.successes, t.batch, t.success_probability
        )?;
    }
    Ok(())
}
