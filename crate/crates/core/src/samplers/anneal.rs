use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::sample_set::{SampleMeta, SampleSet, VariableKind};
use crate::energy::IsingProblem;
use crate::error::{Error, Result};
use crate::rng::Philox;

pub const SA_ID: &str = "sa";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleShape {
    Geometric,
    Linear,
}

impl fmt::Display for ScheduleShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScheduleShape::Geometric => "geometric",
            ScheduleShape::Linear => "linear",
        })
    }
}

impl FromStr for ScheduleShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "geometric" => Ok(ScheduleShape::Geometric),
            "linear" => Ok(ScheduleShape::Linear),
            other => Err(Error::InvalidArgument(format!("unknown schedule shape `{other}`"))),
        }
    }
}

/// Temperature ladder for annealing. One step is one full sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct AnnealSchedule {
    pub t_start: f64,
    pub t_end: f64,
    pub n_steps: usize,
    pub shape: ScheduleShape,
}

impl AnnealSchedule {
    /// Geometric 10 → 0.05 over `50·n` sweeps.
    pub fn default_for(n_spins: usize) -> Self {
        Self {
            t_start: 10.0,
            t_end: 0.05,
            n_steps: 50 * n_spins.max(1),
            shape: ScheduleShape::Geometric,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > 0.0) || !(self.t_start > self.t_end) || !self.t_start.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "schedule needs t_start > t_end > 0, got {} -> {}",
                self.t_start, self.t_end
            )));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidArgument("schedule needs at least 2 steps".into()));
        }
        Ok(())
    }

    pub fn temperatures(&self) -> Vec<f64> {
        let last = (self.n_steps - 1) as f64;
        (0..self.n_steps)
            .map(|k| {
                let f = k as f64 / last;
                match self.shape {
                    ScheduleShape::Geometric => self.t_start * (self.t_end / self.t_start).powf(f),
                    ScheduleShape::Linear => self.t_start + (self.t_end - self.t_start) * f,
                }
            })
            .collect()
    }
}

/// Output of [`simulated_annealing`].
#[derive(Clone, Debug)]
pub struct AnnealResult {
    pub best_sigma: Vec<i8>,
    pub best_energy: f64,
    /// Incumbent energy of every run, in run order.
    pub run_best_energies: Vec<f64>,
    /// Final state of every run.
    pub finals: SampleSet,
}

struct RunOutcome {
    best_sigma: Vec<i8>,
    best_energy: f64,
    final_sigma: Vec<i8>,
}

fn neighbours(p: &IsingProblem) -> Vec<Vec<(usize, f64)>> {
    let j = p.couplings();
    (0..p.n_spins())
        .map(|a| {
            j.column(a)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(b, &v)| (b, v))
                .collect()
        })
        .collect()
}

fn anneal_run(p: &IsingProblem, adj: &[Vec<(usize, f64)>], temps: &[f64], seed: u64, run: usize) -> RunOutcome {
    let n = p.n_spins();
    let mut rng = Philox::new(seed, run as u64);
    let mut sigma: Vec<i8> = (0..n).map(|_| if rng.below(2) == 1 { 1 } else { -1 }).collect();
    let mut field: Vec<f64> = (0..n).map(|a| p.local_field(a, &sigma)).collect();
    let mut energy = p.energy_unchecked(&sigma);
    let mut best_energy = energy;
    let mut best_sigma = sigma.clone();
    for &t in temps {
        let inv_t = 1.0 / t;
        for a in 0..n {
            let delta = 2.0 * f64::from(sigma[a]) * field[a];
            let accept = delta <= 0.0 || rng.uniform() < (-delta * inv_t).exp();
            if accept {
                sigma[a] = -sigma[a];
                let s = 2.0 * f64::from(sigma[a]);
                for &(b, jab) in &adj[a] {
                    field[b] += jab * s;
                }
                energy += delta;
                if energy < best_energy - 1e-9 {
                    best_energy = energy;
                    best_sigma.copy_from_slice(&sigma);
                }
            }
        }
    }
    // Incremental energies drift; rescore from scratch.
    let best_energy = p.energy_unchecked(&best_sigma);
    RunOutcome {
        best_sigma,
        best_energy,
        final_sigma: sigma,
    }
}

/// Single-spin-flip Metropolis annealing with `n_runs` independent restarts.
///
/// Run `r` uses Philox stream `r` under key `seed`. Each step of the
/// schedule visits spins `0..n` in order. The best state visited by any run
/// is returned; ties go to the lowest run index.
pub fn simulated_annealing(
    p: &IsingProblem,
    schedule: &AnnealSchedule,
    n_runs: usize,
    seed: u64,
) -> Result<AnnealResult> {
    schedule.validate()?;
    if n_runs == 0 {
        return Err(Error::InvalidArgument("n_runs must be positive".into()));
    }
    if p.n_spins() == 0 {
        return Err(Error::InvalidArgument("empty ising problem".into()));
    }
    let temps = schedule.temperatures();
    let adj = neighbours(p);
    let runs: Vec<RunOutcome> = (0..n_runs)
        .into_par_iter()
        .map(|r| anneal_run(p, &adj, &temps, seed, r))
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.best_energy < runs[best].best_energy {
            best = i;
        }
    }
    let n = p.n_spins();
    let mut samples = Vec::with_capacity(n_runs * n);
    let mut energies = Vec::with_capacity(n_runs);
    for r in &runs {
        samples.extend_from_slice(&r.final_sigma);
        energies.push(p.energy_unchecked(&r.final_sigma));
    }
    let finals = SampleSet::new(
        n,
        samples,
        energies,
        VariableKind::Spin,
        SampleMeta {
            seed,
            sampler_id: SA_ID.into(),
            sweeps_per_sample: schedule.n_steps,
            burn_in: 0,
            temperature: schedule.t_end,
        },
    )?;
    Ok(AnnealResult {
        best_sigma: runs[best].best_sigma.clone(),
        best_energy: runs[best].best_energy,
        run_best_energies: runs.iter().map(|r| r.best_energy).collect(),
        finals,
    })
}
