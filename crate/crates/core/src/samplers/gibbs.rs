use rayon::prelude::*;

use super::sample_set::{SampleMeta, SampleSet, VariableKind};
use crate::energy::BoltzmannMachine;
use crate::error::{Error, Result};
use crate::rng::Philox;

pub const GIBBS_ID: &str = "gibbs";

/// Parameters of the systematic-scan Gibbs sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct GibbsConfig {
    pub n_samples: usize,
    /// Sweeps between kept samples.
    pub n_sweeps: usize,
    pub burn_in: usize,
    pub temperature: f64,
    /// Independent chains; samples are split across them and merged in
    /// chain order.
    pub n_chains: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            n_sweeps: 1,
            burn_in: 100,
            temperature: 1.0,
            n_chains: 1,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        if self.n_samples == 0 || self.n_sweeps == 0 || self.n_chains == 0 {
            return Err(Error::InvalidArgument(
                "n_samples, n_sweeps and n_chains must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn run_chain(bm: &BoltzmannMachine, cfg: &GibbsConfig, seed: u64, chain: usize, keep: usize) -> (Vec<i8>, Vec<f64>) {
    let n = bm.n();
    let w = bm.couplings();
    let mut rng = Philox::new(seed, chain as u64);
    let mut z: Vec<f64> = (0..n).map(|_| rng.below(2) as f64).collect();
    let mut field: Vec<f64> = (0..n).map(|l| bm.local_field(l, &z)).collect();
    let beta = 1.0 / cfg.temperature;

    let sweep = |z: &mut Vec<f64>, field: &mut Vec<f64>, rng: &mut Philox| {
        for l in 0..n {
            let p_on = logistic(-field[l] * beta);
            let next = if rng.uniform() < p_on { 1.0 } else { 0.0 };
            if next != z[l] {
                let delta = next - z[l];
                z[l] = next;
                let col = w.column(l);
                for m in 0..n {
                    field[m] += delta * col[m];
                }
            }
        }
    };

    for _ in 0..cfg.burn_in {
        sweep(&mut z, &mut field, &mut rng);
    }
    let mut samples = Vec::with_capacity(keep * n);
    let mut energies = Vec::with_capacity(keep);
    for _ in 0..keep {
        for _ in 0..cfg.n_sweeps {
            sweep(&mut z, &mut field, &mut rng);
        }
        samples.extend(z.iter().map(|&v| v as i8));
        energies.push(bm.energy_unchecked(&z));
    }
    (samples, energies)
}

/// Systematic-scan Gibbs sampling of `p(z) ∝ exp(-E(z)/T)`.
///
/// Site `l` is set to 1 with probability `logistic(-(h_l + Σ_m W_lm z_m)/T)`.
/// Chain `c` draws from Philox stream `c` under key `seed` and starts from a
/// uniformly random state.
pub fn gibbs_sample(bm: &BoltzmannMachine, cfg: &GibbsConfig, seed: u64) -> Result<SampleSet> {
    cfg.validate()?;
    let per = cfg.n_samples / cfg.n_chains;
    let extra = cfg.n_samples % cfg.n_chains;
    let chains: Vec<(Vec<i8>, Vec<f64>)> = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(bm, cfg, seed, c, per + usize::from(c < extra)))
        .collect();
    let mut samples = Vec::with_capacity(cfg.n_samples * bm.n());
    let mut energies = Vec::with_capacity(cfg.n_samples);
    for (s, e) in chains {
        samples.extend(s);
        energies.extend(e);
    }
    SampleSet::new(
        bm.n(),
        samples,
        energies,
        VariableKind::Binary,
        SampleMeta {
            seed,
            sampler_id: GIBBS_ID.into(),
            sweeps_per_sample: cfg.n_sweeps,
            burn_in: cfg.burn_in,
            temperature: cfg.temperature,
        },
    )
}
