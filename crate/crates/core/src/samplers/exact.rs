use super::sample_set::{SampleMeta, SampleSet, VariableKind};
use crate::energy::{state_bits, state_probabilities, BoltzmannMachine};
use crate::error::{Error, Result};
use crate::rng::Philox;

pub const EXACT_ID: &str = "exact";

/// I.i.d. draws from `p(z)` by inverse CDF over the enumerated states
/// (`n ≤ 25`).
pub fn exact_sampler(bm: &BoltzmannMachine, n_samples: usize, seed: u64) -> Result<SampleSet> {
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    let n = bm.n();
    let (_, probs) = state_probabilities(bm)?;
    let mut cdf = Vec::with_capacity(probs.len());
    let mut acc = 0.0;
    for p in &probs {
        acc += p;
        cdf.push(acc);
    }
    let total = acc;
    let mut rng = Philox::new(seed, 0);
    let mut samples = Vec::with_capacity(n_samples * n);
    let mut energies = Vec::with_capacity(n_samples);
    for _ in 0..n_samples {
        let u = rng.uniform() * total;
        let s = cdf.partition_point(|&c| c <= u).min(probs.len() - 1);
        let z = state_bits(s, n);
        energies.push(bm.energy_unchecked(&z));
        samples.extend(z.iter().map(|&v| v as i8));
    }
    SampleSet::new(
        n,
        samples,
        energies,
        VariableKind::Binary,
        SampleMeta {
            seed,
            sampler_id: EXACT_ID.into(),
            sweeps_per_sample: 0,
            burn_in: 0,
            temperature: 1.0,
        },
    )
}
