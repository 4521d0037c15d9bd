use clap::Args;
use qbmvae::energy::{state_probabilities, BoltzmannMachine};
use qbmvae::model::{LocalSampler, NegativeSampler, SamplerChoice};
use qbmvae::rng::{derive_seed, Philox};
use qbmvae::samplers::{boltzmann_fidelity, total_variation};

use crate::config::write_manifest;
use crate::{CliError, CliResult, GibbsArgs, OutArgs, ScheduleArgs};

/// Largest machine compared against full enumeration.
const MAX_N: usize = 20;
const TAG_MACHINE: u64 = 0x5001;
const TAG_SAMPLES: u64 = 0x5002;

#[derive(Args, Debug, Clone)]
pub struct ValidateArgs {
    /// Variables in the random machine, at most 20.
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    /// gibbs, sa or exact.
    #[arg(long, default_value = "gibbs")]
    pub sampler: String,
    #[arg(long, default_value_t = 500_000)]
    pub samples: usize,
    /// Temperature of the energy axis in the fit.
    #[arg(long, default_value_t = 1.0)]
    pub kt: f64,
    /// Coupling and bias scale of the random machine.
    #[arg(long, default_value_t = 0.5)]
    pub scale: f64,
    #[command(flatten)]
    pub gibbs: GibbsArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(a: &ValidateArgs, flags: &[(String, String)]) -> CliResult<()> {
    if a.n == 0 || a.n > MAX_N {
        return Err(CliError::Usage(format!("--n must lie in 1..={MAX_N}, got {}", a.n)));
    }
    let choice: SamplerChoice = a
        .sampler
        .parse()
        .map_err(|e: qbmvae::Error| CliError::Usage(e.to_string()))?;
    if choice == SamplerChoice::Service {
        return Err(CliError::Usage("validate-sampler runs gibbs, sa or exact".into()));
    }
    if !(a.kt > 0.0) || !(a.scale >= 0.0) || a.samples == 0 {
        return Err(CliError::Usage(
            "--kt and --samples must be positive and --scale non-negative".into(),
        ));
    }
    let mut sampler = LocalSampler::new(choice)?;
    sampler.gibbs = a.gibbs.config(a.samples)?;
    sampler.schedule = Some(a.schedule.schedule(a.n)?);
    let out = a.out.prepare()?;

    let mut rng = Philox::new(derive_seed(a.seed, TAG_MACHINE), 0);
    let bm = BoltzmannMachine::random_init(a.n, 0, a.scale, &mut rng)?;
    let samples = sampler.sample(&bm, a.samples, derive_seed(a.seed, TAG_SAMPLES))?;
    let (log_z, probs) = state_probabilities(&bm)?;
    let tv = total_variation(&samples, &probs)?;
    let fit = boltzmann_fidelity(&samples, &bm, a.kt)?;

    let csv = format!(
        "sampler,n,n_samples,kt,slope,intercept,pearson_r,n_states,tv,log_z\n{},{},{},{},{},{},{},{},{},{}\n",
        sampler.id(),
        a.n,
        a.samples,
        a.kt,
        fit.slope,
        fit.intercept,
        fit.pearson_r,
        fit.n_distinct_states,
        tv,
        log_z
    );
    std::fs::write(out.join("fidelity.csv"), csv)?;
    std::fs::write(out.join("machine.txt"), bm.to_text())?;
    write_manifest(out, "validate-sampler", flags, &[])?;
    println!(
        "slope={:.4} r={:.4} states={} tv={:.4} log_z={:.4}",
        fit.slope, fit.pearson_r, fit.n_distinct_states, tv, log_z
    );
    Ok(())
}
