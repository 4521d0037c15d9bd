use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::bm_grad::{bm_gradient, Moments};
use super::elbo::{backward, elbo_forward, finite_difference_check};
use super::{batch_onehot, ElboReport, Prior, QbmVaeModel};
use crate::energy::{bm_to_spin_model, log_partition, spins_to_binary, BoltzmannMachine, ENUMERATION_CAP};
use crate::error::{check_dim, Error, Result};
use crate::rng::{derive_seed, Philox};
use crate::samplers::{
    exact_sampler, gibbs_sample, log_z_mean_energy_estimate, negative_phase_moments, simulated_annealing,
    AnnealSchedule, GibbsConfig, SampleMeta, SampleSet, VariableKind,
};

/// Source of negative-phase samples from the current prior.
pub trait NegativeSampler: Sync {
    fn id(&self) -> &str;

    /// Draws `n_samples` binary states from (an approximation of) the
    /// Boltzmann law of `bm`. Must be deterministic in `seed`.
    fn sample(&self, bm: &BoltzmannMachine, n_samples: usize, seed: u64) -> Result<SampleSet>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SamplerChoice {
    Gibbs,
    Sa,
    Exact,
    /// Gibbs sampling performed by a remote sampler service.
    Service,
}

impl fmt::Display for SamplerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SamplerChoice::Gibbs => "gibbs",
            SamplerChoice::Sa => "sa",
            SamplerChoice::Exact => "exact",
            SamplerChoice::Service => "service",
        })
    }
}

impl FromStr for SamplerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gibbs" => Ok(SamplerChoice::Gibbs),
            "sa" => Ok(SamplerChoice::Sa),
            "exact" => Ok(SamplerChoice::Exact),
            "service" => Ok(SamplerChoice::Service),
            other => Err(Error::InvalidArgument(format!("unknown sampler `{other}`"))),
        }
    }
}

/// In-process negative sampler.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalSampler {
    choice: SamplerChoice,
    /// Gibbs settings; `n_samples` is overridden per request.
    pub gibbs: GibbsConfig,
    /// Annealing schedule; `None` means the default for the problem size.
    pub schedule: Option<AnnealSchedule>,
}

impl LocalSampler {
    pub fn new(choice: SamplerChoice) -> Result<Self> {
        if choice == SamplerChoice::Service {
            return Err(Error::InvalidArgument(
                "the service sampler is provided by the client crate".into(),
            ));
        }
        Ok(Self {
            choice,
            gibbs: GibbsConfig::default(),
            schedule: None,
        })
    }

    pub fn choice(&self) -> SamplerChoice {
        self.choice
    }
}

impl NegativeSampler for LocalSampler {
    fn id(&self) -> &str {
        match self.choice {
            SamplerChoice::Gibbs => crate::samplers::GIBBS_ID,
            SamplerChoice::Sa => crate::samplers::SA_ID,
            _ => crate::samplers::EXACT_ID,
        }
    }

    fn sample(&self, bm: &BoltzmannMachine, n_samples: usize, seed: u64) -> Result<SampleSet> {
        match self.choice {
            SamplerChoice::Gibbs => {
                let cfg = GibbsConfig {
                    n_samples,
                    ..self.gibbs.clone()
                };
                gibbs_sample(bm, &cfg, seed)
            }
            SamplerChoice::Exact => exact_sampler(bm, n_samples, seed),
            SamplerChoice::Sa => {
                let (problem, _) = bm_to_spin_model(bm);
                let schedule = self
                    .schedule
                    .clone()
                    .unwrap_or_else(|| AnnealSchedule::default_for(bm.n()));
                let result = simulated_annealing(&problem, &schedule, n_samples, seed)?;
                let mut samples = Vec::with_capacity(n_samples * bm.n());
                let mut energies = Vec::with_capacity(n_samples);
                for row in result.finals.rows() {
                    let z = spins_to_binary(row);
                    energies.push(bm.energy_binary(&z)?);
                    samples.extend(z);
                }
                SampleSet::new(
                    bm.n(),
                    samples,
                    energies,
                    VariableKind::Binary,
                    SampleMeta {
                        seed,
                        sampler_id: crate::samplers::SA_ID.into(),
                        sweeps_per_sample: schedule.n_steps,
                        burn_in: 0,
                        temperature: schedule.t_end,
                    },
                )
            }
            SamplerChoice::Service => unreachable!("rejected in LocalSampler::new"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr_vae: f64,
    pub lr_bm: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub minibatch_size: usize,
    pub n_negative_samples: usize,
    pub sampler_choice: SamplerChoice,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Run a finite-difference gradient check every this many steps.
    pub grad_check_every: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_vae: 1e-2,
            lr_bm: 1e-3,
            patience: 10,
            max_epochs: 500,
            minibatch_size: 128,
            n_negative_samples: 100,
            sampler_choice: SamplerChoice::Gibbs,
            seed: 0,
            adam: AdamConfig::default(),
            grad_check_every: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // Zero rates are allowed so that a frozen model can be trained.
        for (name, v) in [("lr_vae", self.lr_vae), ("lr_bm", self.lr_bm)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.patience == 0 || self.max_epochs == 0 || self.minibatch_size == 0 || self.n_negative_samples == 0 {
            return Err(Error::InvalidArgument(
                "patience, max_epochs, minibatch_size and n_negative_samples must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Cells × genes matrix with one batch label per cell.
#[derive(Clone, Copy, Debug)]
pub struct TrainData<'a> {
    pub x: &'a DMatrix<f64>,
    pub batch: &'a [usize],
}

impl TrainData<'_> {
    fn validate(&self, model: &QbmVaeModel, what: &'static str) -> Result<()> {
        if self.x.nrows() == 0 {
            return Err(Error::Empty(what));
        }
        check_dim(model.input_dim(), self.x.ncols(), "dataset gene count")?;
        check_dim(self.x.nrows(), self.batch.len(), "batch label count")?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: Split,
    pub report: ElboReport,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Snapshot with the best validation ELBO.
    pub model: QbmVaeModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub stopped_early: bool,
    /// `(step, max relative error)` for each debug gradient check.
    pub grad_checks: Vec<(usize, f64)>,
}

const TAG_SHUFFLE: u64 = 0x2001;
const TAG_NOISE: u64 = 0x2002;
const TAG_NEGATIVE: u64 = 0x2003;
const TAG_EVAL: u64 = 0x2004;
const TAG_LOG_Z: u64 = 0x2005;

fn stream_seed(seed: u64, tag: u64, epoch: usize, batch: usize) -> u64 {
    derive_seed(derive_seed(derive_seed(seed, tag), epoch as u64), batch as u64)
}

/// Reparameterization noise, filled row by row: uniforms on `(0, 1)` for
/// the Boltzmann prior, standard normals for the baseline.
fn draw_noise(model: &QbmVaeModel, rows: usize, rng: &mut Philox) -> DMatrix<f64> {
    let l = model.latent_dim();
    let mut noise = DMatrix::zeros(rows, l);
    for i in 0..rows {
        for j in 0..l {
            noise[(i, j)] = match model.prior {
                Prior::Boltzmann(_) => rng.uniform_open(),
                Prior::Gaussian => StandardNormal.sample(rng),
            };
        }
    }
    noise
}

fn select_rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)])
}

const EVAL_CHUNK: usize = 512;

/// ELBO terms averaged over a whole split, with noise drawn from a single
/// stream keyed by `noise_seed`. The positive energy is taken at the
/// spike-binarized latent, so `kl` estimates the KL divergence of the
/// discrete posterior from the prior.
pub fn evaluate(model: &QbmVaeModel, data: TrainData<'_>, noise_seed: u64, log_z: f64) -> Result<ElboReport> {
    data.validate(model, "evaluation set")?;
    let n = data.x.nrows();
    let noise = draw_noise(model, n, &mut Philox::new(noise_seed, 0));
    let mut sums = [0.0f64; 3];
    let mut start = 0;
    while start < n {
        let end = (start + EVAL_CHUNK).min(n);
        let idx: Vec<usize> = (start..end).collect();
        let xb = select_rows(data.x, &idx);
        let onehot = batch_onehot(&data.batch[start..end], model.n_batches())?;
        let nb = noise.rows(start, end - start).into_owned();
        let pass = elbo_forward(&xb, &onehot, model, &nb, log_z)?;
        let w = (end - start) as f64;
        sums[0] += w * pass.report.recon;
        sums[1] += w * pass.report.entropy;
        sums[2] += w * pass.positive_energy_binary;
        start = end;
    }
    let recon = sums[0] / n as f64;
    Ok(match model.prior {
        Prior::Boltzmann(_) => {
            let entropy = sums[1] / n as f64;
            let positive_energy = sums[2] / n as f64;
            let kl = -entropy + positive_energy + log_z;
            ElboReport {
                recon,
                entropy,
                positive_energy,
                log_z,
                kl,
                elbo: -(recon + kl),
            }
        }
        Prior::Gaussian => {
            // The closed-form KL does not depend on the noise; recompute it
            // over the full split.
            let mut kl_sum = 0.0;
            let mut start = 0;
            while start < n {
                let end = (start + EVAL_CHUNK).min(n);
                let idx: Vec<usize> = (start..end).collect();
                let xb = select_rows(data.x, &idx);
                let onehot = batch_onehot(&data.batch[start..end], model.n_batches())?;
                let nb = noise.rows(start, end - start).into_owned();
                kl_sum += (end - start) as f64 * elbo_forward(&xb, &onehot, model, &nb, 0.0)?.report.kl;
                start = end;
            }
            let kl = kl_sum / n as f64;
            ElboReport {
                recon,
                entropy: f64::NAN,
                positive_energy: f64::NAN,
                log_z: f64::NAN,
                kl,
                elbo: -(recon + kl),
            }
        }
    })
}

fn epoch_log_z(model: &QbmVaeModel, sampler: &dyn NegativeSampler, cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    match &model.prior {
        Prior::Gaussian => Ok(f64::NAN),
        Prior::Boltzmann(bm) if bm.n() <= ENUMERATION_CAP => log_partition(bm),
        Prior::Boltzmann(bm) => {
            let s = sampler.sample(bm, cfg.n_negative_samples, stream_seed(cfg.seed, TAG_LOG_Z, epoch, 0))?;
            log_z_mean_energy_estimate(&s, bm)
        }
    }
}

struct Optimizer {
    encoder: Vec<AdamState>,
    decoder: Vec<AdamState>,
    bm_h: AdamState,
    bm_w: AdamState,
}

impl Optimizer {
    fn new(model: &QbmVaeModel) -> Self {
        let l = model.latent_dim();
        Self {
            encoder: model
                .encoder
                .tensors()
                .iter()
                .map(|t| AdamState::new(t.len()))
                .collect(),
            decoder: model
                .decoder
                .tensors()
                .iter()
                .map(|t| AdamState::new(t.len()))
                .collect(),
            bm_h: AdamState::new(l),
            bm_w: AdamState::new(l * l),
        }
    }
}

/// Minibatch training with early stopping on the validation ELBO.
///
/// Each minibatch takes one Adam step on the networks and then, for the
/// Boltzmann prior, one Adam step on `(W, h)` from relaxed positive moments
/// and `n_negative_samples` draws of `sampler`. All randomness is keyed by
/// `cfg.seed`, the epoch and the minibatch index. Training stops once the
/// validation ELBO has not improved for `patience` epochs; the returned
/// model is the best snapshot.
pub fn train(
    model: QbmVaeModel,
    train_set: TrainData<'_>,
    val_set: TrainData<'_>,
    cfg: &TrainConfig,
    sampler: &dyn NegativeSampler,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    train_set.validate(&model, "training set")?;
    val_set.validate(&model, "validation set")?;

    let mut model = model;
    let mut opt = Optimizer::new(&model);
    let mut history = Vec::new();
    let mut grad_checks = Vec::new();
    let mut best: Option<(f64, usize, QbmVaeModel)> = None;
    let mut since_best = 0;
    let mut stopped_early = false;
    let mut step = 0usize;
    let mut epochs_run = 0;
    let n = train_set.x.nrows();

    for epoch in 1..=cfg.max_epochs {
        epochs_run = epoch;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut Philox::new(stream_seed(cfg.seed, TAG_SHUFFLE, epoch, 0), 0));
        for (b, idx) in order.chunks(cfg.minibatch_size).enumerate() {
            let xb = select_rows(train_set.x, idx);
            let labels: Vec<usize> = idx.iter().map(|&i| train_set.batch[i]).collect();
            let onehot = batch_onehot(&labels, model.n_batches())?;
            let noise = draw_noise(
                &model,
                idx.len(),
                &mut Philox::new(stream_seed(cfg.seed, TAG_NOISE, epoch, b), 0),
            );
            // log Z is constant in the network parameters; its value does not
            // affect the step.
            let pass = elbo_forward(&xb, &onehot, &model, &noise, 0.0)?;
            let grads = backward(&pass, &model)?;
            step += 1;
            if let Some(every) = cfg.grad_check_every {
                if every > 0 && step % every == 0 {
                    let total: usize = model
                        .encoder
                        .tensors()
                        .iter()
                        .chain(model.decoder.tensors().iter())
                        .map(|t| t.len())
                        .sum();
                    let worst = finite_difference_check(&model, &xb, &onehot, &noise, 0.0, 1e-5, (total / 64).max(1))?;
                    grad_checks.push((step, worst));
                }
            }
            for ((p, g), s) in model
                .encoder
                .tensors_mut()
                .into_iter()
                .zip(grads.encoder.tensors())
                .zip(opt.encoder.iter_mut())
            {
                adam_step(p, g, s, cfg.lr_vae, &cfg.adam)?;
            }
            for ((p, g), s) in model
                .decoder
                .tensors_mut()
                .into_iter()
                .zip(grads.decoder.tensors())
                .zip(opt.decoder.iter_mut())
            {
                adam_step(p, g, s, cfg.lr_vae, &cfg.adam)?;
            }
            if let Prior::Boltzmann(bm) = &mut model.prior {
                let positive = Moments::from_rows(&pass.latent);
                let samples = sampler.sample(
                    bm,
                    cfg.n_negative_samples,
                    stream_seed(cfg.seed, TAG_NEGATIVE, epoch, b),
                )?;
                check_dim(bm.n(), samples.n(), "negative sample width")?;
                let (mean, pair) = negative_phase_moments(&samples)?;
                let (gh, gw) = bm_gradient(&positive, &Moments { mean, pair })?;
                let mut h = bm.biases().clone();
                let mut w = bm.couplings().clone();
                adam_step(h.as_mut_slice(), gh.as_slice(), &mut opt.bm_h, cfg.lr_bm, &cfg.adam)?;
                adam_step(w.as_mut_slice(), gw.as_slice(), &mut opt.bm_w, cfg.lr_bm, &cfg.adam)?;
                bm.set_params(&w, &h)?;
            }
        }

        let log_z = epoch_log_z(&model, sampler, cfg, epoch)?;
        let train_report = evaluate(&model, train_set, derive_seed(cfg.seed, TAG_EVAL), log_z)?;
        let val_report = evaluate(&model, val_set, derive_seed(cfg.seed, TAG_EVAL + 1), log_z)?;
        history.push(EpochRecord {
            epoch,
            split: Split::Train,
            report: train_report,
        });
        history.push(EpochRecord {
            epoch,
            split: Split::Validation,
            report: val_report,
        });

        let improved = match &best {
            None => !val_report.elbo.is_nan(),
            Some((elbo, _, _)) => val_report.elbo > *elbo,
        };
        if improved {
            best = Some((val_report.elbo, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (_, best_epoch, mut best_model) = best.ok_or(Error::NonFinite("validation ELBO"))?;
    best_model.metadata.insert("best_epoch".into(), best_epoch.to_string());
    best_model.metadata.insert("epochs_run".into(), epochs_run.to_string());
    best_model
        .metadata
        .insert("sampler".into(), cfg.sampler_choice.to_string());
    best_model.metadata.insert("train_seed".into(), cfg.seed.to_string());
    Ok(TrainOutcome {
        model: best_model,
        history,
        best_epoch,
        epochs_run,
        stopped_early,
        grad_checks,
    })
}

pub const HISTORY_HEADER: &str = "epoch,split,recon,entropy,pos_energy,log_z,kl,elbo";

pub fn write_history_csv<W: Write>(history: &[EpochRecord], mut out: W) -> Result<()> {
    out.write_all(history_csv(history).as_bytes())?;
    Ok(())
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from(HISTORY_HEADER);
    s.push('\n');
    for r in history {
        let e = &r.report;
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.epoch, r.split, e.recon, e.entropy, e.positive_energy, e.log_z, e.kl, e.elbo
        ));
    }
    s
}
