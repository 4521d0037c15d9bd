use std::path::PathBuf;
use std::time::Duration;

use clap::Args;
use qbmvae::dataio::{ExpressionDataset, DEFAULT_N_TOP};
use qbmvae::model::{
    history_csv, train, LocalSampler, ModelSpec, NegativeSampler, PriorKind, QbmVaeModel, SamplerChoice, TrainConfig,
    TrainData,
};
use qbmvae_client::{SamplerSpec, ServiceSampler};

use crate::config::write_manifest;
use crate::data::DataArgs;
use crate::{CliError, CliResult, GibbsArgs, OutArgs, ScheduleArgs};

#[derive(Args, Debug, Clone)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Highly variable genes to keep; no selection when at least the gene count.
    #[arg(long, default_value_t = DEFAULT_N_TOP)]
    pub hvg: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// boltzmann or gaussian.
    #[arg(long, default_value = "boltzmann")]
    pub prior: String,
    #[arg(long, default_value_t = 64)]
    pub latent: usize,
    #[arg(long, default_value_t = 256)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub lr_vae: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub lr_bm: f64,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 500)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub minibatch: usize,
    /// Negative-phase samples per step.
    #[arg(long, default_value_t = 100)]
    pub n_neg: usize,
    /// gibbs, sa, exact or service.
    #[arg(long, default_value = "gibbs")]
    pub sampler: String,
    /// host:port of a running `serve`; used with --sampler service.
    #[arg(long)]
    pub service_addr: Option<String>,
    /// Seconds before a service request is abandoned.
    #[arg(long, default_value_t = 60.0)]
    pub service_timeout: f64,
    #[command(flatten)]
    pub gibbs: GibbsArgs,
    #[command(flatten)]
    pub schedule: ScheduleArgs,
    /// Seed for initialization, the split, shuffling and sampling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutArgs,
}

/// Normalization and gene selection. Returns the processed dataset.
pub fn preprocess(data: &DataArgs, hvg: usize, raw: ExpressionDataset) -> CliResult<ExpressionDataset> {
    let ds = data.normalize(raw)?;
    if hvg == 0 {
        return Err(CliError::Usage("--hvg must be positive".into()));
    }
    if hvg < ds.n_genes() {
        Ok(ds.select_hvg(hvg)?)
    } else {
        Ok(ds)
    }
}

fn usage<T, E: std::fmt::Display>(r: Result<T, E>) -> CliResult<T> {
    r.map_err(|e| CliError::Usage(e.to_string()))
}

pub fn run(a: &TrainArgs, flags: &[(String, String)]) -> CliResult<()> {
    let prior: PriorKind = usage(a.prior.parse())?;
    let choice: SamplerChoice = usage(a.sampler.parse())?;
    if !(a.val_fraction > 0.0 && a.val_fraction < 1.0) {
        return Err(CliError::Usage("--val-fraction must lie in (0, 1)".into()));
    }
    let cfg = TrainConfig {
        lr_vae: a.lr_vae,
        lr_bm: a.lr_bm,
        patience: a.patience,
        max_epochs: a.max_epochs,
        minibatch_size: a.minibatch,
        n_negative_samples: a.n_neg,
        sampler_choice: choice,
        seed: a.seed,
        ..TrainConfig::default()
    };
    usage(cfg.validate())?;
    let gibbs = a.gibbs.config(a.n_neg)?;
    let schedule = a.schedule.schedule(a.latent)?;
    let sampler: Box<dyn NegativeSampler> = match choice {
        SamplerChoice::Service => {
            let addr = a
                .service_addr
                .clone()
                .ok_or_else(|| CliError::Usage("--sampler service needs --service-addr".into()))?;
            if !(a.service_timeout > 0.0) {
                return Err(CliError::Usage("--service-timeout must be positive".into()));
            }
            Box::new(ServiceSampler::new(
                addr,
                SamplerSpec::Gibbs(gibbs),
                Duration::from_secs_f64(a.service_timeout),
            ))
        }
        local => {
            let mut s = LocalSampler::new(local)?;
            s.gibbs = gibbs;
            s.schedule = Some(schedule);
            Box::new(s)
        }
    };

    let out = a.out.prepare()?;
    let ds = preprocess(&a.data, a.hvg, a.data.load()?)?;
    for g in ds.genes() {
        if g.contains(',') || g.contains('\n') {
            return Err(CliError::Runtime(anyhow::anyhow!(
                "gene name `{g}` contains a comma or newline"
            )));
        }
    }
    let (train_ds, val_ds) = ds.split(a.val_fraction, a.seed)?;

    let mut spec = ModelSpec::new(ds.n_genes(), ds.batch().n_classes());
    spec.hidden = a.hidden;
    spec.latent = a.latent;
    spec.prior = prior;
    let mut model = usage(QbmVaeModel::new(&spec, a.seed))?;
    model.init_output_bias(train_ds.matrix())?;

    let outcome = train(
        model,
        TrainData {
            x: train_ds.matrix(),
            batch: train_ds.batch().labels(),
        },
        TrainData {
            x: val_ds.matrix(),
            batch: val_ds.batch().labels(),
        },
        &cfg,
        sampler.as_ref(),
    )?;

    let mut model = outcome.model;
    model.metadata.insert("genes".into(), ds.genes().join(","));
    model.metadata.insert("batches".into(), ds.batch().vocab().join(","));
    model
        .metadata
        .insert("normalized_input".into(), a.data.preprocessed.to_string());
    model
        .metadata
        .insert("target_sum".into(), a.data.target_sum.to_string());
    let ckpt: PathBuf = out.join("model.ckpt");
    model.save(&ckpt)?;
    std::fs::write(out.join("history.csv"), history_csv(&outcome.history))?;

    let derived = vec![
        ("n_cells".to_string(), ds.n_cells().to_string()),
        ("n_genes".to_string(), ds.n_genes().to_string()),
        ("n_train".to_string(), train_ds.n_cells().to_string()),
        ("n_validation".to_string(), val_ds.n_cells().to_string()),
        ("best_epoch".to_string(), outcome.best_epoch.to_string()),
        ("epochs_run".to_string(), outcome.epochs_run.to_string()),
        ("stopped_early".to_string(), outcome.stopped_early.to_string()),
    ];
    write_manifest(out, "train", flags, &derived)?;
    println!(
        "trained {} epochs (best {}), checkpoint {}",
        outcome.epochs_run,
        outcome.best_epoch,
        ckpt.display()
    );
    Ok(())
}
