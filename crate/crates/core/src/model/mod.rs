//! Variational autoencoder with a Boltzmann-machine prior over binary
//! latents, plus a Gaussian-prior baseline sharing the same networks.

mod adam;
mod bm_grad;
mod checkpoint;
mod elbo;
mod embed;
mod nn;
mod train;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::energy::BoltzmannMachine;
use crate::error::{check_dim, Error, Result};
use crate::reparam::ReparamConfig;
use crate::rng::{derive_seed, Philox};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use bm_grad::{bm_gradient, Moments};
pub use elbo::{backward, elbo_forward, finite_difference_check, ForwardPass, Gradients};
pub use embed::{embed, EmbedKind};
pub use nn::{decode, encode, relu, DecoderParams, Dense, EncoderParams};
pub use train::{
    evaluate, history_csv, train, write_history_csv, EpochRecord, LocalSampler, NegativeSampler, SamplerChoice, Split,
    TrainConfig, TrainData, TrainOutcome, HISTORY_HEADER,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Boltzmann,
    Gaussian,
}

impl fmt::Display for PriorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PriorKind::Boltzmann => "boltzmann",
            PriorKind::Gaussian => "gaussian",
        })
    }
}

impl FromStr for PriorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "boltzmann" => Ok(PriorKind::Boltzmann),
            "gaussian" => Ok(PriorKind::Gaussian),
            other => Err(Error::InvalidArgument(format!("unknown prior `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Prior {
    Boltzmann(BoltzmannMachine),
    /// Standard normal prior; the encoder head emits mean and log-variance.
    Gaussian,
}

impl Prior {
    pub fn kind(&self) -> PriorKind {
        match self {
            Prior::Boltzmann(_) => PriorKind::Boltzmann,
            Prior::Gaussian => PriorKind::Gaussian,
        }
    }

    pub fn bm(&self) -> Option<&BoltzmannMachine> {
        match self {
            Prior::Boltzmann(bm) => Some(bm),
            Prior::Gaussian => None,
        }
    }
}

/// Architecture of a model. Defaults: hidden width 256, latent width 64.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: usize,
    pub latent: usize,
    pub n_batches: usize,
    pub prior: PriorKind,
    pub reparam: ReparamConfig,
}

impl ModelSpec {
    pub fn new(input_dim: usize, n_batches: usize) -> Self {
        Self {
            input_dim,
            hidden: 256,
            latent: 64,
            n_batches,
            prior: PriorKind::Boltzmann,
            reparam: ReparamConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QbmVaeModel {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
    pub prior: Prior,
    pub reparam: ReparamConfig,
    pub rng_seed: u64,
    /// Free-form training metadata carried through checkpoints.
    pub metadata: BTreeMap<String, String>,
}

const TAG_INIT: u64 = 0x1000;

impl QbmVaeModel {
    /// Fresh model. Network weights are uniform in `±1/√fan_in`; the prior
    /// starts flat (`W = 0`, `h = 0`).
    pub fn new(spec: &ModelSpec, seed: u64) -> Result<Self> {
        spec.reparam.validate()?;
        if spec.input_dim == 0 || spec.hidden == 0 || spec.latent == 0 || spec.n_batches == 0 {
            return Err(Error::InvalidArgument(
                "input_dim, hidden, latent and n_batches must be positive".into(),
            ));
        }
        let mut rng = Philox::new(derive_seed(seed, TAG_INIT), 0);
        let head = match spec.prior {
            PriorKind::Boltzmann => spec.latent,
            PriorKind::Gaussian => 2 * spec.latent,
        };
        let encoder = EncoderParams::init(spec.input_dim, spec.hidden, head, &mut rng);
        let decoder = DecoderParams::init(spec.latent, spec.n_batches, spec.hidden, spec.input_dim, &mut rng);
        let prior = match spec.prior {
            PriorKind::Boltzmann => Prior::Boltzmann(BoltzmannMachine::zeros(spec.latent, 0)?),
            PriorKind::Gaussian => Prior::Gaussian,
        };
        let model = Self {
            encoder,
            decoder,
            prior,
            reparam: spec.reparam,
            rng_seed: seed,
            metadata: BTreeMap::new(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn input_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.encoder.hidden.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.decoder.hidden.input_dim() - self.n_batches()
    }

    pub fn n_batches(&self) -> usize {
        self.decoder.hidden.input_dim().saturating_sub(match self.prior {
            Prior::Boltzmann(_) => self.encoder.head.output_dim(),
            Prior::Gaussian => self.encoder.head.output_dim() / 2,
        })
    }

    pub fn prior_kind(&self) -> PriorKind {
        self.prior.kind()
    }

    /// Sets the decoder output bias to the per-gene mean of `x`. Starting
    /// from the mean keeps the first optimizer steps from driving every
    /// cell's latent logits the same way while the decoder learns the
    /// offset, which otherwise saturates the encoder before the latent
    /// carries any cell-specific signal.
    pub fn init_output_bias(&mut self, x: &DMatrix<f64>) -> Result<()> {
        check_dim(self.input_dim(), x.ncols(), "input width")?;
        if x.nrows() == 0 {
            return Err(Error::Empty("training matrix"));
        }
        for (j, b) in self.decoder.out.b.iter_mut().enumerate() {
            *b = x.column(j).mean();
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.reparam.validate()?;
        self.encoder.validate()?;
        self.decoder.validate()?;
        let head = self.encoder.head.output_dim();
        let latent = match &self.prior {
            Prior::Boltzmann(bm) => {
                check_dim(head, bm.n_visible(), "prior visible units")?;
                if bm.n_hidden() != 0 {
                    return Err(Error::InvalidArgument("prior hidden units are not supported".into()));
                }
                head
            }
            Prior::Gaussian => {
                if head % 2 != 0 {
                    return Err(Error::InvalidArgument("gaussian head width must be even".into()));
                }
                head / 2
            }
        };
        if self.decoder.hidden.input_dim() <= latent {
            return Err(Error::InvalidArgument(
                "decoder input must include the batch one-hot".into(),
            ));
        }
        check_dim(self.input_dim(), self.decoder.out.output_dim(), "decoder output width")?;
        Ok(())
    }
}

/// Per-split averages of the ELBO terms. For the Gaussian baseline the
/// entropy, positive-energy and log-partition fields are NaN.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboReport {
    pub recon: f64,
    pub entropy: f64,
    pub positive_energy: f64,
    pub log_z: f64,
    pub kl: f64,
    pub elbo: f64,
}

/// Rows of the one-hot batch design for `labels`.
pub fn batch_onehot(labels: &[usize], n_batches: usize) -> Result<DMatrix<f64>> {
    if let Some(&bad) = labels.iter().find(|&&b| b >= n_batches) {
        return Err(Error::InvalidArgument(format!(
            "batch label {bad} out of range for {n_batches} batches"
        )));
    }
    Ok(DMatrix::from_fn(labels.len(), n_batches, |i, b| {
        f64::from(u8::from(labels[i] == b))
    }))
}
