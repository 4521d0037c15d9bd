use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;

use super::nn::{relu, sigmoid};
use super::{Prior, QbmVaeModel};
use crate::error::{check_dim, Error, Result};
use crate::reparam::zeta;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EmbedKind {
    /// Encoder means `q` (Gaussian baseline: `μ`).
    Q,
    /// Relaxed latent at the fixed draw `ρ = 0.5` (Gaussian baseline: `μ`).
    Zeta,
    /// Spike-binarized latent at `ρ = 0.5`, i.e. `q > 0.5`
    /// (Gaussian baseline: `μ > 0`).
    Binary,
}

impl fmt::Display for EmbedKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedKind::Q => "q",
            EmbedKind::Zeta => "zeta",
            EmbedKind::Binary => "binary",
        })
    }
}

impl FromStr for EmbedKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "q" => Ok(EmbedKind::Q),
            "zeta" => Ok(EmbedKind::Zeta),
            "binary" => Ok(EmbedKind::Binary),
            other => Err(Error::InvalidArgument(format!("unknown embedding kind `{other}`"))),
        }
    }
}

/// Per-cell latent representation; one row per row of `x`, `L` columns.
pub fn embed(x: &DMatrix<f64>, model: &QbmVaeModel, kind: EmbedKind) -> Result<DMatrix<f64>> {
    model.validate()?;
    check_dim(model.input_dim(), x.ncols(), "input width")?;
    let h = relu(&model.encoder.hidden.forward(x)?);
    let head = model.encoder.head.forward(&h)?;
    if head.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder activations"));
    }
    let l = model.latent_dim();
    let cfg = &model.reparam;
    Ok(match model.prior {
        Prior::Boltzmann(_) => {
            let q = head.map(|v| cfg.clamp_q(sigmoid(v)));
            match kind {
                EmbedKind::Q => q,
                EmbedKind::Zeta => q.map(|p| zeta(0.5, p, cfg)),
                EmbedKind::Binary => q.map(|p| if zeta(0.5, p, cfg) > 0.0 { 1.0 } else { 0.0 }),
            }
        }
        Prior::Gaussian => {
            let mu = head.columns(0, l).into_owned();
            match kind {
                EmbedKind::Q | EmbedKind::Zeta => mu,
                EmbedKind::Binary => mu.map(|v| if v > 0.0 { 1.0 } else { 0.0 }),
            }
        }
    })
}
