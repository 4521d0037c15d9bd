use nalgebra::DMatrix;

use super::nn::{relu, relu_backward, sigmoid, DecoderParams, EncoderParams};
use super::{ElboReport, Prior, QbmVaeModel};
use crate::error::{check_dim, Error, Result};
use crate::reparam::{bernoulli_entropy_grad, zeta, zeta_grad_q};

/// Intermediates of one minibatch forward pass, kept for [`backward`].
#[derive(Clone, Debug)]
pub struct ForwardPass {
    /// Mean over the minibatch of `recon + kl`; the quantity differentiated.
    pub loss: f64,
    /// Terms of `loss`, averaged over examples. `positive_energy` is taken
    /// at the relaxed latent.
    pub report: ElboReport,
    /// Mean prior energy at the spike-binarized latent (NaN for Gaussian).
    pub positive_energy_binary: f64,
    /// Latent fed to the decoder (`ζ`, or `μ + σ ε` for the baseline).
    pub latent: DMatrix<f64>,
    x: DMatrix<f64>,
    noise: DMatrix<f64>,
    a1: DMatrix<f64>,
    h1: DMatrix<f64>,
    head: DMatrix<f64>,
    dec_in: DMatrix<f64>,
    a3: DMatrix<f64>,
    h3: DMatrix<f64>,
    xhat: DMatrix<f64>,
}

/// Gradients of the minibatch loss with the same layout as the parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub encoder: EncoderParams,
    pub decoder: DecoderParams,
}

fn mlp_hidden(layer: &super::Dense, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let a = layer.forward(x)?;
    let h = relu(&a);
    Ok((a, h))
}

/// Forward pass over a minibatch.
///
/// Rows of `x`, `onehot` and `noise` are examples. For the Boltzmann prior
/// `noise` holds uniforms `ρ` and `log_z` is the prior's log-partition
/// value; for the Gaussian baseline `noise` holds standard normals and
/// `log_z` is ignored.
pub fn elbo_forward(
    x: &DMatrix<f64>,
    onehot: &DMatrix<f64>,
    model: &QbmVaeModel,
    noise: &DMatrix<f64>,
    log_z: f64,
) -> Result<ForwardPass> {
    let m = x.nrows();
    if m == 0 {
        return Err(Error::Empty("minibatch"));
    }
    let latent_dim = model.latent_dim();
    check_dim(model.input_dim(), x.ncols(), "input width")?;
    check_dim(m, onehot.nrows(), "one-hot rows")?;
    check_dim(model.n_batches(), onehot.ncols(), "one-hot width")?;
    check_dim(m, noise.nrows(), "noise rows")?;
    check_dim(latent_dim, noise.ncols(), "noise width")?;

    let (a1, h1) = mlp_hidden(&model.encoder.hidden, x)?;
    let head = model.encoder.head.forward(&h1)?;
    if head.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("encoder activations"));
    }
    let cfg = &model.reparam;

    let mut per_entropy = vec![f64::NAN; m];
    let mut per_pos = vec![f64::NAN; m];
    let mut per_pos_bin = vec![f64::NAN; m];
    let mut per_kl = vec![0.0; m];
    let latent = match &model.prior {
        Prior::Boltzmann(bm) => {
            let q = head.map(sigmoid);
            let latent = DMatrix::from_fn(m, latent_dim, |i, l| zeta(noise[(i, l)], q[(i, l)], cfg));
            for i in 0..m {
                let qi: Vec<f64> = q.row(i).iter().copied().collect();
                let zi: Vec<f64> = latent.row(i).iter().copied().collect();
                let bin: Vec<f64> = zi.iter().map(|&v| if v > 0.0 { 1.0 } else { 0.0 }).collect();
                per_entropy[i] = crate::reparam::bernoulli_entropy(&qi, cfg);
                per_pos[i] = bm.energy(&zi)?;
                per_pos_bin[i] = bm.energy(&bin)?;
                per_kl[i] = -per_entropy[i] + per_pos[i] + log_z;
            }
            latent
        }
        Prior::Gaussian => {
            let mut latent = DMatrix::zeros(m, latent_dim);
            for i in 0..m {
                let mut kl = 0.0;
                for l in 0..latent_dim {
                    let mu = head[(i, l)];
                    let logvar = head[(i, latent_dim + l)];
                    latent[(i, l)] = mu + (0.5 * logvar).exp() * noise[(i, l)];
                    kl += mu * mu + logvar.exp() - 1.0 - logvar;
                }
                per_kl[i] = 0.5 * kl;
            }
            latent
        }
    };

    let dec_in = DMatrix::from_fn(m, latent_dim + onehot.ncols(), |i, c| {
        if c < latent_dim {
            latent[(i, c)]
        } else {
            onehot[(i, c - latent_dim)]
        }
    });
    let (a3, h3) = mlp_hidden(&model.decoder.hidden, &dec_in)?;
    let xhat = model.decoder.out.forward(&h3)?;
    // Squared error summed over genes, so the reconstruction term keeps the
    // same per-cell scale as the KL term it is traded against.
    let per_recon: Vec<f64> = (0..m)
        .map(|i| {
            x.row(i)
                .iter()
                .zip(xhat.row(i).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
        })
        .collect();

    let mean = |v: &[f64]| v.iter().sum::<f64>() / m as f64;
    let recon = mean(&per_recon);
    let kl = mean(&per_kl);
    let gaussian = matches!(model.prior, Prior::Gaussian);
    let report = ElboReport {
        recon,
        entropy: mean(&per_entropy),
        positive_energy: mean(&per_pos),
        log_z: if gaussian { f64::NAN } else { log_z },
        kl,
        elbo: -(recon + kl),
    };
    let loss = recon + kl;
    if !loss.is_finite() {
        return Err(Error::NonFinite("loss"));
    }
    Ok(ForwardPass {
        loss,
        report,
        positive_energy_binary: mean(&per_pos_bin),
        latent,
        x: x.clone(),
        noise: noise.clone(),
        a1,
        h1,
        head,
        dec_in,
        a3,
        h3,
        xhat,
    })
}

/// Reverse-mode gradients of `pass.loss` with respect to every encoder and
/// decoder parameter. The noise is held fixed, so gradients reach the
/// encoder through `∂ζ/∂q` (or `∂z/∂μ, ∂z/∂logσ²` for the baseline).
pub fn backward(pass: &ForwardPass, model: &QbmVaeModel) -> Result<Gradients> {
    let m = pass.x.nrows();
    let latent_dim = model.latent_dim();
    check_dim(model.input_dim(), pass.x.ncols(), "cached input width")?;
    check_dim(latent_dim, pass.latent.ncols(), "cached latent width")?;
    let inv_m = 1.0 / m as f64;
    let mut g = Gradients {
        encoder: model.encoder.zeros_like(),
        decoder: model.decoder.zeros_like(),
    };

    let scale = 2.0 / m as f64;
    let dxhat = (&pass.xhat - &pass.x) * scale;
    let mut dh3 = model.decoder.out.backward(&pass.h3, &dxhat, &mut g.decoder.out);
    relu_backward(&pass.a3, &mut dh3);
    let d_in = model.decoder.hidden.backward(&pass.dec_in, &dh3, &mut g.decoder.hidden);
    let dlatent = d_in.columns(0, latent_dim).into_owned();

    let cfg = &model.reparam;
    let dhead = match &model.prior {
        Prior::Boltzmann(bm) => {
            // ∂E/∂ζ = h + W ζ (W symmetric, zero diagonal).
            let mut field = &pass.latent * bm.couplings();
            for mut row in field.row_iter_mut() {
                row += bm.biases().transpose();
            }
            DMatrix::from_fn(m, latent_dim, |i, l| {
                let q = sigmoid(pass.head[(i, l)]);
                let dz = dlatent[(i, l)] + inv_m * field[(i, l)];
                let dq = dz * zeta_grad_q(pass.noise[(i, l)], q, cfg) - inv_m * bernoulli_entropy_grad(q, cfg);
                dq * q * (1.0 - q)
            })
        }
        Prior::Gaussian => {
            let mut dh = DMatrix::zeros(m, 2 * latent_dim);
            for i in 0..m {
                for l in 0..latent_dim {
                    let mu = pass.head[(i, l)];
                    let logvar = pass.head[(i, latent_dim + l)];
                    let sigma = (0.5 * logvar).exp();
                    dh[(i, l)] = dlatent[(i, l)] + inv_m * mu;
                    dh[(i, latent_dim + l)] =
                        dlatent[(i, l)] * pass.noise[(i, l)] * 0.5 * sigma + inv_m * 0.5 * (logvar.exp() - 1.0);
                }
            }
            dh
        }
    };
    let mut dh1 = model.encoder.head.backward(&pass.h1, &dhead, &mut g.encoder.head);
    relu_backward(&pass.a1, &mut dh1);
    model.encoder.hidden.backward(&pass.x, &dh1, &mut g.encoder.hidden);
    Ok(g)
}

/// Largest relative discrepancy between [`backward`] and central
/// differences of [`elbo_forward`] over every network parameter (or every
/// `stride`-th one). Relative error uses `max(|fd|, |analytic|, 1e-8)`.
pub fn finite_difference_check(
    model: &QbmVaeModel,
    x: &DMatrix<f64>,
    onehot: &DMatrix<f64>,
    noise: &DMatrix<f64>,
    log_z: f64,
    step: f64,
    stride: usize,
) -> Result<f64> {
    let pass = elbo_forward(x, onehot, model, noise, log_z)?;
    let grads = backward(&pass, model)?;
    let analytic: Vec<f64> = grads
        .encoder
        .tensors()
        .into_iter()
        .chain(grads.decoder.tensors())
        .flat_map(|t| t.iter().copied())
        .collect();
    let mut probe = model.clone();
    let loss_at = |probe: &QbmVaeModel| elbo_forward(x, onehot, probe, noise, log_z).map(|p| p.loss);
    let mut worst = 0.0f64;
    let stride = stride.max(1);
    for k in (0..analytic.len()).step_by(stride) {
        let original = param_mut(&mut probe, k).map(|p| *p).ok_or(Error::Empty("parameter"))?;
        *param_mut(&mut probe, k).unwrap() = original + step;
        let up = loss_at(&probe)?;
        *param_mut(&mut probe, k).unwrap() = original - step;
        let down = loss_at(&probe)?;
        *param_mut(&mut probe, k).unwrap() = original;
        let fd = (up - down) / (2.0 * step);
        let an = analytic[k];
        let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

fn param_mut(model: &mut QbmVaeModel, mut k: usize) -> Option<&mut f64> {
    let (enc, dec) = (&mut model.encoder, &mut model.decoder);
    for t in enc.tensors_mut().into_iter().chain(dec.tensors_mut()) {
        if k < t.len() {
            return Some(&mut t[k]);
        }
        k -= t.len();
    }
    None
}
