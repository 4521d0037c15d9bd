//! Spike-and-exponential relaxation of Bernoulli latents.
//!
//! Given `q = P(z = 1)`, the relaxed variable `ζ` has a point mass at 0
//! with weight `1 - q` and, with weight `q`, the truncated exponential
//! density `β e^{βζ} / (e^β - 1)` on `(0, 1]`. Sampling inverts the mixture
//! CDF at a uniform `ρ`, so gradients flow to `q` with `ρ` held fixed.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReparamConfig {
    pub beta: f64,
    pub q_clamp_epsilon: f64,
}

impl Default for ReparamConfig {
    fn default() -> Self {
        Self {
            beta: 0.5,
            q_clamp_epsilon: 1e-6,
        }
    }
}

impl ReparamConfig {
    pub fn new(beta: f64, q_clamp_epsilon: f64) -> Result<Self> {
        let cfg = Self { beta, q_clamp_epsilon };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "beta must be positive, got {}",
                self.beta
            )));
        }
        if !(self.q_clamp_epsilon > 0.0 && self.q_clamp_epsilon < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "q_clamp_epsilon must lie in (0, 0.5), got {}",
                self.q_clamp_epsilon
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn clamp_q(&self, q: f64) -> f64 {
        q.clamp(self.q_clamp_epsilon, 1.0 - self.q_clamp_epsilon)
    }

    #[inline]
    fn expm1_beta(&self) -> f64 {
        self.beta.exp_m1()
    }
}

/// `ζ(ρ, q) = (1/β) ln[ max(ρ + q - 1, 0)/q · (e^β - 1) + 1 ]`.
#[inline]
pub fn zeta(rho: f64, q: f64, cfg: &ReparamConfig) -> f64 {
    let q = cfg.clamp_q(q);
    let u = (rho + q - 1.0).max(0.0) / q;
    (u * cfg.expm1_beta()).ln_1p() / cfg.beta
}

/// Mixture CDF `ρ = q (e^{βζ} - 1)/(e^β - 1) + (1 - q)` for `ζ ∈ [0, 1]`.
#[inline]
pub fn zeta_cdf(z_val: f64, q: f64, cfg: &ReparamConfig) -> f64 {
    let q = cfg.clamp_q(q);
    q * (cfg.beta * z_val).exp_m1() / cfg.expm1_beta() + (1.0 - q)
}

/// `∂ζ/∂q` at fixed `ρ`. Zero on the spike branch (`ρ ≤ 1 - q`), at the
/// kink, and wherever `q` is clamped.
#[inline]
pub fn zeta_grad_q(rho: f64, q: f64, cfg: &ReparamConfig) -> f64 {
    let eps = cfg.q_clamp_epsilon;
    if q < eps || q > 1.0 - eps {
        return 0.0;
    }
    let excess = rho + q - 1.0;
    if excess <= 0.0 {
        return 0.0;
    }
    let a = cfg.expm1_beta();
    let u = excess / q;
    a * (1.0 - rho) / (q * q) / (u * a + 1.0) / cfg.beta
}

/// Closed-form entropy (nats) of a factorized Bernoulli with means `q`.
pub fn bernoulli_entropy(q: &[f64], cfg: &ReparamConfig) -> f64 {
    q.iter()
        .map(|&p| {
            let p = cfg.clamp_q(p);
            -(p * p.ln() + (1.0 - p) * (1.0 - p).ln())
        })
        .sum()
}

/// `∂H/∂q_l = ln((1 - q_l)/q_l)`; zero where `q` is clamped.
#[inline]
pub fn bernoulli_entropy_grad(q: f64, cfg: &ReparamConfig) -> f64 {
    let eps = cfg.q_clamp_epsilon;
    if q < eps || q > 1.0 - eps {
        return 0.0;
    }
    ((1.0 - q) / q).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinarizeMode {
    /// `z = 1` iff `ζ > 0`.
    Spike,
    /// `z = 1` iff `q > 0.5`.
    Threshold,
}

pub fn binarize(values: &[f64], mode: BinarizeMode) -> Vec<i8> {
    values
        .iter()
        .map(|&v| match mode {
            BinarizeMode::Spike => i8::from(v > 0.0),
            BinarizeMode::Threshold => i8::from(v > 0.5),
        })
        .collect()
}
