//! Exhaustive enumeration of small Boltzmann machines.
//!
//! State index `s` encodes `z_l = (s >> l) & 1`. Energies are produced by a
//! Gray-code walk inside fixed-size blocks of low bits; each block starts
//! from a direct evaluation, so rounding does not accumulate across blocks.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::bm::BoltzmannMachine;
use crate::error::{Error, Result};

/// Largest `n` accepted by exact enumeration.
pub const ENUMERATION_CAP: usize = 25;

const BLOCK_BITS: usize = 12;

/// Result of [`exact_enumeration`].
#[derive(Clone, Debug)]
pub struct Enumeration {
    pub log_z: f64,
    pub probabilities: Vec<f64>,
    pub mean: DVector<f64>,
    /// `E[z_l z_m]`, symmetric, diagonal equals `mean`.
    pub pair: DMatrix<f64>,
}

pub fn state_bits(s: usize, n: usize) -> Vec<f64> {
    (0..n).map(|l| ((s >> l) & 1) as f64).collect()
}

fn check_cap(n: usize) -> Result<()> {
    if n > ENUMERATION_CAP {
        return Err(Error::TooLarge {
            n,
            cap: ENUMERATION_CAP,
        });
    }
    Ok(())
}

/// Energies of all `2^n` states, indexed by state.
pub fn enumerate_energies(bm: &BoltzmannMachine) -> Result<Vec<f64>> {
    let n = bm.n();
    check_cap(n)?;
    let low = n.min(BLOCK_BITS);
    let block_len = 1usize << low;
    let n_blocks = 1usize << (n - low);
    let w = bm.couplings();
    let blocks: Vec<Vec<(usize, f64)>> = (0..n_blocks)
        .into_par_iter()
        .map(|hi| {
            let base = hi << low;
            let mut z = state_bits(base, n);
            let mut e = bm.energy_unchecked(&z);
            let mut field: Vec<f64> = (0..n).map(|l| bm.local_field(l, &z)).collect();
            let mut out = Vec::with_capacity(block_len);
            out.push((base, e));
            let mut gray = 0usize;
            for i in 1..block_len {
                let bit = i.trailing_zeros() as usize;
                gray ^= 1 << bit;
                let on = z[bit] == 0.0;
                let col = w.column(bit);
                if on {
                    e += field[bit];
                    z[bit] = 1.0;
                    for m in 0..n {
                        field[m] += col[m];
                    }
                } else {
                    e -= field[bit];
                    z[bit] = 0.0;
                    for m in 0..n {
                        field[m] -= col[m];
                    }
                }
                out.push((base | gray, e));
            }
            out
        })
        .collect();
    let mut energies = vec![0.0; 1usize << n];
    for block in blocks {
        for (s, e) in block {
            energies[s] = e;
        }
    }
    Ok(energies)
}

/// `ln Σ exp(-E)` with a max shift. Summation runs in state order.
pub fn log_sum_exp_neg(energies: &[f64]) -> f64 {
    let shift = energies.iter().map(|e| -e).fold(f64::NEG_INFINITY, f64::max);
    let total: f64 = energies.iter().map(|e| (-e - shift).exp()).sum();
    shift + total.ln()
}

/// Exact `ln Z` without materializing moments.
pub fn log_partition(bm: &BoltzmannMachine) -> Result<f64> {
    Ok(log_sum_exp_neg(&enumerate_energies(bm)?))
}

/// Normalized state probabilities.
pub fn state_probabilities(bm: &BoltzmannMachine) -> Result<(f64, Vec<f64>)> {
    let energies = enumerate_energies(bm)?;
    let log_z = log_sum_exp_neg(&energies);
    let probs = energies.iter().map(|e| (-e - log_z).exp()).collect();
    Ok((log_z, probs))
}

/// `log Z`, the full state distribution, and first/second moments.
pub fn exact_enumeration(bm: &BoltzmannMachine) -> Result<Enumeration> {
    let n = bm.n();
    let (log_z, probabilities) = state_probabilities(bm)?;
    let chunk = 1usize << n.min(BLOCK_BITS);
    let partials: Vec<(Vec<f64>, Vec<f64>)> = probabilities
        .par_chunks(chunk)
        .enumerate()
        .map(|(ci, ps)| {
            let mut mean = vec![0.0; n];
            let mut pair = vec![0.0; n * n];
            let mut active = Vec::with_capacity(n);
            for (k, &p) in ps.iter().enumerate() {
                let s = ci * chunk + k;
                active.clear();
                active.extend((0..n).filter(|&l| (s >> l) & 1 == 1));
                for (ai, &l) in active.iter().enumerate() {
                    mean[l] += p;
                    for &m in &active[ai + 1..] {
                        pair[l * n + m] += p;
                    }
                }
            }
            (mean, pair)
        })
        .collect();
    let mut mean = DVector::zeros(n);
    let mut pair = DMatrix::zeros(n, n);
    for (pm, pp) in partials {
        for l in 0..n {
            mean[l] += pm[l];
            for m in (l + 1)..n {
                pair[(l, m)] += pp[l * n + m];
            }
        }
    }
    for l in 0..n {
        pair[(l, l)] = mean[l];
        for m in (l + 1)..n {
            pair[(m, l)] = pair[(l, m)];
        }
    }
    Ok(Enumeration {
        log_z,
        probabilities,
        mean,
        pair,
    })
}
