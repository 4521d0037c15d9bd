use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use super::ExpressionDataset;
use crate::error::{Error, Result};
use crate::rng::Philox;
use crate::scmetrics::LabelVector;

/// Negative-binomial dispersion: variance = μ + DISPERSION·μ².
pub const DISPERSION: f64 = 0.1;
const BASE_LOG_MEAN: f64 = 1.6;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthConfig {
    pub n_cells: usize,
    pub n_genes: usize,
    pub n_types: usize,
    pub n_batches: usize,
    pub seed: u64,
    /// Scale of the per-batch log-normal gene distortion; 0 disables it.
    pub batch_strength: f64,
    /// Scale of the per-type log-normal deviation from the base profile.
    pub separation: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_cells: 2000,
            n_genes: 200,
            n_types: 4,
            n_batches: 2,
            seed: 0,
            batch_strength: 0.5,
            separation: 1.0,
        }
    }
}

fn normal(rng: &mut Philox) -> f64 {
    rng.sample(StandardNormal)
}

/// Draws a count matrix with known cell types and batches.
///
/// Gene base means are exp(N(1.6, 1)). Each type multiplies them by
/// exp(separation·N(0,1)) per gene and each batch by
/// exp(batch_strength·N(0,1)) per gene. Counts are Gamma–Poisson with
/// shape 1/DISPERSION. Profiles use stream 0, labels stream 1 and cell i
/// stream 2+i, so output is fixed by the seed.
pub fn synthesize(cfg: &SynthConfig) -> Result<ExpressionDataset> {
    let SynthConfig {
        n_cells,
        n_genes,
        n_types,
        n_batches,
        seed,
        batch_strength,
        separation,
    } = *cfg;
    if n_cells == 0 || n_genes == 0 || n_types == 0 || n_batches == 0 {
        return Err(Error::InvalidArgument("synthetic sizes must be positive".into()));
    }
    if n_cells < n_types.max(n_batches) {
        return Err(Error::InvalidArgument(
            "need at least one cell per type and batch".into(),
        ));
    }
    if !(batch_strength >= 0.0 && separation >= 0.0) || !batch_strength.is_finite() || !separation.is_finite() {
        return Err(Error::InvalidArgument(
            "batch_strength and separation must be finite and non-negative".into(),
        ));
    }
    let mut prof = Philox::new(seed, 0);
    let base: Vec<f64> = (0..n_genes)
        .map(|_| (BASE_LOG_MEAN + normal(&mut prof)).exp())
        .collect();
    let type_factor = DMatrix::from_fn(n_types, n_genes, |_, _| (separation * normal(&mut prof)).exp());
    let batch_factor = DMatrix::from_fn(n_batches, n_genes, |_, _| (batch_strength * normal(&mut prof)).exp());

    // Round-robin keeps every type and batch present; the shuffle within the
    // label stream decorrelates type from batch.
    let mut lab = Philox::new(seed, 1);
    let types: Vec<usize> = (0..n_cells).map(|i| i % n_types).collect();
    let mut batches: Vec<usize> = (0..n_cells).map(|i| i % n_batches).collect();
    for i in (1..n_cells).rev() {
        let j = lab.below(i as u64 + 1) as usize;
        batches.swap(i, j);
    }

    let shape = 1.0 / DISPERSION;
    let mut values = Vec::with_capacity(n_cells * n_genes);
    for i in 0..n_cells {
        let mut rng = Philox::new(seed, 2 + i as u64);
        for g in 0..n_genes {
            let mu = base[g] * type_factor[(types[i], g)] * batch_factor[(batches[i], g)];
            let gamma = Gamma::new(shape, mu / shape).map_err(|e| Error::Sampler(e.to_string()))?;
            let lambda = gamma.sample(&mut rng);
            let count = if lambda > 0.0 {
                Poisson::new(lambda)
                    .map_err(|e| Error::Sampler(e.to_string()))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            values.push(count);
        }
    }
    let matrix = DMatrix::from_row_slice(n_cells, n_genes, &values);
    let names = |prefix: &str, v: &[usize]| -> Vec<String> { v.iter().map(|x| format!("{prefix}{x}")).collect() };
    let batch = LabelVector::with_vocab(batches.clone(), (0..n_batches).map(|b| format!("batch{b}")).collect())?;
    let celltype = LabelVector::with_vocab(types.clone(), (0..n_types).map(|t| format!("type{t}")).collect())?;
    ExpressionDataset::new(
        matrix,
        names("cell", &(0..n_cells).collect::<Vec<_>>()),
        names("gene", &(0..n_genes).collect::<Vec<_>>()),
        batch,
        Some(celltype),
    )
}
