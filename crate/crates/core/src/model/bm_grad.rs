use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Result};

/// First and second moments `E[z_l]`, `E[z_l z_m]` of a latent law.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub mean: DVector<f64>,
    pub pair: DMatrix<f64>,
}

impl Moments {
    /// Averages over the rows of `z` (relaxed or binary).
    pub fn from_rows(z: &DMatrix<f64>) -> Self {
        let m = z.nrows().max(1) as f64;
        let mean = DVector::from_iterator(z.ncols(), z.column_iter().map(|c| c.sum() / m));
        let pair = z.transpose() * z / m;
        Self { mean, pair }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `∂KL/∂h = E_q[z] - E_p[z]` and `∂KL/∂W = E_q[zzᵀ] - E_p[zzᵀ]`, the
/// latter symmetrized with zero diagonal.
pub fn bm_gradient(positive: &Moments, negative: &Moments) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = positive.dim();
    check_dim(n, negative.dim(), "moment dimension")?;
    check_dim(n, positive.pair.nrows(), "positive pair rows")?;
    check_dim(n, negative.pair.nrows(), "negative pair rows")?;
    let grad_h = &positive.mean - &negative.mean;
    let diff = &positive.pair - &negative.pair;
    Ok((grad_h, crate::energy::symmetrize(&diff)))
}
