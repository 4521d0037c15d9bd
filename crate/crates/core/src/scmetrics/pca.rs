use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::LabelVector;
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    pub mean: DVector<f64>,
    /// Loadings, one column per component (`d × k`).
    pub components: DMatrix<f64>,
    /// Component variances, non-increasing.
    pub explained_variance: DVector<f64>,
    /// Centered data projected on the components (`n × k`).
    pub scores: DMatrix<f64>,
}

/// Eigenvalues below this fraction of the largest are treated as null.
const NULL_TOL: f64 = 1e-12;

/// Principal components of the rows of `x`. Directions with zero variance
/// are dropped, so fewer than `n_components` may be returned. Each
/// component's largest-magnitude loading is positive.
pub fn pca(x: &DMatrix<f64>, n_components: usize) -> Result<Pca> {
    let (n, d) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::InvalidArgument("PCA needs at least two rows".into()));
    }
    if n_components == 0 || n_components > n.min(d) {
        return Err(Error::InvalidArgument(format!(
            "n_components = {n_components} must lie in 1..={}",
            n.min(d)
        )));
    }
    let mean = DVector::from_iterator(d, x.column_iter().map(|c| c.mean()));
    let mut xc = x.clone();
    for mut row in xc.row_iter_mut() {
        row -= mean.transpose();
    }
    let dof = (n - 1) as f64;

    // Eigen-decompose whichever of the covariance or the Gram matrix is
    // smaller; both share the nonzero spectrum.
    let (values, vectors) = if d <= n {
        let eig = SymmetricEigen::new(xc.transpose() * &xc / dof);
        (eig.eigenvalues, eig.eigenvectors)
    } else {
        let eig = SymmetricEigen::new(&xc * xc.transpose() / dof);
        let mut loadings = DMatrix::zeros(d, n);
        for (j, &lam) in eig.eigenvalues.iter().enumerate() {
            if lam > 0.0 {
                let v = xc.transpose() * eig.eigenvectors.column(j) / (lam * dof).sqrt();
                loadings.set_column(j, &v);
            }
        }
        (eig.eigenvalues, loadings)
    };

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    let top = values[order[0]].max(0.0);
    let keep: Vec<usize> = order
        .into_iter()
        .filter(|&j| values[j] > NULL_TOL * top && values[j] > 0.0)
        .take(n_components)
        .collect();

    let mut components = DMatrix::zeros(d, keep.len());
    for (c, &j) in keep.iter().enumerate() {
        let mut v = vectors.column(j).into_owned();
        let pivot = v.iter().enumerate().fold(
            (0, 0.0f64),
            |best, (i, &x)| if x.abs() > best.1.abs() { (i, x) } else { best },
        );
        if pivot.1 < 0.0 {
            v.neg_mut();
        }
        components.set_column(c, &v);
    }
    let explained_variance = DVector::from_iterator(keep.len(), keep.iter().map(|&j| values[j]));
    let scores = &xc * &components;
    Ok(Pca {
        mean,
        components,
        explained_variance,
        scores,
    })
}

/// Variance-weighted mean over components of the R² of regressing each
/// score column on the batch one-hot design (with intercept).
pub fn pcr_r2(scores: &DMatrix<f64>, explained_variance: &DVector<f64>, batch: &LabelVector) -> Result<f64> {
    check_dim(scores.ncols(), explained_variance.len(), "explained variance length")?;
    check_dim(scores.nrows(), batch.len(), "batch label count")?;
    let b = batch.n_classes();
    if b < 2 || b >= scores.nrows() {
        return Err(Error::InvalidArgument(format!(
            "batch design is rank deficient ({b} batches, {} rows)",
            scores.nrows()
        )));
    }
    let counts = batch.counts();
    let mut num = 0.0;
    let mut den = 0.0;
    for (j, col) in scores.column_iter().enumerate() {
        // With a categorical design the fitted values are the group means.
        let mut sums = vec![0.0; b];
        for (&l, &v) in batch.labels().iter().zip(col.iter()) {
            sums[l] += v;
        }
        let grand = col.mean();
        let ss_tot: f64 = col.iter().map(|v| (v - grand).powi(2)).sum();
        if ss_tot == 0.0 {
            continue;
        }
        let ss_between: f64 = (0..b)
            .map(|g| counts[g] as f64 * (sums[g] / counts[g] as f64 - grand).powi(2))
            .sum();
        let w = explained_variance[j];
        num += w * (ss_between / ss_tot).clamp(0.0, 1.0);
        den += w;
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("no component carries variance".into()));
    }
    Ok(num / den)
}
