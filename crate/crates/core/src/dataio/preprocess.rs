use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::ExpressionDataset;
use crate::error::{Error, Result};
use crate::rng::Philox;

pub const DEFAULT_TARGET_SUM: f64 = 10_000.0;
pub const DEFAULT_N_TOP: usize = 4000;
pub const DEFAULT_MIN_GENES: usize = 200;
pub const DEFAULT_MIN_COUNTS: f64 = 500.0;

/// Library-size scaling to `target_sum` per cell, without the log.
pub fn scale_rows(x: &DMatrix<f64>, target_sum: f64) -> Result<DMatrix<f64>> {
    if !(target_sum > 0.0) || !target_sum.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "target_sum must be positive, got {target_sum}"
        )));
    }
    let mut out = x.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        let total: f64 = row.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(format!("cell {i} has zero total counts")));
        }
        row *= target_sum / total;
    }
    Ok(out)
}

impl ExpressionDataset {
    /// Scales every cell to `target_sum` total counts, then applies ln(1+x).
    pub fn normalize_log1p(&self, target_sum: f64) -> Result<Self> {
        let mut state = self.state();
        if state.normalized || state.logged {
            return Err(Error::Preprocessing("dataset is already normalized"));
        }
        let scaled = scale_rows(self.matrix(), target_sum)?;
        state.normalized = true;
        state.logged = true;
        let selected = self.selected_genes().map(<[usize]>::to_vec);
        Ok(self.with_matrix(scaled.map(f64::ln_1p)).with_state(state, selected))
    }

    /// Keeps the `n_top` genes of largest variance, in their original order.
    /// Equal variances rank the lower gene index first.
    pub fn select_hvg(&self, n_top: usize) -> Result<Self> {
        let mut state = self.state();
        if !(state.normalized && state.logged) {
            return Err(Error::Preprocessing("select_hvg needs normalize_log1p first"));
        }
        if state.hvg_selected {
            return Err(Error::Preprocessing("highly variable genes are already selected"));
        }
        if n_top == 0 || n_top > self.n_genes() {
            return Err(Error::InvalidArgument(format!(
                "n_top must be in 1..={}, got {n_top}",
                self.n_genes()
            )));
        }
        let mut keep = top_variance(self.matrix(), n_top);
        keep.sort_unstable();
        let original: Vec<usize> = match self.selected_genes() {
            Some(prev) => keep.iter().map(|&j| prev[j]).collect(),
            None => keep.clone(),
        };
        state.hvg_selected = true;
        Ok(self.subset_genes(&keep).with_state(state, Some(original)))
    }

    /// Drops cells with fewer than `min_genes` detected genes or fewer
    /// than `min_counts` total counts. Only valid on raw counts.
    pub fn filter_cells(&self, min_genes: usize, min_counts: f64) -> Result<Self> {
        let mut state = self.state();
        if state.normalized || state.logged {
            return Err(Error::Preprocessing("filter_cells must run before normalization"));
        }
        let x = self.matrix();
        let keep: Vec<usize> = (0..self.n_cells())
            .filter(|&i| {
                let row = x.row(i);
                row.iter().filter(|&&v| v > 0.0).count() >= min_genes && row.sum() >= min_counts
            })
            .collect();
        if keep.is_empty() {
            return Err(Error::Preprocessing("filtering removed every cell"));
        }
        state.filtered = true;
        let selected = self.selected_genes().map(<[usize]>::to_vec);
        Ok(self.subset_cells(&keep)?.with_state(state, selected))
    }

    /// Splits cells into train and validation sets. Within each batch the
    /// cells are shuffled and `round(val_fraction * n_b)` go to validation.
    /// Returned index lists are sorted.
    pub fn split_indices(&self, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
        if !(val_fraction > 0.0 && val_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "val_fraction must lie strictly between 0 and 1, got {val_fraction}"
            )));
        }
        if self.n_cells() < 2 {
            return Err(Error::InvalidArgument("splitting needs at least two cells".into()));
        }
        let labels = self.batch().labels();
        let mut train = Vec::new();
        let mut val = Vec::new();
        for b in 0..self.batch().n_classes() {
            let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == b).collect();
            members.shuffle(&mut Philox::new(seed, b as u64));
            let n_val = (val_fraction * members.len() as f64).round() as usize;
            val.extend_from_slice(&members[..n_val]);
            train.extend_from_slice(&members[n_val..]);
        }
        if val.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "val_fraction {val_fraction} leaves the validation set empty"
            )));
        }
        if train.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "val_fraction {val_fraction} leaves the training set empty"
            )));
        }
        train.sort_unstable();
        val.sort_unstable();
        Ok((train, val))
    }

    /// [`split_indices`](Self::split_indices) applied to the dataset.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        let (train, val) = self.split_indices(val_fraction, seed)?;
        Ok((self.subset_cells(&train)?, self.subset_cells(&val)?))
    }
}

/// Population variance of every column.
pub fn column_variances(x: &DMatrix<f64>) -> Vec<f64> {
    let n = x.nrows() as f64;
    x.column_iter()
        .map(|c| {
            let mean = c.sum() / n;
            c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
        })
        .collect()
}

fn top_variance(x: &DMatrix<f64>, n_top: usize) -> Vec<usize> {
    let var = column_variances(x);
    let mut order: Vec<usize> = (0..var.len()).collect();
    order.sort_by(|&a, &b| var[b].total_cmp(&var[a]).then(a.cmp(&b)));
    order.truncate(n_top);
    order
}
