use nalgebra::DMatrix;
use rand::seq::SliceRandom;

use super::LabelVector;
use crate::error::{check_dim, Error, Result};
use crate::rng::Philox;

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationScores {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Out-of-fold prediction for every sample.
    pub predictions: Vec<usize>,
    /// Fold index of every sample.
    pub folds: Vec<usize>,
}

/// Stratified fold assignment: each class is shuffled and dealt round-robin.
pub fn stratified_folds(labels: &LabelVector, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least two folds".into()));
    }
    let counts = labels.counts();
    if let Some(c) = counts.iter().position(|&c| c < folds) {
        return Err(Error::InvalidArgument(format!(
            "class `{}` has {} members, fewer than {folds} folds",
            labels.vocab()[c],
            counts[c]
        )));
    }
    let mut rng = Philox::new(seed, 0);
    let mut assignment = vec![0; labels.len()];
    for class in 0..labels.n_classes() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels.labels()[i] == class).collect();
        members.shuffle(&mut rng);
        for (r, &i) in members.iter().enumerate() {
            assignment[i] = r % folds;
        }
    }
    Ok(assignment)
}

/// Macro-averaged scores from true and predicted labels in `0..k`.
/// Classes never predicted get precision 0.
pub fn macro_scores(truth: &[usize], pred: &[usize], k: usize) -> (f64, f64, f64, f64) {
    let mut tp = vec![0.0; k];
    let mut predicted = vec![0.0; k];
    let mut actual = vec![0.0; k];
    for (&t, &p) in truth.iter().zip(pred) {
        actual[t] += 1.0;
        predicted[p] += 1.0;
        if t == p {
            tp[t] += 1.0;
        }
    }
    let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
    let mut sums = (0.0, 0.0, 0.0);
    for c in 0..k {
        let p = ratio(tp[c], predicted[c]);
        let r = ratio(tp[c], actual[c]);
        sums.0 += p;
        sums.1 += r;
        sums.2 += ratio(2.0 * p * r, p + r);
    }
    let kf = k as f64;
    let acc = tp.iter().sum::<f64>() / truth.len() as f64;
    (acc, sums.0 / kf, sums.1 / kf, sums.2 / kf)
}

/// Majority vote of the `k` nearest training rows. Ties go to the tied
/// class whose closest member is nearest.
fn predict(x: &DMatrix<f64>, train: &[usize], labels: &[usize], i: usize, k: usize, n_classes: usize) -> usize {
    let mut d: Vec<(f64, usize)> = train
        .iter()
        .map(|&j| {
            let s: f64 = x
                .row(i)
                .iter()
                .zip(x.row(j).iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (s, j)
        })
        .collect();
    let k = k.min(d.len());
    d.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.truncate(k);
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut votes = vec![0usize; n_classes];
    for &(_, j) in &d {
        votes[labels[j]] += 1;
    }
    let top = *votes.iter().max().unwrap();
    d.iter().map(|&(_, j)| labels[j]).find(|&c| votes[c] == top).unwrap()
}

/// Stratified `folds`-fold cross-validated kNN classification. Every
/// sample is predicted once, by the model trained on the other folds, and
/// the scores are computed from the pooled predictions.
pub fn classify_knn_cv(
    x: &DMatrix<f64>,
    labels: &LabelVector,
    k_neighbors: usize,
    folds: usize,
    seed: u64,
) -> Result<ClassificationScores> {
    check_dim(x.nrows(), labels.len(), "label count")?;
    if k_neighbors == 0 {
        return Err(Error::InvalidArgument("k_neighbors must be positive".into()));
    }
    let fold_of = stratified_folds(labels, folds, seed)?;
    let y = labels.labels();
    let mut predictions = vec![0; x.nrows()];
    for f in 0..folds {
        let train: Vec<usize> = (0..x.nrows()).filter(|&i| fold_of[i] != f).collect();
        for i in (0..x.nrows()).filter(|&i| fold_of[i] == f) {
            predictions[i] = predict(x, &train, y, i, k_neighbors, labels.n_classes());
        }
    }
    let (accuracy, macro_precision, macro_recall, macro_f1) = macro_scores(y, &predictions, labels.n_classes());
    Ok(ClassificationScores {
        accuracy,
        macro_precision,
        macro_recall,
        macro_f1,
        predictions,
        folds: fold_of,
    })
}
