use nalgebra::DMatrix;

use super::LabelVector;
use crate::error::{Error, Result};
use crate::rng::Philox;

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub labels: LabelVector,
    /// Raw assignments of the best run, in `0..K`.
    pub assignments: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    /// Inertia at each assignment step, one list per restart.
    pub inertia_history: Vec<Vec<f64>>,
}

const MAX_ITER: usize = 300;

fn sq_dist(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, k: usize) -> f64 {
    x.row(i)
        .iter()
        .zip(c.row(k).iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

fn plus_plus_init(x: &DMatrix<f64>, k: usize, rng: &mut Philox) -> DMatrix<f64> {
    let n = x.nrows();
    let mut c = DMatrix::zeros(k, x.ncols());
    c.set_row(0, &x.row(rng.below(n as u64) as usize));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x, i, &c, 0)).collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.uniform() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &v) in d2.iter().enumerate() {
                acc += v;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.below(n as u64) as usize
        };
        c.set_row(j, &x.row(pick));
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(x, i, &c, j));
        }
    }
    c
}

fn lloyd(x: &DMatrix<f64>, mut c: DMatrix<f64>) -> (Vec<usize>, DMatrix<f64>, f64, Vec<f64>) {
    let (n, d, k) = (x.nrows(), x.ncols(), c.nrows());
    let mut assign = vec![usize::MAX; n];
    let mut history = Vec::new();
    for _ in 0..MAX_ITER {
        let mut changed = false;
        let mut inertia = 0.0;
        let mut dist = vec![0.0; n];
        for i in 0..n {
            let (best, bd) = (0..k)
                .map(|j| (j, sq_dist(x, i, &c, j)))
                .fold((0, f64::INFINITY), |b, (j, v)| if v < b.1 { (j, v) } else { b });
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
            dist[i] = bd;
            inertia += bd;
        }
        history.push(inertia);
        if !changed {
            break;
        }
        let mut sums = DMatrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            let mut row = sums.row_mut(assign[i]);
            row += x.row(i);
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mean = sums.row(j) / counts[j] as f64;
                c.set_row(j, &mean);
            } else {
                // Move an empty centroid onto the worst-served point.
                let far = (0..n).fold(0, |b, i| if dist[i] > dist[b] { i } else { b });
                c.set_row(j, &x.row(far));
                dist[far] = 0.0;
            }
        }
    }
    let inertia = *history.last().unwrap();
    (assign, c, inertia, history)
}

/// Lloyd's algorithm from k-means++ seeding, best of `n_restarts` runs by
/// inertia (ties to the earlier run). Restart `r` draws from Philox stream
/// `r` under key `seed`.
pub fn kmeans(x: &DMatrix<f64>, k: usize, n_restarts: usize, seed: u64) -> Result<KMeansResult> {
    let n = x.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("K = {k} must lie in 1..={n}")));
    }
    if n_restarts == 0 {
        return Err(Error::InvalidArgument("n_restarts must be positive".into()));
    }
    let mut best: Option<(Vec<usize>, DMatrix<f64>, f64)> = None;
    let mut histories = Vec::with_capacity(n_restarts);
    for r in 0..n_restarts {
        let mut rng = Philox::new(seed, r as u64);
        let init = plus_plus_init(x, k, &mut rng);
        let (assign, c, inertia, history) = lloyd(x, init);
        histories.push(history);
        if best.as_ref().map_or(true, |b| inertia < b.2) {
            best = Some((assign, c, inertia));
        }
    }
    let (assignments, centroids, inertia) = best.unwrap();
    Ok(KMeansResult {
        labels: LabelVector::from_codes(&assignments)?,
        assignments,
        centroids,
        inertia,
        inertia_history: histories,
    })
}
