//! Partition agreement scores. Every score is exactly 1 for equivalent
//! partitions (identical up to renaming), which also settles the 0/0 cases.

use statrs::function::gamma::ln_gamma;

use super::LabelVector;
use crate::error::{check_dim, Result};

struct Contingency {
    n: usize,
    table: Vec<Vec<usize>>,
    rows: Vec<usize>,
    cols: Vec<usize>,
}

impl Contingency {
    fn new(a: &LabelVector, b: &LabelVector) -> Result<Self> {
        check_dim(a.len(), b.len(), "label vector length")?;
        let mut table = vec![vec![0usize; b.n_classes()]; a.n_classes()];
        for (&x, &y) in a.labels().iter().zip(b.labels()) {
            table[x][y] += 1;
        }
        Ok(Self {
            n: a.len(),
            rows: a.counts(),
            cols: b.counts(),
            table,
        })
    }

    /// Every row and every column has exactly one nonzero cell.
    fn equivalent(&self) -> bool {
        let rows_ok = self.table.iter().all(|r| r.iter().filter(|&&v| v > 0).count() == 1);
        let cols_ok = (0..self.cols.len()).all(|j| self.table.iter().filter(|r| r[j] > 0).count() == 1);
        rows_ok && cols_ok
    }

    fn cells(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        self.table
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().map(move |(j, &v)| (i, j, v)))
    }
}

fn pairs(k: usize) -> f64 {
    let k = k as f64;
    k * (k - 1.0) / 2.0
}

fn entropy(counts: &[usize], n: usize) -> f64 {
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

fn mutual_info(c: &Contingency) -> f64 {
    let n = c.n as f64;
    c.cells()
        .filter(|&(_, _, v)| v > 0)
        .map(|(i, j, v)| {
            let v = v as f64;
            v / n * (n * v / (c.rows[i] as f64 * c.cols[j] as f64)).ln()
        })
        .sum()
}

/// Expected mutual information of two random partitions with the same
/// cluster sizes (hypergeometric model).
fn expected_mutual_info(c: &Contingency) -> f64 {
    let n = c.n;
    let nf = n as f64;
    let lf = |k: usize| ln_gamma(k as f64 + 1.0);
    let ln_n_fact = lf(n);
    let mut emi = 0.0;
    for &a in &c.rows {
        for &b in &c.cols {
            let lo = (a + b).saturating_sub(n).max(1);
            let hi = a.min(b);
            let fixed = lf(a) + lf(b) + lf(n - a) + lf(n - b) - ln_n_fact;
            for k in lo..=hi {
                let kf = k as f64;
                let ln_p = fixed - lf(k) - lf(a - k) - lf(b - k) - lf(n + k - a - b);
                emi += kf / nf * (nf * kf / (a as f64 * b as f64)).ln() * ln_p.exp();
            }
        }
    }
    emi
}

/// Adjusted Rand index.
pub fn ari(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.equivalent() {
        return Ok(1.0);
    }
    let index: f64 = c.cells().map(|(_, _, v)| pairs(v)).sum();
    let sa: f64 = c.rows.iter().map(|&v| pairs(v)).sum();
    let sb: f64 = c.cols.iter().map(|&v| pairs(v)).sum();
    let expected = sa * sb / pairs(c.n);
    let max = 0.5 * (sa + sb);
    Ok((index - expected) / (max - expected))
}

/// Mutual information normalized by the geometric mean of the entropies;
/// 0 when one entropy vanishes and the partitions differ.
pub fn nmi(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.equivalent() {
        return Ok(1.0);
    }
    let (ha, hb) = (entropy(&c.rows, c.n), entropy(&c.cols, c.n));
    if ha == 0.0 || hb == 0.0 {
        return Ok(0.0);
    }
    Ok(mutual_info(&c) / (ha * hb).sqrt())
}

/// Adjusted mutual information, `(I - E[I]) / (max(H(a), H(b)) - E[I])`.
pub fn ami(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.equivalent() {
        return Ok(1.0);
    }
    let (ha, hb) = (entropy(&c.rows, c.n), entropy(&c.cols, c.n));
    let emi = expected_mutual_info(&c);
    let den = ha.max(hb) - emi;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((mutual_info(&c) - emi) / den)
}

/// Fowlkes-Mallows index over sample pairs.
pub fn fmi(a: &LabelVector, b: &LabelVector) -> Result<f64> {
    let c = Contingency::new(a, b)?;
    if c.equivalent() {
        return Ok(1.0);
    }
    let tp: f64 = c.cells().map(|(_, _, v)| pairs(v)).sum();
    let sa: f64 = c.rows.iter().map(|&v| pairs(v)).sum();
    let sb: f64 = c.cols.iter().map(|&v| pairs(v)).sum();
    if tp == 0.0 {
        return Ok(0.0);
    }
    Ok(tp / (sa * sb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Philox;

    fn lv(v: &[usize]) -> LabelVector {
        LabelVector::from_codes(v).unwrap()
    }

    fn random_labels(n: usize, k: u64, rng: &mut Philox) -> LabelVector {
        let v: Vec<usize> = (0..n).map(|_| rng.below(k) as usize).collect();
        lv(&v)
    }

    #[test]
    fn identical_and_permuted() {
        let a = lv(&[0, 0, 1, 1, 2, 2, 2]);
        let b = lv(&[5, 5, 3, 3, 9, 9, 9]);
        for f in [ari, nmi, ami, fmi] {
            assert_eq!(f(&a, &a).unwrap(), 1.0);
            assert_eq!(f(&a, &b).unwrap(), 1.0);
        }
        let one = lv(&[0; 5]);
        let singletons = lv(&[0, 1, 2, 3, 4]);
        for f in [ari, nmi, ami, fmi] {
            assert_eq!(f(&one, &one).unwrap(), 1.0);
            assert_eq!(f(&singletons, &singletons).unwrap(), 1.0);
        }
    }

    #[test]
    fn single_class_against_many() {
        let one = lv(&[0; 6]);
        let many = lv(&[0, 1, 2, 0, 1, 2]);
        assert_eq!(nmi(&one, &many).unwrap(), 0.0);
        assert_eq!(ari(&one, &many).unwrap(), 0.0);
        assert!(ami(&one, &many).unwrap().abs() < 1e-12);
    }

    #[test]
    fn known_values() {
        // Hand-worked: a = {0,1,2},{3,4,5}; b = {0,1},{2,3},{4,5}.
        let a = lv(&[0, 0, 0, 1, 1, 1]);
        let b = lv(&[0, 0, 1, 1, 2, 2]);
        // index = 2, sa = 6, sb = 3, expected = 18/15, max = 4.5
        assert!((ari(&a, &b).unwrap() - (2.0 - 1.2) / (4.5 - 1.2)).abs() < 1e-15);
        assert!((fmi(&a, &b).unwrap() - 2.0 / 18f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn symmetric_and_label_invariant() {
        let mut rng = Philox::new(3, 0);
        for _ in 0..10 {
            let a = random_labels(60, 4, &mut rng);
            let b = random_labels(60, 3, &mut rng);
            let relabeled = lv(&a.labels().iter().map(|&x| 10 - x).collect::<Vec<_>>());
            for f in [ari, nmi, ami, fmi] {
                assert!((f(&a, &b).unwrap() - f(&b, &a).unwrap()).abs() < 1e-12);
                assert!((f(&a, &b).unwrap() - f(&relabeled, &b).unwrap()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn random_labelings_are_near_zero() {
        let mut rng = Philox::new(4, 0);
        let mut total_ari = 0.0;
        let mut total_ami = 0.0;
        for _ in 0..50 {
            let a = random_labels(300, 5, &mut rng);
            let b = random_labels(300, 5, &mut rng);
            total_ari += ari(&a, &b).unwrap();
            total_ami += ami(&a, &b).unwrap();
        }
        assert!((total_ari / 50.0).abs() < 0.01);
        assert!((total_ami / 50.0).abs() < 0.01);
    }

    #[test]
    fn length_mismatch() {
        assert!(ari(&lv(&[0, 1]), &lv(&[0])).is_err());
    }
}
