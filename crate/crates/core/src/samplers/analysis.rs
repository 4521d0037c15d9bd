use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::sample_set::SampleSet;
use crate::energy::BoltzmannMachine;
use crate::error::{check_dim, Error, Result};

/// Sample averages `E[z_l]` and `E[z_l z_m]`. Spin sets are mapped to
/// binary first. The pair matrix is symmetric with `mean` on the diagonal.
pub fn negative_phase_moments(s: &SampleSet) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if s.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let n = s.n();
    let mut mean = DVector::zeros(n);
    let mut pair = DMatrix::zeros(n, n);
    let mut active = Vec::with_capacity(n);
    for row in s.binary_rows() {
        active.clear();
        active.extend((0..n).filter(|&l| row[l] == 1));
        for (i, &l) in active.iter().enumerate() {
            mean[l] += 1.0;
            for &m in &active[i + 1..] {
                pair[(l, m)] += 1.0;
            }
        }
    }
    let count = s.len() as f64;
    mean /= count;
    for l in 0..n {
        pair[(l, l)] = mean[l];
        for m in (l + 1)..n {
            let v = pair[(l, m)] / count;
            pair[(l, m)] = v;
            pair[(m, l)] = v;
        }
    }
    Ok((mean, pair))
}

/// Mean sample energy under `bm`: the sample-average estimator of `log Z`
/// used for parity reporting. It is not a consistent estimator (it returns
/// 0 for the flat machine, where `log Z = n ln 2`) and is never used in
/// gradients.
pub fn log_z_mean_energy_estimate(s: &SampleSet, bm: &BoltzmannMachine) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    check_dim(bm.n(), s.n(), "sample width")?;
    let mut total = 0.0;
    for row in s.binary_rows() {
        total += bm.energy_binary(&row)?;
    }
    Ok(total / s.len() as f64)
}

/// Linear fit of log empirical frequency against scaled energy.
#[derive(Clone, Debug, PartialEq)]
pub struct FidelityReport {
    pub slope: f64,
    pub intercept: f64,
    pub pearson_r: f64,
    pub n_distinct_states: usize,
    pub kt: f64,
}

pub const FIDELITY_MIN_COUNT: usize = 5;
pub const FIDELITY_MIN_STATES: usize = 10;

/// Regresses `ln(freq(z))` on `E(z)/kT` over states seen at least
/// [`FIDELITY_MIN_COUNT`] times. For Boltzmann samples at unit temperature
/// the slope is `-kT` and the intercept is `-log Z`.
pub fn boltzmann_fidelity(s: &SampleSet, bm: &BoltzmannMachine, kt: f64) -> Result<FidelityReport> {
    if !(kt > 0.0) {
        return Err(Error::InvalidArgument(format!("kT must be positive, got {kt}")));
    }
    check_dim(bm.n(), s.n(), "sample width")?;
    if s.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mut counts: BTreeMap<Vec<i8>, usize> = BTreeMap::new();
    for row in s.binary_rows() {
        *counts.entry(row).or_insert(0) += 1;
    }
    let total = s.len() as f64;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (state, &c) in &counts {
        if c >= FIDELITY_MIN_COUNT {
            xs.push(bm.energy_binary(state)? / kt);
            ys.push((c as f64 / total).ln());
        }
    }
    if xs.len() < FIDELITY_MIN_STATES {
        return Err(Error::TooFewStates(format!(
            "{} states occur at least {FIDELITY_MIN_COUNT} times, need {FIDELITY_MIN_STATES}",
            xs.len()
        )));
    }
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let spread =
        xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if spread <= 1e-12 * (1.0 + mx.abs()) {
        return Err(Error::TooFewStates(
            "too few distinct energies among qualifying states".into(),
        ));
    }
    let slope = sxy / sxx;
    let pearson_r = if syy > 0.0 {
        (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(FidelityReport {
        slope,
        intercept: my - slope * mx,
        pearson_r,
        n_distinct_states: xs.len(),
        kt,
    })
}

/// Total variation distance between the empirical state distribution of a
/// binary sample set and a reference distribution indexed as in
/// [`crate::energy::state_bits`].
pub fn total_variation(s: &SampleSet, reference: &[f64]) -> Result<f64> {
    check_dim(1usize << s.n(), reference.len(), "reference distribution size")?;
    if s.is_empty() {
        return Err(Error::Empty("sample set"));
    }
    let mut counts = vec![0usize; reference.len()];
    for row in s.binary_rows() {
        let idx = row.iter().enumerate().map(|(l, &v)| (v as usize) << l).sum::<usize>();
        counts[idx] += 1;
    }
    let total = s.len() as f64;
    Ok(0.5
        * counts
            .iter()
            .zip(reference)
            .map(|(&c, &p)| (c as f64 / total - p).abs())
            .sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::energy::{exact_enumeration, log_partition};
    use crate::rng::Philox;
    use crate::samplers::{exact_sampler, gibbs_sample, GibbsConfig, SampleMeta, VariableKind};

    fn set(n: usize, rows: &[i8]) -> SampleSet {
        let count = rows.len() / n;
        SampleSet::new(
            n,
            rows.to_vec(),
            vec![0.0; count],
            VariableKind::Binary,
            SampleMeta {
                seed: 0,
                sampler_id: "test".into(),
                sweeps_per_sample: 0,
                burn_in: 0,
                temperature: 1.0,
            },
        )
        .unwrap()
    }

    #[test]
    fn single_sample_moments() {
        let (mean, pair) = negative_phase_moments(&set(3, &[1, 0, 1])).unwrap();
        assert_eq!(mean.as_slice(), &[1.0, 0.0, 1.0]);
        assert_eq!(pair[(0, 2)], 1.0);
        assert_eq!(pair[(0, 1)], 0.0);
    }

    #[test]
    fn two_sample_moments() {
        let (mean, pair) = negative_phase_moments(&set(2, &[0, 0, 1, 1])).unwrap();
        assert_eq!(mean.as_slice(), &[0.5, 0.5]);
        assert_eq!(pair[(0, 1)], 0.5);
        assert_eq!(pair[(1, 0)], 0.5);
    }

    #[test]
    fn exact_moments_within_three_standard_errors() {
        let mut rng = Philox::new(6, 6);
        let bm = BoltzmannMachine::random_init(6, 0, 0.5, &mut rng).unwrap();
        let e = exact_enumeration(&bm).unwrap();
        let draws = 50_000;
        let (mean, pair) = negative_phase_moments(&exact_sampler(&bm, draws, 1).unwrap()).unwrap();
        for l in 0..6 {
            for m in 0..6 {
                let p = e.pair[(l, m)];
                let se = (p * (1.0 - p) / draws as f64).sqrt().max(1e-12);
                assert!((pair[(l, m)] - p).abs() < 3.5 * se, "({l},{m})");
            }
            let p = e.mean[l];
            assert!((mean[l] - p).abs() < 3.5 * (p * (1.0 - p) / draws as f64).sqrt());
        }
    }

    #[test]
    fn mean_energy_estimator_cases() {
        let flat = BoltzmannMachine::zeros(4, 0).unwrap();
        let s = exact_sampler(&flat, 100, 3).unwrap();
        assert_eq!(log_z_mean_energy_estimate(&s, &flat).unwrap(), 0.0);
        assert!((log_partition(&flat).unwrap() - 4.0 * 2f64.ln()).abs() < 1e-12);

        let mut rng = Philox::new(9, 9);
        let bm = BoltzmannMachine::random_init(3, 0, 1.0, &mut rng).unwrap();
        let one = set(3, &[1, 1, 0]);
        let e = bm.energy_binary(&[1, 1, 0]).unwrap();
        assert_eq!(log_z_mean_energy_estimate(&one, &bm).unwrap(), e);
    }

    #[test]
    fn fidelity_on_exact_samples() {
        let mut rng = Philox::new(10, 0);
        let bm = BoltzmannMachine::random_init(10, 0, 0.5, &mut rng).unwrap();
        let s = exact_sampler(&bm, 500_000, 4).unwrap();
        let r = boltzmann_fidelity(&s, &bm, 1.0).unwrap();
        assert!(r.slope >= -1.05 && r.slope <= -0.95, "slope {}", r.slope);
        assert!(r.pearson_r <= -0.99, "r {}", r.pearson_r);
        let r2 = boltzmann_fidelity(&s, &bm, 2.0).unwrap();
        assert!((r2.slope - 2.0 * r.slope).abs() < 1e-9);
    }

    #[test]
    fn fidelity_on_gibbs_samples() {
        let mut rng = Philox::new(10, 0);
        let bm = BoltzmannMachine::random_init(10, 0, 0.5, &mut rng).unwrap();
        let cfg = GibbsConfig {
            n_samples: 500_000,
            n_sweeps: 1,
            burn_in: 100,
            temperature: 1.0,
            n_chains: 8,
        };
        let s = gibbs_sample(&bm, &cfg, 4).unwrap();
        let r = boltzmann_fidelity(&s, &bm, 1.0).unwrap();
        assert!(r.pearson_r <= -0.95, "r {}", r.pearson_r);
    }

    #[test]
    fn fidelity_rejects_flat_machine() {
        let bm = BoltzmannMachine::zeros(6, 0).unwrap();
        let s = exact_sampler(&bm, 50_000, 1).unwrap();
        let err = boltzmann_fidelity(&s, &bm, 1.0).unwrap_err();
        assert!(err.to_string().contains("too few distinct energies"));
    }

    #[test]
    fn empty_inputs_error() {
        let bm = BoltzmannMachine::zeros(2, 0).unwrap();
        let empty = SampleSet::new(
            2,
            vec![],
            vec![],
            VariableKind::Binary,
            SampleMeta {
                seed: 0,
                sampler_id: "x".into(),
                sweeps_per_sample: 0,
                burn_in: 0,
                temperature: 1.0,
            },
        )
        .unwrap();
        assert!(negative_phase_moments(&empty).is_err());
        assert!(log_z_mean_energy_estimate(&empty, &bm).is_err());
    }
}
