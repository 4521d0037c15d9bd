use nalgebra::{DMatrix, DVector};

use super::bm::{from_upper_triangle, BoltzmannMachine};
use crate::error::{check_dim, Error, Result};

/// Spin model `H(σ) = -Σ_{i<j} J_ij σ_i σ_j - mu Σ_i field_i σ_i` over
/// `σ ∈ {-1,+1}^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingProblem {
    j: DMatrix<f64>,
    field: DVector<f64>,
    mu: f64,
}

impl IsingProblem {
    pub fn new(j: DMatrix<f64>, field: DVector<f64>, mu: f64) -> Result<Self> {
        let n = field.len();
        check_dim(n, j.nrows(), "coupling rows")?;
        check_dim(n, j.ncols(), "coupling cols")?;
        if !mu.is_finite() || j.iter().chain(field.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("ising parameters"));
        }
        for a in 0..n {
            if j[(a, a)] != 0.0 {
                return Err(Error::InvalidArgument(format!("ising diagonal entry {a} is nonzero")));
            }
            for b in (a + 1)..n {
                if j[(a, b)] != j[(b, a)] {
                    return Err(Error::InvalidArgument(format!(
                        "ising couplings not symmetric at ({a},{b})"
                    )));
                }
            }
        }
        Ok(Self { j, field, mu })
    }

    /// Builds a problem from the strict upper triangle (row-major) and field.
    pub fn from_upper(n: usize, upper: &[f64], field: &[f64], mu: f64) -> Result<Self> {
        check_dim(n, field.len(), "field length")?;
        Self::new(from_upper_triangle(n, upper)?, DVector::from_row_slice(field), mu)
    }

    pub fn n_spins(&self) -> usize {
        self.field.len()
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.j
    }

    pub fn field(&self) -> &DVector<f64> {
        &self.field
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn energy(&self, sigma: &[i8]) -> Result<f64> {
        check_dim(self.n_spins(), sigma.len(), "spin vector length")?;
        if sigma.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArgument("spin entries must be -1 or +1".into()));
        }
        Ok(self.energy_unchecked(sigma))
    }

    pub(crate) fn energy_unchecked(&self, sigma: &[i8]) -> f64 {
        let n = self.n_spins();
        let mut pair = 0.0;
        let mut lin = 0.0;
        for a in 0..n {
            let sa = f64::from(sigma[a]);
            lin += self.field[a] * sa;
            let col = self.j.column(a);
            let mut acc = 0.0;
            for b in (a + 1)..n {
                acc += col[b] * f64::from(sigma[b]);
            }
            pair += sa * acc;
        }
        -pair - self.mu * lin
    }

    /// Effective field on spin `a`: `Σ_b J_ab σ_b + mu field_a`.
    /// Flipping `σ_a` changes the energy by `2 σ_a · local_field(a)`.
    pub(crate) fn local_field(&self, a: usize, sigma: &[i8]) -> f64 {
        let col = self.j.column(a);
        let mut acc = self.mu * self.field[a];
        for (b, &s) in sigma.iter().enumerate() {
            acc += col[b] * f64::from(s);
        }
        acc
    }
}

/// Algorithm-2 packing of a Boltzmann machine into an `(n+1)×(n+1)` matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct PackedIsingMatrix {
    matrix: DMatrix<f64>,
}

impl PackedIsingMatrix {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Recovers `(W, h)` from the packed blocks.
    pub fn unpack(&self) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.matrix.nrows() - 1;
        let w = self.matrix.view((0, 0), (n, n)).into_owned();
        let h = DVector::from_fn(n, |r, _| self.matrix[(r, n)]);
        (w, h)
    }
}

/// Copies `W` into the leading block, the bias into the last row and
/// column, and zeroes the diagonal. No change of variables is applied.
pub fn pack_ising(bm: &BoltzmannMachine) -> PackedIsingMatrix {
    let n = bm.n();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(bm.couplings());
    for r in 0..n {
        m[(r, n)] = bm.biases()[r];
        m[(n, r)] = bm.biases()[r];
    }
    m.fill_diagonal(0.0);
    PackedIsingMatrix { matrix: m }
}

/// Exact change of variables `σ = 2z - 1`.
///
/// Returns `(problem, offset)` with `bm.energy(z) == problem.energy(2z-1) + offset`
/// for every binary `z`.
pub fn bm_to_spin_model(bm: &BoltzmannMachine) -> (IsingProblem, f64) {
    let n = bm.n();
    let w = bm.couplings();
    let h = bm.biases();
    let j = w.map(|v| -v / 4.0);
    let mut field = DVector::zeros(n);
    let mut offset = 0.0;
    for l in 0..n {
        let row_sum: f64 = (0..n).filter(|&m| m != l).map(|m| w[(l, m)]).sum();
        field[l] = -(h[l] / 2.0 + row_sum / 4.0);
        offset += h[l] / 2.0;
        for m in (l + 1)..n {
            offset += w[(l, m)] / 4.0;
        }
    }
    let problem = IsingProblem::new(j, field, 1.0).expect("derived from a valid machine");
    (problem, offset)
}

/// Inverse of [`bm_to_spin_model`]: returns `(bm, offset)` with
/// `bm.energy(z) == problem.energy(2z-1) + offset`.
pub fn spin_model_to_bm(problem: &IsingProblem) -> (BoltzmannMachine, f64) {
    let n = problem.n_spins();
    let j = problem.couplings();
    let mu = problem.mu();
    let w = j.map(|v| -4.0 * v);
    let mut h = DVector::zeros(n);
    let mut constant = 0.0;
    for a in 0..n {
        let row_sum: f64 = (0..n).filter(|&b| b != a).map(|b| j[(a, b)]).sum();
        h[a] = 2.0 * row_sum - 2.0 * mu * problem.field()[a];
        constant += mu * problem.field()[a];
        for b in (a + 1)..n {
            constant -= j[(a, b)];
        }
    }
    let bm = BoltzmannMachine::new(n, 0, w, h).expect("derived from a valid problem");
    (bm, -constant)
}

pub fn spins_to_binary(sigma: &[i8]) -> Vec<i8> {
    sigma.iter().map(|&s| (s + 1) / 2).collect()
}

pub fn binary_to_spins(z: &[i8]) -> Vec<i8> {
    z.iter().map(|&v| 2 * v - 1).collect()
}
