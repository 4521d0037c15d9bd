use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::rng::Philox;

/// Fully connected Boltzmann machine over binary units `z ∈ {0,1}^n`.
///
/// Energy is `E(z) = Σ_l h_l z_l + Σ_{l<m} W_lm z_l z_m` and the model
/// distribution is `p(z) = exp(-E(z)) / Z`. `W` is stored as a full
/// symmetric matrix with zero diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct BoltzmannMachine {
    n_visible: usize,
    n_hidden: usize,
    w: DMatrix<f64>,
    h: DVector<f64>,
}

impl BoltzmannMachine {
    /// Validates and wraps the given parameters. `w` must be exactly
    /// symmetric with an all-zero diagonal.
    pub fn new(n_visible: usize, n_hidden: usize, w: DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        let n = n_visible + n_hidden;
        if n == 0 {
            return Err(Error::InvalidArgument(
                "boltzmann machine needs at least one unit".into(),
            ));
        }
        check_dim(n, h.len(), "bias length")?;
        check_dim(n, w.nrows(), "coupling rows")?;
        check_dim(n, w.ncols(), "coupling cols")?;
        if w.iter().chain(h.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("boltzmann machine parameters"));
        }
        for l in 0..n {
            if w[(l, l)] != 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "coupling diagonal entry {l} is nonzero"
                )));
            }
            for m in (l + 1)..n {
                if w[(l, m)] != w[(m, l)] {
                    return Err(Error::InvalidArgument(format!(
                        "coupling matrix not symmetric at ({l},{m})"
                    )));
                }
            }
        }
        Ok(Self {
            n_visible,
            n_hidden,
            w,
            h,
        })
    }

    pub fn zeros(n_visible: usize, n_hidden: usize) -> Result<Self> {
        let n = n_visible + n_hidden;
        Self::new(n_visible, n_hidden, DMatrix::zeros(n, n), DVector::zeros(n))
    }

    /// Builds a machine from an arbitrary square matrix by averaging it with
    /// its transpose and zeroing the diagonal.
    pub fn from_unsymmetric(n_visible: usize, n_hidden: usize, raw: &DMatrix<f64>, h: DVector<f64>) -> Result<Self> {
        Self::new(n_visible, n_hidden, symmetrize(raw), h)
    }

    /// Standard-normal initialization: couplings masked on the diagonal and
    /// symmetrized as `(A + Aᵀ)/2`, biases standard normal, both multiplied
    /// by `scale`.
    pub fn random_init(n_visible: usize, n_hidden: usize, scale: f64, rng: &mut Philox) -> Result<Self> {
        let n = n_visible + n_hidden;
        let mut raw = DMatrix::<f64>::zeros(n, n);
        for r in 0..n {
            for c in 0..n {
                let v: f64 = StandardNormal.sample(rng);
                raw[(r, c)] = if r == c { 0.0 } else { v };
            }
        }
        let mut w = symmetrize(&raw);
        w *= scale;
        let h = DVector::from_fn(n, |_, _| {
            let v: f64 = StandardNormal.sample(rng);
            v * scale
        });
        Self::new(n_visible, n_hidden, w, h)
    }

    pub fn n(&self) -> usize {
        self.n_visible + self.n_hidden
    }

    pub fn n_visible(&self) -> usize {
        self.n_visible
    }

    pub fn n_hidden(&self) -> usize {
        self.n_hidden
    }

    pub fn couplings(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn biases(&self) -> &DVector<f64> {
        &self.h
    }

    /// Replaces the parameters, re-symmetrizing `w` and zeroing its diagonal.
    pub fn set_params(&mut self, w: &DMatrix<f64>, h: &DVector<f64>) -> Result<()> {
        let next = Self::from_unsymmetric(self.n_visible, self.n_hidden, w, h.clone())?;
        *self = next;
        Ok(())
    }

    /// Energy of a (possibly relaxed) state. Entries may lie anywhere in
    /// `[0, 1]`; the formula is the same.
    pub fn energy(&self, z: &[f64]) -> Result<f64> {
        check_dim(self.n(), z.len(), "state length")?;
        Ok(self.energy_unchecked(z))
    }

    pub(crate) fn energy_unchecked(&self, z: &[f64]) -> f64 {
        let n = self.n();
        let mut e = 0.0;
        for l in 0..n {
            if z[l] == 0.0 {
                continue;
            }
            e += self.h[l] * z[l];
            let col = self.w.column(l);
            let mut pair = 0.0;
            for m in (l + 1)..n {
                pair += col[m] * z[m];
            }
            e += z[l] * pair;
        }
        e
    }

    /// Energy of a binary state given as 0/1 bytes.
    pub fn energy_binary(&self, z: &[i8]) -> Result<f64> {
        check_dim(self.n(), z.len(), "state length")?;
        let zf: Vec<f64> = z.iter().map(|&v| f64::from(v)).collect();
        Ok(self.energy_unchecked(&zf))
    }

    /// `h_l + Σ_{m≠l} W_lm z_m`: the energy increase from setting `z_l = 1`.
    pub(crate) fn local_field(&self, l: usize, z: &[f64]) -> f64 {
        let col = self.w.column(l);
        let mut acc = self.h[l];
        for (m, &zm) in z.iter().enumerate() {
            if zm != 0.0 {
                acc += col[m] * zm;
            }
        }
        acc
    }

    /// Strict upper triangle of `W`, row-major.
    pub fn upper_triangle(&self) -> Vec<f64> {
        upper_triangle(&self.w)
    }

    /// Serializes to the `bm v1` text format: header, bias line, then the
    /// strict upper triangle of `W` row-major, one row per line.
    pub fn to_text(&self) -> String {
        let n = self.n();
        let mut out = format!("bm v1 {} {}\n", self.n_visible, self.n_hidden);
        out.push_str(&join_f64(self.h.iter().copied()));
        out.push('\n');
        for l in 0..n.saturating_sub(1) {
            out.push_str(&join_f64(((l + 1)..n).map(|m| self.w[(l, m)])));
            out.push('\n');
        }
        out
    }

    /// Parses the `bm v1` text format. Whitespace layout after the header is
    /// free-form; only the token count matters.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or(Error::Empty("bm text"))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "bm" || parts[1] != "v1" {
            return Err(Error::Parse {
                line: hline + 1,
                msg: format!("expected header `bm v1 <n_visible> <n_hidden>`, got `{header}`"),
            });
        }
        let parse_count = |s: &str| {
            s.parse::<usize>().map_err(|e| Error::Parse {
                line: hline + 1,
                msg: format!("bad unit count `{s}`: {e}"),
            })
        };
        let n_visible = parse_count(parts[2])?;
        let n_hidden = parse_count(parts[3])?;
        let n = n_visible + n_hidden;
        let mut values = Vec::with_capacity(n + n * n.saturating_sub(1) / 2);
        for (idx, line) in lines {
            for tok in line.split_whitespace() {
                let v = tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: idx + 1,
                    msg: format!("bad number `{tok}`: {e}"),
                })?;
                values.push(v);
            }
        }
        let expected = n + n * n.saturating_sub(1) / 2;
        if values.len() != expected {
            return Err(Error::Parse {
                line: hline + 1,
                msg: format!("expected {expected} numbers after header, found {}", values.len()),
            });
        }
        let h = DVector::from_row_slice(&values[..n]);
        let w = from_upper_triangle(n, &values[n..])?;
        Self::new(n_visible, n_hidden, w, h)
    }
}

/// `(A + Aᵀ)/2` with the diagonal forced to zero.
pub fn symmetrize(raw: &DMatrix<f64>) -> DMatrix<f64> {
    let n = raw.nrows();
    let mut w = DMatrix::zeros(n, n);
    for r in 0..n {
        for c in (r + 1)..n {
            let v = (raw[(r, c)] + raw[(c, r)]) / 2.0;
            w[(r, c)] = v;
            w[(c, r)] = v;
        }
    }
    w
}

pub fn upper_triangle(w: &DMatrix<f64>) -> Vec<f64> {
    let n = w.nrows();
    let mut out = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for l in 0..n {
        for m in (l + 1)..n {
            out.push(w[(l, m)]);
        }
    }
    out
}

pub fn from_upper_triangle(n: usize, upper: &[f64]) -> Result<DMatrix<f64>> {
    check_dim(n * n.saturating_sub(1) / 2, upper.len(), "upper triangle length")?;
    let mut w = DMatrix::zeros(n, n);
    let mut it = upper.iter();
    for l in 0..n {
        for m in (l + 1)..n {
            let v = *it.next().unwrap();
            w[(l, m)] = v;
            w[(m, l)] = v;
        }
    }
    Ok(w)
}

pub(crate) fn join_f64(values: impl Iterator<Item = f64>) -> String {
    values.map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}
