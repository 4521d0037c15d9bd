use std::fmt;
use std::io::Write;
use std::str::FromStr;

use crate::energy::{spins_to_binary, BoltzmannMachine, IsingProblem};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VariableKind {
    Binary,
    Spin,
}

impl VariableKind {
    fn admits(self, v: i8) -> bool {
        match self {
            VariableKind::Binary => v == 0 || v == 1,
            VariableKind::Spin => v == -1 || v == 1,
        }
    }
}

impl fmt::Display for VariableKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            VariableKind::Binary => "binary",
            VariableKind::Spin => "spin",
        })
    }
}

impl FromStr for VariableKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(VariableKind::Binary),
            "spin" => Ok(VariableKind::Spin),
            other => Err(Error::InvalidArgument(format!("unknown variable kind `{other}`"))),
        }
    }
}

/// Provenance attached to a [`SampleSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMeta {
    pub seed: u64,
    pub sampler_id: String,
    pub sweeps_per_sample: usize,
    pub burn_in: usize,
    pub temperature: f64,
}

/// Row-major matrix of binary or spin samples with their energies.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleSet {
    n: usize,
    samples: Vec<i8>,
    energies: Vec<f64>,
    kind: VariableKind,
    meta: SampleMeta,
}

impl SampleSet {
    pub fn new(n: usize, samples: Vec<i8>, energies: Vec<f64>, kind: VariableKind, meta: SampleMeta) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample width must be positive".into()));
        }
        if samples.len() % n != 0 {
            return Err(Error::InvalidArgument(format!(
                "{} sample entries is not a multiple of width {n}",
                samples.len()
            )));
        }
        check_dim(samples.len() / n, energies.len(), "energy count")?;
        if let Some(bad) = samples.iter().find(|&&v| !kind.admits(v)) {
            return Err(Error::InvalidArgument(format!(
                "value {bad} not allowed for {kind} samples"
            )));
        }
        Ok(Self {
            n,
            samples,
            energies,
            kind,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn kind(&self) -> VariableKind {
        self.kind
    }

    pub fn meta(&self) -> &SampleMeta {
        &self.meta
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn raw(&self) -> &[i8] {
        &self.samples
    }

    pub fn row(&self, i: usize) -> &[i8] {
        &self.samples[i * self.n..(i + 1) * self.n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i8]> {
        self.samples.chunks(self.n)
    }

    /// Binary view (`z = (σ+1)/2` for spin sets).
    pub fn binary_rows(&self) -> Vec<Vec<i8>> {
        self.rows()
            .map(|r| match self.kind {
                VariableKind::Binary => r.to_vec(),
                VariableKind::Spin => spins_to_binary(r),
            })
            .collect()
    }

    /// Largest deviation between stored energies and `bm` energies
    /// (binary sets only).
    pub fn energy_error_bm(&self, bm: &BoltzmannMachine) -> Result<f64> {
        if self.kind != VariableKind::Binary {
            return Err(Error::InvalidArgument("expected a binary sample set".into()));
        }
        let mut worst = 0.0f64;
        for (row, &e) in self.rows().zip(&self.energies) {
            worst = worst.max((bm.energy_binary(row)? - e).abs());
        }
        Ok(worst)
    }

    /// Largest deviation between stored energies and `p` energies
    /// (spin sets only).
    pub fn energy_error_ising(&self, p: &IsingProblem) -> Result<f64> {
        if self.kind != VariableKind::Spin {
            return Err(Error::InvalidArgument("expected a spin sample set".into()));
        }
        let mut worst = 0.0f64;
        for (row, &e) in self.rows().zip(&self.energies) {
            worst = worst.max((p.energy(row)? - e).abs());
        }
        Ok(worst)
    }

    /// CSV with header `energy,z0,...,z{n-1}`, one sample per row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = std::iter::once("energy".to_string())
            .chain((0..self.n).map(|i| format!("z{i}")))
            .collect();
        writeln!(out, "{}", header.join(","))?;
        for (row, e) in self.rows().zip(&self.energies) {
            write!(out, "{e:?}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
